//! Checkpoint files: generator architecture plus parameters.
//!
//! Tensors are stored as a shape header followed by the flat 64-bit
//! little-endian payload. The generator checkpoint is the only artifact a
//! training run ever releases.

use crate::error::{Error, Result};
use crate::network::{Activation, NetworkSpec};
use crate::tensor::Tensor;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GSWG";
const VERSION: u32 = 1;

pub fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact_or_corrupt(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::CorruptCheckpoint(format!("truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_corrupt(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact_or_corrupt(r, &mut b, what)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_tensor(r: &mut impl Read) -> Result<Tensor> {
    let rank = read_u32(r, "tensor rank")?;
    if rank > 8 {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible tensor rank {rank}"
        )));
    }
    let mut shape = Vec::with_capacity(rank as usize);
    let mut total = 1usize;
    for _ in 0..rank {
        let d = read_u64(r, "tensor extent")? as usize;
        total = total
            .checked_mul(d)
            .ok_or_else(|| Error::CorruptCheckpoint("tensor extent overflow".into()))?;
        shape.push(d);
    }
    if total > 1 << 28 {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible tensor size {total}"
        )));
    }
    let mut data = Vec::with_capacity(total);
    let mut b = [0u8; 8];
    for _ in 0..total {
        read_exact_or_corrupt(r, &mut b, "tensor data")?;
        data.push(f64::from_le_bytes(b));
    }
    Ok(Tensor::new(shape, data))
}

/// The released artifact: generator architecture and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCheckpoint {
    pub spec: NetworkSpec,
    pub params: Vec<Tensor>,
}

impl GeneratorCheckpoint {
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.spec.input_dim as u32).to_le_bytes())?;
        w.write_all(&(self.spec.cond_width as u32).to_le_bytes())?;
        w.write_all(&(self.spec.output_dim as u32).to_le_bytes())?;
        w.write_all(&(self.spec.hidden.len() as u32).to_le_bytes())?;
        for &h in &self.spec.hidden {
            w.write_all(&(h as u32).to_le_bytes())?;
        }
        w.write_all(&(self.spec.activations.len() as u32).to_le_bytes())?;
        for a in &self.spec.activations {
            w.write_all(&[a.code()])?;
        }
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for t in &self.params {
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact_or_corrupt(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = read_u32(r, "version")?;
        if version != VERSION {
            return Err(Error::CorruptCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let input_dim = read_u32(r, "input dim")? as usize;
        let cond_width = read_u32(r, "cond width")? as usize;
        let output_dim = read_u32(r, "output dim")? as usize;
        let n_hidden = read_u32(r, "hidden count")? as usize;
        let mut hidden = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            hidden.push(read_u32(r, "hidden width")? as usize);
        }
        let n_act = read_u32(r, "activation count")? as usize;
        let mut activations = Vec::with_capacity(n_act);
        for _ in 0..n_act {
            let mut b = [0u8; 1];
            read_exact_or_corrupt(r, &mut b, "activation code")?;
            activations.push(Activation::from_code(b[0]).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("unknown activation code {}", b[0]))
            })?);
        }
        let spec = NetworkSpec {
            input_dim,
            cond_width,
            hidden,
            output_dim,
            activations,
        };
        spec.validate()
            .map_err(|e| Error::CorruptCheckpoint(format!("invalid architecture: {e}")))?;
        let n_params = read_u32(r, "param count")? as usize;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            params.push(read_tensor(r)?);
        }
        spec.check_params(&params)
            .map_err(|e| Error::CorruptCheckpoint(format!("parameter shapes: {e}")))?;
        Ok(GeneratorCheckpoint { spec, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let ckpt = Self::read_from(&mut r)?;
        // Trailing bytes mean the file is not what it claims to be.
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::CorruptCheckpoint("trailing bytes".into()));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn sample_checkpoint() -> GeneratorCheckpoint {
        let spec = NetworkSpec::mlp(4, 3, &[8, 8], 2, Activation::Tanh);
        let mut rng = seeded(77);
        let params = spec.init_params(&mut rng);
        GeneratorCheckpoint { spec, params }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ckpt = sample_checkpoint();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        let back = GeneratorCheckpoint::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(ckpt.spec, back.spec);
        for (a, b) in ckpt.params.iter().zip(&back.params) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncation_detected() {
        let ckpt = sample_checkpoint();
        let mut buf = Vec::new();
        ckpt.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        assert!(matches!(
            GeneratorCheckpoint::read_from(&mut buf.as_slice()),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn bad_magic_detected() {
        let mut buf = Vec::new();
        sample_checkpoint().write_to(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            GeneratorCheckpoint::read_from(&mut buf.as_slice()),
            Err(Error::CorruptCheckpoint(_))
        ));
    }
}
