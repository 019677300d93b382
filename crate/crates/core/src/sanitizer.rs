//! The gradient sanitization mechanism: per-sample L2 clipping followed by
//! calibrated Gaussian noise.
//!
//! Only the upstream gradients that cross the privacy barrier pass through
//! here; parameter gradients of the discriminator never do.

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Clipping bound and noise multiplier of the sanitization mechanism,
/// plus the root of its noise stream.
///
/// `sigma = 0` is the non-private testing mode; trainers must flag that in
/// the run ledger. `clip_bound = +inf` together with `sigma = 0` is the
/// identity sentinel used by the trajectory-equivalence tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub clip_bound: f64,
    pub noise_multiplier: f64,
    pub rng_seed: u64,
}

impl Mechanism {
    pub fn new(clip_bound: f64, noise_multiplier: f64, rng_seed: u64) -> Result<Self> {
        if clip_bound.is_nan() || clip_bound <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "clip bound must be positive, got {clip_bound}"
            )));
        }
        if noise_multiplier.is_nan() || noise_multiplier < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "noise multiplier must be non-negative, got {noise_multiplier}"
            )));
        }
        Ok(Mechanism {
            clip_bound,
            noise_multiplier,
            rng_seed,
        })
    }

    /// The identity sentinel: no clipping, no noise.
    pub fn identity(rng_seed: u64) -> Self {
        Mechanism {
            clip_bound: f64::INFINITY,
            noise_multiplier: 0.0,
            rng_seed,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.clip_bound.is_infinite() && self.noise_multiplier == 0.0
    }

    pub fn is_private(&self) -> bool {
        self.noise_multiplier > 0.0
    }

    /// Mechanism for one training step: same parameters, noise substream
    /// split off deterministically per step.
    pub fn for_step(&self, step: u64) -> Mechanism {
        Mechanism {
            rng_seed: rng::mix(self.rng_seed, step),
            ..*self
        }
    }
}

/// `g / max(1, |g|_2 / c)`: norm bounded by `c`, direction preserved, and
/// exact pass-through when the norm is already within the bound.
pub fn clip(g: &Tensor, c: f64) -> Tensor {
    let norm = g.l2_norm();
    let scale = (norm / c).max(1.0);
    if scale == 1.0 {
        g.clone()
    } else {
        g.affine(1.0 / scale, 0.0)
    }
}

/// Clip then add i.i.d. Gaussian noise of standard deviation
/// `sigma * C` per coordinate. The noise stream is derived from the
/// mechanism seed and `sample_index`, so draws for distinct samples are
/// independent and each call is reproducible.
pub fn sanitize(g: &Tensor, m: &Mechanism, sample_index: u64) -> Tensor {
    let mut out = clip(g, m.clip_bound);
    if m.noise_multiplier == 0.0 {
        return out;
    }
    let std = m.noise_multiplier * m.clip_bound;
    let mut stream = rng::seeded(rng::mix(m.rng_seed, sample_index));
    for v in out.data_mut() {
        *v += std * stream.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Sanitize each per-sample gradient independently, preserving order.
pub fn sanitize_batch(gs: &[Tensor], m: &Mechanism) -> Result<Vec<Tensor>> {
    if gs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for g in &gs[1..] {
        gs[0].check_same_shape(g, "sanitize_batch")?;
    }
    Ok(gs
        .iter()
        .enumerate()
        .map(|(i, g)| sanitize(g, m, i as u64))
        .collect())
}
