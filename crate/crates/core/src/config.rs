//! Run configuration: training hyperparameters, dataset choice, and the
//! flat `key = value` config-file format.
//!
//! Precedence is defaults, then file, then command-line flags; unknown keys
//! in a file are rejected so a typo never silently falls back to a default.

use crate::data::{make_glyphs, make_ring, LabeledDataset};
use crate::error::{Error, Result};
use crate::gan::OptimizerKind;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// Hyperparameters of one training run. Defaults are desk scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Subsampling rate; 1/gamma must be integral.
    pub gamma: f64,
    /// Noise multiplier.
    pub sigma: f64,
    /// Clipping bound; 1.0 matches the penalty target. The DP-SGD-style
    /// comparison mode uses 1.1.
    pub clip_bound: f64,
    /// Warm-start iterations per shard.
    pub warm_iters: u64,
    /// Private generator iterations.
    pub steps: u64,
    /// Discriminator iterations per generator iteration.
    pub n_dis: u32,
    pub batch: u32,
    pub eta_d: f64,
    pub eta_g: f64,
    pub delta: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub lambda_gp: f64,
    /// Explicit opt-in for sigma = 0 runs.
    pub non_private: bool,
    /// Abort training before the accumulated epsilon would cross this.
    pub epsilon_ceiling: Option<f64>,
    pub optimizer: String,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    /// Metrics cadence in generator steps.
    pub metrics_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.1,
            sigma: 1.07,
            clip_bound: 1.0,
            warm_iters: 200,
            steps: 2000,
            n_dis: 5,
            batch: 32,
            eta_d: 1e-4,
            eta_g: 1e-4,
            delta: 1e-5,
            seed: 0,
            latent_dim: 16,
            lambda_gp: 10.0,
            non_private: false,
            epsilon_ceiling: None,
            optimizer: "sgd".into(),
            gen_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            metrics_every: 100,
        }
    }
}

impl TrainConfig {
    /// Number of shards `K = 1/gamma`; errors when not integral.
    pub fn shard_count(&self) -> Result<usize> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidSamplingRate(self.gamma));
        }
        let k = 1.0 / self.gamma;
        if (k - k.round()).abs() > 1e-9 {
            return Err(Error::NonIntegralShardCount(k));
        }
        Ok(k.round() as usize)
    }

    pub fn optimizer_kind(&self) -> Result<OptimizerKind> {
        match self.optimizer.as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::InvalidConfig(format!("unknown optimizer {other}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shard_count()?;
        self.optimizer_kind()?;
        if self.sigma < 0.0 {
            return Err(Error::InvalidConfig("negative sigma".into()));
        }
        if self.sigma == 0.0 && !self.non_private {
            return Err(Error::NonPrivate);
        }
        if self.clip_bound.is_nan() || self.clip_bound <= 0.0 {
            return Err(Error::InvalidConfig("clip bound must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::EmptyBatch);
        }
        if self.n_dis == 0 {
            return Err(Error::InvalidConfig("n_dis must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta {} not in (0, 1)",
                self.delta
            )));
        }
        if self.lambda_gp < 0.0 {
            return Err(Error::InvalidConfig("negative penalty weight".into()));
        }
        Ok(())
    }
}

/// Which synthetic dataset a run trains on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Ring {
        modes: u32,
        n_per_mode: usize,
        radius: f64,
        std: f64,
        seed: u64,
    },
    Glyphs {
        classes: u32,
        n: usize,
        noise: f64,
        seed: u64,
        flipped: bool,
    },
}

impl DatasetSpec {
    pub fn default_ring() -> Self {
        DatasetSpec::Ring {
            modes: 8,
            n_per_mode: 128,
            radius: 2.0,
            std: 0.05,
            seed: 1,
        }
    }

    pub fn default_glyphs() -> Self {
        DatasetSpec::Glyphs {
            classes: 4,
            n: 1024,
            noise: 0.02,
            seed: 1,
            flipped: false,
        }
    }

    pub fn build(&self) -> Result<LabeledDataset> {
        match *self {
            DatasetSpec::Ring {
                modes,
                n_per_mode,
                radius,
                std,
                seed,
            } => make_ring(modes, n_per_mode, radius, std, seed),
            DatasetSpec::Glyphs {
                classes,
                n,
                noise,
                seed,
                flipped,
            } => make_glyphs(classes, n, noise, seed, flipped),
        }
    }

    pub fn num_classes(&self) -> u32 {
        match *self {
            DatasetSpec::Ring { modes, .. } => modes,
            DatasetSpec::Glyphs { classes, .. } => classes,
        }
    }

    pub fn data_dim(&self) -> usize {
        match *self {
            DatasetSpec::Ring { .. } => 2,
            DatasetSpec::Glyphs { .. } => crate::data::GLYPH_DIM,
        }
    }
}

/// Parse a flat `key = value` file into a map; `#` starts a comment.
pub fn parse_kv_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    parse_kv(&text)
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::InvalidConfig(format!(
                "line {}: expected key = value, got {raw:?}",
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value for {key}: {value:?}")))
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|s| parse_field(key, s.trim()))
        .collect()
}

impl TrainConfig {
    /// Apply `key = value` overrides on top of this config. Unknown keys
    /// are rejected.
    pub fn apply_kv(&mut self, map: &BTreeMap<String, String>) -> Result<()> {
        for (key, value) in map {
            match key.as_str() {
                "gamma" => self.gamma = parse_field(key, value)?,
                "sigma" => self.sigma = parse_field(key, value)?,
                "clip_bound" => self.clip_bound = parse_field(key, value)?,
                "warm_iters" => self.warm_iters = parse_field(key, value)?,
                "steps" => self.steps = parse_field(key, value)?,
                "n_dis" => self.n_dis = parse_field(key, value)?,
                "batch" => self.batch = parse_field(key, value)?,
                "eta_d" => self.eta_d = parse_field(key, value)?,
                "eta_g" => self.eta_g = parse_field(key, value)?,
                "delta" => self.delta = parse_field(key, value)?,
                "seed" => self.seed = parse_field(key, value)?,
                "latent_dim" => self.latent_dim = parse_field(key, value)?,
                "lambda_gp" => self.lambda_gp = parse_field(key, value)?,
                "non_private" => self.non_private = parse_field(key, value)?,
                "epsilon_ceiling" => self.epsilon_ceiling = Some(parse_field(key, value)?),
                "optimizer" => self.optimizer = value.clone(),
                "gen_hidden" => self.gen_hidden = parse_usize_list(key, value)?,
                "disc_hidden" => self.disc_hidden = parse_usize_list(key, value)?,
                "metrics_every" => self.metrics_every = parse_field(key, value)?,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown config key {other:?}")))
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn sigma_zero_requires_flag() {
        let mut c = TrainConfig {
            sigma: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::NonPrivate)));
        c.non_private = true;
        c.validate().unwrap();
    }

    #[test]
    fn non_integral_gamma_rejected() {
        let c = TrainConfig {
            gamma: 0.3,
            ..TrainConfig::default()
        };
        assert!(matches!(
            c.validate(),
            Err(Error::NonIntegralShardCount(_))
        ));
    }

    #[test]
    fn kv_parsing_and_precedence() {
        let mut c = TrainConfig::default();
        let map = parse_kv("sigma = 0.5\n# comment\nsteps = 10\ngen_hidden = 32, 16\n").unwrap();
        c.apply_kv(&map).unwrap();
        assert_eq!(c.sigma, 0.5);
        assert_eq!(c.steps, 10);
        assert_eq!(c.gen_hidden, vec![32, 16]);
        // Untouched keys keep defaults.
        assert_eq!(c.batch, 32);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = TrainConfig::default();
        let map = parse_kv("sigmaa = 0.5").unwrap();
        assert!(matches!(c.apply_kv(&map), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(parse_kv("this is not a pair").is_err());
    }

    #[test]
    fn dataset_specs_build() {
        let ring = DatasetSpec::default_ring().build().unwrap();
        assert_eq!(ring.dim(), 2);
        assert_eq!(ring.num_classes, 8);
        let glyphs = DatasetSpec::default_glyphs().build().unwrap();
        assert_eq!(glyphs.dim(), 64);
    }
}
