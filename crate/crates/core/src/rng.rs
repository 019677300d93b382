//! Deterministic seeded randomness, split into named substreams.
//!
//! Every consumer of randomness (data synthesis, parameter init, latent
//! draws, label prior, interpolation coefficients, batch sampling, shard
//! choice, noise) owns an independent stream derived from one root seed.
//! Streams never interleave, so adding or removing one consumer leaves the
//! draws of every other consumer untouched — this is what makes the
//! non-private reference trajectory and the sanitized trajectory with an
//! identity mechanism bit-identical, and the federated K=1 run equal to the
//! centralized one.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;

/// Stateless splitmix64 step; stable across platforms.
pub fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose of a randomness stream. The `u32` argument scopes per-shard (or
/// per-client) streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Dataset partition shuffle.
    Partition,
    /// Private generator init.
    GenInit,
    /// Discriminator init, per shard.
    DiscInit(u32),
    /// Throwaway warm-start generator init, per shard.
    WarmGenInit(u32),
    /// Latent draws for the private phase.
    Latent,
    /// Fake-label prior for the private phase. Seeded independently of the
    /// data loader by construction.
    Label,
    /// Interpolation coefficients, per shard.
    Alpha(u32),
    /// Real-batch index sampling, per shard.
    Batch(u32),
    /// Warm-start latent draws, per shard.
    WarmLatent(u32),
    /// Warm-start label prior, per shard.
    WarmLabel(u32),
    /// Warm-start interpolation coefficients, per shard.
    WarmAlpha(u32),
    /// Warm-start batch sampling, per shard.
    WarmBatch(u32),
    /// Shard / client choice per generator step.
    Shard,
    /// Sanitizer noise root, per shard (client). The mechanism derives
    /// per-step, per-sample seeds from this.
    Noise(u32),
    /// Evaluation-time sampling; independent so that metric cadence never
    /// perturbs training.
    Eval,
}

impl Stream {
    fn tag(self) -> (u64, u32) {
        match self {
            Stream::Partition => (1, 0),
            Stream::GenInit => (2, 0),
            Stream::DiscInit(k) => (3, k),
            Stream::WarmGenInit(k) => (4, k),
            Stream::Latent => (5, 0),
            Stream::Label => (6, 0),
            Stream::Alpha(k) => (7, k),
            Stream::Batch(k) => (8, k),
            Stream::WarmLatent(k) => (9, k),
            Stream::WarmLabel(k) => (10, k),
            Stream::WarmAlpha(k) => (11, k),
            Stream::WarmBatch(k) => (12, k),
            Stream::Shard => (13, 0),
            Stream::Noise(k) => (14, k),
            Stream::Eval => (15, 0),
        }
    }
}

/// Seed for a named stream under a root seed.
pub fn stream_seed(root: u64, stream: Stream) -> u64 {
    let (kind, k) = stream.tag();
    mix(mix(root, kind), k as u64)
}

/// Lazily-created map of live substreams for one training run.
pub struct StreamHub {
    root: u64,
    streams: HashMap<Stream, ChaCha12Rng>,
}

impl StreamHub {
    pub fn new(root: u64) -> Self {
        StreamHub {
            root,
            streams: HashMap::new(),
        }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn get(&mut self, s: Stream) -> &mut ChaCha12Rng {
        let root = self.root;
        self.streams
            .entry(s)
            .or_insert_with(|| ChaCha12Rng::seed_from_u64(stream_seed(root, s)))
    }
}

/// Standalone generator for one-shot consumers (dataset builders, CLI
/// sampling).
pub fn seeded(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
