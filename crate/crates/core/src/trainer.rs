//! Centralized training: dataset partitioning, per-shard warm start, and
//! the private generator loop with ledger accumulation.
//!
//! One generator step: draw a shard uniformly, run `n_dis` discriminator
//! updates against that shard, apply one sanitized generator update using
//! the final iteration's generated batch, charge the ledger one
//! subsampled-mechanism invocation at rate `1/K`.
//!
//! Warm start is charged zero privacy cost: only the generator is ever
//! released, and the warm phase trains per-shard discriminators alongside
//! throwaway generators. The run manifest records this stance explicitly.

use crate::accountant::{LedgerRecord, PrivacyLedger};
use crate::checkpoint::GeneratorCheckpoint;
use crate::config::{DatasetSpec, TrainConfig};
use crate::data::{hist_tvd, mode_coverage, ring_centers, GridSpec, LabeledDataset};
use crate::error::{Error, Result};
use crate::gan::{
    disc_step_on_fake, generate, generator_forward, plain_gen_step_from, sample_alphas,
    sample_labels, sample_latent, sanitized_gen_step_from, GanPair, GenPass, Optimizer,
};
use crate::network::{Activation, NetworkSpec};
use crate::rng::{stream_seed, Stream, StreamHub};
use crate::sanitizer::Mechanism;
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::mem;

/// Disjoint index shards covering the dataset, sizes differing by at most
/// one. Shards are kept sorted so downstream sampling is insensitive to the
/// shuffle order that produced the partition.
#[derive(Debug, Clone)]
pub struct ShardSet {
    shards: Vec<Vec<usize>>,
}

impl ShardSet {
    pub fn k(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, k: usize) -> &[usize] {
        &self.shards[k]
    }

    pub fn min_size(&self) -> usize {
        self.shards.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Uniformly random disjoint partition into `K = 1/gamma` shards.
pub fn partition(n_points: usize, gamma: f64, rng: &mut impl Rng) -> Result<ShardSet> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidSamplingRate(gamma));
    }
    let k_real = 1.0 / gamma;
    if (k_real - k_real.round()).abs() > 1e-9 {
        return Err(Error::NonIntegralShardCount(k_real));
    }
    let k = k_real.round() as usize;
    if n_points < k {
        return Err(Error::DatasetTooSmall {
            size: n_points,
            shards: k,
        });
    }
    let mut indices: Vec<usize> = (0..n_points).collect();
    for i in (1..n_points).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    let mut shards = vec![Vec::with_capacity(n_points / k + 1); k];
    for (pos, idx) in indices.into_iter().enumerate() {
        shards[pos % k].push(idx);
    }
    for s in &mut shards {
        s.sort_unstable();
    }
    Ok(ShardSet { shards })
}

/// Draw `batch` indices from a shard without replacement; falls back to
/// with-replacement when the shard is smaller than the batch.
pub fn sample_batch_indices(shard: &[usize], batch: usize, rng: &mut impl Rng) -> Vec<usize> {
    if batch <= shard.len() {
        let mut pool = shard.to_vec();
        for i in 0..batch {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
        }
        pool.truncate(batch);
        pool
    } else {
        (0..batch)
            .map(|_| shard[rng.random_range(0..shard.len())])
            .collect()
    }
}

/// Which discriminator read which shard, aggregated over the run. The
/// training loop only ever pairs disc `k` with shard `k`; the audit proves
/// it after the fact.
#[derive(Debug, Clone)]
pub struct DataAudit {
    counts: Vec<Vec<u64>>,
}

impl DataAudit {
    pub fn new(k: usize) -> Self {
        DataAudit {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn record(&mut self, shard: usize, disc: usize) {
        self.counts[shard][disc] += 1;
    }

    pub fn reads(&self, shard: usize, disc: usize) -> u64 {
        self.counts[shard][disc]
    }

    /// True when no discriminator ever read a foreign shard.
    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(s, row)| row.iter().enumerate().all(|(d, &c)| s == d || c == 0))
    }

    /// Shard-choice counts, assuming `n_dis` reads per choice.
    pub fn shard_choices(&self, n_dis: u64) -> Vec<u64> {
        self.counts
            .iter()
            .enumerate()
            .map(|(s, row)| row[s] / n_dis)
            .collect()
    }
}

/// One metrics line; NaN where a metric does not apply to the dataset.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub step: u64,
    pub mode_coverage: f64,
    pub tvd: f64,
    pub mean_upstream_norm: f64,
    pub eps_at_delta: f64,
}

pub fn write_metrics_csv(w: &mut impl Write, rows: &[MetricsRow]) -> Result<()> {
    writeln!(w, "step,mode_coverage,tvd,mean_upstream_norm,eps_at_delta")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.step, r.mode_coverage, r.tvd, r.mean_upstream_norm, r.eps_at_delta
        )?;
    }
    Ok(())
}

/// Everything needed to reproduce a run, plus the flagged privacy stances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: String,
    pub config: TrainConfig,
    pub dataset: DatasetSpec,
    pub dataset_hash: String,
    /// Warm start trains on private data without a ledger charge; only the
    /// generator is released, so the cost is covered by post-processing.
    /// This is an assumption of the method, surfaced here on purpose.
    pub warm_start_privacy_charge: String,
    /// Unit of adjacency: one record (centralized) or one client's whole
    /// shard (federated).
    pub adjacency_unit: String,
}

/// Result of a centralized training run.
pub struct TrainOutcome {
    pub checkpoint: GeneratorCheckpoint,
    pub ledger: PrivacyLedger,
    pub ledger_records: Vec<LedgerRecord>,
    pub metrics: Vec<MetricsRow>,
    pub audit: DataAudit,
    pub manifest: RunManifest,
    /// Set when the epsilon ceiling stopped training early, to the last
    /// completed step.
    pub budget_halt: Option<u64>,
}

pub fn gen_spec_for(config: &TrainConfig, dataset: &LabeledDataset) -> NetworkSpec {
    NetworkSpec::mlp(
        config.latent_dim,
        dataset.num_classes as usize,
        &config.gen_hidden,
        dataset.dim(),
        Activation::Tanh,
    )
}

pub fn disc_spec_for(config: &TrainConfig, dataset: &LabeledDataset) -> NetworkSpec {
    NetworkSpec::mlp(
        dataset.dim(),
        dataset.num_classes as usize,
        &config.disc_hidden,
        1,
        Activation::Tanh,
    )
}

/// Stream tags consumed by one discriminator phase.
#[derive(Clone, Copy)]
pub struct PhaseStreams {
    pub batch: Stream,
    pub latent: Stream,
    pub label: Stream,
    pub alpha: Stream,
}

impl PhaseStreams {
    pub fn warm(k: u32) -> Self {
        PhaseStreams {
            batch: Stream::WarmBatch(k),
            latent: Stream::WarmLatent(k),
            label: Stream::WarmLabel(k),
            alpha: Stream::WarmAlpha(k),
        }
    }

    pub fn main(k: u32) -> Self {
        PhaseStreams {
            batch: Stream::Batch(k),
            latent: Stream::Latent,
            label: Stream::Label,
            alpha: Stream::Alpha(k),
        }
    }
}

/// `n_dis` discriminator updates on one shard. Every iteration draws a
/// fresh real batch and a fresh generated batch; the final iteration's
/// generator pass and labels are returned for the generator update, whose
/// latents are those of the last discriminator iteration.
#[allow(clippy::too_many_arguments)]
pub fn disc_phase(
    pair: &mut GanPair,
    dataset: &LabeledDataset,
    shard: &[usize],
    streams: PhaseStreams,
    hub: &mut StreamHub,
    config: &TrainConfig,
    disc_opt: &mut Optimizer,
    mut audit: Option<(&mut DataAudit, usize)>,
) -> Result<(GenPass, Vec<u32>)> {
    let batch = config.batch as usize;
    let classes = pair.num_classes();
    let latent = pair.latent_dim();
    let mut last = None;
    for _ in 0..config.n_dis {
        let idx = sample_batch_indices(shard, batch, hub.get(streams.batch));
        if let Some((aud, k)) = audit.as_mut() {
            aud.record(*k, *k);
        }
        let (real, real_labels) = dataset.batch(&idx);
        let z = sample_latent(batch, latent, hub.get(streams.latent));
        let fake_labels = sample_labels(batch, classes, hub.get(streams.label));
        let alphas = sample_alphas(batch, hub.get(streams.alpha));
        let gen_pass = generator_forward(pair, &z, &fake_labels)?;
        disc_step_on_fake(
            &pair.disc_spec,
            &mut pair.disc_params,
            pair.lambda_gp,
            pair.gen_spec.output_dim,
            &real,
            &real_labels,
            gen_pass.output_value(),
            &fake_labels,
            &alphas,
            config.eta_d,
            disc_opt,
        )?;
        last = Some((gen_pass, fake_labels));
    }
    last.ok_or_else(|| Error::InvalidConfig("n_dis must be >= 1".into()))
}

/// How generated samples are scored during a run.
enum EvalPlan {
    Ring {
        centers: Vec<[f64; 2]>,
        capture_radius: f64,
        grid: GridSpec,
        real_points: Tensor,
    },
    Plain,
}

impl EvalPlan {
    fn for_dataset(spec: &DatasetSpec, dataset: &LabeledDataset) -> Self {
        match *spec {
            DatasetSpec::Ring {
                modes, radius, std, ..
            } => EvalPlan::Ring {
                centers: ring_centers(modes, radius),
                capture_radius: (8.0 * std).max(0.2 * radius),
                grid: GridSpec::square(2.0 * radius, 16),
                real_points: dataset.points.clone(),
            },
            DatasetSpec::Glyphs { .. } => EvalPlan::Plain,
        }
    }

    fn score(&self, samples: &Tensor) -> (f64, f64) {
        match self {
            EvalPlan::Ring {
                centers,
                capture_radius,
                grid,
                real_points,
            } => {
                let (covered, _) = mode_coverage(samples, centers, *capture_radius);
                let tvd = hist_tvd(samples, real_points, grid);
                (covered as f64, tvd)
            }
            EvalPlan::Plain => (f64::NAN, f64::NAN),
        }
    }
}

const EVAL_SAMPLES: usize = 512;

fn eval_samples(pair: &GanPair, hub: &mut StreamHub) -> Result<Tensor> {
    let latent = pair.latent_dim();
    let classes = pair.num_classes();
    let rng = hub.get(Stream::Eval);
    let z = sample_latent(EVAL_SAMPLES, latent, rng);
    let labels = sample_labels(EVAL_SAMPLES, classes, rng);
    generate(pair, &z, &labels)
}

/// Non-private warm start of one shard: `warm_iters` WGAN-GP iterations of
/// a throwaway generator and the shard's discriminator. Returns
/// `(disc_params, throwaway_gen_params)`; no ledger charge is recorded.
///
/// Consumes only shard-scoped streams, so warm starts of distinct shards
/// are independent and may run concurrently with identical results.
pub fn warm_start(
    dataset: &LabeledDataset,
    shard: &[usize],
    k: u32,
    config: &TrainConfig,
    root_seed: u64,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    if shard.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hub = &mut StreamHub::new(root_seed);
    let gen_spec = gen_spec_for(config, dataset);
    let disc_spec = disc_spec_for(config, dataset);
    let disc_params = disc_spec.init_params(hub.get(Stream::DiscInit(k)));
    let gen_params = gen_spec.init_params(hub.get(Stream::WarmGenInit(k)));
    let mut pair = GanPair::new(gen_spec, disc_spec, gen_params, disc_params, config.lambda_gp)?;

    let opt_kind = config.optimizer_kind()?;
    let mut disc_opt = Optimizer::new(opt_kind);
    let mut gen_opt = Optimizer::new(opt_kind);

    for _ in 0..config.warm_iters {
        let (gen_pass, labels) = disc_phase(
            &mut pair,
            dataset,
            shard,
            PhaseStreams::warm(k),
            hub,
            config,
            &mut disc_opt,
            None,
        )?;
        plain_gen_step_from(&mut pair, gen_pass, &labels, config.eta_g, &mut gen_opt)?;
    }
    Ok((pair.disc_params, pair.gen_params))
}

/// Warm-start every shard, fanning the independent jobs across the
/// available cores.
pub fn warm_start_all(
    dataset: &LabeledDataset,
    shards: &ShardSet,
    config: &TrainConfig,
    root_seed: u64,
) -> Result<Vec<Vec<Tensor>>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    warm_start_all_with_workers(dataset, shards, config, root_seed, workers)
}

/// As [`warm_start_all`] with an explicit worker count.
pub fn warm_start_all_with_workers(
    dataset: &LabeledDataset,
    shards: &ShardSet,
    config: &TrainConfig,
    root_seed: u64,
    workers: usize,
) -> Result<Vec<Vec<Tensor>>> {
    let k_count = shards.k();
    let workers = workers.min(k_count).max(1);
    if workers == 1 {
        return (0..k_count)
            .map(|k| warm_start(dataset, shards.shard(k), k as u32, config, root_seed).map(|r| r.0))
            .collect();
    }
    let mut out: Vec<Option<Vec<Tensor>>> = (0..k_count).map(|_| None).collect();
    let chunk = k_count.div_ceil(workers);
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::with_capacity(workers);
        for (ci, slots) in out.chunks_mut(chunk).enumerate() {
            handles.push(scope.spawn(move || -> Result<()> {
                for (j, slot) in slots.iter_mut().enumerate() {
                    let k = ci * chunk + j;
                    let (disc, _gen) =
                        warm_start(dataset, shards.shard(k), k as u32, config, root_seed)?;
                    *slot = Some(disc);
                }
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("warm-start thread panicked")?;
        }
        Ok(())
    })?;
    Ok(out.into_iter().map(|d| d.expect("every shard warmed")).collect())
}

/// Algorithm-1 training over a synthetic dataset. The observer runs after
/// every generator step; returning `false` stops the run (used by tests
/// that watch trajectories).
pub fn train_observed(
    dataset_spec: &DatasetSpec,
    config: &TrainConfig,
    mut observe: impl FnMut(u64, &GanPair) -> bool,
) -> Result<TrainOutcome> {
    config.validate()?;
    let dataset = dataset_spec.build()?;
    dataset.validate()?;
    let k_count = config.shard_count()?;
    let mut hub = StreamHub::new(config.seed);
    let shards = partition(dataset.len(), config.gamma, hub.get(Stream::Partition))?;
    if (config.batch as usize) > shards.min_size() {
        log::warn!(
            "batch {} exceeds smallest shard {}; sampling with replacement",
            config.batch,
            shards.min_size()
        );
    }

    let gen_spec = gen_spec_for(config, &dataset);
    let disc_spec = disc_spec_for(config, &dataset);
    let eval = EvalPlan::for_dataset(dataset_spec, &dataset);

    // Warm start every shard (in parallel where cores allow); the
    // per-shard generators are discarded.
    let mut discs = warm_start_all(&dataset, &shards, config, config.seed)?;

    let mut gen_params = gen_spec.init_params(hub.get(Stream::GenInit));
    let mut ledger = if config.sigma > 0.0 {
        PrivacyLedger::new(config.gamma, config.sigma, config.batch)?
    } else {
        PrivacyLedger::new_non_private(config.gamma, config.batch)?
    };
    let mechanism = Mechanism::new(
        config.clip_bound,
        config.sigma,
        stream_seed(config.seed, Stream::Noise(0)),
    )?;

    let opt_kind = config.optimizer_kind()?;
    let mut gen_opt = Optimizer::new(opt_kind);
    let mut disc_opts: Vec<Optimizer> = (0..k_count).map(|_| Optimizer::new(opt_kind)).collect();
    let mut audit = DataAudit::new(k_count);
    let mut metrics = Vec::new();
    let mut ledger_records = Vec::new();
    let mut budget_halt = None;

    let mut step = 0u64;
    while step < config.steps {
        let next_step = step + 1;
        if let Some(ceiling) = config.epsilon_ceiling {
            let (eps_next, _) = ledger.dp_after(1, config.delta)?;
            if eps_next > ceiling {
                budget_halt = Some(step);
                log::warn!(
                    "epsilon ceiling {ceiling} would be crossed at step {next_step}; halting"
                );
                break;
            }
        }
        let k = hub.get(Stream::Shard).random_range(0..k_count);
        let mut pair = GanPair::new(
            gen_spec.clone(),
            disc_spec.clone(),
            mem::take(&mut gen_params),
            mem::take(&mut discs[k]),
            config.lambda_gp,
        )?;
        let (gen_pass, labels) = disc_phase(
            &mut pair,
            &dataset,
            shards.shard(k),
            PhaseStreams::main(k as u32),
            &mut hub,
            config,
            &mut disc_opts[k],
            Some((&mut audit, k)),
        )?;
        let info = sanitized_gen_step_from(
            &mut pair,
            gen_pass,
            &labels,
            &mechanism.for_step(next_step),
            config.eta_g,
            &mut gen_opt,
        )?;
        ledger.accumulate(1);
        ledger_records.push(ledger.record(config.delta));
        step = next_step;

        let keep_going = observe(step, &pair);

        if step.is_multiple_of(config.metrics_every) {
            let samples = eval_samples(&pair, &mut hub)?;
            let (coverage, tvd) = eval.score(&samples);
            metrics.push(MetricsRow {
                step,
                mode_coverage: coverage,
                tvd,
                mean_upstream_norm: info.mean_upstream_norm,
                eps_at_delta: ledger
                    .to_dp(config.delta)
                    .map(|(e, _)| e)
                    .unwrap_or(f64::NAN),
            });
        }

        gen_params = mem::take(&mut pair.gen_params);
        discs[k] = mem::take(&mut pair.disc_params);
        if !keep_going {
            break;
        }
    }

    debug_assert!(audit.is_diagonal());
    let manifest = RunManifest {
        mode: "central".into(),
        config: config.clone(),
        dataset: dataset_spec.clone(),
        dataset_hash: dataset.content_hash(),
        warm_start_privacy_charge: "none: warm start pre-trains per-shard discriminators and \
                                    throwaway generators on private data; only the final \
                                    generator is released"
            .into(),
        adjacency_unit: "record".into(),
    };
    Ok(TrainOutcome {
        checkpoint: GeneratorCheckpoint {
            spec: gen_spec,
            params: gen_params,
        },
        ledger,
        ledger_records,
        metrics,
        audit,
        manifest,
        budget_halt,
    })
}

pub fn train(dataset_spec: &DatasetSpec, config: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(dataset_spec, config, |_, _| true)
}

/// Reference non-private WGAN-GP on the whole dataset: the same warm phase
/// and update arithmetic with no sharding, no mechanism, and no ledger.
/// Trajectory-equivalence tests compare against this.
pub fn train_reference(
    dataset_spec: &DatasetSpec,
    config: &TrainConfig,
    mut observe: impl FnMut(u64, &GanPair) -> bool,
) -> Result<GeneratorCheckpoint> {
    let dataset = dataset_spec.build()?;
    dataset.validate()?;
    let mut hub = StreamHub::new(config.seed);
    let all: Vec<usize> = (0..dataset.len()).collect();

    let gen_spec = gen_spec_for(config, &dataset);
    let disc_spec = disc_spec_for(config, &dataset);
    let (disc_params, _warm_gen) = warm_start(&dataset, &all, 0, config, config.seed)?;

    let gen_params = gen_spec.init_params(hub.get(Stream::GenInit));
    let mut pair = GanPair::new(
        gen_spec.clone(),
        disc_spec,
        gen_params,
        disc_params,
        config.lambda_gp,
    )?;
    let opt_kind = config.optimizer_kind()?;
    let mut gen_opt = Optimizer::new(opt_kind);
    let mut disc_opt = Optimizer::new(opt_kind);

    for step in 1..=config.steps {
        let (gen_pass, labels) = disc_phase(
            &mut pair,
            &dataset,
            &all,
            PhaseStreams::main(0),
            &mut hub,
            config,
            &mut disc_opt,
            None,
        )?;
        plain_gen_step_from(&mut pair, gen_pass, &labels, config.eta_g, &mut gen_opt)?;
        if !observe(step, &pair) {
            break;
        }
    }
    Ok(GeneratorCheckpoint {
        spec: gen_spec,
        params: pair.gen_params,
    })
}
