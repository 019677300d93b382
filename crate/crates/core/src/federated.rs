//! Simulated federated training: discriminators never leave clients, only
//! sanitized per-sample upstream gradients travel, and every message
//! crosses a real serialization boundary so byte counts are measured, not
//! estimated.
//!
//! Wire format: length-prefixed binary frames. Each frame is
//! `[length: u32][step: u64][kind: u8][count: u32]` followed by `count`
//! 64-bit little-endian reals. A generated-batch frame carries `B*(d+1)`
//! reals (data rows, then labels); a gradient payload carries `B*d` reals.
//! No frame kind can carry discriminator parameters.

use crate::accountant::{LedgerRecord, PrivacyLedger};
use crate::checkpoint::GeneratorCheckpoint;
use crate::config::{DatasetSpec, TrainConfig};
use crate::data::{make_glyphs, mean_intensity, LabeledDataset};
use crate::error::{Error, Result};
use crate::gan::{
    disc_step_on_fake, gen_forward, generate_from, sample_alphas, sample_labels, sample_latent,
    upstream_grads, vjp_mean_grads, Optimizer,
};
use crate::network::NetworkSpec;
use crate::rng::{mix, seeded, stream_seed, Stream, StreamHub};
use crate::sanitizer::{sanitize_batch, Mechanism};
use crate::tensor::Tensor;
use crate::trainer::{disc_spec_for, gen_spec_for, partition, sample_batch_indices, warm_start, RunManifest};
use rand::Rng;
use serde::Serialize;
use std::collections::BTreeSet;
use std::io::Write;

/// Fixed per-frame byte overhead: length prefix, step id, kind, count.
pub const FRAME_OVERHEAD_BYTES: u64 = 4 + 8 + 1 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    /// Server to client: generated samples plus labels.
    GeneratedBatch = 0,
    /// Client to server: sanitized upstream gradients.
    SanitizedGrads = 1,
    /// Client to server: raw gradients; accepted only in non-private mode.
    RawGrads = 2,
}

impl FrameKind {
    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(FrameKind::GeneratedBatch),
            1 => Some(FrameKind::SanitizedGrads),
            2 => Some(FrameKind::RawGrads),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub step: u64,
    pub kind: FrameKind,
    pub payload: Vec<f64>,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let count = self.payload.len() as u32;
        let body_len = 8 + 1 + 4 + 8 * self.payload.len();
        let mut out = Vec::with_capacity(4 + body_len);
        out.extend_from_slice(&(body_len as u32).to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&count.to_le_bytes());
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < 4 {
            return Err(Error::MalformedFrame("missing length prefix".into()));
        }
        let body_len = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if bytes.len() != 4 + body_len {
            return Err(Error::MalformedFrame(format!(
                "length prefix {} vs actual body {}",
                body_len,
                bytes.len() - 4
            )));
        }
        if body_len < 13 {
            return Err(Error::MalformedFrame("truncated header".into()));
        }
        let step = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
        let kind = FrameKind::from_code(bytes[12])
            .ok_or_else(|| Error::MalformedFrame(format!("unknown kind {}", bytes[12])))?;
        let count = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
        if body_len != 13 + 8 * count {
            return Err(Error::MalformedFrame(format!(
                "count {count} disagrees with body length {body_len}"
            )));
        }
        let mut payload = Vec::with_capacity(count);
        for i in 0..count {
            let off = 17 + 8 * i;
            payload.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        }
        Ok(Frame {
            step,
            kind,
            payload,
        })
    }
}

fn encode_generated(step: u64, fake: &Tensor, labels: &[u32]) -> Vec<u8> {
    let mut payload = fake.data().to_vec();
    payload.extend(labels.iter().map(|&l| l as f64));
    Frame {
        step,
        kind: FrameKind::GeneratedBatch,
        payload,
    }
    .encode()
}

fn decode_generated(frame: &Frame, data_dim: usize) -> Result<(Tensor, Vec<u32>)> {
    let per_row = data_dim + 1;
    if frame.payload.is_empty() || !frame.payload.len().is_multiple_of(per_row) {
        return Err(Error::MalformedFrame(format!(
            "generated batch of {} reals is not a positive multiple of {}",
            frame.payload.len(),
            per_row
        )));
    }
    let b = frame.payload.len() / per_row;
    let data = frame.payload[..b * data_dim].to_vec();
    let labels = frame.payload[b * data_dim..]
        .iter()
        .map(|&v| v as u32)
        .collect();
    Ok((Tensor::new(vec![b, data_dim], data), labels))
}

/// Serverside traffic counters plus per-step rows. Totals include aborted
/// attempts; `per_step` covers completed generator steps.
#[derive(Debug, Clone, Default)]
pub struct WireStats {
    pub per_step: Vec<StepTraffic>,
    pub server_sent: u64,
    pub server_received: u64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepTraffic {
    pub step: u64,
    pub server_to_client_bytes: u64,
    pub client_to_server_bytes: u64,
}

impl WireStats {
    pub fn total_server_to_client(&self) -> u64 {
        self.per_step.iter().map(|t| t.server_to_client_bytes).sum()
    }

    pub fn total_client_to_server(&self) -> u64 {
        self.per_step.iter().map(|t| t.client_to_server_bytes).sum()
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "step,server_to_client_bytes,client_to_server_bytes")?;
        for t in &self.per_step {
            writeln!(
                w,
                "{},{},{}",
                t.step, t.server_to_client_bytes, t.client_to_server_bytes
            )?;
        }
        Ok(())
    }
}

/// Bytes the server sent must equal bytes the clients received, and vice
/// versa — both sides count independently at their end of the wire.
pub fn conservation_holds(wire: &WireStats, clients: &[ClientState]) -> bool {
    let received: u64 = clients.iter().map(|c| c.bytes_received).sum();
    let sent: u64 = clients.iter().map(|c| c.bytes_sent).sum();
    wire.server_sent == received && wire.server_received == sent
}

/// The sanitized per-sample gradients of one generator step, as decoded by
/// the server, plus its measured size.
#[derive(Debug, Clone)]
pub struct GradPayload {
    pub step: u64,
    pub grads: Vec<Tensor>,
    pub wire_bytes: u64,
    pub sanitized: bool,
}

/// One simulated client: local shard, local discriminator, local
/// sanitization mechanism, and its own randomness streams. Discriminator
/// parameters have no serialization path to the wire.
pub struct ClientState {
    pub id: u32,
    data: LabeledDataset,
    local_indices: Vec<usize>,
    disc_spec: NetworkSpec,
    disc_params: Vec<Tensor>,
    disc_opt: Optimizer,
    mechanism: Mechanism,
    hub: StreamHub,
    lambda_gp: f64,
    data_dim: usize,
    warm_started: bool,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    /// Simulation hook: steps at which this client fails mid-update. Each
    /// entry triggers once (a transient fault).
    pub fail_at_steps: BTreeSet<u64>,
}

impl ClientState {
    pub fn new(
        id: u32,
        data: LabeledDataset,
        config: &TrainConfig,
        root_seed: u64,
    ) -> Result<Self> {
        data.validate()?;
        let disc_spec = disc_spec_for(config, &data);
        let mechanism = Mechanism::new(
            config.clip_bound,
            config.sigma,
            stream_seed(root_seed, Stream::Noise(id)),
        )?;
        Ok(ClientState {
            id,
            local_indices: (0..data.len()).collect(),
            data_dim: data.dim(),
            data,
            disc_spec,
            disc_params: Vec::new(), // installed by warm start
            disc_opt: Optimizer::new(config.optimizer_kind()?),
            mechanism,
            hub: StreamHub::new(root_seed),
            lambda_gp: config.lambda_gp,
            warm_started: false,
            bytes_sent: 0,
            bytes_received: 0,
            fail_at_steps: BTreeSet::new(),
        })
    }

    pub fn content_hash(&self) -> String {
        self.data.content_hash()
    }

    pub fn num_classes(&self) -> u32 {
        self.data.num_classes
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn disc_spec(&self) -> &NetworkSpec {
        &self.disc_spec
    }

    pub fn disc_param_count(&self) -> usize {
        self.disc_spec.param_count()
    }

    /// Non-private local warm start; identical semantics to the
    /// centralized per-shard warm start.
    pub fn client_warm_start(&mut self, config: &TrainConfig) -> Result<()> {
        let (disc, _gen) = warm_start(
            &self.data,
            &self.local_indices,
            self.id,
            config,
            self.hub.root(),
        )?;
        self.disc_params = disc;
        self.warm_started = true;
        Ok(())
    }

    pub fn is_warm(&self) -> bool {
        self.warm_started
    }

    /// Handle one generated batch: local discriminator update, then — when
    /// this is the step's final discriminator iteration — the sanitized
    /// gradient payload. Takes and returns raw frames so byte counts are
    /// real.
    pub fn handle_frame(
        &mut self,
        frame_bytes: &[u8],
        config: &TrainConfig,
        want_payload: bool,
    ) -> Result<Option<Vec<u8>>> {
        assert!(self.warm_started, "client used before warm start");
        self.bytes_received += frame_bytes.len() as u64;
        let frame = Frame::decode(frame_bytes)?;
        if frame.kind != FrameKind::GeneratedBatch {
            return Err(Error::MalformedFrame(
                "client expects generated batches".into(),
            ));
        }
        if self.fail_at_steps.remove(&frame.step) {
            return Err(Error::ClientFailure {
                client: self.id as usize,
                step: frame.step,
            });
        }
        let (fake, fake_labels) = decode_generated(&frame, self.data_dim)?;
        let batch = fake.rows();

        let idx = sample_batch_indices(
            &self.local_indices,
            batch,
            self.hub.get(Stream::Batch(self.id)),
        );
        let (real, real_labels) = self.data.batch(&idx);
        let alphas = sample_alphas(batch, self.hub.get(Stream::Alpha(self.id)));
        disc_step_on_fake(
            &self.disc_spec,
            &mut self.disc_params,
            self.lambda_gp,
            self.data_dim,
            &real,
            &real_labels,
            &fake,
            &fake_labels,
            &alphas,
            config.eta_d,
            &mut self.disc_opt,
        )?;

        if !want_payload {
            return Ok(None);
        }
        // Upstream gradients against the just-updated discriminator,
        // sanitized before anything leaves the client.
        let ups = upstream_grads(
            &self.disc_spec,
            &self.disc_params,
            self.data_dim,
            &fake,
            &fake_labels,
        )?;
        let raw: Vec<Tensor> = ups.into_iter().map(|u| u.grad).collect();
        let sanitized = sanitize_batch(&raw, &self.mechanism.for_step(frame.step))?;
        let mut payload = Vec::with_capacity(batch * self.data_dim);
        for g in &sanitized {
            payload.extend_from_slice(g.data());
        }
        let reply = Frame {
            step: frame.step,
            kind: FrameKind::SanitizedGrads,
            payload,
        }
        .encode();
        self.bytes_sent += reply.len() as u64;
        Ok(Some(reply))
    }

    fn snapshot(&self) -> (Vec<Tensor>, Optimizer) {
        (self.disc_params.clone(), self.disc_opt.clone())
    }

    fn restore(&mut self, snap: (Vec<Tensor>, Optimizer)) {
        self.disc_params = snap.0;
        self.disc_opt = snap.1;
    }
}

/// Typed client update for direct use: one local discriminator step against
/// the generated batch, then the sanitized payload.
pub fn client_update(
    client: &mut ClientState,
    step: u64,
    fake: &Tensor,
    labels: &[u32],
    config: &TrainConfig,
) -> Result<GradPayload> {
    let bytes = encode_generated(step, fake, labels);
    let reply = client
        .handle_frame(&bytes, config, true)?
        .expect("payload requested");
    let frame = Frame::decode(&reply)?;
    decode_payload(&frame, fake.rows(), client.data_dim)
}

/// Server-side gate: in private mode only sanitizer-stamped payloads are
/// acceptable.
pub fn validate_payload_frame(frame: &Frame, private_mode: bool, client: usize) -> Result<()> {
    match frame.kind {
        FrameKind::SanitizedGrads => Ok(()),
        FrameKind::RawGrads if !private_mode => Ok(()),
        FrameKind::RawGrads => Err(Error::UnsanitizedPayload(client)),
        FrameKind::GeneratedBatch => Err(Error::MalformedFrame(
            "server expects gradient payloads".into(),
        )),
    }
}

fn decode_payload(frame: &Frame, batch: usize, data_dim: usize) -> Result<GradPayload> {
    if frame.payload.len() != batch * data_dim {
        return Err(Error::MalformedFrame(format!(
            "payload carries {} reals, expected {}",
            frame.payload.len(),
            batch * data_dim
        )));
    }
    let grads = (0..batch)
        .map(|i| {
            Tensor::new(
                vec![1, data_dim],
                frame.payload[i * data_dim..(i + 1) * data_dim].to_vec(),
            )
        })
        .collect();
    Ok(GradPayload {
        step: frame.step,
        grads,
        wire_bytes: (frame.payload.len() * 8) as u64 + FRAME_OVERHEAD_BYTES,
        sanitized: frame.kind == FrameKind::SanitizedGrads,
    })
}

/// Build one client per shard of a partitioned dataset. Client `k` holds
/// the rows of shard `k` in ascending global order, which keeps its batch
/// draws aligned with the centralized trainer's.
pub fn clients_from_partition(
    dataset_spec: &DatasetSpec,
    config: &TrainConfig,
) -> Result<Vec<ClientState>> {
    let dataset = dataset_spec.build()?;
    dataset.validate()?;
    let mut hub = StreamHub::new(config.seed);
    let shards = partition(dataset.len(), config.gamma, hub.get(Stream::Partition))?;
    let mut clients = Vec::with_capacity(shards.k());
    for k in 0..shards.k() {
        let (points, labels) = dataset.batch(shards.shard(k));
        let local = LabeledDataset {
            points,
            labels,
            num_classes: dataset.num_classes,
            provenance: format!("{}[shard {k}]", dataset.provenance),
        };
        clients.push(ClientState::new(k as u32, local, config, config.seed)?);
    }
    Ok(clients)
}

/// Warm start every cold client, fanning the independent local jobs
/// across the available cores.
pub fn warm_start_clients(clients: &mut [ClientState], config: &TrainConfig) -> Result<()> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    warm_start_clients_with_workers(clients, config, workers)
}

/// As [`warm_start_clients`] with an explicit worker count.
pub fn warm_start_clients_with_workers(
    clients: &mut [ClientState],
    config: &TrainConfig,
    workers: usize,
) -> Result<()> {
    let workers = workers.min(clients.len()).max(1);
    if workers == 1 {
        for c in clients.iter_mut() {
            if !c.warm_started {
                c.client_warm_start(config)?;
            }
        }
        return Ok(());
    }
    let chunk = clients.len().div_ceil(workers);
    std::thread::scope(|scope| -> Result<()> {
        let mut handles = Vec::with_capacity(workers);
        for group in clients.chunks_mut(chunk) {
            handles.push(scope.spawn(move || -> Result<()> {
                for c in group {
                    if !c.warm_started {
                        c.client_warm_start(config)?;
                    }
                }
                Ok(())
            }));
        }
        for h in handles {
            h.join().expect("client warm-start thread panicked")?;
        }
        Ok(())
    })
}

/// Result of a federated run.
pub struct FederatedOutcome {
    pub checkpoint: GeneratorCheckpoint,
    pub ledger: PrivacyLedger,
    pub ledger_records: Vec<LedgerRecord>,
    pub wire: WireStats,
    pub manifest: RunManifest,
    pub budget_halt: Option<u64>,
}

/// Algorithm-2 server loop: per step, pick one client, send `n_dis` fresh
/// generated batches (only the final one returns the sanitized payload),
/// and apply the payload through the generator's local Jacobian. Adjacency
/// is one client's whole shard (user-level), recorded in the manifest.
///
/// A client failure aborts the step and the step is resampled; the ledger
/// is still charged for the aborted query.
pub fn server_train(
    clients: &mut [ClientState],
    dataset_spec: &DatasetSpec,
    config: &TrainConfig,
    mut observe: impl FnMut(u64, &[Tensor]) -> bool,
) -> Result<FederatedOutcome> {
    config.validate()?;
    if clients.is_empty() {
        return Err(Error::InvalidConfig("no clients".into()));
    }
    let k_count = clients.len();
    warm_start_clients(clients, config)?;

    let mut hub = StreamHub::new(config.seed);
    let gen_spec = gen_spec_for(config, &clients[0].data);
    let classes = clients[0].num_classes();
    let data_dim = clients[0].data_dim;
    let latent = config.latent_dim;
    let batch = config.batch as usize;

    let mut gen_params = gen_spec.init_params(hub.get(Stream::GenInit));
    let gamma = 1.0 / k_count as f64;
    let mut ledger = if config.sigma > 0.0 {
        PrivacyLedger::new(gamma, config.sigma, config.batch)?
    } else {
        PrivacyLedger::new_non_private(gamma, config.batch)?
    };
    let mut gen_opt = Optimizer::new(config.optimizer_kind()?);
    let mut wire = WireStats::default();
    let mut ledger_records = Vec::new();
    let mut budget_halt = None;
    let private_mode = config.sigma > 0.0;

    let clients_hash = {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for c in clients.iter() {
            h.update(c.content_hash().as_bytes());
        }
        format!("{:x}", h.finalize())
    };

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

        let mut attempts = 0;
        loop {
            attempts += 1;
            let k = hub.get(Stream::Shard).random_range(0..k_count);
            let client = &mut clients[k];
            let snap = client.snapshot();
            let mut s2c = 0u64;
            let mut final_state = None;

            let attempt = (|| -> Result<()> {
                for t in 0..config.n_dis {
                    let z = sample_latent(batch, latent, hub.get(Stream::Latent));
                    let labels = sample_labels(batch, classes, hub.get(Stream::Label));
                    let gen_pass = gen_forward(&gen_spec, &gen_params, &z, &labels)?;
                    let frame = encode_generated(next_step, gen_pass.output_value(), &labels);
                    wire.server_sent += frame.len() as u64;
                    s2c += frame.len() as u64;
                    let want_payload = t + 1 == config.n_dis;
                    let reply = client.handle_frame(&frame, config, want_payload)?;
                    if want_payload {
                        final_state = Some((gen_pass, reply.expect("final call returns payload")));
                    }
                }
                Ok(())
            })();

            match attempt {
                Ok(()) => {
                    let (mut gen_pass, reply) = final_state.expect("n_dis >= 1");
                    wire.server_received += reply.len() as u64;
                    let frame = Frame::decode(&reply)?;
                    validate_payload_frame(&frame, private_mode, client.id as usize)?;
                    let payload = decode_payload(&frame, batch, data_dim)?;
                    let grads = vjp_mean_grads(&mut gen_pass, &payload.grads)?;
                    gen_opt.step(&mut gen_params, &grads, config.eta_g);
                    wire.per_step.push(StepTraffic {
                        step: next_step,
                        server_to_client_bytes: s2c,
                        client_to_server_bytes: payload.wire_bytes,
                    });
                    break;
                }
                Err(Error::ClientFailure { client: id, step }) => {
                    // Conservative: the aborted query still charges the
                    // ledger before the step is resampled.
                    log::warn!("client {id} failed at step {step}; step resampled");
                    clients[k].restore(snap);
                    ledger.accumulate(1);
                    ledger_records.push(ledger.record(config.delta));
                    if attempts >= 10 * k_count {
                        return Err(Error::ClientFailure { client: id, step });
                    }
                }
                Err(e) => return Err(e),
            }
        }
        ledger.accumulate(1);
        ledger_records.push(ledger.record(config.delta));
        step = next_step;
        if !observe(step, &gen_params) {
            break;
        }
    }

    let manifest = RunManifest {
        mode: "federated".into(),
        config: config.clone(),
        dataset: dataset_spec.clone(),
        dataset_hash: clients_hash,
        warm_start_privacy_charge: "none: clients warm start locally; only the generator is \
                                    released"
            .into(),
        adjacency_unit: "client shard (user-level)".into(),
    };
    Ok(FederatedOutcome {
        checkpoint: GeneratorCheckpoint {
            spec: gen_spec,
            params: gen_params,
        },
        ledger,
        ledger_records,
        wire,
        manifest,
        budget_halt,
    })
}

/// Report from the pixel-flip debugging scenario.
#[derive(Debug, Clone, Serialize)]
pub struct BugReport {
    pub suspected_mean_intensity: f64,
    pub clean_mean_intensity: f64,
    pub opposite_sides_of_half: bool,
    pub welch_t: f64,
    pub p_value: f64,
    pub suspected_bimodal: bool,
    pub flip_fraction: f64,
}

/// Welch's two-sample t-test, two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var =
        |x: &[f64], m: f64| x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let dist = StudentsT::new(0.0, 1.0, df).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p)
}

/// Pixel-flip debugging scenario: glyph data split across two pools of
/// clients, a fraction of the suspected pool receiving flipped pixels; one
/// federated GAN per pool, compared by mean sample intensity.
pub fn bug_scenario(
    config: &TrainConfig,
    clients_per_pool: usize,
    glyphs_per_client: usize,
    glyph_classes: u32,
    glyph_noise: f64,
    flip_fraction: f64,
) -> Result<(BugReport, GeneratorCheckpoint, GeneratorCheckpoint)> {
    if !(0.0..=1.0).contains(&flip_fraction) {
        return Err(Error::InvalidConfig(format!(
            "flip fraction {flip_fraction} not in [0, 1]"
        )));
    }
    if clients_per_pool == 0 {
        return Err(Error::InvalidConfig("empty pools".into()));
    }
    let flipped_count = (flip_fraction * clients_per_pool as f64).round() as usize;

    let run_pool = |pool_tag: u64,
                    flipped_clients: usize|
     -> Result<(f64, Vec<f64>, GeneratorCheckpoint)> {
        let mut pool_config = config.clone();
        pool_config.seed = mix(config.seed, pool_tag);
        pool_config.gamma = 1.0 / clients_per_pool as f64;
        let mut clients: Vec<ClientState> = (0..clients_per_pool)
            .map(|i| {
                let flipped = i < flipped_clients;
                let data = make_glyphs(
                    glyph_classes,
                    glyphs_per_client,
                    glyph_noise,
                    mix(pool_config.seed, 1000 + i as u64),
                    flipped,
                )?;
                ClientState::new(i as u32, data, &pool_config, pool_config.seed)
            })
            .collect::<Result<_>>()?;
        let spec = DatasetSpec::Glyphs {
            classes: glyph_classes,
            n: glyphs_per_client * clients_per_pool,
            noise: glyph_noise,
            seed: pool_config.seed,
            flipped: false,
        };
        let out = server_train(&mut clients, &spec, &pool_config, |_, _| true)?;

        let n_eval = 256;
        let mut rng = seeded(mix(pool_config.seed, 424_242));
        let z = sample_latent(n_eval, pool_config.latent_dim, &mut rng);
        let labels = sample_labels(n_eval, glyph_classes, &mut rng);
        let samples = generate_from(&out.checkpoint.spec, &out.checkpoint.params, &z, &labels)?;
        let per_sample: Vec<f64> = (0..n_eval)
            .map(|i| samples.row(i).iter().sum::<f64>() / samples.cols() as f64)
            .collect();
        Ok((mean_intensity(&samples), per_sample, out.checkpoint))
    };

    let (suspected_mean, suspected_samples, suspected_ckpt) = run_pool(1, flipped_count)?;
    let (clean_mean, clean_samples, clean_ckpt) = run_pool(2, 0)?;

    let (t, p) = welch_t_test(&suspected_samples, &clean_samples);
    let bright = suspected_samples.iter().filter(|&&v| v > 0.5).count() as f64
        / suspected_samples.len() as f64;
    let report = BugReport {
        suspected_mean_intensity: suspected_mean,
        clean_mean_intensity: clean_mean,
        opposite_sides_of_half: (suspected_mean - 0.5) * (clean_mean - 0.5) < 0.0,
        welch_t: t,
        p_value: p,
        suspected_bimodal: bright > 0.2 && bright < 0.8,
        flip_fraction,
    };
    Ok((report, suspected_ckpt, clean_ckpt))
}
