//! Conditional generator/discriminator pair, Wasserstein losses with
//! gradient penalty, and the sanitized generator update.
//!
//! The discriminator loss is
//! `-E[D(x)] + E[D(x_fake)] + lambda * E[(|grad D(interp)| - 1)^2]`,
//! with the penalty taken over the data columns of the joint
//! (data, one-hot label) input — exactly the block whose gradient later
//! crosses the privacy barrier. The generator update never reads
//! discriminator parameters directly: it receives per-sample upstream
//! gradients, sanitizes them, and multiplies through its own local Jacobian
//! via a vector-Jacobian product on the retained generator tape.

use crate::error::{Error, Result};
use crate::network::{forward_on_tape, penalty_from_input_grad, NetworkSpec};
use crate::sanitizer::{sanitize_batch, Mechanism};
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

/// Generator/discriminator pair with shared conditioning width.
#[derive(Debug, Clone)]
pub struct GanPair {
    pub gen_spec: NetworkSpec,
    pub disc_spec: NetworkSpec,
    pub gen_params: Vec<Tensor>,
    pub disc_params: Vec<Tensor>,
    /// Gradient-penalty weight.
    pub lambda_gp: f64,
}

impl GanPair {
    pub fn new(
        gen_spec: NetworkSpec,
        disc_spec: NetworkSpec,
        gen_params: Vec<Tensor>,
        disc_params: Vec<Tensor>,
        lambda_gp: f64,
    ) -> Result<Self> {
        gen_spec.validate()?;
        disc_spec.validate()?;
        if gen_spec.output_dim != disc_spec.input_dim {
            return Err(Error::ShapeMismatch {
                context: "generator output vs discriminator data input".into(),
                expected: format!("{}", gen_spec.output_dim),
                actual: format!("{}", disc_spec.input_dim),
            });
        }
        if gen_spec.cond_width != disc_spec.cond_width || gen_spec.cond_width == 0 {
            return Err(Error::InvalidConfig(format!(
                "conditioning widths must match and be >= 1, got {} and {}",
                gen_spec.cond_width, disc_spec.cond_width
            )));
        }
        if lambda_gp < 0.0 {
            return Err(Error::InvalidConfig("negative penalty weight".into()));
        }
        gen_spec.check_params(&gen_params)?;
        disc_spec.check_params(&disc_params)?;
        Ok(GanPair {
            gen_spec,
            disc_spec,
            gen_params,
            disc_params,
            lambda_gp,
        })
    }

    pub fn init(
        gen_spec: NetworkSpec,
        disc_spec: NetworkSpec,
        lambda_gp: f64,
        gen_rng: &mut impl Rng,
        disc_rng: &mut impl Rng,
    ) -> Result<Self> {
        let gen_params = gen_spec.init_params(gen_rng);
        let disc_params = disc_spec.init_params(disc_rng);
        GanPair::new(gen_spec, disc_spec, gen_params, disc_params, lambda_gp)
    }

    pub fn latent_dim(&self) -> usize {
        self.gen_spec.input_dim
    }

    pub fn data_dim(&self) -> usize {
        self.gen_spec.output_dim
    }

    pub fn num_classes(&self) -> u32 {
        self.gen_spec.cond_width as u32
    }
}

/// Per-sample derivative of the generator loss with respect to the
/// generator's output for that sample — the only gradient that crosses the
/// privacy barrier.
#[derive(Debug, Clone)]
pub struct UpstreamGrad {
    pub sample: usize,
    /// `1 x data_dim`.
    pub grad: Tensor,
}

/// One-hot encode labels into a `batch x classes` matrix.
pub fn one_hot(labels: &[u32], classes: u32) -> Tensor {
    let mut t = Tensor::zeros(labels.len(), classes as usize);
    for (i, &l) in labels.iter().enumerate() {
        assert!(l < classes, "label {l} out of range");
        t.set(i, l as usize, 1.0);
    }
    t
}

pub fn sample_latent(batch: usize, latent_dim: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..batch * latent_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    Tensor::new(vec![batch, latent_dim], data)
}

/// Labels from the uniform prior; independent of any dataset.
pub fn sample_labels(batch: usize, classes: u32, rng: &mut impl Rng) -> Vec<u32> {
    (0..batch).map(|_| rng.random_range(0..classes)).collect()
}

pub fn sample_alphas(batch: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..batch).map(|_| rng.random::<f64>()).collect()
}

/// Random draws consumed by one discriminator update.
#[derive(Debug, Clone)]
pub struct DiscDraws {
    pub z: Tensor,
    pub fake_labels: Vec<u32>,
    pub alphas: Vec<f64>,
}

/// A retained generator evaluation: tape plus parameter and output handles,
/// ready for a later vector-Jacobian product.
pub struct GenPass {
    pub tape: Tape,
    pub params: Vec<NodeId>,
    pub output: NodeId,
}

impl GenPass {
    pub fn output_value(&self) -> &Tensor {
        self.tape.value(self.output)
    }
}

/// Run a generator on `[z | one_hot(labels)]`, recording the tape.
pub fn gen_forward(
    gen_spec: &NetworkSpec,
    gen_params: &[Tensor],
    z: &Tensor,
    labels: &[u32],
) -> Result<GenPass> {
    if z.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            context: "latents vs labels".into(),
            expected: format!("{} rows", labels.len()),
            actual: format!("{} rows", z.rows()),
        });
    }
    let mut tape = Tape::new();
    let params: Vec<NodeId> = gen_params.iter().map(|p| tape.leaf(p.clone())).collect();
    let input = z.concat_cols(&one_hot(labels, gen_spec.cond_width as u32));
    let input_id = tape.constant(input);
    let output = forward_on_tape(&mut tape, gen_spec, &params, input_id)?;
    Ok(GenPass {
        tape,
        params,
        output,
    })
}

/// Run the pair's generator on `[z | one_hot(labels)]`, recording the tape.
pub fn generator_forward(pair: &GanPair, z: &Tensor, labels: &[u32]) -> Result<GenPass> {
    gen_forward(&pair.gen_spec, &pair.gen_params, z, labels)
}

/// Generator samples as plain values (no retained tape).
pub fn generate_from(
    gen_spec: &NetworkSpec,
    gen_params: &[Tensor],
    z: &Tensor,
    labels: &[u32],
) -> Result<Tensor> {
    Ok(gen_forward(gen_spec, gen_params, z, labels)?
        .output_value()
        .clone())
}

/// Generator samples as plain values (no retained tape).
pub fn generate(pair: &GanPair, z: &Tensor, labels: &[u32]) -> Result<Tensor> {
    generate_from(&pair.gen_spec, &pair.gen_params, z, labels)
}

/// A recorded discriminator loss, ready to differentiate.
pub struct DiscLossPass {
    pub tape: Tape,
    pub params: Vec<NodeId>,
    pub loss: NodeId,
}

impl DiscLossPass {
    pub fn loss_value(&self) -> f64 {
        self.tape.value(self.loss).scalar_value()
    }
}

/// Wasserstein discriminator loss with gradient penalty, on a fake batch
/// that has already been generated (federated clients receive it over the
/// wire; the centralized path generates it first).
///
/// The interpolate mixes real and fake joint inputs with a scalar alpha per
/// sample pair, and the penalty norm is taken over the data columns of the
/// interpolate's input gradient.
#[allow(clippy::too_many_arguments)]
pub fn d_loss_on_fake(
    disc_spec: &NetworkSpec,
    disc_params: &[Tensor],
    lambda_gp: f64,
    data_dim: usize,
    real_batch: &Tensor,
    real_labels: &[u32],
    fake: &Tensor,
    fake_labels: &[u32],
    alphas: &[f64],
) -> Result<DiscLossPass> {
    let b = real_batch.rows();
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    if real_labels.len() != b || fake_labels.len() != b || alphas.len() != b || fake.rows() != b {
        return Err(Error::ShapeMismatch {
            context: "discriminator batch".into(),
            expected: format!("{b} rows across batch, labels, fake, alphas"),
            actual: format!(
                "labels {}, fake rows {}, fake labels {}, alphas {}",
                real_labels.len(),
                fake.rows(),
                fake_labels.len(),
                alphas.len()
            ),
        });
    }
    let classes = disc_spec.cond_width as u32;
    let u_real = real_batch.concat_cols(&one_hot(real_labels, classes));
    let u_fake = fake.concat_cols(&one_hot(fake_labels, classes));

    let mut tape = Tape::new();
    let params: Vec<NodeId> = disc_params.iter().map(|p| tape.leaf(p.clone())).collect();
    let real_id = tape.constant(u_real.clone());
    let fake_id = tape.constant(u_fake.clone());

    let out_real = forward_on_tape(&mut tape, disc_spec, &params, real_id)?;
    let out_fake = forward_on_tape(&mut tape, disc_spec, &params, fake_id)?;
    let mean_real = tape.mean_all(out_real);
    let mean_fake = tape.mean_all(out_fake);
    let mut loss = tape.sub(mean_fake, mean_real);

    if lambda_gp > 0.0 {
        // interp_i = alpha_i * real_i + (1 - alpha_i) * fake_i, one scalar
        // alpha per sample pair, broadcast over the joint input row.
        let total = u_real.cols();
        let mut interp = Vec::with_capacity(b * total);
        for (i, &a) in alphas.iter().enumerate() {
            for (r, f) in u_real.row(i).iter().zip(u_fake.row(i)) {
                interp.push(a * r + (1.0 - a) * f);
            }
        }
        let interp_id = tape.leaf(Tensor::new(vec![b, total], interp));
        let out_interp = forward_on_tape(&mut tape, disc_spec, &params, interp_id)?;
        let sum_interp = tape.sum_all(out_interp);
        let first = tape.backward(sum_interp, None)?;
        let g_interp = first.node(interp_id).ok_or(Error::ZeroGradientNorm)?;
        let g_data = tape.slice_cols(g_interp, 0, data_dim);
        let penalty = penalty_from_input_grad(&mut tape, g_data);
        let weighted = tape.affine(penalty, lambda_gp, 0.0);
        loss = tape.add(loss, weighted);
    }

    Ok(DiscLossPass { tape, params, loss })
}

/// Wasserstein discriminator loss with gradient penalty; fake samples come
/// from the pair's generator with labels drawn from the prior.
pub fn d_loss(
    pair: &GanPair,
    real_batch: &Tensor,
    real_labels: &[u32],
    draws: &DiscDraws,
) -> Result<DiscLossPass> {
    let fake = generate(pair, &draws.z, &draws.fake_labels)?;
    d_loss_on_fake(
        &pair.disc_spec,
        &pair.disc_params,
        pair.lambda_gp,
        pair.data_dim(),
        real_batch,
        real_labels,
        &fake,
        &draws.fake_labels,
        &draws.alphas,
    )
}

/// Plain SGD or Adam over one parameter collection. The training
/// algorithms are written as plain descent; Adam is an optional mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Optimizer {
            kind,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64) {
        assert_eq!(params.len(), grads.len(), "params vs grads length");
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                if self.m.is_empty() {
                    self.m = params
                        .iter()
                        .map(|p| Tensor::zeros(p.rows(), p.cols()))
                        .collect();
                    self.v = self.m.clone();
                }
                self.t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
                let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for i in 0..g.len() {
                        let gv = g.data()[i];
                        let mv = ADAM_BETA1 * m.data()[i] + (1.0 - ADAM_BETA1) * gv;
                        let vv = ADAM_BETA2 * v.data()[i] + (1.0 - ADAM_BETA2) * gv * gv;
                        m.data_mut()[i] = mv;
                        v.data_mut()[i] = vv;
                        p.data_mut()[i] -= lr * (mv / bc1) / ((vv / bc2).sqrt() + ADAM_EPS);
                    }
                }
            }
        }
    }
}

/// One unsanitized descent step on discriminator parameters against an
/// already-generated fake batch; returns the loss value.
#[allow(clippy::too_many_arguments)]
pub fn disc_step_on_fake(
    disc_spec: &NetworkSpec,
    disc_params: &mut [Tensor],
    lambda_gp: f64,
    data_dim: usize,
    real_batch: &Tensor,
    real_labels: &[u32],
    fake: &Tensor,
    fake_labels: &[u32],
    alphas: &[f64],
    eta_d: f64,
    opt: &mut Optimizer,
) -> Result<f64> {
    let mut pass = d_loss_on_fake(
        disc_spec,
        disc_params,
        lambda_gp,
        data_dim,
        real_batch,
        real_labels,
        fake,
        fake_labels,
        alphas,
    )?;
    let grads = pass.tape.grad_scalar(pass.loss, &pass.params)?;
    opt.step(disc_params, &grads, eta_d);
    Ok(pass.loss_value())
}

/// One unsanitized descent step on the discriminator loss; returns the loss
/// value. No privacy machinery applies here — only the generator is ever
/// released.
pub fn disc_step(
    pair: &mut GanPair,
    real_batch: &Tensor,
    real_labels: &[u32],
    draws: &DiscDraws,
    eta_d: f64,
    opt: &mut Optimizer,
) -> Result<f64> {
    let fake = generate(pair, &draws.z, &draws.fake_labels)?;
    let GanPair {
        disc_spec,
        disc_params,
        lambda_gp,
        gen_spec,
        ..
    } = pair;
    disc_step_on_fake(
        disc_spec,
        disc_params,
        *lambda_gp,
        gen_spec.output_dim,
        real_batch,
        real_labels,
        &fake,
        &draws.fake_labels,
        &draws.alphas,
        eta_d,
        opt,
    )
}

/// Per-sample derivatives of `-sum_i D(u_i)` with respect to the data part
/// of each fake sample. Works from values alone, so federated clients can
/// run it on a batch received over the wire.
pub fn upstream_grads(
    disc_spec: &NetworkSpec,
    disc_params: &[Tensor],
    data_dim: usize,
    fake: &Tensor,
    fake_labels: &[u32],
) -> Result<Vec<UpstreamGrad>> {
    if fake.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let u_fake = fake.concat_cols(&one_hot(fake_labels, disc_spec.cond_width as u32));
    let mut tape = Tape::new();
    let params: Vec<NodeId> = disc_params.iter().map(|p| tape.constant(p.clone())).collect();
    let input = tape.leaf(u_fake);
    let out = forward_on_tape(&mut tape, disc_spec, &params, input)?;
    let total = tape.sum_all(out);
    let neg = tape.affine(total, -1.0, 0.0);
    let adj = tape.backward(neg, None)?;
    let g_input = adj.tensor(&tape, input);
    let g_data = g_input.slice_cols(0, data_dim);
    Ok((0..fake.rows())
        .map(|i| UpstreamGrad {
            sample: i,
            grad: g_data.row_tensor(i),
        })
        .collect())
}

/// Per-sample upstream gradients of the generator loss
/// `-mean_i D(G(z_i))`, with the generator tape retained and not yet
/// back-propagated through.
pub fn g_loss_upstream(
    pair: &GanPair,
    z: &Tensor,
    labels: &[u32],
) -> Result<(Vec<UpstreamGrad>, GenPass)> {
    if z.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let gen_pass = generator_forward(pair, z, labels)?;
    let upstreams = upstream_grads(
        &pair.disc_spec,
        &pair.disc_params,
        pair.data_dim(),
        gen_pass.output_value(),
        labels,
    )?;
    Ok((upstreams, gen_pass))
}

/// Mean vector-Jacobian product over the batch: `(1/B) sum_i u_i . J_i`,
/// evaluated on the retained generator tape. The Jacobian factor is data
/// independent and receives no sanitization.
pub fn vjp_mean_grads(gen_pass: &mut GenPass, upstreams: &[Tensor]) -> Result<Vec<Tensor>> {
    let b = upstreams.len();
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let d = upstreams[0].len();
    let mut seed = Vec::with_capacity(b * d);
    for u in upstreams {
        for v in u.data() {
            seed.push(v / b as f64);
        }
    }
    let adj = gen_pass
        .tape
        .backward(gen_pass.output, Some(Tensor::new(vec![b, d], seed)))?;
    Ok(gen_pass
        .params
        .iter()
        .map(|&p| adj.tensor(&gen_pass.tape, p))
        .collect())
}

/// Diagnostics from one generator update.
#[derive(Debug, Clone, Copy)]
pub struct GenStepInfo {
    /// Mean L2 norm of the raw upstream gradients, before clipping.
    pub mean_upstream_norm: f64,
}

fn mean_norm(upstreams: &[UpstreamGrad]) -> f64 {
    upstreams.iter().map(|u| u.grad.l2_norm()).sum::<f64>() / upstreams.len() as f64
}

/// Sanitized generator update from a retained generator pass. The training
/// loops land here with the pass from the final discriminator iteration.
pub fn sanitized_gen_step_from(
    pair: &mut GanPair,
    mut gen_pass: GenPass,
    labels: &[u32],
    mechanism: &Mechanism,
    eta_g: f64,
    opt: &mut Optimizer,
) -> Result<GenStepInfo> {
    let upstreams = upstream_grads(
        &pair.disc_spec,
        &pair.disc_params,
        pair.data_dim(),
        gen_pass.output_value(),
        labels,
    )?;
    let info = GenStepInfo {
        mean_upstream_norm: mean_norm(&upstreams),
    };
    let raw: Vec<Tensor> = upstreams.into_iter().map(|u| u.grad).collect();
    let sanitized = sanitize_batch(&raw, mechanism)?;
    let grads = vjp_mean_grads(&mut gen_pass, &sanitized)?;
    opt.step(&mut pair.gen_params, &grads, eta_g);
    Ok(info)
}

/// One sanitized generator update (the private path).
pub fn sanitized_gen_step(
    pair: &mut GanPair,
    z: &Tensor,
    labels: &[u32],
    mechanism: &Mechanism,
    eta_g: f64,
    opt: &mut Optimizer,
) -> Result<GenStepInfo> {
    let gen_pass = generator_forward(pair, z, labels)?;
    sanitized_gen_step_from(pair, gen_pass, labels, mechanism, eta_g, opt)
}

/// Plain generator update from a retained pass: identical arithmetic with
/// the sanitizer absent.
pub fn plain_gen_step_from(
    pair: &mut GanPair,
    mut gen_pass: GenPass,
    labels: &[u32],
    eta_g: f64,
    opt: &mut Optimizer,
) -> Result<GenStepInfo> {
    let upstreams = upstream_grads(
        &pair.disc_spec,
        &pair.disc_params,
        pair.data_dim(),
        gen_pass.output_value(),
        labels,
    )?;
    let info = GenStepInfo {
        mean_upstream_norm: mean_norm(&upstreams),
    };
    let raw: Vec<Tensor> = upstreams.into_iter().map(|u| u.grad).collect();
    let grads = vjp_mean_grads(&mut gen_pass, &raw)?;
    opt.step(&mut pair.gen_params, &grads, eta_g);
    Ok(info)
}

/// One plain generator update (the non-private reference path).
pub fn plain_gen_step(
    pair: &mut GanPair,
    z: &Tensor,
    labels: &[u32],
    eta_g: f64,
    opt: &mut Optimizer,
) -> Result<GenStepInfo> {
    let gen_pass = generator_forward(pair, z, labels)?;
    plain_gen_step_from(pair, gen_pass, labels, eta_g, opt)
}
