//! Fully-connected networks with everywhere-twice-differentiable
//! activations, recorded on a [`Tape`].
//!
//! The activation set is restricted so the gradient-penalty term has an
//! exact second derivative at every point; piecewise-linear activations are
//! deliberately unrepresentable.

use crate::error::{Error, Result};
use crate::tape::{Adjoints, NodeId, Tape};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Guard added under the square root of the input-gradient norm so the
/// penalty stays differentiable when the gradient vanishes.
pub const NORM_GUARD_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Tanh,
    Softplus,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Tanh => 1,
            Activation::Softplus => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Tanh),
            2 => Some(Activation::Softplus),
            _ => None,
        }
    }
}

/// Architecture of one MLP: affine layers with an activation slot each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Width of the data (or latent) part of the input.
    pub input_dim: usize,
    /// Width of the one-hot conditioning part appended to the input
    /// (0 for unconditioned networks).
    pub cond_width: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    /// One activation per affine layer, hidden layers first, output last.
    pub activations: Vec<Activation>,
}

impl NetworkSpec {
    /// Conventional MLP: every hidden layer uses `hidden_act`, the output
    /// layer is linear.
    pub fn mlp(
        input_dim: usize,
        cond_width: usize,
        hidden: &[usize],
        output_dim: usize,
        hidden_act: Activation,
    ) -> Self {
        let mut activations = vec![hidden_act; hidden.len()];
        activations.push(Activation::Linear);
        NetworkSpec {
            input_dim,
            cond_width,
            hidden: hidden.to_vec(),
            output_dim,
            activations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.activations.len() != self.hidden.len() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.hidden.len() + 1
            )));
        }
        if self.output_dim == 0 || self.total_input() == 0 {
            return Err(Error::InvalidConfig("zero-width network".into()));
        }
        Ok(())
    }

    /// Full input width including conditioning.
    pub fn total_input(&self) -> usize {
        self.input_dim + self.cond_width
    }

    /// Widths of every affine layer boundary, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.total_input()];
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn param_count(&self) -> usize {
        let w = self.widths();
        (1..w.len()).map(|i| w[i - 1] * w[i] + w[i]).sum()
    }

    /// Fresh parameters `[W1, b1, ..., Wn, bn]` with `W ~ N(0, 1/fan_in)`
    /// and zero biases.
    pub fn init_params(&self, rng: &mut impl Rng) -> Vec<Tensor> {
        let w = self.widths();
        let mut params = Vec::with_capacity(2 * self.num_layers());
        for i in 1..w.len() {
            let (fan_in, fan_out) = (w[i - 1], w[i]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            params.push(Tensor::new(vec![fan_in, fan_out], data));
            params.push(Tensor::zeros(1, fan_out));
        }
        params
    }

    pub fn check_params(&self, params: &[Tensor]) -> Result<()> {
        let w = self.widths();
        if params.len() != 2 * self.num_layers() {
            return Err(Error::ShapeMismatch {
                context: "parameter collection".into(),
                expected: format!("{} tensors", 2 * self.num_layers()),
                actual: format!("{} tensors", params.len()),
            });
        }
        for i in 1..w.len() {
            let weight = &params[2 * (i - 1)];
            let bias = &params[2 * (i - 1) + 1];
            if weight.shape() != [w[i - 1], w[i]] {
                return Err(Error::ShapeMismatch {
                    context: format!("layer {} weights", i),
                    expected: format!("[{}, {}]", w[i - 1], w[i]),
                    actual: format!("{:?}", weight.shape()),
                });
            }
            if bias.shape() != [1, w[i]] {
                return Err(Error::ShapeMismatch {
                    context: format!("layer {} bias", i),
                    expected: format!("[1, {}]", w[i]),
                    actual: format!("{:?}", bias.shape()),
                });
            }
        }
        Ok(())
    }
}

/// Record the network on an existing tape. `param_ids` alternate weight and
/// bias nodes; `input` is `batch x total_input`.
pub fn forward_on_tape(
    tape: &mut Tape,
    spec: &NetworkSpec,
    param_ids: &[NodeId],
    input: NodeId,
) -> Result<NodeId> {
    let widths = spec.widths();
    if tape.value(input).cols() != widths[0] {
        return Err(Error::ShapeMismatch {
            context: "network input".into(),
            expected: format!("[_, {}]", widths[0]),
            actual: format!("{:?}", tape.value(input).shape()),
        });
    }
    let mut h = input;
    for layer in 0..spec.num_layers() {
        let weight = param_ids[2 * layer];
        let bias = param_ids[2 * layer + 1];
        if tape.value(h).cols() != tape.value(weight).rows() {
            return Err(Error::ShapeMismatch {
                context: format!("layer {} input", layer + 1),
                expected: format!("[_, {}]", tape.value(weight).rows()),
                actual: format!("{:?}", tape.value(h).shape()),
            });
        }
        let lin = tape.matmul(h, weight);
        let pre = tape.add_row(lin, bias);
        h = match spec.activations[layer] {
            Activation::Linear => pre,
            Activation::Tanh => tape.tanh(pre),
            Activation::Softplus => tape.softplus(pre),
        };
    }
    Ok(h)
}

/// A recorded forward evaluation: the tape plus handles to its leaves and
/// output.
pub struct ForwardPass {
    pub tape: Tape,
    pub params: Vec<NodeId>,
    pub input: NodeId,
    pub output: NodeId,
}

impl ForwardPass {
    pub fn output_value(&self) -> &Tensor {
        self.tape.value(self.output)
    }
}

/// Evaluate the network on `input`, recording the computation.
pub fn forward(spec: &NetworkSpec, params: &[Tensor], input: &Tensor) -> Result<ForwardPass> {
    spec.validate()?;
    spec.check_params(params)?;
    let mut tape = Tape::new();
    let param_ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let input_id = tape.leaf(input.clone());
    let output = forward_on_tape(&mut tape, spec, &param_ids, input_id)?;
    Ok(ForwardPass {
        tape,
        params: param_ids,
        input: input_id,
        output,
    })
}

/// Leaf selector for [`grad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrt {
    Params,
    Input,
}

/// Reverse-mode derivatives of the pass's scalar output with respect to the
/// selected leaves. Errors when the recorded output is not scalar.
pub fn grad(pass: &mut ForwardPass, wrt: Wrt) -> Result<Vec<Tensor>> {
    let leaves: Vec<NodeId> = match wrt {
        Wrt::Params => pass.params.clone(),
        Wrt::Input => vec![pass.input],
    };
    pass.tape.grad_scalar(pass.output, &leaves)
}

/// Build the per-row gradient-penalty nodes `(sqrt(|g|^2 + eps) - 1)^2`
/// from an input-gradient node, returning the scalar mean over rows.
pub fn penalty_from_input_grad(tape: &mut Tape, input_grad: NodeId) -> NodeId {
    let rows = tape.value(input_grad).rows();
    let g2 = tape.mul(input_grad, input_grad);
    let row_sq = tape.sum_cols(g2);
    let guarded = tape.affine(row_sq, 1.0, NORM_GUARD_EPS);
    let norm = tape.sqrt(guarded);
    let dev = tape.affine(norm, 1.0, -1.0);
    let sq = tape.mul(dev, dev);
    let sum = tape.sum_all(sq);
    tape.affine(sum, 1.0 / rows as f64, 0.0)
}

/// Parameter gradient of the gradient-penalty scalar
/// `mean_rows (||grad_x f(x)||_2 - 1)^2` at `point`, computed by
/// differentiating through the recorded first-order backward pass.
///
/// Errors when the input gradient is exactly zero (the unguarded norm has no
/// derivative there).
pub fn grad_of_grad_norm(
    spec: &NetworkSpec,
    params: &[Tensor],
    point: &Tensor,
) -> Result<Vec<Tensor>> {
    spec.validate()?;
    spec.check_params(params)?;
    let mut tape = Tape::new();
    let param_ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let x = tape.leaf(point.clone());
    let out = forward_on_tape(&mut tape, spec, &param_ids, x)?;
    let total = tape.sum_all(out);
    let first = tape.backward(total, None)?;
    let gx = first.node(x).ok_or(Error::ZeroGradientNorm)?;
    if tape.value(gx).l2_norm() == 0.0 {
        return Err(Error::ZeroGradientNorm);
    }
    let penalty = penalty_from_input_grad(&mut tape, gx);
    let second = tape.backward(penalty, None)?;
    Ok(param_ids.iter().map(|&p| second.tensor(&tape, p)).collect())
}

/// Value of the same penalty scalar, for finite-difference checks.
pub fn penalty_value(spec: &NetworkSpec, params: &[Tensor], point: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let param_ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let x = tape.leaf(point.clone());
    let out = forward_on_tape(&mut tape, spec, &param_ids, x)?;
    let total = tape.sum_all(out);
    let first = tape.backward(total, None)?;
    let gx = first.node(x).ok_or(Error::ZeroGradientNorm)?;
    let penalty = penalty_from_input_grad(&mut tape, gx);
    Ok(tape.value(penalty).scalar_value())
}

/// Input-gradient of the scalar sum of outputs; used by tests and norm
/// diagnostics.
pub fn input_gradient(spec: &NetworkSpec, params: &[Tensor], input: &Tensor) -> Result<Tensor> {
    let mut pass = forward(spec, params, input)?;
    let total = pass.tape.sum_all(pass.output);
    let adj: Adjoints = pass.tape.backward(total, None)?;
    Ok(adj.tensor(&pass.tape, pass.input))
}
