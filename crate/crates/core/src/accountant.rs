//! Renyi-DP accounting: per-step cost of the sanitized generator update,
//! subsampling amplification, additive composition, and conversion to
//! (epsilon, delta)-DP.
//!
//! All series are assembled in log space; the amplification bound spans
//! hundreds of orders of magnitude across the order grid and would overflow
//! immediately if evaluated directly.

use crate::error::{Error, Result};
use crate::math::{log_add, log_binomial, log_expm1};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

/// Integer Renyi orders tracked by default.
pub fn default_orders() -> Vec<u32> {
    (2..=256).collect()
}

/// RDP of a Gaussian mechanism with the given L2 sensitivity and noise
/// standard deviation: `order * sensitivity^2 / (2 * std^2)`.
pub fn gaussian_rdp(sensitivity: f64, noise_std: f64, order: u32) -> Result<f64> {
    check_order(order)?;
    if noise_std <= 0.0 {
        return Err(Error::NonPrivate);
    }
    if sensitivity < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "negative sensitivity {sensitivity}"
        )));
    }
    Ok(order as f64 * sensitivity * sensitivity / (2.0 * noise_std * noise_std))
}

/// RDP of one generator update over a batch of size `batch`: the
/// composition of `batch` per-sample mechanisms, each with sensitivity `2C`
/// and noise `sigma * C`, which is `2 * batch * order / sigma^2`.
pub fn step_rdp(batch: u32, sigma: f64, order: u32) -> Result<f64> {
    if batch == 0 {
        return Err(Error::EmptyBatch);
    }
    // Exactly batch copies of the per-sample Gaussian cost; the clip bound
    // cancels out of sensitivity^2 / std^2.
    Ok(batch as f64 * gaussian_rdp(2.0, sigma, order)?)
}

fn check_order(order: u32) -> Result<()> {
    if order < 2 {
        return Err(Error::InvalidConfig(format!(
            "Renyi order must be >= 2, got {order}"
        )));
    }
    Ok(())
}

/// Amplification by subsampling without replacement at rate `gamma`, for a
/// base mechanism given by its RDP curve `base(j)` on integer orders
/// `2..=order`.
///
/// The base mechanism is Gaussian, so its infinite-order divergence is
/// unbounded and every `min{., (e^eps(inf)-1)^j}` term in the bound
/// resolves to its constant branch: the order-2 term becomes
/// `min{4(e^eps(2) - 1), 2 e^eps(2)}` and the tail terms carry a factor 2.
pub fn amplify(gamma: f64, base: impl Fn(u32) -> f64, order: u32) -> Result<f64> {
    check_order(order)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidSamplingRate(gamma));
    }
    let log_gamma = gamma.ln();

    // log of 1 + gamma^2 C(order,2) min{4(e^e2 - 1), 2 e^e2}
    //          + sum_{j=3..order} gamma^j C(order,j) e^{(j-1) e(j)} * 2
    let mut total = 0.0f64; // log(1)
    let e2 = base(2);
    let order2_branch = if e2 > 0.0 {
        let a = (4.0f64).ln() + log_expm1(e2);
        let b = LN_2 + e2;
        a.min(b)
    } else {
        f64::NEG_INFINITY // e^0 - 1 = 0 wins the min
    };
    total = log_add(total, 2.0 * log_gamma + log_binomial(order, 2) + order2_branch);

    for j in 3..=order {
        let term =
            j as f64 * log_gamma + log_binomial(order, j) + (j - 1) as f64 * base(j) + LN_2;
        total = log_add(total, term);
    }
    Ok(total / (order - 1) as f64)
}

/// Convert one accumulated RDP value at `order` to an epsilon at `delta`.
pub fn rdp_to_dp_single(eps_rdp: f64, order: u32, delta: f64) -> f64 {
    eps_rdp + (1.0 / delta).ln() / (order - 1) as f64
}

/// One exported ledger record, written per accumulate call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub step: u64,
    pub gamma: f64,
    pub sigma: f64,
    pub batch: u32,
    /// Sparse view of the order grid: `(order, accumulated eps)`.
    pub eps_at_order: Vec<(u32, f64)>,
    pub delta: f64,
    /// Absent in non-private mode.
    pub dp_epsilon_at_delta: Option<f64>,
    pub non_private: bool,
}

/// Accumulated RDP over the order grid for one training run.
#[derive(Debug, Clone)]
pub struct PrivacyLedger {
    orders: Vec<u32>,
    eps_at_order: Vec<f64>,
    per_step: Vec<f64>,
    gamma: f64,
    sigma: f64,
    batch: u32,
    steps: u64,
    non_private: bool,
}

impl PrivacyLedger {
    /// Ledger for a private run. `gamma = 1` means no subsampling (a single
    /// shard queried every step); any `gamma < 1` routes through the
    /// amplification bound.
    pub fn new(gamma: f64, sigma: f64, batch: u32) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidSamplingRate(gamma));
        }
        if sigma <= 0.0 {
            return Err(Error::NonPrivate);
        }
        if batch == 0 {
            return Err(Error::EmptyBatch);
        }
        let orders = default_orders();
        let mut per_step = Vec::with_capacity(orders.len());
        for &order in &orders {
            let cost = if gamma < 1.0 {
                amplify(gamma, |j| step_rdp(batch, sigma, j).unwrap(), order)?
            } else {
                step_rdp(batch, sigma, order)?
            };
            per_step.push(cost);
        }
        Ok(PrivacyLedger {
            eps_at_order: vec![0.0; orders.len()],
            orders,
            per_step,
            gamma,
            sigma,
            batch,
            steps: 0,
            non_private: false,
        })
    }

    /// Ledger for a flagged non-private (sigma = 0) testing run: steps are
    /// counted, no epsilon is defined.
    pub fn new_non_private(gamma: f64, batch: u32) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidSamplingRate(gamma));
        }
        let orders = default_orders();
        Ok(PrivacyLedger {
            eps_at_order: vec![0.0; orders.len()],
            per_step: vec![0.0; orders.len()],
            orders,
            gamma,
            sigma: 0.0,
            batch,
            steps: 0,
            non_private: true,
        })
    }

    pub fn orders(&self) -> &[u32] {
        &self.orders
    }

    pub fn eps_at(&self, order: u32) -> Option<f64> {
        self.orders
            .iter()
            .position(|&o| o == order)
            .map(|i| self.eps_at_order[i])
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn batch(&self) -> u32 {
        self.batch
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn is_non_private(&self) -> bool {
        self.non_private
    }

    /// Charge `n_steps` composed generator updates.
    pub fn accumulate(&mut self, n_steps: u64) {
        for (acc, per) in self.eps_at_order.iter_mut().zip(&self.per_step) {
            *acc += n_steps as f64 * per;
        }
        self.steps += n_steps;
    }

    /// Best (epsilon, order) over the grid at the given delta, ties broken
    /// toward the smaller order.
    pub fn to_dp(&self, delta: f64) -> Result<(f64, u32)> {
        self.dp_after(0, delta)
    }

    /// Epsilon after `extra` further accumulations, without mutating the
    /// ledger. The budget guard looks one step ahead with this.
    pub fn dp_after(&self, extra: u64, delta: f64) -> Result<(f64, u32)> {
        if self.non_private {
            return Err(Error::NonPrivate);
        }
        if self.steps == 0 && extra == 0 {
            return Err(Error::EmptyLedger);
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidConfig(format!("delta {delta} not in (0, 1]")));
        }
        let mut best: Option<(f64, u32)> = None;
        for (i, &order) in self.orders.iter().enumerate() {
            let acc = self.eps_at_order[i] + extra as f64 * self.per_step[i];
            let eps = rdp_to_dp_single(acc, order, delta);
            match best {
                Some((b, _)) if eps >= b => {}
                _ => best = Some((eps, order)),
            }
        }
        Ok(best.expect("non-empty order grid"))
    }

    /// Snapshot for the JSON-lines export.
    pub fn record(&self, delta: f64) -> LedgerRecord {
        let sparse_orders = [2u32, 4, 8, 16, 32, 64, 128, 256];
        let eps_at_order = sparse_orders
            .iter()
            .filter_map(|&o| self.eps_at(o).map(|e| (o, e)))
            .collect();
        LedgerRecord {
            step: self.steps,
            gamma: self.gamma,
            sigma: self.sigma,
            batch: self.batch,
            eps_at_order,
            delta,
            dp_epsilon_at_delta: self.to_dp(delta).ok().map(|(e, _)| e),
            non_private: self.non_private,
        }
    }
}
