//! Log-space scalar helpers for the accountant.

use statrs::function::gamma::ln_gamma;

/// Stable `log(exp(a) + exp(b))`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    (lo - hi).exp().ln_1p() + hi
}

/// Stable `log(exp(x) - 1)` for `x > 0`.
pub fn log_expm1(x: f64) -> f64 {
    assert!(x > 0.0, "log_expm1 needs x > 0, got {x}");
    if x < 700.0 {
        x.exp_m1().ln()
    } else {
        // exp(x) - 1 = exp(x) * (1 - exp(-x)); the second factor is 1 here.
        x
    }
}

/// `log C(n, k)` via log-gamma.
pub fn log_binomial(n: u32, k: u32) -> f64 {
    assert!(k <= n, "binomial with k > n");
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}
