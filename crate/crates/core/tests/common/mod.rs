//! Shared test support: the high-precision amplification oracle.

use astro_float::{BigFloat, Consts, RoundingMode};

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

fn to_f64(x: &BigFloat) -> f64 {
    format!("{x}").parse().expect("bigfloat formats as a number")
}

/// Exact binomial coefficient in 256-bit floats; every intermediate is an
/// integer well below the precision limit for n <= 256.
fn binomial_big(n: u32, k: u32) -> BigFloat {
    let mut c = BigFloat::from_f64(1.0, PREC);
    for i in 1..=k {
        let num = BigFloat::from_f64((n - k + i) as f64, PREC);
        let den = BigFloat::from_f64(i as f64, PREC);
        c = c.mul(&num, PREC, RM).div(&den, PREC, RM);
    }
    c
}

/// Independent 256-bit evaluation of the subsampled-RDP bound for a
/// Gaussian base mechanism:
///
/// `(1/(order-1)) * ln(1 + gamma^2 C(order,2) min{4(e^{e2}-1), 2 e^{e2}}
///   + sum_{j=3..order} gamma^j C(order,j) e^{(j-1) e(j)} * 2)`
///
/// This evaluates the closed expression directly — no log-sum-exp — which
/// is exactly what the production code cannot afford to do in f64.
pub fn amplify_oracle(gamma: f64, base: impl Fn(u32) -> f64, order: u32) -> f64 {
    assert!(order >= 2);
    let mut cc = Consts::new().expect("constants cache");
    let one = BigFloat::from_f64(1.0, PREC);
    let two = BigFloat::from_f64(2.0, PREC);
    let four = BigFloat::from_f64(4.0, PREC);
    let g = BigFloat::from_f64(gamma, PREC);

    let mut total = one.clone();

    // gamma^2 * C(order, 2) * min{4(e^{e2} - 1), 2 e^{e2}}
    let e2 = BigFloat::from_f64(base(2), PREC).exp(PREC, RM, &mut cc);
    let branch_a = four.mul(&e2.sub(&one, PREC, RM), PREC, RM);
    let branch_b = two.mul(&e2, PREC, RM);
    let min_branch = if branch_a.cmp(&branch_b).unwrap_or(0) <= 0 {
        branch_a
    } else {
        branch_b
    };
    let g2 = g.mul(&g, PREC, RM);
    total = total.add(
        &g2.mul(&binomial_big(order, 2), PREC, RM)
            .mul(&min_branch, PREC, RM),
        PREC,
        RM,
    );

    // sum_{j=3..order} gamma^j C(order, j) e^{(j-1) e(j)} * 2
    for j in 3..=order {
        let mut gj = one.clone();
        for _ in 0..j {
            gj = gj.mul(&g, PREC, RM);
        }
        let exponent = BigFloat::from_f64((j - 1) as f64 * base(j), PREC);
        let term = gj
            .mul(&binomial_big(order, j), PREC, RM)
            .mul(&exponent.exp(PREC, RM, &mut cc), PREC, RM)
            .mul(&two, PREC, RM);
        total = total.add(&term, PREC, RM);
    }

    let log_total = total.ln(PREC, RM, &mut cc);
    let denom = BigFloat::from_f64((order - 1) as f64, PREC);
    to_f64(&log_total.div(&denom, PREC, RM))
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
