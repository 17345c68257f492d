//! Deterministic evaluators of the expected job completion time.
//!
//! * [`asymptotic_ejct`]: the large-`n` closed form for shifted-exponential CUs,
//!   `l*delta/R + l*W*m/(R*b)` with `P(b, m) = R`.
//! * [`quadrature_ejct`]: exact finite-`n` value, integrating the survival
//!   function of the `k`-th order statistic of `n` shifted Erlang batch times.
//! * [`exact_b1_ejct`], [`exact_bimodal_ejct`]: closed-form / enumeration oracles.
//!
//! Also hosts the code-rate threshold solver and the batch-size derivative scan.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::service::{BatchTaskLaw, ServiceModel};
use crate::special::{
    binomial_tails, check_order, gamma_pq, harmonic_or_zero, inverse_gamma_p, std_normal_quantile,
};

/// Survival probability below which the integration range is cut.
const SURVIVAL_CUTOFF: f64 = 1e-12;
/// Relative accuracy target for the quadrature.
const QUAD_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticResult {
    pub expected_time: f64,
    /// Root of `P(b, m) = R`.
    pub m: f64,
    /// `m / (R b)`.
    pub f_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub m1: f64,
    pub r_prime: f64,
}

fn shifted_exponential(model: &ServiceModel, what: &str) -> Result<(f64, f64)> {
    model.validate()?;
    match *model {
        ServiceModel::ShiftedExponential { delta, w } => Ok((delta, w)),
        ServiceModel::BiModal { .. } => Err(Error::Unsupported(format!(
            "{what} is defined for the shifted exponential model only"
        ))),
    }
}

fn positive(name: &str, v: u64) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(name, "must be a positive integer"));
    }
    Ok(())
}

/// Large-`n` expected job completion time for shifted-exponential CUs.
pub fn asymptotic_ejct(model: &ServiceModel, l: f64, r: f64, b: u64) -> Result<AsymptoticResult> {
    let (delta, w) = shifted_exponential(model, "asymptotic formula")?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::invalid(
            "l",
            format!("job scale factor must be positive, got {l}"),
        ));
    }
    positive("b", b)?;
    let m = inverse_gamma_p(r, b)?;
    let f_value = m / (r * b as f64);
    Ok(AsymptoticResult {
        expected_time: l * delta / r + l * w * f_value,
        m,
        f_value,
    })
}

/// `P(Y_{k:n} > t)` for `n` i.i.d. Gamma(b, 1) draws.
fn erlang_order_survival(k: u64, n: u64, b: u64, t: f64) -> f64 {
    let (p, q) = gamma_pq(b, t);
    binomial_tails(k, n, p, q).below
}

/// `E[Y_{k:n}]` for `n` i.i.d. Gamma(b, 1) draws.
pub(crate) fn erlang_order_mean(k: u64, n: u64, b: u64) -> Result<f64> {
    let survival = |t: f64| erlang_order_survival(k, n, b, t);

    let bf = b as f64;
    let mut upper = bf + 10.0 * bf.sqrt() + 10.0;
    while survival(upper) >= SURVIVAL_CUTOFF {
        upper *= 2.0;
        if !upper.is_finite() {
            return Err(Error::Numerical(
                "survival function never falls below cutoff".into(),
            ));
        }
    }

    let coarse = composite_simpson(&survival, 0.0, upper, 256);
    if !(coarse > 0.0 && coarse.is_finite()) {
        return Err(Error::Numerical(format!(
            "degenerate integral estimate {coarse}"
        )));
    }
    let segments = 64;
    let tol = 0.1 * QUAD_RTOL * coarse / segments as f64;
    let width = upper / segments as f64;
    let mut total = 0.0;
    for i in 0..segments {
        let a = i as f64 * width;
        let z = if i + 1 == segments { upper } else { a + width };
        total += adaptive_simpson(&survival, a, z, tol);
    }
    if !total.is_finite() {
        return Err(Error::Numerical(
            "quadrature produced a non-finite value".into(),
        ));
    }
    Ok(total)
}

fn composite_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let x = a + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    sum * h / 3.0
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let c = 0.5 * (a + b);
    let (fa, fb, fc) = (f(a), f(b), f(c));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fc + fb);
    simpson_step(f, a, b, fa, fc, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fc: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let c = 0.5 * (a + b);
    let d = 0.5 * (a + c);
    let e = 0.5 * (c + b);
    let (fd, fe) = (f(d), f(e));
    let left = (c - a) / 6.0 * (fa + 4.0 * fd + fc);
    let right = (b - c) / 6.0 * (fc + 4.0 * fe + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, c, fa, fd, fc, left, 0.5 * tol, depth - 1)
        + simpson_step(f, c, b, fc, fe, fb, right, 0.5 * tol, depth - 1)
}

/// Exact finite-`n` expected job completion time `G * E[Y^b_{k:n}]` for
/// shifted-exponential CUs, by quadrature of the order-statistic survival function.
pub fn quadrature_ejct(model: &ServiceModel, n: u64, k: u64, b: u64, g: u64) -> Result<f64> {
    let (delta, w) = match shifted_exponential(model, "quadrature") {
        Ok(v) => v,
        Err(Error::Unsupported(_)) => {
            return Err(Error::Unsupported(
                "quadrature covers the shifted exponential model; use exact_bimodal_ejct".into(),
            ))
        }
        Err(e) => return Err(e),
    };
    check_order(k, n)?;
    positive("b", b)?;
    positive("G", g)?;
    let excess = erlang_order_mean(k, n, b)?;
    Ok(g as f64 * (b as f64 * delta + w * excess))
}

/// Closed form at `b = 1`: `G (delta + W (H_n - H_{n-k}))`.
pub fn exact_b1_ejct(model: &ServiceModel, n: u64, k: u64, g: u64) -> Result<f64> {
    let (delta, w) = shifted_exponential(model, "exact b=1 formula")?;
    check_order(k, n)?;
    positive("G", g)?;
    let spread = harmonic_or_zero(n) - harmonic_or_zero(n - k);
    Ok(g as f64 * (delta + w * spread))
}

/// Exact `G * E[Y^b_{k:n}]` for bi-modal CUs.
///
/// The batch law lives on `b + 1` points, so the order statistic's mean is a
/// finite sum over the survival probabilities at those points.
pub fn exact_bimodal_ejct(model: &ServiceModel, n: u64, k: u64, b: u64, g: u64) -> Result<f64> {
    model.validate()?;
    let (t_fast, t_slow, eps) = match *model {
        ServiceModel::BiModal {
            t_fast,
            t_slow,
            eps,
        } => (t_fast, t_slow, eps),
        ServiceModel::ShiftedExponential { .. } => {
            return Err(Error::Unsupported(
                "exact enumeration covers the bi-modal model; use quadrature_ejct".into(),
            ))
        }
    };
    check_order(k, n)?;
    positive("b", b)?;
    positive("G", g)?;
    let law = BatchTaskLaw::new(*model, b)?;
    let gap = t_slow - t_fast;
    let mut mean = law.bimodal_support(0);
    if gap > 0.0 {
        for j in 0..b {
            // F(y_j) = P(at most j slow CUs), complement kept separately
            let slow = binomial_tails(j + 1, b, eps, 1.0 - eps);
            let survival = binomial_tails(k, n, slow.below, slow.at_least).below;
            mean += gap * survival;
        }
    }
    Ok(g as f64 * mean)
}

/// Solves `e^m = 1 + 2m` on `m > 0` and returns `R' = 1 - e^{-m}`.
pub fn solve_r_prime() -> Result<ThresholdResult> {
    let g = |m: f64| m.exp_m1() - 2.0 * m;
    let (mut lo, mut hi) = (0.5f64, 3.0f64);
    if !(g(lo) < 0.0 && g(hi) > 0.0) {
        return Err(Error::Numerical(format!(
            "threshold bracket has unexpected signs: g({lo})={}, g({hi})={}",
            g(lo),
            g(hi)
        )));
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let m1 = 0.5 * (lo + hi);
    Ok(ThresholdResult {
        m1,
        r_prime: -(-m1).exp_m1(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
    Zero,
    Undefined,
}

impl Sign {
    fn of(x: f64) -> Self {
        if x.is_nan() {
            Sign::Undefined
        } else if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Shape of `f(b, R)` along the scanned grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    /// Rises then falls, with a single sign change.
    Unimodal,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub b: u64,
    pub m: f64,
    pub f_value: f64,
    /// Sign of the normal-approximation derivative.
    pub approx_sign: Sign,
    /// Sign of the finite difference of `f` toward the next grid point
    /// (the previous one for the last row).
    pub fd_sign: Sign,
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeScan {
    pub r: f64,
    pub rows: Vec<ScanRow>,
    pub trend: Trend,
    /// Rows where the approximate derivative sign disagrees with the finite difference.
    pub discrepancies: usize,
}

impl DerivativeScan {
    /// Grid point with the smallest `f`, first one on ties.
    pub fn argmin(&self) -> u64 {
        let mut best = &self.rows[0];
        for row in &self.rows[1..] {
            if row.f_value < best.f_value {
                best = row;
            }
        }
        best.b
    }
}

/// Evaluates `f(b, R) = m / (R b)` over `b_grid` and the sign of its
/// normal-approximation derivative `(2 sqrt(m) / (Z + 2 sqrt(m)) - m/b) / (R b)`.
pub fn f_derivative_scan(r: f64, b_grid: &[u64]) -> Result<DerivativeScan> {
    if b_grid.is_empty() {
        return Err(Error::invalid("b_grid", "grid is empty"));
    }
    if b_grid[0] == 0 || b_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "b_grid",
            "must be strictly ascending with values >= 1",
        ));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("R", format!("must lie in (0, 1), got {r}")));
    }
    let z = std_normal_quantile(1.0 - r)?;

    let mut rows = Vec::with_capacity(b_grid.len());
    for &b in b_grid {
        let m = inverse_gamma_p(r, b)?;
        let bf = b as f64;
        let root = 2.0 * m.sqrt();
        let approx = if z + root > 0.0 {
            (root / (z + root) - m / bf) / (r * bf)
        } else {
            f64::NAN
        };
        rows.push(ScanRow {
            b,
            m,
            f_value: m / (r * bf),
            approx_sign: Sign::of(approx),
            fd_sign: Sign::Undefined,
            agrees: false,
        });
    }

    let diffs: Vec<f64> = rows
        .windows(2)
        .map(|w| w[1].f_value - w[0].f_value)
        .collect();
    for (i, row) in rows.iter_mut().enumerate() {
        row.fd_sign = match diffs.len() {
            0 => Sign::Undefined,
            len => Sign::of(diffs[i.min(len - 1)]),
        };
        row.agrees = row.approx_sign == row.fd_sign;
    }
    let discrepancies = rows.iter().filter(|r| !r.agrees).count();

    Ok(DerivativeScan {
        r,
        rows,
        trend: classify(&diffs),
        discrepancies,
    })
}

fn classify(diffs: &[f64]) -> Trend {
    if diffs.is_empty() || diffs.iter().any(|d| *d == 0.0 || d.is_nan()) {
        return Trend::Other;
    }
    if diffs.iter().all(|d| *d > 0.0) {
        return Trend::Increasing;
    }
    if diffs.iter().all(|d| *d < 0.0) {
        return Trend::Decreasing;
    }
    let changes = diffs
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    if changes == 1 && diffs[0] > 0.0 {
        Trend::Unimodal
    } else {
        Trend::Other
    }
}
