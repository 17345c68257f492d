//! Special functions for integer-shape gamma laws and their order statistics.
//!
//! Everything here is built on two accurately evaluated probability mass
//! functions (Poisson and binomial) in Loader's saddle-point form. Tail sums
//! always start at the term nearest the mode and walk outward, so each sum
//! is a sequence of decreasing positive terms and never cancels.

use std::f64::consts::PI;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Relative size below which a decreasing tail term no longer changes the sum.
const TAIL_CUTOFF: f64 = 1e-17;

/// A point `(b, m, P(b, m))` on the regularized lower incomplete gamma surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPoint {
    pub b: u64,
    pub m: f64,
    pub p: f64,
}

impl GammaPoint {
    /// Evaluates `P(b, m)`.
    pub fn at(b: u64, m: f64) -> Result<Self> {
        let p = regularized_gamma_p(b, m)?;
        Ok(Self { b, m, p })
    }

    /// Finds the `m` with `P(b, m) = p`.
    pub fn solve(p: f64, b: u64) -> Result<Self> {
        let m = inverse_gamma_p(p, b)?;
        Ok(Self { b, m, p })
    }
}

/// Error term of Stirling's approximation, `ln n! - ln(sqrt(2 pi n) (n/e)^n)`.
fn stirlerr(n: u64) -> f64 {
    if n <= 15 {
        let nf = n as f64;
        let fact: f64 = (1..=n).map(|i| i as f64).product();
        fact.ln() - (0.5 * (2.0 * PI * nf).ln() + nf * nf.ln() - nf)
    } else {
        const S0: f64 = 1.0 / 12.0;
        const S1: f64 = 1.0 / 360.0;
        const S2: f64 = 1.0 / 1260.0;
        const S3: f64 = 1.0 / 1680.0;
        const S4: f64 = 1.0 / 1188.0;
        let nf = n as f64;
        let nn = nf * nf;
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/np) + np - x`, accurate when `x` is close to `np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Poisson probability `e^{-m} m^k / k!`.
pub(crate) fn poisson_pmf(k: u64, m: f64) -> f64 {
    if m == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if k == 0 {
        return (-m).exp();
    }
    let kf = k as f64;
    (-stirlerr(k) - bd0(kf, m)).exp() / (2.0 * PI * kf).sqrt()
}

/// Binomial probability `C(n,x) p^x q^{n-x}` with `q = 1 - p` passed separately.
pub(crate) fn binomial_pmf(x: u64, n: u64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if x == 0 { 1.0 } else { 0.0 };
    }
    if q == 0.0 {
        return if x == n { 1.0 } else { 0.0 };
    }
    let nf = n as f64;
    if x == 0 {
        if n == 0 {
            return 1.0;
        }
        let lc = if p < 0.1 {
            -bd0(nf, nf * q) - nf * p
        } else {
            nf * q.ln()
        };
        return lc.exp();
    }
    if x == n {
        let lc = if q < 0.1 {
            -bd0(nf, nf * p) - nf * q
        } else {
            nf * p.ln()
        };
        return lc.exp();
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = (2.0 * PI).ln() + xf.ln() + (-xf / nf).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// Split of a discrete law at a threshold: `below = P(N < t)`, `at_least = P(N >= t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tails {
    pub below: f64,
    pub at_least: f64,
}

impl Tails {
    fn from_below(below: f64) -> Self {
        let below = below.clamp(0.0, 1.0);
        Self {
            below,
            at_least: 1.0 - below,
        }
    }

    fn from_at_least(at_least: f64) -> Self {
        let at_least = at_least.clamp(0.0, 1.0);
        Self {
            below: 1.0 - at_least,
            at_least,
        }
    }
}

/// Sums a run of decreasing terms produced by `next` until they stop mattering.
fn sum_decreasing(first: f64, max_terms: u64, mut next: impl FnMut(u64, f64) -> f64) -> f64 {
    let mut term = first;
    let mut sum = 0.0;
    let mut i = 0;
    loop {
        sum += term;
        i += 1;
        if term == 0.0 || term <= sum * TAIL_CUTOFF || i >= max_terms {
            return sum;
        }
        term = next(i, term);
    }
}

/// `(P(b, m), Q(b, m))` for a Poisson(m) count split at `b`. No validation.
pub(crate) fn gamma_pq(b: u64, m: f64) -> (f64, f64) {
    if m <= 0.0 {
        return (0.0, 1.0);
    }
    if m.is_infinite() {
        return (1.0, 0.0);
    }
    let mode = m.floor();
    let tails = if ((b - 1) as f64) < mode {
        // lower tail k = b-1, b-2, ..., 0 lies left of the mode
        let start = b - 1;
        let below = sum_decreasing(poisson_pmf(start, m), b, |i, t| {
            let k = start + 1 - i; // index of the previous term
            t * k as f64 / m
        });
        Tails::from_below(below)
    } else {
        let at_least = sum_decreasing(poisson_pmf(b, m), u64::MAX, |i, t| {
            let k = b + i - 1;
            t * m / (k + 1) as f64
        });
        Tails::from_at_least(at_least)
    };
    (tails.at_least, tails.below)
}

/// Regularized lower incomplete gamma function with integer shape,
/// `P(b, m) = 1 - e^{-m} sum_{k<b} m^k / k!`.
pub fn regularized_gamma_p(b: u64, m: f64) -> Result<f64> {
    check_gamma_args(b, m)?;
    Ok(gamma_pq(b, m).0)
}

/// Upper complement `Q(b, m) = 1 - P(b, m)`, computed without cancellation.
pub fn regularized_gamma_q(b: u64, m: f64) -> Result<f64> {
    check_gamma_args(b, m)?;
    Ok(gamma_pq(b, m).1)
}

fn check_gamma_args(b: u64, m: f64) -> Result<()> {
    if b == 0 {
        return Err(Error::invalid("b", "shape must be a positive integer"));
    }
    if m.is_nan() || m < 0.0 {
        return Err(Error::invalid("m", format!("must be >= 0, got {m}")));
    }
    Ok(())
}

/// Solves `P(b, m) = r` for `m`.
///
/// Newton steps seeded from the normal approximation of the Poisson count,
/// kept inside a bisection bracket so a bad step can never escape.
pub fn inverse_gamma_p(r: f64, b: u64) -> Result<f64> {
    if b == 0 {
        return Err(Error::invalid("b", "shape must be a positive integer"));
    }
    if r == 1.0 {
        return Err(Error::invalid(
            "R",
            "undefined at R=1 (the root m is infinite)",
        ));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("R", format!("must lie in (0, 1), got {r}")));
    }
    if b == 1 {
        return Ok(-(-r).ln_1p());
    }

    let p_at = |m: f64| gamma_pq(b, m).0;

    let z = std_normal_quantile(1.0 - r)?;
    let shape = (b - 1) as f64;
    let root = 0.5 * (-z + (z * z + 4.0 * shape).sqrt());
    let mut m = root * root;
    if !(m.is_finite() && m > 0.0) {
        m = shape.max(1.0);
    }

    let (mut lo, mut hi);
    if p_at(m) < r {
        lo = m;
        hi = 2.0 * m + 1.0;
        while p_at(hi) < r {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::Numerical(format!(
                    "no upper bracket for P({b}, m) = {r}"
                )));
            }
        }
    } else {
        hi = m;
        lo = 0.5 * m;
        while lo > f64::MIN_POSITIVE && p_at(lo) >= r {
            hi = lo;
            lo *= 0.5;
        }
        if p_at(lo) >= r {
            lo = 0.0;
        }
    }
    m = m.clamp(lo, hi);

    for _ in 0..200 {
        let diff = p_at(m) - r;
        if diff.abs() <= 1e-15 {
            break;
        }
        if diff < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        let slope = poisson_pmf(b - 1, m);
        let newton = m - diff / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - m).abs() <= 4.0 * f64::EPSILON * m.abs().max(f64::MIN_POSITIVE);
        m = next;
        if done {
            break;
        }
    }

    let residual = (p_at(m) - r).abs();
    if residual > 1e-10 {
        return Err(Error::Numerical(format!(
            "inverse of P({b}, m) = {r} did not converge (residual {residual:e})"
        )));
    }
    Ok(m)
}

/// Complementary error function.
///
/// Positive-term series for `erf` near zero, Lentz continued fraction beyond;
/// both keep full relative precision in the tails.
fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x > 27.3 {
        return 0.0;
    }
    let x2 = x * x;
    let scale = (-x2).exp() / PI.sqrt();
    if x < 1.5 {
        // erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= 2.0 * x2 / (2.0 * n + 1.0);
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        return 1.0 - 2.0 * scale * sum;
    }
    // x + (1/2)/(x + (2/2)/(x + (3/2)/(x + ...)))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..10_000 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { 1.0 / tiny } else { 1.0 / d };
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let step = c * d;
        f *= step;
        if (step - 1.0).abs() <= 1e-16 {
            break;
        }
    }
    scale / f
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal quantile, polished with Newton steps against [`std_normal_cdf`].
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", format!("must lie in (0, 1), got {p}")));
    }
    let mut z = Normal::standard().inverse_cdf(p);
    for _ in 0..2 {
        let density = std_normal_pdf(z);
        if !(density > 0.0 && z.is_finite()) {
            break;
        }
        z -= (std_normal_cdf(z) - p) / density;
    }
    Ok(z)
}

/// Batch size implied by a Poisson rate `m` under the normal approximation,
/// `Z sqrt(m) + m + 1` with `Phi(Z) = 1 - r`.
pub fn batch_from_m_normal_approx(m: f64, r: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::invalid("m", format!("must be positive, got {m}")));
    }
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("R", format!("must lie in (0, 1), got {r}")));
    }
    let z = std_normal_quantile(1.0 - r)?;
    Ok(z * m.sqrt() + m + 1.0)
}

/// Splits Binomial(n, p) at `k`. `q` must equal `1 - p` but is passed in so
/// callers holding an accurate complement keep its precision.
pub(crate) fn binomial_tails(k: u64, n: u64, p: f64, q: f64) -> Tails {
    if k == 0 {
        return Tails {
            below: 0.0,
            at_least: 1.0,
        };
    }
    if k > n {
        return Tails {
            below: 1.0,
            at_least: 0.0,
        };
    }
    if p <= 0.0 {
        return Tails {
            below: 1.0,
            at_least: 0.0,
        };
    }
    if q <= 0.0 {
        return Tails {
            below: 0.0,
            at_least: 1.0,
        };
    }
    let mode = ((n + 1) as f64 * p).floor() as u64;
    let odds = p / q;
    if k <= mode {
        let start = k - 1;
        let below = sum_decreasing(binomial_pmf(start, n, p, q), k, |i, t| {
            let j = start + 1 - i;
            t * j as f64 / ((n - j + 1) as f64 * odds)
        });
        Tails::from_below(below)
    } else {
        let at_least = sum_decreasing(binomial_pmf(k, n, p, q), n - k + 1, |i, t| {
            let j = k + i - 1;
            t * (n - j) as f64 * odds / (j + 1) as f64
        });
        Tails::from_at_least(at_least)
    }
}

/// CDF of the `k`-th smallest of `n` i.i.d. draws whose common CDF value is `f`:
/// `sum_{j=k}^{n} C(n,j) f^j (1-f)^{n-j}`.
pub fn order_stat_cdf(k: u64, n: u64, f: f64) -> Result<f64> {
    check_order(k, n)?;
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::invalid("F", format!("must lie in [0, 1], got {f}")));
    }
    Ok(binomial_tails(k, n, f, 1.0 - f).at_least)
}

pub(crate) fn check_order(k: u64, n: u64) -> Result<()> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::invalid(
            "k",
            format!("need 1 <= k <= n, got k={k}, n={n}"),
        ));
    }
    Ok(())
}

/// `H_n = sum_{i=1}^{n} 1/i`.
pub fn harmonic(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "harmonic number needs n >= 1"));
    }
    Ok(harmonic_or_zero(n))
}

/// Harmonic number with `H_0 = 0`.
pub(crate) fn harmonic_or_zero(n: u64) -> f64 {
    (1..=n).rev().map(|i| 1.0 / i as f64).sum()
}
