//! Monte Carlo engine for the batch-generation protocol, plus the
//! deterministic sample-path checks behind the replication and splitting
//! results.
//!
//! Every replication `i` owns ChaCha stream `i` of the master seed, and
//! replication totals are reduced in index order, so the estimate does not
//! depend on how rayon schedules the work.

use std::fmt;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::service::{BatchTaskLaw, ServiceModel};

pub const DEFAULT_SAMPLES: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    /// Worker count.
    pub n: u64,
    /// Job size in CUs.
    pub j: u64,
}

impl SystemSpec {
    pub fn new(n: u64, j: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "worker count must be >= 1"));
        }
        if j == 0 {
            return Err(Error::invalid("j", "job size must be >= 1"));
        }
        Ok(Self { n, j })
    }

    /// Job scale factor `J / n`.
    pub fn l(&self) -> f64 {
        self.j as f64 / self.n as f64
    }
}

/// A redundancy level `k` and batch size `b` that are feasible for a given
/// [`SystemSpec`]: `k | J` and `b | J/k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Policy {
    pub k: u64,
    pub b: u64,
    /// Task size `J / k`.
    pub s: u64,
    /// Generation count `s / b`.
    pub g: u64,
    n: u64,
}

impl Policy {
    pub fn new(spec: &SystemSpec, k: u64, b: u64) -> Result<Self> {
        if k == 0 || k > spec.n {
            return Err(Error::Infeasible(format!(
                "need 1 <= k <= n, got k={k}, n={}",
                spec.n
            )));
        }
        if !spec.j.is_multiple_of(k) {
            return Err(Error::Infeasible(format!(
                "k must divide the job size: {} mod {k} = {}",
                spec.j,
                spec.j % k
            )));
        }
        let s = spec.j / k;
        if b == 0 || b > s {
            return Err(Error::Infeasible(format!(
                "need 1 <= b <= s, got b={b}, s={s}"
            )));
        }
        if !s.is_multiple_of(b) {
            return Err(Error::Infeasible(format!(
                "b must divide the task size: s mod b = {s} mod {b} = {}",
                s % b
            )));
        }
        Ok(Self {
            k,
            b,
            s,
            g: s / b,
            n: spec.n,
        })
    }

    /// Code rate `k / n`.
    pub fn r(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(k={}, b={})", self.k, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    Quadrature,
    Asymptotic,
    Exact,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MonteCarlo => "monte_carlo",
            Method::Quadrature => "quadrature",
            Method::Asymptotic => "asymptotic",
            Method::Exact => "exact",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "monte_carlo" => Ok(Method::MonteCarlo),
            "quadrature" => Ok(Method::Quadrature),
            "asymptotic" => Ok(Method::Asymptotic),
            "exact" => Ok(Method::Exact),
            other => Err(Error::invalid(
                "estimator",
                format!(
                    "unknown `{other}` (expected monte_carlo, quadrature, asymptotic or exact)"
                ),
            )),
        }
    }
}

/// Expected job completion time as produced by one estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompletionEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: u64,
    pub method: Method,
}

impl CompletionEstimate {
    pub fn deterministic(mean: f64, method: Method) -> Self {
        Self {
            mean,
            std_err: 0.0,
            samples: 0,
            method,
        }
    }
}

/// One replication: `G` generations, each finished by the `k`-th fastest of `n` batches.
fn replicate(
    law: &BatchTaskLaw,
    n: usize,
    k: usize,
    g: u64,
    rng: &mut ChaCha8Rng,
    times: &mut Vec<f64>,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..g {
        times.clear();
        times.extend((0..n).map(|_| law.sample(rng)));
        let (_, kth, _) = times.select_nth_unstable_by(k - 1, f64::total_cmp);
        total += *kth;
    }
    total
}

/// Random stream for replication `index` under `seed`.
pub fn replication_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo estimate of the expected job completion time.
pub fn simulate_ejct(
    spec: &SystemSpec,
    policy: &Policy,
    model: &ServiceModel,
    samples: u64,
    seed: u64,
) -> Result<CompletionEstimate> {
    let policy = Policy::new(spec, policy.k, policy.b)?;
    if samples == 0 {
        return Err(Error::invalid("samples", "need at least one replication"));
    }
    let law = BatchTaskLaw::new(*model, policy.b)?;
    let n = spec.n as usize;
    let k = policy.k as usize;

    let totals: Vec<f64> = (0..samples)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |times, i| {
                let mut rng = replication_rng(seed, i);
                replicate(&law, n, k, policy.g, &mut rng, times)
            },
        )
        .collect();

    let count = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / count;
    let std_err = if totals.len() > 1 {
        let ss: f64 = totals.iter().map(|x| (x - mean) * (x - mean)).sum();
        (ss / (count - 1.0)).sqrt() / count.sqrt()
    } else {
        0.0
    };
    Ok(CompletionEstimate {
        mean,
        std_err,
        samples,
        method: Method::MonteCarlo,
    })
}

/// Partition of matrix columns into contiguous blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    blocks: Vec<Range<usize>>,
}

impl Grouping {
    /// Checks that `blocks` are non-empty, contiguous, and cover `0..columns`.
    pub fn new(blocks: Vec<Range<usize>>, columns: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("grouping", "no blocks"));
        }
        let mut next = 0;
        for (i, block) in blocks.iter().enumerate() {
            if block.start != next {
                return Err(Error::invalid(
                    "grouping",
                    format!(
                        "block {i} starts at column {} but column {next} is next",
                        block.start
                    ),
                ));
            }
            if block.end <= block.start {
                return Err(Error::invalid("grouping", format!("block {i} is empty")));
            }
            next = block.end;
        }
        if next != columns {
            return Err(Error::invalid(
                "grouping",
                format!("blocks cover {next} columns, matrix has {columns}"),
            ));
        }
        Ok(Self { blocks })
    }

    /// `columns / width` blocks of equal width.
    pub fn uniform(columns: usize, width: usize) -> Result<Self> {
        if width == 0 || !columns.is_multiple_of(width) {
            return Err(Error::invalid(
                "grouping",
                format!("block width {width} does not divide {columns} columns"),
            ));
        }
        let blocks = (0..columns / width)
            .map(|i| i * width..(i + 1) * width)
            .collect();
        Self::new(blocks, columns)
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }
}

/// Outcome of a sample-path inequality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathCheck {
    pub holds: bool,
    /// Extremum over workers of the full row totals.
    pub lhs: f64,
    /// Sum over blocks of the per-block extremum.
    pub rhs: f64,
}

fn check_matrix(matrix: &[Vec<f64>], grouping: &Grouping) -> Result<()> {
    let first = matrix
        .first()
        .ok_or_else(|| Error::invalid("cu_matrix", "no rows"))?;
    let columns = first.len();
    if matrix.iter().any(|row| row.len() != columns) {
        return Err(Error::invalid("cu_matrix", "rows have different lengths"));
    }
    if matrix
        .iter()
        .flatten()
        .any(|x| !(x.is_finite() && *x >= 0.0))
    {
        return Err(Error::invalid(
            "cu_matrix",
            "entries must be finite and >= 0",
        ));
    }
    let covered = grouping.blocks.last().map_or(0, |b| b.end);
    if covered != columns {
        return Err(Error::invalid(
            "grouping",
            format!("blocks cover {covered} columns, matrix has {columns}"),
        ));
    }
    Ok(())
}

/// Per-row block sums, and row totals formed by summing those block sums in
/// block order. Building the totals from the same partial sums keeps the
/// inequalities exact in floating point, since rounded addition is monotone.
fn block_sums(matrix: &[Vec<f64>], grouping: &Grouping) -> (Vec<Vec<f64>>, Vec<f64>) {
    let sums: Vec<Vec<f64>> = matrix
        .iter()
        .map(|row| {
            grouping
                .blocks
                .iter()
                .map(|b| row[b.clone()].iter().sum())
                .collect()
        })
        .collect();
    let totals = sums.iter().map(|s| s.iter().sum()).collect();
    (sums, totals)
}

fn fold_extreme(values: impl Iterator<Item = f64>, pick_min: bool) -> f64 {
    values.fold(
        if pick_min {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        },
        |acc, x| {
            if pick_min {
                acc.min(x)
            } else {
                acc.max(x)
            }
        },
    )
}

fn extremes(matrix: &[Vec<f64>], grouping: &Grouping, pick_min: bool) -> Result<(f64, f64)> {
    check_matrix(matrix, grouping)?;
    let (sums, totals) = block_sums(matrix, grouping);
    let lhs = fold_extreme(totals.into_iter(), pick_min);
    let rhs = (0..grouping.blocks.len())
        .map(|c| fold_extreme(sums.iter().map(|row| row[c]), pick_min))
        .sum();
    Ok((lhs, rhs))
}

/// `min_i sum_c x_ic >= sum_blocks min_i sum_{c in block} x_ic`.
///
/// Rows are workers, columns are CUs; the left side is the one-generation
/// replication time and the right side the time with one generation per block.
pub fn check_min_superadditivity(matrix: &[Vec<f64>], grouping: &Grouping) -> Result<PathCheck> {
    let (lhs, rhs) = extremes(matrix, grouping, true)?;
    Ok(PathCheck {
        holds: lhs >= rhs,
        lhs,
        rhs,
    })
}

/// `max_i sum_c x_ic <= sum_blocks max_i sum_{c in block} x_ic`.
pub fn check_max_subadditivity(matrix: &[Vec<f64>], grouping: &Grouping) -> Result<PathCheck> {
    let (lhs, rhs) = extremes(matrix, grouping, false)?;
    Ok(PathCheck {
        holds: lhs <= rhs,
        lhs,
        rhs,
    })
}
