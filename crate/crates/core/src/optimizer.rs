//! Exhaustive search over feasible `(k, b)` policies.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{asymptotic_ejct, exact_b1_ejct, exact_bimodal_ejct, quadrature_ejct};
use crate::error::{Error, Result};
use crate::service::ServiceModel;
use crate::simulator::{
    simulate_ejct, CompletionEstimate, Method, Policy, SystemSpec, DEFAULT_SAMPLES, DEFAULT_SEED,
};

/// Relative gap below which two deterministic values count as tied.
const TIE_RTOL: f64 = 1e-12;
/// Monte Carlo winners must lead by more than this many combined standard errors.
const MC_SEPARATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimOptions {
    pub samples: u64,
    pub seed: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
        }
    }
}

/// Divisors of `s`, ascending.
pub fn feasible_batches(s: u64) -> Vec<u64> {
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut d = 1;
    while d * d <= s {
        if s.is_multiple_of(d) {
            low.push(d);
            if d * d != s {
                high.push(s / d);
            }
        }
        d += 1;
    }
    low.extend(high.into_iter().rev());
    low
}

/// Redundancy parameters `1 <= k <= n` that split the job into equal tasks.
pub fn feasible_k(spec: &SystemSpec) -> Vec<u64> {
    (1..=spec.n).filter(|&k| spec.j.is_multiple_of(k)).collect()
}

/// Expected job completion time of one policy under the chosen estimator.
pub fn evaluate(
    spec: &SystemSpec,
    policy: &Policy,
    model: &ServiceModel,
    estimator: Method,
    sim: &SimOptions,
) -> Result<CompletionEstimate> {
    let policy = Policy::new(spec, policy.k, policy.b)?;
    let (n, k, b, g) = (spec.n, policy.k, policy.b, policy.g);
    match estimator {
        Method::MonteCarlo => simulate_ejct(spec, &policy, model, sim.samples, sim.seed),
        Method::Quadrature => quadrature_ejct(model, n, k, b, g)
            .map(|v| CompletionEstimate::deterministic(v, estimator)),
        Method::Asymptotic => {
            if k == n {
                return Err(Error::Unsupported(
                    "asymptotic estimator is undefined at R=1 (k=n); use quadrature".into(),
                ));
            }
            asymptotic_ejct(model, spec.l(), policy.r(), b)
                .map(|r| CompletionEstimate::deterministic(r.expected_time, estimator))
        }
        Method::Exact => {
            let value = match model {
                ServiceModel::BiModal { .. } => exact_bimodal_ejct(model, n, k, b, g)?,
                ServiceModel::ShiftedExponential { .. } if b == 1 => exact_b1_ejct(model, n, k, g)?,
                ServiceModel::ShiftedExponential { .. } => {
                    return Err(Error::Unsupported(format!(
                        "exact estimator for the shifted exponential model needs b = 1 (got b={b}); use quadrature"
                    )))
                }
            };
            Ok(CompletionEstimate::deterministic(value, estimator))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate {
    pub policy: Policy,
    pub estimate: CompletionEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationReport {
    pub best_policy: Policy,
    pub best_value: f64,
    pub table: Vec<Candidate>,
    pub estimator: Method,
    /// Only the endpoint batch sizes `{1, s}` were evaluated.
    pub restricted: bool,
    /// Monte Carlo only: the winner does not beat these candidates by the
    /// required margin, so the argmin is not statistically settled.
    pub inconclusive: bool,
    pub contenders: Vec<Policy>,
    /// Feasible policies the estimator cannot evaluate (asymptotic at R=1).
    pub excluded: Vec<Policy>,
}

impl OptimizationReport {
    fn build(
        table: Vec<Candidate>,
        estimator: Method,
        restricted: bool,
        excluded: Vec<Policy>,
    ) -> Result<Self> {
        let first = table
            .first()
            .ok_or_else(|| Error::Unsupported("no candidate policy could be evaluated".into()))?;
        // table is in tie-break order, so only a strict improvement replaces the incumbent
        let mut best = *first;
        for c in &table[1..] {
            if c.estimate.mean < best.estimate.mean - TIE_RTOL * best.estimate.mean.abs() {
                best = *c;
            }
        }
        let contenders: Vec<Policy> = if estimator == Method::MonteCarlo {
            table
                .iter()
                .filter(|c| c.policy != best.policy)
                .filter(|c| {
                    let se = (c.estimate.std_err.powi(2) + best.estimate.std_err.powi(2)).sqrt();
                    c.estimate.mean - best.estimate.mean <= MC_SEPARATION * se
                })
                .map(|c| c.policy)
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            best_policy: best.policy,
            best_value: best.estimate.mean,
            inconclusive: !contenders.is_empty(),
            contenders,
            table,
            estimator,
            restricted,
            excluded,
        })
    }
}

fn check_estimator(model: &ServiceModel, estimator: Method) -> Result<()> {
    model.validate()?;
    match (model, estimator) {
        (ServiceModel::BiModal { .. }, Method::Asymptotic) => Err(Error::Unsupported(
            "asymptotic formula defined for shifted exponential only".into(),
        )),
        (ServiceModel::BiModal { .. }, Method::Quadrature) => Err(Error::Unsupported(
            "quadrature covers the shifted exponential model; use the exact estimator".into(),
        )),
        _ => Ok(()),
    }
}

fn evaluate_all(
    spec: &SystemSpec,
    policies: &[Policy],
    model: &ServiceModel,
    estimator: Method,
    sim: &SimOptions,
) -> Result<Vec<Candidate>> {
    policies
        .par_iter()
        .map(|p| {
            evaluate(spec, p, model, estimator, sim).map(|estimate| Candidate {
                policy: *p,
                estimate,
            })
        })
        .collect()
}

/// Best batch size at a fixed redundancy level `k`.
///
/// With `restricted` only `b = 1` and `b = s` are compared. Ties go to the
/// smaller batch.
pub fn optimize_batch(
    spec: &SystemSpec,
    model: &ServiceModel,
    k: u64,
    estimator: Method,
    restricted: bool,
    sim: &SimOptions,
) -> Result<OptimizationReport> {
    check_estimator(model, estimator)?;
    if !feasible_k(spec).contains(&k) {
        return Err(Error::Infeasible(format!(
            "k={k} is not feasible for n={}, J={} (need 1 <= k <= n and k | J)",
            spec.n, spec.j
        )));
    }
    if estimator == Method::Asymptotic && k == spec.n {
        return Err(Error::Unsupported(
            "asymptotic estimator is undefined at R=1 (k=n); use quadrature".into(),
        ));
    }
    let s = spec.j / k;
    let batches = if restricted {
        if s == 1 {
            vec![1]
        } else {
            vec![1, s]
        }
    } else {
        feasible_batches(s)
    };
    let policies = batches
        .into_iter()
        .map(|b| Policy::new(spec, k, b))
        .collect::<Result<Vec<_>>>()?;
    let table = evaluate_all(spec, &policies, model, estimator, sim)?;
    OptimizationReport::build(table, estimator, restricted, Vec::new())
}

/// Every feasible `(k, b)` in tie-break order: smaller `k` first, then smaller `b`.
pub fn feasible_policies(spec: &SystemSpec) -> Vec<Policy> {
    feasible_k(spec)
        .into_iter()
        .flat_map(|k| {
            feasible_batches(spec.j / k).into_iter().map(move |b| {
                Policy::new(spec, k, b).expect("divisor enumeration yields feasible policies")
            })
        })
        .collect()
}

/// Joint minimization over code rate and batch size.
pub fn optimize_joint(
    spec: &SystemSpec,
    model: &ServiceModel,
    estimator: Method,
    sim: &SimOptions,
) -> Result<OptimizationReport> {
    check_estimator(model, estimator)?;
    let (policies, excluded): (Vec<Policy>, Vec<Policy>) = feasible_policies(spec)
        .into_iter()
        .partition(|p| !(estimator == Method::Asymptotic && p.k == spec.n));
    let table = evaluate_all(spec, &policies, model, estimator, sim)?;
    OptimizationReport::build(table, estimator, false, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ReplicationB1,
    SplittingBmax,
    CodingB1,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::ReplicationB1 => "replication_b1",
            Strategy::SplittingBmax => "splitting_bmax",
            Strategy::CodingB1 => "coding_b1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyValue {
    pub strategy: Strategy,
    pub policy: Policy,
    pub estimate: CompletionEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub winner: StrategyValue,
    pub replication_b1: Option<StrategyValue>,
    pub splitting_bmax: Option<StrategyValue>,
    /// Best `k` strictly between 1 and `n` at `b = 1`.
    pub coding_b1: Option<StrategyValue>,
    /// `W / delta` (infinite when `delta = 0`).
    pub w_over_delta: f64,
    pub l: f64,
}

/// Compares replication at `b = 1`, splitting at `b = s`, and the best coded
/// policy at `b = 1`, by direct evaluation.
pub fn recommend_strategy(
    spec: &SystemSpec,
    model: &ServiceModel,
    estimator: Method,
    sim: &SimOptions,
) -> Result<StrategyReport> {
    check_estimator(model, estimator)?;
    let (delta, w) =
        match *model {
            ServiceModel::ShiftedExponential { delta, w } => (delta, w),
            ServiceModel::BiModal { .. } => return Err(Error::Unsupported(
                "strategy recommendation covers the shifted exponential model; use optimize-joint"
                    .into(),
            )),
        };
    let value = |strategy, policy: Policy| -> Result<StrategyValue> {
        let estimate = evaluate(spec, &policy, model, estimator, sim)?;
        Ok(StrategyValue {
            strategy,
            policy,
            estimate,
        })
    };
    let undefined_at_one = |p: &Policy| estimator == Method::Asymptotic && p.k == spec.n;

    let replication = Some(Policy::new(spec, 1, 1)?)
        .filter(|p| !undefined_at_one(p))
        .map(|p| value(Strategy::ReplicationB1, p))
        .transpose()?;

    let splitting =
        if spec.n > 1 && spec.j.is_multiple_of(spec.n) && estimator != Method::Asymptotic {
            let p = Policy::new(spec, spec.n, spec.j / spec.n)?;
            Some(value(Strategy::SplittingBmax, p)?)
        } else {
            None
        };

    let coded: Vec<Policy> = feasible_k(spec)
        .into_iter()
        .filter(|&k| k > 1 && k < spec.n)
        .map(|k| Policy::new(spec, k, 1))
        .collect::<Result<_>>()?;
    let coding = if coded.is_empty() {
        None
    } else {
        let table = evaluate_all(spec, &coded, model, estimator, sim)?;
        let best = OptimizationReport::build(table, estimator, false, Vec::new())?;
        let estimate = best
            .table
            .iter()
            .find(|c| c.policy == best.best_policy)
            .map(|c| c.estimate)
            .expect("best policy is in its table");
        Some(StrategyValue {
            strategy: Strategy::CodingB1,
            policy: best.best_policy,
            estimate,
        })
    };

    // candidates in ascending k, matching the joint optimizer's tie-break
    let mut ordered: Vec<StrategyValue> = [replication, coding, splitting]
        .into_iter()
        .flatten()
        .collect();
    ordered.sort_by_key(|v| v.policy.k);
    let mut winner = *ordered
        .first()
        .ok_or_else(|| Error::Unsupported("no canonical strategy is feasible".into()))?;
    for v in &ordered[1..] {
        if v.estimate.mean < winner.estimate.mean - TIE_RTOL * winner.estimate.mean.abs() {
            winner = *v;
        }
    }

    Ok(StrategyReport {
        winner,
        replication_b1: replication,
        splitting_bmax: splitting,
        coding_b1: coding,
        w_over_delta: if delta == 0.0 {
            f64::INFINITY
        } else {
            w / delta
        },
        l: spec.l(),
    })
}
