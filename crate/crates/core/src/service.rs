//! Per-CU service-time laws and their additive scaling to batch tasks.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{binomial_tails, gamma_pq};

/// Service time of a single computing unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceModel {
    /// `delta + W * Exp(1)`.
    ShiftedExponential { delta: f64, w: f64 },
    /// `t_slow` with probability `eps`, otherwise `t_fast`.
    #[serde(rename = "bimodal")]
    BiModal { t_fast: f64, t_slow: f64, eps: f64 },
}

impl ServiceModel {
    pub fn shifted_exponential(delta: f64, w: f64) -> Result<Self> {
        let model = ServiceModel::ShiftedExponential { delta, w };
        model.validate()?;
        Ok(model)
    }

    pub fn bimodal(t_fast: f64, t_slow: f64, eps: f64) -> Result<Self> {
        let model = ServiceModel::BiModal {
            t_fast,
            t_slow,
            eps,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the parameter invariants. Errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ServiceModel::ShiftedExponential { delta, w } => {
                if !(delta >= 0.0 && delta.is_finite()) {
                    return Err(Error::invalid(
                        "delta",
                        format!("must be finite and >= 0, got {delta}"),
                    ));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::invalid(
                        "w",
                        format!("must be finite and > 0, got {w}"),
                    ));
                }
            }
            ServiceModel::BiModal {
                t_fast,
                t_slow,
                eps,
            } => {
                if !(t_fast > 0.0 && t_fast.is_finite()) {
                    return Err(Error::invalid(
                        "t_fast",
                        format!("must be finite and > 0, got {t_fast}"),
                    ));
                }
                if !(t_slow >= t_fast && t_slow.is_finite()) {
                    return Err(Error::invalid(
                        "t_slow",
                        format!("must be finite and >= t_fast ({t_fast}), got {t_slow}"),
                    ));
                }
                if !(0.0..=1.0).contains(&eps) {
                    return Err(Error::invalid(
                        "eps",
                        format!("must lie in [0, 1], got {eps}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Short tag used in output records.
    pub fn type_name(&self) -> &'static str {
        match self {
            ServiceModel::ShiftedExponential { .. } => "shifted_exponential",
            ServiceModel::BiModal { .. } => "bimodal",
        }
    }

    /// Parameters rendered as `key=value` pairs joined by `;`.
    pub fn params_string(&self) -> String {
        match *self {
            ServiceModel::ShiftedExponential { delta, w } => format!("delta={delta};w={w}"),
            ServiceModel::BiModal {
                t_fast,
                t_slow,
                eps,
            } => {
                format!("t_fast={t_fast};t_slow={t_slow};eps={eps}")
            }
        }
    }

    /// Mean time of one CU.
    pub fn mean(&self) -> f64 {
        match *self {
            ServiceModel::ShiftedExponential { delta, w } => delta + w,
            ServiceModel::BiModal {
                t_fast,
                t_slow,
                eps,
            } => t_fast + eps * (t_slow - t_fast),
        }
    }

    /// Draws the time of one CU.
    pub fn sample_cu<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ServiceModel::ShiftedExponential { delta, w } => {
                let e: f64 = Exp1.sample(rng);
                delta + w * e
            }
            ServiceModel::BiModal {
                t_fast,
                t_slow,
                eps,
            } => {
                if rng.random::<f64>() < eps {
                    t_slow
                } else {
                    t_fast
                }
            }
        }
    }
}

/// Law of a batch task of `b` CUs: the sum of `b` independent CU times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchTaskLaw {
    pub model: ServiceModel,
    pub b: u64,
}

impl BatchTaskLaw {
    pub fn new(model: ServiceModel, b: u64) -> Result<Self> {
        model.validate()?;
        if b == 0 {
            return Err(Error::invalid("b", "batch size must be a positive integer"));
        }
        Ok(Self { model, b })
    }

    /// Sum of `b` successive [`ServiceModel::sample_cu`] draws from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut total = 0.0;
        for _ in 0..self.b {
            total += self.model.sample_cu(rng);
        }
        total
    }

    pub fn mean(&self) -> f64 {
        self.b as f64 * self.model.mean()
    }

    /// Exact CDF of the batch time.
    ///
    /// Shifted exponential batches are `b*delta + W * Gamma(b, 1)`, so the CDF
    /// is `P(b, (y - b*delta) / W)`. Bi-modal batches take the value
    /// `b*t_fast + j*(t_slow - t_fast)` when `j ~ Binomial(b, eps)` CUs straggle.
    pub fn cdf(&self, y: f64) -> f64 {
        match self.model {
            ServiceModel::ShiftedExponential { delta, w } => {
                let shift = self.b as f64 * delta;
                if y < shift {
                    0.0
                } else {
                    gamma_pq(self.b, (y - shift) / w).0
                }
            }
            ServiceModel::BiModal { eps, .. } => match self.slow_count_at_or_below(y) {
                None => 0.0,
                Some(j) => binomial_tails(j + 1, self.b, eps, 1.0 - eps).below,
            },
        }
    }

    /// Support points of a bi-modal batch, `j = 0..=b` straggling CUs.
    pub(crate) fn bimodal_support(&self, j: u64) -> f64 {
        match self.model {
            ServiceModel::BiModal { t_fast, t_slow, .. } => {
                self.b as f64 * t_fast + j as f64 * (t_slow - t_fast)
            }
            ServiceModel::ShiftedExponential { .. } => f64::NAN,
        }
    }

    /// Largest straggler count whose support point is `<= y`.
    fn slow_count_at_or_below(&self, y: f64) -> Option<u64> {
        let (t_fast, t_slow) = match self.model {
            ServiceModel::BiModal { t_fast, t_slow, .. } => (t_fast, t_slow),
            ServiceModel::ShiftedExponential { .. } => return None,
        };
        if y < self.bimodal_support(0) {
            return None;
        }
        let gap = t_slow - t_fast;
        if gap == 0.0 {
            return Some(self.b);
        }
        let guess = ((y - self.b as f64 * t_fast) / gap).floor();
        let mut j = if guess.is_finite() {
            guess.clamp(0.0, self.b as f64) as u64
        } else {
            self.b
        };
        while j < self.b && self.bimodal_support(j + 1) <= y {
            j += 1;
        }
        while j > 0 && self.bimodal_support(j) > y {
            j -= 1;
        }
        Some(j)
    }
}

/// Draws one CU time.
pub fn sample_cu<R: Rng + ?Sized>(model: &ServiceModel, rng: &mut R) -> f64 {
    model.sample_cu(rng)
}

/// Draws one batch time.
pub fn sample_batch<R: Rng + ?Sized>(law: &BatchTaskLaw, rng: &mut R) -> f64 {
    law.sample(rng)
}

pub fn batch_cdf(law: &BatchTaskLaw, y: f64) -> f64 {
    law.cdf(y)
}

pub fn batch_mean(law: &BatchTaskLaw) -> f64 {
    law.mean()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn degenerate_bimodal_draws() {
        let mut rng = rng();
        let fast = ServiceModel::bimodal(1.0, 5.0, 0.0).unwrap();
        let slow = ServiceModel::bimodal(1.0, 5.0, 1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(fast.sample_cu(&mut rng), 1.0);
            assert_eq!(slow.sample_cu(&mut rng), 5.0);
        }
        let law = BatchTaskLaw::new(fast, 4).unwrap();
        for _ in 0..100 {
            assert_eq!(law.sample(&mut rng), 4.0);
        }
    }

    #[test]
    fn shifted_exponential_cu_mean() {
        let model = ServiceModel::shifted_exponential(2.0, 1.0).unwrap();
        let mut rng = rng();
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let x = model.sample_cu(&mut rng);
            assert!(x >= 2.0);
            sum += x;
        }
        assert!((sum / n as f64 - 3.0).abs() < 0.01);
    }

    #[test]
    fn shifted_exponential_batch_mean() {
        let law =
            BatchTaskLaw::new(ServiceModel::shifted_exponential(1.0, 1.0).unwrap(), 8).unwrap();
        let mut rng = rng();
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let y = law.sample(&mut rng);
            assert!(y >= 8.0);
            sum += y;
        }
        assert!((sum / n as f64 - 16.0).abs() < 0.05);
    }

    #[test]
    fn single_cu_batch_is_the_cu_draw() {
        let model = ServiceModel::shifted_exponential(0.5, 2.0).unwrap();
        let law = BatchTaskLaw::new(model, 1).unwrap();
        let (mut a, mut b) = (rng(), rng());
        for _ in 0..100 {
            assert_eq!(law.sample(&mut a), model.sample_cu(&mut b));
        }
    }

    #[test]
    fn cdf_examples() {
        let exp =
            BatchTaskLaw::new(ServiceModel::shifted_exponential(0.0, 1.0).unwrap(), 1).unwrap();
        assert!((exp.cdf(2f64.ln()) - 0.5).abs() < 1e-15);

        let shifted =
            BatchTaskLaw::new(ServiceModel::shifted_exponential(2.0, 1.0).unwrap(), 3).unwrap();
        assert_eq!(shifted.cdf(5.9), 0.0);
        assert_eq!(shifted.cdf(6.0), 0.0);

        // outcomes {2, 3, 3, 4}
        let bi = BatchTaskLaw::new(ServiceModel::bimodal(1.0, 2.0, 0.5).unwrap(), 2).unwrap();
        assert!((bi.cdf(3.0) - 0.75).abs() < 1e-15);
        assert_eq!(bi.cdf(1.999), 0.0);
        assert!((bi.cdf(2.0) - 0.25).abs() < 1e-15);
        assert!((bi.cdf(2.5) - 0.25).abs() < 1e-15);
        assert_eq!(bi.cdf(4.0), 1.0);
    }

    #[test]
    fn cdf_of_equal_levels_is_a_step() {
        let bi = BatchTaskLaw::new(ServiceModel::bimodal(1.5, 1.5, 0.3).unwrap(), 4).unwrap();
        assert_eq!(bi.cdf(5.999), 0.0);
        assert_eq!(bi.cdf(6.0), 1.0);
    }

    #[test]
    fn mean_examples() {
        let se =
            BatchTaskLaw::new(ServiceModel::shifted_exponential(1.0, 1.0).unwrap(), 1).unwrap();
        assert_eq!(se.mean(), 2.0);
        let bi = BatchTaskLaw::new(ServiceModel::bimodal(1.0, 5.0, 0.0).unwrap(), 3).unwrap();
        assert_eq!(bi.mean(), 3.0);
        let bi = BatchTaskLaw::new(ServiceModel::bimodal(1.0, 3.0, 0.25).unwrap(), 4).unwrap();
        assert_eq!(bi.mean(), 6.0);
    }

    #[test]
    fn validation_names_the_field() {
        let err = ServiceModel::bimodal(1.0, 2.0, 1.5)
            .unwrap_err()
            .to_string();
        assert!(err.contains("eps"), "{err}");
        let err = ServiceModel::bimodal(2.0, 1.0, 0.5)
            .unwrap_err()
            .to_string();
        assert!(err.contains("t_slow"), "{err}");
        assert!(ServiceModel::shifted_exponential(-1.0, 1.0).is_err());
        assert!(ServiceModel::shifted_exponential(0.0, 0.0).is_err());
        assert!(
            BatchTaskLaw::new(ServiceModel::shifted_exponential(0.0, 1.0).unwrap(), 0).is_err()
        );
    }

    #[test]
    fn json_shape() {
        let m: ServiceModel =
            serde_json::from_str(r#"{"type":"bimodal","t_fast":1,"t_slow":5,"eps":0.1}"#).unwrap();
        assert_eq!(
            m,
            ServiceModel::BiModal {
                t_fast: 1.0,
                t_slow: 5.0,
                eps: 0.1
            }
        );
        let m: ServiceModel =
            serde_json::from_str(r#"{"type":"shifted_exponential","delta":1,"w":2}"#).unwrap();
        assert_eq!(
            serde_json::to_string(&m).unwrap(),
            r#"{"type":"shifted_exponential","delta":1.0,"w":2.0}"#
        );
        assert!(serde_json::from_str::<ServiceModel>(
            r#"{"type":"bimodal","t_fast":1,"t_slow":5,"eps":0.1,"x":1}"#
        )
        .is_err());
    }
}
