//! Experimental inputs: random demand matrices and perturbed sinusoidal
//! arrival-rate series.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{QnError, Result};
use crate::planner::SlaThresholds;
use crate::qn::{ArrivalRates, DemandMatrix};

pub const DEFAULT_BASE_RATE: f64 = 1.0;
pub const DEFAULT_AMPLITUDE: f64 = 0.8;
pub const DEFAULT_PERTURBATION_SD: f64 = 0.1;
pub const DEFAULT_PERSISTENCE: f64 = 0.8;

/// Arrival law of one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassLaw {
    pub base_rate: f64,
    #[serde(default)]
    pub amplitude: f64,
    /// Period in steps.
    #[serde(default = "ClassLaw::flat_period")]
    pub period: f64,
    /// Phase in radians.
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub perturbation_sd: f64,
    #[serde(default)]
    pub perturbation_persistence: f64,
}

impl ClassLaw {
    fn flat_period() -> f64 {
        1.0
    }

    /// Constant rate.
    pub fn constant(rate: f64) -> Self {
        ClassLaw {
            base_rate: rate,
            amplitude: 0.0,
            period: 1.0,
            phase: 0.0,
            perturbation_sd: 0.0,
            perturbation_persistence: 0.0,
        }
    }

    pub fn validate(&self, class: usize) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(QnError::InvalidInput(format!(
                "workload class {}: {what} = {v} out of range",
                class + 1
            )))
        };
        if !(self.base_rate.is_finite() && self.base_rate >= 0.0) {
            return bad("base_rate", self.base_rate);
        }
        if !(0.0..1.0).contains(&self.amplitude) {
            return bad("amplitude", self.amplitude);
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return bad("period", self.period);
        }
        if !self.phase.is_finite() {
            return bad("phase", self.phase);
        }
        if !(self.perturbation_sd.is_finite() && self.perturbation_sd >= 0.0) {
            return bad("perturbation_sd", self.perturbation_sd);
        }
        if !(0.0..1.0).contains(&self.perturbation_persistence) {
            return bad("perturbation_persistence", self.perturbation_persistence);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WorkloadLaw {
    pub classes: Vec<ClassLaw>,
}

impl WorkloadLaw {
    pub fn new(classes: Vec<ClassLaw>) -> Result<Self> {
        let law = WorkloadLaw { classes };
        law.validate()?;
        Ok(law)
    }

    pub fn constant(rates: &[f64]) -> Result<Self> {
        Self::new(rates.iter().map(|&r| ClassLaw::constant(r)).collect())
    }

    /// Default experiment law: every class shares the default base rate,
    /// amplitude and AR(1) perturbation; class `c` (1-based) has period
    /// `horizon / (c + 1)` and a phase drawn uniformly from `[0, 2 pi)`.
    pub fn default_for(classes: usize, horizon: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = Uniform::new(0.0, 2.0 * PI).expect("valid range");
        WorkloadLaw {
            classes: (1..=classes)
                .map(|c| ClassLaw {
                    base_rate: DEFAULT_BASE_RATE,
                    amplitude: DEFAULT_AMPLITUDE,
                    period: horizon as f64 / (c as f64 + 1.0),
                    phase: phase.sample(&mut rng),
                    perturbation_sd: DEFAULT_PERTURBATION_SD,
                    perturbation_persistence: DEFAULT_PERSISTENCE,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(QnError::InvalidInput("workload law has no classes".into()));
        }
        for (c, law) in self.classes.iter().enumerate() {
            law.validate(c)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Source of the multiplicative perturbation `eps(t)` applied to a class rate.
pub trait Perturbation {
    fn path(&self, law: &ClassLaw, len: usize, rng: &mut dyn rand::RngCore) -> Vec<f64>;
}

/// Stationary AR(1): `eps(t) = rho * eps(t-1) + eta(t)` with innovation sd
/// chosen so `eps` has stationary sd `perturbation_sd`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ar1;

impl Perturbation for Ar1 {
    fn path(&self, law: &ClassLaw, len: usize, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let sd = law.perturbation_sd;
        if sd == 0.0 {
            return vec![0.0; len];
        }
        let rho = law.perturbation_persistence;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        let innovation_sd = sd * (1.0 - rho * rho).sqrt();
        let mut eps = sd * unit.sample(rng);
        (0..len)
            .map(|_| {
                eps = rho * eps + innovation_sd * unit.sample(rng);
                eps
            })
            .collect()
    }
}

/// `D_ck ~ Uniform[0, c/C]` with `c` 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandLaw {
    pub classes: usize,
    pub stations: usize,
    pub seed: u64,
}

pub fn gen_demands(law: &DemandLaw) -> Result<DemandMatrix> {
    if law.classes == 0 || law.stations == 0 {
        return Err(QnError::InvalidInput(
            "demand law needs C >= 1 and K >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(law.seed);
    let rows = (1..=law.classes)
        .map(|c| {
            let upper = c as f64 / law.classes as f64;
            (0..law.stations)
                .map(|_| rng.random::<f64>() * upper)
                .collect()
        })
        .collect();
    DemandMatrix::new(rows)
}

/// Rates at steps `t = 1..=horizon` using the AR(1) perturbation.
pub fn gen_arrival_series(law: &WorkloadLaw, horizon: usize, seed: u64) -> Result<Vec<ArrivalRates>> {
    gen_arrival_series_with(law, horizon, seed, &Ar1)
}

/// `lambda_c(t) = max(0, base * (1 + a sin(2 pi t / P + phi)) * (1 + eps_c(t)))`.
pub fn gen_arrival_series_with(
    law: &WorkloadLaw,
    horizon: usize,
    seed: u64,
    perturbation: &dyn Perturbation,
) -> Result<Vec<ArrivalRates>> {
    law.validate()?;
    if horizon == 0 {
        return Err(QnError::InvalidInput("horizon must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths: Vec<Vec<f64>> = law
        .classes
        .iter()
        .map(|class| perturbation.path(class, horizon, &mut rng))
        .collect();
    (1..=horizon)
        .map(|t| {
            let rates = law
                .classes
                .iter()
                .zip(&paths)
                .map(|(class, eps)| {
                    let wave = 1.0
                        + class.amplitude * (2.0 * PI * t as f64 / class.period + class.phase).sin();
                    (class.base_rate * wave * (1.0 + eps[t - 1])).max(0.0)
                })
                .collect();
            ArrivalRates::new(rates)
        })
        .collect()
}

/// `R_c^+ = multiplier * sum_k D_ck`.
pub fn default_thresholds(demands: &DemandMatrix, multiplier: f64) -> Result<SlaThresholds> {
    if !(multiplier.is_finite() && multiplier > 1.0) {
        return Err(QnError::InvalidInput(format!(
            "threshold multiplier {multiplier} must be > 1"
        )));
    }
    let thresholds = demands
        .row_sums()
        .into_iter()
        .map(|sum| {
            // A class that uses no station still needs a positive bound.
            if sum > 0.0 {
                multiplier * sum
            } else {
                multiplier
            }
        })
        .collect();
    SlaThresholds::new(thresholds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demands_respect_class_bounds() {
        for seed in 0..20 {
            let d = gen_demands(&DemandLaw {
                classes: 5,
                stations: 10,
                seed,
            })
            .unwrap();
            for c in 0..5 {
                let bound = (c + 1) as f64 / 5.0;
                assert!(d.row(c).iter().all(|&x| (0.0..=bound).contains(&x)));
            }
            assert!(d.row(0).iter().cloned().fold(0.0, f64::max) <= 0.2);
        }
        let d = gen_demands(&DemandLaw {
            classes: 1,
            stations: 4,
            seed: 3,
        })
        .unwrap();
        assert!(d.row(0).iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn demands_are_seed_deterministic() {
        let law = DemandLaw {
            classes: 3,
            stations: 7,
            seed: 11,
        };
        assert_eq!(gen_demands(&law).unwrap(), gen_demands(&law).unwrap());
        let other = DemandLaw { seed: 12, ..law };
        assert_ne!(gen_demands(&law).unwrap(), gen_demands(&other).unwrap());
        assert!(gen_demands(&DemandLaw { classes: 0, ..law }).is_err());
    }

    #[test]
    fn flat_law_gives_constant_series() {
        let law = WorkloadLaw::constant(&[2.0, 0.5]).unwrap();
        let series = gen_arrival_series(&law, 10, 1).unwrap();
        assert_eq!(series.len(), 10);
        assert!(series.iter().all(|r| r.as_slice() == [2.0, 0.5]));
    }

    #[test]
    fn unperturbed_sinusoid_hits_closed_form_extremes() {
        let law = WorkloadLaw::new(vec![ClassLaw {
            base_rate: 3.0,
            amplitude: 0.5,
            period: 8.0,
            phase: 0.0,
            perturbation_sd: 0.0,
            perturbation_persistence: 0.0,
        }])
        .unwrap();
        let series: Vec<f64> = gen_arrival_series(&law, 16, 0)
            .unwrap()
            .iter()
            .map(|r| r.as_slice()[0])
            .collect();
        let max = series.iter().cloned().fold(f64::MIN, f64::max);
        let min = series.iter().cloned().fold(f64::MAX, f64::min);
        // t = 2 and t = 6 land on the crest and trough.
        assert!((max - 4.5).abs() < 1e-12);
        assert!((min - 1.5).abs() < 1e-12);
    }

    #[test]
    fn series_is_seed_deterministic_and_nonnegative() {
        let mut law = WorkloadLaw::default_for(4, 100, 5);
        law.classes[0].perturbation_sd = 3.0;
        let a = gen_arrival_series(&law, 100, 5).unwrap();
        let b = gen_arrival_series(&law, 100, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().flat_map(|r| r.as_slice()).all(|&x| x >= 0.0));
    }

    #[test]
    fn default_periods_are_distinct() {
        let law = WorkloadLaw::default_for(5, 200, 0);
        let periods: Vec<f64> = law.classes.iter().map(|c| c.period).collect();
        assert_eq!(periods, vec![100.0, 200.0 / 3.0, 50.0, 40.0, 200.0 / 6.0]);
    }

    #[test]
    fn invalid_laws_rejected() {
        let mut law = ClassLaw::constant(1.0);
        law.amplitude = 1.0;
        assert!(WorkloadLaw::new(vec![law.clone()]).is_err());
        law.amplitude = 0.1;
        law.perturbation_persistence = 1.0;
        assert!(WorkloadLaw::new(vec![law]).is_err());
        assert!(gen_arrival_series(&WorkloadLaw::constant(&[1.0]).unwrap(), 0, 0).is_err());
    }

    #[test]
    fn thresholds_scale_row_sums() {
        let d = DemandMatrix::new(vec![vec![1.5, 0.5]]).unwrap();
        assert_eq!(default_thresholds(&d, 3.0).unwrap().as_slice(), &[6.0]);

        let bottleneck =
            DemandMatrix::new(vec![vec![0.5, 1.0 / 3.0, 0.5], vec![0.5, 0.0, 0.5]]).unwrap();
        let t = default_thresholds(&bottleneck, 3.0).unwrap();
        assert!((t.get(0) - 4.0).abs() < 1e-12 && (t.get(1) - 3.0).abs() < 1e-12);
        assert!(default_thresholds(&bottleneck, 1.0).is_err());
    }
}
