//! Synthetic monitoring: builds the snapshots a live monitor would produce
//! from arrival counts, per-instance residence times and utilizations.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, QnError, Result};
use crate::qn::{
    estimate_demand, rescale_snapshot, residence_time, utilization, ArrivalRates,
    BaselineSnapshot, Configuration, DemandMatrix,
};

/// Noisy utilizations are clamped to at most this value.
pub const UTILIZATION_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    length: f64,
    arrival_counts: Vec<u64>,
}

impl ObservationWindow {
    pub fn new(length: f64, arrival_counts: Vec<u64>) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(QnError::InvalidInput(format!(
                "observation window length {length} must be > 0"
            )));
        }
        Ok(ObservationWindow {
            length,
            arrival_counts,
        })
    }

    /// Draws Poisson arrival counts with means `rate * length`.
    pub fn sample<R: Rng + ?Sized>(rates: &ArrivalRates, length: f64, rng: &mut R) -> Result<Self> {
        let counts = rates
            .as_slice()
            .iter()
            .map(|&rate| {
                let mean = rate * length;
                if mean <= 0.0 {
                    Ok(0)
                } else {
                    Poisson::new(mean)
                        .map(|p| p.sample(rng) as u64)
                        .map_err(|e| QnError::InvalidInput(format!("poisson mean {mean}: {e}")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(length, counts)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn arrival_counts(&self) -> &[u64] {
        &self.arrival_counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    #[default]
    None,
    Sampled,
}

/// Multiplicative measurement noise. Each measured residence time and
/// utilization is multiplied by `exp(relative_sd * Z)`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub mode: NoiseMode,
    #[serde(default)]
    pub relative_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::default()
    }

    pub fn sampled(relative_sd: f64, seed: u64) -> Self {
        NoiseSpec {
            mode: NoiseMode::Sampled,
            relative_sd,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_sd.is_finite() && self.relative_sd >= 0.0) {
            return Err(QnError::InvalidInput(format!(
                "noise relative_sd {} must be >= 0",
                self.relative_sd
            )));
        }
        Ok(())
    }

    /// Generator seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn is_active(&self) -> bool {
        self.mode == NoiseMode::Sampled && self.relative_sd > 0.0
    }
}

/// `lambda_c = A_c / T`.
pub fn measure_rates(window: &ObservationWindow) -> ArrivalRates {
    ArrivalRates::new(
        window
            .arrival_counts
            .iter()
            .map(|&count| count as f64 / window.length)
            .collect(),
    )
    .expect("counts over a positive length are finite and nonnegative")
}

/// Observes the system described by `truth` while it runs at `config`.
///
/// Measured utilizations and per-instance residence times are synthesized
/// from the model, perturbed when `noise` is sampled, and turned back into
/// service demands. The returned snapshot is referenced at `config`; its
/// utilizations are re-derived from the recovered demands.
pub fn observe<R: Rng + ?Sized>(
    truth: &BaselineSnapshot,
    config: &Configuration,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<BaselineSnapshot> {
    noise.validate()?;
    check_len("configuration vs stations", truth.stations(), config.len())?;
    let at_config = rescale_snapshot(truth, config)?;
    let true_utils = utilization(at_config.rates(), at_config.demands_ref())?;
    let overloaded = true_utils.overloaded();
    if !overloaded.is_empty() {
        return Err(QnError::overloaded(overloaded));
    }

    let factor = |rng: &mut R| -> f64 {
        if noise.is_active() {
            let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
            (noise.relative_sd * z).exp()
        } else {
            1.0
        }
    };

    let measured_utils: Vec<f64> = true_utils
        .as_slice()
        .iter()
        .map(|&u| (u * factor(rng)).min(UTILIZATION_CLAMP))
        .collect();

    let demands = at_config.demands_ref();
    let mut recovered = Vec::with_capacity(demands.classes());
    for c in 0..demands.classes() {
        let mut row = Vec::with_capacity(demands.stations());
        for k in 0..demands.stations() {
            let d = demands.get(c, k);
            if d == 0.0 {
                row.push(0.0);
                continue;
            }
            let measured_r = residence_time(d, true_utils.as_slice()[k])? * factor(rng);
            row.push(estimate_demand(measured_r, measured_utils[k])?);
        }
        recovered.push(row);
    }

    BaselineSnapshot::new(
        config.clone(),
        truth.rates().clone(),
        DemandMatrix::new(recovered)?,
    )
}
