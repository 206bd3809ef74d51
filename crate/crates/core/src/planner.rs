//! Greedy acquire/release planning over the queueing-network model.
//!
//! [`acquire`] adds instances until every class meets its threshold, always
//! relieving the class with the largest relative violation through the station
//! that cuts its response the most. [`release`] then removes instances one at a
//! time, guarding every class, until no single removal is possible.
//! [`plan_step`] chains the two the way one iteration of the control loop does.
//!
//! Ties in every argmax/argmin go to the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{QnError, Result};
use crate::qn::{
    capacity_floor, min_feasible_config, predict_class_response, predict_response,
    rescale_snapshot, BaselineSnapshot, Configuration, ResponseTimes,
};

pub const DEFAULT_ITERATION_CAP: u64 = 1_000_000;

/// Per-class upper bounds on mean response time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SlaThresholds(Vec<f64>);

impl SlaThresholds {
    pub fn new(max_response: Vec<f64>) -> Result<Self> {
        if max_response.is_empty() {
            return Err(QnError::InvalidInput("no SLA thresholds given".into()));
        }
        if let Some(c) = max_response
            .iter()
            .position(|r| !(r.is_finite() && *r > 0.0))
        {
            return Err(QnError::InvalidInput(format!(
                "threshold of class {} is {}; it must be finite and > 0",
                c + 1,
                max_response[c]
            )));
        }
        Ok(SlaThresholds(max_response))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// True when every class response is within its threshold.
    pub fn satisfied_by(&self, per_class: &[f64]) -> bool {
        per_class.iter().zip(&self.0).all(|(r, max)| r <= max)
    }
}

impl TryFrom<Vec<f64>> for SlaThresholds {
    type Error = QnError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        SlaThresholds::new(v)
    }
}

impl From<SlaThresholds> for Vec<f64> {
    fn from(s: SlaThresholds) -> Self {
        s.0
    }
}

/// One greedy addition made by [`acquire`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquireStep {
    /// Class with the largest relative violation.
    pub class: usize,
    /// Station that received the new instance.
    pub station: usize,
    /// Predicted reduction of the class response from that instance.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquireOutcome {
    pub config: Configuration,
    /// Greedy loop iterations (one added instance each).
    pub iterations: u64,
    /// Instances added up front to lift the start above the capacity floor.
    pub precondition_additions: u64,
    pub steps: Vec<AcquireStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseOutcome {
    pub config: Configuration,
    /// Instances removed.
    pub iterations: u64,
    /// Station of every removal, in order.
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub new_config: Configuration,
    pub acquire_iterations: u64,
    pub precondition_additions: u64,
    pub release_iterations: u64,
    pub predicted_response: ResponseTimes,
    pub feasible: bool,
}

/// Planner settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Planner {
    pub iteration_cap: u64,
}

impl Default for Planner {
    fn default() -> Self {
        Planner {
            iteration_cap: DEFAULT_ITERATION_CAP,
        }
    }
}

fn relative_gap(response: f64, threshold: f64) -> f64 {
    (response - threshold) / threshold
}

/// First index of the maximum; NaNs never win.
fn argmax_first(values: impl IntoIterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

fn check_classes(base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<()> {
    crate::error::check_len("SLA thresholds vs classes", base.classes(), sla.len())
}

/// Rejects thresholds the model can never meet: response times are bounded
/// below by `sum_k M_k D_ck(M)`.
pub fn check_attainable(base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<()> {
    check_classes(base, sla)?;
    for c in 0..base.classes() {
        let floor = base.demand_floor(c);
        let threshold = sla.get(c);
        if threshold - floor <= crate::qn::TOLERANCE * 1f64.max(floor) {
            return Err(QnError::UnattainableSla {
                class: c,
                threshold,
                floor,
            });
        }
    }
    Ok(())
}

impl Planner {
    pub fn new(iteration_cap: u64) -> Self {
        Planner { iteration_cap }
    }

    /// Grows the reference configuration until every class is predicted to
    /// meet its threshold.
    pub fn acquire(&self, base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<AcquireOutcome> {
        check_attainable(base, sla)?;

        let start = base.ref_config();
        let mut config = start.componentwise_max(&min_feasible_config(base))?;
        let precondition_additions = config.total() - start.total();

        let mut steps = Vec::new();
        loop {
            let response = predict_response(base, &config)?.per_class;
            let worst = argmax_first(
                response
                    .iter()
                    .zip(sla.as_slice())
                    .map(|(r, max)| relative_gap(*r, *max))
                    .enumerate(),
            );
            let (class, gap) = match worst {
                Some(w) if w.1 > 0.0 => w,
                _ => break,
            };
            debug_assert!(gap > 0.0);
            if steps.len() as u64 >= self.iteration_cap {
                return Err(QnError::IterationCap {
                    cap: self.iteration_cap,
                });
            }
            let current = response[class];
            let mut candidates = Vec::with_capacity(base.stations());
            for k in 0..base.stations() {
                let next = predict_class_response(base, class, &config.incremented(k))?;
                candidates.push((k, current - next));
            }
            let (station, reduction) =
                argmax_first(candidates).expect("at least one station exists");
            config = config.incremented(station);
            steps.push(AcquireStep {
                class,
                station,
                reduction,
            });
        }

        Ok(AcquireOutcome {
            config,
            iterations: steps.len() as u64,
            precondition_additions,
            steps,
        })
    }

    /// Shrinks the reference configuration to a Pareto-optimal one that keeps
    /// every class within its threshold. Returns the input unchanged when
    /// nothing can be removed, including when it is not feasible to begin with.
    pub fn release(&self, base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<ReleaseOutcome> {
        check_classes(base, sla)?;
        let floor = capacity_floor(base);
        let mut config = base.ref_config().clone();
        let removable = |config: &Configuration, k: usize| f64::from(config.get(k)) - 1.0 > floor[k];

        let mut candidates: Vec<bool> = (0..base.stations()).map(|k| removable(&config, k)).collect();
        let mut removed = Vec::new();

        let mut response = match predict_response(base, &config) {
            Ok(r) => r.per_class,
            Err(QnError::InfeasibleConfiguration { .. }) => {
                return Ok(ReleaseOutcome {
                    config,
                    iterations: 0,
                    removed,
                })
            }
            Err(e) => return Err(e),
        };

        while candidates.iter().any(|&c| c) {
            if removed.len() as u64 >= self.iteration_cap {
                return Err(QnError::IterationCap {
                    cap: self.iteration_cap,
                });
            }
            // Class with the least relative slack.
            let (critical, _) = argmax_first(
                response
                    .iter()
                    .zip(sla.as_slice())
                    .map(|(r, max)| relative_gap(*r, *max))
                    .enumerate(),
            )
            .expect("at least one class exists");

            let mut best: Option<(usize, f64, Configuration)> = None;
            for k in (0..base.stations()).filter(|&k| candidates[k]) {
                let trial = config
                    .decremented(k)
                    .expect("candidate stations keep at least one instance");
                let r = predict_class_response(base, critical, &trial)?;
                if best.as_ref().is_none_or(|(_, b, _)| r < *b) {
                    best = Some((k, r, trial));
                }
            }
            let (station, _, trial) = best.expect("candidate set is non-empty");

            let trial_response = predict_response(base, &trial)?.per_class;
            if !sla.satisfied_by(&trial_response) {
                // Increments are additive, so this station can never be
                // reduced later either.
                candidates[station] = false;
                continue;
            }
            config = trial;
            response = trial_response;
            removed.push(station);
            if !removable(&config, station) {
                candidates[station] = false;
            }
        }

        Ok(ReleaseOutcome {
            config,
            iterations: removed.len() as u64,
            removed,
        })
    }

    /// One planning step: acquire, re-reference the snapshot at the acquired
    /// configuration, release.
    pub fn plan_step(&self, base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<PlanOutcome> {
        let acquired = self.acquire(base, sla)?;
        let at_acquired = rescale_snapshot(base, &acquired.config)?;
        let released = self.release(&at_acquired, sla)?;
        let predicted_response = predict_response(base, &released.config)?;
        let feasible = sla.satisfied_by(&predicted_response.per_class);
        Ok(PlanOutcome {
            new_config: released.config,
            acquire_iterations: acquired.iterations,
            precondition_additions: acquired.precondition_additions,
            release_iterations: released.iterations,
            predicted_response,
            feasible,
        })
    }
}

pub fn acquire(base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<AcquireOutcome> {
    Planner::default().acquire(base, sla)
}

pub fn release(base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<ReleaseOutcome> {
    Planner::default().release(base, sla)
}

pub fn plan_step(base: &BaselineSnapshot, sla: &SlaThresholds) -> Result<PlanOutcome> {
    Planner::default().plan_step(base, sla)
}

/// True when `config` is above the capacity floor and meets every threshold.
pub fn is_feasible(base: &BaselineSnapshot, sla: &SlaThresholds, config: &Configuration) -> bool {
    predict_response(base, config).is_ok_and(|r| sla.satisfied_by(&r.per_class))
}
