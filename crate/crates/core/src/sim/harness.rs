//! Stepped control-loop harness: at every step the workload moves, the
//! monitor observes the running configuration and the planner picks the next
//! one. Reconfiguration is instantaneous.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::QnError;
use crate::planner::{Planner, SlaThresholds, DEFAULT_ITERATION_CAP};
use crate::qn::{min_feasible_config, ArrivalRates, BaselineSnapshot, Configuration, DemandMatrix};
use crate::seed::SeedSet;
use crate::telemetry::{measure_rates, observe, NoiseSpec, ObservationWindow};
use crate::workload::{
    default_thresholds, gen_arrival_series, gen_demands, DemandLaw, WorkloadLaw,
};

pub const DEFAULT_HORIZON: usize = 200;
pub const DEFAULT_THRESHOLD_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSpec {
    /// [`WorkloadLaw::default_for`] seeded from the workload sub-seed.
    Default,
    Law(WorkloadLaw),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandSpec {
    /// Uniform random demands seeded from the demands sub-seed.
    Random,
    /// Fixed per-instance demands at the all-ones configuration.
    Matrix(DemandMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlaSpec {
    Multiplier(f64),
    Thresholds(SlaThresholds),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub classes: usize,
    pub stations: usize,
    pub horizon: usize,
    /// Length of a step; also the observation window when arrivals are sampled.
    pub window: f64,
    pub workload: WorkloadSpec,
    pub demands: DemandSpec,
    pub sla: SlaSpec,
    /// Measurement noise. Its seed is replaced by the noise sub-seed.
    pub noise: NoiseSpec,
    /// Draw Poisson arrival counts per window instead of using exact rates.
    pub sample_arrivals: bool,
    pub initial_config: Option<Configuration>,
    pub master_seed: u64,
    pub iteration_cap: u64,
}

impl ScenarioSpec {
    /// Randomized experiment with default laws.
    pub fn randomized(classes: usize, stations: usize, horizon: usize, master_seed: u64) -> Self {
        ScenarioSpec {
            classes,
            stations,
            horizon,
            window: 1.0,
            workload: WorkloadSpec::Default,
            demands: DemandSpec::Random,
            sla: SlaSpec::Multiplier(DEFAULT_THRESHOLD_MULTIPLIER),
            noise: NoiseSpec::none(),
            sample_arrivals: false,
            initial_config: None,
            master_seed,
            iteration_cap: DEFAULT_ITERATION_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), QnError> {
        let invalid = |msg: String| Err(QnError::InvalidInput(msg));
        if self.classes == 0 || self.stations == 0 {
            return invalid("scenario needs C >= 1 and K >= 1".into());
        }
        if self.horizon == 0 {
            return invalid("horizon must be >= 1".into());
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return invalid(format!("window {} must be > 0", self.window));
        }
        self.noise.validate()?;
        if let WorkloadSpec::Law(law) = &self.workload {
            law.validate()?;
            crate::error::check_len("workload classes", self.classes, law.len())?;
        }
        if let DemandSpec::Matrix(d) = &self.demands {
            crate::error::check_len("demand classes", self.classes, d.classes())?;
            crate::error::check_len("demand stations", self.stations, d.stations())?;
        }
        match &self.sla {
            SlaSpec::Multiplier(m) if !(m.is_finite() && *m > 1.0) => {
                return invalid(format!("threshold multiplier {m} must be > 1"));
            }
            SlaSpec::Thresholds(t) => {
                crate::error::check_len("SLA thresholds", self.classes, t.len())?;
            }
            _ => {}
        }
        if let Some(c) = &self.initial_config {
            crate::error::check_len("initial configuration", self.stations, c.len())?;
        }
        Ok(())
    }
}

/// What happened at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// 1-based step index.
    pub step: usize,
    /// True arrival rates.
    pub rates: ArrivalRates,
    pub config_before: Configuration,
    /// Configuration the snapshot was referenced at.
    pub observed_at: Configuration,
    pub config_after: Configuration,
    /// Predicted per-class response at `config_after`.
    pub predicted: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub acquire_iterations: u64,
    pub precondition_additions: u64,
    pub release_iterations: u64,
    pub total_instances: u64,
    pub feasible: bool,
}

/// Aggregate metrics of a run, in the column order of the summary report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub classes: usize,
    pub stations: usize,
    pub acquire_max: u64,
    pub acquire_avg: f64,
    pub release_max: u64,
    pub release_avg: f64,
    pub instances_min: u64,
    pub instances_max: u64,
    pub instances_total: u64,
    /// `T * max_t S_t`.
    pub static_total: u64,
    /// `sum_t S_t / static_total`.
    pub dynamic_static_ratio: f64,
}

impl RunSummary {
    pub fn from_steps(classes: usize, stations: usize, steps: &[StepRecord]) -> Self {
        assert!(!steps.is_empty(), "summary of an empty run");
        let n = steps.len() as f64;
        let acq = steps.iter().map(|s| s.acquire_iterations);
        let rel = steps.iter().map(|s| s.release_iterations);
        let totals: Vec<u64> = steps.iter().map(|s| s.total_instances).collect();
        let instances_max = *totals.iter().max().expect("non-empty");
        let instances_total: u64 = totals.iter().sum();
        let static_total = steps.len() as u64 * instances_max;
        RunSummary {
            classes,
            stations,
            acquire_max: acq.clone().max().expect("non-empty"),
            acquire_avg: acq.sum::<u64>() as f64 / n,
            release_max: rel.clone().max().expect("non-empty"),
            release_avg: rel.sum::<u64>() as f64 / n,
            instances_min: *totals.iter().min().expect("non-empty"),
            instances_max,
            instances_total,
            static_total,
            dynamic_static_ratio: instances_total as f64 / static_total as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub demands: DemandMatrix,
    pub thresholds: SlaThresholds,
    pub steps: Vec<StepRecord>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Setup(QnError),
    #[error("step {step}: {source}")]
    Step { step: usize, source: QnError },
}

impl RunError {
    pub fn qn_error(&self) -> &QnError {
        match self {
            RunError::Setup(e) => e,
            RunError::Step { source, .. } => source,
        }
    }
}

/// Runs the control loop for `spec.horizon` steps.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunRecord, RunError> {
    spec.validate().map_err(RunError::Setup)?;
    let seeds = SeedSet::from_master(spec.master_seed);

    let demands = match &spec.demands {
        DemandSpec::Random => gen_demands(&DemandLaw {
            classes: spec.classes,
            stations: spec.stations,
            seed: seeds.demands,
        }),
        DemandSpec::Matrix(d) => Ok(d.clone()),
    }
    .map_err(RunError::Setup)?;
    let law = match &spec.workload {
        WorkloadSpec::Default => WorkloadLaw::default_for(spec.classes, spec.horizon, seeds.workload),
        WorkloadSpec::Law(law) => law.clone(),
    };
    let series = gen_arrival_series(&law, spec.horizon, seeds.workload).map_err(RunError::Setup)?;
    let sla = match &spec.sla {
        SlaSpec::Multiplier(m) => default_thresholds(&demands, *m).map_err(RunError::Setup)?,
        SlaSpec::Thresholds(t) => t.clone(),
    };

    let noise = NoiseSpec {
        seed: seeds.noise,
        ..spec.noise
    };
    let mut rng = noise.rng();
    let planner = Planner::new(spec.iteration_cap);
    let mut current = spec
        .initial_config
        .clone()
        .unwrap_or_else(|| Configuration::ones(spec.stations));

    let mut steps = Vec::with_capacity(spec.horizon);
    for (i, rates) in series.into_iter().enumerate() {
        let step = i + 1;
        let at_step = |source| RunError::Step { step, source };
        let truth = BaselineSnapshot::new(Configuration::ones(spec.stations), rates.clone(), demands.clone())
            .map_err(at_step)?;

        let (observed_at, snapshot) = match observe(&truth, &current, &noise, &mut rng) {
            Ok(s) => (current.clone(), s),
            Err(QnError::OverloadedStation { .. }) => {
                let fallback = min_feasible_config(&truth);
                let s = observe(&truth, &fallback, &noise, &mut rng).map_err(at_step)?;
                (fallback, s)
            }
            Err(e) => return Err(at_step(e)),
        };
        let snapshot = if spec.sample_arrivals {
            let window = ObservationWindow::sample(&rates, spec.window, &mut rng).map_err(at_step)?;
            snapshot.with_rates(measure_rates(&window)).map_err(at_step)?
        } else {
            snapshot
        };

        let outcome = planner.plan_step(&snapshot, &sla).map_err(at_step)?;
        steps.push(StepRecord {
            step,
            rates,
            config_before: current.clone(),
            observed_at,
            total_instances: outcome.new_config.total(),
            config_after: outcome.new_config.clone(),
            predicted: outcome.predicted_response.per_class,
            thresholds: sla.as_slice().to_vec(),
            acquire_iterations: outcome.acquire_iterations,
            precondition_additions: outcome.precondition_additions,
            release_iterations: outcome.release_iterations,
            feasible: outcome.feasible,
        });
        current = outcome.new_config;
    }

    let summary = RunSummary::from_steps(spec.classes, spec.stations, &steps);
    Ok(RunRecord {
        demands,
        thresholds: sla,
        steps,
        summary,
    })
}

/// Pearson correlation; `None` when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}
