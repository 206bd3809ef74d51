//! Event-level simulation of the open network, used as an independent check
//! of the analytic model.
//!
//! Every class arrives as a Poisson stream and visits the stations it uses in
//! index order. At each station a request picks one of the `N_k` instances
//! uniformly at random and brings an exponentially distributed amount of work
//! with mean `M_k * D_ck(M)`, the class's whole demand on that station. Each
//! instance is a single server running processor sharing or FCFS.
//!
//! Estimates use batch means over the post-warmup part of the run.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{QnError, Result};
use crate::qn::{BaselineSnapshot, Configuration};

/// Minimum expected post-warmup completions of the rarest active class.
pub const MIN_COMPLETIONS: f64 = 1e4;
pub const DEFAULT_BATCHES: usize = 10;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discipline {
    #[serde(rename = "processor-sharing", alias = "ps")]
    ProcessorSharing,
    #[serde(rename = "fcfs")]
    Fcfs,
}

impl Discipline {
    pub fn name(self) -> &'static str {
        match self {
            Discipline::ProcessorSharing => "processor-sharing",
            Discipline::Fcfs => "fcfs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesSettings {
    pub discipline: Discipline,
    /// Simulated time, including warmup.
    pub run_length: f64,
    pub warmup_fraction: f64,
    pub batches: usize,
    pub seed: u64,
}

impl DesSettings {
    pub fn new(discipline: Discipline, run_length: f64, seed: u64) -> Self {
        DesSettings {
            discipline,
            run_length,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
            batches: DEFAULT_BATCHES,
            seed,
        }
    }

    /// Shortest run giving [`MIN_COMPLETIONS`] measured completions of the
    /// rarest class with nonzero rate, times `margin`.
    pub fn run_length_for(base: &BaselineSnapshot, warmup_fraction: f64, margin: f64) -> f64 {
        let rarest = base
            .rates()
            .as_slice()
            .iter()
            .cloned()
            .filter(|r| *r > 0.0)
            .fold(f64::INFINITY, f64::min);
        if rarest.is_infinite() {
            return 1.0;
        }
        margin * MIN_COMPLETIONS / (rarest * (1.0 - warmup_fraction))
    }
}

/// Batch-means point estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesReport {
    /// End-to-end response per class; `None` for classes with no arrivals.
    pub response: Vec<Option<Estimate>>,
    /// Time per visit at station `k` (all instances), per class; `None` where
    /// the class does not use the station or has no arrivals.
    pub residence: Vec<Vec<Option<Estimate>>>,
    /// Mean busy fraction of one instance, per station.
    pub utilization: Vec<Estimate>,
    /// Arrival rate of class `c` at each instance of station `k`, indexed
    /// `[c][k][instance]`.
    pub instance_arrival_rate: Vec<Vec<Vec<Estimate>>>,
    /// Post-warmup completions per class.
    pub completions: Vec<u64>,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival { class: usize },
    Departure {
        station: usize,
        instance: usize,
        version: u64,
    },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    class: usize,
    arrived: f64,
    visit_started: f64,
    hop: usize,
}

#[derive(Debug, Default)]
struct Instance {
    /// (job id, remaining work)
    jobs: VecDeque<(usize, f64)>,
    last_update: f64,
    version: u64,
}

/// Per-batch accumulators over the measurement window.
struct Batches {
    start: f64,
    width: f64,
    count: usize,
}

impl Batches {
    fn index(&self, t: f64) -> Option<usize> {
        if t < self.start {
            return None;
        }
        Some((((t - self.start) / self.width) as usize).min(self.count - 1))
    }

    /// Spreads the interval `[t0, t1)` over the batches it overlaps.
    fn spread(&self, t0: f64, t1: f64, acc: &mut [f64]) {
        let t0 = t0.max(self.start);
        if t1 <= t0 {
            return;
        }
        let first = self.index(t0).expect("t0 inside window");
        let last = self.index(t1).expect("t1 inside window");
        for (b, slot) in acc.iter_mut().enumerate().take(last + 1).skip(first) {
            let lo = (self.start + b as f64 * self.width).max(t0);
            let hi = if b == self.count - 1 {
                t1
            } else {
                (self.start + (b + 1) as f64 * self.width).min(t1)
            };
            if hi > lo {
                *slot += hi - lo;
            }
        }
    }
}

struct Sim<'a> {
    discipline: Discipline,
    visit_demand: Vec<Vec<f64>>,
    routes: Vec<Vec<usize>>,
    config: &'a Configuration,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Event>,
    seq: u64,
    instances: Vec<Vec<Instance>>,
    jobs: Vec<Job>,
    free_jobs: Vec<usize>,
    batches: Batches,
    // [c][b]
    resp_sum: Vec<Vec<f64>>,
    resp_n: Vec<Vec<u64>>,
    // [c][k][b]
    res_sum: Vec<Vec<Vec<f64>>>,
    res_n: Vec<Vec<Vec<u64>>>,
    // [c][k][instance][b]
    visits: Vec<Vec<Vec<Vec<u64>>>>,
    // [k][b]
    busy: Vec<Vec<f64>>,
}

impl Sim<'_> {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn advance(&mut self, station: usize, instance: usize, now: f64) {
        let inst = &mut self.instances[station][instance];
        let dt = now - inst.last_update;
        if dt > 0.0 && !inst.jobs.is_empty() {
            self.batches.spread(inst.last_update, now, &mut self.busy[station]);
            match self.discipline {
                Discipline::ProcessorSharing => {
                    let share = dt / inst.jobs.len() as f64;
                    for (_, remaining) in inst.jobs.iter_mut() {
                        *remaining -= share;
                    }
                }
                Discipline::Fcfs => {
                    if let Some((_, remaining)) = inst.jobs.front_mut() {
                        *remaining -= dt;
                    }
                }
            }
        }
        inst.last_update = now;
    }

    /// Position of the next job to leave and its departure time.
    fn next_departure(&self, station: usize, instance: usize, now: f64) -> Option<(usize, f64)> {
        let inst = &self.instances[station][instance];
        match self.discipline {
            Discipline::ProcessorSharing => {
                let n = inst.jobs.len() as f64;
                inst.jobs
                    .iter()
                    .enumerate()
                    .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
                    .map(|(pos, (_, rem))| (pos, now + rem.max(0.0) * n))
            }
            Discipline::Fcfs => inst.jobs.front().map(|(_, rem)| (0, now + rem.max(0.0))),
        }
    }

    fn reschedule(&mut self, station: usize, instance: usize, now: f64) {
        let inst = &mut self.instances[station][instance];
        inst.version += 1;
        let version = inst.version;
        if let Some((_, at)) = self.next_departure(station, instance, now) {
            self.schedule(
                at,
                EventKind::Departure {
                    station,
                    instance,
                    version,
                },
            );
        }
    }

    fn enter_next(&mut self, job_id: usize, now: f64) {
        let job = self.jobs[job_id];
        let route = &self.routes[job.class];
        if job.hop >= route.len() {
            if let Some(b) = self.batches.index(now) {
                self.resp_sum[job.class][b] += now - job.arrived;
                self.resp_n[job.class][b] += 1;
            }
            self.free_jobs.push(job_id);
            return;
        }
        let station = route[job.hop];
        let instance = self
            .rng
            .random_range(0..self.config.get(station) as usize);
        let mean = self.visit_demand[job.class][station];
        let work = Exp::new(1.0 / mean).expect("positive demand").sample(&mut self.rng);
        if let Some(b) = self.batches.index(now) {
            self.visits[job.class][station][instance][b] += 1;
        }
        self.jobs[job_id].visit_started = now;
        self.advance(station, instance, now);
        self.instances[station][instance]
            .jobs
            .push_back((job_id, work));
        self.reschedule(station, instance, now);
    }

    fn depart(&mut self, station: usize, instance: usize, now: f64) {
        self.advance(station, instance, now);
        let (pos, _) = self
            .next_departure(station, instance, now)
            .expect("departure from a busy instance");
        let (job_id, _) = self.instances[station][instance]
            .jobs
            .remove(pos)
            .expect("position in range");
        let job = self.jobs[job_id];
        if let Some(b) = self.batches.index(now) {
            self.res_sum[job.class][station][b] += now - job.visit_started;
            self.res_n[job.class][station][b] += 1;
        }
        self.reschedule(station, instance, now);
        self.jobs[job_id].hop += 1;
        self.enter_next(job_id, now);
    }

    fn new_job(&mut self, class: usize, now: f64) -> usize {
        let job = Job {
            class,
            arrived: now,
            visit_started: now,
            hop: 0,
        };
        match self.free_jobs.pop() {
            Some(id) => {
                self.jobs[id] = job;
                id
            }
            None => {
                self.jobs.push(job);
                self.jobs.len() - 1
            }
        }
    }
}

fn batch_estimate(values: &[f64], quantile: f64) -> Estimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        mean,
        half_width: quantile * (var / n).sqrt(),
    }
}

fn ratio_estimate(sums: &[f64], counts: &[u64], quantile: f64) -> Option<Estimate> {
    if counts.contains(&0) {
        return None;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(counts)
        .map(|(s, &n)| s / n as f64)
        .collect();
    Some(batch_estimate(&means, quantile))
}

/// Simulates `base`'s network at `config` and returns batch-means estimates.
pub fn des_validate(
    base: &BaselineSnapshot,
    config: &Configuration,
    settings: &DesSettings,
) -> Result<DesReport> {
    let bad = base.infeasible_stations(config);
    crate::error::check_len("configuration vs stations", base.stations(), config.len())?;
    if !bad.is_empty() {
        return Err(QnError::infeasible(bad));
    }
    if settings.batches < 2 {
        return Err(QnError::InvalidInput("at least two batches are required".into()));
    }
    if !(0.0..1.0).contains(&settings.warmup_fraction) {
        return Err(QnError::InvalidInput(format!(
            "warmup fraction {} must be in [0, 1)",
            settings.warmup_fraction
        )));
    }
    let measured = settings.run_length * (1.0 - settings.warmup_fraction);
    let classes = base.classes();
    let stations = base.stations();
    let rates = base.rates().as_slice();
    for (c, &rate) in rates.iter().enumerate() {
        if rate > 0.0 && rate * measured < MIN_COMPLETIONS {
            return Err(QnError::InvalidInput(format!(
                "run length {} gives about {:.0} completions of class {}; at least {MIN_COMPLETIONS} are required",
                settings.run_length,
                rate * measured,
                c + 1
            )));
        }
    }

    let visit_demand: Vec<Vec<f64>> = (0..classes)
        .map(|c| (0..stations).map(|k| base.total_demand(c, k)).collect())
        .collect();
    let routes: Vec<Vec<usize>> = visit_demand
        .iter()
        .map(|row| (0..stations).filter(|&k| row[k] > 0.0).collect())
        .collect();

    let nb = settings.batches;
    let warmup = settings.run_length * settings.warmup_fraction;
    let mut sim = Sim {
        discipline: settings.discipline,
        visit_demand,
        routes,
        config,
        rng: ChaCha8Rng::seed_from_u64(settings.seed),
        heap: BinaryHeap::new(),
        seq: 0,
        instances: (0..stations)
            .map(|k| (0..config.get(k)).map(|_| Instance::default()).collect())
            .collect(),
        jobs: Vec::new(),
        free_jobs: Vec::new(),
        batches: Batches {
            start: warmup,
            width: measured / nb as f64,
            count: nb,
        },
        resp_sum: vec![vec![0.0; nb]; classes],
        resp_n: vec![vec![0; nb]; classes],
        res_sum: vec![vec![vec![0.0; nb]; stations]; classes],
        res_n: vec![vec![vec![0; nb]; stations]; classes],
        visits: (0..classes)
            .map(|_| (0..stations).map(|k| vec![vec![0; nb]; config.get(k) as usize]).collect())
            .collect(),
        busy: vec![vec![0.0; nb]; stations],
    };

    let interarrival: Vec<Option<Exp<f64>>> = rates
        .iter()
        .map(|&r| (r > 0.0).then(|| Exp::new(r).expect("positive rate")))
        .collect();
    for (class, dist) in interarrival.iter().enumerate() {
        if let Some(dist) = dist {
            let t = dist.sample(&mut sim.rng);
            sim.schedule(t, EventKind::Arrival { class });
        }
    }

    let end = settings.run_length;
    while let Some(event) = sim.heap.pop() {
        if event.time > end {
            break;
        }
        let now = event.time;
        match event.kind {
            EventKind::Arrival { class } => {
                let dist = interarrival[class].expect("arrivals only for active classes");
                let next = now + dist.sample(&mut sim.rng);
                sim.schedule(next, EventKind::Arrival { class });
                let id = sim.new_job(class, now);
                sim.enter_next(id, now);
            }
            EventKind::Departure {
                station,
                instance,
                version,
            } => {
                if sim.instances[station][instance].version == version {
                    sim.depart(station, instance, now);
                }
            }
        }
    }
    // Busy time up to the end of the run.
    for k in 0..stations {
        for i in 0..config.get(k) as usize {
            sim.advance(k, i, end);
        }
    }

    let quantile = StudentsT::new(0.0, 1.0, (nb - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    let width = sim.batches.width;

    let response = (0..classes)
        .map(|c| ratio_estimate(&sim.resp_sum[c], &sim.resp_n[c], quantile))
        .collect();
    let residence = (0..classes)
        .map(|c| {
            (0..stations)
                .map(|k| ratio_estimate(&sim.res_sum[c][k], &sim.res_n[c][k], quantile))
                .collect()
        })
        .collect();
    let utilization = (0..stations)
        .map(|k| {
            let n = f64::from(config.get(k));
            let per_batch: Vec<f64> = sim.busy[k].iter().map(|b| b / (width * n)).collect();
            batch_estimate(&per_batch, quantile)
        })
        .collect();
    let instance_arrival_rate = sim
        .visits
        .iter()
        .map(|per_station| {
            per_station
                .iter()
                .map(|per_instance| {
                    per_instance
                        .iter()
                        .map(|counts| {
                            let per_batch: Vec<f64> = counts.iter().map(|&v| v as f64 / width).collect();
                            batch_estimate(&per_batch, quantile)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let completions = sim.resp_n.iter().map(|v| v.iter().sum()).collect();

    Ok(DesReport {
        response,
        residence,
        utilization,
        instance_arrival_rate,
        completions,
    })
}
