//! Shared fixtures and an independent reimplementation of the model used as
//! an oracle.

#![allow(dead_code)]

use qnas_core::planner::SlaThresholds;
use qnas_core::qn::{ArrivalRates, BaselineSnapshot, Configuration, DemandMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bottleneck() -> BaselineSnapshot {
    BaselineSnapshot::new(
        Configuration::new(vec![1, 1, 1]).unwrap(),
        ArrivalRates::new(vec![2.0, 1.0]).unwrap(),
        DemandMatrix::new(vec![vec![0.5, 1.0 / 3.0, 0.5], vec![0.5, 0.0, 0.5]]).unwrap(),
    )
    .unwrap()
}

pub fn bottleneck_sla() -> SlaThresholds {
    SlaThresholds::new(vec![6.0, 5.0]).unwrap()
}

pub fn cfg(counts: &[u32]) -> Configuration {
    Configuration::new(counts.to_vec()).unwrap()
}

/// Plain-array copy of a snapshot.
#[derive(Debug, Clone)]
pub struct Raw {
    pub m: Vec<f64>,
    pub rates: Vec<f64>,
    pub d: Vec<Vec<f64>>,
}

impl Raw {
    pub fn of(base: &BaselineSnapshot) -> Self {
        Raw {
            m: base.ref_config().counts().iter().map(|&n| f64::from(n)).collect(),
            rates: base.rates().as_slice().to_vec(),
            d: base.demands_ref().rows().to_vec(),
        }
    }

    pub fn util(&self, k: usize) -> f64 {
        self.rates.iter().zip(&self.d).map(|(l, row)| l * row[k]).sum()
    }

    /// Response of class `c` at real-valued counts `n`; `None` if any used
    /// station is saturated.
    pub fn response(&self, c: usize, n: &[f64]) -> Option<f64> {
        let mut total = 0.0;
        for k in 0..n.len() {
            let u = self.util(k) * self.m[k] / n[k];
            if u >= 1.0 {
                return None;
            }
            let d = self.d[c][k] * self.m[k] / n[k];
            total += n[k] * d / (1.0 - u);
        }
        Some(total)
    }

    pub fn response_int(&self, c: usize, n: &Configuration) -> Option<f64> {
        let n: Vec<f64> = n.counts().iter().map(|&x| f64::from(x)).collect();
        self.response(c, &n)
    }

    pub fn feasible(&self, sla: &[f64], n: &Configuration) -> bool {
        (0..self.rates.len()).all(|c| {
            self.response_int(c, n)
                .is_some_and(|r| r <= sla[c])
        })
    }

    pub fn min_counts(&self) -> Vec<u32> {
        (0..self.m.len())
            .map(|k| {
                let floor = self.m[k] * self.util(k);
                (floor.floor() as u32 + 1).max(1)
            })
            .collect()
    }

    pub fn floor(&self, c: usize) -> f64 {
        (0..self.m.len()).map(|k| self.m[k] * self.d[c][k]).sum()
    }
}

/// Random baseline with `1..=max_c` classes and `1..=max_k` stations. Some
/// demands are zero; the reference configuration may be overloaded.
pub fn random_base(rng: &mut ChaCha8Rng, max_c: usize, max_k: usize) -> BaselineSnapshot {
    let c = rng.random_range(1..=max_c);
    let k = rng.random_range(1..=max_k);
    let rows = (0..c)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if rng.random_bool(0.15) {
                        0.0
                    } else {
                        rng.random_range(0.01..1.0)
                    }
                })
                .collect()
        })
        .collect();
    let rates = (0..c).map(|_| rng.random_range(0.05..2.0)).collect();
    let m = (0..k).map(|_| rng.random_range(1..=4)).collect();
    BaselineSnapshot::new(
        Configuration::new(m).unwrap(),
        ArrivalRates::new(rates).unwrap(),
        DemandMatrix::new(rows).unwrap(),
    )
    .unwrap()
}

/// Thresholds a random factor above each class's asymptotic floor.
pub fn random_sla(rng: &mut ChaCha8Rng, base: &BaselineSnapshot, lo: f64, hi: f64) -> SlaThresholds {
    let raw = Raw::of(base);
    let t = (0..base.classes())
        .map(|c| {
            let floor = raw.floor(c);
            let factor = rng.random_range(lo..hi);
            if floor > 0.0 {
                floor * factor
            } else {
                factor
            }
        })
        .collect();
    SlaThresholds::new(t).unwrap()
}

/// Random feasible baseline: reference counts are lifted above the floor.
pub fn random_feasible_base(rng: &mut ChaCha8Rng, max_c: usize, max_k: usize) -> BaselineSnapshot {
    let base = random_base(rng, max_c, max_k);
    let raw = Raw::of(&base);
    let lifted: Vec<u32> = base
        .ref_config()
        .counts()
        .iter()
        .zip(raw.min_counts())
        .map(|(&a, b)| a.max(b))
        .collect();
    qnas_core::rescale_snapshot(&base, &cfg(&lifted)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smallest total over feasible configurations whose total does not exceed
/// `budget`, by exhaustive enumeration. Returns the count of configurations
/// visited alongside.
pub fn brute_force_min_total(raw: &Raw, sla: &[f64], budget: u64) -> (Option<u64>, u64) {
    let lo = raw.min_counts();
    let mut best = None;
    let mut visited = 0;
    let mut n = lo.clone();
    #[allow(clippy::too_many_arguments)]
    fn go(
        raw: &Raw,
        sla: &[f64],
        lo: &[u32],
        n: &mut Vec<u32>,
        k: usize,
        budget: u64,
        best: &mut Option<u64>,
        visited: &mut u64,
    ) {
        let used: u64 = n[..k].iter().map(|&x| u64::from(x)).sum();
        let rest: u64 = lo[k..].iter().map(|&x| u64::from(x)).sum();
        if used + rest > budget {
            return;
        }
        if k == n.len() {
            *visited += 1;
            let c = Configuration::new(n.clone()).unwrap();
            if raw.feasible(sla, &c) {
                let total = c.total();
                if best.is_none_or(|b| total < b) {
                    *best = Some(total);
                }
            }
            return;
        }
        let mut x = lo[k];
        while used + u64::from(x) + rest - u64::from(lo[k]) <= budget {
            n[k] = x;
            go(raw, sla, lo, n, k + 1, budget, best, visited);
            x += 1;
        }
        n[k] = lo[k];
    }
    go(raw, sla, &lo, &mut n, 0, budget, &mut best, &mut visited);
    (best, visited)
}
