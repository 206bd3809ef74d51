//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{bottleneck, bottleneck_sla, cfg, random_base, random_sla, rng, Raw};
use qnas_core::cli::{run_sweep, ScenarioSection, SweepSection};
use qnas_core::qn::{predict_response, rescale_snapshot, utilization, Configuration};
use qnas_core::sim::des::{des_validate, DesSettings, Discipline, DEFAULT_WARMUP_FRACTION};
use qnas_core::sim::harness::{pearson, run_scenario, ScenarioSpec};
use qnas_core::telemetry::{observe, NoiseSpec};
use rand::Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: String) -> Outcome {
    Outcome { ok, detail }
}

fn bottleneck_shift() -> Outcome {
    let base = bottleneck();
    let u = base.utilizations_ref().as_slice().to_vec();
    let want = [1.5, 2.0 / 3.0, 1.5];
    let direct = utilization(base.rates(), base.demands_ref()).unwrap();
    let doubled = rescale_snapshot(&base, &cfg(&[2, 1, 1])).unwrap();
    let v = doubled.utilizations_ref().as_slice().to_vec();
    let ok = u.iter().zip(want).all(|(a, b)| (a - b).abs() <= 1e-12)
        && direct.as_slice() == u.as_slice()
        && (v[0] - 0.75).abs() <= 1e-12
        && (v[2] - 1.5).abs() <= 1e-12
        && doubled.utilizations_ref().overloaded() == vec![2];
    outcome(ok, format!("U(1,1,1) = {u:.6?}; after doubling station 1: {v:.6?}"))
}

fn bottleneck_plan() -> Outcome {
    let base = bottleneck();
    let sla = bottleneck_sla();
    let out = qnas_core::plan_step(&base, &sla).unwrap();
    let r = &out.predicted_response.per_class;
    let raw = Raw::of(&base);
    let mut optimum: Option<(u64, Vec<Vec<u32>>)> = None;
    for a in 1..=8 {
        for b in 1..=8 {
            for c in 1..=8 {
                let n = cfg(&[a, b, c]);
                if !raw.feasible(sla.as_slice(), &n) {
                    continue;
                }
                let t = n.total();
                match &mut optimum {
                    Some((best, arg)) if t == *best => arg.push(vec![a, b, c]),
                    Some((best, _)) if t > *best => {}
                    _ => optimum = Some((t, vec![vec![a, b, c]])),
                }
            }
        }
    }
    let (total, argmin) = optimum.unwrap();
    let ok = out.new_config == cfg(&[2, 1, 2])
        && (r[0] - 5.0).abs() <= 1e-12
        && (r[1] - 4.0).abs() <= 1e-12
        && total == 5
        && argmin == vec![vec![2, 1, 2]];
    outcome(
        ok,
        format!("plan {:?}, R = {r:?}; exhaustive optimum total {total} at {argmin:?}", out.new_config.counts()),
    )
}

fn pareto_certificate() -> Outcome {
    let mut failures = 0;
    let mut removals = 0;
    for seed in 0..500 {
        let mut r = rng(1_000_000 + seed);
        let base = random_base(&mut r, 5, 10);
        let sla = random_sla(&mut r, &base, 1.05, 4.0);
        let out = qnas_core::plan_step(&base, &sla).unwrap();
        removals += out.release_iterations;
        let raw = Raw::of(&base);
        let n = &out.new_config;
        let bad = !raw.feasible(sla.as_slice(), n)
            || (0..n.len()).any(|k| n.get(k) >= 2 && raw.feasible(sla.as_slice(), &n.decremented(k).unwrap()));
        failures += usize::from(bad);
    }
    outcome(failures == 0, format!("500 scenarios, {failures} failures, {removals} removals made"))
}

fn monotone_and_additive() -> Outcome {
    let mut r = rng(2_000_000);
    let (mut mono_fail, mut add_fail, mut worst_add) = (0, 0, 0.0f64);
    for _ in 0..1000 {
        let base = random_base(&mut r, 5, 10);
        let lo = qnas_core::min_feasible_config(&base);
        let small = cfg(&lo.counts().iter().map(|&n| n + r.random_range(0..4)).collect::<Vec<_>>());
        let large = cfg(&small.counts().iter().map(|&n| n + r.random_range(0..4)).collect::<Vec<_>>());
        let a = predict_response(&base, &small).unwrap().per_class;
        let b = predict_response(&base, &large).unwrap().per_class;
        mono_fail += usize::from(a.iter().zip(&b).any(|(x, y)| x < y));
    }
    let mut checks = 0;
    while checks < 1000 {
        let base = random_base(&mut r, 5, 10);
        if base.stations() < 2 {
            continue;
        }
        checks += 1;
        let lo = qnas_core::min_feasible_config(&base);
        let n = cfg(&lo.counts().iter().map(|&x| x + r.random_range(0..4)).collect::<Vec<_>>());
        let i = r.random_range(0..base.stations());
        let j = (i + r.random_range(1..base.stations())) % base.stations();
        let at = |c: &Configuration| predict_response(&base, c).unwrap().per_class;
        let (r0, ri, rj, rij) = (at(&n), at(&n.incremented(i)), at(&n.incremented(j)), at(&n.incremented(i).incremented(j)));
        let mut bad = false;
        for c in 0..r0.len() {
            let gap = ((r0[c] - rij[c]) - ((r0[c] - ri[c]) + (r0[c] - rj[c]))).abs();
            worst_add = worst_add.max(gap);
            bad |= gap > 1e-9;
        }
        add_fail += usize::from(bad);
    }
    outcome(
        mono_fail == 0 && add_fail == 0,
        format!("1000 monotonicity checks ({mono_fail} failed), 1000 additivity checks ({add_fail} failed, max gap {worst_add:.1e})"),
    )
}

fn des_cross_validation() -> Outcome {
    let base = bottleneck();
    let config = cfg(&[2, 1, 2]);
    let mut settings = DesSettings::new(Discipline::ProcessorSharing, 0.0, 42);
    settings.run_length = DesSettings::run_length_for(&base, DEFAULT_WARMUP_FRACTION, 10.5);
    let report = des_validate(&base, &config, &settings).unwrap();
    let resp: Vec<f64> = report.response.iter().map(|e| e.unwrap().mean).collect();
    let util: Vec<f64> = report.utilization.iter().map(|e| e.mean).collect();
    let ok = report.completions.iter().all(|&n| n >= 100_000)
        && resp.iter().zip([5.0, 4.0]).all(|(m, a)| (m - a).abs() / a <= 0.05)
        && util.iter().zip([0.75, 2.0 / 3.0, 0.75]).all(|(m, a)| (m - a).abs() <= 0.02);
    outcome(
        ok,
        format!("completions {:?}, R = {resp:.4?} vs (5, 4), U = {util:.4?}", report.completions),
    )
}

fn sweep_band_and_trend() -> Outcome {
    let section = ScenarioSection {
        horizon: Some(200),
        ..ScenarioSection::default()
    };
    let grid = SweepSection {
        classes: vec![10, 15, 20],
        stations: vec![20, 40, 60],
        seeds_per_cell: Some(3),
    };
    let cells = run_sweep(&section, &grid, 2024).unwrap();
    let mut ratios = Vec::new();
    let mut errors = 0;
    for cell in &cells {
        match &cell.outcome {
            Ok(s) => ratios.push((cell.classes, s.dynamic_static_ratio)),
            Err(_) => errors += 1,
        }
    }
    let mean = |c: usize| {
        let v: Vec<f64> = ratios.iter().filter(|r| r.0 == c).map(|r| r.1).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let lo = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let (m10, m15, m20) = (mean(10), mean(15), mean(20));
    let ok = errors == 0 && cells.len() == 27 && lo >= 0.5 && hi <= 0.85 && m10 <= m20;
    outcome(
        ok,
        format!("27 runs, ratios in [{lo:.3}, {hi:.3}]; row means C=10 {m10:.3}, C=15 {m15:.3}, C=20 {m20:.3}"),
    )
}

fn load_tracking() -> Outcome {
    let run = run_scenario(&ScenarioSpec::randomized(5, 10, 200, 3)).unwrap();
    let violations = run
        .steps
        .iter()
        .filter(|s| s.predicted.iter().zip(&s.thresholds).any(|(r, m)| r > m))
        .count();
    let load: Vec<f64> = run.steps.iter().map(|s| s.rates.total()).collect();
    let size: Vec<f64> = run.steps.iter().map(|s| s.total_instances as f64).collect();
    let corr = pearson(&load, &size).unwrap_or(f64::NAN);
    outcome(violations == 0 && corr > 0.0, format!("{violations} violating steps, corr(load, instances) = {corr:.3}"))
}

fn telemetry_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let mut r = rng(3_000_000 + seed);
        let truth = random_base(&mut r, 5, 10);
        let lo = qnas_core::min_feasible_config(&truth);
        let at = cfg(&lo.counts().iter().map(|&n| n + r.random_range(0..3)).collect::<Vec<_>>());
        let snap = observe(&truth, &at, &NoiseSpec::none(), &mut r).unwrap();
        for _ in 0..5 {
            let target = cfg(&lo.counts().iter().map(|&n| n + r.random_range(0..5)).collect::<Vec<_>>());
            let want = predict_response(&truth, &target).unwrap().per_class;
            let got = predict_response(&snap, &target).unwrap().per_class;
            for (g, w) in got.iter().zip(&want) {
                if *w > 0.0 {
                    worst = worst.max((g - w).abs() / w);
                } else {
                    worst = worst.max(g.abs());
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("100 scenarios x 5 targets, max relative error {worst:.2e}"))
}

fn main() -> ExitCode {
    type Criterion = (u32, &'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        (1, "bottleneck shift", Duration::from_millis(1), bottleneck_shift),
        (2, "planner end-to-end", Duration::from_millis(10), bottleneck_plan),
        (3, "release Pareto certificate", Duration::from_secs(30), pareto_certificate),
        (4, "monotonicity and additivity", Duration::from_secs(10), monotone_and_additive),
        (5, "DES cross-validation", Duration::from_secs(60), des_cross_validation),
        (6, "sweep ratio band and trend", Duration::from_secs(600), sweep_band_and_trend),
        (7, "allocation tracks load", Duration::from_secs(60), load_tracking),
        (8, "telemetry round trip", Duration::from_secs(5), telemetry_round_trip),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked".into()));
        let elapsed = start.elapsed();
        let ok = result.ok && elapsed <= budget;
        failed += usize::from(!ok);
        println!(
            "{} [{id}] {name}: {} ({:.3?}, budget {:?})",
            if ok { "PASS" } else { "FAIL" },
            result.detail,
            elapsed,
            budget
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
