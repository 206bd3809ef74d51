mod common;

use common::{brute_force_min_total, cfg, random_base, random_sla, rng, Raw};
use qnas_core::planner::{is_feasible, Planner, SlaThresholds};
use qnas_core::qn::{min_feasible_config, rescale_snapshot, BaselineSnapshot};
use qnas_core::QnError;

/// Every single-decrement neighbor of `config` is infeasible.
fn pareto_violations(raw: &Raw, sla: &SlaThresholds, config: &qnas_core::Configuration) -> Vec<usize> {
    (0..config.len())
        .filter(|&k| config.get(k) >= 2)
        .filter(|&k| raw.feasible(sla.as_slice(), &config.decremented(k).unwrap()))
        .collect()
}

#[test]
fn acquire_output_meets_every_threshold() {
    let planner = Planner::default();
    for seed in 0..600 {
        let mut r = rng(seed);
        let base = random_base(&mut r, 5, 10);
        let sla = random_sla(&mut r, &base, 1.05, 4.0);
        let raw = Raw::of(&base);
        let out = planner.acquire(&base, &sla).unwrap();
        assert!(raw.feasible(sla.as_slice(), &out.config), "seed {seed}");
        assert!(base.ref_config().is_dominated_by(&out.config));
    }
}

#[test]
fn each_acquire_step_picks_the_steepest_station_for_the_worst_class() {
    let planner = Planner::default();
    for seed in 0..300 {
        let mut r = rng(10_000 + seed);
        let base = random_base(&mut r, 4, 8);
        let sla = random_sla(&mut r, &base, 1.05, 2.0);
        let raw = Raw::of(&base);
        let t = sla.as_slice();
        let out = planner.acquire(&base, &sla).unwrap();

        let lo = min_feasible_config(&base);
        let mut n = base.ref_config().componentwise_max(&lo).unwrap();
        assert_eq!(n.total() - base.ref_config().total(), out.precondition_additions);
        for step in &out.steps {
            let resp: Vec<f64> = (0..t.len()).map(|c| raw.response_int(c, &n).unwrap()).collect();
            let gaps: Vec<f64> = resp.iter().zip(t).map(|(r, m)| (r - m) / m).collect();
            let worst = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(worst > 0.0);
            assert_eq!(step.class, gaps.iter().position(|&g| g == worst).unwrap(), "seed {seed}");

            let drops: Vec<f64> = (0..n.len())
                .map(|k| resp[step.class] - raw.response_int(step.class, &n.incremented(k)).unwrap())
                .collect();
            let best = drops.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // Ties resolve to the lowest index; allow rounding noise between
            // the two implementations.
            let first = drops.iter().position(|&d| d >= best - 1e-12 * best.abs().max(1e-300)).unwrap();
            assert_eq!(step.station, first, "seed {seed}");
            assert!((step.reduction - drops[step.station]).abs() <= 1e-9 * best.max(1.0));
            n = n.incremented(step.station);
        }
        assert_eq!(n, out.config);
    }
}

#[test]
fn release_output_has_no_feasible_decrement() {
    let planner = Planner::default();
    let mut removals = 0;
    for seed in 0..500 {
        let mut r = rng(20_000 + seed);
        let base = random_base(&mut r, 5, 10);
        let sla = random_sla(&mut r, &base, 1.05, 4.0);
        let acquired = planner.acquire(&base, &sla).unwrap().config;
        // Start well above the acquire output so release has work to do.
        let start = cfg(&acquired.counts().iter().map(|&n| n + 2).collect::<Vec<_>>());
        let at_start = rescale_snapshot(&base, &start).unwrap();
        let out = planner.release(&at_start, &sla).unwrap();
        let raw = Raw::of(&base);
        assert!(raw.feasible(sla.as_slice(), &out.config), "seed {seed}");
        assert!(pareto_violations(&raw, &sla, &out.config).is_empty(), "seed {seed}");
        let bound: u64 = start.counts().iter().map(|&n| u64::from(n) - 1).sum();
        assert!(out.iterations <= bound);
        assert_eq!(out.iterations as usize, out.removed.len());
        assert_eq!(start.total() - out.config.total(), out.iterations);
        removals += out.iterations;
    }
    assert!(removals > 0);
}

#[test]
fn plan_step_is_feasible_and_pareto_optimal() {
    for seed in 0..500 {
        let mut r = rng(30_000 + seed);
        let base = random_base(&mut r, 5, 10);
        let sla = random_sla(&mut r, &base, 1.05, 4.0);
        let out = qnas_core::plan_step(&base, &sla).unwrap();
        let raw = Raw::of(&base);
        assert!(out.feasible);
        assert!(is_feasible(&base, &sla, &out.new_config));
        assert!(sla.satisfied_by(&out.predicted_response.per_class));
        assert!(pareto_violations(&raw, &sla, &out.new_config).is_empty(), "seed {seed}");
    }
}

#[test]
fn greedy_total_is_within_thirty_percent_of_optimum() {
    let mut instances = 0;
    let mut worst: f64 = 1.0;
    let mut seed = 40_000;
    while instances < 120 {
        seed += 1;
        let mut r = rng(seed);
        let base = random_base(&mut r, 3, 4);
        let sla = random_sla(&mut r, &base, 1.1, 3.0);
        let out = qnas_core::plan_step(&base, &sla).unwrap();
        let raw = Raw::of(&base);
        let lo: u64 = raw.min_counts().iter().map(|&n| u64::from(n)).sum();
        let slack = out.new_config.total() - lo;
        // Configurations with total <= budget: C(slack + K, K).
        let k = base.stations() as u64;
        let space = (1..=k).fold(1u128, |acc, i| acc * u128::from(slack + i) / u128::from(i));
        if space > 100_000 {
            continue;
        }
        let (best, visited) = brute_force_min_total(&raw, sla.as_slice(), out.new_config.total());
        assert_eq!(u128::from(visited), space);
        instances += 1;
        let best = best.expect("the greedy output itself is within budget");
        assert!(best <= out.new_config.total());
        let ratio = out.new_config.total() as f64 / best as f64;
        worst = worst.max(ratio);
        assert!(ratio <= 1.3, "seed {seed}: greedy {} vs optimum {best}", out.new_config.total());
    }
    println!("worst greedy/optimum ratio over {instances} instances: {worst:.3}");
}

#[test]
fn unattainable_threshold_names_the_class() {
    let base = common::bottleneck();
    // Class 2's floor is 0.5 + 0.5 = 1.0.
    let sla = SlaThresholds::new(vec![6.0, 1.0]).unwrap();
    let err = Planner::default().acquire(&base, &sla).unwrap_err();
    match err {
        QnError::UnattainableSla { class, floor, .. } => {
            assert_eq!(class, 1);
            assert!((floor - 1.0).abs() < 1e-12);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err_text(&base, &sla).contains("class 2"));
}

fn err_text(base: &BaselineSnapshot, sla: &SlaThresholds) -> String {
    Planner::default().plan_step(base, sla).unwrap_err().to_string()
}

#[test]
fn iteration_cap_surfaces_as_error() {
    let base = common::bottleneck();
    let sla = SlaThresholds::new(vec![2.1, 1.05]).unwrap();
    let err = Planner::new(1).acquire(&base, &sla).unwrap_err();
    assert!(matches!(err, QnError::IterationCap { cap: 1 }));
}
