use proptest::prelude::*;
use sparse_mcmc::certificate::{
    bottleneck_ratio, build_ascent_tree, exact_mixing_probe, exact_stationary, hitting_probability,
    theorem_2_3_bounds, HamiltonianTable, DEFAULT_STATE_BUDGET,
};
use sparse_mcmc::gam::generate_gam;
use sparse_mcmc::landscape::overlap_shells;
use sparse_mcmc::math::binomial;
use sparse_mcmc::{overlap, Error, Support};

fn overlap_table(p: u32, k: u32, planted: &Support) -> HamiltonianTable {
    HamiltonianTable::from_fn(p, k, DEFAULT_STATE_BUDGET, |s| Ok(overlap(s, planted)? as f64)).unwrap()
}

fn assert_tree_valid(table: &HamiltonianTable) {
    let report = build_ascent_tree(table).unwrap();
    let delta = report.delta.unwrap();
    let root = table.argmax();
    for start in 0..table.len() {
        let (mut at, mut steps) = (start, 0);
        while let Some(q) = report.parent[at] {
            assert!(table.neighbor_ranks(at).contains(&q));
            assert!(table.value(q) - table.value(at) >= delta - 1e-15);
            at = q;
            steps += 1;
        }
        assert_eq!(at, root);
        assert!(2 * steps <= report.diameter);
    }
}

#[test]
fn overlap_objective_certificate() {
    let planted = Support::new(6, vec![1, 4]).unwrap();
    let table = overlap_table(6, 2, &planted);
    let report = build_ascent_tree(&table).unwrap();
    assert_eq!(report.delta, Some(1.0));
    assert!(report.diameter <= 4);
    assert_eq!(report.n_states, 15);
    assert_eq!(report.max_degree, 8);
    assert_eq!(report.r_h, 2.0);
    assert_eq!(report.root, planted);
    assert_tree_valid(&table);
}

#[test]
fn second_local_maximum_traps() {
    let planted = Support::new(5, vec![0, 1]).unwrap();
    let mut values = Vec::new();
    let indexer = sparse_mcmc::SupportIndexer::new(5, 2).unwrap();
    for s in indexer.all() {
        let v = if s.indices() == [2, 3] { 1.5 } else { overlap(&s, &planted).unwrap() as f64 };
        values.push(v);
    }
    let table = HamiltonianTable::from_values(5, 2, values).unwrap();
    match build_ascent_tree(&table) {
        Err(Error::Trapped { state }) => assert_eq!(state, vec![2, 3]),
        other => panic!("expected a trapped state, got {other:?}"),
    }
}

#[test]
fn single_state_space() {
    let table = HamiltonianTable::from_values(3, 3, vec![0.7]).unwrap();
    let report = build_ascent_tree(&table).unwrap();
    assert_eq!(report.delta, None);
    assert_eq!(report.bounds, None);
    assert_eq!(report.diameter, 0);
    assert_eq!(report.pi_mass_at_optimum, 1.0);
}

#[test]
fn tied_maximum_is_degenerate() {
    assert!(matches!(HamiltonianTable::from_values(3, 1, vec![1.0, 1.0, 0.0]), Err(Error::Degenerate(_))));
    assert!(matches!(HamiltonianTable::from_values(3, 1, vec![1.0, 0.0]), Err(Error::InvalidInput(_))));
}

#[test]
fn state_budget_is_enforced() {
    let err = HamiltonianTable::from_fn(30, 10, DEFAULT_STATE_BUDGET, |_| Ok(0.0)).unwrap_err();
    assert!(err.is_resource());
}

#[test]
fn bound_formulas() {
    let b = theorem_2_3_bounds(1.0, 4.0, 10.0, 2.0, 15.0, 1.0).unwrap();
    assert!((b.beta1 - 4.302585).abs() < 1e-6);
    let b = theorem_2_3_bounds(2.0, 4.0, 10.0, 3.0, 15.0, 1.0).unwrap();
    assert!((b.beta2 - 6.802395).abs() < 1e-6);
    assert!((b.mix2 - 15.0).abs() < 1e-12);
    assert!((b.mix1 - 4.0 * 10.0 * (15f64.ln() + 3.0)).abs() < 1e-12);
    for c in [0.01, 1.0, 7.5, 300.0] {
        let b = theorem_2_3_bounds(c, 4.0, 10.0, 3.0 * c, 15.0, 1.0).unwrap();
        assert!((b.beta1 * c - (10f64.ln() + 2.0)).abs() < 1e-12);
        assert!((b.beta2 * c / 2.0 - (15f64.ln() + 120f64.ln())).abs() < 1e-12);
    }
    assert!(theorem_2_3_bounds(0.0, 4.0, 10.0, 3.0, 15.0, 1.0).is_err());
}

#[test]
fn stationary_examples() {
    let table = HamiltonianTable::from_values(2, 1, vec![0.0, 1.0]).unwrap();
    let pi = exact_stationary(&table, 3f64.ln()).unwrap();
    assert!((pi[0] - 0.25).abs() < 1e-15 && (pi[1] - 0.75).abs() < 1e-15);
    let inst = generate_gam(7, 3, 2, 5.0, 1).unwrap();
    let table = HamiltonianTable::from_model(&inst).unwrap();
    let pi = exact_stationary(&table, 0.0).unwrap();
    assert!(pi.iter().all(|&x| (x - 1.0 / 35.0).abs() < 1e-15));
    // huge beta must not overflow
    let pi = exact_stationary(&table, 1e6).unwrap();
    assert!((pi[table.argmax()] - 1.0).abs() < 1e-12);
}

#[test]
fn certified_mass_at_optimum() {
    let mut certified = 0;
    for seed in 0..30 {
        let inst = generate_gam(8, 2, 2, 30.0, seed).unwrap();
        let table = HamiltonianTable::from_model(&inst).unwrap();
        let Ok(report) = build_ascent_tree(&table) else { continue };
        certified += 1;
        let b = report.bounds.unwrap();
        for beta in [b.beta1, 2.0 * b.beta1] {
            let pi = exact_stationary(&table, beta).unwrap();
            assert!(pi[table.argmax()] >= 0.75, "seed {seed}: {}", pi[table.argmax()]);
        }
        assert_tree_valid(&table);
    }
    assert!(certified > 0);
}

#[test]
fn bottleneck_ratio_basics() {
    let inst = generate_gam(7, 2, 2, 5.0, 4).unwrap();
    let table = HamiltonianTable::from_model(&inst).unwrap();
    let all: Vec<usize> = (0..table.len()).collect();
    let some = vec![0, 3, 5];
    assert!((bottleneck_ratio(&table, 2.0, &all, &all).unwrap() - 1.0).abs() < 1e-15);
    assert!((bottleneck_ratio(&table, 0.0, &some, &all).unwrap() - 3.0 / 21.0).abs() < 1e-15);
    assert!(matches!(bottleneck_ratio(&table, 1.0, &some, &[]), Err(Error::InvalidInput(_))));
    assert!(bottleneck_ratio(&table, 1.0, &[1], &[2]).is_err());
}

#[test]
fn bottleneck_ratio_low_temperature_limit() {
    let inst = generate_gam(7, 2, 2, 5.0, 4).unwrap();
    let table = HamiltonianTable::from_model(&inst).unwrap();
    let mut sorted = table.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let beta = 1e3 / (sorted[0] - sorted[1]);
    let top = table.argmax();
    let with: Vec<usize> = (0..table.len()).filter(|&r| r % 2 == top % 2).collect();
    let without: Vec<usize> = (0..table.len()).filter(|&r| r % 2 != top % 2).collect();
    let all: Vec<usize> = (0..table.len()).collect();
    assert!((bottleneck_ratio(&table, beta, &with, &all).unwrap() - 1.0).abs() < 1e-12);
    assert!(bottleneck_ratio(&table, beta, &without, &all).unwrap() < 1e-12);
}

#[test]
fn shell_bottleneck_inequality() {
    for seed in 0..10 {
        let inst = generate_gam(14, 3, 2, 2.0, seed).unwrap();
        let table = HamiltonianTable::from_model(&inst).unwrap();
        let shells = overlap_shells(&table, inst.planted()).unwrap();
        let gamma: Vec<f64> = shells
            .iter()
            .map(|s| s.iter().map(|&r| table.value(r)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let total = binomial(14, 3).unwrap() as f64;
        for ell in 1..=3usize {
            let enclosing: Vec<usize> = shells[..=ell].concat();
            let prefix = gamma[..=ell].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for beta in [0.1, 1.0, 10.0] {
                let ratio = bottleneck_ratio(&table, beta, &shells[ell], &enclosing).unwrap();
                let bound = total * (beta * (gamma[ell] - prefix)).exp();
                assert!(ratio <= bound * (1.0 + 1e-12), "seed {seed}, ell {ell}: {ratio} > {bound}");
            }
        }
    }
}

#[test]
fn mixing_probe_behaviour() {
    let inst = generate_gam(6, 2, 2, 3.0, 7).unwrap();
    let table = HamiltonianTable::from_model(&inst).unwrap();
    let beta = 1.5;
    let pi = exact_stationary(&table, beta).unwrap();
    let zero = exact_mixing_probe(&table, beta, 0).unwrap();
    let smallest = pi.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((zero.tv - (1.0 - smallest)).abs() < 1e-12);
    let mut last = zero.tv;
    for t in [1u64, 2, 4, 8, 16, 32, 64, 128, 256] {
        let tv = exact_mixing_probe(&table, beta, t).unwrap().tv;
        assert!(tv <= last + 1e-12, "T={t}: {tv} > {last}");
        last = tv;
    }
    assert!(last < 1e-3);
    let big = generate_gam(20, 4, 2, 1.0, 0).unwrap();
    assert!(exact_mixing_probe(&HamiltonianTable::from_model(&big).unwrap(), 1.0, 1).unwrap_err().is_resource());
}

#[test]
fn certified_chain_hits_optimum_within_bound() {
    let mut checked = 0;
    for seed in 0..20 {
        let inst = generate_gam(8, 2, 2, 30.0, seed).unwrap();
        let table = HamiltonianTable::from_model(&inst).unwrap();
        let Ok(report) = build_ascent_tree(&table) else { continue };
        let b = report.bounds.unwrap();
        if b.mix1 > 2e5 {
            continue;
        }
        let hit = hitting_probability(&table, b.beta1, b.mix1.ceil() as u64).unwrap();
        assert!(hit >= 2.0 / 3.0, "seed {seed}: {hit}");
        checked += 1;
    }
    assert!(checked >= 5, "{checked}");
}

#[test]
fn report_exports() {
    let planted = Support::new(5, vec![0, 2]).unwrap();
    let table = overlap_table(5, 2, &planted);
    let report = build_ascent_tree(&table).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(json["delta"], 1.0);
    assert!(json["bounds"]["beta1"].as_f64().unwrap() > 0.0);
    let dot = report.to_dot(&table);
    assert!(dot.starts_with("digraph"));
    assert_eq!(dot.matches("->").count(), 9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn certificate_soundness(values in proptest::collection::vec(-5.0f64..5.0, 28)) {
        let Ok(table) = HamiltonianTable::from_values(8, 2, values) else { return Ok(()) };
        if let Ok(report) = build_ascent_tree(&table) {
            let beta1 = report.bounds.unwrap().beta1;
            let pi = exact_stationary(&table, beta1).unwrap();
            prop_assert!(pi[table.argmax()] >= 0.75 - 1e-12);
            prop_assert!((report.pi_mass_at_optimum - pi[table.argmax()]).abs() < 1e-12);
        }
    }
}
