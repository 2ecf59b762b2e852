use super::*;
use crate::channel::ChannelRealization;
use crate::linalg::{complex_normal, CMat};
use crate::rng::{stream, Purpose, SimRng};
use proptest::prelude::*;
use rand::Rng;

fn scalar_problem(h: f64, cov: f64, noise: f64, power: f64) -> AggregationProblem {
    let view = ReceiverView {
        h_hat: vec![CVec::from_element(1, c(h, 0.0))],
        err_cov: vec![CMat::from_element(1, 1, c(cov, 0.0))],
    };
    let weights = AggregationWeights::from_dataset_sizes(&[0], &[1]);
    AggregationProblem::shared(view, weights, vec![power], noise)
}

fn random_cov(n: usize, scale: f64, rng: &mut SimRng) -> CMat {
    let cols: Vec<CVec> = (0..n).map(|_| complex_normal(n, rng)).collect();
    let g = CMat::from_columns(&cols);
    &g * g.adjoint() * c(scale / n as f64, 0.0)
}

/// Random estimates `[device][receiver]` and error covariances.
fn random_links(k: usize, l: usize, n: usize, rng: &mut SimRng) -> (Vec<Vec<CVec>>, Vec<Vec<CMat>>) {
    let h = (0..k)
        .map(|_| (0..l).map(|_| complex_normal(n, rng) * c(rng.random_range(0.2..2.0), 0.0)).collect())
        .collect();
    let cov = (0..k)
        .map(|_| (0..l).map(|_| random_cov(n, rng.random_range(0.01..0.3), rng)).collect())
        .collect();
    (h, cov)
}

fn random_weights(groups: usize, per_group: usize, rng: &mut SimRng) -> AggregationWeights {
    let group_of_device: Vec<usize> = (0..groups * per_group).map(|k| k / per_group).collect();
    let sizes: Vec<usize> = group_of_device.iter().map(|_| rng.random_range(10..100)).collect();
    let mut w = AggregationWeights::from_dataset_sizes(&group_of_device, &sizes);
    w.nu = w.nu.iter().map(|_| rng.random_range(0.1..1.5)).collect();
    w.theta_bar = w.theta_bar.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    w.omega = w.omega.iter().map(|_| rng.random_range(0.5..2.0)).collect();
    w
}

fn desk_problem(seed: u64) -> (AggregationProblem, Vec<Vec<CVec>>, Vec<Vec<CMat>>) {
    let mut rng = stream(seed, 0, Purpose::Instance, 0);
    let (h, cov) = random_links(6, 4, 2, &mut rng);
    let weights = random_weights(2, 3, &mut rng);
    let power: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..4.0)).collect();
    let p = AggregationProblem::shared(stacked_view(&h, &cov), weights, power, 0.1);
    (p, h, cov)
}

#[test]
fn zero_combiner_leaves_target() {
    let (p, ..) = desk_problem(1);
    let b = TxCoefficients::full_power(&p.power);
    let v = CVec::zeros(8);
    for g in 0..2 {
        let expected: f64 = p
            .weights
            .members(g)
            .map(|j| (p.weights.gamma[j] * p.weights.nu[j]).powi(2))
            .sum();
        assert!((mse_level3(&p, &b, &v, g) - expected).abs() < 1e-14);
    }
}

#[test]
fn scalar_mse_and_combiner() {
    let p = scalar_problem(1.0, 0.0, 1.0, 1.0);
    let b = TxCoefficients { b: vec![c(1.0, 0.0)] };
    let v = CVec::from_element(1, c(0.5, 0.0));
    assert!((mse_level3(&p, &b, &v, 0) - 0.5).abs() < 1e-15);
    let opt = combiner_level3(&p, &b, 0);
    assert!((opt[0] - c(0.5, 0.0)).norm() < 1e-15);
    assert!((combiner_level1(&p, &b, 0)[0] - c(0.5, 0.0)).norm() < 1e-15);
}

#[test]
fn zero_coefficients_give_zero_combiner() {
    let (p, ..) = desk_problem(2);
    let b = TxCoefficients { b: vec![c(0.0, 0.0); 6] };
    for g in 0..2 {
        assert_eq!(combiner_level3(&p, &b, g).norm(), 0.0);
    }
}

#[test]
fn tco_examples() {
    let p = scalar_problem(1.0, 0.0, 1.0, 100.0);
    let v = vec![CVec::from_element(1, c(1.0, 0.0))];
    let s = tco_step(&p, &v, 0);
    assert_eq!(s.mu, 0.0);
    assert!((s.b - c(1.0, 0.0)).norm() < 1e-15);

    let p = scalar_problem(1.0, 1.0, 1.0, 100.0);
    let s = tco_step(&p, &v, 0);
    assert!((s.b - c(0.5, 0.0)).norm() < 1e-15);

    let p = scalar_problem(1.0, 0.0, 1.0, 0.25);
    let s = tco_step(&p, &v, 0);
    assert!(s.mu > 0.0);
    assert!((s.b.norm_sqr() - 0.25).abs() < 1e-15);
    assert!(s.b.norm_sqr() <= 0.25);
}

#[test]
fn fixed_point_stops_after_one_iteration() {
    // full power is on the boundary and already optimal
    let p = scalar_problem(1.0, 0.0, 1.0, 0.01);
    let sol = alternating_optimize(&p, &SolverOptions::default(), None);
    assert_eq!(sol.history.iterations, 1);
    assert_eq!(sol.history.terminated_by, Termination::Threshold);
    assert_eq!(sol.history.values[0], sol.history.values[1]);
}

#[test]
fn desk_instance_terminates_by_threshold() {
    let (p, ..) = desk_problem(7);
    let sol = alternating_optimize(&p, &SolverOptions::default(), None);
    assert_eq!(sol.history.terminated_by, Termination::Threshold);
    assert!(sol.history.iterations <= 500);
    assert!(sol.history.last() <= sol.history.initial());
}

#[test]
fn without_tco_keeps_full_power() {
    let (p, ..) = desk_problem(8);
    let opts = SolverOptions { tco: false, ..SolverOptions::default() };
    let sol = alternating_optimize(&p, &opts, None);
    assert_eq!(sol.b, TxCoefficients::full_power(&p.power));
    assert_eq!(sol.history.terminated_by, Termination::FixedPower);
    assert_eq!(sol.history.values.len(), 1);
}

#[test]
fn single_ap_level1_matches_level3() {
    let mut rng = stream(3, 0, Purpose::Instance, 0);
    let (h, cov) = random_links(4, 1, 3, &mut rng);
    let w = random_weights(2, 2, &mut rng);
    let power = vec![1.0; 4];
    let local = level1_combiners(&h, &cov, &w, &power, 0.2);
    let p = AggregationProblem::shared(stacked_view(&h, &cov), w, power.clone(), 0.2);
    let b = TxCoefficients::full_power(&power);
    for g in 0..2 {
        assert_eq!(local[g][0], combiner_level3(&p, &b, g));
    }
}

#[test]
fn level1_mse_special_cases() {
    let mut rng = stream(4, 0, Purpose::Instance, 0);
    let (h, cov) = random_links(4, 1, 3, &mut rng);
    let w = random_weights(2, 2, &mut rng);
    let power = vec![1.0; 4];
    let truth = ChannelRealization { h: h.iter().map(|r| r.iter().map(|x| x * c(1.1, 0.2)).collect()).collect() };
    let local = level1_combiners(&h, &cov, &w, &power, 0.2);
    let b = TxCoefficients::full_power(&power);

    // single AP: the estimate-conditioned formula with the true channel and no error term
    let zero_cov: Vec<Vec<CMat>> = cov.iter().map(|r| r.iter().map(|m| m * c(0.0, 0.0)).collect()).collect();
    let exact = AggregationProblem::shared(stacked_view(&truth.h, &zero_cov), w.clone(), power.clone(), 0.2);
    for g in 0..2 {
        let a = mse_level1(&b, &local[g], &truth, &w, g, 0.2);
        let e = group_mse(&exact, &b.b, &local[g][0], g);
        assert!((a - e).abs() <= 1e-12 * e);
    }

    let zero = TxCoefficients { b: vec![c(0.0, 0.0); 4] };
    for g in 0..2 {
        let target: f64 = w.members(g).map(|j| (w.gamma[j] * w.nu[j]).powi(2)).sum();
        let z = 0.2 * local[g][0].norm_squared();
        assert!((mse_level1(&zero, &local[g], &truth, &w, g, 0.2) - target - z).abs() < 1e-12);
    }
}

#[test]
fn noiseless_recovery_inverts_single_device() {
    let mut p = scalar_problem(0.7, 0.0, 1e-14, 1.0);
    p.weights.nu = vec![0.8];
    p.weights.theta_bar = vec![0.3];
    let b = TxCoefficients::full_power(&p.power);
    let v = combiner_level3(&p, &b, 0);
    let truth = ChannelRealization { h: vec![vec![CVec::from_element(1, c(0.7, 0.0))]] };
    let mut rng = stream(0, 0, Purpose::DataNoise, 0);
    let y = received_signals(&truth, &b, &[1.25], 0.0, &mut rng);
    let theta = recover_level3(&v, &y[0], &p.weights, 0);
    assert!((theta.re - (0.8 * 1.25 + 0.3)).abs() < 1e-8);
}

#[test]
fn zero_signal_recovers_mean_offset() {
    let (p, ..) = desk_problem(5);
    let y: Vec<CVec> = (0..4).map(|_| CVec::zeros(2)).collect();
    let v = CVec::from_element(8, c(0.3, -0.2));
    for g in 0..2 {
        let off = p.weights.mean_offset(g);
        assert_eq!(recover_level3(&v, &crate::linalg::stack(&y), &p.weights, g).re, off);
        assert_eq!(recover_level2(&v, &y, &p.weights, g).re, off);
        assert_eq!(recover_level1(&vec![v.rows(0, 2).into_owned(); 4], &y, &p.weights, g).re, off);
    }
}

#[test]
fn cellular_with_one_colocated_bs_matches_level3() {
    let (p, h, cov) = desk_problem(6);
    let mut w = p.weights.clone();
    w.group_of_device = vec![0; 6];
    w.omega = vec![1.0];
    w.gamma = vec![1.0 / 6.0; 6];
    let stacked = stacked_view(&h, &cov);
    let bs_h: Vec<Vec<CVec>> = stacked.h_hat.iter().map(|x| vec![x.clone()]).collect();
    let bs_c: Vec<Vec<CMat>> = stacked.err_cov.iter().map(|x| vec![x.clone()]).collect();
    let cell = cellular_problem(&bs_h, &bs_c, w.clone(), p.power.clone(), p.noise_var);
    let cf = AggregationProblem::shared(stacked, w, p.power.clone(), p.noise_var);
    let opts = SolverOptions::default();
    let a = cellular_optimize(&cell, &opts);
    let b = alternating_optimize(&cf, &opts, None);
    assert_eq!(a.b, b.b);
    assert_eq!(a.history, b.history);
}

#[test]
fn registry_selects_by_name() {
    let r = SchemeRegistry::builtin();
    let names: Vec<_> = r.names().collect();
    assert_eq!(names, ["cellular", "errorfree", "level1", "level2", "level3"]);
    assert_eq!(r.get("level2").unwrap().name(), "level2");
    assert_eq!(r.get("level4").unwrap_err(), AggregationError::UnknownScheme("level4".into()));
}

#[test]
fn scheme_without_links_reports_them_missing() {
    let w = AggregationWeights::from_dataset_sizes(&[0, 0], &[1, 1]);
    let inputs = RoundInputs { weights: &w, power: &[1.0, 1.0], noise_var: 1.0, cell_free: None, cellular: None };
    let err = Level3.design(&inputs, &SolverOptions::default(), None).unwrap_err();
    assert_eq!(err, AggregationError::MissingLinks("level3"));
    assert!(ErrorFree.design(&inputs, &SolverOptions::default(), None).is_ok());
}

#[test]
fn unnormalized_weights_are_rejected() {
    let mut w = AggregationWeights::from_dataset_sizes(&[0, 0], &[1, 1]);
    w.gamma[0] = 0.7;
    assert!(matches!(w.validate(), Err(AggregationError::WeightsNotNormalized { group: 0, .. })));
}

#[test]
fn zero_nu_device_contributes_only_through_offset() {
    let (mut p, ..) = desk_problem(9);
    p.weights.nu[0] = 0.0;
    let sol = alternating_optimize(&p, &SolverOptions::default(), None);
    assert!(sol.history.last().is_finite());
    assert_eq!(p.weights.target(0, 0), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn history_is_monotone_and_kkt_holds(seed in 0u64..10_000) {
        let (p, ..) = desk_problem(seed);
        let sol = alternating_optimize(&p, &SolverOptions::default(), None);
        for w in sol.history.values.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert!(sol.b.feasible(&p.power));
        for k in 0..6 {
            let slack = sol.multipliers[k] * (sol.b.b[k].norm_sqr() - p.power[k]);
            prop_assert!(slack.abs() <= 1e-8);
        }
    }

    #[test]
    fn combiner_is_a_global_minimizer(seed in 0u64..10_000) {
        let (p, ..) = desk_problem(seed);
        let mut rng = stream(seed, 1, Purpose::Instance, 0);
        let b = TxCoefficients {
            b: p.power.iter().map(|q| c(q.sqrt() * rng.random_range(0.1..1.0), rng.random_range(-0.5..0.5))).collect(),
        };
        for g in 0..2 {
            let v = combiner_level3(&p, &b, g);
            let base = mse_level3(&p, &b, &v, g);
            for _ in 0..20 {
                let u = complex_normal(v.len(), &mut rng);
                let u = &u * c(v.norm() / u.norm(), 0.0);
                for eps in [1e-3, 1e-2] {
                    let moved = &v + &u * c(eps, 0.0);
                    prop_assert!(mse_level3(&p, &b, &moved, g) >= base * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn level2_recovery_equals_level3(seed in 0u64..10_000) {
        let (p, ..) = desk_problem(seed);
        let mut rng = stream(seed, 2, Purpose::DataNoise, 0);
        let y: Vec<CVec> = (0..4).map(|_| complex_normal(2, &mut rng)).collect();
        let sol = alternating_optimize(&p, &SolverOptions::default(), None);
        let ys = crate::linalg::stack(&y);
        for g in 0..2 {
            let a = recover_level3(&sol.combiners[g], &ys, &p.weights, g);
            let b = recover_level2(&sol.combiners[g], &y, &p.weights, g);
            prop_assert!((a - b).norm() <= 1e-10 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn level3_never_worse_than_level1(seed in 0u64..10_000) {
        let (p, h, cov) = desk_problem(seed);
        let local = level1_combiners(&h, &cov, &p.weights, &p.power, p.noise_var);
        let b = TxCoefficients::full_power(&p.power);
        let stacked: Vec<CVec> = local.iter().map(|v| level1_stacked(v)).collect();
        let l1 = weighted_sum_mse(&p, &b.b, &stacked);
        let l3 = alternating_optimize(&p, &SolverOptions::default(), None).history.last();
        prop_assert!(l3 <= l1 * (1.0 + 1e-12));
    }

    #[test]
    fn cellular_history_is_monotone(seed in 0u64..10_000) {
        let mut rng = stream(seed, 0, Purpose::Instance, 1);
        let (h, cov) = random_links(6, 4, 8, &mut rng);
        let w = random_weights(2, 3, &mut rng);
        let p = cellular_problem(&h, &cov, w, vec![1.0; 6], 0.1);
        let sol = cellular_optimize(&p, &SolverOptions::default());
        for pair in sol.history.values.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12);
        }
    }
}

