use nalgebra::DMatrix;
use proptest::prelude::*;
use vnoma::optim::*;
use vnoma::outage::{
    outage_lower_bound, phi_table, power_law, snr_threshold, theta_table, PhiTable, PowerAllocation, RatePlan,
};
use vnoma::preset;

/// Rate-weighted asymptotic outage `Σ_k R_k φ_k θ_k^{−d}` of one row.
fn weighted_outage(zeta: &[f64], rates: &[f64], phi: &[f64], d: usize) -> f64 {
    let z = PowerAllocation::from_rows(&[zeta.to_vec()]).unwrap();
    let r = RatePlan::from_rows(&[rates.to_vec()]).unwrap();
    let t = theta_table(&z, &r).unwrap();
    (0..zeta.len())
        .map(|k| {
            let th = t.get(0, k);
            if th <= 0.0 {
                f64::INFINITY
            } else {
                rates[k] * power_law(phi[k], th, d)
            }
        })
        .sum()
}

fn row_phi(phi: &[f64], d: usize) -> PhiTable {
    PhiTable { phi: DMatrix::from_row_slice(1, phi.len(), phi), diversity: d, n_streams: 1 }
}

#[test]
fn two_cluster_power_beats_grid() {
    for snr in [50.0, 60.0, 70.0] {
        let dep = preset::two_cluster_deployment(snr);
        let phi = phi_table(&dep).unwrap();
        let r = RatePlan::broadcast(2.0, 1, 2).unwrap();
        let (z, t) = optimal_power(&r, &phi).unwrap();
        let best = asymptotic_goodput(&phi, &t, &r, false);
        let row: Vec<f64> = phi.phi.row(0).iter().copied().collect();
        let mut grid_best = f64::INFINITY;
        for i in 1..10_000 {
            let z1 = i as f64 * 1e-4;
            grid_best = grid_best.min(weighted_outage(&[z1, 1.0 - z1], &[2.0, 2.0], &row, phi.diversity));
        }
        let at_opt = weighted_outage(&[z.get(0, 0), z.get(0, 1)], &[2.0, 2.0], &row, phi.diversity);
        assert!(at_opt <= grid_best * (1.0 + 1e-12), "{snr} dB: {at_opt} vs grid {grid_best}");
        assert!(best > 0.0);
    }
}

#[test]
fn optimum_value_matches_margin_form() {
    let dep = preset::reference_deployment();
    let phi = phi_table(&dep).unwrap();
    let r = preset::reference_rates(&dep);
    let (_, t) = optimal_power(&r, &phi).unwrap();
    for m in 0..3 {
        for k in 0..4 {
            let direct = power_law(phi.get(m, k), t.get(m, k), phi.diversity);
            let closed = asymptotic_outage_at_optimum(m, k, &r, &phi).unwrap();
            assert!((direct / closed - 1.0).abs() < 1e-9);
            assert!(closed >= outage_lower_bound(m, k, &phi, &r) * (1.0 - 1e-12));
        }
    }
}

#[test]
fn bisection_residual_is_small() {
    let dep = preset::reference_deployment();
    let phi = phi_table(&dep).unwrap();
    let r = preset::reference_rates(&dep);
    let z = preset::reference_power(&r).unwrap();
    for m in 0..3 {
        let mut prefix = 0.0;
        for k in 0..4 {
            let eq = RateEquation { zeta: z.get(m, k), prefix, phi: phi.get(m, k), d: phi.diversity };
            let x = eq.solve(2.0).unwrap();
            assert!(eq.g(x).abs() < 1e-9 * eq.ell(x), "(m,k)=({m},{k}) g={}", eq.g(x));
            prefix += eq.zeta;
        }
    }
}

#[test]
fn scalar_rate_matches_scan() {
    let phi = row_phi(&[1e-3], 1);
    let z = PowerAllocation::from_rows(&[vec![1.0]]).unwrap();
    let (r, _) = optimal_rate(&z, &phi).unwrap();
    let f = |rate: f64| (1.0 - 1e-3 * (rate.exp2() - 1.0)) * rate;
    let argmax = (1..=1_000_000).map(|i| i as f64 * 1e-5).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
    assert!((r.get(0, 0) - argmax).abs() < 1e-4, "{} vs {argmax}", r.get(0, 0));
}

#[test]
fn joint_optimum_favours_near_clusters() {
    let dep = preset::reference_deployment();
    let res = joint_optimize(&RatePlan::broadcast(1.0, 3, 4).unwrap(), 1e-5, 5000, &dep).unwrap();
    assert!(res.converged);
    for m in 0..3 {
        for k in 1..4 {
            assert!(res.rates_star.get(m, k - 1) >= res.rates_star.get(m, k));
        }
    }
}

#[test]
fn converged_plan_is_a_fixed_point() {
    let dep = preset::reference_deployment();
    let first = joint_optimize(&RatePlan::broadcast(1.0, 3, 4).unwrap(), 1e-5, 5000, &dep).unwrap();
    let again = joint_optimize(&first.rates_star, 1e-5, 5000, &dep).unwrap();
    assert!(again.iterations <= 2, "{}", again.iterations);
    let gain = again.goodput_star - first.goodput_star;
    assert!((-1e-9..3e-5).contains(&gain), "{gain}");
}

#[test]
fn joint_optimum_dominates_default_plan() {
    let dep = preset::reference_deployment();
    let phi = phi_table(&dep).unwrap();
    let r = preset::reference_rates(&dep);
    let z = preset::reference_power(&r).unwrap();
    let baseline = asymptotic_goodput(&phi, &theta_table(&z, &r).unwrap(), &r, true);
    let res = joint_optimize(&RatePlan::broadcast(1.0, 3, 4).unwrap(), 1e-5, 5000, &dep).unwrap();
    assert!(res.goodput_star > baseline, "{} vs {baseline}", res.goodput_star);
}

#[test]
fn invalid_inputs_are_rejected() {
    let phi = row_phi(&[1e-3, 2e-3], 1);
    assert!(joint_optimize_with_phi(&RatePlan::from_rows(&[vec![1.0, 0.0]]).unwrap(), 1e-5, 10, &phi).is_err());
    assert!(joint_optimize_with_phi(&RatePlan::broadcast(1.0, 1, 2).unwrap(), 0.0, 10, &phi).is_err());
    assert!(optimal_power(&RatePlan::broadcast(1.0, 1, 3).unwrap(), &phi).is_err());
}

/// Random `(rates, φ)` rows with `φ` nondecreasing in `k`.
fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize)> {
    (2usize..=5, 1usize..=3).prop_flat_map(|(k, d)| {
        (
            prop::collection::vec(0.2f64..4.0, k),
            prop::collection::vec(1e-9f64..1e-4, k).prop_map(|mut v| {
                v.sort_by(f64::total_cmp);
                v
            }),
            Just(d),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn optimal_margins_sit_on_the_diagonal((rates, phi, d) in instance()) {
        let r = RatePlan::from_rows(std::slice::from_ref(&rates)).unwrap();
        let (z, t) = optimal_power(&r, &row_phi(&phi, d)).unwrap();
        for k in 0..rates.len() {
            prop_assert_eq!(t.argmin[(0, k)], k);
            prop_assert!(z.get(0, k) > 0.0);
        }
        for k in 1..rates.len() {
            let prev = z.get(0, k - 1) / snr_threshold(rates[k - 1]);
            prop_assert!(z.get(0, k) / snr_threshold(rates[k]) > prev);
        }
    }

    #[test]
    fn optimal_power_is_locally_optimal(
        (rates, phi, d) in instance(),
        dirs in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let kk = rates.len();
        let r = RatePlan::from_rows(std::slice::from_ref(&rates)).unwrap();
        let (z, _) = optimal_power(&r, &row_phi(&phi, d)).unwrap();
        let zs: Vec<f64> = z.row(0);
        let at = weighted_outage(&zs, &rates, &phi, d);
        let mean = dirs[..kk].iter().sum::<f64>() / kk as f64;
        for sign in [1.0, -1.0] {
            let moved: Vec<f64> = zs.iter().zip(&dirs).map(|(z, v)| z + sign * 1e-5 * z * (v - mean)).collect();
            let s: f64 = moved.iter().sum();
            let moved: Vec<f64> = moved.iter().map(|v| v / s).collect();
            prop_assert!(weighted_outage(&moved, &rates, &phi, d) >= at * (1.0 - 1e-12));
        }
    }

    #[test]
    fn rate_is_bracket_invariant((rates, phi, d) in instance()) {
        let table = row_phi(&phi, d);
        let r = RatePlan::from_rows(&[rates]).unwrap();
        let (z, _) = optimal_power(&r, &table).unwrap();
        let (a, _) = optimal_rate_with_bracket(&z, &table, 2.0).unwrap();
        let (b, _) = optimal_rate_with_bracket(&z, &table, 16.0).unwrap();
        for (x, y) in a.matrix().iter().zip(b.matrix().iter()) {
            prop_assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn trace_is_monotone_and_bounded((rates, phi, d) in instance()) {
        let table = row_phi(&phi, d);
        let res = joint_optimize_with_phi(&RatePlan::from_rows(&[rates]).unwrap(), 1e-5, 50, &table).unwrap();
        for w in res.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9);
        }
        prop_assert!(res.goodput_star <= goodput_upper_bound(&table, &res.rates_star) + 1e-9);
        for k in 0..res.rates_star.matrix().ncols() {
            prop_assert_eq!(res.theta_star.argmin[(0, k)], k);
        }
    }
}
