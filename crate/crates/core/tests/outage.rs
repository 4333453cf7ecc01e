use nalgebra::DMatrix;
use proptest::prelude::*;
use vnoma::corrchan::{sort_clusters, ClusterSet, Deployment, SystemConfig};
use vnoma::mcsim::{estimate_outage, TrialPlan};
use vnoma::outage::*;
use vnoma::{optim, preset};

fn scalar_link(snr_db: f64) -> Deployment {
    let cfg = SystemConfig::new(1, 1, 1, 3.0, 1.0, snr_db, 0.0, 0.0).unwrap();
    Deployment::new(cfg, ClusterSet::from_distances(&[1.0], 3.0, 1.0).unwrap()).unwrap()
}

fn reference_tables(dep: &Deployment) -> (PowerAllocation, RatePlan, ThetaTable) {
    let r = preset::reference_rates(dep);
    let z = preset::reference_power(&r).unwrap();
    let t = theta_table(&z, &r).unwrap();
    (z, r, t)
}

#[test]
fn scalar_link_is_exponential() {
    let dep = scalar_link(10.0);
    let z = PowerAllocation::from_rows(&[vec![1.0]]).unwrap();
    let r = RatePlan::broadcast(1.0, 1, 1).unwrap();
    let t = theta_table(&z, &r).unwrap();
    let e = exact_outage(0, 0, &dep, &t).unwrap();
    assert!((e.p - (1.0 - (-0.1f64).exp())).abs() < 1e-14);
    let far = exact_outage(0, 0, &dep.with_snr_db(400.0), &t).unwrap();
    assert!(far.p < 1e-39);
}

#[test]
fn infeasible_margin_is_certain_outage() {
    let dep = preset::two_cluster_deployment(70.0);
    let z = PowerAllocation::from_rows(&[vec![0.5, 0.5]]).unwrap();
    let r = RatePlan::from_rows(&[vec![1.0, 2.0]]).unwrap();
    let t = theta_table(&z, &r).unwrap();
    let e = exact_outage(0, 1, &dep, &t).unwrap();
    assert!(e.infeasible && e.p == 1.0 && e.route.is_none());
    let rep = outage_report(&dep, &z, &r).unwrap();
    assert!(rep.entry(0, 1).flags.infeasible_theta);
    assert_eq!(rep.entry(0, 1).flags.labels(), vec!["infeasible-theta"]);
}

#[test]
fn uncorrelated_reference_matches_monte_carlo() {
    let dep = preset::reference_variant(2, 0.0, 70.0).unwrap();
    let (_, _, t) = reference_tables(&dep);
    let p = exact_outage(0, 0, &dep, &t).unwrap().p;
    let mc = estimate_outage(0, 0, &TrialPlan::new(1_000_000, 7).unwrap(), &dep, &t).unwrap();
    assert!((p - mc.p_hat).abs() < 3.0 * mc.std_err, "F̃={p} mc={mc:?}");
}

#[test]
fn correlated_reference_is_optimistic_against_monte_carlo() {
    let dep = preset::reference_variant(2, 0.5, 70.0).unwrap();
    let (_, _, t) = reference_tables(&dep);
    let p = exact_outage(0, 0, &dep, &t).unwrap().p;
    let mc = estimate_outage(0, 0, &TrialPlan::new(200_000, 7).unwrap(), &dep, &t).unwrap();
    assert!(mc.p_hat - p > 5.0 * mc.std_err, "F̃={p} mc={mc:?}");
}

#[test]
fn phi_closed_cases() {
    // M = 1, ρ_r = 0, ℓ = 1, unit inverse diagonal
    for n in 1..=4 {
        let cfg = SystemConfig::new(n, n, 1, 3.0, 1.0, 20.0, 0.0, 0.0).unwrap();
        let dep = Deployment::new(cfg, ClusterSet::from_distances(&[1.0], 3.0, 1.0).unwrap()).unwrap();
        let phi = phi_table(&dep).unwrap();
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        let want = 100f64.powi(-(n as i32)) / fact;
        assert!((phi.get(0, 0) / want - 1.0).abs() < 1e-12);
    }
    let cfg = SystemConfig::new(2, 1, 1, 3.0, 1.0, 20.0, 0.6, 0.0).unwrap();
    let dep = Deployment::new(cfg, ClusterSet::from_distances(&[2.0], 3.0, 1.0).unwrap()).unwrap();
    let phi = phi_table(&dep).unwrap();
    let want = dep.corr.inv_diag[0] / (100.0 * 0.125);
    assert!((phi.get(0, 0) / want - 1.0).abs() < 1e-12);
}

fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[test]
fn phi_matches_high_snr_fit() {
    let dep = preset::reference_variant(2, 0.5, 90.0).unwrap();
    let (_, _, t) = reference_tables(&dep);
    let (mut xs, mut ys) = (vec![], vec![]);
    for snr in (80..=100).step_by(2) {
        let d = dep.with_snr_db(snr as f64);
        xs.push(snr as f64 / 10.0);
        ys.push(exact_outage(0, 0, &d, &t).unwrap().p.log10());
    }
    let (slope, intercept) = fit_line(&xs, &ys);
    assert!((slope + 2.0).abs() < 0.01, "slope {slope}");
    let d100 = dep.with_snr_db(100.0);
    let asym = power_law(phi_table(&d100).unwrap().get(0, 0), t.get(0, 0), 2);
    let fitted = 10f64.powf(intercept + slope * 10.0);
    assert!((fitted / asym - 1.0).abs() < 0.01, "fit {fitted} asym {asym}");
}

#[test]
fn asymptote_tracks_exact_at_high_snr() {
    let dep = preset::reference_deployment().with_snr_db(100.0);
    let (z, r, _) = reference_tables(&dep);
    let rep = outage_report(&dep, &z, &r).unwrap();
    for e in &rep.entries {
        let p = e.p_exact_approx.unwrap();
        assert!((e.p_asym / p - 1.0).abs() < 0.1, "{e:?}");
    }
}

#[test]
fn goodput_matches_manual_summation() {
    let dep = preset::reference_deployment();
    let (z, r, t) = reference_tables(&dep);
    let rep = outage_report(&dep, &z, &r).unwrap();
    let mut manual = 0.0;
    for m in 0..3 {
        for k in 0..4 {
            manual += (1.0 - exact_outage(m, k, &dep, &t).unwrap().p) * 2.0;
        }
    }
    assert!((rep.goodput_exact.unwrap() - manual).abs() < 1e-12);
}

#[test]
fn diversity_examples() {
    let c = |m| SystemConfig::new(3, 3, m, 3.0, 1.0, 70.0, 0.5, 0.5).unwrap();
    assert_eq!(diversity_order(&c(1)), 3);
    assert_eq!(diversity_order(&c(2)), 2);
    assert_eq!(diversity_order(&c(3)), 1);
}

#[test]
fn lower_bound_cases() {
    let phi = PhiTable { phi: DMatrix::from_element(1, 1, 1e-3), diversity: 1, n_streams: 1 };
    let zero = RatePlan::broadcast(0.0, 1, 1).unwrap();
    assert_eq!(outage_lower_bound(0, 0, &phi, &zero), 0.0);
    let r = RatePlan::broadcast(2.0, 1, 1).unwrap();
    assert!((outage_lower_bound(0, 0, &phi, &r) - 3e-3).abs() < 1e-18);
}

#[test]
fn single_cluster_optimum_attains_lower_bound() {
    let cfg = SystemConfig::new(3, 3, 2, 3.0, 1.0, 70.0, 0.5, 0.5).unwrap();
    let dep = Deployment::new(cfg, sort_clusters(&[[10.0, 0.0]], 3.0, 1.0).unwrap()).unwrap();
    let phi = phi_table(&dep).unwrap();
    let r = RatePlan::broadcast(2.0, 2, 1).unwrap();
    for m in 0..2 {
        let at = optim::asymptotic_outage_at_optimum(m, 0, &r, &phi).unwrap();
        let lb = outage_lower_bound(m, 0, &phi, &r);
        assert!((at / lb - 1.0).abs() < 1e-12);
    }
}

#[test]
fn series_cancellation_is_flagged_not_fatal() {
    let dep = preset::reference_deployment().with_snr_db(60.0);
    let (z, r, _) = reference_tables(&dep);
    let rep = outage_report(&dep, &z, &r).unwrap();
    assert!(rep.goodput_exact.is_none());
    assert!(rep.entries.iter().any(|e| e.flags.series_cancellation && e.p_exact_approx.is_none()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_outage_decreases_with_snr(start in 66.0f64..100.0, rho in 0.0f64..0.5, m in 1usize..=3) {
        let dep = preset::reference_variant(m, rho, start).unwrap();
        let (_, _, t) = reference_tables(&dep);
        for mm in 0..m {
            for k in 0..4 {
                let mut prev = 1.0;
                for i in 0..10 {
                    let p = exact_outage(mm, k, &dep.with_snr_db(start + i as f64), &t).unwrap().p;
                    prop_assert!(p <= prev + 1e-15);
                    prev = p;
                }
            }
        }
    }

    #[test]
    fn asymptote_is_an_exact_power_law(s1 in 40.0f64..120.0, ds in 1.0f64..40.0, m in 1usize..=3) {
        let dep = preset::reference_variant(m, 0.5, s1).unwrap();
        let (_, _, t) = reference_tables(&dep);
        let phi1 = phi_table(&dep).unwrap();
        let phi2 = phi_table(&dep.with_snr_db(s1 + ds)).unwrap();
        let d = phi1.diversity;
        let (p1, p2) = (power_law(phi1.get(0, 0), t.get(0, 0), d), power_law(phi2.get(0, 0), t.get(0, 0), d));
        let slope = (p2.log10() - p1.log10()) / (ds / 10.0);
        prop_assert!((slope + d as f64).abs() < 1e-6);
    }

    #[test]
    fn argmin_is_nondecreasing(
        raw in prop::collection::vec(0.05f64..1.0, 2..=5),
        rates in prop::collection::vec(0.1f64..4.0, 5),
    ) {
        let s: f64 = raw.iter().sum();
        let zeta: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let z = PowerAllocation::from_rows(std::slice::from_ref(&zeta)).unwrap();
        let r = RatePlan::from_rows(&[rates[..zeta.len()].to_vec()]).unwrap();
        let t = theta_table(&z, &r).unwrap();
        for k in 1..zeta.len() {
            prop_assert!(t.argmin[(0, k)] >= t.argmin[(0, k - 1)]);
            prop_assert!(t.get(0, k) >= t.get(0, k - 1));
            prop_assert!(t.argmin[(0, k)] >= k);
        }
    }

    #[test]
    fn goodput_is_linear_in_each_rate(
        p in prop::collection::vec(0.0f64..1.0, 6),
        r in prop::collection::vec(0.0f64..5.0, 6),
        idx in 0usize..6,
        a in 0.0f64..3.0,
    ) {
        let pm = DMatrix::from_row_slice(2, 3, &p);
        let base = RatePlan::new(DMatrix::from_row_slice(2, 3, &r)).unwrap();
        let mut r2 = r.clone();
        r2[idx] += a;
        let bumped = RatePlan::new(DMatrix::from_row_slice(2, 3, &r2)).unwrap();
        let delta = goodput(&pm, &bumped).unwrap() - goodput(&pm, &base).unwrap();
        prop_assert!((delta - (1.0 - p[idx]) * a).abs() < 1e-12);
    }

    #[test]
    fn phi_scales_with_snr(s1 in 30.0f64..110.0, ds in -20.0f64..20.0, m in 1usize..=3) {
        let dep = preset::reference_variant(m, 0.5, s1).unwrap();
        let a = phi_table(&dep).unwrap();
        let b = phi_table(&dep.with_snr_db(s1 + ds)).unwrap();
        let d = a.diversity as f64;
        let want = 10f64.powf(-d * ds / 10.0);
        for (x, y) in a.phi.iter().zip(b.phi.iter()) {
            prop_assert!((y / x / want - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn dmt_gain_decreases_with_multiplexing(
        m in 1usize..=3,
        split in 0.05f64..0.95,
        frac in prop::collection::vec(0.0f64..1.0, 3),
        bump in 0.0f64..1.0,
        which in 0usize..3,
    ) {
        let cfg = SystemConfig::new(3, 3, m, 3.0, 1.0, 70.0, 0.5, 0.5).unwrap();
        let ups = [split, split * 0.5, 0.0];
        let caps = [1.0 - ups[0], ups[0] - ups[1], ups[1] - ups[2]];
        let r: Vec<f64> = frac.iter().zip(&caps).map(|(f, c)| f * c).collect();
        let base = dmt_gain(&r, &ups, &cfg).unwrap();
        let mut r2 = r.clone();
        r2[which] += bump * (caps[which] - r[which]);
        let moved = dmt_gain(&r2, &ups, &cfg).unwrap();
        for (a, b) in moved.iter().zip(&base) {
            prop_assert!(*a <= *b + 1e-12);
            prop_assert!(*a >= -1e-12);
        }
    }
}
