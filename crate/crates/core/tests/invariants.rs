use proptest::prelude::*;
use tandem_core::model::{generator_row_check, LevelClass};
use tandem_core::spectral::{self, Method};
use tandem_core::{build_qbd_matrices, compute_metrics, stability_report, JointDistribution, Params};

fn params() -> impl Strategy<Value = Params> {
    (0.05f64..3.0, 0.5f64..5.0, 0.5f64..5.0, 0.0f64..0.9, 1usize..8)
        .prop_map(|(s, m1, m2, p, n)| Params::new(s, m1, m2, p, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, max_global_rejects: 50_000, ..ProptestConfig::default() })]

    #[test]
    fn rate_matrices_have_the_blocking_shape(p in params()) {
        let m = build_qbd_matrices(&p).unwrap();
        let n = p.n_threshold;
        for i in 0..=n {
            prop_assert_eq!(m.a[(i, i)], 0.0);
            prop_assert_eq!(m.c[(n, i)], 0.0);
            for k in 0..=n {
                prop_assert!(m.a[(i, k)] >= 0.0 && m.b[(i, k)] >= 0.0 && m.c[(i, k)] >= 0.0);
            }
            prop_assert_eq!(m.d_b[i], m.b.row(i).sum());
        }
        let scale = p.largest_rate();
        prop_assert!(generator_row_check(&m, LevelClass::Interior) <= 1e-12 * scale);
        prop_assert!(generator_row_check(&m, LevelClass::Boundary0) <= 1e-12 * scale);
    }

    #[test]
    fn instability_persists_under_more_load(p in params(), ds in 0.0f64..2.0, dp in 0.0f64..0.09) {
        let base = stability_report(&p).unwrap().is_stable;
        let more_sigma = Params::new(p.sigma + ds, p.mu1, p.mu2, p.p_fb, p.n_threshold).unwrap();
        let more_fb = Params::new(p.sigma, p.mu1, p.mu2, p.p_fb + dp, p.n_threshold).unwrap();
        if !base {
            prop_assert!(!stability_report(&more_sigma).unwrap().is_stable);
            prop_assert!(!stability_report(&more_fb).unwrap().is_stable);
        }
    }

    #[test]
    fn phase_process_distribution_is_a_probability_vector(p in params()) {
        let r = stability_report(&p).unwrap();
        let total: f64 = r.phase_stationary.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(r.phase_stationary.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn exact_solution_conserves_flow(p in params()) {
        prop_assume!(stability_report(&p).unwrap().is_stable);
        // close to the boundary the tail is too long for a meaningful check
        let sol = match spectral::solve(&p, Method::Exact) {
            Ok(s) if s.gamma < 0.95 => s,
            Ok(_) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        };
        let d = &sol.distribution;
        // clustered roots cancel against each other; roundoff scales with that
        let slack = d.term_mass();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-10 * slack, "growth {slack}");
        let m = compute_metrics(&p, d).unwrap();
        prop_assert!((m.throughput - p.sigma).abs() < 1e-8 * slack * p.sigma.max(1.0));
        let inflow = p.sigma + p.mu2 * p.p_fb * m.util2;
        prop_assert!((p.mu1 * m.util1 - inflow).abs() < 1e-8 * slack * inflow.max(1.0));
        prop_assert!(m.mql2 < p.n_threshold as f64);
        prop_assert!(m.throughput <= p.mu1.min(p.mu2) + 1e-12);
    }

    #[test]
    fn geometric_tail_is_memoryless(p in params(), j in 0usize..20, k in 0usize..20) {
        prop_assume!(stability_report(&p).unwrap().is_stable);
        let sol = spectral::solve(&p, Method::Geometric).unwrap();
        let g = sol.gamma;
        let d = &sol.distribution;
        // P(J >= j + k) = P(J >= j) P(J >= k)
        let upper = |j: usize| 1.0 - (0..j).map(|l| d.level_marginal(l)).sum::<f64>();
        let (lhs, rhs) = (upper(j + k), upper(j) * upper(k));
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        prop_assert!((d.level_marginal(j) - (1.0 - g) * g.powi(j as i32)).abs() < 1e-14);
    }
}

#[test]
fn stability_flips_at_the_closed_form_threshold() {
    let stable = |s: f64| stability_report(&Params::new(s, 3.0, 2.5, 0.0, 1).unwrap()).unwrap().is_stable;
    let (mut lo, mut hi) = (0.5, 3.0);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if stable(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((lo - 15.0 / 11.0).abs() < 1e-9, "{lo}");
}

#[test]
fn vanishing_exit_rate_is_unstable() {
    for p in [0.9, 0.99, 0.999] {
        let sigma = 2.5 * (1.0 - p) * 1.5;
        let r = stability_report(&Params::new(sigma, 3.0, 2.5, p, 4).unwrap()).unwrap();
        assert!(!r.is_stable, "p_fb = {p}");
    }
}
