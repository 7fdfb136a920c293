use tandem_core::oracle::{build_truncated_generator, finite_generator, solve_stationary, tail_ratio_estimate};
use tandem_core::spectral::{self, Method, SpectralError};
use tandem_core::{compute_metrics, joint_tv, level_tv, GeneratorMode, JointDistribution, Params};

fn oracle(p: &Params, j_bound: usize) -> tandem_core::Truncated {
    solve_stationary(&build_truncated_generator(p, j_bound, GeneratorMode::TruncatedInfinite)).unwrap()
}

#[test]
fn exact_matches_the_truncated_chain() {
    for (s, pf, n) in [(1.0, 0.0, 1), (0.7, 0.3, 2), (1.1, 0.1, 5), (0.4, 0.6, 4)] {
        let p = Params::new(s, 3.0, 2.5, pf, n).unwrap();
        let ex = spectral::solve(&p, Method::Exact).unwrap();
        let or = oracle(&p, 400);
        assert!(joint_tv(&ex.distribution, &or, 400) < 1e-8, "{p:?}");
        let a = compute_metrics(&p, &ex.distribution).unwrap();
        let b = compute_metrics(&p, &or).unwrap();
        assert!((a.mql1 - b.mql1).abs() < 1e-7);
        assert!((a.mql2 - b.mql2).abs() < 1e-9);
        assert!((a.blocking_prob - b.blocking_prob).abs() < 1e-10);
        assert!((ex.distribution.level_marginal(10) - or.level_marginal(10)).abs() < 1e-9);
    }
}

#[test]
fn exact_mql_matches_direct_summation() {
    let p = Params::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
    let ex = spectral::solve(&p, Method::Exact).unwrap();
    let or = oracle(&p, 400);
    let direct: f64 = (0..=400).map(|j| j as f64 * or.level_marginal(j)).sum();
    assert!((spectral::mean_queue_length(&ex.distribution) - direct).abs() < 1e-7);
}

#[test]
fn hybrid_converges_to_exact() {
    let p = Params::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
    let ex = spectral::solve(&p, Method::Exact).unwrap();
    let mut last_cut = f64::INFINITY;
    for levels in [1, 2, 5, 10, 20, 30, 40] {
        let hy = spectral::solve(&p, Method::Hybrid(levels)).unwrap();
        assert!((hy.distribution.total_mass() - 1.0).abs() < 1e-10);
        let cut = hy.cut_residual.unwrap();
        assert!(cut < last_cut || cut < 1e-15, "M = {levels}: {cut} after {last_cut}");
        last_cut = cut;
        if levels >= 30 {
            assert!(level_tv(&hy.distribution, &ex.distribution, 2000) < 1e-8);
        }
    }
}

#[test]
fn product_form_without_feedback() {
    // joint law approaches (1 - rho1) rho1^j (1 - rho2) rho2^i as N grows
    let (s, m1, m2) = (1.0, 3.0, 2.5);
    let (r1, r2) = (s / m1, s / m2);
    let p = Params::new(s, m1, m2, 0.0, 50).unwrap();
    let ex = spectral::solve(&p, Method::Exact).unwrap();
    let mut tv = 0.0;
    for j in 0..400 {
        for i in 0..=50 {
            let pf = (1.0 - r1) * r1.powi(j) * (1.0 - r2) * r2.powi(i as i32);
            tv += (ex.distribution.prob(i, j as usize) - pf).abs();
        }
    }
    assert!(tv / 2.0 < 1e-4, "tv = {tv}");
    let phase = ex.distribution.phase_marginal();
    for (i, &q) in phase.iter().enumerate().take(20) {
        assert!((q - (1.0 - r2) * r2.powi(i as i32)).abs() < 1e-4);
    }
}

#[test]
fn large_threshold_tail_is_set_by_the_second_station() {
    // The blocked-and-full excursions decay like sigma/mu2 and dominate the
    // far tail even though their weight is of order rho2^N.
    let p = Params::new(1.0, 3.0, 2.5, 0.0, 30).unwrap();
    let ex = spectral::solve(&p, Method::Exact).unwrap();
    assert!((ex.gamma - 0.4).abs() < 1e-9, "{}", ex.gamma);
    let or = oracle(&p, 400);
    let body = tail_ratio_estimate(&or, 10, 60).unwrap();
    assert!((body - 1.0 / 3.0).abs() < 1e-6, "{body}");
    let far = tail_ratio_estimate(&or, 250, 350).unwrap();
    assert!((far - 0.4).abs() < 1e-3, "{far}");
}

#[test]
fn dominant_eigenvalue_grows_with_load_and_feedback() {
    let gamma =
        |s: f64, pf: f64| spectral::solve(&Params::new(s, 3.0, 2.5, pf, 4).unwrap(), Method::Geometric).unwrap().gamma;
    let sig: Vec<f64> = [0.2, 0.5, 0.8, 1.1, 1.4].iter().map(|&s| gamma(s, 0.0)).collect();
    assert!(sig.windows(2).all(|w| w[0] < w[1]), "{sig:?}");
    let fb: Vec<f64> = [0.0, 0.1, 0.2, 0.3].iter().map(|&pf| gamma(0.8, pf)).collect();
    assert!(fb.windows(2).all(|w| w[0] < w[1]), "{fb:?}");
}

#[test]
fn large_finite_buffer_approaches_infinite() {
    let p = Params::new(1.0, 3.0, 2.5, 0.2, 3).unwrap();
    let ex = spectral::solve(&p, Method::Exact).unwrap();
    let fin = solve_stationary(&finite_generator(&p.clone().with_capacity(Some(400)).unwrap()).unwrap()).unwrap();
    assert!(level_tv(&ex.distribution, &fin, 400) < 1e-6);
    let m = compute_metrics(&p.with_capacity(Some(400)).unwrap(), &fin).unwrap();
    assert!(m.loss_rate < 1e-12);
}

#[test]
fn unstable_input_is_refused() {
    let p = Params::new(2.0, 3.0, 2.5, 0.0, 1).unwrap();
    assert!(matches!(spectral::solve(&p, Method::Exact), Err(SpectralError::Unstable { .. })));
}

#[test]
fn light_load_mql_vanishes() {
    let mql: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|&s| spectral::solve(&Params::new(s, 3.0, 2.5, 0.0, 2).unwrap(), Method::Geometric).unwrap())
        .map(|sol| compute_metrics(&Params::new(1e-3, 3.0, 2.5, 0.0, 2).unwrap(), &sol.distribution).unwrap().mql1)
        .collect();
    assert!(mql.windows(2).all(|w| w[1] < 0.2 * w[0]));
    assert!(mql[2] < 1e-3);
}

#[test]
fn strong_feedback_at_light_load() {
    // here B^{-1} has entries near 1e13 and the unshifted companion misplaces the root at one
    let p = Params::new(0.05024422275337885, 2.5240677462398824, 4.802756442704278, 0.8990277509298255, 7).unwrap();
    let ex = spectral::solve(&p, Method::Exact).unwrap();
    assert_eq!(ex.interior.len(), 8);
    let or = oracle(&p, 400);
    assert!(level_tv(&ex.distribution, &or, 400) < 1e-8);
    let m = compute_metrics(&p, &ex.distribution).unwrap();
    assert!((m.throughput - p.sigma).abs() < 1e-9);
}
