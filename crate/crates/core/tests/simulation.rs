use tandem_core::oracle::{finite_generator, solve_stationary};
use tandem_core::scalar::rational;
use tandem_core::spectral::{self, Method};
use tandem_core::{compute_metrics, run_sim, ExactParams, Params, SimConfig};

fn short(seed: u64) -> SimConfig {
    SimConfig { seed, warmup_events: 20_000, total_events: 1_000_000, n_batches: 20 }
}

#[test]
fn four_state_fractions_match_the_balance_solution() {
    let exact = ExactParams::new(rational(1, 1), rational(3, 1), rational(5, 2), rational(0, 1), 1)
        .unwrap()
        .with_capacity(Some(1))
        .unwrap();
    let pi = solve_stationary(&finite_generator(&exact).unwrap()).unwrap();
    // states ordered (0,0), (1,0), (0,1), (1,1)
    assert_eq!(pi.as_slice(), &[75, 30, 35, 12].map(|v| rational(v, 152)));

    let p = Params::new(1.0, 3.0, 2.5, 0.0, 1).unwrap().with_capacity(Some(1)).unwrap();
    let est = run_sim(&p, &short(11)).unwrap();
    // state index j (N + 1) + i
    let expect = [75.0, 30.0, 35.0, 12.0].map(|v| v / 152.0);
    for (k, e) in est.state_fractions.iter().enumerate() {
        assert!((e.mean - expect[k]).abs() <= 3.0 * e.half_width, "state {k}: {e:?} vs {}", expect[k]);
    }
    assert!((est.throughput.mean - 105.0 / 152.0).abs() <= 3.0 * est.throughput.half_width);
    let loss = est.loss_rate.unwrap();
    assert!((loss.mean - 47.0 / 152.0).abs() <= 3.0 * loss.half_width);
    assert_eq!(est.arrivals, est.departures + est.losses + est.in_system);
}

#[test]
fn intervals_cover_the_exact_mean_in_most_runs() {
    let p = Params::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
    let exact = compute_metrics(&p, &spectral::solve(&p, Method::Exact).unwrap().distribution).unwrap();
    let hits = (0..20u64).filter(|&seed| run_sim(&p, &short(100 + seed)).unwrap().mql1.covers(exact.mql1)).count();
    assert!(hits >= 16, "{hits} of 20");
}

#[test]
fn feedback_run_is_consistent_with_exact() {
    let p = Params::new(0.8, 3.0, 2.5, 0.3, 3).unwrap();
    let exact = compute_metrics(&p, &spectral::solve(&p, Method::Exact).unwrap().distribution).unwrap();
    let est = run_sim(&p, &short(5)).unwrap();
    for (e, x) in [(est.mql1, exact.mql1), (est.mql2, exact.mql2), (est.blocking_prob, exact.blocking_prob)] {
        assert!((e.mean - x).abs() <= 4.0 * e.half_width, "{e:?} vs {x}");
    }
    assert!(est.loss_rate.is_none());
}

#[test]
fn seeds_are_reproducible() {
    let p = Params::new(1.2, 3.0, 2.5, 0.1, 2).unwrap();
    assert_eq!(run_sim(&p, &short(3)).unwrap(), run_sim(&p, &short(3)).unwrap());
    assert_ne!(run_sim(&p, &short(3)).unwrap().mql1, run_sim(&p, &short(4)).unwrap().mql1);
}
