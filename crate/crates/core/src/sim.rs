//! Discrete-event simulation of the tandem network.
//!
//! Three exponential clocks drive the event loop: the next external
//! arrival, the station-1 completion (armed iff `j >= 1` and `i < N`) and the
//! station-2 completion (armed iff `i >= 1`). A station-1 service interrupted
//! by blocking is discarded and a fresh clock is drawn when the server
//! resumes; by memorylessness this does not change the law of the process.
//!
//! Confidence intervals use batch means over contiguous post-warmup batches
//! of equal event count.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::TandemParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub seed: u64,
    pub warmup_events: u64,
    /// Total events including the warmup.
    pub total_events: u64,
    pub n_batches: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { seed: 1, warmup_events: 100_000, total_events: 10_000_000, n_batches: 20 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.warmup_events == 0 || self.total_events == 0 {
            return Err(SimError::ConfigInvalid("event counts must be positive".into()));
        }
        if self.total_events <= self.warmup_events {
            return Err(SimError::ConfigInvalid("total_events must exceed warmup_events".into()));
        }
        if self.n_batches < 10 {
            return Err(SimError::ConfigInvalid("at least 10 batches are required".into()));
        }
        if (self.total_events - self.warmup_events) < self.n_batches as u64 {
            return Err(SimError::ConfigInvalid("fewer post-warmup events than batches".into()));
        }
        Ok(())
    }
}

/// A point estimate with the half-width of its 95% confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn covers(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }

    fn from_batches(values: &[f64], t_quantile: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { mean, half_width: t_quantile * (var / n).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub mql1: Estimate,
    pub mql2: Estimate,
    /// Fraction of time with `i = N`.
    pub blocking_prob: Estimate,
    pub throughput: Estimate,
    /// Finite first buffer only.
    pub loss_rate: Option<Estimate>,
    /// Finite first buffer only: time fraction of each state `(i, j)`,
    /// indexed `j * (N + 1) + i`.
    pub state_fractions: Vec<Estimate>,
    pub events: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub losses: u64,
    pub in_system: u64,
    /// Simulated time covered by the batches.
    pub elapsed: f64,
}

#[derive(Debug, Clone, Default)]
struct Accumulator {
    time: f64,
    area_j: f64,
    area_i: f64,
    blocked: f64,
    exits: u64,
    losses: u64,
    states: Vec<f64>,
}

impl Accumulator {
    fn new(states: usize) -> Self {
        Self { states: vec![0.0; states], ..Default::default() }
    }
}

struct Clocks {
    arrival: ChaCha8Rng,
    station1: ChaCha8Rng,
    station2: ChaCha8Rng,
    routing: ChaCha8Rng,
}

impl Clocks {
    fn new(seed: u64) -> Self {
        let stream = |k: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self { arrival: stream(0), station1: stream(1), station2: stream(2), routing: stream(3) }
    }
}

pub fn run_sim(params: &TandemParams<f64>, cfg: &SimConfig) -> Result<SimEstimate, SimError> {
    cfg.validate()?;
    let params = params.clone().validate().map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
    let n = params.n_threshold;
    let cap = params.k_capacity;
    let tracked = cap.map_or(0, |k| (k + 1) * (n + 1));
    let exp_arr = Exp::new(params.sigma).expect("positive rate");
    let exp_s1 = Exp::new(params.mu1).expect("positive rate");
    let exp_s2 = Exp::new(params.mu2).expect("positive rate");
    let mut clocks = Clocks::new(cfg.seed);

    let (mut i, mut j) = (0usize, 0usize);
    let mut t = 0.0f64;
    let mut next_arrival = exp_arr.sample(&mut clocks.arrival);
    let mut next_s1: Option<f64> = None;
    let mut next_s2: Option<f64> = None;

    let (mut arrivals, mut departures, mut losses) = (0u64, 0u64, 0u64);
    let per_batch = (cfg.total_events - cfg.warmup_events) / cfg.n_batches as u64;
    let mut batches: Vec<Accumulator> = Vec::with_capacity(cfg.n_batches);
    let mut acc = Accumulator::new(tracked);

    for event in 1..=cfg.total_events {
        let s1 = next_s1.unwrap_or(f64::INFINITY);
        let s2 = next_s2.unwrap_or(f64::INFINITY);
        let t_next = next_arrival.min(s1).min(s2);

        let dt = t_next - t;
        acc.time += dt;
        acc.area_j += j as f64 * dt;
        acc.area_i += i as f64 * dt;
        if i == n {
            acc.blocked += dt;
        }
        if tracked > 0 {
            acc.states[j * (n + 1) + i] += dt;
        }
        t = t_next;

        if t_next == next_arrival {
            arrivals += 1;
            if cap.is_some_and(|k| j >= k) {
                losses += 1;
                acc.losses += 1;
            } else {
                j += 1;
            }
            next_arrival = t + exp_arr.sample(&mut clocks.arrival);
        } else if t_next == s1 {
            j -= 1;
            i += 1;
            next_s1 = None;
        } else {
            i -= 1;
            next_s2 = None;
            if clocks.routing.random::<f64>() < params.p_fb {
                if cap.is_some_and(|k| j >= k) {
                    losses += 1;
                    acc.losses += 1;
                } else {
                    j += 1;
                }
            } else {
                departures += 1;
                acc.exits += 1;
            }
        }

        // re-arm or cancel the service clocks for the new state
        if j >= 1 && i < n {
            if next_s1.is_none() {
                next_s1 = Some(t + exp_s1.sample(&mut clocks.station1));
            }
        } else {
            next_s1 = None;
        }
        if i >= 1 {
            if next_s2.is_none() {
                next_s2 = Some(t + exp_s2.sample(&mut clocks.station2));
            }
        } else {
            next_s2 = None;
        }

        if event == cfg.warmup_events {
            acc = Accumulator::new(tracked);
        } else if event > cfg.warmup_events {
            let done = event - cfg.warmup_events;
            let last = batches.len() + 1 == cfg.n_batches;
            if (!last && done.is_multiple_of(per_batch)) || event == cfg.total_events {
                batches.push(std::mem::replace(&mut acc, Accumulator::new(tracked)));
            }
        }
    }

    let in_system = (i + j) as u64;
    assert_eq!(arrivals, departures + losses + in_system, "job accounting broken");

    let t_q =
        StudentsT::new(0.0, 1.0, (batches.len() - 1) as f64).expect("valid degrees of freedom").inverse_cdf(0.975);
    let est = |f: &dyn Fn(&Accumulator) -> f64| {
        let v: Vec<f64> = batches.iter().map(f).collect();
        Estimate::from_batches(&v, t_q)
    };
    let state_fractions = (0..tracked).map(|s| est(&|b: &Accumulator| b.states[s] / b.time)).collect();
    Ok(SimEstimate {
        mql1: est(&|b| b.area_j / b.time),
        mql2: est(&|b| b.area_i / b.time),
        blocking_prob: est(&|b| b.blocked / b.time),
        throughput: est(&|b| b.exits as f64 / b.time),
        loss_rate: cap.map(|_| est(&|b| b.losses as f64 / b.time)),
        state_fractions,
        events: cfg.total_events,
        arrivals,
        departures,
        losses,
        in_system,
        elapsed: batches.iter().map(|b| b.time).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64, total: u64) -> SimConfig {
        SimConfig { seed, warmup_events: 10_000, total_events: total, n_batches: 20 }
    }

    #[test]
    fn config_validation() {
        let bad = [
            SimConfig { total_events: 10, warmup_events: 10, ..Default::default() },
            SimConfig { n_batches: 9, ..Default::default() },
            SimConfig { warmup_events: 0, ..Default::default() },
        ];
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
        for c in bad {
            assert!(matches!(run_sim(&p, &c), Err(SimError::ConfigInvalid(_))));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.3, 2).unwrap();
        let a = run_sim(&p, &cfg(7, 200_000)).unwrap();
        let b = run_sim(&p, &cfg(7, 200_000)).unwrap();
        assert_eq!(a, b);
        let c = run_sim(&p, &cfg(8, 200_000)).unwrap();
        assert_ne!(a.mql1, c.mql1);
    }

    #[test]
    fn estimates_in_physical_range() {
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.3, 2).unwrap().with_capacity(Some(4)).unwrap();
        let e = run_sim(&p, &cfg(3, 300_000)).unwrap();
        assert!(e.mql1.mean >= 0.0 && e.mql1.mean <= 4.0);
        assert!(e.mql2.mean >= 0.0 && e.mql2.mean <= 2.0);
        assert!((0.0..=1.0).contains(&e.blocking_prob.mean));
        assert!(e.loss_rate.unwrap().mean >= 0.0);
        assert_eq!(e.state_fractions.len(), 15);
        let total: f64 = e.state_fractions.iter().map(|s| s.mean).sum();
        assert!((total - 1.0).abs() < 1e-9);
        for x in [e.mql1, e.mql2, e.blocking_prob, e.throughput] {
            assert!(x.half_width >= 0.0);
        }
        assert_eq!(e.arrivals, e.departures + e.losses + e.in_system);
    }

    #[test]
    fn infinite_buffer_has_no_loss_estimate() {
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
        let e = run_sim(&p, &cfg(1, 100_000)).unwrap();
        assert!(e.loss_rate.is_none() && e.state_fractions.is_empty());
        assert_eq!(e.losses, 0);
    }
}
