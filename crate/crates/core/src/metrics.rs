//! Performance measures computed uniformly from any stationary solution.

use thiserror::Error;

use crate::distribution::JointDistribution;
use crate::model::TandemParams;
use crate::scalar::{lit, Scalar};

/// Largest tolerated deviation of the total mass from one.
pub const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("distribution mass is {0}, expected 1")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceMetrics<T> {
    /// `E[J]`, station-1 jobs including the one in service.
    pub mql1: T,
    /// `E[I]`, station-2 jobs including the one in service.
    pub mql2: T,
    /// `P(I = N)`: station 1 blocked or waiting to be.
    pub blocking_prob: T,
    /// `P(J >= 1, I < N)`: station 1 serving.
    pub util1: T,
    /// `P(I >= 1)`.
    pub util2: T,
    /// Exit rate from the network, `mu2 (1 - p_fb) P(I >= 1)`.
    pub throughput: T,
    /// Jobs lost at a full first buffer per unit time; zero for an infinite buffer.
    pub loss_rate: T,
}

pub fn phase_marginal<T: Scalar>(dist: &impl JointDistribution<T>) -> Vec<T> {
    dist.phase_marginal()
}

pub fn level_marginal<T: Scalar>(dist: &impl JointDistribution<T>, j: usize) -> T {
    dist.level_marginal(j)
}

pub fn compute_metrics<T: Scalar>(
    params: &TandemParams<T>,
    dist: &impl JointDistribution<T>,
) -> Result<PerformanceMetrics<T>, MetricsError> {
    let phase = dist.phase_marginal();
    let mass = phase.iter().fold(T::zero(), |a, p| a + p.clone());
    if (mass.clone() - T::one()).magnitude() > lit::<T>(MASS_TOL) {
        return Err(MetricsError::NotNormalized(mass.to_f64()));
    }
    let n = dist.phases() - 1;
    let sum = |it: &mut dyn Iterator<Item = T>| it.fold(T::zero(), |a, b| a + b);

    let mql2 = sum(&mut phase.iter().enumerate().map(|(i, p)| T::from_usize(i) * p.clone()));
    let util2 = sum(&mut phase[1..].iter().cloned());
    let util1 = sum(&mut (0..n).map(|i| phase[i].clone() - dist.prob(i, 0)));
    let throughput = params.exit_rate() * util2.clone();
    let loss_rate = match params.k_capacity {
        Some(k) => {
            let full = dist.level_marginal(k);
            let full_busy = sum(&mut (1..=n).map(|i| dist.prob(i, k)));
            params.sigma.clone() * full + params.feedback_rate() * full_busy
        }
        None => T::zero(),
    };
    Ok(PerformanceMetrics {
        mql1: dist.mean_level(),
        mql2,
        blocking_prob: phase[n].clone(),
        util1,
        util2,
        throughput,
        loss_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{finite_generator, solve_stationary};
    use crate::scalar::rational;
    use crate::spectral::{self, Method};
    use crate::Metrics;

    #[test]
    fn four_state_metrics_exact() {
        let p = TandemParams::new(rational(1, 1), rational(3, 1), rational(5, 2), rational(0, 1), 1)
            .unwrap()
            .with_capacity(Some(1))
            .unwrap();
        let d = solve_stationary(&finite_generator(&p).unwrap()).unwrap();
        let m = compute_metrics(&p, &d).unwrap();
        assert_eq!(m.blocking_prob, rational(21, 76));
        assert_eq!(m.throughput, rational(105, 152));
        assert_eq!(m.mql1, rational(47, 152));
        assert_eq!(m.loss_rate, rational(47, 152));
        assert_eq!(phase_marginal(&d), vec![rational(110, 152), rational(42, 152)]);
        // what is not lost leaves
        assert_eq!(p.sigma.clone() - m.loss_rate.clone(), m.throughput);
    }

    #[test]
    fn geometric_mql_two_ways() {
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
        let sol = spectral::solve(&p, Method::Geometric).unwrap();
        let m = compute_metrics(&p, &sol.distribution).unwrap();
        let g = sol.gamma;
        assert!((m.mql1 - g / (1.0 - g)).abs() < 1e-12);
        let mut direct = 0.0;
        let mut term = 1.0 - g;
        for j in 0..2000 {
            direct += j as f64 * term;
            term *= g;
        }
        assert!((m.mql1 - direct).abs() < 1e-12);
        assert!((m.mql1 - 2.0).abs() < 1e-11);
    }

    #[test]
    fn not_normalized_detected() {
        struct Half;
        impl JointDistribution<f64> for Half {
            fn kind(&self) -> crate::distribution::DistributionKind {
                crate::distribution::DistributionKind::Truncated
            }
            fn phases(&self) -> usize {
                2
            }
            fn prob(&self, _: usize, j: usize) -> f64 {
                if j == 0 {
                    0.25
                } else {
                    0.0
                }
            }
            fn support_bound(&self) -> Option<usize> {
                Some(0)
            }
            fn phase_marginal(&self) -> Vec<f64> {
                vec![0.25, 0.25]
            }
            fn mean_level(&self) -> f64 {
                0.0
            }
        }
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.0, 1).unwrap();
        assert_eq!(compute_metrics(&p, &Half), Err(MetricsError::NotNormalized(0.5)));
    }

    #[test]
    fn light_load_empties_the_system() {
        let mut prev: Option<Metrics> = None;
        for sigma in [1e-1, 1e-2, 1e-3] {
            let p = TandemParams::<f64>::new(sigma, 3.0, 2.5, 0.2, 4).unwrap();
            let sol = spectral::solve(&p, Method::Exact).unwrap();
            let m = compute_metrics(&p, &sol.distribution).unwrap();
            if let Some(q) = &prev {
                // everything scales roughly linearly with the load
                for (a, b) in [(m.mql1, q.mql1), (m.mql2, q.mql2), (m.throughput, q.throughput), (m.util1, q.util1)] {
                    assert!(a < 0.2 * b, "{m:?} vs {q:?}");
                }
                assert!(m.blocking_prob < 1e-3 * q.blocking_prob);
            }
            prev = Some(m);
        }
        assert!(prev.unwrap().mql1 < 1e-3);
    }
}
