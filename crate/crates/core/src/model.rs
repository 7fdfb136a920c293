//! Model parameters, QBD rate matrices and the mean-drift stability test.
//!
//! The state is `(i, j)`: `i` is the station-2 occupancy (the phase,
//! `0..=N`) and `j` the station-1 occupancy (the level). Station 1 stops
//! serving while `i == N`. A station-2 completion leaves the network with
//! probability `1 - p_fb` and rejoins queue 1 otherwise.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::gth::{self, BandedRates};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("rate `{name}` must be strictly positive, got {value}")]
    NonPositiveRate { name: &'static str, value: f64 },
    #[error("feedback probability must lie in [0, 1), got {0}")]
    FeedbackOutOfRange(f64),
    #[error("blocking threshold must be at least 1, got {0}")]
    BadThreshold(usize),
    #[error("first-buffer capacity must be at least 1, got {0}")]
    BadCapacity(usize),
    #[error("operation requires an infinite first buffer")]
    FiniteCapacity,
    #[error("phase process is not irreducible (state {0} has no outflow)")]
    SingularPhaseProcess(usize),
}

/// Rates and structural parameters of the tandem network.
#[derive(Debug, Clone, PartialEq)]
pub struct TandemParams<T> {
    /// External Poisson arrival rate.
    pub sigma: T,
    /// Station-1 service rate.
    pub mu1: T,
    /// Station-2 service rate.
    pub mu2: T,
    /// Probability that a station-2 completion returns to station 1.
    pub p_fb: T,
    /// Station-2 occupancy at which station 1 blocks. Also the largest phase.
    pub n_threshold: usize,
    /// Capacity of the first buffer including the job in service; `None` is infinite.
    pub k_capacity: Option<usize>,
}

impl<T: Scalar> TandemParams<T> {
    /// Validated constructor with an infinite first buffer.
    pub fn new(sigma: T, mu1: T, mu2: T, p_fb: T, n_threshold: usize) -> Result<Self, ModelError> {
        Self { sigma, mu1, mu2, p_fb, n_threshold, k_capacity: None }.validate()
    }

    pub fn with_capacity(mut self, k: Option<usize>) -> Result<Self, ModelError> {
        self.k_capacity = k;
        self.validate()
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        for (name, value) in [("sigma", &self.sigma), ("mu1", &self.mu1), ("mu2", &self.mu2)] {
            // `!(x > 0)` also rejects NaN
            if !(*value > T::zero()) {
                return Err(ModelError::NonPositiveRate { name, value: value.to_f64() });
            }
        }
        if !(self.p_fb >= T::zero() && self.p_fb < T::one()) {
            return Err(ModelError::FeedbackOutOfRange(self.p_fb.to_f64()));
        }
        if self.n_threshold < 1 {
            return Err(ModelError::BadThreshold(self.n_threshold));
        }
        if let Some(k) = self.k_capacity {
            if k < 1 {
                return Err(ModelError::BadCapacity(k));
            }
        }
        Ok(self)
    }

    pub fn phases(&self) -> usize {
        self.n_threshold + 1
    }

    /// `mu2 * (1 - p_fb)`: station-2 completions that leave the network.
    pub fn exit_rate(&self) -> T {
        self.mu2.clone() * (T::one() - self.p_fb.clone())
    }

    /// `mu2 * p_fb`: station-2 completions that rejoin queue 1.
    pub fn feedback_rate(&self) -> T {
        self.mu2.clone() * self.p_fb.clone()
    }

    pub fn largest_rate(&self) -> T {
        let m = T::max_of(self.sigma.clone(), self.mu1.clone());
        T::max_of(m, self.mu2.clone())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> TandemParams<U> {
        TandemParams {
            sigma: f(&self.sigma),
            mu1: f(&self.mu1),
            mu2: f(&self.mu2),
            p_fb: f(&self.p_fb),
            n_threshold: self.n_threshold,
            k_capacity: self.k_capacity,
        }
    }
}

/// The level-independent transition classes of the QBD.
///
/// `a` holds phase-only moves, `b` moves up one level and `c` moves down one
/// level. The diagonals `d_*` are the row sums recorded at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct QbdMatrices<T: Scalar> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d_a: DVector<T>,
    pub d_b: DVector<T>,
    pub d_c: DVector<T>,
}

fn row_sums<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.iter().fold(T::zero(), |acc, x| acc + x.clone())))
}

impl<T: Scalar> QbdMatrices<T> {
    pub fn phases(&self) -> usize {
        self.a.nrows()
    }

    /// `A - D_A - D_B - D_C`, the same-level block for levels `j >= 1`.
    pub fn interior_local(&self) -> DMatrix<T> {
        self.local(true)
    }

    /// `A - D_A - D_B`, the same-level block at level 0 where station 1 is idle.
    pub fn boundary_local(&self) -> DMatrix<T> {
        self.local(false)
    }

    fn local(&self, with_c: bool) -> DMatrix<T> {
        let mut m = self.a.clone();
        for i in 0..self.phases() {
            let mut d = self.d_a[i].clone() + self.d_b[i].clone();
            if with_c {
                d = d + self.d_c[i].clone();
            }
            m[(i, i)] = m[(i, i)].clone() - d;
        }
        m
    }

    pub fn diag(v: &DVector<T>) -> DMatrix<T> {
        DMatrix::from_diagonal(v)
    }
}

/// Builds `A`, `B`, `C` for an infinite first buffer.
pub fn build_qbd_matrices<T: Scalar>(params: &TandemParams<T>) -> Result<QbdMatrices<T>, ModelError> {
    if params.k_capacity.is_some() {
        return Err(ModelError::FiniteCapacity);
    }
    let n = params.phases();
    let zero = DMatrix::from_element(n, n, T::zero());
    let (mut a, mut b, mut c) = (zero.clone(), zero.clone(), zero);
    let exit = params.exit_rate();
    let fb = params.feedback_rate();
    for i in 0..n {
        b[(i, i)] = params.sigma.clone();
        if i >= 1 {
            a[(i, i - 1)] = exit.clone();
            b[(i, i - 1)] = fb.clone();
        }
        if i + 1 < n {
            c[(i, i + 1)] = params.mu1.clone();
        }
    }
    let (d_a, d_b, d_c) = (row_sums(&a), row_sums(&b), row_sums(&c));
    Ok(QbdMatrices { a, b, c, d_a, d_b, d_c })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelClass {
    /// Level 0: no station-1 service.
    Boundary0,
    /// Levels `j >= 1`.
    Interior,
}

/// Largest absolute row sum of the generator rows assembled from `m` and its
/// stored diagonals. Zero for a consistent construction.
pub fn generator_row_check<T: Scalar>(m: &QbdMatrices<T>, level: LevelClass) -> T {
    let n = m.phases();
    let with_c = level == LevelClass::Interior;
    let mut worst = T::zero();
    for i in 0..n {
        let mut sum = T::zero();
        for k in 0..n {
            if k != i {
                sum = sum + m.a[(i, k)].clone();
            }
            sum = sum + m.b[(i, k)].clone();
            if with_c {
                sum = sum + m.c[(i, k)].clone();
            }
        }
        let mut diag = m.d_a[i].clone() + m.d_b[i].clone();
        if with_c {
            diag = diag + m.d_c[i].clone();
        }
        worst = T::max_of(worst, (sum - diag).magnitude());
    }
    worst
}

/// Outcome of the mean-drift test on the high-level phase process.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T> {
    pub phase_stationary: Vec<T>,
    pub drift_up: T,
    pub drift_down: T,
    pub is_stable: bool,
}

/// `drift_down - drift_up > 1e-12 (drift_up + drift_down)`.
pub fn stability_report<T: Scalar>(params: &TandemParams<T>) -> Result<StabilityReport<T>, ModelError> {
    let m = build_qbd_matrices(params)?;
    stability_of(&m)
}

pub fn stability_of<T: Scalar>(m: &QbdMatrices<T>) -> Result<StabilityReport<T>, ModelError> {
    let n = m.phases();
    let mut rates = BandedRates::new(n, n.saturating_sub(1));
    for i in 0..n {
        for k in 0..n {
            if i != k {
                let r = m.a[(i, k)].clone() + m.b[(i, k)].clone() + m.c[(i, k)].clone();
                if r != T::zero() {
                    rates.add(i, k, r);
                }
            }
        }
    }
    let pi = gth::solve(rates).map_err(ModelError::SingularPhaseProcess)?;
    let dot = |v: &DVector<T>| pi.iter().zip(v.iter()).fold(T::zero(), |acc, (p, x)| acc + p.clone() * x.clone());
    let drift_up = dot(&m.d_b);
    let drift_down = dot(&m.d_c);
    let tol: T = lit::<T>(1e-12) * (drift_up.clone() + drift_down.clone());
    let is_stable = drift_down.clone() - drift_up.clone() > tol;
    Ok(StabilityReport { phase_stationary: pi, drift_up, drift_down, is_stable })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;
    use num_rational::BigRational;

    fn canonical(sigma: f64) -> TandemParams<f64> {
        TandemParams::new(sigma, 3.0, 2.5, 0.0, 1).unwrap()
    }

    #[test]
    fn default_parameters_validate() {
        let p = TandemParams::<f64>::new(1.5, 3.0, 2.5, 0.0, 10).unwrap();
        assert_eq!(p.phases(), 11);
        assert!(p.with_capacity(Some(5)).is_ok());
    }

    #[test]
    fn validation_errors() {
        assert_eq!(TandemParams::<f64>::new(1.0, 3.0, 2.5, 1.0, 1), Err(ModelError::FeedbackOutOfRange(1.0)));
        assert!(matches!(
            TandemParams::<f64>::new(0.0, 3.0, 2.5, 0.0, 1),
            Err(ModelError::NonPositiveRate { name: "sigma", .. })
        ));
        assert!(matches!(
            TandemParams::<f64>::new(1.0, 3.0, f64::NAN, 0.0, 1),
            Err(ModelError::NonPositiveRate { name: "mu2", .. })
        ));
        assert_eq!(TandemParams::<f64>::new(1.0, 3.0, 2.5, -0.1, 1), Err(ModelError::FeedbackOutOfRange(-0.1)));
        assert_eq!(TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.0, 0), Err(ModelError::BadThreshold(0)));
        assert_eq!(canonical(1.0).with_capacity(Some(0)), Err(ModelError::BadCapacity(0)));
    }

    #[test]
    fn two_phase_matrices() {
        let m = build_qbd_matrices(&canonical(1.0)).unwrap();
        assert_eq!(m.a, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 2.5, 0.0]));
        assert_eq!(m.b, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(m.c, DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]));
    }

    #[test]
    fn feedback_splits_station_two_rate() {
        let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.4, 1).unwrap();
        let m = build_qbd_matrices(&p).unwrap();
        assert!((m.a[(1, 0)] - 1.5).abs() < 1e-15);
        assert!((m.b[(1, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn blocked_row_of_c_is_zero() {
        for n in 1..8 {
            let p = TandemParams::<f64>::new(1.0, 3.0, 2.5, 0.3, n).unwrap();
            let m = build_qbd_matrices(&p).unwrap();
            assert!(m.c.row(n).iter().all(|&x| x == 0.0));
            assert!((0..=n).all(|i| m.a[(i, i)] == 0.0));
        }
    }

    #[test]
    fn finite_capacity_rejected_for_qbd() {
        let p = canonical(1.0).with_capacity(Some(3)).unwrap();
        assert_eq!(build_qbd_matrices(&p), Err(ModelError::FiniteCapacity));
    }

    #[test]
    fn row_check_detects_perturbation() {
        let mut m = build_qbd_matrices(&canonical(1.0)).unwrap();
        assert_eq!(generator_row_check(&m, LevelClass::Interior), 0.0);
        assert_eq!(generator_row_check(&m, LevelClass::Boundary0), 0.0);
        m.c[(0, 1)] += 1e-3;
        assert!((generator_row_check(&m, LevelClass::Interior) - 1e-3).abs() < 1e-15);
        // level 0 ignores C entirely
        assert_eq!(generator_row_check(&m, LevelClass::Boundary0), 0.0);
    }

    #[test]
    fn two_phase_drift_closed_form() {
        // pi = (mu2, mu1) / (mu1 + mu2), critical sigma = mu1 mu2 / (mu1 + mu2)
        let r = stability_report(&canonical(1.0)).unwrap();
        assert!((r.phase_stationary[0] - 5.0 / 11.0).abs() < 1e-15);
        assert!((r.phase_stationary[1] - 6.0 / 11.0).abs() < 1e-15);
        assert!(r.is_stable);
        assert!(!stability_report(&canonical(2.0)).unwrap().is_stable);
    }

    #[test]
    fn exact_critical_point_is_not_stable() {
        let p = TandemParams::new(rational(15, 11), rational(3, 1), rational(5, 2), rational(0, 1), 1).unwrap();
        let r = stability_report(&p).unwrap();
        assert_eq!(r.phase_stationary, vec![rational(5, 11), rational(6, 11)]);
        assert_eq!(r.drift_up, r.drift_down);
        assert!(!r.is_stable);
        let below: TandemParams<BigRational> = TandemParams { sigma: rational(14, 11), ..p };
        assert!(stability_report(&below).unwrap().is_stable);
    }

    #[test]
    fn feedback_near_one_is_unstable() {
        let p = TandemParams::<f64>::new(0.05, 3.0, 2.5, 0.999, 3).unwrap();
        assert!(!stability_report(&p).unwrap().is_stable);
    }
}
