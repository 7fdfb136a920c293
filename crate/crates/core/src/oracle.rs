//! Brute-force stationary solutions on a finite rectangle of states.
//!
//! Serves as the ground truth for the spectral solvers, and as the solver
//! for a finite first buffer.

use thiserror::Error;

use crate::distribution::{DistributionKind, JointDistribution};
use crate::gth::{self, BandedRates};
use crate::metrics::{compute_metrics, MetricsError, PerformanceMetrics};
use crate::model::TandemParams;
use crate::scalar::{lit, Scalar};

/// Default truncation level for the infinite-buffer model.
pub const DEFAULT_J_BOUND: usize = 400;
/// Residual gate for `pi G = 0`, relative to the largest rate.
pub const RESIDUAL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("generator is not irreducible: state (i={phase}, j={level}) has no reduced outflow")]
    SingularGenerator { phase: usize, level: usize },
    #[error("stationary residual {0:e} exceeds tolerance")]
    ResidualTooLarge(f64),
    #[error("level marginal below 1e-300 at level {0}")]
    InsufficientMass(usize),
    #[error("level range {lo}..={hi} is empty or outside the support 0..={bound}")]
    BadRange { lo: usize, hi: usize, bound: usize },
    #[error("finite-buffer metrics require a capacity")]
    MissingCapacity,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorMode {
    /// Infinite buffer cut at the top level; arrivals there are suppressed.
    TruncatedInfinite,
    /// Real capacity `K`; arrivals and fed-back jobs finding `j = K` are lost.
    FiniteCapacity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    /// `(i, j)`
    pub from: (usize, usize),
    pub to: (usize, usize),
    pub rate: T,
}

#[derive(Debug, Clone)]
pub struct TruncatedGenerator<T> {
    pub phases: usize,
    pub j_bound: usize,
    pub mode: GeneratorMode,
    pub rates: Vec<Transition<T>>,
}

impl<T: Scalar> TruncatedGenerator<T> {
    pub fn state_count(&self) -> usize {
        self.phases * (self.j_bound + 1)
    }

    /// States ordered level by level, phases within a level.
    pub fn states(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..=self.j_bound).flat_map(move |j| (0..self.phases).map(move |i| (i, j)))
    }

    pub fn index(&self, (i, j): (usize, usize)) -> usize {
        j * self.phases + i
    }

    pub fn max_rate(&self) -> T {
        self.rates.iter().fold(T::zero(), |acc, t| T::max_of(acc, t.rate.clone()))
    }

    /// `|pi G|_inf` over all states.
    pub fn residual(&self, pi: &[T]) -> T {
        let mut flow = vec![T::zero(); self.state_count()];
        for t in &self.rates {
            let (a, b) = (self.index(t.from), self.index(t.to));
            let f = pi[a].clone() * t.rate.clone();
            flow[a] = flow[a].clone() - f.clone();
            flow[b] = flow[b].clone() + f;
        }
        flow.into_iter().fold(T::zero(), |acc, x| T::max_of(acc, x.magnitude()))
    }
}

/// Enumerates every transition of the model on levels `0..=j_bound`.
///
/// At the top level external arrivals are dropped and a fed-back job is
/// lost, leaving only its phase change. Both modes therefore share one
/// generator; the mode records how the top level is interpreted.
pub fn build_truncated_generator<T: Scalar>(
    params: &TandemParams<T>,
    j_bound: usize,
    mode: GeneratorMode,
) -> TruncatedGenerator<T> {
    let j_bound = j_bound.max(1);
    let n = params.n_threshold;
    let exit = params.exit_rate();
    let fb = params.feedback_rate();
    let mut rates = Vec::new();
    let mut push = |from: (usize, usize), to: (usize, usize), rate: &T| {
        if *rate != T::zero() {
            rates.push(Transition { from, to, rate: rate.clone() });
        }
    };
    for j in 0..=j_bound {
        for i in 0..=n {
            if j < j_bound {
                push((i, j), (i, j + 1), &params.sigma);
            }
            if j >= 1 && i < n {
                push((i, j), (i + 1, j - 1), &params.mu1);
            }
            if i >= 1 {
                push((i, j), (i - 1, j), &exit);
                push((i, j), (i - 1, (j + 1).min(j_bound)), &fb);
            }
        }
    }
    TruncatedGenerator { phases: n + 1, j_bound, mode, rates }
}

/// The finite-buffer generator for `params.k_capacity`.
pub fn finite_generator<T: Scalar>(params: &TandemParams<T>) -> Result<TruncatedGenerator<T>, OracleError> {
    let k = params.k_capacity.ok_or(OracleError::MissingCapacity)?;
    Ok(build_truncated_generator(params, k, GeneratorMode::FiniteCapacity))
}

/// Explicit probabilities on `phases x (j_bound + 1)` states.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedDistribution<T> {
    phases: usize,
    j_bound: usize,
    mode: GeneratorMode,
    probs: Vec<T>,
}

impl<T: Scalar> TruncatedDistribution<T> {
    pub fn mode(&self) -> GeneratorMode {
        self.mode
    }

    /// Probabilities in generator state order.
    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }
}

impl<T: Scalar> JointDistribution<T> for TruncatedDistribution<T> {
    fn kind(&self) -> DistributionKind {
        DistributionKind::Truncated
    }

    fn phases(&self) -> usize {
        self.phases
    }

    fn prob(&self, i: usize, j: usize) -> T {
        if i >= self.phases || j > self.j_bound {
            return T::zero();
        }
        self.probs[j * self.phases + i].clone()
    }

    fn support_bound(&self) -> Option<usize> {
        Some(self.j_bound)
    }

    fn phase_marginal(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.phases];
        for (s, p) in self.probs.iter().enumerate() {
            let i = s % self.phases;
            out[i] = out[i].clone() + p.clone();
        }
        out
    }

    fn mean_level(&self) -> T {
        self.probs
            .chunks(self.phases)
            .enumerate()
            .fold(T::zero(), |acc, (j, lvl)| acc + T::from_usize(j) * lvl.iter().fold(T::zero(), |a, p| a + p.clone()))
    }
}

/// Solves `pi G = 0, sum pi = 1` by state reduction on the banded generator.
pub fn solve_stationary<T: Scalar>(g: &TruncatedGenerator<T>) -> Result<TruncatedDistribution<T>, OracleError> {
    // transitions move at most one level and one phase: |index change| <= phases
    let mut banded = BandedRates::new(g.state_count(), g.phases);
    for t in &g.rates {
        banded.add(g.index(t.from), g.index(t.to), t.rate.clone());
    }
    let pi =
        gth::solve(banded).map_err(|s| OracleError::SingularGenerator { phase: s % g.phases, level: s / g.phases })?;
    let residual = g.residual(&pi);
    if residual > lit::<T>(RESIDUAL_TOL) * g.max_rate() {
        return Err(OracleError::ResidualTooLarge(residual.to_f64()));
    }
    Ok(TruncatedDistribution { phases: g.phases, j_bound: g.j_bound, mode: g.mode, probs: pi })
}

/// Geometric mean of successive level-marginal ratios over `j_lo..=j_hi`,
/// an estimate of the tail decay rate.
///
/// Levels within a few dozen of the truncation bound carry mass reflected
/// from the top and bias the estimate; keep `j_hi` well below it.
pub fn tail_ratio_estimate<T: Scalar>(
    dist: &impl JointDistribution<T>,
    j_lo: usize,
    j_hi: usize,
) -> Result<f64, OracleError> {
    let bound = dist.support_bound().unwrap_or(usize::MAX);
    if j_lo >= j_hi || j_hi > bound {
        return Err(OracleError::BadRange { lo: j_lo, hi: j_hi, bound });
    }
    let mut log_sum = 0.0;
    let mut prev = dist.level_marginal(j_lo).to_f64();
    if !(prev >= 1e-300) {
        return Err(OracleError::InsufficientMass(j_lo));
    }
    for j in j_lo + 1..=j_hi {
        let p = dist.level_marginal(j).to_f64();
        if !(p >= 1e-300) {
            return Err(OracleError::InsufficientMass(j));
        }
        log_sum += (p / prev).ln();
        prev = p;
    }
    Ok((log_sum / (j_hi - j_lo) as f64).exp())
}

/// Solves the finite-buffer model and reports its performance measures.
pub fn finite_buffer_metrics<T: Scalar>(
    params: &TandemParams<T>,
    dist: &TruncatedDistribution<T>,
) -> Result<PerformanceMetrics<T>, OracleError> {
    if params.k_capacity.is_none() {
        return Err(OracleError::MissingCapacity);
    }
    Ok(compute_metrics(params, dist)?)
}
