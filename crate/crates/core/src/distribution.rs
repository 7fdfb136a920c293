//! The query interface shared by every stationary solution.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionKind {
    /// Finitely many explicit levels followed by a closed-form tail.
    SpectralTailed,
    /// Explicit probabilities on a finite rectangle of states.
    Truncated,
}

/// Joint stationary probabilities over `(phase i, level j)`.
///
/// The phase is the station-2 occupancy and the level is the station-1
/// occupancy. Implementations answer marginals and the mean level in closed
/// form where they can.
pub trait JointDistribution<T: Scalar> {
    fn kind(&self) -> DistributionKind;

    fn phases(&self) -> usize;

    /// `P(I = i, J = j)`, zero outside the support.
    fn prob(&self, i: usize, j: usize) -> T;

    /// The largest level with nonzero mass, if finite.
    fn support_bound(&self) -> Option<usize>;

    /// `P(J = j)`.
    fn level_marginal(&self, j: usize) -> T {
        (0..self.phases()).fold(T::zero(), |acc, i| acc + self.prob(i, j))
    }

    /// `P(I = i)` for `i = 0..phases`.
    fn phase_marginal(&self) -> Vec<T>;

    fn total_mass(&self) -> T {
        self.phase_marginal().into_iter().fold(T::zero(), |acc, p| acc + p)
    }

    /// `E[J]`, the station-1 mean queue length.
    fn mean_level(&self) -> T;
}

/// Total-variation distance between level marginals over `0..=j_max`.
pub fn level_tv<T: Scalar>(a: &impl JointDistribution<T>, b: &impl JointDistribution<T>, j_max: usize) -> T {
    let sum = (0..=j_max).fold(T::zero(), |acc, j| acc + (a.level_marginal(j) - b.level_marginal(j)).magnitude());
    sum / T::from_usize(2)
}

/// Total-variation distance between joint distributions over levels `0..=j_max`.
pub fn joint_tv<T: Scalar>(a: &impl JointDistribution<T>, b: &impl JointDistribution<T>, j_max: usize) -> T {
    assert_eq!(a.phases(), b.phases(), "phase spaces differ");
    let mut sum = T::zero();
    for j in 0..=j_max {
        for i in 0..a.phases() {
            sum = sum + (a.prob(i, j) - b.prob(i, j)).magnitude();
        }
    }
    sum / T::from_usize(2)
}
