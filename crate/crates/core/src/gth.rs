//! Grassmann-Taksar-Heyman state reduction on banded rate matrices.
//!
//! Only off-diagonal rates are stored. The reduction never subtracts, so the
//! stationary vector keeps full relative accuracy even for probabilities many
//! orders of magnitude below one, and it is exact over rational scalars.

use crate::scalar::Scalar;

/// Off-diagonal transition rates with `|row - col| <= bandwidth`.
#[derive(Debug, Clone)]
pub(crate) struct BandedRates<T> {
    n: usize,
    bandwidth: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandedRates<T> {
    pub(crate) fn new(n: usize, bandwidth: usize) -> Self {
        let width = 2 * bandwidth + 1;
        Self { n, bandwidth, width, data: vec![T::zero(); n * width] }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(row.abs_diff(col) <= self.bandwidth, "entry outside band");
        row * self.width + col + self.bandwidth - row
    }

    pub(crate) fn add(&mut self, row: usize, col: usize, rate: T) {
        if row == col {
            return;
        }
        let s = self.slot(row, col);
        self.data[s] = self.data[s].clone() + rate;
    }

    fn get(&self, row: usize, col: usize) -> &T {
        &self.data[self.slot(row, col)]
    }
}

/// Returns the normalised stationary vector, or the index of a state whose
/// reduced outflow vanished (the chain is not irreducible).
pub(crate) fn solve<T: Scalar>(mut q: BandedRates<T>) -> Result<Vec<T>, usize> {
    let n = q.n;
    let bw = q.bandwidth;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut outflow = vec![T::zero(); n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let s = (lo..k).fold(T::zero(), |acc, c| acc + q.get(k, c).clone());
        if s <= T::zero() {
            return Err(k);
        }
        for r in lo..k {
            let into_k = q.get(r, k).clone();
            if into_k == T::zero() {
                continue;
            }
            let scale = into_k / s.clone();
            for c in lo..k {
                if c == r {
                    continue;
                }
                let from_k = q.get(k, c).clone();
                if from_k != T::zero() {
                    let slot = q.slot(r, c);
                    q.data[slot] = q.data[slot].clone() + scale.clone() * from_k;
                }
            }
        }
        outflow[k] = s;
    }

    let mut pi = vec![T::zero(); n];
    pi[0] = T::one();
    let mut total = T::one();
    for k in 1..n {
        let lo = k.saturating_sub(bw);
        // judge reachability by the rates; the probabilities may underflow
        if (lo..k).all(|r| *q.get(r, k) <= T::zero()) {
            return Err(k);
        }
        let inflow = (lo..k).fold(T::zero(), |acc, r| acc + pi[r].clone() * q.get(r, k).clone());
        pi[k] = inflow / outflow[k].clone();
        total = total + pi[k].clone();
    }
    for p in &mut pi {
        *p = p.clone() / total.clone();
    }
    Ok(pi)
}
