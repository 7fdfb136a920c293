//! Spectral expansion of the stationary distribution.
//!
//! For levels `j >= 1` the balance equations read
//! `v_{j-1} B + v_j (A - D_A - D_B - D_C) + v_{j+1} C = 0`, so every left
//! null vector `u` of the characteristic polynomial
//! `Q(lam) = B + (A - D_A - D_B - D_C) lam + C lam^2` yields a solution
//! `v_j = u lam^j`. A stable model has exactly `N + 1` roots strictly inside
//! the unit disk, and the stationary vectors are the combination
//! `v_j = sum_k alpha_k u_k lam_k^j` whose coefficients satisfy the level-0
//! balance equations and normalisation.
//!
//! Three solvers are provided:
//!
//! * [`solve_exact`]: the full expansion.
//! * [`solve_geometric`]: only the dominant term, its weight fixed by
//!   normalisation alone. No linear system is solved.
//! * [`solve_hybrid`]: explicit vectors for levels `0..M` and the dominant
//!   term from level `M` on. Balance holds everywhere except at level `M`.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use thiserror::Error;

use crate::distribution::{DistributionKind, JointDistribution};
use crate::model::{build_qbd_matrices, stability_of, ModelError, QbdMatrices, TandemParams};
use crate::scalar::{lit, Real};

/// Half-width of the band around the unit circle whose roots are neither
/// interior nor exterior.
pub const CIRCLE_EPS: f64 = 1e-9;
/// Largest tolerated normalised residual of an eigenpair.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
/// Roots closer than this are treated as repeated.
pub const CONFLUENCE_GAP: f64 = 1e-8;
/// Largest tolerated normalised residual of any balance equation.
pub const BALANCE_TOL: f64 = 1e-9;
/// Roundoff negatives above this are clipped to zero, anything below is an error.
pub const NEGATIVE_CLIP: f64 = -1e-12;
/// Number of levels whose balance equations are verified after an exact solve.
pub const CHECKED_LEVELS: usize = 200;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model is unstable (drift up {drift_up} >= drift down {drift_down})")]
    Unstable { drift_up: f64, drift_down: f64 },
    #[error("eigenvalue iteration did not converge")]
    EigenSolverFailed,
    #[error("expected {expected} roots inside the unit disk, found {found}; roots: {roots:?}")]
    WrongInteriorCount { expected: usize, found: usize, roots: Vec<(f64, f64)> },
    #[error("interior roots {a:?} and {b:?} are not separated")]
    RepeatedEigenvalue { a: (f64, f64), b: (f64, f64) },
    #[error("eigenvector residual {residual:e} at lambda = {lam:?}")]
    EigenvectorResidualTooLarge { lam: (f64, f64), residual: f64 },
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("dominant eigenvalue {re} + {im}i is not real")]
    DominantNotReal { re: f64, im: f64 },
    #[error("another interior eigenvalue shares the dominant modulus {modulus}")]
    DominantNotSimple { modulus: f64 },
    #[error("dominant eigenvector has a negative component {value}")]
    DominantNotPositive { value: f64 },
    #[error("boundary system has rank {rank}, expected {expected}")]
    BoundaryRankDeficient { rank: usize, expected: usize },
    #[error("probability of phase {phase}, level {level} is {value:e}")]
    NegativeProbability { phase: usize, level: usize, value: f64 },
    #[error("balance residual {residual:e} at level {level}")]
    BalanceResidual { level: usize, residual: f64 },
    #[error("hybrid boundary system is singular")]
    HybridSystemSingular,
}

/// Which expansion produced a [`SpectralSolution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Geometric,
    /// Dominant-term tail from this level on.
    Hybrid(usize),
}

/// An interior root with its left null vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair<T: Real> {
    pub lam: Complex<T>,
    /// Row vector `u` with `u Q(lam) = 0`, largest-modulus entry equal to one.
    pub u: DVector<Complex<T>>,
    /// `|u Q(lam)|_inf / (|Q(lam)|_inf |u|_inf)`.
    pub residual: T,
}

/// Coefficients and diagnostics of one expansion.
#[derive(Debug, Clone)]
pub struct SpectralSolution<T: Real> {
    pub method: Method,
    pub interior: Vec<EigenPair<T>>,
    pub gamma: T,
    /// Dominant eigenvector, nonnegative with unit sum.
    pub u_dom: DVector<T>,
    /// One coefficient per interior pair (exact) or the single dominant
    /// coefficient (geometric, hybrid), relative to `u_dom`.
    pub alphas: Vec<Complex<T>>,
    /// For the hybrid method, the residual of the level-`M` balance equations.
    pub cut_residual: Option<T>,
    pub distribution: SpectralDistribution<T>,
}

/// `v_j` given explicitly for `j < start`, and as
/// `Re sum_k w_k lam_k^(j - start)` from `start` on.
#[derive(Debug, Clone)]
pub struct SpectralDistribution<T: Real> {
    phases: usize,
    boundary: Vec<DVector<T>>,
    terms: Vec<(Complex<T>, DVector<Complex<T>>)>,
}

impl<T: Real> SpectralDistribution<T> {
    fn start(&self) -> usize {
        self.boundary.len()
    }

    /// The raw level vector, including roundoff negatives.
    pub fn level_vector(&self, j: usize) -> DVector<T> {
        if j < self.start() {
            return self.boundary[j].clone();
        }
        let exp = (j - self.start()) as i32;
        let mut acc = DVector::<Complex<T>>::zeros(self.phases);
        for (lam, w) in &self.terms {
            let p = lam.powi(exp);
            acc += w * p;
        }
        acc.map(|z| z.re)
    }

    /// Total absolute tail mass of the individual terms, `sum_k |w_k e / (1 - lam_k)|`.
    /// Equal to one without cancellation; roundoff in every query grows with it.
    pub fn term_mass(&self) -> T {
        let one = Complex::new(T::one(), T::zero());
        let tail = self.terms.iter().fold(T::zero(), |acc, (lam, w)| {
            acc + (w.iter().fold(Complex::new(T::zero(), T::zero()), |a, x| a + x) / (one - lam)).modulus()
        });
        self.boundary.iter().fold(tail, |acc, v| acc + v.iter().fold(T::zero(), |a, x| a + x.abs()))
    }
}

impl<T: Real> JointDistribution<T> for SpectralDistribution<T> {
    fn kind(&self) -> DistributionKind {
        DistributionKind::SpectralTailed
    }

    fn phases(&self) -> usize {
        self.phases
    }

    fn prob(&self, i: usize, j: usize) -> T {
        if i >= self.phases {
            return T::zero();
        }
        let p = self.level_vector(j)[i];
        if p < T::zero() {
            T::zero()
        } else {
            p
        }
    }

    fn support_bound(&self) -> Option<usize> {
        None
    }

    fn phase_marginal(&self) -> Vec<T> {
        let mut acc = DVector::<Complex<T>>::zeros(self.phases);
        for (lam, w) in &self.terms {
            acc += w / (Complex::new(T::one(), T::zero()) - lam);
        }
        let mut out: DVector<T> = acc.map(|z| z.re);
        for v in &self.boundary {
            out += v;
        }
        out.iter().copied().collect()
    }

    fn mean_level(&self) -> T {
        let one = Complex::new(T::one(), T::zero());
        let s = Complex::new(lit::<T>(self.start() as f64), T::zero());
        let mut tail = Complex::new(T::zero(), T::zero());
        for (lam, w) in &self.terms {
            let we = w.iter().fold(Complex::new(T::zero(), T::zero()), |a, x| a + x);
            let g = one - lam;
            tail += we * (s / g + lam / (g * g));
        }
        let head = self.boundary.iter().enumerate().fold(T::zero(), |acc, (j, v)| acc + lit::<T>(j as f64) * v.sum());
        head + tail.re
    }
}

fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

fn c<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

fn pair<T: Real>(z: Complex<T>) -> (f64, f64) {
    (z.re.to_f64(), z.im.to_f64())
}

fn inf_norm<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    m.row_iter()
        .map(|r| r.iter().fold(T::zero(), |a, z| a + z.modulus()))
        .fold(T::zero(), |a, b| if b > a { b } else { a })
}

fn vec_inf_norm<T: Real>(v: &DVector<Complex<T>>) -> T {
    v.iter().fold(T::zero(), |a, z| if z.modulus() > a { z.modulus() } else { a })
}

/// `Q(lam) = B + (A - D_A - D_B - D_C) lam + C lam^2`.
pub fn char_poly_eval<T: Real>(m: &QbdMatrices<T>, lam: Complex<T>) -> DMatrix<Complex<T>> {
    let b = to_complex(&m.b);
    let l = to_complex(&m.interior_local());
    let cm = to_complex(&m.c);
    b + l * lam + cm * (lam * lam)
}

fn char_poly_derivative<T: Real>(m: &QbdMatrices<T>, lam: Complex<T>) -> DMatrix<Complex<T>> {
    to_complex(&m.interior_local()) + to_complex(&m.c) * (lam * c(lit::<T>(2.0)))
}

/// Right singular vector of `q` for its smallest singular value.
///
/// Only right singular vectors are used: for a numerically zero singular
/// value the matching left vector returned by the SVD is not accurate.
fn right_null<T: Real>(q: &DMatrix<Complex<T>>) -> (T, DVector<Complex<T>>) {
    let svd = q.clone().svd(false, true);
    let k = svd.singular_values.imin();
    let v_t = svd.v_t.expect("requested V^H");
    (svd.singular_values[k], v_t.row(k).transpose().map(|z| z.conj()))
}

/// Left null row `y` and right null column `w` of `q`.
fn null_vectors<T: Real>(q: &DMatrix<Complex<T>>) -> (DVector<Complex<T>>, DVector<Complex<T>>) {
    let (_, w) = right_null(q);
    let (_, y) = right_null(&q.transpose());
    (y, w)
}

/// Newton steps on `lam` using `y Q(lam) w / y Q'(lam) w`. A step is kept
/// only if it lowers the smallest singular value of `Q` and stays near the
/// starting root.
fn refine_root<T: Real>(m: &QbdMatrices<T>, lam0: Complex<T>) -> Complex<T> {
    let mut lam = lam0;
    let scale = if lam0.modulus() > T::one() { lam0.modulus() } else { T::one() };
    let mut q = char_poly_eval(m, lam);
    let (mut smin, _) = right_null(&q);
    for _ in 0..8 {
        let (y, w) = null_vectors(&q);
        let num = (y.transpose() * &q * &w)[(0, 0)];
        let den = (y.transpose() * char_poly_derivative(m, lam) * &w)[(0, 0)];
        if den.modulus() == T::zero() {
            break;
        }
        let step = num / den;
        let next = lam - step;
        if (next - lam0).modulus() > lit::<T>(1e-3) * scale {
            break;
        }
        let q_next = char_poly_eval(m, next);
        let (s_next, _) = right_null(&q_next);
        if !(s_next < smin) {
            break;
        }
        lam = next;
        q = q_next;
        smin = s_next;
        if step.modulus() <= lit::<T>(1e-16) * scale {
            break;
        }
    }
    lam
}

/// Left null vector of `Q(lam)` scaled so the largest-modulus entry is real
/// and equals one.
fn eigen_pair<T: Real>(m: &QbdMatrices<T>, lam: Complex<T>) -> EigenPair<T> {
    let q = char_poly_eval(m, lam);
    let (_, y) = right_null(&q.transpose());
    let (imax, _) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.modulus().partial_cmp(&b.1.modulus()).expect("NaN"))
        .expect("empty vector");
    let pivot = y[imax];
    let mut u = y.map(|z| z / pivot);
    u[imax] = c(T::one());
    if lam.im == T::zero() {
        u = u.map(|z| c(z.re));
    }
    let res = (u.transpose() * &q).transpose();
    let residual = vec_inf_norm(&res) / (inf_norm(&q) * vec_inf_norm(&u));
    EigenPair { lam, u, residual }
}

/// Parlett-Reinsch balancing: a diagonal similarity by powers of two that
/// equalises row and column norms without changing the eigenvalues.
fn balance<T: Real>(a: &mut DMatrix<T>) {
    let n = a.nrows();
    let radix = lit::<T>(2.0);
    let radix_sq = radix * radix;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut col = T::zero();
            let mut row = T::zero();
            for k in 0..n {
                if k != i {
                    col += a[(k, i)].abs();
                    row += a[(i, k)].abs();
                }
            }
            if col == T::zero() || row == T::zero() {
                continue;
            }
            let total = col + row;
            let mut f = T::one();
            let mut g = row / radix;
            while col < g {
                f *= radix;
                col *= radix_sq;
            }
            g = row * radix;
            while col >= g {
                f /= radix;
                col /= radix_sq;
            }
            if (col + row) / f < lit::<T>(0.95) * total {
                converged = false;
                for k in 0..n {
                    a[(i, k)] /= f;
                    a[(k, i)] *= f;
                }
            }
        }
    }
}

/// All roots of `det Q(lam)` strictly inside the unit disk with their left
/// null vectors, sorted by increasing modulus (the dominant root is last).
///
/// With `lam = s + 1/mu` the polynomial becomes
/// `Q(s) mu^2 + Q'(s) mu + C`, and the roots come from the eigenvalues of its
/// companion matrix built with `Q(s)^{-1}`. The infinite roots of `Q` (from
/// the singular `C`) show up as `mu = 0`. The shift `s = 0` uses `B`, which
/// is triangular and resolves clusters of tiny roots at light load, but
/// `B^{-1}` grows like `(mu2 p_fb / sigma)^N` under strong feedback. When
/// that spectrum fails validation the shift `s = -1` is tried, where
/// `Q(-1) = B + C + D - A` is diagonally dominant by twice the arrival rate.
/// Each root is polished by Newton iteration on the smallest singular
/// triplet of `Q(lam)`.
pub fn solve_interior_spectrum<T: Real>(m: &QbdMatrices<T>) -> Result<Vec<EigenPair<T>>, SpectralError> {
    match shifted_spectrum(m, T::zero()) {
        Ok(s) => Ok(s),
        Err(first) => shifted_spectrum(m, -T::one()).map_err(|_| first),
    }
}

fn shifted_spectrum<T: Real>(m: &QbdMatrices<T>, shift: T) -> Result<Vec<EigenPair<T>>, SpectralError> {
    let n = m.phases();
    let local = m.interior_local();
    let q_shift = &m.b + &local * shift + &m.c * (shift * shift);
    let dq_shift = &local + &m.c * (shift + shift);
    let lu = q_shift.lu();
    let qinv_c = lu.solve(&m.c).ok_or(SpectralError::EigenSolverFailed)?;
    let qinv_dq = lu.solve(&dq_shift).ok_or(SpectralError::EigenSolverFailed)?;
    let mut comp = DMatrix::<T>::zeros(2 * n, 2 * n);
    for i in 0..n {
        comp[(i, n + i)] = T::one();
    }
    comp.view_mut((n, 0), (n, n)).copy_from(&(-qinv_c));
    comp.view_mut((n, n), (n, n)).copy_from(&(-qinv_dq));
    balance(&mut comp);
    let schur = nalgebra::Schur::try_new(comp, lit::<T>(1e-15), 10_000).ok_or(SpectralError::EigenSolverFailed)?;
    let mus = schur.complex_eigenvalues();

    // Roots near or inside the disk are polished before classification so
    // that the root at one lands inside the circle band. One root of every
    // conjugate pair is refined and mirrored, keeping the spectrum closed
    // under conjugation.
    let eps = lit::<T>(CIRCLE_EPS);
    let mut all_roots = Vec::new();
    let mut refined: Vec<Complex<T>> = Vec::with_capacity(n);
    for mu in mus.iter() {
        if mu.modulus() < eps || mu.im < T::zero() {
            continue;
        }
        let mut lam = c(shift) + c(T::one()) / mu;
        if lam.modulus() < lit::<T>(2.0) {
            lam = refine_root(m, lam);
        }
        let group = if mu.im == T::zero() { vec![c(lam.re)] } else { vec![lam, lam.conj()] };
        for lam in group {
            all_roots.push(pair(lam));
            if lam.modulus() < T::one() - eps {
                refined.push(lam);
            }
        }
    }
    if refined.len() != n {
        all_roots.sort_by(|a, b| (a.0.hypot(a.1)).total_cmp(&b.0.hypot(b.1)));
        return Err(SpectralError::WrongInteriorCount { expected: n, found: refined.len(), roots: all_roots });
    }
    refined.sort_by(|a, b| {
        a.modulus().partial_cmp(&b.modulus()).expect("NaN root").then(a.im.partial_cmp(&b.im).expect("NaN root"))
    });
    let gap = lit::<T>(CONFLUENCE_GAP);
    for (k, a) in refined.iter().enumerate() {
        for b in &refined[k + 1..] {
            if (*a - *b).modulus() < gap {
                return Err(SpectralError::RepeatedEigenvalue { a: pair(*a), b: pair(*b) });
            }
        }
    }

    let tol = lit::<T>(EIGEN_RESIDUAL_TOL);
    let mut pairs = Vec::with_capacity(n);
    let mut k = 0;
    while k < refined.len() {
        let lam = refined[k];
        let ep = eigen_pair(m, lam);
        if !(ep.residual <= tol) {
            return Err(SpectralError::EigenvectorResidualTooLarge { lam: pair(lam), residual: ep.residual.to_f64() });
        }
        if lam.im != T::zero() && k + 1 < refined.len() && refined[k + 1] == lam.conj() {
            let mirror = EigenPair { lam: lam.conj(), u: ep.u.map(|z| z.conj()), residual: ep.residual };
            // keep the pair ordered by imaginary part as sorted above
            if lam.im < T::zero() {
                pairs.push(ep);
                pairs.push(mirror);
            } else {
                pairs.push(mirror);
                pairs.push(ep);
            }
            k += 2;
        } else {
            pairs.push(ep);
            k += 1;
        }
    }
    Ok(pairs)
}

/// The dominant root `gamma` and its eigenvector, rescaled to be
/// nonnegative with unit sum.
pub fn dominant_eigenpair<T: Real>(spectrum: &[EigenPair<T>]) -> Result<(T, DVector<T>), SpectralError> {
    let dom = spectrum
        .iter()
        .max_by(|a, b| a.lam.modulus().partial_cmp(&b.lam.modulus()).expect("NaN root"))
        .ok_or(SpectralError::EmptySpectrum)?;
    let tol = lit::<T>(1e-10);
    if ComplexField::abs(dom.lam.im) > tol {
        return Err(SpectralError::DominantNotReal { re: dom.lam.re.to_f64(), im: dom.lam.im.to_f64() });
    }
    let modulus = dom.lam.modulus();
    let rivals = spectrum.iter().filter(|p| ComplexField::abs(p.lam.modulus() - modulus) <= tol).count();
    if rivals > 1 {
        return Err(SpectralError::DominantNotSimple { modulus: modulus.to_f64() });
    }
    let gamma = dom.lam.re;
    if !(gamma > T::zero()) {
        return Err(SpectralError::DominantNotReal { re: gamma.to_f64(), im: dom.lam.im.to_f64() });
    }
    let raw: DVector<T> = dom.u.map(|z| z.re);
    let min = raw.min();
    if min < -lit::<T>(1e-10) * raw.amax() {
        return Err(SpectralError::DominantNotPositive { value: min.to_f64() });
    }
    let clipped = raw.map(|x| if x < T::zero() { T::zero() } else { x });
    let sum = clipped.sum();
    Ok((gamma, clipped / sum))
}

fn max_rate<T: Real>(m: &QbdMatrices<T>) -> T {
    let d = &m.d_a + &m.d_b + &m.d_c;
    d.max()
}

/// Largest normalised residual of the balance equations over `0..=levels`.
pub fn balance_residual<T: Real>(m: &QbdMatrices<T>, dist: &SpectralDistribution<T>, levels: usize) -> (usize, T) {
    let l0 = m.boundary_local();
    let l = m.interior_local();
    let scale = max_rate(m);
    let mut worst = (0, T::zero());
    let mut prev: Option<DVector<T>> = None;
    let mut cur = dist.level_vector(0);
    for j in 0..=levels {
        let next = dist.level_vector(j + 1);
        let mut r = cur.transpose() * if j == 0 { &l0 } else { &l } + next.transpose() * &m.c;
        if let Some(p) = &prev {
            r += p.transpose() * &m.b;
        }
        let res = r.amax() / scale;
        if res > worst.1 {
            worst = (j, res);
        }
        prev = Some(cur);
        cur = next;
    }
    worst
}

/// The first level from which every level vector is negligible.
fn scan_depth<T: Real>(dist: &SpectralDistribution<T>, gamma: T) -> usize {
    let tail =
        if gamma > lit::<T>(1e-3) { (lit::<T>(-40.0) / ComplexField::ln(gamma)).to_f64().ceil() as usize } else { 8 };
    dist.start() + tail.min(20_000)
}

fn check_nonnegative<T: Real>(dist: &SpectralDistribution<T>, levels: usize) -> Result<(), SpectralError> {
    let floor = lit::<T>(NEGATIVE_CLIP);
    for j in 0..=levels {
        let v = dist.level_vector(j);
        for (i, &p) in v.iter().enumerate() {
            if p < floor {
                return Err(SpectralError::NegativeProbability { phase: i, level: j, value: p.to_f64() });
            }
        }
    }
    Ok(())
}

fn inv_or_one<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one() / x
    } else {
        T::one()
    }
}

/// Full expansion over all `N + 1` interior roots.
///
/// The coefficients solve the level-0 balance equations
/// `v_0 (A - D_A - D_B) + v_1 C = 0` stacked with normalisation, an
/// `(N + 2) x (N + 1)` system solved in the least-squares sense.
pub fn solve_exact<T: Real>(
    m: &QbdMatrices<T>,
    spectrum: &[EigenPair<T>],
) -> Result<SpectralSolution<T>, SpectralError> {
    let n = m.phases();
    let (gamma, u_dom) = dominant_eigenpair(spectrum)?;
    let l0 = to_complex(&m.boundary_local());
    let cm = to_complex(&m.c);
    let one = c(T::one());
    let k = spectrum.len();
    let mut sys = DMatrix::<Complex<T>>::zeros(n + 1, k);
    for (col, ep) in spectrum.iter().enumerate() {
        let row = ep.u.transpose() * &l0 + (ep.u.transpose() * &cm) * ep.lam;
        for cidx in 0..n {
            sys[(cidx, col)] = row[(0, cidx)];
        }
        let ue = ep.u.iter().fold(c(T::zero()), |a, z| a + z);
        sys[(n, col)] = ue / (one - ep.lam);
    }
    let mut rhs = DVector::<Complex<T>>::zeros(n + 1);
    rhs[n] = one;

    // Equilibrate rows and columns, solve, then refine once against the
    // unscaled system.
    let row_scale: Vec<T> =
        (0..=n).map(|r| inv_or_one(sys.row(r).iter().map(|z| z.modulus()).fold(T::zero(), T::max))).collect();
    let col_scale: Vec<T> =
        (0..k).map(|j| inv_or_one(sys.column(j).iter().map(|z| z.modulus()).fold(T::zero(), T::max))).collect();
    let mut scaled = sys.clone();
    for r in 0..=n {
        for j in 0..k {
            scaled[(r, j)] *= c(row_scale[r] * col_scale[j]);
        }
    }
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * T::default_epsilon() * lit::<T>((n + 1) as f64);
    let rank = svd.rank(cutoff);
    // Large N makes the eigenvector columns nearly collinear. The
    // minimum-norm solution is still correct whenever it balances, so rank
    // only decides which error is reported.
    let solve_scaled = |b: &DVector<Complex<T>>| -> Result<DVector<Complex<T>>, SpectralError> {
        let sb = DVector::from_iterator(n + 1, b.iter().zip(&row_scale).map(|(z, &w)| *z * c(w)));
        let y = svd.solve(&sb, cutoff).map_err(|_| SpectralError::BoundaryRankDeficient { rank, expected: k })?;
        Ok(DVector::from_iterator(k, y.iter().zip(&col_scale).map(|(z, &w)| *z * c(w))))
    };
    let mut alphas = solve_scaled(&rhs)?;
    let correction = solve_scaled(&(&rhs - &sys * &alphas))?;
    alphas += correction;
    // the balance equations are homogeneous, so rescaling keeps them
    let mass = (0..k).fold(c(T::zero()), |acc, j| acc + sys[(n, j)] * alphas[j]);
    alphas /= c(mass.re);

    let terms = spectrum.iter().zip(alphas.iter()).map(|(ep, &a)| (ep.lam, ep.u.map(|z| z * a))).collect();
    let distribution = SpectralDistribution { phases: n, boundary: Vec::new(), terms };

    let (level, residual) = balance_residual(m, &distribution, CHECKED_LEVELS);
    if !(residual <= lit::<T>(BALANCE_TOL)) {
        if rank < k {
            return Err(SpectralError::BoundaryRankDeficient { rank, expected: k });
        }
        return Err(SpectralError::BalanceResidual { level, residual: residual.to_f64() });
    }
    check_nonnegative(&distribution, scan_depth(&distribution, gamma))?;

    Ok(SpectralSolution {
        method: Method::Exact,
        interior: spectrum.to_vec(),
        gamma,
        u_dom,
        alphas: alphas.iter().copied().collect(),
        cut_residual: None,
        distribution,
    })
}

/// Dominant term only: `v_j = u_dom (1 - gamma) gamma^j` with `u_dom . e = 1`.
pub fn solve_geometric<T: Real>(m: &QbdMatrices<T>, gamma: T, u_dom: &DVector<T>) -> SpectralSolution<T> {
    let u = u_dom / u_dom.sum();
    let w = u.map(|x| c(x * (T::one() - gamma)));
    let distribution = SpectralDistribution { phases: m.phases(), boundary: Vec::new(), terms: vec![(c(gamma), w)] };
    SpectralSolution {
        method: Method::Geometric,
        interior: Vec::new(),
        gamma,
        u_dom: u,
        alphas: vec![c(T::one() - gamma)],
        cut_residual: None,
        distribution,
    }
}

/// Explicit `v_0 .. v_{M-1}` and `v_j = alpha u_dom gamma^j` for `j >= M`.
///
/// The `M (N + 1) + 1` unknowns solve the balance equations of levels
/// `0..M` and normalisation. Internally the tail weight is carried as
/// `beta = alpha gamma^M` to keep the system well scaled for large `M`.
pub fn solve_hybrid<T: Real>(
    m: &QbdMatrices<T>,
    spectrum: &[EigenPair<T>],
    levels: usize,
) -> Result<SpectralSolution<T>, SpectralError> {
    let big_m = levels.max(1);
    let n = m.phases();
    let (gamma, u_dom) = dominant_eigenpair(spectrum)?;
    let l0 = m.boundary_local();
    let l = m.interior_local();
    let size = big_m * n + 1;
    let beta_col = big_m * n;
    let mut g = DMatrix::<T>::zeros(size, size);
    // row (level, column) ; unknown (level', phase)
    for lev in 0..big_m {
        for col in 0..n {
            let row = lev * n + col;
            for i in 0..n {
                if lev >= 1 {
                    g[(row, (lev - 1) * n + i)] += m.b[(i, col)];
                }
                let local = if lev == 0 { l0[(i, col)] } else { l[(i, col)] };
                g[(row, lev * n + i)] += local;
                if lev + 1 < big_m {
                    g[(row, (lev + 1) * n + i)] += m.c[(i, col)];
                } else {
                    g[(row, beta_col)] += u_dom[i] * m.c[(i, col)];
                }
            }
        }
    }
    for x in 0..beta_col {
        g[(beta_col, x)] = T::one();
    }
    g[(beta_col, beta_col)] = u_dom.sum() / (T::one() - gamma);
    let mut rhs = DVector::<T>::zeros(size);
    rhs[beta_col] = T::one();

    let x = g.lu().solve(&rhs).ok_or(SpectralError::HybridSystemSingular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::HybridSystemSingular);
    }
    let boundary: Vec<DVector<T>> = (0..big_m).map(|lev| x.rows(lev * n, n).into_owned()).collect();
    let beta = x[beta_col];
    let distribution =
        SpectralDistribution { phases: n, boundary, terms: vec![(c(gamma), u_dom.map(|v| c(v * beta)))] };

    // Balance at level M is the one left unenforced.
    let scale = max_rate(m);
    let r = distribution.level_vector(big_m - 1).transpose() * &m.b
        + distribution.level_vector(big_m).transpose() * &l
        + distribution.level_vector(big_m + 1).transpose() * &m.c;
    let cut_residual = r.amax() / scale;
    check_nonnegative(&distribution, scan_depth(&distribution, gamma))?;

    let alpha = beta / ComplexField::powi(gamma, big_m as i32);
    Ok(SpectralSolution {
        method: Method::Hybrid(big_m),
        interior: spectrum.to_vec(),
        gamma,
        u_dom,
        alphas: vec![c(alpha)],
        cut_residual: Some(cut_residual),
        distribution,
    })
}

/// Station-1 mean queue length of any stationary solution.
pub fn mean_queue_length<T: Real>(dist: &impl JointDistribution<T>) -> T {
    dist.mean_level()
}

/// Stability check, matrix construction, spectrum and the requested expansion.
pub fn solve<T: Real>(params: &TandemParams<T>, method: Method) -> Result<SpectralSolution<T>, SpectralError> {
    let m = build_qbd_matrices(params)?;
    let report = stability_of(&m)?;
    if !report.is_stable {
        return Err(SpectralError::Unstable {
            drift_up: report.drift_up.to_f64(),
            drift_down: report.drift_down.to_f64(),
        });
    }
    let spectrum = solve_interior_spectrum(&m)?;
    match method {
        Method::Exact => solve_exact(&m, &spectrum),
        Method::Geometric => {
            let (gamma, u) = dominant_eigenpair(&spectrum)?;
            Ok(solve_geometric(&m, gamma, &u))
        }
        Method::Hybrid(levels) => solve_hybrid(&m, &spectrum, levels),
    }
}
