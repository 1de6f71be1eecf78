//! Dense complex kernels for Hermitian positive-definite pairs.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub use crate::error::LinalgError;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

type LResult<T> = std::result::Result<T, LinalgError>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// `(a + aᴴ) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    let n = a.nrows();
    CMat::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Columns `cols` of the n×n identity.
pub fn selector(n: usize, cols: std::ops::Range<usize>) -> CMat {
    let start = cols.start;
    CMat::from_fn(n, cols.len(), |i, j| if i == start + j { ONE } else { ZERO })
}

pub fn unit_vector(n: usize, i: usize) -> CVec {
    let mut e = CVec::zeros(n);
    e[i] = ONE;
    e
}

/// Hermitian positive-definite matrix, symmetrized on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianPd(CMat);

impl HermitianPd {
    pub fn new(a: CMat) -> LResult<Self> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch);
        }
        let h = hermitian_part(&a);
        cholesky(&h)?;
        Ok(Self(h))
    }

    /// Skips the factorization check; the caller vouches for definiteness.
    pub fn new_unchecked(a: CMat) -> Self {
        Self(hermitian_part(&a))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_inner(self) -> CMat {
        self.0
    }
}

impl Deref for HermitianPd {
    type Target = CMat;
    fn deref(&self) -> &CMat {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneralizedEigenpair {
    pub value: f64,
    pub vector: CVec,
}

/// Lower Cholesky factor of the Hermitian part of `a`.
pub fn cholesky(a: &CMat) -> LResult<CMat> {
    Ok(CholeskyFactor::new(a)?.l)
}

/// `a = L Lᴴ` with a strictly positive real diagonal.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    l: CMat,
}

impl CholeskyFactor {
    pub fn new(a: &CMat) -> LResult<Self> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch);
        }
        let n = a.nrows();
        let mut l = CMat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(LinalgError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut s = (a[(i, j)] + a[(j, i)].conj()) * 0.5;
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                if !s.re.is_finite() || !s.im.is_finite() {
                    return Err(LinalgError::NotPositiveDefinite);
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self { l })
    }

    pub fn l(&self) -> &CMat {
        &self.l
    }

    /// Overwrites `b` with `a⁻¹ b`.
    pub fn solve_mut(&self, b: &mut CMat) {
        self.l.solve_lower_triangular_unchecked_mut(b);
        self.l.ad_solve_lower_triangular_unchecked_mut(b);
    }

    pub fn solve_vec_mut(&self, b: &mut CVec) {
        self.l.solve_lower_triangular_unchecked_mut(b);
        self.l.ad_solve_lower_triangular_unchecked_mut(b);
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.nrows()).map(|k| self.l[(k, k)].re.ln()).sum::<f64>()
    }
}

/// Solves `a x = b` by partially pivoted LU.
pub fn solve_linear(a: &CMat, b: &CMat) -> LResult<CMat> {
    if !a.is_square() || a.nrows() != b.nrows() {
        return Err(LinalgError::DimensionMismatch);
    }
    let lu = a.clone().lu();
    let n = a.nrows();
    let u = lu.u();
    let mut max = 0.0f64;
    let mut min = f64::INFINITY;
    for k in 0..n {
        let p = u[(k, k)].norm();
        max = max.max(p);
        min = min.min(p);
    }
    // relative pivot test: anything this small is singular at double precision
    if !(min > 1e-14 * max) || !max.is_finite() {
        return Err(LinalgError::SingularMatrix);
    }
    lu.solve(b).ok_or(LinalgError::SingularMatrix)
}

pub fn solve_vec(a: &CMat, b: &CVec) -> LResult<CVec> {
    let x = solve_linear(a, &CMat::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(x.column(0).into_owned())
}

/// `log |det a|`, or `-inf` when a pivot is exactly zero.
pub fn log_abs_det(a: &CMat) -> f64 {
    assert!(a.is_square(), "log_abs_det needs a square matrix");
    let lu = a.clone().lu();
    let u = lu.u();
    let mut acc = 0.0;
    for k in 0..a.nrows() {
        let p = u[(k, k)].norm();
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += p.ln();
    }
    acc
}

/// Rotates `v` so its largest-magnitude entry is real and nonnegative.
pub fn phase_normalize(v: &mut CVec) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (k, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_mag {
            best_mag = m;
            best = k;
        }
    }
    if best_mag > 0.0 {
        let rot = v[best].conj() / best_mag;
        for z in v.iter_mut() {
            *z *= rot;
        }
        v[best] = C64::new(v[best].re.max(0.0), 0.0);
    }
}

fn quad(a: &CMat, x: &CVec) -> f64 {
    x.dotc(&(a * x)).re
}

/// Settings for the power method on `b⁻¹a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub iters: usize,
    /// Early exit on relative Rayleigh-quotient change; zero disables it.
    pub tol: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { iters: 30, tol: 1e-12 }
    }
}

/// Largest generalized eigenpair by power iteration, default start.
pub fn gevd_top(a: &CMat, b: &CMat, iters: usize) -> LResult<GeneralizedEigenpair> {
    gevd_top_with(a, b, &PowerIteration { iters, ..Default::default() }, None)
}

pub fn gevd_top_with(
    a: &CMat,
    b: &CMat,
    opts: &PowerIteration,
    start: Option<&CVec>,
) -> LResult<GeneralizedEigenpair> {
    let n = a.nrows();
    if !a.is_square() || b.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch);
    }
    let a = hermitian_part(a);
    CholeskyFactor::new(&a)?;
    let chol_b = CholeskyFactor::new(b)?;
    let b = hermitian_part(b);

    let mut x = match start {
        Some(s) if s.len() == n && s.norm() > 0.0 => s.clone(),
        Some(_) => return Err(LinalgError::DimensionMismatch),
        None => default_start(&a, &b),
    };
    x /= C64::from(x.norm());
    let mut lambda = if opts.tol > 0.0 { quad(&a, &x) / quad(&b, &x) } else { 0.0 };
    for _ in 0..opts.iters.max(1) {
        let mut y = &a * &x;
        chol_b.solve_vec_mut(&mut y);
        let nrm = y.norm();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        x = y / C64::from(nrm);
        if opts.tol > 0.0 {
            let next = quad(&a, &x) / quad(&b, &x);
            let done = (next - lambda).abs() <= opts.tol * next.abs();
            lambda = next;
            if done {
                break;
            }
        }
    }
    if opts.tol <= 0.0 {
        lambda = quad(&a, &x) / quad(&b, &x);
    }
    phase_normalize(&mut x);
    Ok(GeneralizedEigenpair { value: lambda, vector: x })
}

// Coordinate with the largest diagonal ratio, tilted off the axes so no
// eigenvector is missed by symmetry.
fn default_start(a: &CMat, b: &CMat) -> CVec {
    let n = a.nrows();
    let mut best = 0;
    let mut best_ratio = f64::NEG_INFINITY;
    for k in 0..n {
        let r = a[(k, k)].re / b[(k, k)].re;
        if r > best_ratio {
            best_ratio = r;
            best = k;
        }
    }
    let tilt = 1e-2 / (n as f64).sqrt();
    let mut x = CVec::from_element(n, C64::new(tilt, 0.0));
    x[best] += ONE;
    x
}

/// All generalized eigenpairs, descending, with `xⱼᴴ b xₖ = δⱼₖ`.
pub fn gevd_full(a: &CMat, b: &CMat) -> LResult<Vec<GeneralizedEigenpair>> {
    if !a.is_square() || b.shape() != a.shape() {
        return Err(LinalgError::DimensionMismatch);
    }
    let a = hermitian_part(a);
    CholeskyFactor::new(&a)?;
    let l = cholesky(b)?;
    let mut y = a.clone();
    l.solve_lower_triangular_unchecked_mut(&mut y);
    let mut c = y.adjoint();
    l.solve_lower_triangular_unchecked_mut(&mut c);
    let eig = SymmetricEigen::new(hermitian_part(&c));
    let mut x = eig.eigenvectors.clone();
    l.ad_solve_lower_triangular_unchecked_mut(&mut x);

    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    Ok(order
        .into_iter()
        .map(|k| {
            let mut v = x.column(k).into_owned();
            phase_normalize(&mut v);
            GeneralizedEigenpair { value: eig.eigenvalues[k], vector: v }
        })
        .collect())
}

/// Hermitian PD inverse square root.
pub fn inv_sqrt(a: &CMat) -> LResult<CMat> {
    CholeskyFactor::new(a)?;
    let eig = SymmetricEigen::new(hermitian_part(a));
    let n = a.nrows();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(LinalgError::NotPositiveDefinite);
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for k in 0..n {
        let s = C64::from(eig.eigenvalues[k].sqrt().recip());
        for i in 0..n {
            scaled[(i, k)] *= s;
        }
    }
    Ok(hermitian_part(&(scaled * u.adjoint())))
}

/// Eigenvector of the largest eigenvalue of a Hermitian matrix, unit norm, phase fixed.
pub fn top_eigenvector(a: &CMat) -> (f64, CVec) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    let k = eig.eigenvalues.imax();
    let mut v = eig.eigenvectors.column(k).into_owned();
    v /= C64::from(v.norm());
    phase_normalize(&mut v);
    (eig.eigenvalues[k], v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[C64]) -> CMat {
        CMat::from_diagonal(&CVec::from_row_slice(d))
    }
    fn re(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn cholesky_trivial() {
        assert_eq!(cholesky(&CMat::identity(3, 3)).unwrap(), CMat::identity(3, 3));
        let l = cholesky(&diag(&[re(4.0), re(9.0)])).unwrap();
        assert!((l - diag(&[re(2.0), re(3.0)])).norm() < 1e-15);
        assert_eq!(
            cholesky(&diag(&[re(1.0), re(-1.0)])),
            Err(LinalgError::NotPositiveDefinite)
        );
    }

    #[test]
    fn solve_trivial() {
        let e1 = selector(2, 0..1);
        assert_eq!(solve_linear(&CMat::identity(2, 2), &e1).unwrap(), e1);
        let b = CMat::from_column_slice(2, 1, &[re(2.0), re(4.0)]);
        let x = solve_linear(&diag(&[re(2.0), re(4.0)]), &b).unwrap();
        assert!((x[0] - ONE).norm() < 1e-15 && (x[1] - ONE).norm() < 1e-15);
        let sing = CMat::from_row_slice(2, 2, &[ONE, ONE, ONE, ONE]);
        assert_eq!(solve_linear(&sing, &e1), Err(LinalgError::SingularMatrix));
    }

    #[test]
    fn power_trivial() {
        let exact = PowerIteration { iters: 30, tol: 0.0 };
        let p = gevd_top_with(&diag(&[re(3.0), ONE]), &CMat::identity(2, 2), &exact, None).unwrap();
        assert!((p.value - 3.0).abs() < 1e-12);
        assert!((p.vector.clone() - unit_vector(2, 0)).norm() < 1e-9);
        let long = PowerIteration { iters: 60, tol: 0.0 };
        let p = gevd_top_with(&diag(&[re(2.0), re(2.0)]), &diag(&[ONE, re(2.0)]), &long, None).unwrap();
        assert!((p.value - 2.0).abs() < 1e-12);
        assert!((p.vector - unit_vector(2, 0)).norm() < 1e-9);
    }

    #[test]
    fn full_trivial() {
        let pairs = gevd_full(&diag(&[ONE, re(5.0)]), &CMat::identity(2, 2)).unwrap();
        assert!((pairs[0].value - 5.0).abs() < 1e-12 && (pairs[1].value - 1.0).abs() < 1e-12);
        assert!((pairs[0].vector.clone() - unit_vector(2, 1)).norm() < 1e-12);
        assert!((pairs[1].vector.clone() - unit_vector(2, 0)).norm() < 1e-12);
        let b = CMat::from_row_slice(2, 2, &[re(2.0), C64::new(0.5, 0.5), C64::new(0.5, -0.5), re(3.0)]);
        for p in gevd_full(&b, &b).unwrap() {
            assert!((p.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inv_sqrt_trivial() {
        assert!((inv_sqrt(&CMat::identity(3, 3)).unwrap() - CMat::identity(3, 3)).norm() < 1e-14);
        let r = inv_sqrt(&diag(&[re(4.0), re(16.0)])).unwrap();
        assert!((r - diag(&[re(0.5), re(0.25)])).norm() < 1e-14);
    }

    #[test]
    fn log_det_trivial() {
        assert_eq!(log_abs_det(&CMat::identity(4, 4)), 0.0);
        let d = log_abs_det(&diag(&[re(2.0), C64::new(0.0, 2.0)]));
        assert!((d - 4f64.ln()).abs() < 1e-15);
        assert_eq!(log_abs_det(&CMat::zeros(2, 2)), f64::NEG_INFINITY);
    }

    #[test]
    fn phase_normalize_idempotent() {
        let mut v = CVec::from_row_slice(&[C64::new(0.1, 0.2), C64::new(-0.3, 0.9)]);
        phase_normalize(&mut v);
        assert!(v[1].im == 0.0 && v[1].re > 0.0);
        let before = v.clone();
        phase_normalize(&mut v);
        assert_eq!(v, before);
    }
}
