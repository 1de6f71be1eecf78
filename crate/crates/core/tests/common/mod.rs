//! Random instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use ivex_core::linalg::{CMat, CVec, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cgauss(rng: &mut ChaCha8Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) / 2f64.sqrt()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| cgauss(rng))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cgauss(rng))
}

/// MᴴM/n + I·shift, comfortably positive definite.
pub fn random_pd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> CMat {
    let b = random_matrix(rng, n, 2 * n);
    let mut v = &b * b.adjoint() / C64::from(2.0 * n as f64);
    for i in 0..n {
        v[(i, i)] += C64::new(shift, 0.0);
    }
    v
}

pub fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn diag(d: &[f64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|&v| re(v))))
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn rel_frob(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Determinant by Laplace expansion along the first row.
pub fn cofactor_det(a: &CMat) -> C64 {
    let n = a.nrows();
    if n == 1 {
        return a[(0, 0)];
    }
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let minor = CMat::from_fn(n - 1, n - 1, |r, c| a[(r + 1, if c < j { c } else { c + 1 })]);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        acc += a[(0, j)] * cofactor_det(&minor) * sign;
    }
    acc
}

/// Solves a x = b by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(a: &CMat, b: &CVec) -> CVec {
    let n = a.nrows();
    let mut m: Vec<Vec<C64>> = (0..n)
        .map(|r| (0..n).map(|c| a[(r, c)]).chain(std::iter::once(b[r])).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].norm().total_cmp(&m[y][col].norm())).unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        for c in col..=n {
            m[col][c] /= p;
        }
        for r in 0..n {
            if r != col {
                let factor = m[r][col];
                for c in col..=n {
                    let v = m[col][c];
                    m[r][c] -= factor * v;
                }
            }
        }
    }
    CVec::from_fn(n, |r, _| m[r][n])
}

/// Inverse column by column through `gauss_solve`.
pub fn gauss_inverse(a: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        let mut e = CVec::zeros(n);
        e[j] = re(1.0);
        out.set_column(j, &gauss_solve(a, &e));
    }
    out
}

/// |⟨u, v⟩| / (‖u‖‖v‖).
pub fn cosine(u: &CVec, v: &CVec) -> f64 {
    u.dotc(v).norm() / (u.norm() * v.norm())
}
