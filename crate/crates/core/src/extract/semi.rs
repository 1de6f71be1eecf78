//! Known steering vectors: LCMV for the first L sources, and a reduced blind
//! problem on the orthogonal complement for the rest.

use crate::error::{Error, Result};
use crate::linalg::{solve_linear, CMat, CVec, CholeskyFactor, LinalgError, C64};

use super::updates::{ip2_k1_update, ip2_pair_update, oc_noise_update, EigenSolver};

type LResult<T> = std::result::Result<T, LinalgError>;

/// Per-frequency A₁(f) ∈ C^{M×L} with unit-norm columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SteeringSet {
    per_freq: Vec<CMat>,
}

impl SteeringSet {
    pub fn new(per_freq: Vec<CMat>) -> Result<Self> {
        let Some(first) = per_freq.first() else {
            return Err(Error::Shape("empty steering set".into()));
        };
        let (m, l) = first.shape();
        if l == 0 || l > m {
            return Err(Error::Shape(format!("steering block {m}x{l}")));
        }
        for a in &per_freq {
            if a.shape() != (m, l) {
                return Err(Error::Shape("steering blocks differ in shape".into()));
            }
            for c in a.column_iter() {
                if (c.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidConfig("steering vectors must have unit norm".into()));
                }
            }
        }
        Ok(Self { per_freq })
    }

    pub fn known(&self) -> usize {
        self.per_freq[0].ncols()
    }
    pub fn num_channels(&self) -> usize {
        self.per_freq[0].nrows()
    }
    pub fn num_freqs(&self) -> usize {
        self.per_freq.len()
    }
    pub fn at(&self, f: usize) -> &CMat {
        &self.per_freq[f]
    }

    /// Keeps the first `l` steering vectors.
    pub fn truncate(&self, l: usize) -> Result<Self> {
        if l == 0 || l > self.known() {
            return Err(Error::InvalidConfig(format!("cannot keep {l} of {} steering vectors", self.known())));
        }
        Self::new(self.per_freq.iter().map(|a| a.columns(0, l).into_owned()).collect())
    }

    /// `[source][freq][channel] -> [re, im]`, the steering.json layout.
    pub fn to_nested(&self) -> Vec<Vec<Vec<[f64; 2]>>> {
        (0..self.known())
            .map(|l| {
                self.per_freq
                    .iter()
                    .map(|a| a.column(l).iter().map(|z| [z.re, z.im]).collect())
                    .collect()
            })
            .collect()
    }

    pub fn from_nested(nested: &[Vec<Vec<[f64; 2]>>]) -> Result<Self> {
        let l = nested.len();
        let nf = nested.first().map_or(0, Vec::len);
        if l == 0 || nf == 0 || nested.iter().any(|s| s.len() != nf) {
            return Err(Error::Shape("ragged steering data".into()));
        }
        let m = nested[0][0].len();
        let mut per_freq = Vec::with_capacity(nf);
        for f in 0..nf {
            let mut a = CMat::zeros(m, l);
            for (j, src) in nested.iter().enumerate() {
                if src[f].len() != m {
                    return Err(Error::Shape("ragged steering data".into()));
                }
                for (r, v) in src[f].iter().enumerate() {
                    a[(r, j)] = C64::new(v[0], v[1]);
                }
            }
            per_freq.push(a);
        }
        Self::new(per_freq)
    }
}

/// W₂′ = [A₁, E₂]^{−H} E₂, where E₂ picks the channels in `kept`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionBasis {
    pub basis: CMat,
    /// Channels spanning the complement; `L..M` unless a permutation was needed.
    pub kept: Vec<usize>,
}

/// A basis of the reduced problem plus the covariances mapped into it.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub basis: ReductionBasis,
    pub covariances: Vec<CMat>,
}

fn pivot_ratio(b: &CMat) -> f64 {
    let u = b.clone().lu().u();
    let d: Vec<f64> = (0..b.nrows()).map(|k| u[(k, k)].norm()).collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    if max > 0.0 {
        min / max
    } else {
        0.0
    }
}

fn stacked(a1: &CMat, kept: &[usize]) -> CMat {
    let (m, l) = a1.shape();
    let mut b = CMat::zeros(m, m);
    b.columns_mut(0, l).copy_from(a1);
    for (j, &row) in kept.iter().enumerate() {
        b[(row, l + j)] = C64::new(1.0, 0.0);
    }
    b
}

// Rows of A₁ picked by greedy elimination with row pivoting.
fn pivot_rows(a1: &CMat) -> Vec<usize> {
    let (m, l) = a1.shape();
    let mut work = a1.clone();
    let mut used = vec![false; m];
    let mut rows = Vec::with_capacity(l);
    for c in 0..l {
        let (best, _) = (0..m)
            .filter(|&r| !used[r])
            .map(|r| (r, work[(r, c)].norm()))
            .fold((usize::MAX, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        used[best] = true;
        rows.push(best);
        let piv = work[(best, c)];
        if piv.norm() == 0.0 {
            continue;
        }
        for r in 0..m {
            if !used[r] {
                let factor = work[(r, c)] / piv;
                for cc in c..l {
                    let v = work[(best, cc)];
                    work[(r, cc)] -= factor * v;
                }
            }
        }
    }
    (0..m).filter(|r| !rows.contains(r)).collect()
}

/// Builds W₂′ with W₂′ᴴA₁ = O.
pub fn reduction_basis(a1: &CMat) -> LResult<ReductionBasis> {
    let (m, l) = a1.shape();
    if l == 0 || l >= m {
        return Err(LinalgError::DimensionMismatch);
    }
    let mut kept: Vec<usize> = (l..m).collect();
    let mut b = stacked(a1, &kept);
    if pivot_ratio(&b) < 1e-8 {
        kept = pivot_rows(a1);
        b = stacked(a1, &kept);
    }
    let mut e2 = CMat::zeros(m, m - l);
    e2.view_mut((l, 0), (m - l, m - l)).fill_with_identity();
    let basis = solve_linear(&b.adjoint(), &e2)?;
    Ok(ReductionBasis { basis, kept })
}

/// V̄ = W₂′ᴴ V W₂′.
pub fn reduce(basis: &CMat, v: &CMat) -> CMat {
    let r = basis.adjoint() * v * basis;
    crate::linalg::hermitian_part(&r)
}

pub fn semi_reduction(a1: &CMat, covariances: &[&CMat]) -> LResult<ReducedSystem> {
    let basis = reduction_basis(a1)?;
    let covariances = covariances.iter().map(|v| reduce(&basis.basis, v)).collect();
    Ok(ReducedSystem { basis, covariances })
}

/// One blind update inside the reduced space.
///
/// `wbar` is the barred demixing matrix (M−L square) whose first `kbar`
/// columns are the unknown-steering sources; column `j` is replaced and the
/// full-space filter W₂′w̄_j returned.
pub fn semi_ive_update(
    basis: &CMat,
    wbar: &mut CMat,
    vbar_j: &CMat,
    vbar_z: &CMat,
    j: usize,
    kbar: usize,
    solver: EigenSolver,
) -> LResult<CVec> {
    let wj = if kbar == 1 {
        let start = wbar.column(0).into_owned();
        ip2_k1_update(vbar_j, vbar_z, solver, Some(&start))?
    } else {
        ip2_pair_update(wbar, vbar_j, vbar_z, j, kbar, false, solver)?.w_i
    };
    wbar.set_column(j, &wj);
    Ok(basis * wj)
}

/// W_z = W₂′ W̄_z with W̄_z from the barred orthogonal constraint, or −W₂′ when
/// every source has a known steering vector.
pub fn semi_noise_completion(basis: &CMat, wbar: &mut CMat, kbar: usize, vbar_z: &CMat) -> LResult<CMat> {
    let n = wbar.nrows();
    let wz_bar = if kbar == 0 {
        -CMat::identity(n, n)
    } else {
        oc_noise_update(wbar, vbar_z, kbar)?
    };
    wbar.columns_mut(kbar, n - kbar).copy_from(&wz_bar);
    Ok(basis * wz_bar)
}

/// log |det [W₁, W₂]|² from the constrained blocks alone, valid when
/// W₁ᴴA₁ = I and W₂ᴴA₁ = O: −log det(A₁ᴴA₁) + log det(W₂ᴴW₂).
pub fn constrained_log_det(a1: &CMat, w2: &CMat) -> LResult<f64> {
    let (m, l) = a1.shape();
    if w2.nrows() != m || w2.ncols() + l != m {
        return Err(LinalgError::DimensionMismatch);
    }
    let ga = CholeskyFactor::new(&(a1.adjoint() * a1))?;
    let gw = CholeskyFactor::new(&(w2.adjoint() * w2))?;
    Ok(gw.log_det() - ga.log_det())
}
