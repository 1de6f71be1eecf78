//! Per-frequency block updates. Every function works on one W(f) and the
//! covariances of the same bin.

use crate::linalg::{
    gevd_full, gevd_top_with, inv_sqrt, selector, solve_linear, solve_vec, unit_vector, CMat, CVec,
    CholeskyFactor, LinalgError, PowerIteration, C64,
};

type LResult<T> = std::result::Result<T, LinalgError>;

/// How the top generalized eigenpair is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EigenSolver {
    Power(PowerIteration),
    Exact,
}

impl Default for EigenSolver {
    fn default() -> Self {
        EigenSolver::Power(PowerIteration { iters: 30, tol: 0.0 })
    }
}

fn top_vector(a: &CMat, b: &CMat, solver: EigenSolver, start: Option<&CVec>) -> LResult<CVec> {
    match solver {
        EigenSolver::Power(opts) => Ok(gevd_top_with(a, b, &opts, start)?.vector),
        EigenSolver::Exact => Ok(gevd_full(a, b)?.swap_remove(0).vector),
    }
}

/// u · (uᴴVu)^{-1/2}.
pub fn scale_to_unit(u: &CVec, v: &CMat) -> LResult<CVec> {
    let q = u.dotc(&(v * u)).re;
    if !(q > 0.0) || !q.is_finite() {
        return Err(LinalgError::SingularMatrix);
    }
    Ok(u / C64::from(q.sqrt()))
}

/// IP1 step: u = (WᴴV_i)⁻¹e_i, w_i = u (uᴴV_iu)^{-1/2}.
pub fn ip1_source_update(w: &CMat, v_i: &CMat, i: usize) -> LResult<CVec> {
    let m = w.nrows();
    let u = solve_vec(&(w.adjoint() * v_i), &unit_vector(m, i))?;
    scale_to_unit(&u, v_i)
}

/// Orthogonal-constraint noise block `[(W_sᴴV_zE_s)⁻¹(W_sᴴV_zE_z); −I]`.
pub fn oc_noise_update(w: &CMat, v_z: &CMat, k: usize) -> LResult<CMat> {
    let m = w.nrows();
    let c = w.columns(0, k).adjoint() * v_z;
    let upper = solve_linear(&c.columns(0, k).into_owned(), &c.columns(k, m - k).into_owned())?;
    let mut wz = CMat::zeros(m, m - k);
    wz.rows_mut(0, k).copy_from(&upper);
    for j in 0..m - k {
        wz[(k + j, j)] = C64::new(-1.0, 0.0);
    }
    Ok(wz)
}

/// Right-multiplies W_z so that W_zᴴV_zW_z = I.
pub fn normalize_noise_block(wz: &CMat, v_z: &CMat) -> LResult<CMat> {
    let g = wz.adjoint() * v_z * wz;
    Ok(wz * inv_sqrt(&g)?)
}

/// K = 1: w₁ from the top pair of (V_z, V₁). `start` warm-starts the power method.
pub fn ip2_k1_update(v_1: &CMat, v_z: &CMat, solver: EigenSolver, start: Option<&CVec>) -> LResult<CVec> {
    let u = top_vector(v_z, v_1, solver, start)?;
    scale_to_unit(&u, v_1)
}

/// K = 1 with the full decomposition: w₁ and W_z = U_z (U_zᴴV_zU_z)^{-1/2}.
pub fn ip2_k1_full_update(v_1: &CMat, v_z: &CMat) -> LResult<(CVec, CMat)> {
    let pairs = gevd_full(v_z, v_1)?;
    let m = v_1.nrows();
    let w1 = scale_to_unit(&pairs[0].vector, v_1)?;
    let mut uz = CMat::zeros(m, m - 1);
    for (j, p) in pairs.iter().skip(1).enumerate() {
        uz.set_column(j, &p.vector);
    }
    let wz = &uz * inv_sqrt(&(uz.adjoint() * v_z * &uz))?;
    Ok((w1, wz))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairUpdate {
    pub w_i: CVec,
    /// Present only on the full-decomposition path.
    pub noise: Option<CMat>,
}

/// Joint update of (w_i, W_z) for K ≥ 2.
///
/// With `include_noise_block` every generalized eigenpair is computed and the
/// noise block is returned too; otherwise only the top pair is needed.
pub fn ip2_pair_update(
    w: &CMat,
    v_i: &CMat,
    v_z: &CMat,
    i: usize,
    k: usize,
    include_noise_block: bool,
    solver: EigenSolver,
) -> LResult<PairUpdate> {
    let m = w.nrows();
    let mut rhs = CMat::zeros(m, m - k + 1);
    rhs[(i, 0)] = C64::new(1.0, 0.0);
    rhs.columns_mut(1, m - k).copy_from(&selector(m, k..m));
    let wh = w.adjoint();
    let p_i = solve_linear(&(&wh * v_i), &rhs)?;
    let p_z = solve_linear(&(&wh * v_z), &rhs)?;
    let g_i = p_i.adjoint() * v_i * &p_i;
    let g_z = p_z.adjoint() * v_z * &p_z;

    if include_noise_block {
        let pairs = gevd_full(&g_i, &g_z)?;
        let w_i = &p_i * scale_to_unit(&pairs[0].vector, &g_i)?;
        let mut bz = CMat::zeros(m - k + 1, m - k);
        for (j, p) in pairs.iter().skip(1).enumerate() {
            bz.set_column(j, &p.vector);
        }
        let wz = &p_z * &bz * inv_sqrt(&(bz.adjoint() * &g_z * &bz))?;
        return Ok(PairUpdate { w_i, noise: Some(wz) });
    }
    // the current w_i projected onto span(P_i) is G_i⁻¹e₁, since P_iᴴV_iw_i = e₁
    let start = solve_vec(&g_i, &unit_vector(m - k + 1, 0))?;
    let b = top_vector(&g_i, &g_z, solver, Some(&start))?;
    Ok(PairUpdate { w_i: &p_i * scale_to_unit(&b, &g_i)?, noise: None })
}

/// LCMV filter V_i⁻¹A₁(A₁ᴴV_i⁻¹A₁)⁻¹e_i.
pub fn lcmv_update(v_i: &CMat, a1: &CMat, i: usize) -> LResult<CVec> {
    if a1.nrows() != v_i.nrows() || i >= a1.ncols() {
        return Err(LinalgError::DimensionMismatch);
    }
    let chol = CholeskyFactor::new(v_i)?;
    let mut y = a1.clone();
    chol.solve_mut(&mut y);
    let c = a1.adjoint() * &y;
    let z = solve_vec(&c, &unit_vector(a1.ncols(), i))?;
    Ok(y * z)
}

/// max over source rows of ‖WᴴV_iw_i − e_i‖ and ‖WᴴV_zW_z − E_z‖_F.
/// Columns past `v_sources.len()` form the noise block.
pub fn stationarity_residual(w: &CMat, v_sources: &[&CMat], v_z: &CMat) -> f64 {
    let m = w.nrows();
    let nsg = v_sources.len();
    let wh = w.adjoint();
    let mut worst: f64 = 0.0;
    for (i, v) in v_sources.iter().enumerate() {
        let mut r = &wh * (*v * w.column(i));
        r[i] -= C64::new(1.0, 0.0);
        worst = worst.max(r.norm());
    }
    if nsg < m {
        let wz = w.columns(nsg, m - nsg);
        let r = &wh * v_z * wz - selector(m, nsg..m);
        worst = worst.max(r.norm());
    }
    worst
}
