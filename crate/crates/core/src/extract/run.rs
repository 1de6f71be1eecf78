//! The outer MM loop shared by every variant.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, HermitianPd, LinalgError, PowerIteration};
use crate::model::{
    aux_norms, auxiliary_step, floor_norms, nll_value, source_signals, surrogate_at, update_scales, GgdModel, SourceSignals,
};
use crate::spectrogram::Spectrogram;
use crate::trajectory::{TrajectoryLog, TrajectoryRecord};

use super::covariance::{covariances_at, CovarianceSet};
use super::demixing::{set_column, DemixingSystem};
use super::project::projection_back;
use super::semi::{reduce, reduction_basis, semi_ive_update, semi_noise_completion, SteeringSet};
use super::updates::{
    ip1_source_update, ip2_k1_full_update, ip2_k1_update, ip2_pair_update, lcmv_update,
    normalize_noise_block, oc_noise_update, stationarity_residual, EigenSolver,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    IvaIp1,
    IveIp1,
    IveIp2Old,
    IveIp2New,
    SemiIve,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::IvaIp1, Variant::IveIp1, Variant::IveIp2Old, Variant::IveIp2New, Variant::SemiIve];

    pub fn name(self) -> &'static str {
        match self {
            Variant::IvaIp1 => "iva-ip1",
            Variant::IveIp1 => "ive-ip1",
            Variant::IveIp2Old => "ive-ip2-old",
            Variant::IveIp2New => "ive-ip2-new",
            Variant::SemiIve => "semi-ive",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub variant: Variant,
    pub num_sources: usize,
    pub iterations: usize,
    pub power_iters: usize,
    /// Early exit of the power method; zero runs the full count.
    pub power_tol: f64,
    /// Use the full generalized eigendecomposition wherever a top pair is needed.
    pub exact_eigen: bool,
    pub trace_loading: f64,
    pub phi_clip: f64,
    pub beta: f64,
    /// Stop once the relative nll decrease stays below this for 3 iterations.
    pub early_stop: Option<f64>,
    pub threads: usize,
    /// Record the surrogate after every block update and the OC residual.
    pub trace_inner: bool,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            variant: Variant::IveIp2New,
            num_sources: 1,
            iterations: 50,
            power_iters: 30,
            power_tol: 0.0,
            exact_eigen: false,
            trace_loading: 1e-3,
            phi_clip: 1e5,
            beta: 0.1,
            early_stop: None,
            threads: 1,
            trace_inner: false,
        }
    }
}

impl ExtractionConfig {
    pub fn new(variant: Variant, num_sources: usize, iterations: usize) -> Self {
        Self { variant, num_sources, iterations, ..Default::default() }
    }

    pub fn validate(&self, num_channels: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_sources == 0 || self.num_sources >= num_channels {
            return bad(format!("K < M required (K = {}, M = {num_channels})", self.num_sources));
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if self.power_iters == 0 {
            return bad("power iterations must be at least 1".into());
        }
        if !(self.trace_loading >= 0.0) {
            return bad("trace loading must be nonnegative".into());
        }
        if !(self.phi_clip > 1.0) {
            return bad("weight clip must exceed 1".into());
        }
        if !(self.beta > 0.0 && self.beta < 2.0) {
            return bad(format!("beta must lie in (0, 2), got {}", self.beta));
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn solver(&self) -> EigenSolver {
        if self.exact_eigen {
            EigenSolver::Exact
        } else {
            EigenSolver::Power(PowerIteration { iters: self.power_iters, tol: self.power_tol })
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtractionOutput {
    /// Filters with the noise block completed and normalized.
    pub demixing: DemixingSystem,
    /// Spatial images; all M outputs for iva-ip1, otherwise K.
    pub images: Vec<Spectrogram>,
    pub trajectory: TrajectoryLog,
    pub model: GgdModel,
}

/// What an observer sees at each iteration boundary.
pub struct IterationView<'a> {
    pub record: &'a TrajectoryRecord,
    /// Normalized, completed filters (what projection back uses).
    pub demixing: &'a DemixingSystem,
    /// The algorithm's own state, e.g. the unnormalized OC block of ive-ip1.
    pub state: &'a DemixingSystem,
    pub covariances: &'a CovarianceSet,
}

pub(crate) struct SemiBin {
    basis: CMat,
    wbar: CMat,
    vbar_z: CMat,
    /// Sources without a known steering vector.
    kbar: usize,
}

struct Bin {
    w: CMat,
    semi: Option<SemiBin>,
}

enum Exec {
    Serial,
    Pool(rayon::ThreadPool),
}

impl Exec {
    fn new(threads: usize) -> Result<Self> {
        if threads <= 1 {
            return Ok(Exec::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map(Exec::Pool)
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
    }

    fn map<R: Send>(&self, n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
        match self {
            Exec::Serial => (0..n).map(f).collect(),
            Exec::Pool(p) => p.install(|| (0..n).into_par_iter().map(f).collect()),
        }
    }

    fn map_mut<T: Send, R: Send>(&self, items: &mut [T], f: impl Fn(usize, &mut T) -> R + Sync + Send) -> Vec<R> {
        match self {
            Exec::Serial => items.iter_mut().enumerate().map(|(i, t)| f(i, t)).collect(),
            Exec::Pool(p) => p.install(|| items.par_iter_mut().enumerate().map(|(i, t)| f(i, t)).collect()),
        }
    }
}

struct Engine<'a> {
    x: &'a Spectrogram,
    cfg: &'a ExtractionConfig,
    steering: Option<&'a SteeringSet>,
    k: usize,
    m: usize,
    /// Columns with a super-Gaussian prior: M for iva-ip1, K otherwise.
    nsg: usize,
    vz: Vec<HermitianPd>,
    bins: Vec<Bin>,
    exec: Exec,
}

/// Runs the configured variant for `cfg.iterations` outer iterations.
pub fn run_extraction(
    x: &Spectrogram,
    cfg: &ExtractionConfig,
    steering: Option<&SteeringSet>,
) -> Result<ExtractionOutput> {
    run_extraction_with(x, cfg, steering, |_| Ok(()))
}

/// Same as [`run_extraction`], calling `observer` after every iteration.
pub fn run_extraction_with(
    x: &Spectrogram,
    cfg: &ExtractionConfig,
    steering: Option<&SteeringSet>,
    mut observer: impl FnMut(&IterationView) -> Result<()>,
) -> Result<ExtractionOutput> {
    let mut eng = Engine::new(x, cfg, steering)?;
    let mut log = TrajectoryLog::default();
    let mut elapsed = 0.0;
    let mut model = None;
    let mut stall = 0;

    for it in 1..=cfg.iterations {
        let t0 = Instant::now();
        let state = eng.state()?;
        let mut s = source_signals(x, &state, eng.nsg)?;
        for (i, c) in eng.rescale(&s).into_iter().enumerate() {
            s.scale_source(i, c);
        }
        let (_, aux) = auxiliary_step(&s, cfg.beta, cfg.phi_clip)?;
        let cov = eng.covariances(&aux.phi)?;
        let inner = eng.update(&cov)?;
        elapsed += t0.elapsed().as_secs_f64();

        let state = eng.state()?;
        let fin = eng.finalized()?;
        let (nll, fitted) = objective(x, &fin, cfg.beta, eng.nsg)?;
        let surrogate = (0..x.num_freqs()).map(|f| surrogate_at(fin.matrix(f), &cov, f)).sum();
        let stationarity = eng.stationarity(&fin, &cov)?;
        let (inner, oc_residual) = match inner {
            Some((steps, oc)) => (steps, oc),
            None => (Vec::new(), None),
        };
        let rec = TrajectoryRecord {
            iteration: it,
            surrogate,
            nll,
            wall_seconds: elapsed,
            stationarity,
            inner,
            oc_residual,
        };
        observer(&IterationView { record: &rec, demixing: &fin, state: &state, covariances: &cov })?;

        if let (Some(tol), Some(prev)) = (cfg.early_stop, log.records.last()) {
            let drop = (prev.nll - nll) / nll.abs().max(1e-300);
            stall = if drop < tol { stall + 1 } else { 0 };
        }
        log.push(rec);
        model = Some(fitted);
        if stall >= 3 {
            log.stopped_early = true;
            break;
        }
    }

    let demixing = eng.finalized()?;
    let images = projection_back(x, &demixing, eng.nsg.max(eng.k))?;
    Ok(ExtractionOutput {
        demixing,
        images,
        trajectory: log,
        model: model.expect("at least one iteration"),
    })
}

/// nll at `w` with the scales refit to its own auxiliary norms.
pub fn objective(x: &Spectrogram, w: &DemixingSystem, beta: f64, nsg: usize) -> Result<(f64, GgdModel)> {
    let s = source_signals(x, w, nsg)?;
    let mut r = aux_norms(&s);
    floor_norms(&mut r);
    let proto = GgdModel { beta, alphas: vec![1.0; nsg], num_freqs: x.num_freqs() };
    let model = GgdModel::new(beta, update_scales(&proto, &r), x.num_freqs())?;
    Ok((nll_value(x, w, &model)?, model))
}

type InnerTrace = Option<(Vec<f64>, Option<f64>)>;

impl<'a> Engine<'a> {
    fn new(x: &'a Spectrogram, cfg: &'a ExtractionConfig, steering: Option<&'a SteeringSet>) -> Result<Self> {
        let (nf, _, m) = x.shape();
        cfg.validate(m)?;
        let k = cfg.num_sources;
        let steering = match (cfg.variant, steering) {
            (Variant::SemiIve, None) => {
                return Err(Error::InvalidConfig("semi-ive needs steering vectors".into()))
            }
            (Variant::SemiIve, Some(a)) => {
                if a.known() > k || a.num_channels() != m || a.num_freqs() != nf {
                    return Err(Error::InvalidConfig(format!(
                        "steering set has L = {} over {} channels and {} bins; need 1 <= L <= K = {k}, M = {m}, F = {nf}",
                        a.known(),
                        a.num_channels(),
                        a.num_freqs()
                    )));
                }
                Some(a)
            }
            _ => None,
        };
        let nsg = if cfg.variant == Variant::IvaIp1 { m } else { k };
        let exec = Exec::new(cfg.threads)?;
        let vz = exec
            .map(nf, |f| Ok(covariances_at(x, f, &[None], cfg.trace_loading)?.remove(0)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let mut bins = Vec::with_capacity(nf);
        for f in 0..nf {
            let mut w = -CMat::identity(m, m);
            let mut semi = None;
            match cfg.variant {
                Variant::IveIp1 => {
                    let wz = oc_noise_update(&w, &vz[f], k).map_err(Error::at(f))?;
                    w.columns_mut(k, m - k).copy_from(&wz);
                }
                Variant::SemiIve => {
                    let a1 = steering.expect("checked above").at(f);
                    let l = a1.ncols();
                    let basis = reduction_basis(a1).map_err(Error::at(f))?.basis;
                    let vbar_z = reduce(&basis, &vz[f]);
                    let mut wbar = -CMat::identity(m - l, m - l);
                    let wz = semi_noise_completion(&basis, &mut wbar, k - l, &vbar_z).map_err(Error::at(f))?;
                    w.columns_mut(k, m - k).copy_from(&wz);
                    semi = Some(SemiBin { basis, wbar, vbar_z, kbar: k - l });
                }
                _ => {}
            }
            bins.push(Bin { w, semi });
        }
        Ok(Self { x, cfg, steering, k, m, nsg, vz, bins, exec })
    }

    fn state(&self) -> Result<DemixingSystem> {
        DemixingSystem::new(self.k, self.bins.iter().map(|b| b.w.clone()).collect())
    }

    /// Brings every blind source to unit mean power over (f, t). The objective
    /// is blind to a per-source scale, but trace loading shrinks it a little
    /// every iteration until W turns numerically singular. Returns the factors.
    fn rescale(&mut self, s: &SourceSignals) -> Vec<f64> {
        let n = (s.num_freqs() * s.num_frames()) as f64;
        let power: Vec<f64> = aux_norms(s).iter().map(|r| r.iter().map(|v| v * v).sum::<f64>() / n).collect();
        let fixed = self.steering.map_or(0, |a| a.known());
        let c: Vec<f64> = power
            .iter()
            .enumerate()
            .map(|(i, &p)| if i < fixed || !(p > 0.0) || !p.is_finite() { 1.0 } else { 1.0 / p.sqrt() })
            .collect();
        for bin in &mut self.bins {
            for (i, &ci) in c.iter().enumerate() {
                bin.w.column_mut(i).scale_mut(ci);
            }
            if let Some(sb) = &mut bin.semi {
                for j in 0..sb.kbar {
                    sb.wbar.column_mut(j).scale_mut(c[fixed + j]);
                }
            }
        }
        c
    }

    fn covariances(&self, phi: &[Vec<f64>]) -> Result<CovarianceSet> {
        let tracks: Vec<Option<&[f64]>> = phi.iter().map(|p| Some(p.as_slice())).collect();
        let per_bin = self
            .exec
            .map(self.x.num_freqs(), |f| covariances_at(self.x, f, &tracks, self.cfg.trace_loading))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut source: Vec<Vec<HermitianPd>> = (0..phi.len()).map(|_| Vec::with_capacity(per_bin.len())).collect();
        for bin in per_bin {
            for (i, v) in bin.into_iter().enumerate() {
                source[i].push(v);
            }
        }
        Ok(CovarianceSet { source, noise: self.vz.clone() })
    }

    fn update(&mut self, cov: &CovarianceSet) -> Result<InnerTrace> {
        let (cfg, steering, k, m) = (self.cfg, self.steering, self.k, self.m);
        let results = self.exec.map_mut(&mut self.bins, |f, bin| {
            update_bin(cfg, steering, k, m, f, bin, cov).map_err(Error::at(f))
        });
        let mut steps: Option<Vec<f64>> = None;
        let mut oc: Option<f64> = None;
        for r in results {
            if let Some((s, o)) = r? {
                let acc = steps.get_or_insert_with(|| vec![0.0; s.len()]);
                for (a, v) in acc.iter_mut().zip(&s) {
                    *a += v;
                }
                if let Some(o) = o {
                    oc = Some(oc.map_or(o, |p: f64| p.max(o)));
                }
            }
        }
        Ok(steps.map(|s| (s, oc)))
    }

    /// Filters with the noise block completed (where the variant leaves it
    /// stale) and normalized to W_zᴴV_zW_z = I.
    fn finalized(&self) -> Result<DemixingSystem> {
        let mats = self
            .exec
            .map(self.bins.len(), |f| finalize_bin(self.cfg.variant, self.k, &self.bins[f], &self.vz[f]).map_err(Error::at(f)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        DemixingSystem::new(self.k, mats)
    }

    fn stationarity(&self, fin: &DemixingSystem, cov: &CovarianceSet) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for f in 0..fin.num_freqs() {
            let r = match &self.bins[f].semi {
                None => stationarity_residual(fin.matrix(f), &cov.source_at(f), cov.noise[f].matrix()),
                Some(sb) => {
                    // blind part of the semiblind problem, in reduced coordinates
                    let kbar = sb.kbar;
                    let l = self.k - kbar;
                    let mut wbar = sb.wbar.clone();
                    let n = wbar.nrows();
                    semi_noise_completion(&sb.basis, &mut wbar, kbar, &sb.vbar_z).map_err(Error::at(f))?;
                    let wzn = normalize_noise_block(&wbar.columns(kbar, n - kbar).into_owned(), &sb.vbar_z)
                        .map_err(Error::at(f))?;
                    wbar.columns_mut(kbar, n - kbar).copy_from(&wzn);
                    let vbars: Vec<CMat> =
                        (l..self.k).map(|i| reduce(&sb.basis, cov.source[i][f].matrix())).collect();
                    let refs: Vec<&CMat> = vbars.iter().collect();
                    stationarity_residual(&wbar, &refs, &sb.vbar_z)
                }
            };
            worst = worst.max(r);
        }
        Ok(worst)
    }
}

fn finalize_bin(variant: Variant, k: usize, bin: &Bin, vz: &HermitianPd) -> std::result::Result<CMat, LinalgError> {
    let m = bin.w.nrows();
    let mut w = bin.w.clone();
    let wz = match variant {
        Variant::IvaIp1 => return Ok(w),
        Variant::IveIp1 | Variant::IveIp2Old => w.columns(k, m - k).into_owned(),
        Variant::IveIp2New => oc_noise_update(&w, vz, k)?,
        Variant::SemiIve => {
            let sb = bin.semi.as_ref().expect("semi state");
            let mut wbar = sb.wbar.clone();
            semi_noise_completion(&sb.basis, &mut wbar, sb.kbar, &sb.vbar_z)?
        }
    };
    w.columns_mut(k, m - k).copy_from(&normalize_noise_block(&wz, vz)?);
    Ok(w)
}

// Eigenvector phases are arbitrary; keep w_i on the side of its predecessor
// so that equivalent update paths yield the same filters.
fn align_phase(mut w_new: CVec, w: &CMat, i: usize) -> CVec {
    let d = w.column(i).dotc(&w_new);
    if d.norm() > 0.0 {
        w_new *= d.conj() / d.norm();
    }
    w_new
}

fn update_bin(
    cfg: &ExtractionConfig,
    steering: Option<&SteeringSet>,
    k: usize,
    m: usize,
    f: usize,
    bin: &mut Bin,
    cov: &CovarianceSet,
) -> std::result::Result<Option<(Vec<f64>, Option<f64>)>, LinalgError> {
    let vz = cov.noise[f].matrix();
    let vs = cov.source_at(f);
    let solver = cfg.solver();
    let trace = cfg.trace_inner;
    let mut steps = Vec::new();
    let mut oc_worst: Option<f64> = None;
    let nsg = vs.len();

    // surrogate of the current state, noise block completed where stale and normalized
    let score = |w: &CMat| -> std::result::Result<f64, LinalgError> {
        let mut w = w.clone();
        if nsg < m {
            let wz = match cfg.variant {
                Variant::IveIp2New => oc_noise_update(&w, vz, k)?,
                _ => w.columns(nsg, m - nsg).into_owned(),
            };
            let wz = normalize_noise_block(&wz, vz)?;
            w.columns_mut(nsg, m - nsg).copy_from(&wz);
        }
        Ok(surrogate_at(&w, cov, f))
    };
    let w = &mut bin.w;
    if trace && cfg.variant != Variant::SemiIve {
        steps.push(score(w)?);
    }

    match cfg.variant {
        Variant::IvaIp1 => {
            for i in 0..m {
                let wi = ip1_source_update(w, vs[i], i)?;
                set_column(w, i, &wi);
                if trace {
                    steps.push(score(w)?);
                }
            }
        }
        Variant::IveIp1 => {
            for i in 0..k {
                let wi = ip1_source_update(w, vs[i], i)?;
                set_column(w, i, &wi);
                if trace {
                    steps.push(score(w)?);
                }
                let wz = oc_noise_update(w, vz, k)?;
                w.columns_mut(k, m - k).copy_from(&wz);
                if trace {
                    steps.push(score(w)?);
                    let r = (w.columns(0, k).adjoint() * vz * &wz).norm();
                    oc_worst = Some(oc_worst.map_or(r, |p: f64| p.max(r)));
                }
            }
        }
        Variant::IveIp2Old => {
            if k == 1 {
                let (w1, wz) = ip2_k1_full_update(vs[0], vz)?;
                set_column(w, 0, &align_phase(w1, w, 0));
                w.columns_mut(1, m - 1).copy_from(&wz);
                if trace {
                    steps.push(score(w)?);
                }
            } else {
                for i in 0..k {
                    let up = ip2_pair_update(w, vs[i], vz, i, k, true, solver)?;
                    set_column(w, i, &align_phase(up.w_i, w, i));
                    w.columns_mut(k, m - k).copy_from(&up.noise.expect("full path"));
                    if trace {
                        steps.push(score(w)?);
                    }
                }
            }
        }
        Variant::IveIp2New => {
            if k == 1 {
                let start = w.column(0).into_owned();
                let w1 = ip2_k1_update(vs[0], vz, solver, Some(&start))?;
                set_column(w, 0, &align_phase(w1, w, 0));
                if trace {
                    steps.push(score(w)?);
                }
            } else {
                for i in 0..k {
                    let up = ip2_pair_update(w, vs[i], vz, i, k, false, solver)?;
                    set_column(w, i, &align_phase(up.w_i, w, i));
                    if trace {
                        steps.push(score(w)?);
                    }
                }
                // only span(W_z) enters the next updates; keeping it on the
                // constraint stops W drifting towards singular
                let wz = oc_noise_update(w, vz, k)?;
                w.columns_mut(k, m - k).copy_from(&wz);
            }
        }
        Variant::SemiIve => {
            let a1 = steering.expect("semi steering").at(f);
            let l = a1.ncols();
            for i in 0..l {
                let wi = lcmv_update(vs[i], a1, i)?;
                set_column(w, i, &wi);
            }
            let sb = bin.semi.as_mut().expect("semi state");
            let kbar = k - l;
            let vbars: Vec<CMat> = (l..k).map(|i| reduce(&sb.basis, vs[i])).collect();
            for j in 0..kbar {
                let wi = semi_ive_update(&sb.basis, &mut sb.wbar, &vbars[j], &sb.vbar_z, j, kbar, solver)?;
                set_column(w, l + j, &wi);
            }
        }
    }
    Ok(trace.then_some((steps, oc_worst)))
}
