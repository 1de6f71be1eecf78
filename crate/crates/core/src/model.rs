//! Generalized Gaussian source prior, auxiliary variables and the two objectives.

use crate::error::{Error, Result};
use crate::extract::covariance::CovarianceSet;
use crate::extract::demixing::{dot_h, DemixingSystem};
use crate::linalg::{log_abs_det, C64};
use crate::spectrogram::Spectrogram;

/// G(r) = (r/α)^β + 2F log α.
#[derive(Clone, Debug, PartialEq)]
pub struct GgdModel {
    pub beta: f64,
    pub alphas: Vec<f64>,
    pub num_freqs: usize,
}

impl GgdModel {
    pub fn new(beta: f64, alphas: Vec<f64>, num_freqs: usize) -> Result<Self> {
        if !(beta > 0.0 && beta < 2.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 2), got {beta}")));
        }
        if alphas.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidConfig("scales must be positive".into()));
        }
        Ok(Self { beta, alphas, num_freqs })
    }

    pub fn contrast(&self, i: usize, r: f64) -> f64 {
        let a = self.alphas[i];
        (r / a).powf(self.beta) + 2.0 * self.num_freqs as f64 * a.ln()
    }

    pub fn contrast_derivative(&self, i: usize, r: f64) -> f64 {
        let a = self.alphas[i];
        self.beta / a * (r / a).powf(self.beta - 1.0)
    }
}

/// s_i(f, t) for the first `num_sources` columns, stored source-major then frequency then frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSignals {
    num_sources: usize,
    num_freqs: usize,
    num_frames: usize,
    data: Vec<C64>,
}

impl SourceSignals {
    pub fn from_fn(
        num_sources: usize,
        num_freqs: usize,
        num_frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut data = Vec::with_capacity(num_sources * num_freqs * num_frames);
        for i in 0..num_sources {
            for fi in 0..num_freqs {
                for t in 0..num_frames {
                    data.push(f(i, fi, t));
                }
            }
        }
        Self { num_sources, num_freqs, num_frames, data }
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }
    pub fn num_freqs(&self) -> usize {
        self.num_freqs
    }
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn get(&self, i: usize, f: usize, t: usize) -> C64 {
        self.data[(i * self.num_freqs + f) * self.num_frames + t]
    }

    /// Multiplies every sample of source `i` by `c`.
    pub fn scale_source(&mut self, i: usize, c: f64) {
        let n = self.num_freqs * self.num_frames;
        for z in &mut self.data[i * n..(i + 1) * n] {
            *z *= c;
        }
    }

    pub fn track(&self, i: usize, f: usize) -> &[C64] {
        let o = (i * self.num_freqs + f) * self.num_frames;
        &self.data[o..o + self.num_frames]
    }
}

/// Auxiliary norms and MM weights of one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryState {
    pub r: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

/// s_i(f, t) = w_i(f)ᴴ x(f, t) for i < `count`.
pub fn source_signals(x: &Spectrogram, w: &DemixingSystem, count: usize) -> Result<SourceSignals> {
    let (nf, nt, m) = x.shape();
    if w.num_freqs() != nf || w.num_channels() != m || count > m {
        return Err(Error::Shape(format!(
            "spectrogram {:?} against demixing {}x{}x{}",
            x.shape(),
            w.num_freqs(),
            m,
            w.num_channels()
        )));
    }
    let mut data = vec![C64::new(0.0, 0.0); count * nf * nt];
    for f in 0..nf {
        let wf = w.matrix(f);
        for i in 0..count {
            let wi = wf.column(i);
            let out = &mut data[(i * nf + f) * nt..(i * nf + f + 1) * nt];
            for (t, o) in out.iter_mut().enumerate() {
                *o = dot_h(wi.as_slice(), x.frame(f, t));
            }
        }
    }
    Ok(SourceSignals { num_sources: count, num_freqs: nf, num_frames: nt, data })
}

/// r_i(t) = ‖s_i(·, t)‖, unfloored.
pub fn aux_norms(s: &SourceSignals) -> Vec<Vec<f64>> {
    (0..s.num_sources)
        .map(|i| {
            let mut r = vec![0.0; s.num_frames];
            for f in 0..s.num_freqs {
                for (acc, z) in r.iter_mut().zip(s.track(i, f)) {
                    *acc += z.norm_sqr();
                }
            }
            r.iter().map(|v| v.sqrt()).collect()
        })
        .collect()
}

/// Raises each norm to at least 1e-12 × its track maximum (and 1e-300).
pub fn floor_norms(r: &mut [Vec<f64>]) {
    for track in r {
        let max = track.iter().copied().fold(0.0, f64::max);
        let eps = (1e-12 * max).max(1e-300);
        for v in track.iter_mut() {
            *v = v.max(eps);
        }
    }
}

/// α_i = [(β/2F) mean_t r_i(t)^β]^{1/β}.
pub fn update_scales(model: &GgdModel, r: &[Vec<f64>]) -> Vec<f64> {
    let b = model.beta;
    r.iter()
        .map(|track| {
            let mean = track.iter().map(|v| v.powf(b)).sum::<f64>() / track.len() as f64;
            (b / (2.0 * model.num_freqs as f64) * mean).powf(1.0 / b)
        })
        .collect()
}

/// φ_i(t) = (β/2) / (α_i^β r_i(t)^{2−β}) before clipping.
pub fn raw_weights(model: &GgdModel, r: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let b = model.beta;
    r.iter()
        .zip(&model.alphas)
        .map(|(track, &a)| {
            let c = 0.5 * b / a.powf(b);
            track.iter().map(|&v| c * v.powf(b - 2.0)).collect()
        })
        .collect()
}

/// Raw weights clipped at `clip` times each track's minimum.
pub fn contrast_weights(model: &GgdModel, r: &[Vec<f64>], clip: f64) -> Vec<Vec<f64>> {
    let mut phi = raw_weights(model, r);
    for track in &mut phi {
        let min = track.iter().copied().fold(f64::INFINITY, f64::min);
        let cap = clip * min;
        for v in track.iter_mut() {
            *v = v.min(cap);
        }
    }
    phi
}

/// One full auxiliary step: norms, floor, scales, weights.
pub fn auxiliary_step(
    s: &SourceSignals,
    beta: f64,
    clip: f64,
) -> Result<(GgdModel, AuxiliaryState)> {
    let mut r = aux_norms(s);
    floor_norms(&mut r);
    let proto = GgdModel { beta, alphas: vec![1.0; r.len()], num_freqs: s.num_freqs };
    let model = GgdModel::new(beta, update_scales(&proto, &r), s.num_freqs)?;
    let phi = contrast_weights(&model, &r, clip);
    Ok((model, AuxiliaryState { r, phi }))
}

/// Σ_f [Σ_i w_iᴴV_iw_i + tr(W_zᴴV_zW_z) − 2 log|det W|].
///
/// The number of source covariances decides how many leading columns are
/// super-Gaussian; the remainder is scored against the noise covariance.
pub fn surrogate_value(w: &DemixingSystem, cov: &CovarianceSet) -> f64 {
    (0..w.num_freqs()).map(|f| surrogate_at(w.matrix(f), cov, f)).sum()
}

pub fn surrogate_at(wf: &crate::linalg::CMat, cov: &CovarianceSet, f: usize) -> f64 {
    let m = wf.nrows();
    let nsg = cov.source.len();
    let mut g = 0.0;
    for (i, vi) in cov.source.iter().enumerate() {
        let wi = wf.column(i);
        g += wi.dotc(&(vi[f].matrix() * wi)).re;
    }
    if nsg < m {
        let wz = wf.columns(nsg, m - nsg);
        g += (wz.adjoint() * cov.noise[f].matrix() * wz).trace().re;
    }
    g - 2.0 * log_abs_det(wf)
}

/// g₀ = (1/T) Σ_i Σ_t G(r_i(t)) + (1/T) Σ_f Σ_t ‖z(f,t)‖² − 2 Σ_f log|det W(f)|.
///
/// Columns beyond `model.alphas.len()` form the noise block.
pub fn nll_value(x: &Spectrogram, w: &DemixingSystem, model: &GgdModel) -> Result<f64> {
    let (nf, nt, m) = x.shape();
    let nsg = model.alphas.len();
    if nsg > m {
        return Err(Error::Shape("more scales than channels".into()));
    }
    let s = source_signals(x, w, m)?;
    let r = aux_norms(&s);
    let mut g = 0.0;
    for (i, track) in r.iter().enumerate().take(nsg) {
        g += track.iter().map(|&v| model.contrast(i, v)).sum::<f64>() / nt as f64;
    }
    for i in nsg..m {
        g += r[i].iter().map(|v| v * v).sum::<f64>() / nt as f64;
    }
    for f in 0..nf {
        g -= 2.0 * log_abs_det(w.matrix(f));
    }
    Ok(g)
}
