//! Synthetic scenarios: super-Gaussian sources, Gaussian noise, random mixing.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::SteeringSet;
use crate::linalg::{top_eigenvector, CMat, CVec, C64};
use crate::spectrogram::Spectrogram;
use crate::stft::{analyze, synthesize, StftConfig, Waveform};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingMode {
    /// Per-frequency steering applied to the source spectrograms.
    Inst,
    /// Short random FIR filters in the time domain.
    Fir,
    /// Source i on channel i, noise j on channel K + j.
    Identity,
}

impl fmt::Display for MixingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixingMode::Inst => "inst",
            MixingMode::Fir => "fir",
            MixingMode::Identity => "identity",
        })
    }
}

impl FromStr for MixingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inst" => Ok(MixingMode::Inst),
            "fir" => Ok(MixingMode::Fir),
            "identity" => Ok(MixingMode::Identity),
            _ => Err(Error::InvalidConfig(format!("unknown mixing mode '{s}'"))),
        }
    }
}

pub const FIR_TAPS: usize = 8;
const MAX_DRAWS: usize = 100;
const MAX_COND: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub num_sources: usize,
    pub num_channels: usize,
    pub num_noises: usize,
    pub snr_db: f64,
    pub num_samples: usize,
    pub sample_rate: u32,
    pub mixing: MixingMode,
    pub seed: u64,
    pub stft: StftConfig,
}

impl ScenarioSpec {
    pub fn new(k: usize, m: usize, j: usize, snr_db: f64, num_samples: usize, seed: u64) -> Self {
        Self {
            num_sources: k,
            num_channels: m,
            num_noises: j,
            snr_db,
            num_samples,
            sample_rate: 16000,
            mixing: MixingMode::Inst,
            seed,
            stft: StftConfig::default(),
        }
    }

    pub fn with_mixing(mut self, mixing: MixingMode) -> Self {
        self.mixing = mixing;
        self
    }

    pub fn with_stft(mut self, stft: StftConfig) -> Self {
        self.stft = stft;
        self
    }

    /// Samples giving exactly `frames` STFT frames.
    pub fn samples_for_frames(stft: &StftConfig, frames: usize) -> usize {
        frames * stft.hop - (stft.frame_len - stft.hop)
    }

    fn validate(&self) -> Result<()> {
        let (k, m, j) = (self.num_sources, self.num_channels, self.num_noises);
        if k == 0 || k >= m {
            return Err(Error::InvalidConfig(format!("K < M required (K = {k}, M = {m})")));
        }
        if j == 0 && self.mixing != MixingMode::Identity {
            return Err(Error::InvalidConfig("at least one noise source is required".into()));
        }
        if self.mixing == MixingMode::Identity && k + j > m {
            return Err(Error::InvalidConfig("identity mixing needs K + J <= M".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidConfig("SNR must be finite".into()));
        }
        self.stft.validate()?;
        if self.num_samples < self.stft.frame_len {
            return Err(Error::TooShort { len: self.num_samples, frame_len: self.stft.frame_len });
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub mixture: Spectrogram,
    /// Oracle spatial images of the K sources.
    pub images: Vec<Spectrogram>,
    pub noise_images: Vec<Spectrogram>,
    /// Estimated from the oracle images, one column per source.
    pub steering: SteeringSet,
    /// Gain applied to the noise images to reach the requested SNR.
    pub noise_gain: f64,
}

impl Scenario {
    /// More noise sources than the noise subspace holds.
    pub fn noise_rank_exceeded(&self) -> bool {
        self.spec.num_noises > self.spec.num_channels - self.spec.num_sources
    }

    pub fn waveform(&self, spec: &Spectrogram) -> Result<Waveform> {
        synthesize(spec, &self.spec.stft, self.spec.sample_rate, Some(self.spec.num_samples))
    }

    pub fn mixture_waveform(&self) -> Result<Waveform> {
        self.waveform(&self.mixture)
    }

    pub fn image_waveforms(&self) -> Result<Vec<Waveform>> {
        self.images.iter().map(|s| self.waveform(s)).collect()
    }

    pub fn noise_waveforms(&self) -> Result<Vec<Waveform>> {
        self.noise_images.iter().map(|s| self.waveform(s)).collect()
    }

    pub fn duration(&self) -> f64 {
        self.spec.num_samples as f64 / self.spec.sample_rate as f64
    }
}

/// Gaussian carrier times an exponential envelope held for `block` samples.
pub fn sample_sources(k: usize, num_samples: usize, block: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sources_from(&mut rng, k, num_samples, block)
}

fn sources_from(rng: &mut ChaCha8Rng, k: usize, n: usize, block: usize) -> Vec<Vec<f64>> {
    let block = block.max(1);
    (0..k)
        .map(|_| {
            let mut out = Vec::with_capacity(n);
            let mut env = 0.0;
            for i in 0..n {
                if i % block == 0 {
                    env = Exp1.sample(rng);
                }
                let g: f64 = StandardNormal.sample(rng);
                out.push(env * g);
            }
            out
        })
        .collect()
}

/// Sample excess kurtosis, E[(x−μ)⁴]/σ⁴ − 3.
pub fn excess_kurtosis(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

fn white_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Mean of per-channel sample variances.
pub fn image_variance(w: &Waveform) -> f64 {
    let mut acc = 0.0;
    for c in &w.channels {
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        acc += c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    }
    acc / w.num_channels() as f64
}

/// 10 log₁₀(mean source image variance / summed noise image variance).
pub fn snr_db(images: &[Waveform], noises: &[Waveform]) -> f64 {
    let s = images.iter().map(image_variance).sum::<f64>() / images.len() as f64;
    let n: f64 = noises.iter().map(image_variance).sum();
    10.0 * (s / n).log10()
}

fn condition_number(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    let eig = SymmetricEigen::new(g);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        (max / min).sqrt()
    }
}

// Columns used for the conditioning test: sources plus as many noises as fit.
fn conditioned(cols: &[Vec<CVec>], m: usize, nf: usize) -> bool {
    let used = cols.len().min(m);
    (0..nf).all(|f| {
        let a = CMat::from_fn(m, used, |r, c| cols[c][f][r]);
        condition_number(&a) <= MAX_COND
    })
}

// a_m(f) = g_m e^{jθ_m} e^{−j2πf τ_m / N}: a gain, a phase and a small delay
// per microphone, normalized per bin.
fn parametric_steering(rng: &mut ChaCha8Rng, m: usize, nf: usize, frame_len: usize) -> Vec<CVec> {
    let gain: Vec<f64> = (0..m).map(|_| rng.random_range(0.3..1.0)).collect();
    let phase: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
    let tau_max = (frame_len as f64 / 32.0).max(1.0);
    let delay: Vec<f64> = (0..m).map(|_| rng.random_range(-tau_max..tau_max)).collect();
    (0..nf)
        .map(|f| {
            let mut a = CVec::from_fn(m, |r, _| {
                let arg = phase[r] - 2.0 * PI * f as f64 * delay[r] / frame_len as f64;
                C64::from_polar(gain[r], arg)
            });
            a /= C64::from(a.norm());
            a
        })
        .collect()
}

fn fir_filters(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            (0..FIR_TAPS)
                .map(|n| {
                    let g: f64 = StandardNormal.sample(rng);
                    g * (-(n as f64) / 2.0).exp()
                })
                .collect()
        })
        .collect()
}

fn fir_response(h: &[Vec<f64>], nf: usize, frame_len: usize) -> Vec<CVec> {
    (0..nf)
        .map(|f| {
            CVec::from_fn(h.len(), |r, _| {
                h[r].iter()
                    .enumerate()
                    .map(|(n, &v)| C64::from_polar(v, -2.0 * PI * (f * n) as f64 / frame_len as f64))
                    .sum()
            })
        })
        .collect()
}

fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|n| h.iter().enumerate().take(n + 1).map(|(k, &hk)| hk * x[n - k]).sum())
        .collect()
}

fn steer_spectrogram(s: &Spectrogram, a: &[CVec]) -> Spectrogram {
    let (nf, nt, _) = s.shape();
    let m = a[0].len();
    Spectrogram::from_fn(nf, nt, m, |f, t, r| a[f][r] * s.get(f, t, 0))
}

fn mono(sample_rate: u32, x: Vec<f64>) -> Result<Waveform> {
    Waveform::new(sample_rate, vec![x])
}

/// Draws a complete scenario; deterministic in `spec.seed`.
pub fn make_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let (k, m, j) = (spec.num_sources, spec.num_channels, spec.num_noises);
    let n = spec.num_samples;
    let cfg = spec.stft;
    let nf = cfg.num_freqs();
    let sr = spec.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let sources = sources_from(&mut rng, k, n, cfg.hop);
    let noises: Vec<Vec<f64>> = (0..j).map(|_| white_noise(&mut rng, n)).collect();

    let (images, mut noise_images) = match spec.mixing {
        MixingMode::Identity => {
            let place = |x: &[f64], ch: usize| -> Result<Spectrogram> {
                let chans = (0..m).map(|r| if r == ch { x.to_vec() } else { vec![0.0; n] }).collect();
                analyze(&Waveform::new(sr, chans)?, &cfg)
            };
            let imgs = sources.iter().enumerate().map(|(i, s)| place(s, i)).collect::<Result<Vec<_>>>()?;
            let nimgs = noises.iter().enumerate().map(|(q, z)| place(z, k + q)).collect::<Result<Vec<_>>>()?;
            (imgs, nimgs)
        }
        MixingMode::Inst => {
            let mut draws = 0;
            let steer = loop {
                let cols: Vec<Vec<CVec>> =
                    (0..k + j).map(|_| parametric_steering(&mut rng, m, nf, cfg.frame_len)).collect();
                if conditioned(&cols, m, nf) {
                    break cols;
                }
                draws += 1;
                if draws >= MAX_DRAWS {
                    return Err(Error::IllConditioned(MAX_DRAWS));
                }
            };
            let mut imgs = Vec::with_capacity(k);
            for (i, s) in sources.iter().enumerate() {
                let spec1 = analyze(&mono(sr, s.clone())?, &cfg)?;
                imgs.push(steer_spectrogram(&spec1, &steer[i]));
            }
            let mut nimgs = Vec::with_capacity(j);
            for (q, z) in noises.iter().enumerate() {
                let spec1 = analyze(&mono(sr, z.clone())?, &cfg)?;
                nimgs.push(steer_spectrogram(&spec1, &steer[k + q]));
            }
            (imgs, nimgs)
        }
        MixingMode::Fir => {
            let mut draws = 0;
            let filters = loop {
                let hs: Vec<Vec<Vec<f64>>> = (0..k + j).map(|_| fir_filters(&mut rng, m)).collect();
                let cols: Vec<Vec<CVec>> = hs.iter().map(|h| fir_response(h, nf, cfg.frame_len)).collect();
                if conditioned(&cols, m, nf) {
                    break hs;
                }
                draws += 1;
                if draws >= MAX_DRAWS {
                    return Err(Error::IllConditioned(MAX_DRAWS));
                }
            };
            let render = |x: &[f64], h: &[Vec<f64>]| -> Result<Spectrogram> {
                let chans = h.iter().map(|hr| convolve(x, hr)).collect();
                analyze(&Waveform::new(sr, chans)?, &cfg)
            };
            let imgs = sources.iter().zip(&filters).map(|(s, h)| render(s, h)).collect::<Result<Vec<_>>>()?;
            let nimgs = noises
                .iter()
                .zip(&filters[k..])
                .map(|(z, h)| render(z, h))
                .collect::<Result<Vec<_>>>()?;
            (imgs, nimgs)
        }
    };

    let mut noise_gain = 1.0;
    if j > 0 {
        let synth = |s: &Spectrogram| synthesize(s, &cfg, sr, Some(n));
        let iw = images.iter().map(synth).collect::<Result<Vec<_>>>()?;
        let nw = noise_images.iter().map(synth).collect::<Result<Vec<_>>>()?;
        let current = snr_db(&iw, &nw);
        noise_gain = 10f64.powf((current - spec.snr_db) / 20.0);
        for z in &mut noise_images {
            z.scale(noise_gain);
        }
    }

    let mut mixture = Spectrogram::zeros(nf, images[0].num_frames(), m);
    for s in images.iter().chain(&noise_images) {
        mixture.add_assign(s)?;
    }
    let per_source = images.iter().map(estimate_steering).collect::<Result<Vec<_>>>()?;
    let steering = SteeringSet::new(
        (0..nf)
            .map(|f| CMat::from_fn(m, k, |r, c| per_source[c][f][r]))
            .collect(),
    )?;
    Ok(Scenario { spec: spec.clone(), mixture, images, noise_images, steering, noise_gain })
}

/// Unit principal eigenvector of each bin's image covariance.
pub fn estimate_steering(image: &Spectrogram) -> Result<Vec<CVec>> {
    let (nf, nt, m) = image.shape();
    (0..nf)
        .map(|f| {
            let mut r = CMat::zeros(m, m);
            for t in 0..nt {
                let x = CVec::from_column_slice(image.frame(f, t));
                r += &x * x.adjoint();
            }
            if !(r.trace().re > 0.0) {
                return Err(Error::ZeroImage { freq: f });
            }
            Ok(top_eigenvector(&(r / C64::from(nt as f64))).1)
        })
        .collect()
}
