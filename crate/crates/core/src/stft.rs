//! Multichannel STFT with a square-root Hann window and weighted overlap-add.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::spectrogram::Spectrogram;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    /// One vector per channel, all of equal length.
    pub channels: Vec<Vec<f64>>,
}

impl Waveform {
    pub fn new(sample_rate: u32, channels: Vec<Vec<f64>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(first) = channels.first() {
            if channels.iter().any(|c| c.len() != first.len()) {
                return Err(Error::Shape("channels differ in length".into()));
            }
        }
        Ok(Self { sample_rate, channels })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn truncate(&mut self, len: usize) {
        for c in &mut self.channels {
            c.truncate(len);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    SqrtHann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            // periodic Hann, so shifted squares sum to a constant
            Window::SqrtHann => (0..len)
                .map(|k| (0.5 - 0.5 * (2.0 * PI * k as f64 / len as f64).cos()).sqrt())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { frame_len: 4096, hop: 1024, window: Window::SqrtHann }
    }
}

impl StftConfig {
    pub fn new(frame_len: usize, hop: usize) -> Result<Self> {
        let cfg = Self { frame_len, hop, window: Window::SqrtHann };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.frame_len.is_power_of_two() || self.frame_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "frame length {} is not a power of two",
                self.frame_len
            )));
        }
        if self.hop == 0 || !self.frame_len.is_multiple_of(self.hop) || self.hop > self.frame_len / 2 {
            return Err(Error::InvalidConfig(format!(
                "hop {} must divide frame length {} with at least 2x overlap",
                self.hop, self.frame_len
            )));
        }
        Ok(())
    }

    pub fn num_freqs(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Leading zeros so the first sample is covered by a full stack of frames.
    fn lead(&self) -> usize {
        self.frame_len - self.hop
    }

    pub fn num_frames(&self, num_samples: usize) -> usize {
        (self.lead() + num_samples - 1) / self.hop + 1
    }

    /// Samples needed to cover `num_frames` frames, minus the lead.
    pub fn synthesis_len(&self, num_frames: usize) -> usize {
        num_frames * self.hop
    }
}

pub fn analyze(wave: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let n = wave.len();
    if n < cfg.frame_len {
        return Err(Error::TooShort { len: n, frame_len: cfg.frame_len });
    }
    let nf = cfg.num_freqs();
    let nt = cfg.num_frames(n);
    let m = wave.num_channels();
    let win = cfg.window.coefficients(cfg.frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.frame_len);
    let lead = cfg.lead() as isize;

    let mut out = Spectrogram::zeros(nf, nt, m);
    let mut buf = vec![C64::new(0.0, 0.0); cfg.frame_len];
    for (ch, samples) in wave.channels.iter().enumerate() {
        for t in 0..nt {
            let start = (t * cfg.hop) as isize - lead;
            for (k, b) in buf.iter_mut().enumerate() {
                let idx = start + k as isize;
                let v = if idx >= 0 && (idx as usize) < n { samples[idx as usize] } else { 0.0 };
                *b = C64::new(v * win[k], 0.0);
            }
            fft.process(&mut buf);
            for (f, v) in buf.iter().take(nf).enumerate() {
                out.set(f, t, ch, *v);
            }
        }
    }
    Ok(out)
}

/// Overlap-add inverse; output has `cfg.synthesis_len(T)` samples unless `len` trims it.
pub fn synthesize(
    spec: &Spectrogram,
    cfg: &StftConfig,
    sample_rate: u32,
    len: Option<usize>,
) -> Result<Waveform> {
    cfg.validate()?;
    let (nf, nt, m) = spec.shape();
    if nf != cfg.num_freqs() {
        return Err(Error::ConfigMismatch(format!(
            "{nf} bins, frame length {} implies {}",
            cfg.frame_len,
            cfg.num_freqs()
        )));
    }
    let n_full = cfg.synthesis_len(nt);
    if let Some(l) = len {
        if l > n_full {
            return Err(Error::ConfigMismatch(format!(
                "{nt} frames cannot cover {l} samples"
            )));
        }
    }
    let frame_len = cfg.frame_len;
    let win = cfg.window.coefficients(frame_len);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(frame_len);
    let lead = cfg.lead();
    let padded = (nt - 1) * cfg.hop + frame_len;

    // every output sample sits under a full stack of frames, where the
    // shifted squared windows sum to this constant
    let norm = win.iter().map(|w| w * w).sum::<f64>() / cfg.hop as f64;

    let mut channels = Vec::with_capacity(m);
    let mut buf = vec![C64::new(0.0, 0.0); frame_len];
    for ch in 0..m {
        let mut acc = vec![0.0; padded];
        for t in 0..nt {
            for f in 0..nf {
                buf[f] = spec.get(f, t, ch);
            }
            // Hermitian completion of the one-sided spectrum
            for f in nf..frame_len {
                buf[f] = buf[frame_len - f].conj();
            }
            ifft.process(&mut buf);
            let off = t * cfg.hop;
            for k in 0..frame_len {
                acc[off + k] += buf[k].re / frame_len as f64 * win[k];
            }
        }
        let out: Vec<f64> = acc[lead..lead + len.unwrap_or(n_full)].iter().map(|v| v / norm).collect();
        channels.push(out);
    }
    Waveform::new(sample_rate, channels)
}
