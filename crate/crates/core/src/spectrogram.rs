use crate::error::{Error, Result};
use crate::linalg::C64;

/// Complex tensor x(f, t) ∈ C^M, stored frequency-major then frame then channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    num_freqs: usize,
    num_frames: usize,
    num_channels: usize,
    data: Vec<C64>,
}

impl Spectrogram {
    pub fn zeros(num_freqs: usize, num_frames: usize, num_channels: usize) -> Self {
        Self {
            num_freqs,
            num_frames,
            num_channels,
            data: vec![C64::new(0.0, 0.0); num_freqs * num_frames * num_channels],
        }
    }

    pub fn from_fn(
        num_freqs: usize,
        num_frames: usize,
        num_channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> C64,
    ) -> Self {
        let mut data = Vec::with_capacity(num_freqs * num_frames * num_channels);
        for fi in 0..num_freqs {
            for t in 0..num_frames {
                for m in 0..num_channels {
                    data.push(f(fi, t, m));
                }
            }
        }
        Self { num_freqs, num_frames, num_channels, data }
    }

    pub fn from_vec(
        num_freqs: usize,
        num_frames: usize,
        num_channels: usize,
        data: Vec<C64>,
    ) -> Result<Self> {
        if data.len() != num_freqs * num_frames * num_channels {
            return Err(Error::Shape(format!(
                "{} values for a {num_freqs}x{num_frames}x{num_channels} spectrogram",
                data.len()
            )));
        }
        Ok(Self { num_freqs, num_frames, num_channels, data })
    }

    pub fn num_freqs(&self) -> usize {
        self.num_freqs
    }
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }
    pub fn num_channels(&self) -> usize {
        self.num_channels
    }
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.num_freqs, self.num_frames, self.num_channels)
    }

    #[inline]
    fn offset(&self, f: usize, t: usize) -> usize {
        (f * self.num_frames + t) * self.num_channels
    }

    #[inline]
    pub fn get(&self, f: usize, t: usize, m: usize) -> C64 {
        self.data[self.offset(f, t) + m]
    }

    #[inline]
    pub fn set(&mut self, f: usize, t: usize, m: usize, v: C64) {
        let o = self.offset(f, t);
        self.data[o + m] = v;
    }

    /// The observation vector x(f, t).
    #[inline]
    pub fn frame(&self, f: usize, t: usize) -> &[C64] {
        let o = self.offset(f, t);
        &self.data[o..o + self.num_channels]
    }

    #[inline]
    pub fn frame_mut(&mut self, f: usize, t: usize) -> &mut [C64] {
        let o = self.offset(f, t);
        let m = self.num_channels;
        &mut self.data[o..o + m]
    }

    /// All frames of bin `f`, contiguous.
    pub fn bin(&self, f: usize) -> &[C64] {
        let o = self.offset(f, 0);
        &self.data[o..o + self.num_frames * self.num_channels]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn add_assign(&mut self, other: &Spectrogram) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn check_same(&self, other: &Spectrogram) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}
