use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64};

/// Per-frequency W(f) = [w₁ … w_K, W_z].
#[derive(Clone, Debug, PartialEq)]
pub struct DemixingSystem {
    num_sources: usize,
    mats: Vec<CMat>,
}

impl DemixingSystem {
    pub fn new(num_sources: usize, mats: Vec<CMat>) -> Result<Self> {
        let m = mats.first().map_or(0, |w| w.nrows());
        if mats.is_empty() || mats.iter().any(|w| w.nrows() != m || w.ncols() != m) {
            return Err(Error::Shape("demixing matrices must be square and equal-sized".into()));
        }
        if num_sources == 0 || num_sources >= m {
            return Err(Error::InvalidConfig(format!(
                "1 <= K < M required, got K = {num_sources}, M = {m}"
            )));
        }
        Ok(Self { num_sources, mats })
    }

    /// W(f) = −I at every bin.
    pub fn negative_identity(num_freqs: usize, num_channels: usize, num_sources: usize) -> Result<Self> {
        let w = -CMat::identity(num_channels, num_channels);
        Self::new(num_sources, vec![w; num_freqs])
    }

    pub fn num_freqs(&self) -> usize {
        self.mats.len()
    }
    pub fn num_channels(&self) -> usize {
        self.mats[0].nrows()
    }
    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn matrix(&self, f: usize) -> &CMat {
        &self.mats[f]
    }
    pub fn matrix_mut(&mut self, f: usize) -> &mut CMat {
        &mut self.mats[f]
    }
    pub fn matrices(&self) -> &[CMat] {
        &self.mats
    }
    pub fn matrices_mut(&mut self) -> &mut [CMat] {
        &mut self.mats
    }

    pub fn filter(&self, f: usize, i: usize) -> CVec {
        self.mats[f].column(i).into_owned()
    }

    pub fn noise_block(&self, f: usize) -> CMat {
        let k = self.num_sources;
        self.mats[f].columns(k, self.num_channels() - k).into_owned()
    }

    pub fn set_noise_block(&mut self, f: usize, wz: &CMat) {
        let k = self.num_sources;
        self.mats[f].columns_mut(k, wz.ncols()).copy_from(wz);
    }

    /// Same filters, different target count; used when every column is a source.
    pub fn with_num_sources(mut self, num_sources: usize) -> Result<Self> {
        if num_sources == 0 || num_sources >= self.num_channels() {
            return Err(Error::InvalidConfig("1 <= K < M required".into()));
        }
        self.num_sources = num_sources;
        Ok(self)
    }
}

pub(crate) fn set_column(w: &mut CMat, i: usize, v: &CVec) {
    w.column_mut(i).copy_from(v);
}

pub(crate) fn dot_h(w: &[C64], x: &[C64]) -> C64 {
    w.iter().zip(x).map(|(a, b)| a.conj() * b).sum()
}
