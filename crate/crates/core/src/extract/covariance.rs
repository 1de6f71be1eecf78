use crate::error::{Error, Result};
use crate::linalg::{CMat, HermitianPd, C64};
use crate::spectrogram::Spectrogram;

/// V_i(f) for the super-Gaussian columns and V_z(f) for the noise block.
#[derive(Clone, Debug)]
pub struct CovarianceSet {
    /// Indexed `[i][f]`.
    pub source: Vec<Vec<HermitianPd>>,
    /// Indexed `[f]`.
    pub noise: Vec<HermitianPd>,
}

impl CovarianceSet {
    pub fn num_freqs(&self) -> usize {
        self.noise.len()
    }

    pub fn source_at(&self, f: usize) -> Vec<&CMat> {
        self.source.iter().map(|v| v[f].matrix()).collect()
    }
}

/// Weighted covariances of one bin, `(1/T) Σ_t φ(t) x xᴴ` per weight track, loaded.
/// A `None` track means unit weights.
pub fn covariances_at(
    x: &Spectrogram,
    f: usize,
    phis: &[Option<&[f64]>],
    loading: f64,
) -> Result<Vec<HermitianPd>> {
    let (_, nt, m) = x.shape();
    let bin = x.bin(f);
    let tri = m * (m + 1) / 2;
    let mut acc = vec![C64::new(0.0, 0.0); tri * phis.len()];
    for t in 0..nt {
        let xt = &bin[t * m..(t + 1) * m];
        for (k, phi) in phis.iter().enumerate() {
            let wgt = phi.map_or(1.0, |p| p[t]);
            let a = &mut acc[k * tri..(k + 1) * tri];
            let mut idx = 0;
            for r in 0..m {
                let xr = xt[r] * wgt;
                for c in r..m {
                    a[idx] += xr * xt[c].conj();
                    idx += 1;
                }
            }
        }
    }
    let inv_t = 1.0 / nt as f64;
    (0..phis.len())
        .map(|k| {
            let a = &acc[k * tri..(k + 1) * tri];
            let mut v = CMat::zeros(m, m);
            let mut idx = 0;
            for r in 0..m {
                for c in r..m {
                    let z = a[idx] * inv_t;
                    v[(r, c)] = z;
                    v[(c, r)] = z.conj();
                    idx += 1;
                }
                v[(r, r)].im = 0.0;
            }
            let tr = v.trace().re;
            if !(tr > 0.0) {
                return Err(Error::AllFramesZero { freq: f });
            }
            for d in 0..m {
                v[(d, d)].re += loading * tr;
            }
            HermitianPd::new(v).map_err(Error::at(f))
        })
        .collect()
}

/// Unweighted V_z(f) with trace loading, every bin.
pub fn noise_covariance(x: &Spectrogram, loading: f64) -> Result<Vec<HermitianPd>> {
    (0..x.num_freqs())
        .map(|f| Ok(covariances_at(x, f, &[None], loading)?.remove(0)))
        .collect()
}

/// Weighted V_i(f) for each weight track, every bin, indexed `[i][f]`.
pub fn source_covariances(x: &Spectrogram, phi: &[Vec<f64>], loading: f64) -> Result<Vec<Vec<HermitianPd>>> {
    let tracks: Vec<Option<&[f64]>> = phi.iter().map(|p| Some(p.as_slice())).collect();
    let mut out: Vec<Vec<HermitianPd>> = (0..phi.len()).map(|_| Vec::with_capacity(x.num_freqs())).collect();
    for f in 0..x.num_freqs() {
        for (i, v) in covariances_at(x, f, &tracks, loading)?.into_iter().enumerate() {
            out[i].push(v);
        }
    }
    Ok(out)
}

/// Both the weighted source covariances and the unweighted noise covariance.
pub fn weighted_covariances(x: &Spectrogram, phi: &[Vec<f64>], loading: f64) -> Result<CovarianceSet> {
    check_weights(x, phi)?;
    Ok(CovarianceSet {
        source: source_covariances(x, phi, loading)?,
        noise: noise_covariance(x, loading)?,
    })
}

pub(crate) fn check_weights(x: &Spectrogram, phi: &[Vec<f64>]) -> Result<()> {
    if phi.iter().any(|p| p.len() != x.num_frames()) {
        return Err(Error::Shape("weight track length differs from frame count".into()));
    }
    Ok(())
}
