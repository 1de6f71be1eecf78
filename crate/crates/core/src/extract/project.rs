use crate::error::{Error, Result};
use crate::linalg::{selector, solve_linear, C64};
use crate::spectrogram::Spectrogram;

use super::demixing::{dot_h, DemixingSystem};

/// x̂_i(f, t) = (W(f)^{-H} e_i)(w_i(f)ᴴ x(f, t)) for the first `count` columns.
///
/// Only Im W_z matters, so the noise block must be complete but may have any scale.
pub fn projection_back(x: &Spectrogram, w: &DemixingSystem, count: usize) -> Result<Vec<Spectrogram>> {
    let (nf, nt, m) = x.shape();
    if w.num_freqs() != nf || w.num_channels() != m || count > m {
        return Err(Error::Shape("spectrogram and demixing system disagree".into()));
    }
    let mut out = vec![Spectrogram::zeros(nf, nt, m); count];
    for f in 0..nf {
        let wf = w.matrix(f);
        let a = solve_linear(&wf.adjoint(), &selector(m, 0..count)).map_err(Error::at(f))?;
        for (i, img) in out.iter_mut().enumerate() {
            let wi = wf.column(i);
            let ai = a.column(i);
            for t in 0..nt {
                let s: C64 = dot_h(wi.as_slice(), x.frame(f, t));
                for (o, av) in img.frame_mut(f, t).iter_mut().zip(ai.iter()) {
                    *o = av * s;
                }
            }
        }
    }
    Ok(out)
}
