//! WAV files and scenario directories.

use std::fs;
use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::SteeringSet;
use crate::sim::{Scenario, ScenarioSpec};
use crate::spectrogram::Spectrogram;
use crate::stft::{analyze, Waveform};

/// Writes 32-bit float, channels interleaved.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: wave.num_channels() as u16,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec)?;
    for n in 0..wave.len() {
        for c in &wave.channels {
            w.write_sample(c[n] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads float or integer PCM; integers are scaled to [−1, 1).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let nc = spec.channels as usize;
    let flat: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            r.samples::<i32>().map(|s| s.map(|v| v as f64 / scale)).collect::<Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(flat.len() / nc.max(1)); nc];
    for (i, v) in flat.into_iter().enumerate() {
        channels[i % nc].push(v);
    }
    Waveform::new(spec.sample_rate, channels)
}

/// scenario.json: the generating spec plus derived facts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioMeta {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    pub noise_gain: f64,
    pub noise_rank_exceeded: bool,
    pub duration_seconds: f64,
}

/// Everything `write_scenario` puts on disk, read back.
#[derive(Clone, Debug)]
pub struct StoredScenario {
    pub meta: ScenarioMeta,
    pub mixture: Waveform,
    pub images: Vec<Waveform>,
    pub steering: SteeringSet,
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn write_steering(path: impl AsRef<Path>, steering: &SteeringSet) -> Result<()> {
    write_json(path, &steering.to_nested())
}

pub fn read_steering(path: impl AsRef<Path>) -> Result<SteeringSet> {
    let nested: Vec<Vec<Vec<[f64; 2]>>> = read_json(path)?;
    SteeringSet::from_nested(&nested)
}

/// mixture.wav, image_<i>.wav (1-based), steering.json, scenario.json.
pub fn write_scenario(dir: impl AsRef<Path>, sc: &Scenario) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    write_wav(dir.join("mixture.wav"), &sc.mixture_waveform()?)?;
    for (i, w) in sc.image_waveforms()?.iter().enumerate() {
        write_wav(dir.join(format!("image_{}.wav", i + 1)), w)?;
    }
    write_steering(dir.join("steering.json"), &sc.steering)?;
    let meta = ScenarioMeta {
        spec: sc.spec.clone(),
        noise_gain: sc.noise_gain,
        noise_rank_exceeded: sc.noise_rank_exceeded(),
        duration_seconds: sc.duration(),
    };
    write_json(dir.join("scenario.json"), &meta)
}

pub fn read_scenario(dir: impl AsRef<Path>) -> Result<StoredScenario> {
    let dir = dir.as_ref();
    let meta: ScenarioMeta = read_json(dir.join("scenario.json"))?;
    let mixture = read_wav(dir.join("mixture.wav"))?;
    let images = (1..=meta.spec.num_sources)
        .map(|i| read_wav(dir.join(format!("image_{i}.wav"))))
        .collect::<Result<Vec<_>>>()?;
    let steering = read_steering(dir.join("steering.json"))?;
    if images.iter().any(|w| w.len() != mixture.len() || w.num_channels() != mixture.num_channels()) {
        return Err(Error::Shape("image and mixture files differ in shape".into()));
    }
    Ok(StoredScenario { meta, mixture, images, steering })
}

/// A stored scenario back in the STFT domain. The noise images are not
/// stored, so the residual mixture minus source images stands in for them.
pub fn load_scenario(dir: impl AsRef<Path>) -> Result<Scenario> {
    let st = read_scenario(dir)?;
    let cfg = st.meta.spec.stft;
    let mixture = analyze(&st.mixture, &cfg)?;
    let images = st.images.iter().map(|w| analyze(w, &cfg)).collect::<Result<Vec<_>>>()?;
    let (nf, _, m) = mixture.shape();
    let mut residual = mixture.clone();
    for img in &images {
        let mut neg: Spectrogram = img.clone();
        neg.scale(-1.0);
        residual.add_assign(&neg)?;
    }
    if st.steering.num_freqs() != nf || st.steering.num_channels() != m {
        return Err(Error::Shape(format!("steering file does not match {nf} bins, {m} channels")));
    }
    Ok(Scenario {
        spec: st.meta.spec,
        mixture,
        images,
        noise_images: vec![residual],
        steering: st.steering,
        noise_gain: st.meta.noise_gain,
    })
}
