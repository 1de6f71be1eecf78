//! Plain energy-ratio SDR, oracle matching and benchmark tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{projection_back, run_extraction_with, ExtractionConfig, SteeringSet};
use crate::sim::Scenario;
use crate::spectrogram::Spectrogram;
use crate::stft::{synthesize, StftConfig, Waveform};

pub const SDR_CAP_DB: f64 = 80.0;

/// 10 log₁₀(‖ref‖² / ‖ref − est‖²) over all channels, capped.
pub fn compute_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    if est.num_channels() != reference.num_channels() || est.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate is {}x{}, reference {}x{}",
            est.num_channels(),
            est.len(),
            reference.num_channels(),
            reference.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, r) in est.channels.iter().zip(&reference.channels) {
        for (a, b) in e.iter().zip(r) {
            num += b * b;
            den += (b - a) * (b - a);
        }
    }
    if num == 0.0 {
        return Err(Error::ZeroReference);
    }
    if den == 0.0 {
        return Ok(SDR_CAP_DB);
    }
    Ok((10.0 * (num / den).log10()).min(SDR_CAP_DB))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdrReport {
    /// SDR of each reference against its matched estimate.
    pub per_source: Vec<f64>,
    pub mean: f64,
    /// `assignment[k]` is the estimate matched to reference k.
    pub assignment: Vec<usize>,
}

// All injective maps from references to estimates, best total first found.
fn best_assignment(scores: &[Vec<f64>], n_est: usize) -> (Vec<usize>, f64) {
    fn go(scores: &[Vec<f64>], used: &mut Vec<bool>, cur: &mut Vec<usize>, sum: f64, best: &mut (Vec<usize>, f64)) {
        let k = cur.len();
        if k == scores.len() {
            if sum > best.1 {
                *best = (cur.clone(), sum);
            }
            return;
        }
        for e in 0..used.len() {
            if !used[e] {
                used[e] = true;
                cur.push(e);
                go(scores, used, cur, sum + scores[k][e], best);
                cur.pop();
                used[e] = false;
            }
        }
    }
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    go(scores, &mut vec![false; n_est], &mut Vec::new(), 0.0, &mut best);
    best
}

/// Matches references to distinct estimates maximizing the summed SDR.
pub fn match_and_score(est: &[Waveform], refs: &[Waveform]) -> Result<SdrReport> {
    if refs.is_empty() || est.len() < refs.len() {
        return Err(Error::Shape(format!("{} estimates for {} references", est.len(), refs.len())));
    }
    let scores = refs
        .iter()
        .map(|r| est.iter().map(|e| compute_sdr(e, r)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let (assignment, total) = best_assignment(&scores, est.len());
    let per_source = assignment.iter().enumerate().map(|(k, &e)| scores[k][e]).collect();
    Ok(SdrReport { per_source, mean: total / refs.len() as f64, assignment })
}

/// Mean SDR of the mixture itself against each reference image.
pub fn mixture_sdr(mixture: &Waveform, refs: &[Waveform]) -> Result<f64> {
    let v = refs.iter().map(|r| compute_sdr(mixture, r)).collect::<Result<Vec<_>>>()?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub variant: String,
    pub iteration: usize,
    pub wall_seconds: f64,
    pub g0: f64,
    pub sdr_mean: f64,
    pub sdr: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub iterations: usize,
    pub total_seconds: f64,
    pub seconds_per_iteration: f64,
    /// Wall time over signal duration.
    pub rtf: f64,
    pub final_g0: f64,
    pub final_sdr_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub num_sources: usize,
    pub signal_seconds: f64,
    pub rows: Vec<BenchRow>,
    pub summary: BTreeMap<String, VariantSummary>,
}

pub const CSV_SCHEMA: &str = "# ivex bench v1: variant,iteration,wall_seconds,g0,sdr_mean,sdr_1..sdr_K";

impl BenchTable {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["variant".to_string(), "iteration".into(), "wall_seconds".into(), "g0".into(), "sdr_mean".into()];
        header.extend((1..=self.num_sources).map(|i| format!("sdr_{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.variant.clone(),
                r.iteration.to_string(),
                format!("{:.9}", r.wall_seconds),
                format!("{:.17e}", r.g0),
                format!("{:.6}", r.sdr_mean),
            ];
            rec.extend(r.sdr.iter().map(|s| format!("{s:.6}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn rows_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant)
    }
}

/// References for scoring: oracle images in the time domain.
fn reference_waveforms(images: &[Spectrogram], stft: &StftConfig, sr: u32, len: usize) -> Result<Vec<Waveform>> {
    images.iter().map(|s| synthesize(s, stft, sr, Some(len))).collect()
}

/// Runs every config on the scenario mixture, scoring each iteration.
pub fn bench_run(scenario: &Scenario, configs: &[ExtractionConfig], steering: Option<&SteeringSet>) -> Result<BenchTable> {
    let spec = &scenario.spec;
    let (stft, sr, n) = (spec.stft, spec.sample_rate, spec.num_samples);
    let refs = reference_waveforms(&scenario.images, &stft, sr, n)?;
    let k = refs.len();
    let mut rows = Vec::new();
    let mut summary = BTreeMap::new();
    for cfg in configs {
        if cfg.num_sources != k {
            return Err(Error::InvalidConfig(format!(
                "config extracts {} sources, scenario has {k}",
                cfg.num_sources
            )));
        }
        let name = cfg.variant.name().to_string();
        let mut last = None;
        let count = if cfg.variant == crate::Variant::IvaIp1 { spec.num_channels } else { k };
        run_extraction_with(&scenario.mixture, cfg, steering, |view| {
            let images = projection_back(&scenario.mixture, view.demixing, count)?;
            let est = reference_waveforms(&images, &stft, sr, n)?;
            let rep = match_and_score(&est, &refs)?;
            let row = BenchRow {
                variant: name.clone(),
                iteration: view.record.iteration,
                wall_seconds: view.record.wall_seconds,
                g0: view.record.nll,
                sdr_mean: rep.mean,
                sdr: rep.per_source,
            };
            last = Some(row.clone());
            rows.push(row);
            Ok(())
        })?;
        let last = last.expect("at least one iteration");
        summary.insert(
            name,
            VariantSummary {
                iterations: last.iteration,
                total_seconds: last.wall_seconds,
                seconds_per_iteration: last.wall_seconds / last.iteration as f64,
                rtf: last.wall_seconds / scenario.duration(),
                final_g0: last.g0,
                final_sdr_mean: last.sdr_mean,
            },
        );
    }
    Ok(BenchTable { num_sources: k, signal_seconds: scenario.duration(), rows, summary })
}
