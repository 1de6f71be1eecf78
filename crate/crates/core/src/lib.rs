// Index loops mirror the matrix formulas; `!(x > 0.0)` comparisons are there to reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod error;
pub mod evaluation;
pub mod extract;
pub mod io;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod spectrogram;
pub mod stft;
pub mod trajectory;

pub use error::{Error, LinalgError, Result};
pub use evaluation::{bench_run, compute_sdr, match_and_score, BenchTable, SdrReport};
pub use extract::{run_extraction, DemixingSystem, ExtractionConfig, SteeringSet, Variant};
pub use sim::{make_scenario, MixingMode, Scenario, ScenarioSpec};
pub use spectrogram::Spectrogram;
pub use stft::{StftConfig, Waveform};
