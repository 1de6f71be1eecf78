//! Block-coordinate update rules and the extraction loop.

pub mod covariance;
pub mod demixing;
pub mod project;
pub mod run;
pub mod semi;
pub mod updates;

pub use covariance::{covariances_at, noise_covariance, source_covariances, weighted_covariances, CovarianceSet};
pub use demixing::DemixingSystem;
pub use project::projection_back;
pub use run::{objective, run_extraction, run_extraction_with, ExtractionConfig, ExtractionOutput, IterationView, Variant};
pub use semi::{constrained_log_det, reduce, reduction_basis, semi_ive_update, semi_noise_completion, semi_reduction, ReducedSystem, ReductionBasis, SteeringSet};
pub use updates::{
    ip1_source_update, ip2_k1_full_update, ip2_k1_update, ip2_pair_update, lcmv_update, normalize_noise_block,
    oc_noise_update, scale_to_unit, stationarity_residual, EigenSolver, PairUpdate,
};
