//! Line spectral estimation by greedy detection with Newton refinement.

// `!(x < y)` is used on purpose so NaN inputs take the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atoms;
pub mod bounds;
pub mod compressive;
pub mod driver;
pub mod error;
pub mod harness;
pub mod io;
pub mod refine;
pub mod signal;
pub mod special;
pub mod stopping;

pub use atoms::{glrt, glrt_grid, residual, synthesize, AtomJet, AtomProvider, FourierAtoms};
pub use bounds::{
    bounds_table, crb_frequencies, crb_single, fisher_matrix, zzb_single, BoundsRow, FisherMatrix,
    FrequencyCrb,
};
pub use compressive::{gen_matrix, CompressiveAtoms, MatrixDistribution, MeasurementMatrix};
pub use driver::{
    extract_spectrum, verify_rate_bound, EstimateReport, EstimatorConfig, StopReason, StoppingRule,
    Variant,
};
pub use error::{NompError, Result};
pub use harness::{
    gen_scenario, match_and_score, run_campaign, CampaignSummary, Scenario, ScenarioConfig, SnrLaw,
    TrialReport,
};
pub use io::{load_matrix, load_signal, save_matrix, save_signal, SignalFormat};
pub use num_complex::Complex64;
pub use refine::{cyclic_refine, identify, ls_update, newton_refine, LsOutcome, RefineOutcome};
pub use signal::{
    atom_derivs, dft_spacing, fourier_atom, inner, norm_sq, wrap_dist, ComplexSignal, Frequency,
    ParameterSet, SinusoidParam,
};
pub use stopping::{
    bic_score, cfar_threshold, p_miss_model, roc_curve, stop_check, BicState, CfarSpec, RocPoint,
    ThresholdMode,
};
