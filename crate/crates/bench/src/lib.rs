//! Shared inputs for the benchmarks in `benches/`.

use nomp_core::harness::CompressiveSetup;
use nomp_core::{gen_scenario, Complex64, MatrixDistribution, ScenarioConfig};

/// A scenario-1 measurement with `tones` tones at 25 dB.
pub fn mixture(tones: usize, trial: u64) -> (ScenarioConfig, Vec<Complex64>) {
    let mut cfg = ScenarioConfig::preset(1).expect("preset exists");
    cfg.tones = tones;
    let meas = gen_scenario(&cfg, trial).expect("feasible scenario").meas;
    (cfg, meas.into_inner())
}

/// The same geometry measured through an `measurements`-row qpsk matrix.
pub fn compressive_mixture(
    measurements: usize,
    tones: usize,
    trial: u64,
) -> (ScenarioConfig, Vec<Complex64>) {
    let mut cfg = ScenarioConfig::preset(1).expect("preset exists");
    cfg.tones = tones;
    cfg.estimator.cyclic_rounds = 3;
    cfg.compressive = Some(CompressiveSetup {
        measurements,
        distribution: MatrixDistribution::Qpsk,
        matrix_seed: 1,
    });
    let meas = gen_scenario(&cfg, trial).expect("feasible scenario").meas;
    (cfg, meas.into_inner())
}
