//! CFAR thresholds, the DFT-grid stop test, the analytical miss model and
//! the BIC stopping rule.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::atoms::{glrt_grid, AtomProvider};
use crate::error::{invalid, Result};
use crate::special::{integrate, marcum_q1};

/// Paper's average grid-mismatch amplitude factor used by the miss model.
pub const MEAN_GRID_ATTENUATION: f64 = 0.88;

/// Default BIC stopping threshold.
pub const BIC_THRESHOLD: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Exact,
    Asymptotic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfarSpec {
    pub sigma_sq: f64,
    pub signal_len: usize,
    pub p_fa: f64,
    pub mode: ThresholdMode,
}

impl CfarSpec {
    pub fn new(sigma_sq: f64, dim: usize, p_fa: f64, mode: ThresholdMode) -> Result<Self> {
        let spec = Self {
            sigma_sq,
            signal_len: dim,
            p_fa,
            mode,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(invalid(format!(
                "noise variance must be positive, got {}",
                self.sigma_sq
            )));
        }
        if self.signal_len < 2 {
            return Err(invalid(format!(
                "signal length must be at least 2, got {}",
                self.signal_len
            )));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(invalid(format!(
                "false-alarm rate must lie in (0, 1), got {}",
                self.p_fa
            )));
        }
        Ok(())
    }

    pub fn threshold(&self) -> Result<f64> {
        cfar_threshold(self)
    }
}

/// Detection threshold `τ` on the GLRT for the given nominal false-alarm rate.
///
/// Exact mode solves `(1 − e^{−τ/σ²})^N = 1 − P_fa`; asymptotic mode is the
/// large-`N` form `σ² ln N − σ² ln ln(1/(1 − P_fa))`.
pub fn cfar_threshold(spec: &CfarSpec) -> Result<f64> {
    spec.validate()?;
    let dim = spec.signal_len as f64;
    // ln(1 − P_fa), kept accurate for small P_fa
    let log_keep = (-spec.p_fa).ln_1p();
    Ok(match spec.mode {
        ThresholdMode::Exact => -spec.sigma_sq * (-(log_keep / dim).exp_m1()).ln(),
        ThresholdMode::Asymptotic => spec.sigma_sq * (dim.ln() - (-log_keep).ln()),
    })
}

/// True when no node of the plain `N`-point grid reaches `thresh`.
pub fn stop_check(resid: &[Complex64], provider: &dyn AtomProvider, thresh: f64) -> Result<bool> {
    let grid = glrt_grid(resid, provider, 1)?;
    Ok(grid.iter().all(|&v| v < thresh))
}

/// Modelled probability of missing a tone of the given SNR at threshold `thresh`.
pub fn p_miss_model(snr: f64, thresh: f64, sigma_sq: f64) -> f64 {
    let a = MEAN_GRID_ATTENUATION * (2.0 * snr).sqrt();
    let b = (2.0 * thresh / sigma_sq).sqrt();
    1.0 - marcum_q1(a, b)
}

/// Average of `sin(Nω/2)/(N sin(ω/2))` for `ω` uniform on `[−π/N, π/N]`.
pub fn mean_dirichlet_peak(dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(invalid("signal length must be at least 2"));
    }
    let nf = dim as f64;
    let half = std::f64::consts::PI / nf;
    let kernel = |w: f64| {
        if w == 0.0 {
            1.0
        } else {
            (nf * w / 2.0).sin() / (nf * (w / 2.0).sin())
        }
    };
    Ok(integrate(kernel, &[0.0, half], 1e-14 * half)? / half)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RocPoint {
    pub pfa_nominal: f64,
    pub threshold: f64,
    pub pmiss_model: f64,
}

/// Modelled miss probability against nominal false-alarm rate at a fixed SNR.
pub fn roc_curve(snr: f64, dim: usize, sigma_sq: f64, p_fas: &[f64]) -> Result<Vec<RocPoint>> {
    p_fas
        .iter()
        .map(|&p_fa| {
            let thresh = CfarSpec::new(sigma_sq, dim, p_fa, ThresholdMode::Exact)?.threshold()?;
            Ok(RocPoint {
                pfa_nominal: p_fa,
                threshold: thresh,
                pmiss_model: p_miss_model(snr, thresh, sigma_sq),
            })
        })
        .collect()
}

/// `(2/σ²)·Δ − 2 ln N` for a residual-energy drop `Δ`.
pub fn bic_score(delta_residual_energy: f64, sigma_sq: f64, dim: usize) -> f64 {
    2.0 / sigma_sq * delta_residual_energy - 2.0 * (dim as f64).ln()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BicState {
    pub prev_residual_energy: f64,
    pub threshold: f64,
}

impl BicState {
    pub fn new(initial_energy: f64, threshold: f64) -> Self {
        Self {
            prev_residual_energy: initial_energy,
            threshold,
        }
    }

    /// Scores the iteration that produced `new_energy`. Returns true when it
    /// should be discarded and the estimation stopped; otherwise records
    /// `new_energy` as the reference for the next iteration.
    pub fn should_stop(&mut self, new_energy: f64, sigma_sq: f64, dim: usize) -> bool {
        let score = bic_score(self.prev_residual_energy - new_energy, sigma_sq, dim);
        if score <= self.threshold {
            true
        } else {
            self.prev_residual_energy = new_energy;
            false
        }
    }
}

/// Noise variance from the median of the unit-DFT periodogram. For white
/// noise each bin is `σ²·Exp(1)`, whose median is `σ² ln 2`.
pub fn estimate_noise_variance(meas: &[Complex64]) -> Result<f64> {
    if meas.len() < 2 {
        return Err(invalid("signal length must be at least 2"));
    }
    let dim = meas.len();
    let mut buf = meas.to_vec();
    FftPlanner::new()
        .plan_fft(dim, FftDirection::Forward)
        .process(&mut buf);
    let mut power: Vec<f64> = buf.iter().map(|c| c.norm_sqr() / dim as f64).collect();
    power.sort_by(f64::total_cmp);
    let median = if dim % 2 == 1 {
        power[dim / 2]
    } else {
        0.5 * (power[dim / 2 - 1] + power[dim / 2])
    };
    Ok(median / std::f64::consts::LN_2)
}
