//! The full estimation loop: stop test, detect, refine, cyclic refinement and
//! least-squares gain update, with the single-step and grid-only variants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::atoms::AtomProvider;
use crate::error::{check_dim, invalid, Result};
use crate::refine::{cyclic_refine_in_place, identify, ls_gains, newton_refine};
use crate::signal::{norm_sq, wrap_dist, ParameterSet, SinusoidParam};
use crate::stopping::{stop_check, BicState, CfarSpec, BIC_THRESHOLD};

/// Refined frequencies closer than this are merged before the gain update.
pub const MERGE_DISTANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Single and cyclic Newton refinement.
    Nomp,
    /// Single refinement only; no cyclic passes.
    NompMinus,
    /// Grid detection with least squares, no refinement.
    Domp,
}

fn default_bic_threshold() -> f64 {
    BIC_THRESHOLD
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingRule {
    Cfar(CfarSpec),
    Bic {
        sigma_sq: f64,
        #[serde(default = "default_bic_threshold")]
        threshold: f64,
    },
    MaxIters(usize),
}

fn default_gamma() -> usize {
    4
}
fn default_one() -> usize {
    1
}
fn default_variant() -> Variant {
    Variant::Nomp
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Detection grid oversampling factor.
    #[serde(default = "default_gamma")]
    pub oversampling: usize,
    /// Newton steps per refinement call.
    #[serde(default = "default_one")]
    pub single_steps: usize,
    /// Cyclic refinement passes per outer iteration.
    #[serde(default = "default_one")]
    pub cyclic_rounds: usize,
    pub stopping: StoppingRule,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    /// Defaults to the signal length.
    #[serde(default)]
    pub max_iterations: Option<usize>,
}

impl EstimatorConfig {
    pub fn new(stopping: StoppingRule) -> Self {
        Self {
            oversampling: default_gamma(),
            single_steps: 1,
            cyclic_rounds: 1,
            stopping,
            variant: Variant::Nomp,
            max_iterations: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.oversampling == 0 {
            return Err(invalid("oversampling factor must be at least 1"));
        }
        match self.stopping {
            StoppingRule::Cfar(spec) => spec.validate(),
            StoppingRule::Bic {
                sigma_sq,
                threshold,
            } => {
                if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
                    return Err(invalid(format!(
                        "noise variance must be positive, got {sigma_sq}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(invalid("BIC threshold must be finite"));
                }
                Ok(())
            }
            StoppingRule::MaxIters(_) => Ok(()),
        }
    }

    /// Newton steps per call after applying the variant.
    pub fn effective_single_steps(&self) -> usize {
        match self.variant {
            Variant::Domp => 0,
            _ => self.single_steps,
        }
    }

    /// Cyclic passes per iteration after applying the variant.
    pub fn effective_cyclic_rounds(&self) -> usize {
        match self.variant {
            Variant::Nomp => self.cyclic_rounds,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No DFT-grid GLRT value reached the CFAR threshold.
    BelowThreshold,
    /// The last iteration did not pay for itself under BIC and was discarded.
    Bic,
    /// The configured fixed iteration count was reached.
    IterationCount,
    /// The iteration cap (signal length or measurement count) was reached.
    IterationCap,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub params: ParameterSet,
    pub iterations: usize,
    /// Residual energy before the first iteration and after each one.
    pub residual_trajectory: Vec<f64>,
    pub stop_reason: StopReason,
    /// Set if any least-squares update was rank deficient or refined
    /// frequencies had to be merged.
    pub rank_deficiency_flag: bool,
    /// CFAR threshold in force, if any.
    pub threshold: Option<f64>,
}

fn merge_close(params: &mut Vec<SinusoidParam>) -> bool {
    let mut merged = false;
    let mut i = 0;
    while i < params.len() {
        let mut j = i + 1;
        while j < params.len() {
            if wrap_dist(params[i].freq, params[j].freq) < MERGE_DISTANCE {
                let extra = params.remove(j);
                params[i].gain += extra.gain;
                merged = true;
            } else {
                j += 1;
            }
        }
        i += 1;
    }
    merged
}

/// Estimate the sinusoids in `meas` under `cfg`.
pub fn extract_spectrum(
    meas: &[Complex64],
    provider: &dyn AtomProvider,
    cfg: &EstimatorConfig,
) -> Result<EstimateReport> {
    cfg.validate()?;
    let dim = provider.dim();
    check_dim(dim, meas.len())?;
    let steps = cfg.effective_single_steps();
    let rounds = cfg.effective_cyclic_rounds();
    let cap = cfg.max_iterations.unwrap_or(provider.signal_len()).min(dim);

    let thresh = match cfg.stopping {
        StoppingRule::Cfar(spec) => Some(spec.threshold()?),
        _ => None,
    };
    let initial = norm_sq(meas);
    let mut bic = match cfg.stopping {
        StoppingRule::Bic { threshold, .. } => Some(BicState::new(initial, threshold)),
        _ => None,
    };

    let mut params: Vec<SinusoidParam> = Vec::new();
    let mut r = meas.to_vec();
    let mut trajectory = vec![initial];
    let mut flag = false;

    let stop_reason = loop {
        if let StoppingRule::MaxIters(k) = cfg.stopping {
            if trajectory.len() > k {
                break StopReason::IterationCount;
            }
        }
        if trajectory.len() > cap {
            break StopReason::IterationCap;
        }
        if let Some(thresh) = thresh {
            if stop_check(&r, provider, thresh)? {
                break StopReason::BelowThreshold;
            }
        }

        let detected = identify(&r, provider, cfg.oversampling)?;
        let refined = newton_refine(&r, detected, provider, steps)?.param;
        let mut next = params.clone();
        next.push(refined);
        cyclic_refine_in_place(meas, &mut next, provider, rounds, steps)?;
        let merged = merge_close(&mut next);

        let freqs: Vec<_> = next.iter().map(|p| p.freq).collect();
        let (gains, deficient, resid) = ls_gains(meas, &freqs, provider)?;
        for (p, amp) in next.iter_mut().zip(gains) {
            p.gain = amp;
        }
        let energy = norm_sq(&resid);

        if let (Some(state), StoppingRule::Bic { sigma_sq, .. }) = (bic.as_mut(), cfg.stopping) {
            if state.should_stop(energy, sigma_sq, provider.signal_len()) {
                break StopReason::Bic;
            }
        }
        flag |= merged || deficient;
        params = next;
        r = resid;
        trajectory.push(energy);
    };

    Ok(EstimateReport {
        params: ParameterSet::from_vec_unchecked(params),
        iterations: trajectory.len() - 1,
        residual_trajectory: trajectory,
        stop_reason,
        rank_deficiency_flag: flag,
        threshold: thresh,
    })
}

/// Checks the residual-decay bound
/// `‖y_r(m)‖ ≤ (m+1)^{−1/2}·(1 − 2π/γ)^{−1}·Σ|g|` along the trajectory,
/// with `gain_l1` standing in for the atomic norm of the measurement.
pub fn verify_rate_bound(
    report: &EstimateReport,
    gain_l1: f64,
    oversampling: usize,
) -> Result<bool> {
    let ratio = oversampling as f64;
    if ratio <= std::f64::consts::TAU {
        return Err(invalid(format!(
            "the decay bound needs an ratio factor above 2π, got {oversampling}"
        )));
    }
    let factor = gain_l1 / (1.0 - std::f64::consts::TAU / ratio);
    Ok(report
        .residual_trajectory
        .iter()
        .enumerate()
        .all(|(m, &e)| e.sqrt() <= factor / ((m + 1) as f64).sqrt()))
}
