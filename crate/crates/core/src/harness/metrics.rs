use serde::Serialize;

use crate::signal::{dft_spacing, wrap_dist, ParameterSet};

/// Estimates within this many DFT bins of a true tone count as detecting it.
pub const MATCH_RADIUS_BINS: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToneOutcome {
    pub true_omega: f64,
    pub matched: bool,
    /// Squared wrap distance to the assigned estimate; absent when missed.
    pub sq_err: Option<f64>,
    /// Squared wrap distance to the nearest estimate, matched or not; absent
    /// when nothing was estimated.
    pub nearest_sq_err: Option<f64>,
    /// Frequency CRB for this tone in rad², when computed.
    pub crb: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialReport {
    pub tones: Vec<ToneOutcome>,
    /// More sinusoids were reported than are present.
    pub false_alarm: bool,
    pub est_model_order: usize,
    /// Estimates not assigned to any true tone.
    pub unmatched_estimates: usize,
    pub residual_trajectory: Vec<f64>,
}

impl TrialReport {
    pub fn misses(&self) -> usize {
        self.tones.iter().filter(|t| !t.matched).count()
    }
}

/// Assigns estimates to true tones, nearest pair first, within
/// [`MATCH_RADIUS_BINS`] of the DFT spacing; each estimate serves at most one
/// tone. Ties are broken by true index, then by estimated frequency, so the
/// result does not depend on the order of `est`.
pub fn match_and_score(truth: &ParameterSet, est: &ParameterSet, dim: usize) -> TrialReport {
    let radius = MATCH_RADIUS_BINS * dft_spacing(dim);
    let mut pairs = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, e) in est.iter().enumerate() {
            let d = wrap_dist(t.freq, e.freq);
            if d < radius {
                pairs.push((d, i, e.freq.value(), j));
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.total_cmp(&b.2))
    });

    let mut tones: Vec<ToneOutcome> = truth
        .iter()
        .map(|t| ToneOutcome {
            true_omega: t.freq.value(),
            matched: false,
            sq_err: None,
            nearest_sq_err: est
                .iter()
                .map(|e| wrap_dist(t.freq, e.freq).powi(2))
                .min_by(f64::total_cmp),
            crb: None,
        })
        .collect();
    let mut used = vec![false; est.len()];
    let mut assigned = 0;
    for (d, i, _, j) in pairs {
        if tones[i].matched || used[j] {
            continue;
        }
        tones[i].matched = true;
        tones[i].sq_err = Some(d * d);
        used[j] = true;
        assigned += 1;
    }

    TrialReport {
        tones,
        false_alarm: est.len() > truth.len(),
        est_model_order: est.len(),
        unmatched_estimates: est.len() - assigned,
        residual_trajectory: Vec::new(),
    }
}
