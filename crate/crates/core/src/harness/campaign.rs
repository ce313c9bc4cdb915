use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::metrics::{match_and_score, TrialReport};
use super::scenario::{gen_scenario_with, ScenarioConfig};
use crate::atoms::AtomProvider;
use crate::bounds::crb_frequencies;
use crate::driver::{extract_spectrum, EstimateReport};
use crate::error::Result;
use crate::signal::dft_spacing;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub report: TrialReport,
    pub estimate: EstimateReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialError {
    pub trial: u64,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CampaignSummary {
    pub config: ScenarioConfig,
    /// Successful trials in trial order.
    pub records: Vec<TrialRecord>,
    pub errors: Vec<TrialError>,
    /// Squared frequency errors of matched tones, ascending.
    pub sq_errors: Vec<f64>,
    /// Squared distance from every true tone to its nearest estimate,
    /// ascending; `π²` when a trial estimated nothing.
    pub tone_sq_errors: Vec<f64>,
    /// Mean matched squared error over the squared DFT spacing; misses excluded.
    pub normalized_mse: f64,
    /// Mean per-tone frequency CRB in rad², over tones with a finite bound.
    pub mean_crb: f64,
    pub normalized_crb: f64,
    /// Fraction of trials reporting more sinusoids than present.
    pub p_fa: f64,
    /// Fraction of true tones without a matching estimate.
    pub p_miss: f64,
    /// Number of trials per estimated model order.
    pub model_orders: BTreeMap<usize, usize>,
}

impl CampaignSummary {
    fn from_records(
        config: ScenarioConfig,
        records: Vec<TrialRecord>,
        errors: Vec<TrialError>,
    ) -> Self {
        let spacing_sq = dft_spacing(config.signal_len).powi(2);
        let mut sq_errors: Vec<f64> = records
            .iter()
            .flat_map(|r| r.report.tones.iter().filter_map(|t| t.sq_err))
            .collect();
        sq_errors.sort_by(f64::total_cmp);
        let mut tone_sq_errors: Vec<f64> = records
            .iter()
            .flat_map(|r| r.report.tones.iter())
            .map(|t| t.nearest_sq_err.unwrap_or(PI * PI))
            .collect();
        tone_sq_errors.sort_by(f64::total_cmp);
        let crbs: Vec<f64> = records
            .iter()
            .flat_map(|r| r.report.tones.iter().filter_map(|t| t.crb))
            .filter(|c| c.is_finite())
            .collect();
        let tones: usize = records.iter().map(|r| r.report.tones.len()).sum();
        let misses: usize = records.iter().map(|r| r.report.misses()).sum();
        let mut model_orders = BTreeMap::new();
        for r in &records {
            *model_orders.entry(r.report.est_model_order).or_insert(0) += 1;
        }
        let trials = records.len().max(1) as f64;
        let mean = |v: &[f64]| {
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let mean_crb = mean(&crbs);
        Self {
            normalized_mse: mean(&sq_errors) / spacing_sq,
            normalized_crb: mean_crb / spacing_sq,
            mean_crb,
            p_fa: records.iter().filter(|r| r.report.false_alarm).count() as f64 / trials,
            p_miss: if tones == 0 {
                0.0
            } else {
                misses as f64 / tones as f64
            },
            model_orders,
            sq_errors,
            tone_sq_errors,
            config,
            records,
            errors,
        }
    }

    /// Empirical `Pr{error > e}` over every true tone's nearest-estimate error.
    pub fn ccdf(&self) -> Vec<(f64, f64)> {
        let dim = self.tone_sq_errors.len() as f64;
        self.tone_sq_errors
            .iter()
            .enumerate()
            .map(|(i, &e)| (e, 1.0 - (i + 1) as f64 / dim))
            .collect()
    }

    /// Nearest-rank quantile of the matched squared errors, `q` in `[0, 1]`.
    pub fn sq_error_quantile(&self, q: f64) -> Option<f64> {
        quantile(&self.sq_errors, q)
    }

    /// Nearest-rank quantile of the all-tone nearest-estimate errors.
    pub fn tone_error_quantile(&self, q: f64) -> Option<f64> {
        quantile(&self.tone_sq_errors, q)
    }

    /// Fraction of trials whose estimated model order equals `order`.
    pub fn order_fraction(&self, order: usize) -> f64 {
        *self.model_orders.get(&order).unwrap_or(&0) as f64 / self.records.len().max(1) as f64
    }
}

/// One trial: generate, estimate, match, and attach per-tone bounds.
pub fn run_trial(
    cfg: &ScenarioConfig,
    provider: &dyn AtomProvider,
    trial: u64,
) -> Result<TrialRecord> {
    let sc = gen_scenario_with(cfg, provider, trial)?;
    let estimate = extract_spectrum(&sc.meas, provider, &cfg.estimator)?;
    let mut report = match_and_score(&sc.truth, &estimate.params, cfg.signal_len);
    if !sc.effective_truth.is_empty() {
        let crb = crb_frequencies(&sc.effective_truth, sc.sigma_sq, provider)?;
        for (t, c) in report.tones.iter_mut().zip(crb.values) {
            t.crb = Some(c);
        }
    }
    report.residual_trajectory = estimate.residual_trajectory.clone();
    Ok(TrialRecord {
        trial,
        report,
        estimate,
    })
}

/// Runs `cfg.trials` independent trials in parallel. Failed trials are
/// collected in `errors` rather than aborting the campaign.
pub fn run_campaign(cfg: &ScenarioConfig) -> Result<CampaignSummary> {
    cfg.validate()?;
    let provider = cfg.provider()?;
    let provider = provider.as_ref();
    let outcomes: Vec<(u64, Result<TrialRecord>)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| (t, run_trial(cfg, provider, t)))
        .collect();
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (trial, out) in outcomes {
        match out {
            Ok(r) => records.push(r),
            Err(e) => errors.push(TrialError {
                trial,
                message: e.to_string(),
            }),
        }
    }
    Ok(CampaignSummary::from_records(*cfg, records, errors))
}

fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let dim = sorted.len();
    let rank = ((q.clamp(0.0, 1.0) * dim as f64).ceil() as usize).clamp(1, dim);
    Some(sorted[rank - 1])
}

fn fmt_f64(arg: f64) -> String {
    format!("{arg:.16e}")
}

/// One row per (trial, tone); trials without tones get a single row with
/// empty tone fields.
pub fn write_trials_csv<W: Write>(summary: &CampaignSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "trial",
        "tone_idx",
        "true_omega",
        "matched",
        "sq_err",
        "crb",
        "est_order",
        "false_alarm",
    ])?;
    for rec in &summary.records {
        let r = &rec.report;
        let trial = rec.trial.to_string();
        let order = r.est_model_order.to_string();
        let fa = r.false_alarm.to_string();
        if r.tones.is_empty() {
            w.write_record([trial.as_str(), "", "", "", "", "", &order, &fa])?;
        }
        for (i, t) in r.tones.iter().enumerate() {
            w.write_record([
                trial.clone(),
                i.to_string(),
                fmt_f64(t.true_omega),
                t.matched.to_string(),
                t.sq_err.map(fmt_f64).unwrap_or_default(),
                t.crb.map(fmt_f64).unwrap_or_default(),
                order.clone(),
                fa.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
