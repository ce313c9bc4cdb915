//! Monte-Carlo scenarios, truth-to-estimate matching and campaign summaries.

mod campaign;
mod metrics;
mod scenario;

pub use campaign::{
    run_campaign, run_trial, write_trials_csv, CampaignSummary, TrialError, TrialRecord,
};
pub use metrics::{match_and_score, ToneOutcome, TrialReport, MATCH_RADIUS_BINS};
pub use scenario::{
    gen_scenario, gen_scenario_with, CompressiveSetup, Scenario, ScenarioConfig, SnrLaw,
    MAX_REDRAWS,
};
