//! Command-line front end: estimate, simulate, bounds and roc.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nomp_core::harness::{write_trials_csv, CompressiveSetup};
use nomp_core::{
    bounds_table, extract_spectrum, load_matrix, load_signal, roc_curve, run_campaign,
    AtomProvider, CfarSpec, CompressiveAtoms, EstimatorConfig, FourierAtoms, MatrixDistribution,
    ScenarioConfig, SignalFormat, SnrLaw, StoppingRule, ThresholdMode, Variant,
};
use serde::Serialize;
use serde_json::value::RawValue;

#[derive(Parser)]
#[command(
    name = "nomp",
    version,
    about = "Frequency estimation for mixtures of sinusoids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate sinusoids in a signal file and print them as JSON.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo campaign and write per-tone results as CSV.
    Simulate(SimulateArgs),
    /// Tabulate the single-tone CRB and ZZB over an SNR sweep.
    Bounds(BoundsArgs),
    /// Tabulate CFAR threshold and modelled miss probability per false-alarm rate.
    Roc(RocArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Nomp,
    NompMinus,
    Domp,
}

#[derive(Clone, Copy, ValueEnum)]
enum StopArg {
    Cfar,
    Bic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Asymptotic,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Noise variance; required unless the config file supplies the stopping rule.
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    pfa: Option<f64>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    rs: Option<usize>,
    #[arg(long)]
    rc: Option<usize>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, value_enum)]
    stop: Option<StopArg>,
    #[arg(long, value_enum, default_value = "exact")]
    threshold_mode: ModeArg,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Binary measurement matrix; the input is then treated as compressive samples.
    #[arg(long)]
    compressive_matrix: Option<PathBuf>,
    /// JSON estimator configuration; flags given explicitly override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4), default_value_t = 1)]
    scenario: u8,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed SNR in dB for every tone, replacing the scenario's law.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long = "k")]
    tones: Option<usize>,
    #[arg(long)]
    rc: Option<usize>,
    #[arg(long)]
    pfa: Option<f64>,
    #[arg(long, value_enum)]
    stop: Option<StopArg>,
    /// Number of qpsk compressive measurements.
    #[arg(long)]
    compressive_m: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON scenario configuration, used in place of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long = "n", default_value_t = 256)]
    signal_len: usize,
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    snr_db_min: f64,
    #[arg(long, default_value_t = 35.0, allow_negative_numbers = true)]
    snr_db_max: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RocArgs {
    #[arg(long, allow_negative_numbers = true)]
    snr_db: f64,
    #[arg(long = "n", default_value_t = 256)]
    signal_len: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.05,0.1")]
    pfa_list: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A float rendered with 17 significant digits.
struct Float(f64);

impl Serialize for Float {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        RawValue::from_string(fmt_float(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(serializer)
    }
}

fn fmt_float(value: f64) -> String {
    format!("{value:.16e}")
}

#[derive(Serialize)]
struct JsonParam {
    re: Float,
    im: Float,
    omega: Float,
}

#[derive(Serialize)]
struct JsonEstimate {
    params: Vec<JsonParam>,
    iterations: usize,
    stop_reason: nomp_core::StopReason,
    rank_deficient: bool,
    residual_energy: Float,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn threshold_mode(m: ModeArg) -> ThresholdMode {
    match m {
        ModeArg::Exact => ThresholdMode::Exact,
        ModeArg::Asymptotic => ThresholdMode::Asymptotic,
    }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let format = match args.format {
        FormatArg::Csv => SignalFormat::Csv,
        FormatArg::Bin => SignalFormat::Bin,
    };
    let signal = load_signal(&args.input, format)
        .with_context(|| format!("reading signal {}", args.input.display()))?;
    let provider: Box<dyn AtomProvider> = match &args.compressive_matrix {
        Some(path) => {
            let matrix =
                load_matrix(path).with_context(|| format!("reading matrix {}", path.display()))?;
            Box::new(CompressiveAtoms::new(matrix)?)
        }
        None => Box::new(FourierAtoms::new(signal.len())?),
    };
    if provider.dim() != signal.len() {
        bail!(
            "signal has {} samples but the measurement matrix has {} rows",
            signal.len(),
            provider.dim()
        );
    }

    let mut cfg = match &args.config {
        Some(path) => read_json::<EstimatorConfig>(path)?,
        None => {
            let mut cfg = EstimatorConfig::new(StoppingRule::MaxIters(0));
            cfg.cyclic_rounds = 3;
            cfg
        }
    };
    if let Some(gamma) = args.gamma {
        cfg.oversampling = gamma;
    }
    if let Some(rs) = args.rs {
        cfg.single_steps = rs;
    }
    if let Some(rc) = args.rc {
        cfg.cyclic_rounds = rc;
    }
    if let Some(v) = args.variant {
        cfg.variant = match v {
            VariantArg::Nomp => Variant::Nomp,
            VariantArg::NompMinus => Variant::NompMinus,
            VariantArg::Domp => Variant::Domp,
        };
    }
    if args.max_iterations.is_some() {
        cfg.max_iterations = args.max_iterations;
    }
    let stop = match (args.stop, &args.config) {
        (Some(stop), _) => Some(stop),
        (None, None) => Some(StopArg::Cfar),
        (None, Some(_)) => None,
    };
    if let Some(stop) = stop {
        let Some(sigma_sq) = args.sigma2 else {
            bail!("--sigma2 is required to set the stopping rule");
        };
        cfg.stopping = match stop {
            StopArg::Cfar => StoppingRule::Cfar(CfarSpec::new(
                sigma_sq,
                provider.signal_len(),
                args.pfa.unwrap_or(0.01),
                threshold_mode(args.threshold_mode),
            )?),
            StopArg::Bic => StoppingRule::Bic {
                sigma_sq,
                threshold: nomp_core::stopping::BIC_THRESHOLD,
            },
        };
    }

    let report = extract_spectrum(&signal, provider.as_ref(), &cfg)?;
    let json = JsonEstimate {
        params: report
            .params
            .iter()
            .map(|p| JsonParam {
                re: Float(p.gain.re),
                im: Float(p.gain.im),
                omega: Float(p.freq.value()),
            })
            .collect(),
        iterations: report.iterations,
        stop_reason: report.stop_reason,
        rank_deficient: report.rank_deficiency_flag,
        residual_energy: Float(*report.residual_trajectory.last().unwrap_or(&0.0)),
    };
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &json)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct JsonCampaign {
    trials: usize,
    failed_trials: usize,
    normalized_mse: Float,
    normalized_crb: Float,
    p_fa: Float,
    p_miss: Float,
    model_orders: std::collections::BTreeMap<usize, usize>,
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => read_json::<ScenarioConfig>(path)?,
        None => ScenarioConfig::preset(args.scenario)?,
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(db) = args.snr_db {
        cfg.snr = SnrLaw::Fixed(db);
    }
    if let Some(tones) = args.tones {
        cfg.tones = tones;
    }
    if let Some(rc) = args.rc {
        cfg.estimator.cyclic_rounds = rc;
    }
    match args.stop {
        Some(StopArg::Bic) => {
            cfg.estimator.stopping = StoppingRule::Bic {
                sigma_sq: 1.0,
                threshold: nomp_core::stopping::BIC_THRESHOLD,
            }
        }
        Some(StopArg::Cfar) => {
            cfg.estimator.stopping = StoppingRule::Cfar(CfarSpec::new(
                1.0,
                cfg.signal_len,
                args.pfa.unwrap_or(0.01),
                ThresholdMode::Exact,
            )?)
        }
        None => {
            if let (Some(p_fa), StoppingRule::Cfar(spec)) = (args.pfa, &mut cfg.estimator.stopping)
            {
                *spec = CfarSpec::new(spec.sigma_sq, spec.signal_len, p_fa, spec.mode)?;
            }
        }
    }
    if let Some(measurements) = args.compressive_m {
        cfg.compressive = Some(CompressiveSetup {
            measurements,
            distribution: MatrixDistribution::Qpsk,
            matrix_seed: cfg.seed,
        });
    }

    let summary = run_campaign(&cfg)?;
    for e in &summary.errors {
        eprintln!("trial {} failed: {}", e.trial, e.message);
    }
    let mut w = output(args.out.as_deref())?;
    write_trials_csv(&summary, &mut w)?;
    w.flush()?;
    drop(w);
    if args.out.is_some() {
        let json = JsonCampaign {
            trials: summary.records.len(),
            failed_trials: summary.errors.len(),
            normalized_mse: Float(summary.normalized_mse),
            normalized_crb: Float(summary.normalized_crb),
            p_fa: Float(summary.p_fa),
            p_miss: Float(summary.p_miss),
            model_orders: summary.model_orders.clone(),
        };
        let mut out = io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &json)?;
        writeln!(out)?;
    }
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let rows = bounds_table(args.signal_len, args.snr_db_min, args.snr_db_max, args.step)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["snr_db", "crb", "zzb"])?;
    for r in rows {
        w.write_record([fmt_float(r.snr_db), fmt_float(r.crb), fmt_float(r.zzb)])?;
    }
    w.flush()?;
    Ok(())
}

fn roc(args: RocArgs) -> Result<()> {
    let snr = 10f64.powf(args.snr_db / 10.0);
    let points = roc_curve(snr, args.signal_len, args.sigma2, &args.pfa_list)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["pfa_nominal", "tau", "pmiss_model"])?;
    for p in points {
        w.write_record([
            fmt_float(p.pfa_nominal),
            fmt_float(p.threshold),
            fmt_float(p.pmiss_model),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Simulate(args) => simulate(args),
        Command::Bounds(args) => bounds(args),
        Command::Roc(args) => roc(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
