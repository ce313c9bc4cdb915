use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::atoms::{AtomProvider, FourierAtoms};
use crate::compressive::{gen_matrix, CompressiveAtoms, MatrixDistribution};
use crate::driver::{EstimatorConfig, StoppingRule};
use crate::error::{invalid, NompError, Result};
use crate::signal::{
    dft_spacing, wrap_dist, ComplexSignal, Frequency, ParameterSet, SinusoidParam,
};
use crate::stopping::{CfarSpec, ThresholdMode};

/// Full redraws allowed before a separation constraint is declared infeasible.
pub const MAX_REDRAWS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrLaw {
    /// Every tone at the same SNR in dB.
    Fixed(f64),
    /// Each tone's SNR in dB drawn uniformly from `[lo, hi]`.
    Uniform(f64, f64),
}

impl SnrLaw {
    fn sample_db(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            SnrLaw::Fixed(db) => db,
            SnrLaw::Uniform(lo, hi) if lo == hi => lo,
            SnrLaw::Uniform(lo, hi) => rng.random_range(lo..hi),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressiveSetup {
    pub measurements: usize,
    pub distribution: MatrixDistribution,
    /// Seed of the single matrix shared by all trials.
    pub matrix_seed: u64,
}

fn default_signal_len() -> usize {
    256
}
fn default_tones() -> usize {
    16
}
fn default_trials() -> usize {
    100
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_signal_len")]
    pub signal_len: usize,
    #[serde(default = "default_tones")]
    pub tones: usize,
    pub snr: SnrLaw,
    /// Minimum pairwise separation in DFT bins.
    pub min_sep: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub compressive: Option<CompressiveSetup>,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    /// The four standard scenarios: nominal 25 dB or U[15, 35] dB, separation
    /// 2.5 or 0.5 bins, with one or three cyclic passes. CFAR at 1% false
    /// alarm, `γ = 4`, one Newton step.
    pub fn preset(scenario: u8) -> Result<Self> {
        let (snr, min_sep, rounds) = match scenario {
            1 => (SnrLaw::Fixed(25.0), 2.5, 1),
            2 => (SnrLaw::Fixed(25.0), 0.5, 3),
            3 => (SnrLaw::Uniform(15.0, 35.0), 2.5, 1),
            4 => (SnrLaw::Uniform(15.0, 35.0), 0.5, 3),
            other => return Err(invalid(format!("scenario must be 1 to 4, got {other}"))),
        };
        let dim = default_signal_len();
        let cfar = CfarSpec::new(1.0, dim, 0.01, ThresholdMode::Exact)?;
        let mut estimator = EstimatorConfig::new(StoppingRule::Cfar(cfar));
        estimator.cyclic_rounds = rounds;
        Ok(Self {
            signal_len: dim,
            tones: default_tones(),
            snr,
            min_sep,
            trials: default_trials(),
            estimator,
            compressive: None,
            seed: 0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.signal_len < 2 {
            return Err(invalid("signal length must be at least 2"));
        }
        if self.trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        if !(self.min_sep >= 0.0 && self.min_sep.is_finite()) {
            return Err(invalid("minimum separation must be non-negative"));
        }
        if self.tones > 0
            && self.min_sep * self.tones as f64 * dft_spacing(self.signal_len)
                >= std::f64::consts::TAU
        {
            return Err(NompError::Infeasible(format!(
                "{} tones cannot be {} bins apart on a length-{} circle",
                self.tones, self.min_sep, self.signal_len
            )));
        }
        match self.snr {
            SnrLaw::Fixed(db) if db.is_finite() => {}
            SnrLaw::Uniform(lo, hi) if lo.is_finite() && hi.is_finite() && lo <= hi => {}
            _ => return Err(invalid("SNR law needs finite dB values with lo ≤ hi")),
        }
        if let StoppingRule::Cfar(spec) = self.estimator.stopping {
            if spec.signal_len != self.signal_len {
                return Err(invalid(format!(
                    "CFAR threshold is set for length {}, scenario uses {}",
                    spec.signal_len, self.signal_len
                )));
            }
        }
        if let Some(c) = self.compressive {
            if c.measurements < 2 || c.measurements > self.signal_len {
                return Err(invalid(format!(
                    "need 2 ≤ M ≤ N, got M = {}",
                    c.measurements
                )));
            }
        }
        self.estimator.validate()
    }

    /// The atom manifold trials are measured through.
    pub fn provider(&self) -> Result<Box<dyn AtomProvider>> {
        Ok(match self.compressive {
            None => Box::new(FourierAtoms::new(self.signal_len)?),
            Some(c) => Box::new(CompressiveAtoms::new(gen_matrix(
                c.measurements,
                self.signal_len,
                c.distribution,
                c.matrix_seed,
            )?)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    /// Gains and frequencies of the uncompressed sinusoids.
    pub truth: ParameterSet,
    /// The same mixture written on the provider's unit-norm atoms.
    pub effective_truth: ParameterSet,
    pub meas: ComplexSignal,
    pub sigma_sq: f64,
}

fn draw_frequencies(rng: &mut ChaCha8Rng, k: usize, min_dist: f64) -> Result<Vec<f64>> {
    for _ in 0..MAX_REDRAWS {
        let w: Vec<f64> = (0..k)
            .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
            .collect();
        let ok = (0..k).all(|i| {
            (i + 1..k).all(|j| wrap_dist(Frequency::new(w[i]), Frequency::new(w[j])) >= min_dist)
        });
        if ok {
            return Ok(w);
        }
    }
    Err(NompError::Infeasible(format!(
        "no placement of {k} tones at separation {min_dist} rad after {MAX_REDRAWS} draws"
    )))
}

/// Trial `trial` of `cfg`, measured through `provider`. Deterministic in
/// `(cfg.seed, trial)`; the noise variance is 1.
pub fn gen_scenario_with(
    cfg: &ScenarioConfig,
    provider: &dyn AtomProvider,
    trial: u64,
) -> Result<Scenario> {
    cfg.validate()?;
    if provider.signal_len() != cfg.signal_len {
        return Err(NompError::DimensionMismatch {
            expected: cfg.signal_len,
            found: provider.signal_len(),
        });
    }
    let sigma_sq = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ trial);
    let freqs = draw_frequencies(
        &mut rng,
        cfg.tones,
        cfg.min_sep * dft_spacing(cfg.signal_len),
    )?;
    let mut truth = Vec::with_capacity(cfg.tones);
    for &w in &freqs {
        let snr = 10f64.powf(cfg.snr.sample_db(&mut rng) / 10.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        truth.push(SinusoidParam::new(
            Complex64::from_polar((sigma_sq * snr).sqrt(), phase),
            w,
        ));
    }

    let dim = provider.dim();
    let noise = Normal::new(0.0, (sigma_sq / 2.0).sqrt()).expect("positive variance");
    let mut meas: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(noise.sample(&mut rng), noise.sample(&mut rng)))
        .collect();
    let mut effective = Vec::with_capacity(cfg.tones);
    for p in &truth {
        // the provider's atom is A x / ‖A x‖, so its gain absorbs ‖A x‖
        let scale = provider.unnormalised_norm(p.freq);
        let amp = p.gain * scale;
        for (yk, sk) in meas.iter_mut().zip(provider.value(p.freq)) {
            *yk += amp * sk;
        }
        effective.push(SinusoidParam {
            gain: amp,
            freq: p.freq,
        });
    }

    Ok(Scenario {
        truth: ParameterSet::from_params(truth)?,
        effective_truth: ParameterSet::from_params(effective)?,
        meas: ComplexSignal::new(meas)?,
        sigma_sq,
    })
}

/// Trial `trial` of `cfg` with a freshly built provider.
pub fn gen_scenario(cfg: &ScenarioConfig, trial: u64) -> Result<Scenario> {
    let provider = cfg.provider()?;
    gen_scenario_with(cfg, provider.as_ref(), trial)
}
