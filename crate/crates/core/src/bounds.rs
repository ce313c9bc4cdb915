//! Cramér-Rao and Ziv-Zakai bounds on frequency estimation error.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::atoms::AtomProvider;
use crate::error::{invalid, NompError, Result};
use crate::signal::ParameterSet;
use crate::special::{gaussian_q, integrate};

/// Fisher matrices with a larger eigenvalue spread are treated as singular.
pub const MAX_FISHER_CONDITION: f64 = 1e12;

/// Single-tone frequency CRB `6/(snr·(N²−1))` in rad².
pub fn crb_single(snr: f64, dim: usize) -> f64 {
    let nf = dim as f64;
    6.0 / (snr * (nf * nf - 1.0))
}

/// Magnitude of the normalised Dirichlet kernel `sin(Nh/2)/(N sin(h/2))`.
fn dirichlet_abs(h: f64, dim: f64) -> f64 {
    let den = dim * (h / 2.0).sin();
    if den == 0.0 {
        1.0
    } else {
        ((dim * h / 2.0).sin() / den).abs().min(1.0)
    }
}

/// Single-tone Ziv-Zakai bound in rad², by adaptive quadrature of
/// `∫₀^π Q(√(snr·(1 − |D(h)|)))·h dh`, split at the kernel nulls `2πk/N`.
pub fn zzb_single(snr: f64, dim: usize) -> Result<f64> {
    if !(snr >= 0.0 && snr.is_finite()) {
        return Err(invalid(format!("SNR must be non-negative, got {snr}")));
    }
    if dim < 2 {
        return Err(invalid("signal length must be at least 2"));
    }
    let nf = dim as f64;
    let pi = std::f64::consts::PI;
    let mut breaks: Vec<f64> = (0..)
        .map(|k| std::f64::consts::TAU * k as f64 / nf)
        .take_while(|&h| h < pi)
        .collect();
    breaks.push(pi);
    let tol = 1e-8f64.min(1e-6 * crb_single(snr, dim));
    integrate(
        |h| gaussian_q((snr * (1.0 - dirichlet_abs(h, nf))).max(0.0).sqrt()) * h,
        &breaks,
        tol,
    )
}

/// Fisher information for `(|g_l|, ∠g_l, ω_l)` per sinusoid, in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct FisherMatrix {
    pub matrix: DMatrix<f64>,
    pub sigma_sq: f64,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Ratio of largest to smallest eigenvalue; infinite if not positive definite.
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// Partial derivatives of the noiseless measurement, three columns per sinusoid.
pub(crate) fn fisher_partials(
    truth: &ParameterSet,
    provider: &dyn AtomProvider,
) -> Result<Vec<Vec<Complex64>>> {
    let j = Complex64::i();
    let mut cols = Vec::with_capacity(3 * truth.len());
    for (l, p) in truth.iter().enumerate() {
        if p.gain.norm() == 0.0 {
            return Err(NompError::ZeroGain(l));
        }
        let jet = provider.jet(p.freq);
        let unit = Complex64::from_polar(1.0, p.gain.arg());
        cols.push(jet.value.iter().map(|atom| unit * atom).collect());
        cols.push(jet.value.iter().map(|atom| j * p.gain * atom).collect());
        cols.push(jet.first.iter().map(|atom| p.gain * atom).collect());
    }
    Ok(cols)
}

/// `F = (2/σ²)·Re{Dᴴ D}` with `D` the measurement partials.
pub fn fisher_matrix(
    truth: &ParameterSet,
    sigma_sq: f64,
    provider: &dyn AtomProvider,
) -> Result<FisherMatrix> {
    if truth.is_empty() {
        return Err(invalid("Fisher matrix needs at least one sinusoid"));
    }
    if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
        return Err(invalid(format!(
            "noise variance must be positive, got {sigma_sq}"
        )));
    }
    let cols = fisher_partials(truth, provider)?;
    let dim = cols.len();
    let mut m = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in a..dim {
            let v = 2.0 / sigma_sq * crate::signal::inner(&cols[b], &cols[a]).re;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    Ok(FisherMatrix {
        matrix: m,
        sigma_sq,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrequencyCrb {
    /// Per-sinusoid frequency bound in rad², in the order of the truth set.
    pub values: Vec<f64>,
    /// Set when the Fisher matrix was too close to singular; values are then infinite.
    pub ill_conditioned: bool,
}

/// Frequency entries of the inverse Fisher matrix.
pub fn crb_frequencies(
    truth: &ParameterSet,
    sigma_sq: f64,
    provider: &dyn AtomProvider,
) -> Result<FrequencyCrb> {
    let fim = fisher_matrix(truth, sigma_sq, provider)?;
    let k = truth.len();
    let singular = FrequencyCrb {
        values: vec![f64::INFINITY; k],
        ill_conditioned: true,
    };
    if !(fim.condition_number() < MAX_FISHER_CONDITION) {
        return Ok(singular);
    }
    let Some(chol) = fim.matrix.clone().cholesky() else {
        return Ok(singular);
    };
    let inv = chol.inverse();
    Ok(FrequencyCrb {
        values: (0..k).map(|l| inv[(3 * l + 2, 3 * l + 2)]).collect(),
        ill_conditioned: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundsRow {
    pub snr_db: f64,
    pub crb: f64,
    pub zzb: f64,
    pub signal_len: usize,
}

/// CRB and ZZB over an SNR sweep in dB, inclusive of both ends.
pub fn bounds_table(
    dim: usize,
    snr_db_min: f64,
    snr_db_max: f64,
    step: f64,
) -> Result<Vec<BoundsRow>> {
    if !(step > 0.0) || !(snr_db_max >= snr_db_min) {
        return Err(invalid("SNR sweep needs a positive step and min ≤ max"));
    }
    let count = ((snr_db_max - snr_db_min) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|i| {
            let snr_db = snr_db_min + i as f64 * step;
            let snr = 10f64.powf(snr_db / 10.0);
            Ok(BoundsRow {
                snr_db,
                crb: crb_single(snr, dim),
                zzb: zzb_single(snr, dim)?,
                signal_len: dim,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atoms::{synthesize, FourierAtoms};
    use crate::signal::{dft_spacing, SinusoidParam};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{PI, TAU};

    fn db(level: f64) -> f64 {
        10f64.powf(level / 10.0)
    }

    #[test]
    fn crb_examples() {
        assert!((crb_single(db(25.0), 256) - 2.895e-7).abs() < 1e-10);
        assert!((crb_single(6.0, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert!((crb_single(2.0 * 7.0, 64) - crb_single(7.0, 64) / 2.0).abs() < 1e-18);
    }

    #[test]
    fn zzb_zero_snr() {
        assert!((zzb_single(0.0, 256).unwrap() - PI * PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn zzb_against_crb() {
        let hi = zzb_single(db(25.0), 256).unwrap() / crb_single(db(25.0), 256);
        assert!(hi < 1.5, "{hi}");
        let lo = zzb_single(db(5.0), 256).unwrap() / crb_single(db(5.0), 256);
        assert!(lo > 10.0, "{lo}");
    }

    #[test]
    fn zzb_monotone_in_snr() {
        let mut prev = f64::INFINITY;
        for i in 0..=40 {
            let z = zzb_single(db(i as f64), 256).unwrap();
            assert!(z < prev, "{i} dB");
            prev = z;
        }
    }

    #[test]
    fn zzb_matches_dense_midpoint_rule() {
        let dim = 32;
        let snr = db(12.0);
        let cells = 400_000;
        let h = PI / cells as f64;
        let mut sum = 0.0;
        for i in 0..cells {
            let offset = (i as f64 + 0.5) * h;
            let d = ((dim as f64 * offset / 2.0).sin() / (dim as f64 * (offset / 2.0).sin())).abs();
            sum += gaussian_q((snr * (1.0 - d)).sqrt()) * offset;
        }
        let z = zzb_single(snr, dim).unwrap();
        assert!((z - sum * h).abs() < 1e-8, "{z} vs {}", sum * h);
    }

    #[test]
    fn single_tone_fisher_gives_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for dim in [16, 64, 256] {
            let p = FourierAtoms::new(dim).unwrap();
            for _ in 0..3 {
                let amp =
                    Complex64::from_polar(rng.random_range(0.2..5.0), rng.random_range(0.0..TAU));
                let truth = ParameterSet::from_params(vec![SinusoidParam::new(
                    amp,
                    rng.random_range(0.0..TAU),
                )])
                .unwrap();
                let sigma_sq = 0.7;
                let crb = crb_frequencies(&truth, sigma_sq, &p).unwrap();
                let want = crb_single(amp.norm_sqr() / sigma_sq, dim);
                assert!(!crb.ill_conditioned);
                assert!(
                    (crb.values[0] / want - 1.0).abs() < 1e-9,
                    "{} vs {want}",
                    crb.values[0]
                );
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let dim = 32;
        let p = FourierAtoms::new(dim).unwrap();
        let truth = ParameterSet::from_params(vec![
            SinusoidParam::new(Complex64::from_polar(1.3, 0.4), 0.9),
            SinusoidParam::new(Complex64::from_polar(0.6, -2.0), 2.2),
        ])
        .unwrap();
        let cols = fisher_partials(&truth, &p).unwrap();
        let h = 1e-6;
        for (l, q) in truth.iter().enumerate() {
            for k in 0..3 {
                let shifted = |sgn: f64| {
                    let mut theta = [q.gain.norm(), q.gain.arg(), q.freq.value()];
                    theta[k] += sgn * h;
                    let mut v: Vec<SinusoidParam> = truth.as_slice().to_vec();
                    v[l] = SinusoidParam::new(Complex64::from_polar(theta[0], theta[1]), theta[2]);
                    synthesize(&ParameterSet::from_params(v).unwrap(), &p)
                };
                let (a, b) = (shifted(1.0), shifted(-1.0));
                for i in 0..dim {
                    let fd = (a[i] - b[i]) / (2.0 * h);
                    assert!(
                        (fd - cols[3 * l + k][i]).norm() < 1e-5,
                        "tone {l} param {k} sample {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn fisher_symmetric_psd() {
        let dim = 64;
        let p = FourierAtoms::new(dim).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.random_range(1..5);
            let truth = ParameterSet::from_params(
                (0..k)
                    .map(|_| {
                        SinusoidParam::new(
                            Complex64::from_polar(
                                rng.random_range(0.1..3.0),
                                rng.random_range(0.0..TAU),
                            ),
                            rng.random_range(0.0..TAU),
                        )
                    })
                    .collect(),
            )
            .unwrap();
            let f = fisher_matrix(&truth, 1.0, &p).unwrap();
            assert_eq!(f.matrix, f.matrix.transpose());
            let ev = f.eigenvalues();
            assert!(ev[0] >= -1e-8 * ev[ev.len() - 1]);
        }
    }

    #[test]
    fn distant_tones_decouple() {
        let dim = 256;
        let p = FourierAtoms::new(dim).unwrap();
        let g1 = Complex64::new(2.0, 0.0);
        let g2 = Complex64::new(0.0, 3.0);
        let truth = ParameterSet::from_params(vec![
            SinusoidParam::new(g1, 0.3),
            SinusoidParam::new(g2, 0.3 + PI),
        ])
        .unwrap();
        let crb = crb_frequencies(&truth, 1.0, &p).unwrap();
        assert!((crb.values[0] / crb_single(4.0, dim) - 1.0).abs() < 0.01);
        assert!((crb.values[1] / crb_single(9.0, dim) - 1.0).abs() < 0.01);
    }

    #[test]
    fn close_tones_inflate_bound() {
        let dim = 256;
        let p = FourierAtoms::new(dim).unwrap();
        let amp = Complex64::new(1.0, 0.0);
        let truth = ParameterSet::from_params(vec![
            SinusoidParam::new(amp, 1.0),
            SinusoidParam::new(amp, 1.0 + 0.5 * dft_spacing(dim)),
        ])
        .unwrap();
        let crb = crb_frequencies(&truth, 1.0, &p).unwrap();
        for v in crb.values {
            assert!(v > crb_single(1.0, dim));
        }
    }

    #[test]
    fn permutation_permutes_output() {
        let dim = 64;
        let p = FourierAtoms::new(dim).unwrap();
        let a = SinusoidParam::new(Complex64::new(1.0, 0.5), 0.5);
        let b = SinusoidParam::new(Complex64::new(-0.4, 0.2), 0.62);
        let c = SinusoidParam::new(Complex64::new(0.0, 2.0), 3.0);
        let fwd =
            crb_frequencies(&ParameterSet::from_params(vec![a, b, c]).unwrap(), 1.0, &p).unwrap();
        let rev =
            crb_frequencies(&ParameterSet::from_params(vec![c, a, b]).unwrap(), 1.0, &p).unwrap();
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            assert!((fwd.values[i] / rev.values[j] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_geometry_reported() {
        let dim = 64;
        let p = FourierAtoms::new(dim).unwrap();
        let amp = Complex64::new(1.0, 0.0);
        let truth = ParameterSet::from_params(vec![
            SinusoidParam::new(amp, 1.0),
            SinusoidParam::new(amp, 1.0 + 1e-9),
        ])
        .unwrap();
        let crb = crb_frequencies(&truth, 1.0, &p).unwrap();
        assert!(crb.ill_conditioned);
        assert!(crb.values.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn zero_gain_rejected() {
        let p = FourierAtoms::new(16).unwrap();
        let truth = ParameterSet::from_params(vec![
            SinusoidParam::new(Complex64::new(1.0, 0.0), 1.0),
            SinusoidParam::new(Complex64::new(0.0, 0.0), 2.0),
        ])
        .unwrap();
        assert!(matches!(
            fisher_matrix(&truth, 1.0, &p),
            Err(NompError::ZeroGain(1))
        ));
        assert!(fisher_matrix(&ParameterSet::new(), 1.0, &p).is_err());
    }

    #[test]
    fn bounds_table_rows() {
        let rows = bounds_table(256, 5.0, 35.0, 1.0).unwrap();
        assert_eq!(rows.len(), 31);
        assert_eq!(rows[30].snr_db, 35.0);
        assert!(bounds_table(256, 5.0, 1.0, 1.0).is_err());
        assert!(bounds_table(256, 5.0, 6.0, 0.0).is_err());
    }
}
