//! Random measurement matrices and the manifold of compressed, renormalised
//! sinusoids `s(ω) = A x(ω) / ‖A x(ω)‖`.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::atoms::{AtomJet, AtomProvider, FftCache};
use crate::error::{invalid, NompError, Result};
use crate::signal::{norm_sq, phasors, Frequency};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixDistribution {
    /// Uniform on `{±1/√N}`.
    PmOne,
    /// Uniform on `{±1/√N, ±j/√N}`.
    Qpsk,
    /// Circular complex Gaussian with variance `1/N`.
    Gaussian,
}

impl std::str::FromStr for MatrixDistribution {
    type Err = NompError;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "pm_one" | "pm-one" => Ok(Self::PmOne),
            "qpsk" => Ok(Self::Qpsk),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(invalid(format!("unknown matrix distribution {other:?}"))),
        }
    }
}

/// Dense `M × N` complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
    distribution: Option<MatrixDistribution>,
    seed: Option<u64>,
}

impl MeasurementMatrix {
    /// Wrap explicit entries (row-major). Requires `1 ≤ rows ≤ cols`.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || rows > cols {
            return Err(invalid(format!(
                "measurement matrix must have 1 ≤ M ≤ N, got {rows}×{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(NompError::DimensionMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if entries
            .iter()
            .any(|c| !c.re.is_finite() || !c.im.is_finite())
        {
            return Err(invalid("measurement matrix entries must be finite"));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            distribution: None,
            seed: None,
        })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut e = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            e[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self::from_entries(dim, dim, e)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn distribution(&self) -> Option<MatrixDistribution> {
        self.distribution
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `A x`.
    pub fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(input).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Aᴴ y`.
    pub fn apply_adjoint(&self, meas: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, yi) in meas.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * yi;
            }
        }
        out
    }
}

/// Draw an `M × N` matrix with i.i.d. entries of variance `1/N`.
pub fn gen_matrix(
    rows: usize,
    cols: usize,
    dist: MatrixDistribution,
    seed: u64,
) -> Result<MeasurementMatrix> {
    if rows == 0 || rows > cols {
        return Err(invalid(format!(
            "measurement matrix must have 1 ≤ M ≤ N, got {rows}×{cols}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (cols as f64).sqrt();
    let count = rows * cols;
    let entries: Vec<Complex64> = match dist {
        MatrixDistribution::PmOne => (0..count)
            .map(|_| Complex64::new(if rng.random::<bool>() { scale } else { -scale }, 0.0))
            .collect(),
        MatrixDistribution::Qpsk => (0..count)
            .map(|_| match rng.random_range(0..4u8) {
                0 => Complex64::new(scale, 0.0),
                1 => Complex64::new(-scale, 0.0),
                2 => Complex64::new(0.0, scale),
                _ => Complex64::new(0.0, -scale),
            })
            .collect(),
        MatrixDistribution::Gaussian => {
            let d = Normal::new(0.0, scale / std::f64::consts::SQRT_2).expect("finite scale");
            (0..count)
                .map(|_| Complex64::new(d.sample(&mut rng), d.sample(&mut rng)))
                .collect()
        }
    };
    Ok(MeasurementMatrix {
        rows,
        cols,
        entries,
        distribution: Some(dist),
        seed: Some(seed),
    })
}

/// Oversampling factors whose grid norms are computed at construction.
const EAGER_GAMMAS: [usize; 2] = [1, 4];

/// Atoms `A x(ω) / ‖A x(ω)‖` for a fixed measurement matrix.
#[derive(Debug)]
pub struct CompressiveAtoms {
    matrix: MeasurementMatrix,
    fft: FftCache,
    grid_norms: RwLock<HashMap<usize, Arc<Vec<f64>>>>,
}

impl CompressiveAtoms {
    pub fn new(matrix: MeasurementMatrix) -> Result<Self> {
        if matrix.rows() < 2 {
            return Err(invalid("compressive atoms need at least 2 measurements"));
        }
        let provider = Self {
            matrix,
            fft: FftCache::default(),
            grid_norms: RwLock::new(HashMap::new()),
        };
        for oversampling in EAGER_GAMMAS {
            let norms = provider.grid_norms(oversampling);
            if let Some(k) = norms.iter().position(|&v| !(v > 0.0)) {
                let freq = Frequency::grid_node(k, norms.len());
                return Err(NompError::DegenerateAtom(freq.value()));
            }
        }
        Ok(provider)
    }

    pub fn matrix(&self) -> &MeasurementMatrix {
        &self.matrix
    }

    /// `‖A x(ω_k)‖²` on the `γN`-point grid, from one inverse transform per row.
    pub fn grid_norms(&self, oversampling: usize) -> Arc<Vec<f64>> {
        if let Some(v) = self.grid_norms.read().unwrap().get(&oversampling) {
            return Arc::clone(v);
        }
        let dim = self.matrix.cols();
        let len = oversampling * dim;
        let mut acc = vec![0.0; len];
        for i in 0..self.matrix.rows() {
            let spec = self
                .fft
                .padded(self.matrix.row(i), len, FftDirection::Inverse);
            for (a, z) in acc.iter_mut().zip(&spec) {
                *a += z.norm_sqr();
            }
        }
        let scale = 1.0 / dim as f64;
        acc.iter_mut().for_each(|a| *a *= scale);
        let acc = Arc::new(acc);
        self.grid_norms
            .write()
            .unwrap()
            .entry(oversampling)
            .or_insert(acc)
            .clone()
    }

    /// `A x(ω)` before normalisation.
    pub fn raw_atom(&self, freq: Frequency) -> Vec<Complex64> {
        self.matrix
            .apply(&phasors(freq.value(), self.matrix.cols()))
    }

    pub fn raw_norm(&self, freq: Frequency) -> f64 {
        norm_sq(&self.raw_atom(freq)).sqrt()
    }
}

impl AtomProvider for CompressiveAtoms {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn signal_len(&self) -> usize {
        self.matrix.cols()
    }

    /// Zero vector if `A x(ω)` vanishes.
    fn value(&self, freq: Frequency) -> Vec<Complex64> {
        let u = self.raw_atom(freq);
        let v = norm_sq(&u).sqrt();
        if v == 0.0 {
            return u;
        }
        u.into_iter().map(|z| z / v).collect()
    }

    fn jet(&self, freq: Frequency) -> AtomJet {
        let dim = self.matrix.cols();
        let base = phasors(freq.value(), dim);
        let j = Complex64::i();
        let dx: Vec<Complex64> = base
            .iter()
            .enumerate()
            .map(|(k, z)| j * k as f64 * z)
            .collect();
        let ddx: Vec<Complex64> = base
            .iter()
            .enumerate()
            .map(|(k, z)| -((k * k) as f64) * z)
            .collect();
        let u = self.matrix.apply(&base);
        let u1 = self.matrix.apply(&dx);
        let u2 = self.matrix.apply(&ddx);

        let v = norm_sq(&u).sqrt();
        if v == 0.0 {
            let zero = vec![Complex64::new(0.0, 0.0); u.len()];
            return AtomJet {
                value: zero.clone(),
                first: zero.clone(),
                second: zero,
            };
        }
        let v1 = crate::signal::inner(&u1, &u).re / v;
        let v2 = (norm_sq(&u1) + crate::signal::inner(&u2, &u).re - v1 * v1) / v;
        let (iv, iv2, iv3) = (1.0 / v, 1.0 / (v * v), 1.0 / (v * v * v));

        let value = u.iter().map(|z| z * iv).collect();
        let first = u
            .iter()
            .zip(&u1)
            .map(|(z, z1)| z1 * iv - z * (v1 * iv2))
            .collect();
        let second = u
            .iter()
            .zip(&u1)
            .zip(&u2)
            .map(|((z, z1), z2)| {
                z2 * iv - z1 * (2.0 * v1 * iv2) - z * (v2 * iv2) + z * (2.0 * v1 * v1 * iv3)
            })
            .collect();
        AtomJet {
            value,
            first,
            second,
        }
    }

    fn unnormalised_norm(&self, freq: Frequency) -> f64 {
        self.raw_norm(freq)
    }

    fn atom_norm_sq(&self, freq: Frequency) -> f64 {
        if self.raw_norm(freq) == 0.0 {
            0.0
        } else {
            1.0
        }
    }

    fn grid_glrt(&self, meas: &[Complex64], oversampling: usize) -> Vec<f64> {
        let norms = self.grid_norms(oversampling);
        let dim = self.matrix.cols();
        let back = self.matrix.apply_adjoint(meas);
        let scale = 1.0 / dim as f64;
        self.fft
            .padded(&back, oversampling * dim, FftDirection::Forward)
            .iter()
            .zip(norms.iter())
            .map(|(z, &nu)| {
                if nu > 0.0 {
                    z.norm_sqr() * scale / nu
                } else {
                    0.0
                }
            })
            .collect()
    }
}
