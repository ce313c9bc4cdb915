//! Signal containers, frequencies on the circle and sinusoid parameters.

use std::f64::consts::{PI, TAU};
use std::ops::Deref;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, NompError, Result};

/// A fixed-length vector of complex samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct ComplexSignal(Vec<Complex64>);

impl ComplexSignal {
    pub const MIN_LEN: usize = 2;

    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() < Self::MIN_LEN {
            return Err(invalid(format!(
                "signal needs at least {} samples, got {}",
                Self::MIN_LEN,
                samples.len()
            )));
        }
        if samples
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(invalid("signal contains non-finite samples"));
        }
        Ok(Self(samples))
    }

    pub fn zeros(len: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len])
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn energy(&self) -> f64 {
        norm_sq(&self.0)
    }

    /// Elementwise `self + scale * other`.
    pub fn add_scaled(&self, scale: Complex64, other: &[Complex64]) -> Result<Self> {
        crate::error::check_dim(self.len(), other.len())?;
        Ok(Self(
            self.0
                .iter()
                .zip(other)
                .map(|(a, b)| a + scale * b)
                .collect(),
        ))
    }

    pub(crate) fn from_vec_unchecked(samples: Vec<Complex64>) -> Self {
        debug_assert!(samples.len() >= Self::MIN_LEN);
        Self(samples)
    }
}

impl Deref for ComplexSignal {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.0
    }
}

impl TryFrom<Vec<Complex64>> for ComplexSignal {
    type Error = NompError;

    fn try_from(v: Vec<Complex64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ComplexSignal> for Vec<Complex64> {
    fn from(value: ComplexSignal) -> Self {
        value.0
    }
}

/// Angular frequency in radians/sample, kept in `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(from = "f64", into = "f64")]
pub struct Frequency(f64);

impl Frequency {
    pub fn new(omega: f64) -> Self {
        let mut w = omega.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative inputs
        if w >= TAU {
            w = 0.0;
        }
        Self(w)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Grid node `index` of the `γN`-point oversampled grid.
    pub fn grid_node(index: usize, grid_len: usize) -> Self {
        Self::new(TAU * index as f64 / grid_len as f64)
    }
}

impl From<f64> for Frequency {
    fn from(w: f64) -> Self {
        Self::new(w)
    }
}

impl From<Frequency> for f64 {
    fn from(f: Frequency) -> Self {
        f.0
    }
}

/// Circular distance between two frequencies, in `[0, π]`.
pub fn wrap_dist(a: Frequency, b: Frequency) -> f64 {
    let d = (a.0 - b.0).abs();
    let d = if d > PI { TAU - d } else { d };
    d.max(0.0)
}

/// DFT grid spacing `2π/N`.
pub fn dft_spacing(dim: usize) -> f64 {
    TAU / dim as f64
}

/// One (complex gain, frequency) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinusoidParam {
    pub gain: Complex64,
    pub freq: Frequency,
}

impl SinusoidParam {
    pub fn new(gain: Complex64, freq: impl Into<Frequency>) -> Self {
        Self {
            gain,
            freq: freq.into(),
        }
    }
}

/// Ordered set of sinusoid estimates. Exact duplicate frequencies are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<SinusoidParam>", into = "Vec<SinusoidParam>")]
pub struct ParameterSet(Vec<SinusoidParam>);

impl ParameterSet {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn from_params(params: Vec<SinusoidParam>) -> Result<Self> {
        let mut set = Self(Vec::with_capacity(params.len()));
        for p in params {
            set.push(p)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, p: SinusoidParam) -> Result<()> {
        if !p.gain.re.is_finite() || !p.gain.im.is_finite() {
            return Err(invalid("sinusoid gain must be finite"));
        }
        if self.0.iter().any(|q| wrap_dist(q.freq, p.freq) == 0.0) {
            return Err(NompError::DuplicateFrequency(p.freq.value()));
        }
        self.0.push(p);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SinusoidParam> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[SinusoidParam] {
        &self.0
    }

    pub fn frequencies(&self) -> Vec<Frequency> {
        self.0.iter().map(|p| p.freq).collect()
    }

    pub(crate) fn from_vec_unchecked(params: Vec<SinusoidParam>) -> Self {
        Self(params)
    }
}

impl TryFrom<Vec<SinusoidParam>> for ParameterSet {
    type Error = NompError;

    fn try_from(v: Vec<SinusoidParam>) -> Result<Self> {
        Self::from_params(v)
    }
}

impl From<ParameterSet> for Vec<SinusoidParam> {
    fn from(value: ParameterSet) -> Self {
        value.0
    }
}

impl<'a> IntoIterator for &'a ParameterSet {
    type Item = &'a SinusoidParam;
    type IntoIter = std::slice::Iter<'a, SinusoidParam>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

fn check_len(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(invalid(format!(
            "atom length must be at least 2, got {dim}"
        )))
    } else {
        Ok(())
    }
}

/// `e^{jnω}/√N` for `n = 0..N`.
pub(crate) fn phasors(omega: f64, dim: usize) -> Vec<Complex64> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..dim)
        .map(|k| Complex64::from_polar(scale, omega * k as f64))
        .collect()
}

/// The unit-norm sinusoid `x(ω)`, entry `n` equal to `e^{jnω}/√N`.
pub fn fourier_atom(freq: Frequency, dim: usize) -> Result<ComplexSignal> {
    check_len(dim)?;
    Ok(ComplexSignal(phasors(freq.value(), dim)))
}

/// First and second frequency derivatives of [`fourier_atom`].
pub fn atom_derivs(freq: Frequency, dim: usize) -> Result<(ComplexSignal, ComplexSignal)> {
    check_len(dim)?;
    let base = phasors(freq.value(), dim);
    let j = Complex64::i();
    let first = base
        .iter()
        .enumerate()
        .map(|(k, v)| j * k as f64 * v)
        .collect();
    let second = base
        .iter()
        .enumerate()
        .map(|(k, v)| -((k * k) as f64) * v)
        .collect();
    Ok((ComplexSignal(first), ComplexSignal(second)))
}

/// `⟨a, b⟩ = b^H a`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(u, v)| u * v.conj()).sum()
}

pub fn norm_sq(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn frequency_is_canonical() {
        assert_eq!(Frequency::new(TAU).value(), 0.0);
        assert!((Frequency::new(-0.5).value() - (TAU - 0.5)).abs() < EPS);
        assert!(Frequency::new(-1e-18).value() < TAU);
        assert!((Frequency::new(7.0 * PI).value() - PI).abs() < 1e-12);
    }

    #[test]
    fn wrap_distance_examples() {
        let f = Frequency::new;
        assert_eq!(wrap_dist(f(0.1), f(0.1)), 0.0);
        assert!((wrap_dist(f(0.05), f(TAU - 0.05)) - 0.1).abs() < EPS);
        assert!((wrap_dist(f(0.0), f(PI)) - PI).abs() < EPS);
    }

    #[test]
    fn zero_frequency_atom() {
        let atom = fourier_atom(Frequency::new(0.0), 4).unwrap();
        for v in atom.iter() {
            assert!((v - Complex64::new(0.5, 0.0)).norm() < EPS);
        }
    }

    #[test]
    fn nyquist_atom_alternates() {
        let atom = fourier_atom(Frequency::new(PI), 2).unwrap();
        let r = 1.0 / 2f64.sqrt();
        assert!((atom[0] - Complex64::new(r, 0.0)).norm() < EPS);
        assert!((atom[1] - Complex64::new(-r, 0.0)).norm() < EPS);
    }

    #[test]
    fn atom_rejects_short_length() {
        assert!(fourier_atom(Frequency::new(0.3), 1).is_err());
        assert!(atom_derivs(Frequency::new(0.3), 0).is_err());
    }

    #[test]
    fn first_derivative_at_zero() {
        let (d1, _) = atom_derivs(Frequency::new(0.0), 3).unwrap();
        let step = 1.0 / 3f64.sqrt();
        let want = [0.0, step, 2.0 * step];
        for (got, w) in d1.iter().zip(want) {
            assert!((got - Complex64::new(0.0, w)).norm() < EPS);
        }
    }

    #[test]
    fn derivative_is_tangent() {
        for &w in &[0.0, 0.37, 2.9, 5.1] {
            let atom = fourier_atom(Frequency::new(w), 256).unwrap();
            let (d1, _) = atom_derivs(Frequency::new(w), 256).unwrap();
            assert!(inner(&d1, &atom).re.abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let dim = 64;
        let h = 1e-6;
        for &w in &[0.2, 1.7, 4.4] {
            let plus = fourier_atom(Frequency::new(w + h), dim).unwrap();
            let minus = fourier_atom(Frequency::new(w - h), dim).unwrap();
            let (d1, d2) = atom_derivs(Frequency::new(w), dim).unwrap();
            let (d1_plus, _) = atom_derivs(Frequency::new(w + h), dim).unwrap();
            let (d1_minus, _) = atom_derivs(Frequency::new(w - h), dim).unwrap();
            for k in 0..dim {
                let fd1 = (plus[k] - minus[k]) / (2.0 * h);
                assert!((fd1 - d1[k]).norm() < 1e-5, "first derivative entry {k}");
                let fd2 = (d1_plus[k] - d1_minus[k]) / (2.0 * h);
                assert!((fd2 - d2[k]).norm() < 1e-4 * (1.0 + d2[k].norm()));
            }
        }
    }

    #[test]
    fn parameter_set_rejects_exact_duplicates() {
        let mut p = ParameterSet::new();
        p.push(SinusoidParam::new(Complex64::new(1.0, 0.0), 0.5))
            .unwrap();
        assert!(matches!(
            p.push(SinusoidParam::new(Complex64::new(2.0, 0.0), 0.5 + TAU)),
            Err(NompError::DuplicateFrequency(_))
        ));
        p.push(SinusoidParam::new(Complex64::new(2.0, 0.0), 0.5 + 1e-9))
            .unwrap();
        assert_eq!(p.len(), 2);
    }

    #[test]
    fn short_signal_rejected() {
        assert!(ComplexSignal::new(vec![Complex64::new(1.0, 0.0)]).is_err());
        assert!(ComplexSignal::zeros(2).is_ok());
    }
}
