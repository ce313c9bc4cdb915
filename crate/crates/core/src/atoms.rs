//! Atom manifolds and the GLRT cost evaluated on them.
//!
//! An [`AtomProvider`] yields the candidate signal `s(ω)` for any frequency,
//! its first two frequency derivatives, and a fast evaluation of the GLRT
//! cost `|⟨y, s(ω)⟩|² / ‖s(ω)‖²` on the oversampled grid
//! `Ω = {2πk/(γN) : k = 0..γN}`. The plain sinusoid manifold is
//! [`FourierAtoms`]; the compressive manifold lives in
//! [`crate::compressive`].

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{check_dim, invalid, Result};
use crate::signal::{inner, norm_sq, phasors, ComplexSignal, Frequency, ParameterSet};

/// An atom together with its first and second frequency derivatives.
#[derive(Clone, Debug)]
pub struct AtomJet {
    pub value: Vec<Complex64>,
    pub first: Vec<Complex64>,
    pub second: Vec<Complex64>,
}

impl AtomJet {
    /// `‖s‖²` and its first two frequency derivatives.
    pub fn norm_sq_derivs(&self) -> (f64, f64, f64) {
        let nu = norm_sq(&self.value);
        let d1 = 2.0 * inner(&self.first, &self.value).re;
        let d2 = 2.0 * (inner(&self.second, &self.value).re + norm_sq(&self.first));
        (nu, d1, d2)
    }
}

pub trait AtomProvider: Send + Sync {
    /// Length of an atom (and of any measurement it explains).
    fn dim(&self) -> usize;

    /// Number of uniform time samples `N`; fixes the DFT grid.
    fn signal_len(&self) -> usize;

    fn value(&self, freq: Frequency) -> Vec<Complex64>;

    fn jet(&self, freq: Frequency) -> AtomJet;

    /// GLRT cost on the `γN`-point grid. Callers guarantee `meas.len() == dim()`
    /// and `oversampling >= 1`; use [`glrt_grid`] for the checked entry point.
    fn grid_glrt(&self, meas: &[Complex64], oversampling: usize) -> Vec<f64>;

    fn first_deriv(&self, freq: Frequency) -> Vec<Complex64> {
        self.jet(freq).first
    }

    fn second_deriv(&self, freq: Frequency) -> Vec<Complex64> {
        self.jet(freq).second
    }

    fn atom_norm_sq(&self, freq: Frequency) -> f64 {
        norm_sq(&self.value(freq))
    }

    fn atom_norm_sq_derivs(&self, freq: Frequency) -> (f64, f64, f64) {
        self.jet(freq).norm_sq_derivs()
    }

    /// Norm of the measured sinusoid before any normalisation, so that a tone
    /// `g·x(ω)` appears as `g·unnormalised_norm(ω)·value(ω)`.
    fn unnormalised_norm(&self, _freq: Frequency) -> f64 {
        1.0
    }
}

type PlanMap = HashMap<(usize, bool), Arc<dyn Fft<f64>>>;

/// Shared cache of FFT plans keyed by transform length and direction.
#[derive(Default)]
pub(crate) struct FftCache {
    plans: RwLock<PlanMap>,
}

impl FftCache {
    pub(crate) fn plan(&self, len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
        let key = (len, direction == FftDirection::Forward);
        if let Some(p) = self.plans.read().unwrap().get(&key) {
            return Arc::clone(p);
        }
        let plan = FftPlanner::new().plan_fft(len, direction);
        self.plans
            .write()
            .unwrap()
            .entry(key)
            .or_insert(plan)
            .clone()
    }

    /// Zero-pad `input` to `len` and transform in place.
    pub(crate) fn padded(
        &self,
        input: &[Complex64],
        len: usize,
        direction: FftDirection,
    ) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); len];
        buf[..input.len()].copy_from_slice(input);
        self.plan(len, direction).process(&mut buf);
        buf
    }
}

impl std::fmt::Debug for FftCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftCache").finish_non_exhaustive()
    }
}

/// The manifold of unit-norm sinusoids `x(ω) = [e^{jnω}]/√N`.
#[derive(Debug)]
pub struct FourierAtoms {
    dim: usize,
    fft: FftCache,
}

impl FourierAtoms {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(invalid(format!(
                "atom length must be at least 2, got {dim}"
            )));
        }
        Ok(Self {
            dim,
            fft: FftCache::default(),
        })
    }
}

impl AtomProvider for FourierAtoms {
    fn dim(&self) -> usize {
        self.dim
    }

    fn signal_len(&self) -> usize {
        self.dim
    }

    fn value(&self, freq: Frequency) -> Vec<Complex64> {
        phasors(freq.value(), self.dim)
    }

    fn jet(&self, freq: Frequency) -> AtomJet {
        let value = phasors(freq.value(), self.dim);
        let j = Complex64::i();
        let first = value
            .iter()
            .enumerate()
            .map(|(k, v)| j * k as f64 * v)
            .collect();
        let second = value
            .iter()
            .enumerate()
            .map(|(k, v)| -((k * k) as f64) * v)
            .collect();
        AtomJet {
            value,
            first,
            second,
        }
    }

    fn atom_norm_sq(&self, _freq: Frequency) -> f64 {
        1.0
    }

    fn grid_glrt(&self, meas: &[Complex64], oversampling: usize) -> Vec<f64> {
        let len = oversampling * self.dim;
        let scale = 1.0 / self.dim as f64;
        self.fft
            .padded(meas, len, FftDirection::Forward)
            .iter()
            .map(|z| z.norm_sqr() * scale)
            .collect()
    }
}

/// `|⟨y, s(ω)⟩|² / ‖s(ω)‖²`.
pub fn glrt(meas: &[Complex64], provider: &dyn AtomProvider, freq: Frequency) -> Result<f64> {
    check_dim(provider.dim(), meas.len())?;
    let atom = provider.value(freq);
    Ok(glrt_with_atom(meas, &atom))
}

pub(crate) fn glrt_with_atom(meas: &[Complex64], atom: &[Complex64]) -> f64 {
    let nu = norm_sq(atom);
    if nu == 0.0 {
        return 0.0;
    }
    inner(meas, atom).norm_sqr() / nu
}

/// GLRT cost on every node of the `γN`-point grid.
pub fn glrt_grid(
    meas: &[Complex64],
    provider: &dyn AtomProvider,
    oversampling: usize,
) -> Result<Vec<f64>> {
    check_dim(provider.dim(), meas.len())?;
    if oversampling == 0 {
        return Err(invalid("oversampling factor must be at least 1"));
    }
    Ok(provider.grid_glrt(meas, oversampling))
}

/// `Σ g_l s(ω_l)`.
pub fn synthesize(params: &ParameterSet, provider: &dyn AtomProvider) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); provider.dim()];
    for p in params {
        for (o, atom) in out.iter_mut().zip(provider.value(p.freq)) {
            *o += p.gain * atom;
        }
    }
    out
}

/// `y − Σ g_l s(ω_l)`.
pub fn residual(
    meas: &ComplexSignal,
    params: &ParameterSet,
    provider: &dyn AtomProvider,
) -> Result<ComplexSignal> {
    check_dim(provider.dim(), meas.len())?;
    let model = synthesize(params, provider);
    Ok(ComplexSignal::from_vec_unchecked(
        meas.iter().zip(&model).map(|(a, b)| a - b).collect(),
    ))
}
