//! Discrete spectrum of relaxation frequencies (DSRF) response model.
//!
//! A wideband EMI measurement is a complex spectrum sampled on a fixed set of
//! transmit angular frequencies. A metallic object is modelled as a DC shift
//! plus a sum of first-order relaxations:
//!
//! ```text
//! H(w) = c0 + sum_k c_k / (1 + j w / zeta_k)
//! ```
//!
//! All learning code works on real vectors, so spectra are embedded as
//! `[re_1..re_N, im_1..im_N]` (see [`stack_complex`]).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::Dictionary;

/// Lowest transmit frequency of the default grid, in Hz.
pub const DEFAULT_BAND_LOW_HZ: f64 = 300.0;
/// Highest transmit frequency of the default grid, in Hz.
pub const DEFAULT_BAND_HIGH_HZ: f64 = 90_000.0;
pub const DEFAULT_FREQUENCY_COUNT: usize = 21;
pub const DEFAULT_ZETA_COUNT: usize = 30;

/// `n` values log-spaced between `lo` and `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Transmit angular frequencies (rad/s), strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    omegas: Vec<f64>,
}

impl FrequencyGrid {
    pub fn new(omegas: Vec<f64>) -> Result<Self> {
        if omegas.len() < 2 {
            return Err(Error::invalid(
                "frequency grid needs at least 2 frequencies",
            ));
        }
        if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("frequencies must be finite and positive"));
        }
        if omegas.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid("frequencies must be strictly increasing"));
        }
        Ok(Self { omegas })
    }

    /// 21 log-spaced frequencies over 300 Hz .. 90 kHz.
    pub fn default_wideband() -> Self {
        Self::log_spaced_hz(
            DEFAULT_BAND_LOW_HZ,
            DEFAULT_BAND_HIGH_HZ,
            DEFAULT_FREQUENCY_COUNT,
        )
        .expect("default band is valid")
    }

    pub fn log_spaced_hz(lo_hz: f64, hi_hz: f64, n: usize) -> Result<Self> {
        let tau = std::f64::consts::TAU;
        Self::new(log_space(lo_hz * tau, hi_hz * tau, n))
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Length of the stacked real representation.
    pub fn feature_len(&self) -> usize {
        2 * self.omegas.len()
    }

    pub fn min_omega(&self) -> f64 {
        self.omegas[0]
    }

    pub fn max_omega(&self) -> f64 {
        self.omegas[self.omegas.len() - 1]
    }

    /// `n` relaxation frequencies log-spaced across the grid's band.
    pub fn band_zetas(&self, n: usize) -> Vec<f64> {
        log_space(self.min_omega(), self.max_omega(), n)
    }
}

/// DC shift plus relaxation amplitudes and frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrfParams {
    pub c0: f64,
    pub cks: Vec<f64>,
    pub zetas: Vec<f64>,
}

impl DsrfParams {
    pub fn new(c0: f64, cks: Vec<f64>, zetas: Vec<f64>) -> Result<Self> {
        let p = Self { c0, cks, zetas };
        p.validate()?;
        Ok(p)
    }

    /// The response that is zero at every frequency.
    pub fn silent() -> Self {
        Self {
            c0: 0.0,
            cks: Vec::new(),
            zetas: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cks.len() != self.zetas.len() {
            return Err(Error::invalid(format!(
                "{} amplitudes for {} relaxation frequencies",
                self.cks.len(),
                self.zetas.len()
            )));
        }
        check_zetas(&self.zetas)
    }
}

fn check_zetas(zetas: &[f64]) -> Result<()> {
    match zetas.iter().find(|z| !(z.is_finite() && **z > 0.0)) {
        Some(z) => Err(Error::invalid(format!(
            "relaxation frequency must be positive, got {z}"
        ))),
        None => Ok(()),
    }
}

/// Complex spectrum aligned to a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub values: Vec<Complex64>,
}

impl ComplexSpectrum {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Real feature vector `[re.., im..]` of length `2N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.0)
    }

    /// Copy scaled to unit norm; a zero vector is returned unchanged.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            Self(self.0.iter().map(|v| v / n).collect())
        } else {
            self.clone()
        }
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Evaluate the DSRF model on `grid`.
pub fn dsrf_response(grid: &FrequencyGrid, params: &DsrfParams) -> Result<ComplexSpectrum> {
    params.validate()?;
    let values = grid
        .omegas()
        .iter()
        .map(|&w| {
            params
                .cks
                .iter()
                .zip(&params.zetas)
                .fold(Complex64::new(params.c0, 0.0), |acc, (&c, &z)| {
                    acc + c / Complex64::new(1.0, w / z)
                })
        })
        .collect();
    Ok(ComplexSpectrum { values })
}

/// Single unit-amplitude relaxation, not normalized.
pub fn dsrf_atom(grid: &FrequencyGrid, zeta: f64) -> Result<ComplexSpectrum> {
    check_zetas(&[zeta])?;
    let values = grid
        .omegas()
        .iter()
        .map(|&w| Complex64::new(1.0, w / zeta).inv())
        .collect();
    Ok(ComplexSpectrum { values })
}

/// Fixed dictionary with one atom per relaxation frequency, ordered by zeta.
///
/// The result has no target atoms: every atom is a generic metal signature.
pub fn build_dsrf_dictionary(
    grid: &FrequencyGrid,
    zetas: &[f64],
    normalize: bool,
) -> Result<Dictionary> {
    if zetas.is_empty() {
        return Err(Error::invalid(
            "at least one relaxation frequency is required",
        ));
    }
    check_zetas(zetas)?;
    let mut sorted = zetas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let atoms = sorted
        .iter()
        .map(|&z| {
            let v = stack_complex(&dsrf_atom(grid, z)?);
            Ok(if normalize { v.normalized() } else { v })
        })
        .collect::<Result<Vec<_>>>()?;
    Dictionary::from_atoms(&atoms, 0)
}

/// Real block followed by imaginary block.
pub fn stack_complex(s: &ComplexSpectrum) -> FeatureVector {
    let mut out = Vec::with_capacity(2 * s.len());
    out.extend(s.values.iter().map(|c| c.re));
    out.extend(s.values.iter().map(|c| c.im));
    FeatureVector(out)
}

pub fn unstack(v: &[f64]) -> Result<ComplexSpectrum> {
    if !v.len().is_multiple_of(2) {
        return Err(Error::format(
            0,
            format!("stacked vector has odd length {}", v.len()),
        ));
    }
    let n = v.len() / 2;
    Ok(ComplexSpectrum {
        values: (0..n).map(|i| Complex64::new(v[i], v[n + i])).collect(),
    })
}
