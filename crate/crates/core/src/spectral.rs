//! Fixed-grid spectral algebra.
//!
//! Every spectrum in a computation lives on the same 31-point grid,
//! 400..=700 nm in 10 nm steps. The grid is encoded in the array length, so
//! two spectra can never disagree about it.

use std::ops::{Add, Index, Mul};

use nalgebra::{DMatrix, Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::colorimetry::CmfSet;
use crate::error::{Error, Result};
use crate::linalg;

/// Number of samples on the visible grid.
pub const N: usize = 31;

/// Tolerance above 1 admitted for measured reflectances.
pub const REFLECTANCE_SLACK: f64 = 0.05;

/// 31×3 matrix type used for sensor and observer sets.
pub type Matrix31x3 = SMatrix<f64, N, 3>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralGrid {
    pub start_nm: f64,
    pub end_nm: f64,
    pub step_nm: f64,
}

impl SpectralGrid {
    pub const VISIBLE: SpectralGrid = SpectralGrid {
        start_nm: 400.0,
        end_nm: 700.0,
        step_nm: 10.0,
    };

    pub fn len(&self) -> usize {
        ((self.end_nm - self.start_nm) / self.step_nm).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn wavelength(&self, i: usize) -> f64 {
        self.start_nm + self.step_nm * i as f64
    }

    pub fn wavelengths(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.wavelength(i))
    }

    /// Index of an exact grid wavelength.
    pub fn index_of(&self, nm: f64) -> Option<usize> {
        let f = (nm - self.start_nm) / self.step_nm;
        let i = f.round();
        ((f - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < self.len()).then_some(i as usize)
    }

    /// Parses `start:step:end`. Only the visible grid is supported.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<f64> = text
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("grid `{text}`: {e}")))?;
        match parts.as_slice() {
            [start, step, end] if *start == 400.0 && *step == 10.0 && *end == 700.0 => {
                Ok(Self::VISIBLE)
            }
            [_, _, _] => Err(Error::Domain(format!(
                "grid `{text}` is not supported; only 400:10:700 is"
            ))),
            _ => Err(Error::Format(format!(
                "grid `{text}` must be start:step:end"
            ))),
        }
    }
}

impl Default for SpectralGrid {
    fn default() -> Self {
        Self::VISIBLE
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumKind {
    Illuminant,
    Reflectance,
    Generic,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    values: [f64; N],
    kind: SpectrumKind,
}

impl Spectrum {
    pub fn new(values: [f64; N], kind: SpectrumKind) -> Self {
        Self { values, kind }
    }

    pub fn generic(values: [f64; N]) -> Self {
        Self::new(values, SpectrumKind::Generic)
    }

    pub fn illuminant(values: [f64; N]) -> Self {
        Self::new(values, SpectrumKind::Illuminant)
    }

    /// Reflectance with validation: every value in `[0, 1 + REFLECTANCE_SLACK]`.
    pub fn reflectance(values: [f64; N]) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0 + REFLECTANCE_SLACK).contains(*v))
        {
            return Err(Error::Domain(format!(
                "reflectance value {v} at {} nm outside [0, {}]",
                SpectralGrid::VISIBLE.wavelength(i),
                1.0 + REFLECTANCE_SLACK
            )));
        }
        Ok(Self::new(values, SpectrumKind::Reflectance))
    }

    pub fn from_slice(values: &[f64], kind: SpectrumKind) -> Result<Self> {
        let values: [f64; N] = values.try_into().map_err(|_| {
            Error::Format(format!("spectrum needs {N} samples, got {}", values.len()))
        })?;
        Ok(Self::new(values, kind))
    }

    pub fn zeros() -> Self {
        Self::generic([0.0; N])
    }

    pub fn constant(v: f64) -> Self {
        Self::generic([v; N])
    }

    pub fn from_fn(f: impl Fn(f64) -> f64) -> Self {
        let grid = SpectralGrid::VISIBLE;
        Self::generic(std::array::from_fn(|i| f(grid.wavelength(i))))
    }

    pub fn values(&self) -> &[f64; N] {
        &self.values
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: SpectrumKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.values.map(|v| v * k), self.kind)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Sub-sample peak wavelength: a parabola through the log of the three
    /// samples around the maximum (exact for Gaussian lines), falling back to
    /// a plain parabola when a neighbour is not positive.
    pub fn peak_wavelength(&self) -> f64 {
        let grid = SpectralGrid::VISIBLE;
        let i = self.argmax();
        if i == 0 || i == N - 1 {
            return grid.wavelength(i);
        }
        let (a, b, c) = (self.values[i - 1], self.values[i], self.values[i + 1]);
        let (a, b, c) = if a > 0.0 && c > 0.0 {
            (a.ln(), b.ln(), c.ln())
        } else {
            (a, b, c)
        };
        let denom = a - 2.0 * b + c;
        let offset = if denom.abs() > 0.0 {
            0.5 * (a - c) / denom
        } else {
            0.0
        };
        grid.wavelength(i) + offset.clamp(-1.0, 1.0) * grid.step_nm
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Sum of the samples with wavelength strictly below `nm`, over the total.
    pub fn power_fraction_below(&self, nm: f64) -> f64 {
        let grid = SpectralGrid::VISIBLE;
        let below: f64 = (0..N)
            .filter(|&i| grid.wavelength(i) < nm)
            .map(|i| self.values[i])
            .sum();
        below / self.sum()
    }
}

impl Index<usize> for Spectrum {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl Add for &Spectrum {
    type Output = Spectrum;

    fn add(self, rhs: &Spectrum) -> Spectrum {
        Spectrum::generic(std::array::from_fn(|i| self.values[i] + rhs.values[i]))
    }
}

impl Mul for &Spectrum {
    type Output = Spectrum;

    fn mul(self, rhs: &Spectrum) -> Spectrum {
        diag_mul(self, rhs)
    }
}

/// Per-wavelength product, `diag(a)·b`.
pub fn diag_mul(a: &Spectrum, b: &Spectrum) -> Spectrum {
    Spectrum::generic(std::array::from_fn(|i| a.values[i] * b.values[i]))
}

/// Piecewise-linear resampling of measured `(wavelength, value)` pairs onto
/// `grid`. Never extrapolates.
pub fn resample(raw: &[(f64, f64)], grid: &SpectralGrid) -> Result<Spectrum> {
    if raw.len() < 2 {
        return Err(Error::Range(format!(
            "need at least two samples to cover {}..{} nm, got {}",
            grid.start_nm,
            grid.end_nm,
            raw.len()
        )));
    }
    if let Some(w) = raw.windows(2).find(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Format(format!(
            "wavelengths not strictly increasing at {} -> {} nm",
            w[0].0, w[1].0
        )));
    }
    let (lo, hi) = (raw[0].0, raw[raw.len() - 1].0);
    if lo > grid.start_nm || hi < grid.end_nm {
        return Err(Error::Range(format!(
            "data covers {lo}..{hi} nm but the grid needs {}..{} nm",
            grid.start_nm, grid.end_nm
        )));
    }
    if grid.len() != N {
        return Err(Error::Domain(format!(
            "grid has {} points, expected {N}",
            grid.len()
        )));
    }
    let values = std::array::from_fn(|i| {
        let nm = grid.wavelength(i);
        // first sample with wavelength >= nm
        let k = raw.partition_point(|(w, _)| *w < nm);
        let (w1, v1) = raw[k];
        if w1 == nm || k == 0 {
            return v1;
        }
        let (w0, v0) = raw[k - 1];
        let a = (nm - w0) / (w1 - w0);
        (1.0 - a) * v0 + a * v1
    });
    Ok(Spectrum::generic(values))
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Tristimulus(pub [f64; 3]);

impl Tristimulus {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self([a, b, c])
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self([v[0], v[1], v[2]])
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn scaled(self, k: f64) -> Self {
        Self(self.0.map(|v| v * k))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for Tristimulus {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Camera spectral sensitivities, one column per R, G, B channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSet {
    m: Matrix31x3,
}

impl SensorSet {
    /// Validates nonnegativity, a positive entry in every column and rank 3.
    pub fn new(m: Matrix31x3) -> Result<Self> {
        let mut problems = Vec::new();
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            problems.push("sensitivities must be finite and nonnegative".to_string());
        }
        for (k, col) in m.column_iter().enumerate() {
            if !col.iter().any(|v| *v > 0.0) {
                problems.push(format!("channel {k} has no positive sensitivity"));
            }
        }
        if problems.is_empty() && !has_full_column_rank(&m) {
            problems.push("sensitivities are not of column rank 3".to_string());
        }
        if problems.is_empty() {
            Ok(Self { m })
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn from_columns(cols: [&Spectrum; 3]) -> Result<Self> {
        Self::new(Matrix31x3::from_fn(|i, k| cols[k][i]))
    }

    pub fn matrix(&self) -> &Matrix31x3 {
        &self.m
    }

    pub fn column(&self, k: usize) -> Spectrum {
        Spectrum::generic(std::array::from_fn(|i| self.m[(i, k)]))
    }
}

pub(crate) fn has_full_column_rank(m: &Matrix31x3) -> bool {
    let sv = m.svd(false, false).singular_values;
    sv.max() > 0.0 && sv.min() > sv.max() * linalg::RANK_RTOL
}

/// `ρ = Qᵀ diag(e) r`. No normalization; the 10 nm quadrature weight is left
/// to whatever scale the caller's correction absorbs.
pub fn sensor_response(q: &SensorSet, e: &Spectrum, r: &Spectrum) -> Tristimulus {
    weighted_response(q.matrix(), e, r)
}

pub(crate) fn weighted_response(m: &Matrix31x3, e: &Spectrum, r: &Spectrum) -> Tristimulus {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = (0..N).map(|i| m[(i, k)] * e[i] * r[i]).sum();
    }
    Tristimulus(out)
}

/// Best 3×3 fit of the sensors to the observer, `M = argmin ‖QM − X‖_F`,
/// with its Frobenius residual. The residual vanishes exactly when the
/// camera satisfies the Luther condition.
pub fn luther_residual(q: &SensorSet, x: &CmfSet) -> Result<(Matrix3<f64>, f64)> {
    let qd = DMatrix::from_column_slice(N, 3, q.matrix().as_slice());
    let xd = DMatrix::from_column_slice(N, 3, x.matrix().as_slice());
    let md = linalg::lstsq(&qd, &xd, "Luther fit")?;
    let m = Matrix3::from_column_slice(md.as_slice());
    let residual = (q.matrix() * m - x.matrix()).norm();
    Ok((m, residual))
}
