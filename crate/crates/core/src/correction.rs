//! Linear color correction and ΔE*ab evaluation.
//!
//! Camera RGBs `ρ` are mapped to XYZ by a 3×3 matrix fit by least squares
//! over the evaluated set (`predicted = Mᵀρ`). Errors are CIELAB distances
//! against the XYZ each reflectance has under the measurement light, both
//! sides using that light's diffuser white.

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colorimetry::{delta_e_ab, xyz_of, xyz_to_lab, xyz_to_lab_extended, CmfSet, WhitePoint};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, lstsq_min_norm};
use crate::spectral::{sensor_response, SensorSet, Spectrum, Tristimulus};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorSample {
    pub id: String,
    pub rgb: Tristimulus,
    pub xyz_truth: Tristimulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaEStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

/// `argmin_M Σ ‖Mᵀρ − xyz‖²`.
pub fn correct_fit(samples: &[ColorSample]) -> Result<Matrix3<f64>> {
    if samples.len() < 3 {
        return Err(Error::Rank(format!(
            "color correction needs at least 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(s) = samples
        .iter()
        .find(|s| !s.rgb.is_finite() || !s.xyz_truth.is_finite())
    {
        return Err(Error::Domain(format!("sample `{}` is not finite", s.id)));
    }
    let n = samples.len();
    let a = DMatrix::from_fn(n, 3, |i, k| samples[i].rgb[k]);
    let b = DMatrix::from_fn(n, 3, |i, k| samples[i].xyz_truth[k]);
    let m = lstsq(&a, &b, "sample RGBs")?;
    Ok(Matrix3::from_fn(|r, c| m[(r, c)]))
}

fn min_norm_fit(samples: &[ColorSample]) -> Matrix3<f64> {
    let n = samples.len();
    let a = DMatrix::from_fn(n, 3, |i, k| samples[i].rgb[k]);
    let cols: Vec<_> = (0..3)
        .map(|k| lstsq_min_norm(&a, &DVector::from_fn(n, |i, _| samples[i].xyz_truth[k])))
        .collect();
    Matrix3::from_fn(|r, c| cols[c][r])
}

/// `Mᵀρ`.
pub fn apply(m: &Matrix3<f64>, rgb: Tristimulus) -> Tristimulus {
    Tristimulus::from_vector(&(m.transpose() * rgb.to_vector()))
}

/// Divides each RGB componentwise by `white`.
pub fn white_balance(rgbs: &[Tristimulus], white: Tristimulus) -> Result<Vec<Tristimulus>> {
    if white.0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!(
            "white RGB must be strictly positive, got {:?}",
            white.0
        )));
    }
    Ok(rgbs
        .iter()
        .map(|t| Tristimulus(std::array::from_fn(|k| t[k] / white[k])))
        .collect())
}

/// Percentile `p ∈ [0, 1]` of sorted data, interpolating linearly between
/// closest ranks (inclusive convention).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(errors: &[f64]) -> Result<DeltaEStats> {
    if errors.is_empty() {
        return Err(Error::Degenerate("no errors to summarize".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(DeltaEStats {
        n,
        mean: sorted.iter().sum::<f64>() / n as f64,
        median,
        p95: percentile_sorted(&sorted, 0.95),
        p99: percentile_sorted(&sorted, 0.99),
        max: sorted[n - 1],
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum WhiteChoice {
    /// Diffuser under the measurement light.
    #[default]
    Measurement,
    Custom(WhitePoint),
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    pub white: WhiteChoice,
    /// Divide RGBs by the diffuser's RGB under the capture light first.
    pub white_balance: bool,
    /// Hold out every n-th sample (indices 0, n, 2n, …): fit on the rest,
    /// report errors on the held-out ones. `None` fits and evaluates on all.
    pub holdout_every: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub stats: DeltaEStats,
    pub m: Matrix3<f64>,
    /// `(sample id, ΔE*ab)` for every evaluated sample.
    pub per_sample: Vec<(String, f64)>,
}

/// ΔE*ab statistics of the corrected camera against ground truth.
pub fn evaluate(
    q: &SensorSet,
    e_measure: &Spectrum,
    e_capture: &Spectrum,
    reflectances: &[Spectrum],
    cmf: &CmfSet,
) -> Result<DeltaEStats> {
    let named: Vec<(String, Spectrum)> = reflectances
        .iter()
        .enumerate()
        .map(|(i, r)| (format!("{}", i + 1), r.clone()))
        .collect();
    Ok(evaluate_with(
        q,
        e_measure,
        e_capture,
        &named,
        cmf,
        &EvalOptions::default(),
    )?
    .stats)
}

/// Builds samples (in parallel) and evaluates them.
pub fn evaluate_with(
    q: &SensorSet,
    e_measure: &Spectrum,
    e_capture: &Spectrum,
    reflectances: &[(String, Spectrum)],
    cmf: &CmfSet,
    opts: &EvalOptions,
) -> Result<Evaluation> {
    if reflectances.is_empty() {
        return Err(Error::Degenerate("no reflectances to evaluate".into()));
    }
    let mut samples: Vec<ColorSample> = reflectances
        .par_iter()
        .map(|(id, r)| ColorSample {
            id: id.clone(),
            rgb: sensor_response(q, e_capture, r),
            xyz_truth: xyz_of(e_measure, r, cmf),
        })
        .collect();
    if opts.white_balance {
        let white_rgb = sensor_response(q, e_capture, &Spectrum::constant(1.0));
        let rgbs: Vec<Tristimulus> = samples.iter().map(|s| s.rgb).collect();
        for (s, b) in samples.iter_mut().zip(white_balance(&rgbs, white_rgb)?) {
            s.rgb = b;
        }
    }
    let white = match opts.white {
        WhiteChoice::Measurement => WhitePoint::of_light(e_measure, cmf)?,
        WhiteChoice::Custom(w) => w,
    };
    evaluate_samples(&samples, white, opts.holdout_every)
}

/// Fits the correction on `samples` (or on the non-held-out part) and
/// returns ΔE*ab statistics.
pub fn evaluate_samples(
    samples: &[ColorSample],
    white: WhitePoint,
    holdout_every: Option<usize>,
) -> Result<Evaluation> {
    let (train, test): (Vec<ColorSample>, Vec<ColorSample>) = match holdout_every {
        None => (samples.to_vec(), samples.to_vec()),
        Some(0) => return Err(Error::Domain("holdout_every must be at least 1".into())),
        Some(n) => {
            let (test, train): (Vec<_>, Vec<_>) = samples
                .iter()
                .cloned()
                .enumerate()
                .partition(|(i, _)| i % n == 0);
            (
                train.into_iter().map(|(_, s)| s).collect(),
                test.into_iter().map(|(_, s)| s).collect(),
            )
        }
    };
    let m = if train.len() < 3 {
        // Too few samples to determine M; the minimum-norm fit reproduces
        // them exactly.
        min_norm_fit(&train)
    } else {
        correct_fit(&train)?
    };
    let per_sample = test
        .par_iter()
        .map(|s| {
            let truth = xyz_to_lab(s.xyz_truth, white)?;
            // Predictions may dip below zero; the linear branch of the
            // CIELAB function extends to them continuously.
            let pred = xyz_to_lab_extended(apply(&m, s.rgb), white);
            Ok((s.id.clone(), delta_e_ab(truth, pred)))
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = per_sample.iter().map(|(_, e)| *e).collect();
    Ok(Evaluation {
        stats: summarize(&errors)?,
        m,
        per_sample,
    })
}
