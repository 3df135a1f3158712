//! Reflectances as linear combinations of a few chart patches.
//!
//! Every target is fit by unconstrained least squares over each 4-subset of
//! the candidate patches; the subset with the smallest relative error wins.
//! Because camera responses are linear in reflectance, the same combination
//! of the patches' measured RGBs predicts the target's RGB.

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lstsq_min_norm;
use crate::spectral::{Spectrum, Tristimulus, N};

/// Largest subset a combination may use.
pub const MAX_SUBSET: usize = 4;

/// Chart size and layout: 18 chromatic patches followed by 6 neutrals.
pub const CHART_PATCHES: usize = 24;
pub const CHROMATIC_PATCHES: usize = 18;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinationFit {
    /// Candidate indices (0-based), increasing.
    pub indices: Vec<usize>,
    pub coeffs: Vec<f64>,
    /// `‖target − fit‖ / ‖target‖`.
    pub rel_error: f64,
}

/// Which of the chart's neutrals joins the candidate pool.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AchromaticChoice {
    /// The neutral whose mean reflectance is closest to 0.5.
    #[default]
    ClosestToMidGray,
    /// Neutral number 0..6, white first.
    Index(usize),
}

/// 18 chromatic patches plus one neutral from a 24-patch chart.
pub fn macbeth_candidates(
    chart: &[(String, Spectrum)],
    achromatic: AchromaticChoice,
) -> Result<Vec<(String, Spectrum)>> {
    if chart.len() != CHART_PATCHES {
        return Err(Error::Domain(format!(
            "expected a {CHART_PATCHES}-patch chart, got {} patches",
            chart.len()
        )));
    }
    let neutrals = &chart[CHROMATIC_PATCHES..];
    let pick = match achromatic {
        AchromaticChoice::Index(i) if i < neutrals.len() => i,
        AchromaticChoice::Index(i) => {
            return Err(Error::Domain(format!(
                "neutral index {i} out of range 0..6"
            )))
        }
        AchromaticChoice::ClosestToMidGray => {
            let dist = |r: &Spectrum| (r.sum() / N as f64 - 0.5).abs();
            (0..neutrals.len())
                .min_by(|&a, &b| dist(&neutrals[a].1).total_cmp(&dist(&neutrals[b].1)))
                .expect("six neutrals")
        }
    };
    let mut out = chart[..CHROMATIC_PATCHES].to_vec();
    out.push(neutrals[pick].clone());
    Ok(out)
}

/// All `size`-subsets of `0..n` in lexicographic order.
fn subsets(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if size > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..size).rev().find(|&i| idx[i] != i + n - size) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Shared per-candidate-set data for many targets.
struct Prepared {
    cands: DMatrix<f64>,
    gram: DMatrix<f64>,
    subsets: Vec<Vec<usize>>,
}

impl Prepared {
    fn new(candidates: &[Spectrum], size: usize) -> Self {
        let cands = DMatrix::from_fn(N, candidates.len(), |l, i| candidates[i][l]);
        let gram = cands.transpose() * &cands;
        Self {
            subsets: subsets(candidates.len(), size.min(candidates.len())),
            cands,
            gram,
        }
    }

    /// Coefficients and squared residual from the normal equations.
    fn quick(&self, s: &[usize], b: &DVector<f64>, tt: f64) -> Option<f64> {
        let k = s.len();
        let mut g = Matrix4::<f64>::identity();
        let mut rhs = Vector4::<f64>::zeros();
        for (a, &i) in s.iter().enumerate() {
            rhs[a] = b[i];
            for (c, &j) in s.iter().enumerate() {
                g[(a, c)] = self.gram[(i, j)];
            }
        }
        let chol = g.cholesky()?;
        let x = chol.solve(&rhs);
        // r² = tᵀt − bᵀx at the least-squares optimum
        let fit: f64 = (0..k).map(|a| rhs[a] * x[a]).sum();
        Some((tt - fit).max(0.0))
    }

    /// Exact least squares for one subset, by SVD on the spectra.
    fn exact(&self, s: &[usize], target: &DVector<f64>) -> (Vec<f64>, f64) {
        let a = self.cands.select_columns(s);
        let x = lstsq_min_norm(&a, target);
        let r = (target - &a * &x).norm();
        (x.iter().copied().collect(), r)
    }

    fn fit(&self, target: &Spectrum) -> Result<CombinationFit> {
        let t = DVector::from_column_slice(target.values());
        let tn = t.norm();
        if !(tn > 0.0) {
            return Err(Error::Degenerate("target reflectance has zero norm".into()));
        }
        let tt = tn * tn;
        let b = self.cands.transpose() * &t;
        // Normal-equation residuals lose accuracy near zero; screen with
        // them, then settle near-ties exactly.
        let screen_slack = 1e-9 * tt;
        let mut quick: Vec<(usize, f64)> = Vec::with_capacity(self.subsets.len());
        for (n, s) in self.subsets.iter().enumerate() {
            let r2 = match self.quick(s, &b, tt) {
                Some(r2) => r2,
                None => self.exact(s, &t).1.powi(2),
            };
            quick.push((n, r2));
        }
        let floor = quick.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for &(n, r2) in &quick {
            if r2 > floor + screen_slack {
                continue;
            }
            let (x, r) = self.exact(&self.subsets[n], &t);
            // Later subsets must win by more than rounding to displace an
            // earlier (lexicographically smaller) one.
            if best.as_ref().is_none_or(|(_, _, br)| r < br - 1e-12 * tn) {
                best = Some((n, x, r));
            }
        }
        let (n, coeffs, _) = best.expect("at least one subset");
        let indices = self.subsets[n].clone();
        let rel_error = rel_error_of(target, &indices, &coeffs, &self.cands);
        Ok(CombinationFit {
            indices,
            coeffs,
            rel_error,
        })
    }
}

fn rel_error_of(target: &Spectrum, indices: &[usize], coeffs: &[f64], cands: &DMatrix<f64>) -> f64 {
    let fit = fitted(indices, coeffs, |i, l| cands[(l, i)]);
    let t = target.values();
    let num: f64 = (0..N).map(|l| (t[l] - fit[l]).powi(2)).sum::<f64>().sqrt();
    num / target.norm()
}

fn fitted(indices: &[usize], coeffs: &[f64], value: impl Fn(usize, usize) -> f64) -> [f64; N] {
    std::array::from_fn(|l| {
        indices
            .iter()
            .zip(coeffs)
            .map(|(&i, &c)| c * value(i, l))
            .sum()
    })
}

/// Best fit of `target` by at most four candidates.
pub fn fit_combination(target: &Spectrum, candidates: &[Spectrum]) -> Result<CombinationFit> {
    fit_with_size(target, candidates, MAX_SUBSET)
}

/// Best fit using subsets of exactly `size` candidates (fewer if there are
/// not that many).
pub fn fit_with_size(
    target: &Spectrum,
    candidates: &[Spectrum],
    size: usize,
) -> Result<CombinationFit> {
    check_candidates(candidates, size)?;
    Prepared::new(candidates, size).fit(target)
}

/// [`fit_combination`] for many targets, in parallel.
pub fn fit_all(targets: &[Spectrum], candidates: &[Spectrum]) -> Result<Vec<CombinationFit>> {
    check_candidates(candidates, MAX_SUBSET)?;
    let prep = Prepared::new(candidates, MAX_SUBSET);
    targets.par_iter().map(|t| prep.fit(t)).collect()
}

fn check_candidates(candidates: &[Spectrum], size: usize) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Domain("no candidate reflectances".into()));
    }
    if size == 0 || size > MAX_SUBSET {
        return Err(Error::Domain(format!(
            "subset size must be 1..=4, got {size}"
        )));
    }
    Ok(())
}

/// `Σ cᵢ·r_{indices[i]}`.
pub fn fitted_spectrum(fit: &CombinationFit, candidates: &[Spectrum]) -> Spectrum {
    Spectrum::generic(fitted(&fit.indices, &fit.coeffs, |i, l| candidates[i][l]))
}

/// `Σ cᵢ·ρ_{indices[i]}`.
pub fn synth_rgb(fit: &CombinationFit, measured_rgbs: &[Tristimulus]) -> Tristimulus {
    let mut out = [0.0; 3];
    for (&i, &c) in fit.indices.iter().zip(&fit.coeffs) {
        for (o, v) in out.iter_mut().zip(measured_rgbs[i].0) {
            *o += c * v;
        }
    }
    Tristimulus(out)
}
