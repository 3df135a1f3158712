//! Closest-spectrum metamer of a target light.
//!
//! The spectral error `‖render(c) − s·t‖` is homogeneous in `(c, s)`, so the
//! solver works with `u = c/s`: it minimizes `‖B u − t‖` subject to
//! `XᵀB u = Xᵀt` and `u ≥ 0`, then picks the largest `s ≤ 1` that keeps
//! `c = s·u` inside `[0, 1]`. In complex mode the basis is replaced by the
//! channel shapes at the current weights and the solve repeated until the
//! weights settle.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ChannelWeights, IlluminatorModel, RenderMode};
use crate::colorimetry::{inside_hull, uv_prime, xyz_of, CmfSet};
use crate::error::{Error, Result};
use crate::matcher::bvls::bvls_eq;
use crate::spectral::{Spectrum, Tristimulus, N};

/// Relative XYZ residual above which the target counts as out of gamut.
pub const FEASIBILITY_TOL: f64 = 1e-6;

const MAX_RELINEARIZATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetamerSolution {
    pub mode: RenderMode,
    pub weights: ChannelWeights,
    pub scale: f64,
    pub spectrum: Spectrum,
    pub xyz: Tristimulus,
    /// XYZ of `scale · target`.
    pub target_xyz: Tristimulus,
    /// `‖XYZ − scale·XYZ_target‖ / ‖scale·XYZ_target‖`.
    pub xyz_residual: f64,
    /// `‖render − scale·target‖ / ‖scale·target‖`.
    pub spectral_error: f64,
    pub iterations: usize,
}

fn white() -> Spectrum {
    Spectrum::constant(1.0)
}

pub fn solve_metamer(
    model: &IlluminatorModel,
    target: &Spectrum,
    cmf: &CmfSet,
    mode: RenderMode,
) -> Result<MetamerSolution> {
    if target.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain(
            "metamer target must be finite and nonnegative".into(),
        ));
    }
    if target.sum() <= 0.0 {
        return Err(Error::Domain("metamer target is all zero".into()));
    }
    let k = model.channels();
    let t = DVector::from_column_slice(target.values());
    let xt = DMatrix::from_fn(3, N, |r, l| cmf.matrix()[(l, r)]);
    let f = &xt * &t;

    let mut basis = DMatrix::from_column_slice(N, k, model.max_basis().as_slice());
    let mut c = ChannelWeights::zeros(k);
    let mut scale = 1.0;
    let mut iterations = 0;
    for it in 1..=MAX_RELINEARIZATIONS {
        iterations = it;
        let e = &xt * &basis;
        let sol = bvls_eq(&basis, &t, &e, &f, &vec![0.0; k], &vec![f64::INFINITY; k])?;
        let umax = sol.x.iter().copied().fold(0.0, f64::max);
        if !(umax > 0.0) {
            break;
        }
        scale = (1.0 / umax).min(1.0);
        let next =
            ChannelWeights::new(sol.x.iter().map(|u| (u * scale).clamp(0.0, 1.0)).collect())?;
        let settled = next.max_abs_diff(&c) < 1e-12;
        c = next;
        if mode == RenderMode::Simple || settled {
            break;
        }
        let b = model.basis_at(&c)?;
        basis = DMatrix::from_column_slice(N, k, b.as_slice());
    }

    let spectrum = model.render(&c, mode)?;
    let xyz = xyz_of(&spectrum, &white(), cmf);
    let target_xyz = xyz_of(target, &white(), cmf).scaled(scale);
    let xyz_residual =
        (xyz.to_vector() - target_xyz.to_vector()).norm() / target_xyz.to_vector().norm();
    if !(xyz_residual <= FEASIBILITY_TOL) {
        return Err(Error::Infeasible(format!(
            "no channel weights reproduce the target XYZ (relative residual {xyz_residual:.3e}); {}",
            gamut_diagnostic(model, target, cmf)
        )));
    }
    let st = target.scaled(scale);
    let spectral_error = (0..N)
        .map(|l| (spectrum[l] - st[l]).powi(2))
        .sum::<f64>()
        .sqrt()
        / st.norm();
    Ok(MetamerSolution {
        mode,
        weights: c,
        scale,
        spectrum,
        xyz,
        target_xyz,
        xyz_residual,
        spectral_error,
        iterations,
    })
}

/// Human-readable account of where the target sits relative to the
/// chromaticities the channels can mix.
pub fn gamut_diagnostic(model: &IlluminatorModel, target: &Spectrum, cmf: &CmfSet) -> String {
    let last = model.levels().len() - 1;
    let mut pts: Vec<(f64, f64)> = (0..model.channels())
        .filter_map(|i| uv_prime(xyz_of(model.spectrum(i, last), &white(), cmf)).ok())
        .collect();
    let hull = crate::colorimetry::convex_hull(&mut pts);
    match uv_prime(xyz_of(target, &white(), cmf)) {
        Ok(uv) => format!(
            "target u'v' = ({:.4}, {:.4}) is {} the channel gamut ({} hull vertices)",
            uv.0,
            uv.1,
            if inside_hull(&hull, uv) {
                "inside"
            } else {
                "outside"
            },
            hull.len()
        ),
        Err(e) => format!("target chromaticity undefined: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::illuminator::synthetic::{gaussian, SyntheticConfig};

    #[test]
    fn in_span_target_is_recovered() {
        let model = SyntheticConfig::default().shift_free().build().unwrap();
        let c0 =
            ChannelWeights::new(vec![0.2, 0.5, 0.3, 0.1, 0.6, 0.4, 0.7, 0.2, 0.3, 0.3]).unwrap();
        let target = model.render(&c0, RenderMode::Simple).unwrap();
        let x = datasets::cie1931();
        let sol = solve_metamer(&model, &target, &x, RenderMode::Simple).unwrap();
        assert_eq!(sol.scale, 1.0);
        for l in 0..N {
            assert!((sol.spectrum[l] - target[l]).abs() < 1e-8, "{l}");
        }
        assert!(sol.xyz_residual < 1e-12);
    }

    #[test]
    fn two_channel_closed_form() {
        let levels: Vec<f64> = (0..=10).map(|j| j as f64 / 10.0).collect();
        let chans: Vec<Vec<Spectrum>> = [(460.0, 0.9), (600.0, 0.7)]
            .iter()
            .map(|&(mu, p)| {
                levels
                    .iter()
                    .map(|&w| gaussian(mu, 40.0, p).scaled(w))
                    .collect()
            })
            .collect();
        let model = IlluminatorModel::new(vec!["b".into(), "o".into()], levels, chans).unwrap();
        let x = datasets::cie1931();
        let b = model.max_basis();
        // Target on the segment between the channels, brighter than full drive.
        let target =
            Spectrum::illuminant(std::array::from_fn(|l| 1.2 * b[(l, 0)] + 0.8 * b[(l, 1)]));
        let sol = solve_metamer(&model, &target, &x, RenderMode::Simple).unwrap();
        // Oracle: normal equations of XᵀB u = Xᵀt, then the [0, 1] scale.
        let xb = x.matrix().transpose() * b;
        let xt = x.matrix().transpose() * nalgebra::DVector::from_column_slice(target.values());
        let u = (xb.transpose() * &xb).try_inverse().unwrap() * (xb.transpose() * xt);
        let s = 1.0 / u.max();
        assert!((sol.scale - s).abs() < 1e-9);
        assert!((sol.weights.as_slice()[0] - s * u[0]).abs() < 1e-9);
        assert!((sol.weights.as_slice()[1] - s * u[1]).abs() < 1e-9);
    }

    #[test]
    fn d65_metamer_reproduces_d65_xyz() {
        let model = SyntheticConfig::default().build().unwrap();
        let x = datasets::cie1931();
        let d65 = datasets::d65();
        for mode in [RenderMode::Simple, RenderMode::Complex] {
            let sol = solve_metamer(&model, &d65, &x, mode).unwrap();
            assert!(sol.xyz_residual < FEASIBILITY_TOL);
            assert!(sol
                .weights
                .as_slice()
                .iter()
                .all(|c| (0.0..=1.0).contains(c)));
            assert!(sol.weights.as_slice().contains(&1.0));
        }
    }

    #[test]
    fn out_of_gamut_target_is_infeasible() {
        let model = SyntheticConfig::default().build().unwrap();
        let x = datasets::cie1931();
        let mono = Spectrum::illuminant(std::array::from_fn(|l| if l == 30 { 1.0 } else { 0.0 }));
        let err = solve_metamer(&model, &mono, &x, RenderMode::Simple).unwrap_err();
        let Error::Infeasible(msg) = err else {
            panic!("{err}")
        };
        assert!(msg.contains("outside the channel gamut"), "{msg}");
    }
}
