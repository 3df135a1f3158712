//! CIE 1931 observer computations: XYZ, CIELAB, ΔE*ab and u′v′.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{
    has_full_column_rank, weighted_response, Matrix31x3, SpectralGrid, Spectrum, Tristimulus, N,
};

/// Color matching functions x̄, ȳ, z̄ as the columns of a 31×3 matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CmfSet {
    m: Matrix31x3,
}

impl CmfSet {
    pub fn new(m: Matrix31x3) -> Result<Self> {
        let mut problems = Vec::new();
        if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
            problems.push("color matching functions must be finite and nonnegative".to_string());
        }
        if !has_full_column_rank(&m) {
            problems.push("color matching functions are not of column rank 3".to_string());
        }
        let ybar = m.column(1);
        let peak = SpectralGrid::VISIBLE.wavelength(ybar.imax());
        if peak != 550.0 && peak != 560.0 {
            problems.push(format!("y-bar peaks at {peak} nm, expected 550 or 560 nm"));
        }
        if problems.is_empty() {
            Ok(Self { m })
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn matrix(&self) -> &Matrix31x3 {
        &self.m
    }

    pub fn column(&self, k: usize) -> Spectrum {
        Spectrum::generic(std::array::from_fn(|i| self.m[(i, k)]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }
}

/// Tristimulus of the perfect diffuser under the measurement light.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitePoint(Tristimulus);

impl WhitePoint {
    pub fn new(t: Tristimulus) -> Result<Self> {
        if t.0.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(Self(t))
        } else {
            Err(Error::Domain(format!(
                "white point components must be positive, got {:?}",
                t.0
            )))
        }
    }

    /// White of the perfect diffuser under `e`.
    pub fn of_light(e: &Spectrum, cmf: &CmfSet) -> Result<Self> {
        Self::new(xyz_of(e, &Spectrum::constant(1.0), cmf))
    }

    pub fn xyz(&self) -> Tristimulus {
        self.0
    }
}

/// `XYZ = Xᵀ diag(e) r` on the relative scale (no 100/ȳ·e normalization).
pub fn xyz_of(e: &Spectrum, r: &Spectrum, cmf: &CmfSet) -> Tristimulus {
    weighted_response(cmf.matrix(), e, r)
}

const DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    if f > DELTA {
        f * f * f
    } else {
        3.0 * DELTA * DELTA * (f - 4.0 / 29.0)
    }
}

/// CIE 1976 L*a*b* with the linear branch below (6/29)³.
pub fn xyz_to_lab(t: Tristimulus, w: WhitePoint) -> Result<LabColor> {
    if let Some(v) = t.0.iter().find(|v| **v < -1e-9 || !v.is_finite()) {
        return Err(Error::Domain(format!(
            "tristimulus {:?} has invalid component {v}",
            t.0
        )));
    }
    Ok(xyz_to_lab_extended(Tristimulus(t.0.map(|v| v.max(0.0))), w))
}

/// [`xyz_to_lab`] without the domain check: negative components go through
/// the linear branch.
pub fn xyz_to_lab_extended(t: Tristimulus, w: WhitePoint) -> LabColor {
    let wp = w.xyz();
    let [fx, fy, fz] = std::array::from_fn(|k| lab_f(t[k] / wp[k]));
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Inverse of [`xyz_to_lab`].
pub fn lab_to_xyz(lab: LabColor, w: WhitePoint) -> Tristimulus {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let wp = w.xyz();
    Tristimulus([
        wp[0] * lab_f_inv(fx),
        wp[1] * lab_f_inv(fy),
        wp[2] * lab_f_inv(fz),
    ])
}

pub fn delta_e_ab(p: LabColor, q: LabColor) -> f64 {
    ((p.l - q.l).powi(2) + (p.a - q.a).powi(2) + (p.b - q.b).powi(2)).sqrt()
}

/// CIE 1976 u′v′ chromaticity.
pub fn uv_prime(t: Tristimulus) -> Result<(f64, f64)> {
    let d = t[0] + 15.0 * t[1] + 3.0 * t[2];
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!(
            "u'v' undefined for {:?} (X+15Y+3Z = {d})",
            t.0
        )));
    }
    Ok((4.0 * t[0] / d, 9.0 * t[1] / d))
}

/// Convex hull, counter-clockwise, of the u′v′ points of the monochromatic
/// stimuli on the grid. The straight closing edge is the purple line.
pub fn spectral_locus_hull(cmf: &CmfSet) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = (0..N)
        .filter_map(|i| {
            let row = cmf.matrix().row(i);
            uv_prime(Tristimulus([row[0], row[1], row[2]])).ok()
        })
        .collect();
    convex_hull(&mut pts)
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Convex hull of `pts`, counter-clockwise (monotone chain). Sorts `pts`.
pub fn convex_hull(pts: &mut [(f64, f64)]) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter() {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Point-in-convex-polygon test for a counter-clockwise hull.
pub fn inside_hull(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    hull.len() >= 3 && (0..hull.len()).all(|i| cross(hull[i], hull[(i + 1) % hull.len()], p) >= 0.0)
}
