//! Multi-channel LED illuminator with intensity-dependent spectral shape.
//!
//! A characterization holds, for every channel `i` and drive level `w_j`,
//! the measured SPD `A(i, j)`. Dividing by the drive gives the normalized
//! shapes `Aⁿ(i, j) = A(i, j) / w_j`; at zero drive the shape is borrowed
//! from the lowest nonzero level. Between levels the *shape* is interpolated
//! and the emitted spectrum is `c · shape(c)`, so measured spectra are
//! reproduced exactly at the knots.

pub mod manifest;
pub mod metamer;
pub mod synthetic;

use nalgebra::{Dyn, OMatrix, U31};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Spectrum, SpectrumKind, N};

pub use metamer::{solve_metamer, MetamerSolution};

/// 31 × k matrix whose columns are channel spectra.
pub type Basis = OMatrix<f64, U31, Dyn>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    /// Every channel keeps its full-drive shape: `e = B c`.
    Simple,
    /// Shapes follow the characterization at the requested drive.
    Complex,
}

impl RenderMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RenderMode::Simple => "simple",
            RenderMode::Complex => "complex",
        }
    }
}

impl std::fmt::Display for RenderMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-channel drive levels, each in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ChannelWeights(Vec<f64>);

impl ChannelWeights {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = c
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Domain(format!(
                "weight {v} for channel {} outside [0, 1]",
                i + 1
            )));
        }
        Ok(Self(c))
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn ones(k: usize) -> Self {
        Self(vec![1.0; k])
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

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ChannelWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ChannelWeights> for Vec<f64> {
    fn from(c: ChannelWeights) -> Self {
        c.0
    }
}

/// Power-normalized shapes `Aⁿ` and the level vector they were derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedModel {
    levels: Vec<f64>,
    shapes: Vec<Vec<Spectrum>>,
}

impl NormalizedModel {
    fn from_measured(levels: &[f64], spectra: &[Vec<Spectrum>]) -> Self {
        let shapes = spectra
            .iter()
            .map(|per_level| {
                let mut s: Vec<Spectrum> = per_level
                    .iter()
                    .zip(levels)
                    .map(|(a, &w)| {
                        if w > 0.0 {
                            a.scaled(1.0 / w)
                        } else {
                            a.clone()
                        }
                    })
                    .collect();
                if levels[0] == 0.0 {
                    s[0] = s[1].clone();
                }
                s
            })
            .collect();
        Self {
            levels: levels.to_vec(),
            shapes,
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `Aⁿ(channel, level)`.
    pub fn shape(&self, channel: usize, level: usize) -> &Spectrum {
        &self.shapes[channel][level]
    }

    /// The interpolated normalized shape a channel has when driven at `c`.
    pub fn shape_at(&self, channel: usize, c: f64) -> Result<Spectrum> {
        check_drive(c)?;
        let w = &self.levels;
        let last = w.len() - 1;
        if c <= w[0] {
            return Ok(self.shapes[channel][0].clone());
        }
        if c >= w[last] {
            return Ok(self.shapes[channel][last].clone());
        }
        // w[j-1] <= c < w[j]
        let j = w.partition_point(|&wj| wj <= c);
        let a = (c - w[j - 1]) / (w[j] - w[j - 1]);
        let (lo, hi) = (&self.shapes[channel][j - 1], &self.shapes[channel][j]);
        if a == 0.0 {
            return Ok(lo.clone());
        }
        Ok(Spectrum::generic(std::array::from_fn(|i| {
            (1.0 - a) * lo[i] + a * hi[i]
        })))
    }

    /// Emitted spectrum of one channel at drive `c`: `c · shape_at(c)`.
    pub fn spectrum_at(&self, channel: usize, c: f64) -> Result<Spectrum> {
        Ok(self
            .shape_at(channel, c)?
            .scaled(c)
            .with_kind(SpectrumKind::Illuminant))
    }
}

fn check_drive(c: f64) -> Result<()> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(Error::Domain(format!("drive level {c} outside [0, 1]")))
    }
}

/// Characterization array `A` (channel × level) with its level vector `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminatorModel {
    names: Vec<String>,
    levels: Vec<f64>,
    spectra: Vec<Vec<Spectrum>>,
    normalized: NormalizedModel,
}

impl IlluminatorModel {
    /// Validates and builds a model. `spectra[i][j]` is channel `i` at
    /// `levels[j]`. Every violation is reported, tagged with its channel.
    pub fn new(names: Vec<String>, levels: Vec<f64>, spectra: Vec<Vec<Spectrum>>) -> Result<Self> {
        let mut problems = Vec::new();
        if levels.len() < 2 {
            problems.push(format!(
                "need at least 2 drive levels, got {}",
                levels.len()
            ));
        } else {
            if levels[0] != 0.0 {
                problems.push(format!("first drive level must be 0, got {}", levels[0]));
            }
            if levels[levels.len() - 1] != 1.0 {
                problems.push(format!(
                    "last drive level must be 1, got {}",
                    levels[levels.len() - 1]
                ));
            }
            if let Some(w) = levels.windows(2).find(|w| !(w[1] > w[0])) {
                problems.push(format!(
                    "drive levels must be strictly increasing ({} then {})",
                    w[0], w[1]
                ));
            }
        }
        if spectra.is_empty() {
            problems.push("model has no channels".to_string());
        }
        if names.len() != spectra.len() {
            problems.push(format!(
                "{} channel names for {} channels",
                names.len(),
                spectra.len()
            ));
        }
        for (i, per_level) in spectra.iter().enumerate() {
            let ch = names
                .get(i)
                .cloned()
                .unwrap_or_else(|| format!("#{}", i + 1));
            if per_level.len() != levels.len() {
                problems.push(format!(
                    "channel {} ({ch}): {} spectra for {} levels",
                    i + 1,
                    per_level.len(),
                    levels.len()
                ));
                continue;
            }
            for (j, s) in per_level.iter().enumerate() {
                if s.values().iter().any(|v| !v.is_finite() || *v < 0.0) {
                    problems.push(format!(
                        "channel {} ({ch}) level {}: negative or non-finite spectrum",
                        i + 1,
                        j + 1
                    ));
                }
            }
            if per_level[0].values().iter().any(|v| *v != 0.0) {
                problems.push(format!(
                    "channel {} ({ch}): zero-drive spectrum is not all zero",
                    i + 1
                ));
            }
            for j in 1..per_level.len() {
                let (p0, p1) = (per_level[j - 1].sum(), per_level[j].sum());
                if p1 < p0 {
                    problems.push(format!(
                        "channel {} ({ch}): total power drops from level {} ({p0:.6e}) to level {} ({p1:.6e})",
                        i + 1,
                        j,
                        j + 1
                    ));
                }
            }
            if per_level.last().is_some_and(|s| s.sum() <= 0.0) {
                problems.push(format!(
                    "channel {} ({ch}): emits nothing at full drive",
                    i + 1
                ));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let normalized = NormalizedModel::from_measured(&levels, &spectra);
        Ok(Self {
            names,
            levels,
            spectra,
            normalized,
        })
    }

    pub fn channels(&self) -> usize {
        self.spectra.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Measured `A(channel, level)`.
    pub fn spectrum(&self, channel: usize, level: usize) -> &Spectrum {
        &self.spectra[channel][level]
    }

    pub fn normalized(&self) -> &NormalizedModel {
        &self.normalized
    }

    /// Full-drive basis `B`, column `i` = `A(i, L)`.
    pub fn max_basis(&self) -> Basis {
        let last = self.levels.len() - 1;
        Basis::from_fn(self.channels(), |l, i| self.spectra[i][last][l])
    }

    /// Basis whose column `i` is the normalized shape at `c_i`; `basis_at(c)·c`
    /// is the complex render of `c`.
    pub fn basis_at(&self, c: &ChannelWeights) -> Result<Basis> {
        self.check_len(c)?;
        let mut b = Basis::zeros(self.channels());
        for (i, &ci) in c.as_slice().iter().enumerate() {
            let s = self.normalized.shape_at(i, ci)?;
            b.column_mut(i).copy_from_slice(s.values());
        }
        Ok(b)
    }

    pub fn spectrum_at(&self, channel: usize, c: f64) -> Result<Spectrum> {
        if channel >= self.channels() {
            return Err(Error::Domain(format!(
                "channel {} out of range (model has {})",
                channel + 1,
                self.channels()
            )));
        }
        self.normalized.spectrum_at(channel, c)
    }

    pub fn render(&self, c: &ChannelWeights, mode: RenderMode) -> Result<Spectrum> {
        self.check_len(c)?;
        let mut out = [0.0; N];
        match mode {
            RenderMode::Simple => {
                let last = self.levels.len() - 1;
                for (i, &ci) in c.as_slice().iter().enumerate() {
                    let s = &self.spectra[i][last];
                    for (o, v) in out.iter_mut().zip(s.values()) {
                        *o += ci * v;
                    }
                }
            }
            RenderMode::Complex => {
                for (i, &ci) in c.as_slice().iter().enumerate() {
                    let s = self.normalized.spectrum_at(i, ci)?;
                    for (o, v) in out.iter_mut().zip(s.values()) {
                        *o += v;
                    }
                }
            }
        }
        Ok(Spectrum::illuminant(out))
    }

    fn check_len(&self, c: &ChannelWeights) -> Result<()> {
        if c.len() == self.channels() {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "{} weights for a {}-channel illuminator",
                c.len(),
                self.channels()
            )))
        }
    }
}

/// Spectrum of `basis · c`.
pub fn basis_render(basis: &Basis, c: &ChannelWeights) -> Spectrum {
    let v = basis * nalgebra::DVector::from_column_slice(c.as_slice());
    Spectrum::illuminant(std::array::from_fn(|i| v[i]))
}
