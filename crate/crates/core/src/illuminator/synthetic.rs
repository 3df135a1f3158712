//! Gaussian stand-in for a measured LED characterization.
//!
//! Each channel is a Gaussian line whose center drifts toward longer
//! wavelengths as the drive falls: `center(w) = μ + S·(1 − w)/(1 − w₂)`,
//! so the drift is zero at full drive and reaches `S` at the lowest nonzero
//! level `w₂`.

use serde::{Deserialize, Serialize};

use super::IlluminatorModel;
use crate::colorimetry::{uv_prime, xyz_of, CmfSet};
use crate::error::{Error, Result};
use crate::spectral::{Spectrum, SpectrumKind};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Gaussian line with peak value `peak`.
pub fn gaussian(center_nm: f64, fwhm_nm: f64, peak: f64) -> Spectrum {
    let sigma = fwhm_nm / FWHM_PER_SIGMA;
    Spectrum::from_fn(|nm| peak * (-0.5 * ((nm - center_nm) / sigma).powi(2)).exp())
        .with_kind(SpectrumKind::Illuminant)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub center_nm: f64,
    pub fwhm_nm: f64,
    /// Peak spectral power at full drive.
    pub peak: f64,
    /// Peak shift at the lowest nonzero drive level.
    pub shift_nm: f64,
}

impl ChannelSpec {
    fn new(name: &str, center_nm: f64, fwhm_nm: f64, peak: f64, shift_nm: f64) -> Self {
        Self {
            name: name.to_string(),
            center_nm,
            fwhm_nm,
            peak,
            shift_nm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub channels: Vec<ChannelSpec>,
    /// Number of drive levels, evenly spaced on [0, 1].
    pub levels: usize,
}

impl Default for SyntheticConfig {
    /// Eight narrow lines from violet to deep red plus two identical broad
    /// yellowish channels. The cyan and green lines drift the most.
    fn default() -> Self {
        let c = ChannelSpec::new;
        Self {
            channels: vec![
                c("violet", 415.0, 20.0, 0.55, 1.0),
                c("royal_blue", 435.0, 22.0, 0.80, 1.0),
                c("blue", 455.0, 22.0, 1.0, 2.0),
                c("sky_blue", 475.0, 26.0, 0.70, 4.0),
                c("cyan", 500.0, 30.0, 0.45, 17.0),
                c("green", 520.0, 34.0, 0.40, 9.0),
                c("red", 625.0, 18.0, 0.85, 0.0),
                c("deep_red", 660.0, 20.0, 0.60, 0.0),
                c("broad_1", 575.0, 110.0, 0.30, 3.0),
                c("broad_2", 575.0, 110.0, 0.30, 3.0),
            ],
            levels: 11,
        }
    }
}

impl SyntheticConfig {
    /// Rescales every channel's shift so the largest equals `max_shift_nm`.
    pub fn with_max_shift(mut self, max_shift_nm: f64) -> Self {
        let current = self.max_shift();
        for ch in &mut self.channels {
            ch.shift_nm = if current > 0.0 {
                ch.shift_nm * max_shift_nm / current
            } else {
                max_shift_nm
            };
        }
        self
    }

    /// Same channels with the drift removed: `A(i, j) = w_j · A(i, L)`.
    pub fn shift_free(self) -> Self {
        self.with_max_shift(0.0)
    }

    pub fn max_shift(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.shift_nm.abs())
            .fold(0.0, f64::max)
    }

    pub fn level_vector(&self) -> Vec<f64> {
        let last = (self.levels - 1) as f64;
        (0..self.levels).map(|j| j as f64 / last).collect()
    }

    pub fn build(&self) -> Result<IlluminatorModel> {
        if self.levels < 2 {
            return Err(Error::Domain(format!(
                "synthetic model needs at least 2 levels, got {}",
                self.levels
            )));
        }
        let w = self.level_vector();
        let w_low = w[1];
        let spectra = self
            .channels
            .iter()
            .map(|ch| {
                w.iter()
                    .map(|&wj| {
                        if wj == 0.0 {
                            return Spectrum::zeros().with_kind(SpectrumKind::Illuminant);
                        }
                        let drift = if w_low < 1.0 {
                            ch.shift_nm * (1.0 - wj) / (1.0 - w_low)
                        } else {
                            0.0
                        };
                        gaussian(ch.center_nm + drift, ch.fwhm_nm, ch.peak).scaled(wj)
                    })
                    .collect()
            })
            .collect();
        let names = self.channels.iter().map(|c| c.name.clone()).collect();
        IlluminatorModel::new(names, w, spectra)
    }
}

/// Per-channel drift of the emission peak relative to full drive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeakShift {
    pub channel: String,
    pub peak_full_nm: f64,
    /// Peak wavelength at every nonzero level, lowest first.
    pub peaks_nm: Vec<f64>,
    pub max_shift_nm: f64,
}

pub fn peak_shifts(model: &IlluminatorModel) -> Vec<PeakShift> {
    let last = model.levels().len() - 1;
    (0..model.channels())
        .map(|i| {
            let full = model.spectrum(i, last).peak_wavelength();
            let peaks: Vec<f64> = (1..=last)
                .map(|j| model.spectrum(i, j).peak_wavelength())
                .collect();
            let max_shift = peaks.iter().map(|p| (p - full).abs()).fold(0.0, f64::max);
            PeakShift {
                channel: model.names()[i].clone(),
                peak_full_nm: full,
                peaks_nm: peaks,
                max_shift_nm: max_shift,
            }
        })
        .collect()
}

/// u′v′ of one channel at one level and its distance from the full-drive
/// chromaticity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UvDrift {
    pub channel: String,
    pub level: f64,
    pub u: f64,
    pub v: f64,
    pub distance: f64,
}

pub fn uv_drift(model: &IlluminatorModel, cmf: &CmfSet) -> Result<Vec<UvDrift>> {
    let white = Spectrum::constant(1.0);
    let last = model.levels().len() - 1;
    let mut out = Vec::new();
    for i in 0..model.channels() {
        let (u1, v1) = uv_prime(xyz_of(model.spectrum(i, last), &white, cmf))?;
        for j in 1..=last {
            let (u, v) = uv_prime(xyz_of(model.spectrum(i, j), &white, cmf))?;
            out.push(UvDrift {
                channel: model.names()[i].clone(),
                level: model.levels()[j],
                u,
                v,
                distance: (u - u1).hypot(v - v1),
            });
        }
    }
    Ok(out)
}
