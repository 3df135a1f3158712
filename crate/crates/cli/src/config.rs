//! Run configuration and input loading.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use matched_illum::colorimetry::CmfSet;
use matched_illum::datasets;
use matched_illum::illuminator::manifest::read_model;
use matched_illum::illuminator::synthetic::SyntheticConfig;
use matched_illum::illuminator::{IlluminatorModel, RenderMode};
use matched_illum::io::SpectralTable;
use matched_illum::matcher::{DEFAULT_MAX_ITERS, DEFAULT_TOL};
use matched_illum::spectral::{SensorSet, Spectrum, SpectrumKind};
use matched_illum::synth::AchromaticChoice;
use matched_illum::Error;
use serde::{Deserialize, Serialize};

use crate::Failure;

/// A reflectance set name and its named spectra.
pub type NamedSet = (String, Vec<(String, Spectrum)>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Simple,
    Complex,
    Both,
}

impl ModeArg {
    pub fn modes(self) -> Vec<RenderMode> {
        match self {
            ModeArg::Simple => vec![RenderMode::Simple],
            ModeArg::Complex => vec![RenderMode::Complex],
            ModeArg::Both => vec![RenderMode::Simple, RenderMode::Complex],
        }
    }
}

/// Which light the ground-truth XYZ is computed under.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureLight {
    /// The illuminator's complex-mode metamer of the target.
    #[default]
    Metamer,
    /// The target spectrum itself.
    Target,
}

/// Everything one experiment depends on. Paths are relative to the config
/// file's directory; command-line flags override fields.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Three-column spectral CSV; defaults to the bundled Nikon D5100.
    pub camera: Option<PathBuf>,
    /// Characterization manifest; defaults to the synthetic design.
    pub illuminator: Option<PathBuf>,
    /// Generator parameters used when no manifest is given.
    pub synthetic: Option<SyntheticConfig>,
    /// Reflectance CSVs for evaluation; defaults to the ColorChecker and the
    /// 1995-spectrum surrogate.
    pub reflectances: Vec<PathBuf>,
    /// Observer override (three-column CSV).
    pub cmf: Option<PathBuf>,
    /// `D65`, `A`, or a spectral CSV (first column used).
    pub target: Option<String>,
    pub measure: MeasureLight,
    pub mode: Option<ModeArg>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub out: Option<PathBuf>,
    /// Seed of the surrogate reflectance set.
    pub seed: Option<u64>,
    pub achromatic: Option<AchromaticChoice>,
    pub white_balance: bool,
    pub holdout_every: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.camera.iter_mut().for_each(rebase);
        cfg.illuminator.iter_mut().for_each(rebase);
        cfg.cmf.iter_mut().for_each(rebase);
        cfg.out.iter_mut().for_each(rebase);
        cfg.reflectances.iter_mut().for_each(rebase);
        if let Some(t) = &cfg.target {
            if !is_builtin_illuminant(t) {
                let mut p = PathBuf::from(t);
                rebase(&mut p);
                cfg.target = Some(p.to_string_lossy().into_owned());
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let mut missing = Vec::new();
        let files = self
            .camera
            .iter()
            .chain(&self.illuminator)
            .chain(&self.cmf)
            .chain(&self.reflectances);
        for p in files {
            if !p.is_file() {
                missing.push(p.display().to_string());
            }
        }
        if let Some(t) = &self.target {
            if !is_builtin_illuminant(t) && !Path::new(t).is_file() {
                missing.push(t.clone());
            }
        }
        if !missing.is_empty() {
            return Err(Failure::Usage(format!(
                "missing input files: {}",
                missing.join(", ")
            )));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Failure::Usage(format!("tol must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn tol(&self) -> f64 {
        self.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters.unwrap_or(DEFAULT_MAX_ITERS)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(datasets::SURROGATE_SEED)
    }

    pub fn camera(&self) -> Result<SensorSet, Error> {
        match &self.camera {
            Some(p) => datasets::sensors_from_table(&SpectralTable::read(p)?),
            None => Ok(datasets::nikon_d5100()),
        }
    }

    pub fn cmf(&self) -> Result<CmfSet, Error> {
        match &self.cmf {
            Some(p) => datasets::cmf_from_table(&SpectralTable::read(p)?),
            None => Ok(datasets::cie1931()),
        }
    }

    pub fn model(&self) -> Result<IlluminatorModel, Error> {
        match (&self.illuminator, &self.synthetic) {
            (Some(p), _) => read_model(p),
            (None, Some(s)) => s.build(),
            (None, None) => SyntheticConfig::default().build(),
        }
    }

    /// Target name and spectrum.
    pub fn target(&self) -> Result<(String, Spectrum), Error> {
        let name = self.target.clone().unwrap_or_else(|| "D65".into());
        let s = match name.to_ascii_lowercase().as_str() {
            "d65" => datasets::d65(),
            "a" => datasets::illuminant_a(),
            _ => SpectralTable::read(&name)?.spectrum(0, SpectrumKind::Illuminant)?,
        };
        Ok((name, s))
    }

    /// Named reflectance sets.
    pub fn reflectance_sets(&self) -> Result<Vec<NamedSet>, Error> {
        if self.reflectances.is_empty() {
            return Ok(vec![
                ("macbeth".into(), datasets::colorchecker()),
                ("sfu_surrogate".into(), datasets::sfu_surrogate(self.seed())),
            ]);
        }
        self.reflectances
            .iter()
            .map(|p| {
                let name = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string());
                Ok((name, read_reflectances(p)?))
            })
            .collect()
    }
}

pub fn read_reflectances(p: &Path) -> Result<Vec<(String, Spectrum)>, Error> {
    SpectralTable::read(p)?.spectra(SpectrumKind::Reflectance)
}

fn is_builtin_illuminant(name: &str) -> bool {
    matches!(name.to_ascii_lowercase().as_str(), "d65" | "a")
}
