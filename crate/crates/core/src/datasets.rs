//! Embedded reference data.
//!
//! All tables ship as spectral CSV at their native 5 nm sampling over
//! 380-780 nm and go through [`resample`](crate::spectral::resample) like any
//! user-supplied file. Sources are listed in `data/SOURCES.md`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::colorimetry::CmfSet;
use crate::io::SpectralTable;
use crate::spectral::{Matrix31x3, SensorSet, Spectrum, SpectrumKind};

pub const CIE1931_CSV: &str = include_str!("../data/cie1931_2deg.csv");
pub const D65_CSV: &str = include_str!("../data/cie_d65.csv");
pub const A_CSV: &str = include_str!("../data/cie_a.csv");
pub const NIKON_D5100_CSV: &str = include_str!("../data/nikon_d5100_npl.csv");
pub const COLORCHECKER_CSV: &str = include_str!("../data/colorchecker_ohta.csv");
pub const AMPAS_190_CSV: &str = include_str!("../data/ampas_190.csv");
pub const CFI_99_CSV: &str = include_str!("../data/cie_cfi2017_99.csv");
pub const TCS_14_CSV: &str = include_str!("../data/cie_tcs14.csv");
pub const CQS_15_CSV: &str = include_str!("../data/nist_cqs15.csv");

/// Size of the SFU-style benchmark set.
pub const SURROGATE_SIZE: usize = 1995;
pub const SURROGATE_SEED: u64 = 1995;

fn table(csv: &str) -> SpectralTable {
    SpectralTable::parse(csv).expect("embedded table parses")
}

fn first_column(csv: &str, kind: SpectrumKind) -> Spectrum {
    table(csv)
        .spectrum(0, kind)
        .expect("embedded table covers the grid")
}

fn cached<T: Clone>(cell: &'static OnceLock<T>, init: impl FnOnce() -> T) -> T {
    cell.get_or_init(init).clone()
}

/// CIE 1931 2° standard observer.
pub fn cie1931() -> CmfSet {
    static CELL: OnceLock<CmfSet> = OnceLock::new();
    cached(&CELL, || {
        cmf_from_table(&table(CIE1931_CSV)).expect("valid CIE 1931 table")
    })
}

pub fn cmf_from_table(t: &SpectralTable) -> crate::Result<CmfSet> {
    let cols = three_columns(t)?;
    CmfSet::new(Matrix31x3::from_fn(|i, k| cols[k][i]))
}

pub fn sensors_from_table(t: &SpectralTable) -> crate::Result<SensorSet> {
    let cols = three_columns(t)?;
    SensorSet::from_columns([&cols[0], &cols[1], &cols[2]])
}

fn three_columns(t: &SpectralTable) -> crate::Result<[Spectrum; 3]> {
    if t.names.len() != 3 {
        return Err(crate::Error::Format(format!(
            "expected 3 data columns, found {}",
            t.names.len()
        )));
    }
    Ok([
        t.spectrum(0, SpectrumKind::Generic)?,
        t.spectrum(1, SpectrumKind::Generic)?,
        t.spectrum(2, SpectrumKind::Generic)?,
    ])
}

/// CIE standard illuminant D65, relative SPD (100 at 560 nm).
pub fn d65() -> Spectrum {
    static CELL: OnceLock<Spectrum> = OnceLock::new();
    cached(&CELL, || first_column(D65_CSV, SpectrumKind::Illuminant))
}

/// CIE standard illuminant A.
pub fn illuminant_a() -> Spectrum {
    static CELL: OnceLock<Spectrum> = OnceLock::new();
    cached(&CELL, || first_column(A_CSV, SpectrumKind::Illuminant))
}

/// D65 at its native 5 nm sampling.
pub fn d65_table() -> SpectralTable {
    table(D65_CSV)
}

/// Nikon D5100 sensitivities as measured by NPL.
pub fn nikon_d5100() -> SensorSet {
    static CELL: OnceLock<SensorSet> = OnceLock::new();
    cached(&CELL, || {
        sensors_from_table(&table(NIKON_D5100_CSV)).expect("valid camera")
    })
}

fn reflectances(csv: &str) -> Vec<(String, Spectrum)> {
    table(csv)
        .spectra(SpectrumKind::Reflectance)
        .expect("embedded reflectances are valid")
}

/// The 24 ColorChecker patches: 18 chromatic, then 6 neutrals from white to
/// black.
pub fn colorchecker() -> Vec<(String, Spectrum)> {
    static CELL: OnceLock<Vec<(String, Spectrum)>> = OnceLock::new();
    cached(&CELL, || reflectances(COLORCHECKER_CSV))
}

/// Every measured reflectance shipped with the crate (342 spectra).
pub fn measured_reflectances() -> Vec<(String, Spectrum)> {
    static CELL: OnceLock<Vec<(String, Spectrum)>> = OnceLock::new();
    cached(&CELL, || {
        let mut all = Vec::new();
        for (prefix, csv) in [
            ("ampas", AMPAS_190_CSV),
            ("cfi", CFI_99_CSV),
            ("tcs", TCS_14_CSV),
            ("cqs", CQS_15_CSV),
            ("macbeth", COLORCHECKER_CSV),
        ] {
            all.extend(
                reflectances(csv)
                    .into_iter()
                    .map(|(n, s)| (format!("{prefix}/{n}"), s)),
            );
        }
        all
    })
}

/// A 1995-spectrum benchmark in the spirit of the SFU composite set: all
/// measured reflectances, topped up with two-component convex mixtures of
/// randomly paired measured spectra (weight uniform in [0.2, 0.8]).
pub fn sfu_surrogate(seed: u64) -> Vec<(String, Spectrum)> {
    let base = measured_reflectances();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = base.clone();
    while out.len() < SURROGATE_SIZE {
        let a = rng.random_range(0..base.len());
        let b = rng.random_range(0..base.len());
        if a == b {
            continue;
        }
        let w: f64 = rng.random_range(0.2..0.8);
        let mix = &base[a].1.scaled(w) + &base[b].1.scaled(1.0 - w);
        out.push((
            format!("mix{:04}", out.len()),
            mix.with_kind(SpectrumKind::Reflectance),
        ));
    }
    out
}
