//! JSON characterization manifest.
//!
//! The manifest names a spectral CSV (relative paths resolve against the
//! manifest's directory) and maps every (channel, level) pair, both 1-based,
//! to one column of it.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IlluminatorModel;
use crate::error::{Error, Result};
use crate::io::{round_sig, SpectralTable};
use crate::spectral::{Spectrum, SpectrumKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub channel: usize,
    pub level: usize,
    pub column: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub channels: usize,
    pub levels: usize,
    pub w: Vec<f64>,
    pub spectra_csv: String,
    #[serde(default)]
    pub channel_names: Vec<String>,
    pub entries: Vec<Entry>,
}

fn column_name(name: &str, level: usize) -> String {
    format!("{name}@L{level:02}")
}

impl Manifest {
    /// Builds the model from the manifest and an already-loaded table.
    pub fn to_model(&self, table: &SpectralTable) -> Result<IlluminatorModel> {
        let mut problems = Vec::new();
        if self.w.len() != self.levels {
            problems.push(format!(
                "manifest declares {} levels but w has {} entries",
                self.levels,
                self.w.len()
            ));
        }
        let mut cells: Vec<Vec<Option<Spectrum>>> = vec![vec![None; self.levels]; self.channels];
        let index: HashMap<&str, usize> = table
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        for e in &self.entries {
            if e.channel == 0 || e.channel > self.channels || e.level == 0 || e.level > self.levels
            {
                problems.push(format!(
                    "entry (channel {}, level {}) out of range",
                    e.channel, e.level
                ));
                continue;
            }
            let Some(&col) = index.get(e.column.as_str()) else {
                problems.push(format!(
                    "channel {} level {}: column `{}` not in spectra CSV",
                    e.channel, e.level, e.column
                ));
                continue;
            };
            let cell = &mut cells[e.channel - 1][e.level - 1];
            if cell.is_some() {
                problems.push(format!(
                    "channel {} level {}: listed more than once",
                    e.channel, e.level
                ));
            }
            match table.spectrum(col, SpectrumKind::Illuminant) {
                Ok(s) => *cell = Some(s),
                Err(err) => {
                    problems.push(format!("channel {} level {}: {err}", e.channel, e.level))
                }
            }
        }
        for (i, row) in cells.iter().enumerate() {
            for (j, cell) in row.iter().enumerate() {
                if cell.is_none() {
                    problems.push(format!("channel {} level {}: missing", i + 1, j + 1));
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let names = if self.channel_names.is_empty() {
            (1..=self.channels).map(|i| format!("ch{i}")).collect()
        } else {
            self.channel_names.clone()
        };
        let spectra = cells
            .into_iter()
            .map(|row| row.into_iter().map(Option::unwrap).collect())
            .collect();
        IlluminatorModel::new(names, self.w.clone(), spectra)
    }

    /// Manifest and table describing `model`, with the CSV named `csv_name`.
    pub fn from_model(model: &IlluminatorModel, csv_name: &str) -> (Self, SpectralTable) {
        let mut entries = Vec::new();
        let mut items: Vec<(String, &Spectrum)> = Vec::new();
        for i in 0..model.channels() {
            for j in 0..model.levels().len() {
                let column = column_name(&model.names()[i], j + 1);
                items.push((column.clone(), model.spectrum(i, j)));
                entries.push(Entry {
                    channel: i + 1,
                    level: j + 1,
                    column,
                });
            }
        }
        let table = SpectralTable::from_spectra(items.iter().map(|(n, s)| (n.as_str(), *s)));
        let manifest = Self {
            channels: model.channels(),
            levels: model.levels().len(),
            w: model.levels().iter().map(|w| round_sig(*w)).collect(),
            spectra_csv: csv_name.to_string(),
            channel_names: model.names().to_vec(),
            entries,
        };
        (manifest, table)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Reads a manifest and its spectra.
pub fn read_model(path: impl AsRef<Path>) -> Result<IlluminatorModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let manifest = Manifest::parse(&text)?;
    let csv = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.spectra_csv);
    manifest.to_model(&SpectralTable::read(csv)?)
}

/// Writes `<dir>/<stem>.json` and `<dir>/<stem>.csv`.
pub fn write_model(model: &IlluminatorModel, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    let csv_name = format!("{stem}.csv");
    let (manifest, table) = Manifest::from_model(model, &csv_name);
    table.write(dir.join(&csv_name))?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    std::fs::write(dir.join(format!("{stem}.json")), json)?;
    Ok(())
}
