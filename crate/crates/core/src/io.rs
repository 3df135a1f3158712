//! Spectral CSV files and stable number formatting.
//!
//! Spectral CSV: header `wavelength_nm,<name1>,<name2>,...`, one row per
//! wavelength, `.` as decimal point. Cameras, illuminants, reflectance sets
//! and illuminator characterizations all use it.

use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{resample, SpectralGrid, Spectrum, SpectrumKind, N};

/// Significant digits written to every output file.
pub const SIG_DIGITS: usize = 12;

/// Rounds to `SIG_DIGITS` significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIG_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal text of `round_sig(x)`.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        // normalizes -0
        return "0".to_string();
    }
    format!("{r}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTable {
    pub wavelengths: Vec<f64>,
    pub names: Vec<String>,
    /// One column per name, aligned with `wavelengths`.
    pub columns: Vec<Vec<f64>>,
}

impl SpectralTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("wavelength_nm") {
            return Err(Error::Format(format!(
                "spectral CSV must start with `wavelength_nm`, found `{}`",
                headers.get(0).unwrap_or("")
            )));
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        if names.is_empty() {
            return Err(Error::Format("spectral CSV has no data columns".into()));
        }
        let mut wavelengths = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() + 1 {
                return Err(Error::Format(format!(
                    "row {}: expected {} fields, got {}",
                    line + 2,
                    names.len() + 1,
                    rec.len()
                )));
            }
            let mut parsed = rec.iter().map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Format(format!("row {}: `{f}`: {e}", line + 2)))
            });
            wavelengths.push(parsed.next().unwrap()?);
            for col in columns.iter_mut() {
                col.push(parsed.next().unwrap()?);
            }
        }
        Ok(Self {
            wavelengths,
            names,
            columns,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Table on the visible grid built from named spectra.
    pub fn from_spectra<'a>(items: impl IntoIterator<Item = (&'a str, &'a Spectrum)>) -> Self {
        let grid = SpectralGrid::VISIBLE;
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for (name, s) in items {
            names.push(name.to_string());
            columns.push(s.values().to_vec());
        }
        Self {
            wavelengths: grid.wavelengths().collect(),
            names,
            columns,
        }
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// Resamples one column onto the visible grid.
    pub fn spectrum(&self, index: usize, kind: SpectrumKind) -> Result<Spectrum> {
        let raw: Vec<(f64, f64)> = self
            .wavelengths
            .iter()
            .copied()
            .zip(self.columns[index].iter().copied())
            .collect();
        let s = resample(&raw, &SpectralGrid::VISIBLE).map_err(|e| match e {
            Error::Range(m) => Error::Range(format!("column `{}`: {m}", self.names[index])),
            Error::Format(m) => Error::Format(format!("column `{}`: {m}", self.names[index])),
            other => other,
        })?;
        match kind {
            SpectrumKind::Reflectance => Spectrum::reflectance(*s.values())
                .map_err(|e| Error::Domain(format!("column `{}`: {e}", self.names[index]))),
            k => Ok(s.with_kind(k)),
        }
    }

    /// All columns resampled onto the visible grid, paired with their names.
    pub fn spectra(&self, kind: SpectrumKind) -> Result<Vec<(String, Spectrum)>> {
        (0..self.names.len())
            .map(|i| Ok((self.names[i].clone(), self.spectrum(i, kind)?)))
            .collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("wavelength_nm");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (r, w) in self.wavelengths.iter().enumerate() {
            out.push_str(&fmt_num(*w));
            for col in &self.columns {
                out.push(',');
                out.push_str(&fmt_num(col[r]));
            }
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Spectra as a 31-row table, for writing rendered lights.
pub fn spectra_csv<'a>(items: impl IntoIterator<Item = (&'a str, &'a Spectrum)>) -> String {
    let t = SpectralTable::from_spectra(items);
    debug_assert!(t.wavelengths.len() == N);
    t.to_csv_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_twelve_digits() {
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(123_456_789.123_456_78), "123456789.123");
    }

    #[test]
    fn parse_and_write_roundtrip() {
        let text = "wavelength_nm,a,b\n400,1,2\n700,3,4\n";
        let t = SpectralTable::parse(text).unwrap();
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.column("b").unwrap(), &[2.0, 4.0]);
        assert_eq!(SpectralTable::parse(&t.to_csv_string()).unwrap(), t);
        let s = t.spectrum(0, SpectrumKind::Generic).unwrap();
        assert!((s[15] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bad_header_and_rows() {
        assert!(matches!(
            SpectralTable::parse("nm,a\n400,1\n"),
            Err(Error::Format(_))
        ));
        assert!(SpectralTable::parse("wavelength_nm,a\n400,x\n").is_err());
        assert!(SpectralTable::parse("wavelength_nm,a\n400,1,2\n").is_err());
    }

    #[test]
    fn reflectance_columns_are_validated() {
        let t = SpectralTable::parse("wavelength_nm,r\n400,0.5\n700,1.5\n").unwrap();
        assert!(t.spectrum(0, SpectrumKind::Reflectance).is_err());
        assert!(t.spectrum(0, SpectrumKind::Generic).is_ok());
    }
}
