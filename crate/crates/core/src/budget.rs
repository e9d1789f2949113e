//! Noise budgets: tabulated ASD ingestion, resampling, quadrature sums and
//! improvement metrics.
//!
//! Tabulated curves use a two-column CSV:
//!
//! ```text
//! frequency_hz,asd_strain_per_sqrt_hz
//! # comment lines start with '#'
//! 10,1.5e-22
//! 20,4.1e-23
//! ```
//!
//! Spectral lines are neither modeled nor removed. Measured spectra should
//! be line-cleaned before they are fed to [`improvement_db`].

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "frequency_hz,asd_strain_per_sqrt_hz";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TabulatedAsd {
    pub label: String,
    pub source: String,
    frequencies: Vec<f64>,
    asd: Vec<f64>,
}

impl TabulatedAsd {
    pub fn new(
        label: impl Into<String>,
        frequencies: Vec<f64>,
        asd: Vec<f64>,
    ) -> Result<Self> {
        let source = "<memory>".to_string();
        if frequencies.len() != asd.len() {
            return Err(Error::LengthMismatch(format!(
                "{} frequencies but {} ASD values",
                frequencies.len(),
                asd.len()
            )));
        }
        let rows: Vec<(usize, f64, f64)> = frequencies
            .iter()
            .zip(&asd)
            .enumerate()
            .map(|(i, (&f, &a))| (i + 1, f, a))
            .collect();
        validate_rows(&source, &rows)?;
        Ok(Self {
            label: label.into(),
            source,
            frequencies,
            asd,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn asd(&self) -> &[f64] {
        &self.asd
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.frequencies[0], self.frequencies[self.len() - 1])
    }
}

fn validate_rows(source: &str, rows: &[(usize, f64, f64)]) -> Result<()> {
    let invalid = |line: usize, message: String| Error::Validation {
        path: source.to_string(),
        line,
        message,
    };
    if rows.len() < 2 {
        return Err(invalid(
            rows.last().map_or(1, |r| r.0),
            format!("need at least 2 data rows, found {}", rows.len()),
        ));
    }
    for &(line, f, a) in rows {
        if !(f.is_finite() && f > 0.0) {
            return Err(invalid(line, format!("frequency {f} is not positive")));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(invalid(line, format!("ASD value {a} is not positive")));
        }
    }
    for w in rows.windows(2) {
        if w[1].1 <= w[0].1 {
            return Err(invalid(
                w[1].0,
                format!(
                    "frequency {} does not increase past {} (line {})",
                    w[1].1, w[0].1, w[0].0
                ),
            ));
        }
    }
    Ok(())
}

/// Parses CSV text. `source` is used in error messages and recorded in the
/// table. Line numbers in errors are 1-based.
pub fn parse_asd(text: &str, label: impl Into<String>, source: &str) -> Result<TabulatedAsd> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.split('\n').enumerate().map(|(i, l)| {
        (i + 1, l.strip_suffix('\r').unwrap_or(l))
    });

    match lines.next() {
        Some((_, CSV_HEADER)) => {}
        Some((n, other)) => {
            return Err(parse_err(
                n,
                format!("expected header '{CSV_HEADER}', found '{other}'"),
            ))
        }
        None => return Err(parse_err(1, "empty file".into())),
    }

    let mut rows = Vec::new();
    let mut trailing_blank = None;
    for (n, line) in lines {
        if let Some(blank) = trailing_blank {
            return Err(parse_err(blank, "empty line".into()));
        }
        if line.is_empty() {
            // A final newline yields one empty piece; anything after it is an error.
            trailing_blank = Some(n);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(f), Some(a), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(n, format!("expected two comma-separated fields: '{line}'")));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(n, format!("'{s}' is not a decimal number")))
        };
        rows.push((n, num(f)?, num(a)?));
    }
    validate_rows(source, &rows)?;
    Ok(TabulatedAsd {
        label: label.into(),
        source: source.to_string(),
        frequencies: rows.iter().map(|r| r.1).collect(),
        asd: rows.iter().map(|r| r.2).collect(),
    })
}

/// Reads and validates a CSV file. The label defaults to the file stem.
pub fn ingest_asd(path: impl AsRef<Path>) -> Result<TabulatedAsd> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_asd(&text, label, &path.display().to_string())
}

/// Writes a curve in the CSV format. Values use the shortest decimal form
/// that parses back to the same `f64`.
pub fn write_asd<W: Write>(mut out: W, frequencies: &[f64], asd: &[f64]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for (f, a) in frequencies.iter().zip(asd) {
        writeln!(out, "{f},{a:e}")?;
    }
    Ok(())
}

pub fn format_asd(frequencies: &[f64], asd: &[f64]) -> String {
    let mut buf = Vec::new();
    write_asd(&mut buf, frequencies, asd).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("formatted numbers are ASCII")
}

/// Log-log linear interpolation of `table` onto `grid`. Grid points outside
/// the tabulated span are rejected.
pub fn resample(table: &TabulatedAsd, grid: &[f64]) -> Result<Vec<f64>> {
    let (min, max) = table.span();
    let fs = &table.frequencies;
    grid.iter()
        .map(|&f| {
            if !(f >= min && f <= max) {
                return Err(Error::OutOfRange {
                    frequency: f,
                    min,
                    max,
                });
            }
            let i = fs.partition_point(|&x| x < f);
            if fs[i] == f {
                return Ok(table.asd[i]);
            }
            let (f0, f1) = (fs[i - 1], fs[i]);
            let (a0, a1) = (table.asd[i - 1], table.asd[i]);
            let t = (f / f0).ln() / (f1 / f0).ln();
            Ok((a0.ln() + t * (a1 / a0).ln()).exp())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Component {
    pub label: String,
    pub asd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBudget {
    pub grid: Vec<f64>,
    pub components: Vec<Component>,
    pub total: Vec<f64>,
}

impl NoiseBudget {
    pub fn component(&self, label: &str) -> Option<&[f64]> {
        self.components
            .iter()
            .find(|c| c.label == label)
            .map(|c| c.asd.as_slice())
    }
}

/// Quadrature sum of independent noise contributions. The per-point sum is
/// taken over the squared values in ascending order, so the total does not
/// depend on component order.
pub fn compose(grid: &[f64], components: Vec<(String, Vec<f64>)>) -> Result<NoiseBudget> {
    if components.is_empty() {
        return Err(Error::invalid("a budget needs at least one component"));
    }
    for (i, (label, asd)) in components.iter().enumerate() {
        if asd.len() != grid.len() {
            return Err(Error::LengthMismatch(format!(
                "component '{label}' has {} values for a {}-point grid",
                asd.len(),
                grid.len()
            )));
        }
        if components[..i].iter().any(|(l, _)| l == label) {
            return Err(Error::invalid(format!("duplicate component label '{label}'")));
        }
        if let Some(j) = asd.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::NonFinite {
                what: format!("component '{label}'"),
                frequency: grid[j],
            });
        }
    }

    let mut squares = Vec::with_capacity(components.len());
    let total = (0..grid.len())
        .map(|j| {
            squares.clear();
            squares.extend(components.iter().map(|(_, a)| a[j] * a[j]));
            squares.sort_by(f64::total_cmp);
            squares.iter().sum::<f64>().sqrt()
        })
        .collect();

    Ok(NoiseBudget {
        grid: grid.to_vec(),
        components: components
            .into_iter()
            .map(|(label, asd)| Component { label, asd })
            .collect(),
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Improvement {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Median over the band of the point-wise improvement, dB.
    pub median_db: f64,
    /// Largest point-wise improvement in the band, dB.
    pub max_db: f64,
    /// Frequency at which `max_db` occurs.
    pub max_at_hz: f64,
    pub points: usize,
}

/// Point-wise `20·log10(reference / squeezed)` of the budget totals over
/// `[f_lo, f_hi]`, summarized by its median and maximum.
pub fn improvement_db(
    reference: &NoiseBudget,
    squeezed: &NoiseBudget,
    band: (f64, f64),
) -> Result<Improvement> {
    if reference.grid != squeezed.grid {
        return Err(Error::invalid("budgets are on different grids"));
    }
    let (f_lo, f_hi) = band;
    let grid = &reference.grid;
    let (g_lo, g_hi) = (grid[0], grid[grid.len() - 1]);
    if !(f_lo < f_hi && f_lo >= g_lo && f_hi <= g_hi) {
        return Err(Error::invalid(format!(
            "band [{f_lo}, {f_hi}] Hz is not inside the grid [{g_lo}, {g_hi}] Hz"
        )));
    }
    let mut gains: Vec<(f64, f64)> = grid
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= f_lo && f <= f_hi)
        .map(|(i, &f)| (20.0 * (reference.total[i] / squeezed.total[i]).log10(), f))
        .collect();
    if gains.is_empty() {
        return Err(Error::invalid(format!(
            "band [{f_lo}, {f_hi}] Hz contains no grid points"
        )));
    }
    let (max_db, max_at_hz) = gains
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, f64::NAN), |best, g| if g.0 > best.0 { g } else { best });
    gains.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = gains.len();
    let median_db = if n % 2 == 1 {
        gains[n / 2].0
    } else {
        0.5 * (gains[n / 2 - 1].0 + gains[n / 2].0)
    };
    Ok(Improvement {
        f_lo,
        f_hi,
        median_db,
        max_db,
        max_at_hz,
        points: n,
    })
}

/// Fractional increase of stored power that would buy the same shot-noise
/// reduction as `improvement_db` of squeezing (shot-noise ASD ∝ 1/√P).
pub fn equivalent_power_increase(improvement_db: f64) -> Result<f64> {
    if !(improvement_db.is_finite() && improvement_db >= 0.0) {
        return Err(Error::invalid(format!(
            "improvement must be a non-negative number of dB, got {improvement_db}"
        )));
    }
    Ok(10f64.powf(improvement_db / 10.0) - 1.0)
}
