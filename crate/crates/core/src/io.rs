//! CSV input and output with bit-stable number formatting.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Density, Grid};

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// A cell in an output row.
pub enum Field {
    Num(f64),
    Opt(Option<f64>),
    Int(u64),
    Text(String),
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<Option<f64>> for Field {
    fn from(v: Option<f64>) -> Self {
        Field::Opt(v)
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(v) => fmt_f64(*v),
            Field::Opt(v) => fmt_opt(*v),
            Field::Int(v) => v.to_string(),
            Field::Text(s) => s.clone(),
        }
    }
}

/// Writes a header row and data rows, comma separated with `\n` line ends.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<Field>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::param("csv", format!("row has {} fields, header {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(Field::render))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `(x, n)` at cell centres.
pub fn write_density(path: &Path, density: &Density) -> Result<()> {
    write_csv(path, &["x", "n"], density.samples().map(|(x, v)| vec![x.into(), v.into()]))
}

/// First two numeric columns of a CSV file with a header row.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |k: usize| -> Result<f64> {
            record
                .get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::param("csv", format!("{}: row {} column {} is not a number", path.display(), line + 2, k + 1)))
        };
        xs.push(parse(0)?);
        ys.push(parse(1)?);
    }
    if xs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param("csv", format!("{}: first column must be sorted", path.display())));
    }
    Ok((xs, ys))
}

/// Reads `(x, n)` samples, interpolates them linearly onto the grid and
/// normalizes to unit mass.
pub fn read_density(path: &Path, grid: Grid) -> Result<Density> {
    let (xs, ys) = read_two_columns(path)?;
    if xs.len() < 2 {
        return Err(Error::param("csv", "need at least two samples"));
    }
    let f = |x: f64| {
        if x < xs[0] || x > xs[xs.len() - 1] {
            return 0.0;
        }
        let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
        let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
        ys[k - 1] + w * (ys[k] - ys[k - 1])
    };
    Density::from_fn(grid, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        write_csv(&path, &["x", "y"], (0..3).map(|k| vec![(k as f64).into(), (0.5 * k as f64).into()])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,y\n0.0000000000000000e0,"));
        assert!(!text.contains('\r'));
        let (xs, ys) = read_two_columns(&path).unwrap();
        assert_eq!(xs, vec![0.0, 1.0, 2.0]);
        assert_eq!(ys, vec![0.0, 0.5, 1.0]);
    }
}
