//! Plot-ready CSV output.
//!
//! Every table uses the same dialect: comma separated, `.` decimal point,
//! floats in scientific notation with 17 significant digits (lossless for
//! `f64`), a mandatory header row and LF line endings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::params::Surface;

/// Formats a float with 17 significant digits, e.g. `1.0000000000000000e2`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A header plus rows of already-formatted cells.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Appends a row of floats.
    pub fn push_f64(&mut self, row: &[f64]) {
        self.push(row.iter().copied().map(fmt_f64).collect());
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(w);
        wtr.write_record(&self.header)?;
        for row in &self.rows {
            wtr.write_record(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Surface as a matrix: the header is `x` followed by the `z` coordinates,
/// each row starts with its `x` coordinate.
pub fn surface_table(s: &Surface) -> Table {
    let g = s.grid();
    let mut t = Table::new(std::iter::once("x".to_string()).chain(g.z.iter().map(|&z| fmt_f64(z))));
    for (i, &x) in g.x.iter().enumerate() {
        let mut row = Vec::with_capacity(g.n_z() + 1);
        row.push(fmt_f64(x));
        row.extend(s.values().row(i).iter().map(|&v| fmt_f64(v)));
        t.push(row);
    }
    t
}
