use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linear::ConstraintMatrix;
use crate::pauli::{OperatorBasis, PauliString};

/// Default tolerance beyond the physical range `[-2, 2]` of an expectation difference.
pub const DEFAULT_SLACK: f64 = 0.05;

/// Reads a constraint matrix from a CSV of `<O>_0 - <O>_t` differences.
///
/// The header names basis operators in any order (`X0 Z1` notation); columns
/// are reordered to the basis order. Lines starting with `#` are ignored.
/// Rows and columns in error messages are 1-based, counting the header as row 1.
pub fn ingest_external(path: &Path, basis: &OperatorBasis, slack: f64) -> Result<ConstraintMatrix> {
    let cell = |row: usize, column: usize, message: String| Error::Cell {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let header = reader
        .headers()
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        .clone();
    let n = basis.len();
    if header.len() != n {
        return Err(cell(
            1,
            header.len().min(n) + 1,
            format!("header has {} columns but the basis has {n} operators", header.len()),
        ));
    }
    // target[k] = basis position of CSV column k
    let mut target = vec![0usize; n];
    let mut seen = vec![false; n];
    for (k, name) in header.iter().enumerate() {
        let s = PauliString::parse(name, basis.site_count()).map_err(|e| cell(1, k + 1, e.to_string()))?;
        let pos = basis
            .position(&s)
            .ok_or_else(|| cell(1, k + 1, format!("operator {name:?} is not in the basis")))?;
        if seen[pos] {
            return Err(cell(1, k + 1, format!("operator {name:?} appears twice")));
        }
        seen[pos] = true;
        target[k] = pos;
    }
    let limit = 2.0 + slack;
    let mut flat = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row_no = r + 2;
        let record = record.map_err(|e| cell(row_no, 1, e.to_string()))?;
        if record.len() != n {
            return Err(cell(row_no, record.len().min(n) + 1, format!("expected {n} cells, found {}", record.len())));
        }
        let mut values = vec![0.0; n];
        for (k, text) in record.iter().enumerate() {
            let v: f64 = text
                .parse()
                .map_err(|_| cell(row_no, k + 1, format!("{text:?} is not a number")))?;
            if !v.is_finite() {
                return Err(cell(row_no, k + 1, format!("{text:?} is not finite")));
            }
            if v.abs() > limit {
                return Err(cell(row_no, k + 1, format!("{v} lies outside [-{limit}, {limit}]")));
            }
            values[target[k]] = v;
        }
        flat.extend(values);
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Validation(format!("{}: no data rows", path.display())));
    }
    let entries = Array2::from_shape_vec((rows, n), flat).expect("every row has n cells");
    ConstraintMatrix::from_entries(entries, basis.names())
}
