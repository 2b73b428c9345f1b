//! CSV rendering for matrices, bases and grid-shaped value maps.
//!
//! Numbers are written in scientific notation with 17 significant digits,
//! enough to round-trip an `f64` exactly.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::grid::GridSpec;
use crate::scalar::Scalar;

pub fn format_number<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// Row-major CSV, one matrix row per line, no header.
pub fn matrix_csv<T: Scalar>(m: &DMatrix<T>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|&x| format_number(x)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Single-column CSV.
pub fn vector_csv<T: Scalar>(v: &DVector<T>) -> String {
    v.iter().fold(String::new(), |mut out, &x| {
        let _ = writeln!(out, "{}", format_number(x));
        out
    })
}

/// CSV with a header row followed by one row per record.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// `height` lines of `width` fields, top row of the grid first; wall cells
/// are empty fields. `values` are in state-index order.
pub fn grid_csv<T: Scalar>(spec: &GridSpec, values: &[T]) -> String {
    let mut out = String::new();
    for row in spec.layout(values) {
        let line: Vec<String> = row
            .into_iter()
            .map(|v| v.map(format_number).unwrap_or_default())
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
