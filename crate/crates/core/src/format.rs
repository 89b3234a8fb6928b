//! Canonical text output: every float is written with 17 significant digits
//! (`{:.16e}`), which round-trips exactly through `f64` parsing.

use std::io::{self, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::ser::Formatter;

use crate::error::{Error, Result};

/// Compact JSON with floats in canonical scientific notation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalFormatter;

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::InvalidInput(format!("cannot serialise: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

/// `{:.16e}`, with `NaN`, `inf` and `-inf` for non-finite values.
pub fn float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::InvalidInput(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// CSV text with the given header; each row is already formatted.
pub fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    for row in rows {
        w.write_record(&row)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

/// `omega,re,im,abs`
pub fn response_csv(grid: &[f64], values: &[Complex64]) -> Result<String> {
    csv_string(
        &["omega", "re", "im", "abs"],
        grid.iter()
            .zip(values.iter())
            .map(|(w, z)| vec![float(*w), float(z.re), float(z.im), float(z.norm())]),
    )
}

/// `omega,rel_error`
pub fn relative_error_csv(grid: &[f64], values: &[f64]) -> Result<String> {
    csv_string(
        &["omega", "rel_error"],
        grid.iter().zip(values.iter()).map(|(w, v)| vec![float(*w), float(*v)]),
    )
}

/// A complex number as `[re, im]` in JSON.
pub fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}
