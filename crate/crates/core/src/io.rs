//! File formats shared by the command-line tools.
//!
//! * Matrices: UTF-8 CSV with a header row, `.` decimal separator and
//!   shortest round-trip float formatting (lossless for `f64`).
//! * Image tensors: three little-endian `u32` dimensions
//!   (height, width, channels) followed by little-endian `f32` values in
//!   row-major, channel-innermost order.
//!
//! All writers go through [`write_atomic`], so an interrupted or failed
//! command never leaves a partial file behind.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::Matrix;

/// Writes `bytes` to a temporary sibling of `path`, then renames it into
/// place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid("path", format!("`{}` has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// `f1..fL`
pub fn feature_header(cols: usize) -> Vec<String> {
    (1..=cols).map(|j| format!("f{j}")).collect()
}

pub fn matrix_to_csv(m: &Matrix, header: &[String]) -> Result<String> {
    if header.len() != m.ncols() {
        return Err(Error::shape(format!("{} header fields", m.ncols()), header.len()));
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in m.row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_matrix_csv(path: &Path, m: &Matrix, header: &[String]) -> Result<()> {
    write_atomic(path, matrix_to_csv(m, header)?.as_bytes())
}

pub fn write_feature_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_matrix_csv(path, m, &feature_header(m.ncols()))
}

pub fn write_vector_csv(path: &Path, name: &str, values: &[f64]) -> Result<()> {
    let m = Matrix::from_column_slice(values.len(), 1, values);
    write_matrix_csv(path, &m, &[name.to_string()])
}

/// Parses a numeric CSV with a header row. Returns the header and the
/// matrix; errors name the offending line.
pub fn parse_matrix_csv(text: &str, source_name: &str) -> Result<(Vec<String>, Matrix)> {
    let parse_err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(parse_err(1, "missing header row".into()));
    }
    let cols = header.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        if record.len() != cols {
            return Err(parse_err(line, format!("expected {cols} fields, found {}", record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column `{}`: `{field}` is not a number", header[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column `{}`: non-finite value", header[j])));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(2, "no data rows".into()));
    }
    Ok((header, Matrix::from_row_slice(rows, cols, &values)))
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Matrix)> {
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text, &path.display().to_string())
}

pub fn encode_tensor(image: &Image) -> Vec<u8> {
    let (h, w, c) = image.shape();
    let mut out = Vec::with_capacity(12 + 4 * image.data().len());
    for d in [h, w, c] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in image.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Image> {
    let bad = |msg: String| Error::Parse {
        source_name: "tensor".into(),
        line: 0,
        message: msg,
    };
    if bytes.len() < 12 {
        return Err(bad("truncated header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap()) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let expected = 12 + 4 * h * w * c;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes for {h}x{w}x{c}, got {}", bytes.len())));
    }
    let data = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Image::from_vec(h, w, c, data)
}

pub fn write_tensor(path: &Path, image: &Image) -> Result<()> {
    write_atomic(path, &encode_tensor(image))
}

pub fn read_tensor(path: &Path) -> Result<Image> {
    decode_tensor(&fs::read(path)?)
}
