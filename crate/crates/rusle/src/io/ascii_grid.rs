//! ESRI ASCII grid reader and writer.
//!
//! The format is a short header (`ncols`, `nrows`, `xllcorner`, `yllcorner`,
//! `cellsize`, optional `nodata_value`) followed by `nrows` lines of
//! whitespace-separated cell values, northernmost row first.
//!
//! Values are written with Rust's shortest round-trip `f64` formatting, so
//! write -> read reproduces every cell bit for bit. Cells equal to the
//! nodata sentinel (bitwise, after parsing) become NaN in memory; NaN cells
//! are written back as the sentinel.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{GridSpec, Raster};

const DEFAULT_NODATA: f64 = -9999.0;

/// Parse a raster from ASCII grid text. `path` only labels errors.
pub fn parse(text: &str, path: &str) -> Result<Raster> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let mut header: Vec<(usize, String, String)> = Vec::new();
    let mut first_data: Option<(usize, &str)> = None;
    for (i, raw) in lines.by_ref() {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split_whitespace();
        let key = parts.next().unwrap_or("");
        if key.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
            let value = parts.next().unwrap_or("").to_string();
            if parts.next().is_some() {
                return Err(err(i + 1, format!("header line has trailing tokens: {trimmed:?}")));
            }
            header.push((i + 1, key.to_ascii_lowercase(), value));
        } else {
            first_data = Some((i, raw));
            break;
        }
    }

    let mut take = |name: &str| -> Option<(usize, String)> {
        let pos = header.iter().position(|(_, k, _)| k == name)?;
        let (line, _, value) = header.remove(pos);
        Some((line, value))
    };
    let mut take_f64 = |name: &str| -> Result<Option<(usize, f64)>> {
        match take(name) {
            None => Ok(None),
            Some((line, value)) => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| err(line, format!("invalid {name} value {value:?}")))?;
                Ok(Some((line, v)))
            }
        }
    };

    let need = |field: &str, v: Option<(usize, f64)>| -> Result<f64> {
        v.map(|(_, x)| x)
            .ok_or_else(|| err(1, format!("missing required header field {field}")))
    };
    let ncols = need("ncols", take_f64("ncols")?)?;
    let nrows = need("nrows", take_f64("nrows")?)?;
    let x_ll = need("xllcorner", take_f64("xllcorner")?)?;
    let y_ll = need("yllcorner", take_f64("yllcorner")?)?;
    let cellsize = need("cellsize", take_f64("cellsize")?)?;
    let nodata = take_f64("nodata_value")?.map_or(DEFAULT_NODATA, |(_, v)| v);
    if let Some((line, key, _)) = header.first() {
        return Err(err(*line, format!("unknown header field {key:?}")));
    }
    if ncols.fract() != 0.0 || nrows.fract() != 0.0 || ncols < 1.0 || nrows < 1.0 {
        return Err(err(1, format!("ncols/nrows must be positive integers, got {ncols}x{nrows}")));
    }
    let spec = GridSpec::new(ncols as usize, nrows as usize, cellsize, x_ll, y_ll, nodata)
        .map_err(|e| err(1, e.to_string()))?;

    let mut values = Vec::with_capacity(spec.len());
    let data_lines = first_data.into_iter().chain(lines);
    for (i, raw) in data_lines {
        for tok in raw.split_whitespace() {
            if values.len() == spec.len() {
                return Err(err(i + 1, format!("more than {} cell values", spec.len())));
            }
            let v: f64 = tok
                .parse()
                .map_err(|_| err(i + 1, format!("invalid cell value {tok:?}")))?;
            // Sentinel match is on the parsed numeric value, not the token
            // text, so "-9999" and "-9999.0" both read as nodata.
            values.push(if v == nodata { f64::NAN } else { v });
        }
    }
    if values.len() != spec.len() {
        return Err(err(
            text.lines().count().max(1),
            format!("expected {} cell values, found {}", spec.len(), values.len()),
        ));
    }
    Raster::from_values(spec, values)
        .map_err(|e| err(1, e.to_string()))
}

/// Serialize a raster to ASCII grid text.
pub fn to_string(raster: &Raster) -> String {
    let spec = raster.spec();
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", spec.ncols);
    let _ = writeln!(out, "nrows {}", spec.nrows);
    let _ = writeln!(out, "xllcorner {}", spec.x_ll);
    let _ = writeln!(out, "yllcorner {}", spec.y_ll);
    let _ = writeln!(out, "cellsize {}", spec.cellsize);
    let _ = writeln!(out, "nodata_value {}", spec.nodata);
    for row in raster.values().chunks(spec.ncols) {
        let mut sep = "";
        for &v in row {
            let _ = write!(out, "{sep}");
            if v.is_nan() {
                let _ = write!(out, "{}", spec.nodata);
            } else {
                let _ = write!(out, "{v}");
            }
            sep = " ";
        }
        out.push('\n');
    }
    out
}

/// Read a raster from a file.
pub fn read(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

/// Write a raster to a file.
pub fn write(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_string(raster)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_grid() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 50\nnodata_value -9999\n1 2\n-9999 4.5\n";
        let r = parse(text, "t.asc").unwrap();
        assert_eq!(r.spec().ncols, 2);
        assert_eq!(r.spec().cellsize, 50.0);
        assert_eq!(r.get(0, 1), Some(2.0));
        assert_eq!(r.get(1, 0), None);
        assert_eq!(r.get(1, 1), Some(4.5));
    }

    #[test]
    fn nodata_value_is_optional_and_defaults() {
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n-9999\n";
        let r = parse(text, "t.asc").unwrap();
        assert_eq!(r.get(0, 0), None);
        assert_eq!(r.spec().nodata, -9999.0);
    }

    #[test]
    fn header_keys_are_case_insensitive() {
        let text = "NCOLS 1\nNROWS 1\nXLLCORNER 2\nYLLCORNER 3\nCELLSIZE 1\nNODATA_value -1\n7\n";
        let r = parse(text, "t.asc").unwrap();
        assert_eq!(r.spec().x_ll, 2.0);
        assert_eq!(r.spec().nodata, -1.0);
    }

    #[test]
    fn sentinel_matches_numeric_value_not_token() {
        let text = "ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata_value -9999\n-9999.0 -9999\n";
        let r = parse(text, "t.asc").unwrap();
        assert_eq!(r.valid_count(), 0);
    }

    #[test]
    fn errors_carry_path_and_line() {
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nbogus\n";
        let e = parse(text, "bad.asc").unwrap_err();
        match e {
            Error::Parse { path, line, .. } => {
                assert_eq!(path, std::path::PathBuf::from("bad.asc"));
                assert_eq!(line, 6);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_header_field_is_reported() {
        let text = "ncols 1\nnrows 1\ncellsize 1\n0\n";
        let e = parse(text, "t.asc").unwrap_err().to_string();
        assert!(e.contains("xllcorner"), "{e}");
    }

    #[test]
    fn cell_count_mismatch_is_reported() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        let e = parse(text, "t.asc").unwrap_err().to_string();
        assert!(e.contains("expected 4"), "{e}");
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n";
        assert!(parse(text, "t.asc").is_err());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = GridSpec::new(3, 2, 0.1, -1.5, 2.25, -9999.0).unwrap();
        let values = vec![
            0.1 + 0.2, // 0.30000000000000004: shortest repr must survive
            1.0 / 3.0,
            f64::NAN,
            -0.0,
            1e-300,
            123456.789,
        ];
        let r = Raster::from_values(spec, values).unwrap();
        let text = to_string(&r);
        let back = parse(&text, "rt.asc").unwrap();
        assert!(back.spec().same_grid(r.spec()));
        for (a, b) in back.values().iter().zip(r.values()) {
            assert_eq!(a.to_bits(), b.to_bits(), "{a} vs {b}");
        }
    }

    #[test]
    fn write_then_read_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.asc");
        let spec = GridSpec::new(2, 1, 1.0, 0.0, 0.0, -9999.0).unwrap();
        let r = Raster::from_values(spec, vec![1.5, f64::NAN]).unwrap();
        write(&path, &r).unwrap();
        let back = read(&path).unwrap();
        assert_eq!(back.get(0, 0), Some(1.5));
        assert_eq!(back.get(0, 1), None);
    }
}
