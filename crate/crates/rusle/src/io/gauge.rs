//! Rain gauge series CSV reader.
//!
//! Format: a `timestamp,depth_mm` header, then one row per measurement
//! interval with an ISO-8601 timestamp (interval start) and the depth in mm.
//! Rows must be contiguous and strictly increasing; the step is inferred
//! from the first two rows and must be 10 or 15 minutes. Errors name the
//! first offending line.

use std::path::Path;

use chrono::NaiveDateTime;

use crate::ei30::RainRecord;
use crate::error::{Error, Result};

const FILE_STEPS_MINUTES: [i64; 2] = [10, 15];

/// Parse a gauge series from CSV text. `path` only labels errors.
pub fn parse(text: &str, path: &str) -> Result<Vec<RainRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty file, expected a timestamp,depth_mm header".into()))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header != ["timestamp", "depth_mm"] {
        return Err(err(1, format!("expected header timestamp,depth_mm, got {header:?}")));
    }

    let mut rows: Vec<(usize, NaiveDateTime, f64)> = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let mut fields = raw.split(',');
        let (Some(ts), Some(depth), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(err(line, format!("expected 2 fields, got {raw:?}")));
        };
        let ts = NaiveDateTime::parse_from_str(ts.trim(), "%Y-%m-%dT%H:%M:%S")
            .map_err(|e| err(line, format!("invalid timestamp {:?}: {e}", ts.trim())))?;
        let depth: f64 = depth
            .trim()
            .parse()
            .map_err(|_| err(line, format!("invalid depth {:?}", depth.trim())))?;
        if depth < 0.0 || !depth.is_finite() {
            return Err(err(line, format!("depth must be finite and >= 0, got {depth}")));
        }
        rows.push((line, ts, depth));
    }
    if rows.len() < 2 {
        return Err(err(
            text.lines().count().max(1),
            format!("need at least 2 rows to infer the step, got {}", rows.len()),
        ));
    }

    let step = (rows[1].1 - rows[0].1).num_minutes();
    let exact = (rows[1].1 - rows[0].1).num_seconds() == step * 60;
    if !exact || !FILE_STEPS_MINUTES.contains(&step) {
        return Err(err(
            rows[1].0,
            format!(
                "step between first two rows must be one of {FILE_STEPS_MINUTES:?} minutes"
            ),
        ));
    }
    for pair in rows.windows(2) {
        let (line, prev, next) = (pair[1].0, pair[0].1, pair[1].1);
        let delta = next - prev;
        if delta.num_seconds() <= 0 {
            return Err(err(line, "timestamps must be strictly increasing".into()));
        }
        if delta.num_seconds() != step * 60 {
            return Err(err(
                line,
                format!(
                    "irregular step: {} s between rows, expected {} min",
                    delta.num_seconds(),
                    step
                ),
            ));
        }
    }

    rows.into_iter()
        .map(|(line, ts, depth)| {
            RainRecord::new(ts, depth, step as u32).map_err(|e| err(line, e.to_string()))
        })
        .collect()
}

/// Read a gauge series from a file.
pub fn read(path: impl AsRef<Path>) -> Result<Vec<RainRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, &path.display().to_string())
}

/// Serialize records back to CSV, the inverse of [`parse`].
pub fn to_string(records: &[RainRecord]) -> String {
    let mut out = String::from("timestamp,depth_mm\n");
    for r in records {
        out.push_str(&format!(
            "{},{}\n",
            r.timestamp.format("%Y-%m-%dT%H:%M:%S"),
            r.depth_mm
        ));
    }
    out
}
