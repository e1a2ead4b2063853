//! File formats: ASCII grids, rain gauge CSV, run configuration, PNG maps.

pub mod ascii_grid;
pub mod config;
pub mod gauge;
pub mod render;

use std::path::Path;

use crate::error::{Error, Result};

/// Write via a sibling temp file plus rename, so readers never observe a
/// partial file. The temp name carries the process id; concurrent writes
/// of one path from one process are not supported.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = path.with_file_name(format!(
        "{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
