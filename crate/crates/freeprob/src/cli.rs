//! Command-line interface (under construction).

use crate::Result;
use std::io::Write;
use std::path::Path;

/// Writes bytes to `path` atomically: the data lands in a temporary file in
/// the same directory which is then renamed over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| crate::Error::Io(e.error))?;
    Ok(())
}
