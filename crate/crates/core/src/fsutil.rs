//! Small filesystem helpers shared by the writers in this crate.

use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

/// Write `bytes` to a temporary file next to `path`, then rename over it.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> io::Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Serialize records one JSON object per line.
pub fn to_json_lines<T: Serialize>(records: &[T]) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_json_lines<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> io::Result<()> {
    atomic_write(path, &to_json_lines(records)?)
}

/// Read one JSON object per non-blank line; errors carry the 1-based line number.
pub fn read_json_lines<T: DeserializeOwned>(path: impl AsRef<Path>) -> io::Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}:{}: {}", path.display(), i + 1, e),
            )
        })?;
        out.push(rec);
    }
    Ok(out)
}
