use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::Meta;
use crate::error::{CliError, CliResult};

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::config(format!("cannot write into {}: {e}", dir.display())))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::from(e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct WithMeta<'a, T: Serialize> {
    meta: &'a Meta,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON object with a leading `meta` field.
pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, body: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(&WithMeta { meta, body })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// CSV prefixed by the metadata comment line. `fill` writes the records.
pub fn write_csv(
    path: &Path,
    meta: &Meta,
    fill: impl FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> CliResult<()>,
) -> CliResult<()> {
    let mut bytes = meta.csv_comment().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        fill(&mut w)?;
        w.flush()?;
    }
    write_atomic(path, &bytes)
}

/// Shortest round-trip decimal form.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Already-rendered CSV prefixed by the metadata comment line.
pub fn write_csv_bytes(path: &Path, meta: &Meta, body: &[u8]) -> CliResult<()> {
    let mut bytes = meta.csv_comment().into_bytes();
    bytes.extend_from_slice(body);
    write_atomic(path, &bytes)
}
