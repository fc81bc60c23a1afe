use std::io::Write;
use std::path::Path;

use crate::experiments::{echo, Experiment};

pub fn metadata(exp: &dyn Experiment) -> String {
    format!(
        "# command: {}\n# config: {}\n# seed: {}\n# version: robust-cp {}\n",
        exp.command(),
        echo(exp),
        exp.seed(),
        env!("CARGO_PKG_VERSION")
    )
}

/// Writes to a temporary file next to `path` and renames it into place, so a
/// failed run never leaves a partial table behind.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn emit(path: Option<&Path>, contents: &str) -> std::io::Result<()> {
    match path {
        Some(p) => write_atomic(p, contents),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()
        }
    }
}
