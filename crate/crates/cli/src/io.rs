use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use artic_core::schema::{parse_jsonl, Record};

use crate::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Parses a JSONL file. Rejected lines abort in strict mode and are
/// reported as warnings otherwise.
pub fn read_records<T: Record>(path: &Path, strict: bool) -> Result<Vec<T>, CliError> {
    let parsed = parse_jsonl::<T>(&read_text(path)?);
    if parsed.diagnostics.is_empty() {
        return Ok(parsed.records);
    }
    let lines: Vec<String> = parsed.diagnostics.iter().map(|d| format!("{}: {d}", path.display())).collect();
    if strict {
        return Err(CliError::Data(lines.join("\n")));
    }
    for l in lines {
        eprintln!("warning: skipped {l}");
    }
    Ok(parsed.records)
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let err = |e: std::io::Error| CliError::Data(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(err)?;
    }
    let mut tmp = PathBuf::from(path);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    tmp.set_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(bytes).map_err(err)?;
    f.sync_all().map_err(err)?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err(e)
    })
}
