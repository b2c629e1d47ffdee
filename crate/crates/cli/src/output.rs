use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::manifest::ExperimentManifest;

/// Result object with the manifest added under `"manifest"`.
pub fn with_manifest<T: Serialize>(result: &T, manifest: &ExperimentManifest) -> CliResult<Value> {
    let mut v = serde_json::to_value(result).map_err(|e| CliError::output("result", e))?;
    let m = serde_json::to_value(manifest).map_err(|e| CliError::output("manifest", e))?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("manifest".into(), m);
            Ok(v)
        }
        None => Ok(serde_json::json!({ "result": v, "manifest": m })),
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::output(dir.display(), e))?;
            }
            fs::write(p, bytes).map_err(|e| CliError::output(p.display(), e))
        }
        None => std::io::stdout()
            .lock()
            .write_all(bytes)
            .map_err(|e| CliError::output("stdout", e)),
    }
}

/// Pretty JSON to `path`, or stdout when `None`.
pub fn write_json<T: Serialize>(
    path: Option<&Path>,
    result: &T,
    manifest: &ExperimentManifest,
) -> CliResult<()> {
    let v = with_manifest(result, manifest)?;
    let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::output("result", e))?;
    text.push('\n');
    emit(path, text.as_bytes())
}

/// CSV with the manifest as leading `#` comment lines.
pub fn write_csv(
    path: Option<&Path>,
    header: &[String],
    rows: &[Vec<String>],
    manifest: &ExperimentManifest,
) -> CliResult<()> {
    let mut buf = manifest.csv_comment().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let fail = |e: csv::Error| CliError::output("csv", e);
        w.write_record(header).map_err(fail)?;
        for r in rows {
            w.write_record(r).map_err(fail)?;
        }
        w.flush().map_err(|e| CliError::output("csv", e))?;
    }
    emit(path, &buf)
}

/// `Display` keeps the shortest round-trip form and never localizes.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// Space-separated id list, so it survives as one CSV field.
pub fn ids(v: &[usize]) -> String {
    v.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn is_json(path: Option<&Path>) -> bool {
    path.and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}
