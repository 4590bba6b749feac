//! Output-file helpers. CSV uses '.' decimals and shortest round-trip float
//! formatting so reruns with the same seed are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use crate::Failure;

pub struct OutputDir {
    path: PathBuf,
}

impl OutputDir {
    pub fn create(base: &Path, name: &str) -> Result<Self, Failure> {
        let path = base.join(name);
        fs::create_dir_all(&path)
            .map_err(|e| Failure::Invalid(format!("cannot create {}: {e}", path.display())))?;
        Ok(OutputDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, file: &str, content: &str) -> Result<PathBuf, Failure> {
        let p = self.path.join(file);
        fs::write(&p, content)
            .map_err(|e| Failure::Invalid(format!("cannot write {}: {e}", p.display())))?;
        Ok(p)
    }

    pub fn write_json<T: serde::Serialize>(&self, file: &str, value: &T) -> Result<PathBuf, Failure> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::Invalid(format!("serialize {file}: {e}")))?;
        self.write(file, &(text + "\n"))
    }
}

/// One CSV line from float fields (shortest round-trip formatting).
pub fn csv_row(fields: &[f64]) -> String {
    let mut s = String::new();
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{f}"));
    }
    s.push('\n');
    s
}

/// A complex matrix as nested `[re, im]` pairs for JSON state dumps.
pub fn matrix_json(mat: &qmslab_core::linalg::CMat) -> serde_json::Value {
    let rows: Vec<Vec<[f64; 2]>> = mat
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
        .collect();
    serde_json::json!(rows)
}
