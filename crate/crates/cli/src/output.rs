//! Output files named `<command>_<label>[_suffix].<ext>` in one directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::CliError;

pub struct Output {
    dir: PathBuf,
    stem: String,
    written: Vec<String>,
}

impl Output {
    /// Creates `dir` if needed. Labels may not contain path separators.
    pub fn new(dir: &Path, command: &str, label: &str) -> Result<Self, CliError> {
        if label.is_empty() || label.contains(['/', '\\']) || label == "." || label == ".." {
            return Err(CliError::Validation(format!("invalid output label {label:?}")));
        }
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Validation(format!("output directory {}: {e}", dir.display())))?;
        if !dir.is_dir() {
            return Err(CliError::Validation(format!("output path {} is not a directory", dir.display())));
        }
        Ok(Self { dir: dir.to_path_buf(), stem: format!("{command}_{label}"), written: Vec::new() })
    }

    fn name(&self, suffix: Option<&str>, ext: &str) -> String {
        match suffix {
            Some(s) => format!("{}_{s}.{ext}", self.stem),
            None => format!("{}.{ext}", self.stem),
        }
    }

    fn write_with(
        &mut self,
        name: String,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(&name);
        let io_err = |e: std::io::Error| CliError::Validation(format!("writing {}: {e}", path.display()));
        let mut w = BufWriter::new(File::create(&path).map_err(io_err)?);
        body(&mut w).and_then(|_| w.flush()).map_err(io_err)?;
        self.written.push(name);
        Ok(())
    }

    pub fn csv(
        &mut self,
        suffix: Option<&str>,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let name = self.name(suffix, "csv");
        self.write_with(name, body)
    }

    pub fn json(&mut self, suffix: &str, value: &Value) -> Result<(), CliError> {
        let name = self.name(Some(suffix), "json");
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    /// Metadata sidecar `<command>_<label>.json`; lists every file written so far.
    pub fn sidecar(mut self, mut meta: Value) -> Result<PathBuf, CliError> {
        let name = self.name(None, "json");
        meta["outputs"] = Value::from(self.written.clone());
        self.write_with(name.clone(), |w| {
            serde_json::to_writer_pretty(&mut *w, &meta)?;
            writeln!(w)
        })?;
        Ok(self.dir.join(name))
    }
}
