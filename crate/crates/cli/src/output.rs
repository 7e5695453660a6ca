//! Artifact writers. Everything goes through here so that formatting (and
//! therefore byte-level reproducibility) is decided in one place.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// Printed for values that do not exist, e.g. a region with no channels in
/// a hemisphere.
pub const MISSING: &str = "/";

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        x.to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| MISSING.to_string(), num)
}

/// The output directory plus the list of files written into it.
pub struct OutDir {
    root: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::input(format!("cannot create {}: {e}", root.display())))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn created(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let f = File::create(&path).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.created(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::input(format!("{name}: {e}")))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::input(format!("{name}: {e}")))
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let w = self.created(name)?;
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| CliError::input(format!("{name}: {e}"));
        out.write_record(header).map_err(err)?;
        for row in rows {
            out.write_record(&row).map_err(err)?;
        }
        out.flush().map_err(|e| CliError::input(format!("{name}: {e}")))
    }

    pub fn text(&mut self, name: &str, body: &str) -> Result<(), CliError> {
        let mut w = self.created(name)?;
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| CliError::input(format!("{name}: {e}")))
    }

    pub fn bytes(&mut self, name: &str, body: &[u8]) -> Result<(), CliError> {
        let mut w = self.created(name)?;
        w.write_all(body).and_then(|_| w.flush()).map_err(|e| CliError::input(format!("{name}: {e}")))
    }
}
