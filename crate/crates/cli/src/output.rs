use std::fs;
use std::path::{Path, PathBuf};

use gibbs_ibp::ibp::FeatureAllocation;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Collects the files of one run and writes its manifest last.
pub struct RunOutput {
    dir: PathBuf,
    run: RunConfig,
    files: Vec<String>,
    extra: Map<String, Value>,
}

impl RunOutput {
    pub fn new(dir: &Path, run: RunConfig) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::other(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(RunOutput { dir: dir.to_path_buf(), run, files: Vec::new(), extra: Map::new() })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn note<T: Serialize>(&mut self, key: &str, value: T) -> CliResult<()> {
        self.extra.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Writes `run.conf` and `manifest.json`.
    pub fn finish(self) -> CliResult<()> {
        fs::write(self.dir.join("run.conf"), self.run.to_text())?;
        let mut files = self.files;
        files.push("run.conf".to_string());
        let mut m = Map::new();
        m.insert("tool".into(), "gibbs-ibp".into());
        m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        m.insert("run".into(), serde_json::to_value(&self.run)?);
        m.insert("outputs".into(), serde_json::to_value(files)?);
        m.extend(self.extra);
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&Value::Object(m))? + "\n")?;
        Ok(())
    }
}

/// One `customer,feature` row per nonzero entry, both 1-based.
pub fn allocation_rows(z: &FeatureAllocation) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for i in 0..z.n() {
        for k in 0..z.num_features() {
            if z.get(i, k) {
                rows.push(vec![(i + 1).to_string(), (k + 1).to_string()]);
            }
        }
    }
    rows
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<String>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| num(m[(i, j)])).collect()).collect()
}

/// Reads a numeric matrix with one header row.
pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(|e| CliError::other(format!("cannot read data file {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let mut values = Vec::new();
    let mut cols = None;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::other(format!("{}: {e}", path.display())))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(CliError::other(format!("{}: row {} has {} fields, expected {}", path.display(), i + 2, rec.len(), cols.unwrap_or(0))));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::other(format!("{}: row {}, column {}: `{field}` is not a number", path.display(), i + 2, j + 1)))?;
            if !v.is_finite() {
                return Err(CliError::other(format!("{}: row {}, column {} is not finite", path.display(), i + 2, j + 1)));
            }
            values.push(v);
        }
    }
    let cols = cols.unwrap_or(0);
    if values.is_empty() || cols == 0 {
        return Err(CliError::other(format!("{}: no data rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(values.len() / cols, cols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 1e-300, 3.5, 1.0 / 3.0, 7.0]);
        let mut out = RunOutput::new(dir.path(), RunConfig { command: "t".into(), flags: Default::default() }).unwrap();
        out.csv("y.csv", &["y1", "y2", "y3"], matrix_rows(&m)).unwrap();
        out.finish().unwrap();
        assert_eq!(read_matrix(&dir.path().join("y.csv")).unwrap(), m);
        let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["outputs"], serde_json::json!(["y.csv", "run.conf"]));
    }

    #[test]
    fn ragged_and_missing_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("bad.csv");
        fs::write(&f, "a,b\n1,2\n3\n").unwrap();
        assert!(read_matrix(&f).is_err());
        fs::write(&f, "a,b\n1,x\n").unwrap();
        assert!(read_matrix(&f).unwrap_err().to_string().contains("not a number"));
        assert!(read_matrix(&dir.path().join("absent.csv")).unwrap_err().to_string().contains("cannot read data file"));
    }
}
