//! On-disk JSON cache of weight tables, keyed by model (including the
//! Monte-Carlo configuration) and depth.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::GibbsModel;
use crate::weights::{build_weight_table, WeightTable};

/// Environment variable that overrides the cache directory.
pub const CACHE_DIR_ENV: &str = "GIBBS_IBP_CACHE_DIR";

const FORMAT_VERSION: u32 = 1;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct Key {
    version: u32,
    model: GibbsModel,
    n_max: usize,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    version: u32,
    model: GibbsModel,
    n_max: usize,
    table: WeightTable<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableStore {
    dir: PathBuf,
}

impl TableStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TableStore { dir: dir.into() }
    }

    /// Store rooted at `$GIBBS_IBP_CACHE_DIR`, if set and non-empty.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(Self::new)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Hex digest identifying `(model, n_max)` under the current format.
    pub fn key(model: &GibbsModel, n_max: usize) -> String {
        let key = Key { version: FORMAT_VERSION, model: *model, n_max };
        sha256_hex(&serde_json::to_vec(&key).expect("key serializes"))
    }

    pub fn path(&self, model: &GibbsModel, n_max: usize) -> PathBuf {
        self.dir.join(format!("weights-{}.json", Self::key(model, n_max)))
    }

    /// Cached table, or `None` when absent. A file whose header does not
    /// match the request is an error rather than a miss.
    pub fn load(&self, model: &GibbsModel, n_max: usize) -> Result<Option<WeightTable<f64>>> {
        let path = self.path(model, n_max);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let entry: Entry = serde_json::from_str(&text)?;
        if entry.version != FORMAT_VERSION || entry.model != *model || entry.n_max != n_max {
            return Err(Error::Parse(format!("cache file {} does not match its key", path.display())));
        }
        Ok(Some(entry.table))
    }

    pub fn save(&self, model: &GibbsModel, table: &WeightTable<f64>) -> Result<PathBuf> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path(model, table.n_max());
        let entry = Entry { version: FORMAT_VERSION, model: *model, n_max: table.n_max(), table: table.clone() };
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec(&entry)?)?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    pub fn load_or_build(&self, model: &GibbsModel, n_max: usize) -> Result<WeightTable<f64>> {
        if let Some(t) = self.load(model, n_max)? {
            return Ok(t);
        }
        let table = build_weight_table(model, n_max)?;
        self.save(model, &table)?;
        Ok(table)
    }
}
