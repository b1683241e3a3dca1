//! Shipped reference data and the `WPTSIM_DATA` override directory.
//!
//! When `WPTSIM_DATA` names a directory, files found there replace the
//! builtin copies: `catalog.csv`, `harvester_default.csv`, `pmu_presets.toml`.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harvester::{self, HarvesterModel};
use crate::pmu::PresetFile;
use crate::storage::Catalog;

pub const DEFAULT_CATALOG_CSV: &str = include_str!("../data/catalog.csv");
pub const DEFAULT_CALIBRATION_CSV: &str = include_str!("../data/harvester_default.csv");
pub const DEFAULT_PMU_PRESETS_TOML: &str = include_str!("../data/pmu_presets.toml");

pub const DATA_ENV: &str = "WPTSIM_DATA";
pub const CATALOG_FILE: &str = "catalog.csv";
pub const CALIBRATION_FILE: &str = "harvester_default.csv";
pub const PRESETS_FILE: &str = "pmu_presets.toml";

/// Resolves default data files, preferring an override directory.
#[derive(Debug, Clone, Default)]
pub struct DataDir {
    root: Option<PathBuf>,
}

impl DataDir {
    pub fn new(root: Option<PathBuf>) -> Self {
        DataDir { root }
    }

    pub fn from_env() -> Self {
        DataDir {
            root: std::env::var_os(DATA_ENV).map(PathBuf::from),
        }
    }

    fn existing(&self, name: &str) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join(name)).filter(|p| p.is_file())
    }

    pub fn catalog(&self) -> Result<Catalog> {
        match self.existing(CATALOG_FILE) {
            Some(path) => load_catalog(&path),
            None => Ok(Catalog::builtin()),
        }
    }

    pub fn harvester(&self) -> Result<HarvesterModel> {
        match self.existing(CALIBRATION_FILE) {
            Some(path) => Ok(harvester::load_calibration(&path)?.model),
            None => Ok(HarvesterModel::default_aem()),
        }
    }

    pub fn presets(&self) -> Result<PresetFile> {
        match self.existing(PRESETS_FILE) {
            Some(path) => PresetFile::from_toml_str(&std::fs::read_to_string(&path)?, &path.display().to_string()),
            None => PresetFile::builtin(),
        }
    }
}

pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let file = std::fs::File::open(path)?;
    Catalog::from_csv(file, &path.display().to_string())
}
