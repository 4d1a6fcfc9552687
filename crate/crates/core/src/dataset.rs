//! Instance files, instance stores and seeded dataset splits.
//!
//! Two file formats are recognised by content: the canonical dump (first
//! line `flowsched-instance 1`) and PSPLib single-mode `.sm` files. An
//! instance id is its file stem.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Diagnostic, Instance, InstanceError, Severity};
use crate::psplib::{parse_psplib, ParseError};

/// File extensions picked up when scanning a directory.
pub const INSTANCE_EXTENSIONS: [&str; 2] = ["sm", "inst"];

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Psplib { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Canonical {
        path: PathBuf,
        source: InstanceError,
    },
    #[error("{path}: invalid instance: {}", first_error(.diagnostics))]
    Invalid {
        path: PathBuf,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{0}: no instance files")]
    Empty(PathBuf),
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
}

fn first_error(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .find(|d| d.severity() == Severity::Error)
        .map(|d| d.to_string())
        .unwrap_or_default()
}

/// Parses instance text, picking the format from the first line.
pub fn parse_instance(path: &Path, text: &str) -> Result<Instance, LoadError> {
    let instance = if text.trim_start().starts_with("flowsched-instance") {
        Instance::from_canonical(text).map_err(|source| LoadError::Canonical {
            path: path.to_owned(),
            source,
        })?
    } else {
        parse_psplib(text).map_err(|source| LoadError::Psplib {
            path: path.to_owned(),
            source,
        })?
    };
    if !instance.is_valid() {
        return Err(LoadError::Invalid {
            path: path.to_owned(),
            diagnostics: instance.validate(),
        });
    }
    Ok(instance)
}

pub fn load_instance(path: &Path) -> Result<Instance, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_instance(path, &text)
}

pub fn instance_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Instance files of `dir`, sorted by file name.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>, LoadError> {
    let io_err = |source| LoadError::Io {
        path: dir.to_owned(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && INSTANCE_EXTENSIONS.contains(&ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Immutable map from instance id to instance, shared between connections.
#[derive(Debug, Default, Clone)]
pub struct InstanceStore {
    instances: BTreeMap<String, Arc<Instance>>,
}

impl InstanceStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load_dir(dir: &Path) -> Result<Self, LoadError> {
        let files = instance_files(dir)?;
        if files.is_empty() {
            return Err(LoadError::Empty(dir.to_owned()));
        }
        let mut store = Self::new();
        for path in files {
            let instance = load_instance(&path)?;
            store.insert(instance_id(&path), instance)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, id: String, instance: Instance) -> Result<(), LoadError> {
        if self.instances.contains_key(&id) {
            return Err(LoadError::DuplicateId(id));
        }
        self.instances.insert(id, Arc::new(instance));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Arc<Instance>> {
        self.instances.get(id).cloned()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.instances.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum SplitError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(
        "{dir}: {cells} parameter cell(s), cannot hold out {requested} and keep one for training"
    )]
    TooFewCells {
        dir: PathBuf,
        cells: usize,
        requested: usize,
    },
    #[error("train fraction must lie in [0, 1]")]
    Fraction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub seed: u64,
    /// Number of parameter cells held out as the unknown set.
    pub ukn_cells: usize,
    /// Share of the remaining files assigned to training, rounded to the
    /// nearest file.
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            seed: 0,
            ukn_cells: 5,
            train_fraction: 0.8,
        }
    }
}

/// File names of each part, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub usn: Vec<String>,
    pub ukn: Vec<String>,
}

/// Parameter cell of a PSPLib file name: the stem up to its last `_`
/// (`j3012_7.sm` belongs to cell `j3012`).
pub fn parameter_cell(file_name: &str) -> &str {
    let stem = file_name.rsplit_once('.').map_or(file_name, |(s, _)| s);
    stem.rsplit_once('_').map_or(stem, |(cell, _)| cell)
}

/// Partitions file names: whole parameter cells go to `ukn`, the rest is
/// shuffled and cut into `train` and `usn`.
pub fn split_names(names: &[String], config: &SplitConfig) -> Result<DatasetSplit, SplitError> {
    if !(0.0..=1.0).contains(&config.train_fraction) {
        return Err(SplitError::Fraction);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cells: BTreeSet<&str> = names.iter().map(|n| parameter_cell(n)).collect();
    let mut cells: Vec<&str> = cells.into_iter().collect();
    if config.ukn_cells >= cells.len() {
        return Err(SplitError::TooFewCells {
            dir: PathBuf::new(),
            cells: cells.len(),
            requested: config.ukn_cells,
        });
    }
    cells.shuffle(&mut rng);
    let held: BTreeSet<&str> = cells[..config.ukn_cells].iter().copied().collect();

    let mut ukn = Vec::new();
    let mut rest = Vec::new();
    for n in names {
        if held.contains(parameter_cell(n)) {
            ukn.push(n.clone());
        } else {
            rest.push(n.clone());
        }
    }
    rest.sort();
    rest.shuffle(&mut rng);
    let n_train = (rest.len() as f64 * config.train_fraction).round() as usize;
    let mut usn = rest.split_off(n_train);
    let mut train = rest;
    train.sort();
    usn.sort();
    ukn.sort();
    Ok(DatasetSplit { train, usn, ukn })
}

pub fn split_dataset(dir: &Path, config: &SplitConfig) -> Result<DatasetSplit, SplitError> {
    let files = instance_files(dir)?;
    if files.is_empty() {
        return Err(LoadError::Empty(dir.to_owned()).into());
    }
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    split_names(&names, config).map_err(|e| match e {
        SplitError::TooFewCells {
            cells, requested, ..
        } => SplitError::TooFewCells {
            dir: dir.to_owned(),
            cells,
            requested,
        },
        other => other,
    })
}

/// Writes `train.txt`, `usn.txt` and `ukn.txt` (one file name per line).
pub fn write_manifests(split: &DatasetSplit, out_dir: &Path) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    for (name, part) in [
        ("train", &split.train),
        ("usn", &split.usn),
        ("ukn", &split.ukn),
    ] {
        let mut body = part.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(out_dir.join(format!("{name}.txt")), body)?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> io::Result<Vec<String>> {
    Ok(fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect())
}
