//! Paired `blur/` and `sharp/` directories with identically named images.

use std::path::{Path, PathBuf};

use mssnet_core::train::Pair;
use mssnet_core::Real;

use crate::error::{CliError, Result};
use crate::image_io::load_image;

pub const BLUR_DIR: &str = "blur";
pub const SHARP_DIR: &str = "sharp";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetLayout {
    pub root: PathBuf,
    /// File names present in both directories, sorted.
    pub names: Vec<String>,
}

fn list(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        if entry.file_type().map_err(|e| CliError::io(dir, e))?.is_file() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

impl DatasetLayout {
    /// Lists the pairs under `root`; every blurred image needs a sharp twin.
    pub fn open(root: &Path) -> Result<Self> {
        let bad = |detail: String| CliError::Dataset {
            root: root.into(),
            detail,
        };
        let blur = list(&root.join(BLUR_DIR))?;
        let sharp = list(&root.join(SHARP_DIR))?;
        if let Some(n) = blur.iter().find(|n| sharp.binary_search(n).is_err()) {
            return Err(bad(format!("{BLUR_DIR}/{n} has no counterpart in {SHARP_DIR}/")));
        }
        if blur.is_empty() {
            return Err(bad("no images".into()));
        }
        Ok(DatasetLayout {
            root: root.into(),
            names: blur,
        })
    }

    /// Creates the two subdirectories.
    pub fn create(root: &Path) -> Result<Self> {
        for d in [BLUR_DIR, SHARP_DIR] {
            let p = root.join(d);
            std::fs::create_dir_all(&p).map_err(|e| CliError::io(p, e))?;
        }
        Ok(DatasetLayout {
            root: root.into(),
            names: Vec::new(),
        })
    }

    pub fn blur_path(&self, name: &str) -> PathBuf {
        self.root.join(BLUR_DIR).join(name)
    }

    pub fn sharp_path(&self, name: &str) -> PathBuf {
        self.root.join(SHARP_DIR).join(name)
    }

    pub fn load_pair<T: Real>(&self, name: &str) -> Result<Pair<T>> {
        let b = load_image(&self.blur_path(name))?;
        let s = load_image(&self.sharp_path(name))?;
        Pair::new(b, s).map_err(|e| CliError::Dataset {
            root: self.root.clone(),
            detail: format!("{name}: {e}"),
        })
    }

    pub fn load_pairs<T: Real>(&self) -> Result<Vec<Pair<T>>> {
        self.names.iter().map(|n| self.load_pair(n)).collect()
    }
}
