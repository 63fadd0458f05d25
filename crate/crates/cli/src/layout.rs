use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunLayout {
    root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunLayout { root: root.into() }
    }

    /// Creates the directory tree.
    pub fn create(root: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let l = RunLayout::new(root);
        for d in [l.root.clone(), l.depth_dir(), l.dynmap_dir()] {
            fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(l)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn trajectory(&self) -> PathBuf {
        self.root.join("trajectory.txt")
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.root.join("depth")
    }

    pub fn depth(&self, frame: usize) -> PathBuf {
        self.depth_dir().join(format!("{frame:06}.png"))
    }

    pub fn dynmap_dir(&self) -> PathBuf {
        self.root.join("dynmap")
    }

    /// 16-bit discrepancy map; absent for frames without one.
    pub fn dynmap(&self, frame: usize) -> PathBuf {
        self.dynmap_dir().join(format!("{frame:06}.png"))
    }

    pub fn corrections(&self) -> PathBuf {
        self.root.join("corrections.jsonl")
    }

    pub fn cloud(&self) -> PathBuf {
        self.root.join("cloud.ply")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.jsonl")
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.json")
    }
}
