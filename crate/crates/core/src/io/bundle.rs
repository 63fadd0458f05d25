//! On-disk sequence layout:
//!
//! ```text
//! <root>/bundle.toml        manifest (intrinsics, frames, metadata)
//! <root>/config.toml        generating configuration, when simulated
//! <root>/groundtruth.txt    TUM trajectory
//! <root>/depth/NNNNNN.png   16-bit depth
//! <root>/mask/NNNNNN.png    8-bit dynamic masks
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{load_config, save_config, FullConfig};
use super::image::{
    read_depth_png, read_mask_png, write_depth_png, write_mask_png, DEFAULT_DEPTH_SCALE,
};
use super::tum::{read_trajectory, TrajectoryWriter};
use crate::error::{Error, Result};
use crate::eval::Trajectory;
use crate::geom::{DepthMap, Grid, Intrinsics};
use crate::sim::ground_truth;

pub const BUNDLE_MANIFEST: &str = "bundle.toml";

/// Frame rate used for simulated timestamps.
const SIM_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFrame {
    pub timestamp: f64,
    /// Paths are relative to the bundle root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceBundle {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic_ratio: Option<f64>,
    pub intrinsics: Intrinsics,
    #[serde(default = "default_scale")]
    pub depth_scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    pub frames: Vec<BundleFrame>,
    #[serde(skip)]
    root: PathBuf,
}

fn default_scale() -> f64 {
    DEFAULT_DEPTH_SCALE
}

impl SequenceBundle {
    /// Reads the manifest and checks that every referenced file exists.
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref();
        let manifest = root.join(BUNDLE_MANIFEST);
        let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let mut bundle: SequenceBundle = toml::from_str(&text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            path: manifest.clone(),
            message: e.message().to_string(),
        })?;
        bundle.root = root.to_path_buf();
        bundle.validate()?;
        Ok(bundle)
    }

    fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.frames.is_empty() {
            return Err(Error::Insufficient(format!(
                "bundle {} has no frames",
                self.name
            )));
        }
        let files = self
            .frames
            .iter()
            .flat_map(|f| [f.depth.as_ref(), f.mask.as_ref()])
            .chain([self.trajectory.as_ref(), self.config.as_ref()])
            .flatten();
        for rel in files {
            let p = self.root.join(rel);
            if !p.is_file() {
                return Err(Error::io(
                    &p,
                    std::io::Error::from(std::io::ErrorKind::NotFound),
                ));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn frame(&self, i: usize) -> Result<&BundleFrame> {
        self.frames.get(i).ok_or(Error::OutOfRange {
            index: i,
            len: self.frames.len(),
        })
    }

    pub fn depth(&self, i: usize) -> Result<Option<DepthMap>> {
        let f = self.frame(i)?;
        f.depth
            .as_ref()
            .map(|p| read_depth_png(self.root.join(p), self.depth_scale))
            .transpose()
    }

    pub fn mask(&self, i: usize) -> Result<Option<Grid<bool>>> {
        let f = self.frame(i)?;
        f.mask
            .as_ref()
            .map(|p| read_mask_png(self.root.join(p)))
            .transpose()
    }

    pub fn trajectory(&self) -> Result<Option<Trajectory>> {
        self.trajectory
            .as_ref()
            .map(|p| read_trajectory(self.root.join(p)))
            .transpose()
    }

    /// The configuration the bundle was generated from, if recorded.
    pub fn config(&self) -> Result<Option<FullConfig>> {
        self.config
            .as_ref()
            .map(|p| load_config(self.root.join(p)))
            .transpose()
    }
}

/// Renders the simulator scene of `cfg` into a bundle at `root`.
pub fn write_bundle(root: impl AsRef<Path>, cfg: &FullConfig) -> Result<SequenceBundle> {
    let root = root.as_ref();
    cfg.validate()?;
    let spec = &cfg.scene;
    for sub in ["depth", "mask"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let traj_path = root.join("groundtruth.txt");
    let mut traj = TrajectoryWriter::create(&traj_path)?;
    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut dynamic = 0.0;
    for f in 0..spec.frame_count {
        let gt = ground_truth(spec, f)?;
        let stamp = f as f64 / SIM_FPS;
        let depth = PathBuf::from(format!("depth/{f:06}.png"));
        let mask = PathBuf::from(format!("mask/{f:06}.png"));
        write_depth_png(root.join(&depth), &gt.depth, DEFAULT_DEPTH_SCALE)?;
        write_mask_png(root.join(&mask), &gt.dynamic_mask)?;
        traj.write(stamp, &gt.pose)
            .map_err(|e| Error::io(&traj_path, e))?;
        dynamic += gt.dynamic_mask.data.iter().filter(|m| **m).count() as f64
            / gt.dynamic_mask.len() as f64;
        frames.push(BundleFrame {
            timestamp: stamp,
            depth: Some(depth),
            mask: Some(mask),
        });
    }
    traj.finish().map_err(|e| Error::io(&traj_path, e))?;
    save_config(root.join("config.toml"), cfg)?;

    let bundle = SequenceBundle {
        name: spec.name.clone(),
        dynamic_ratio: Some(dynamic / spec.frame_count as f64),
        intrinsics: spec.intrinsics,
        depth_scale: DEFAULT_DEPTH_SCALE,
        trajectory: Some("groundtruth.txt".into()),
        config: Some("config.toml".into()),
        frames,
        root: root.to_path_buf(),
    };
    let manifest = root.join(BUNDLE_MANIFEST);
    let text = toml::to_string(&bundle).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    Ok(bundle)
}
