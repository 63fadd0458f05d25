//! The full run configuration as TOML: pipeline, simulator scene and
//! evaluation flags in one file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::pipeline::PipelineConfig;
use crate::sim::SceneSpec;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullConfig {
    pub pipeline: PipelineConfig,
    pub scene: SceneSpec,
    pub eval: EvalConfig,
}

impl FullConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate().map_err(|e| e.within("pipeline"))?;
        self.eval.validate().map_err(|e| e.within("eval"))?;
        self.scene.validate().map_err(|e| match e {
            Error::InvalidParameter(m) | Error::Degenerate(m) => Error::Config {
                key: "scene".into(),
                constraint: m,
            },
            other => other.within("scene"),
        })
    }

    /// Parses and validates; `path` only labels errors.
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: FullConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// TOML with every key preceded by its description and default.
    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let defaults: toml::Table = toml::Table::try_from(FullConfig::default())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(annotate(&body, &defaults))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<FullConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FullConfig::from_toml(&text, path)
}

pub fn save_config(path: impl AsRef<Path>, cfg: &FullConfig) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, cfg.to_toml()?).map_err(|e| Error::io(path, e))
}

const DOCS: &[(&str, &str)] = &[
    (
        "pipeline.components.gating",
        "dual-branch gating of memory updates (R)",
    ),
    (
        "pipeline.components.alignment",
        "similarity alignment at resets (M)",
    ),
    (
        "pipeline.components.smoothing",
        "state-aware trajectory smoothing (S)",
    ),
    ("pipeline.dynid.gamma", "staticness sigmoid sharpness, > 0"),
    (
        "pipeline.dynid.ema_momentum",
        "gate EMA momentum, in [0, 1)",
    ),
    (
        "pipeline.dynid.warmup_frames",
        "ungated frames after start and each reset",
    ),
    (
        "pipeline.dynid.epsilon_depth",
        "depth floor in the relative discrepancy",
    ),
    (
        "pipeline.dynid.iqr_floor",
        "IQR below which every pixel counts as static",
    ),
    ("pipeline.smooth.lambda", "smoothing strength, > 0"),
    (
        "pipeline.smooth.mode.kind",
        "full | fixed | accel_only | state_only | off",
    ),
    (
        "pipeline.smooth.mode.beta",
        "coefficient for mode fixed, in [0, 1]",
    ),
    ("pipeline.reset.period", "frames between state resets, >= 2"),
    ("pipeline.reset.enabled", "periodic resets on/off"),
    ("scene.name", "sequence label"),
    ("scene.frame_count", "frames to simulate"),
    ("scene.seed", "noise seed"),
    ("scene.state.tokens", "state tokens, a perfect square"),
    ("scene.state.dim", "state channels"),
    ("scene.state.patch_size", "image patch size in pixels"),
    (
        "scene.noise.sigma_main",
        "relative depth noise of the image branch",
    ),
    (
        "scene.noise.sigma_ray",
        "relative depth noise of the ray branch",
    ),
    (
        "scene.noise.pose_translation",
        "camera-center jitter per axis, meters",
    ),
    (
        "scene.noise.burst_probability",
        "probability of an uncertainty burst per frame",
    ),
    (
        "scene.contamination.pose_gain",
        "pose bias per unit memory contamination",
    ),
    (
        "scene.contamination.depth_gain",
        "depth scale error per unit contamination",
    ),
    (
        "scene.reset_drift.scale_spread",
        "log-scale spread of post-reset drift",
    ),
    ("eval.alignment", "sim3 | se3 | none"),
    ("eval.depth_protocol", "per_sequence_median | metric"),
    (
        "eval.iou_threshold",
        "per_frame | per_sequence Otsu threshold",
    ),
    ("eval.rpe_delta", "frame gap of relative pose error"),
    ("eval.nc_k", "neighbors for normal estimation"),
];

fn lookup<'a>(table: &'a toml::Table, path: &str) -> Option<&'a toml::Value> {
    let mut parts = path.split('.');
    let mut v = table.get(parts.next()?)?;
    for p in parts {
        v = v.as_table()?.get(p)?;
    }
    Some(v)
}

/// Inserts `# doc (default: v)` above each key line of a serialized config.
fn annotate(body: &str, defaults: &toml::Table) -> String {
    let mut out = String::from(
        "# Run configuration. Every key is optional; missing keys take the default shown.\n",
    );
    let mut section = String::new();
    let mut in_array = false;
    for line in body.lines() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix("[[").and_then(|h| h.strip_suffix("]]")) {
            section = h.to_string();
            in_array = true;
        } else if let Some(h) = t.strip_prefix('[').and_then(|h| h.strip_suffix(']')) {
            section = h.to_string();
            in_array = false;
        } else if let Some((key, _)) = t.split_once(" = ") {
            let path = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            let doc = DOCS.iter().find(|(p, _)| *p == path).map(|(_, d)| *d);
            let default = (!in_array).then(|| lookup(defaults, &path)).flatten();
            match (doc, default) {
                (Some(d), Some(v)) => out.push_str(&format!("# {d} (default: {v})\n")),
                (Some(d), None) => out.push_str(&format!("# {d}\n")),
                (None, Some(v)) => out.push_str(&format!("# default: {v}\n")),
                (None, None) => {}
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<FullConfig> {
        FullConfig::from_toml(text, Path::new("cfg.toml"))
    }

    #[test]
    fn empty_is_default() {
        assert_eq!(parse("").unwrap(), FullConfig::default());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        save_config(&p, &FullConfig::default()).unwrap();
        assert_eq!(load_config(&p).unwrap(), FullConfig::default());

        let mut cfg = FullConfig::default();
        cfg.pipeline.smooth.mode = crate::smooth::SmoothMode::Fixed(0.5);
        cfg.pipeline.dynid.gamma = 2.5;
        cfg.scene.seed = 17;
        cfg.eval.iou_threshold = crate::eval::IouThreshold::PerSequence;
        save_config(&p, &cfg).unwrap();
        assert_eq!(load_config(&p).unwrap(), cfg);
    }

    #[test]
    fn saved_file_documents_defaults() {
        let text = FullConfig::default().to_toml().unwrap();
        assert!(
            text.contains("# staticness sigmoid sharpness, > 0 (default: 4.0)"),
            "{text}"
        );
        assert!(text.contains("# frames between state resets, >= 2 (default: 50)"));
    }

    #[test]
    fn negative_gamma_names_constraint() {
        let err = parse("[pipeline.dynid]\ngamma = -1.0\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gamma > 0"), "{msg}");
        assert!(msg.contains("pipeline.dynid.gamma"), "{msg}");
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        match parse("[pipeline]\n\n[pipeline.smooth]\nlamda = 3.0\n") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 4);
                assert!(message.contains("lamda"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse("bogus = 1\n").is_err());
    }

    #[test]
    fn scene_and_eval_constraints() {
        assert!(matches!(
            parse("[scene]\nframe_count = 0\n"),
            Err(Error::Config { .. })
        ));
        match parse("[eval]\nnc_k = 0\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "eval.nc_k"),
            other => panic!("{other:?}"),
        }
        match parse("[pipeline.reset]\nperiod = 1\n") {
            Err(Error::Config { key, .. }) => assert_eq!(key, "pipeline.reset.period"),
            other => panic!("{other:?}"),
        }
    }
}
