//! JSON-lines run report: a header, one record per frame, one per reset and
//! the final metrics. Everything needed to rebuild ablation tables offline.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::pipeline::{FrameOutput, PipelineConfig, ResetEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub sc: f64,
    pub beta: Option<f64>,
    pub accel: Option<f64>,
    pub alpha_mean: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub reset: bool,
}

impl FrameRecord {
    pub fn from_output(out: &FrameOutput) -> Self {
        let (lo, hi) = out
            .gate
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| {
                (lo.min(g), hi.max(g))
            });
        let (alpha_min, alpha_max) = if out.gate.is_empty() {
            (1.0, 1.0)
        } else {
            (lo, hi)
        };
        FrameRecord {
            frame: out.frame_index,
            sc: out.sc,
            beta: out.smooth.map(|s| s.beta),
            accel: out.smooth.and_then(|s| s.accel),
            alpha_mean: out.gate_mean(),
            alpha_min,
            alpha_max,
            reset: out.reset.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetRecord {
    pub frame: usize,
    pub scale: f64,
    pub rotation_rad: f64,
    pub translation: [f64; 3],
    pub residual: f64,
    pub degenerate: bool,
    pub correspondences: usize,
    pub cumulative_scale: f64,
}

impl ResetRecord {
    pub fn from_event(ev: &ResetEvent) -> Self {
        let t = &ev.local.transform;
        ResetRecord {
            frame: ev.local.reset_frame,
            scale: t.scale,
            rotation_rad: t.rotation_angle(),
            translation: t.translation.into(),
            residual: ev.local.residual,
            degenerate: ev.local.degenerate,
            correspondences: ev.local.correspondences,
            cumulative_scale: ev.cumulative.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Header {
        name: String,
        label: String,
        config: PipelineConfig,
    },
    Frame(FrameRecord),
    Reset(ResetRecord),
    Metrics {
        metrics: MetricsReport,
    },
}

pub struct ReportWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl ReportWriter {
    pub fn create(path: impl AsRef<Path>, name: &str, cfg: &PipelineConfig) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let out = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        let mut w = ReportWriter { path, out };
        w.record(&Record::Header {
            name: name.into(),
            label: cfg.components.label(),
            config: *cfg,
        })?;
        Ok(w)
    }

    pub fn record(&mut self, r: &Record) -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        writeln!(self.out, "{line}").map_err(|e| Error::io(&self.path, e))
    }

    /// Frame record plus a reset record when the frame was a boundary.
    pub fn frame(&mut self, out: &FrameOutput) -> Result<()> {
        self.record(&Record::Frame(FrameRecord::from_output(out)))?;
        if let Some(ev) = &out.reset {
            self.record(&Record::Reset(ResetRecord::from_event(ev)))?;
        }
        Ok(())
    }

    pub fn finish(mut self, metrics: Option<&MetricsReport>) -> Result<()> {
        if let Some(m) = metrics {
            self.record(&Record::Metrics { metrics: *m })?;
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
