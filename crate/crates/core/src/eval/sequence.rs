//! Frame-by-frame scoring of one sequence against its ground truth.

use serde::{Deserialize, Serialize};

use super::{
    ate, depth_metrics, dynmap_metrics_with, recon_metrics, rpe, Alignment, DepthProtocol,
    DynMapSummary, IouThreshold, MetricsReport, Trajectory, DEFAULT_NC_K,
};
use crate::dynid::PixelDiscrepancy;
use crate::error::{Error, Result};
use crate::geom::{
    weighted_umeyama, DepthMap, Grid, Intrinsics, PointCloud, RigidPose, SimTransform, Vec3,
};

/// Subsampling of the accumulated clouds used for reconstruction metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CloudSampling {
    pub frame_stride: usize,
    pub pixel_stride: usize,
}

impl Default for CloudSampling {
    fn default() -> Self {
        CloudSampling {
            frame_stride: 5,
            pixel_stride: 3,
        }
    }
}

/// Evaluation switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub alignment: Alignment,
    pub depth_protocol: DepthProtocol,
    pub iou_threshold: IouThreshold,
    pub rpe_delta: usize,
    pub nc_k: usize,
    pub cloud_frame_stride: usize,
    pub cloud_pixel_stride: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let sampling = CloudSampling::default();
        EvalConfig {
            alignment: Alignment::Sim3,
            depth_protocol: DepthProtocol::PerSequenceMedian,
            iou_threshold: IouThreshold::PerFrame,
            rpe_delta: 1,
            nc_k: DEFAULT_NC_K,
            cloud_frame_stride: sampling.frame_stride,
            cloud_pixel_stride: sampling.pixel_stride,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("rpe_delta", self.rpe_delta),
            ("nc_k", self.nc_k),
            ("cloud_frame_stride", self.cloud_frame_stride),
            ("cloud_pixel_stride", self.cloud_pixel_stride),
        ] {
            if v < 1 {
                return Err(Error::Config {
                    key: key.into(),
                    constraint: format!("{key} >= 1"),
                });
            }
        }
        Ok(())
    }

    pub fn sampling(&self) -> CloudSampling {
        CloudSampling {
            frame_stride: self.cloud_frame_stride,
            pixel_stride: self.cloud_pixel_stride,
        }
    }

    pub fn with_sampling(mut self, s: CloudSampling) -> Self {
        self.cloud_frame_stride = s.frame_stride;
        self.cloud_pixel_stride = s.pixel_stride;
        self
    }
}

/// Scores of one sequence under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceResult {
    pub name: String,
    pub report: MetricsReport,
    pub dynmap: DynMapSummary,
    pub dynamic_ratio: f64,
}

/// One estimated frame next to its ground truth.
pub struct FramePair<'a> {
    pub est_pose: &'a RigidPose,
    pub est_depth: &'a DepthMap,
    pub discrepancy: Option<&'a PixelDiscrepancy>,
    pub gt_pose: &'a RigidPose,
    pub gt_depth: &'a DepthMap,
    pub gt_mask: Option<&'a Grid<bool>>,
}

/// Collects what the sequence metrics need, one frame at a time.
pub struct SequenceEvaluator {
    cfg: EvalConfig,
    intr: Intrinsics,
    frames: usize,
    est: Vec<RigidPose>,
    gt: Vec<RigidPose>,
    pred_depth: Vec<DepthMap>,
    gt_depth: Vec<DepthMap>,
    pred_pts: Vec<Vec3>,
    gt_pts: Vec<Vec3>,
    pairs: (Vec<Vec3>, Vec<Vec3>),
    deltas: Vec<PixelDiscrepancy>,
    masks: Vec<Grid<bool>>,
    dynamic_px: usize,
    mask_px: usize,
}

impl SequenceEvaluator {
    pub fn new(intr: Intrinsics, cfg: EvalConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SequenceEvaluator {
            cfg,
            intr,
            frames: 0,
            est: Vec::new(),
            gt: Vec::new(),
            pred_depth: Vec::new(),
            gt_depth: Vec::new(),
            pred_pts: Vec::new(),
            gt_pts: Vec::new(),
            pairs: (Vec::new(), Vec::new()),
            deltas: Vec::new(),
            masks: Vec::new(),
            dynamic_px: 0,
            mask_px: 0,
        })
    }

    pub fn add(&mut self, f: FramePair<'_>) -> Result<()> {
        if !f.est_depth.matches(&self.intr) || !f.gt_depth.matches(&self.intr) {
            return Err(Error::dims(
                format!("{}x{} depth", self.intr.width, self.intr.height),
                format!("{}x{}", f.est_depth.width, f.est_depth.height),
            ));
        }
        if let Some(m) = f.gt_mask {
            self.dynamic_px += m.data.iter().filter(|v| **v).count();
            self.mask_px += m.len();
            if let Some(d) = f.discrepancy {
                self.deltas.push(d.clone());
                self.masks.push(m.clone());
            }
        }
        if self.frames.is_multiple_of(self.cfg.cloud_frame_stride) {
            self.sample(&f);
        }
        self.est.push(*f.est_pose);
        self.gt.push(*f.gt_pose);
        self.pred_depth.push(f.est_depth.clone());
        self.gt_depth.push(f.gt_depth.clone());
        self.frames += 1;
        Ok(())
    }

    /// Pixel-stride world points; pixels valid in both maps also feed the
    /// cloud alignment.
    fn sample(&mut self, f: &FramePair<'_>) {
        let stride = self.cfg.cloud_pixel_stride;
        for y in (0..self.intr.height).step_by(stride) {
            for x in (0..self.intr.width).step_by(stride) {
                let ray = self.intr.backproject(x as f64, y as f64);
                let p = f
                    .est_depth
                    .get(x, y)
                    .map(|z| f.est_pose.to_world(&(z * ray)));
                let g = f.gt_depth.get(x, y).map(|z| f.gt_pose.to_world(&(z * ray)));
                if let Some(p) = p {
                    self.pred_pts.push(p);
                }
                if let Some(g) = g {
                    self.gt_pts.push(g);
                }
                if let (Some(p), Some(g)) = (p, g) {
                    self.pairs.0.push(p);
                    self.pairs.1.push(g);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.frames
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    /// Similarity from predicted to ground-truth geometry over pixel
    /// correspondences; identity when degenerate.
    fn cloud_alignment(&self) -> SimTransform {
        let w = vec![1.0; self.pairs.0.len()];
        weighted_umeyama(&self.pairs.0, &self.pairs.1, &w)
            .unwrap_or_else(|_| SimTransform::identity())
    }

    pub fn finish(self, name: &str) -> Result<SequenceResult> {
        let est = Trajectory::from_poses(self.est.clone());
        let gt = Trajectory::from_poses(self.gt.clone());
        let a = ate(&est, &gt, self.cfg.alignment)?;
        let mut report = MetricsReport {
            ate_rmse: Some(a.rmse),
            ..Default::default()
        };
        if est.len() > self.cfg.rpe_delta {
            let r = rpe(&est, &gt, self.cfg.rpe_delta)?;
            report.rpe_trans = Some(r.trans);
            report.rpe_rot = Some(r.rot);
        }
        report = report.with_depth(&depth_metrics(
            &self.pred_depth,
            &self.gt_depth,
            self.cfg.depth_protocol,
        )?);
        if !self.pred_pts.is_empty() && !self.gt_pts.is_empty() {
            let pred = PointCloud::new(self.pred_pts.clone()).transformed(&self.cloud_alignment());
            report = report.with_recon(&recon_metrics(
                &pred,
                &PointCloud::new(self.gt_pts),
                self.cfg.nc_k,
            )?);
        }
        let dynmap = dynmap_metrics_with(&self.deltas, &self.masks, self.cfg.iou_threshold)?;
        if !self.deltas.is_empty() {
            report = report.with_dynmap(&dynmap);
        }
        Ok(SequenceResult {
            name: name.to_string(),
            report,
            dynmap,
            dynamic_ratio: if self.mask_px > 0 {
                self.dynamic_px as f64 / self.mask_px as f64
            } else {
                0.0
            },
        })
    }
}
