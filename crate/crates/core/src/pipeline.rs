//! Streaming session: one backbone, one sequence, frames strictly in order.
//!
//! Per frame: decode the main branch, sample the state-change signal, gate
//! the memory update with the RayMap branch, correct into the global frame,
//! smooth. Reset boundaries decode the repeated frame a second time with a
//! fresh memory and, when enabled, estimate the segment correction from the
//! two decodes.

use serde::{Deserialize, Serialize};

use crate::align::{
    correct_prediction, estimate_reset_correction, CorrectionChain, ResetPolicy, SegmentCorrection,
};
use crate::backbone::{apply_ungated, Backbone, FrameHandle, StateVector};
use crate::dynid::{self, DynIdConfig, PixelDiscrepancy, StaticnessWeights};
use crate::error::{Error, Result};
use crate::geom::{DepthMap, Grid, RigidPose, SimTransform};
use crate::raymap::{build_raymap, raymap_from_predicted_pose, PatchGrid};
use crate::smooth::{smooth_step, state_change_signal, SmoothConfig, SmoothTrace, SmootherState};

/// Component toggles; the ablation axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Components {
    /// Dual-branch gating of memory updates.
    pub gating: bool,
    /// Metric alignment at resets.
    pub alignment: bool,
    /// State-aware trajectory smoothing.
    pub smoothing: bool,
}

impl Components {
    pub const BASE: Components = Components::new(false, false, false);
    pub const R: Components = Components::new(true, false, false);
    pub const RM: Components = Components::new(true, true, false);
    pub const RS: Components = Components::new(true, false, true);
    pub const FULL: Components = Components::new(true, true, true);
    pub const ABLATION: [Components; 5] = [Self::BASE, Self::R, Self::RM, Self::RS, Self::FULL];

    pub const fn new(gating: bool, alignment: bool, smoothing: bool) -> Self {
        Components {
            gating,
            alignment,
            smoothing,
        }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.gating {
            parts.push("R");
        }
        if self.alignment {
            parts.push("M");
        }
        if self.smoothing {
            parts.push("S");
        }
        match parts.len() {
            0 => "Base".into(),
            3 => "Full".into(),
            _ => parts.join("+"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub components: Components,
    pub dynid: DynIdConfig,
    pub smooth: SmoothConfig,
    pub reset: ResetPolicy,
}

impl PipelineConfig {
    pub fn with_components(components: Components) -> Self {
        PipelineConfig {
            components,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dynid.validate().map_err(|e| e.within("dynid"))?;
        self.smooth.validate().map_err(|e| e.within("smooth"))?;
        self.reset.validate().map_err(|e| e.within("reset"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResetEvent {
    pub local: SegmentCorrection,
    /// Raw-to-global transform in force for the new segment.
    pub cumulative: SimTransform,
}

/// Everything a session emits for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub frame_index: usize,
    /// Backbone pose before correction and smoothing.
    pub raw_pose: RigidPose,
    /// Final pose in the global frame.
    pub pose: RigidPose,
    /// Depth in the global metric frame.
    pub depth: DepthMap,
    pub confidence: Grid<f64>,
    pub discrepancy: Option<PixelDiscrepancy>,
    pub staticness: Grid<f64>,
    /// Gate values applied to the memory update.
    pub gate: Vec<f64>,
    pub sc: f64,
    pub smooth: Option<SmoothTrace>,
    pub reset: Option<ResetEvent>,
}

impl FrameOutput {
    pub fn gate_mean(&self) -> f64 {
        if self.gate.is_empty() {
            1.0
        } else {
            self.gate.iter().sum::<f64>() / self.gate.len() as f64
        }
    }
}

pub struct Session<B: Backbone> {
    backbone: B,
    cfg: PipelineConfig,
    patches: PatchGrid,
    state: StateVector,
    weights: StaticnessWeights,
    smoother: SmootherState,
    chain: CorrectionChain,
    /// Frames processed since the last reset (or the start).
    segment_frames: usize,
    last_raw_pose: Option<RigidPose>,
    next_frame: usize,
}

impl<B: Backbone> Session<B> {
    pub fn new(backbone: B, cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let intr = *backbone.intrinsics();
        let patches = PatchGrid::new(intr.width, intr.height, backbone.patch_size());
        let state = backbone.initial_state();
        let weights = StaticnessWeights::new(state.shape().0, intr.width, intr.height);
        Ok(Session {
            backbone,
            cfg,
            patches,
            state,
            weights,
            smoother: SmootherState::default(),
            chain: CorrectionChain::default(),
            segment_frames: 0,
            last_raw_pose: None,
            next_frame: 0,
        })
    }

    pub fn backbone(&self) -> &B {
        &self.backbone
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn cumulative_correction(&self) -> &SimTransform {
        self.chain.cumulative()
    }

    /// Decodes the next frame. Frames must arrive in order starting at 0.
    pub fn process(&mut self, frame: usize) -> Result<FrameOutput> {
        if frame != self.next_frame {
            return Err(Error::InvalidParameter(format!(
                "frames must be processed in order: expected {}, got {frame}",
                self.next_frame
            )));
        }
        let intr = *self.backbone.intrinsics();
        let comps = self.cfg.components;

        // The image branch is driven by the latest pose estimate; a real
        // backbone ignores this input, the contract only fixes its shape.
        let prior = self.last_raw_pose.unwrap_or_else(RigidPose::identity);
        let hint = build_raymap(&intr, &prior)?;
        let hint_weights = comps.gating.then_some(&self.weights.pixel_map);
        let main =
            self.backbone
                .decode_main(FrameHandle(frame), &hint, &self.state, hint_weights)?;
        main.validate()?;
        let raw_pose = *main.require_pose()?;
        let delta = main.state_delta.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!("frame {frame}: prediction carries no state delta"))
        })?;
        let sc = state_change_signal(delta);

        let mut discrepancy = None;
        if comps.gating {
            let warmup = self.segment_frames < self.cfg.dynid.warmup_frames;
            let ray_pred = if warmup {
                None
            } else {
                let rm = raymap_from_predicted_pose(&raw_pose, &intr)?;
                Some(self.backbone.decode_raymap_only(&rm, &self.state)?)
            };
            let out = dynid::step(
                &main,
                ray_pred.as_ref(),
                &self.state,
                &self.weights,
                &self.patches,
                &self.cfg.dynid,
                warmup,
            )?;
            self.state = out.state;
            self.weights = out.weights;
            discrepancy = out.maps.map(|m| m.pixel);
        } else {
            self.state = apply_ungated(&self.state, delta)?;
        }
        let gate = self.weights.ema.clone();
        let staticness = self.weights.pixel_map.clone();

        let corrected = correct_prediction(&self.chain.current(), &main);
        let global_pose = *corrected.require_pose()?;
        let (pose, smooth) = if comps.smoothing {
            let (p, t) = smooth_step(&global_pose, sc, &mut self.smoother, &self.cfg.smooth);
            (p, Some(t))
        } else {
            (global_pose, None)
        };

        let reset = if self.cfg.reset.is_reset_frame(frame) {
            Some(self.reset(frame, &main)?)
        } else {
            self.segment_frames += 1;
            None
        };

        self.last_raw_pose = Some(raw_pose);
        self.next_frame += 1;
        Ok(FrameOutput {
            frame_index: frame,
            raw_pose,
            pose,
            depth: corrected.depth,
            confidence: corrected.confidence,
            discrepancy,
            staticness,
            gate,
            sc,
            smooth,
            reset,
        })
    }

    /// Reinitializes memory from the repeated boundary frame.
    fn reset(
        &mut self,
        frame: usize,
        pre: &crate::backbone::FramePrediction,
    ) -> Result<ResetEvent> {
        let intr = *self.backbone.intrinsics();
        let comps = self.cfg.components;
        let fresh = self.backbone.reset_state(&self.state);
        let hint = build_raymap(&intr, pre.require_pose()?)?;
        let post = self
            .backbone
            .decode_main(FrameHandle(frame), &hint, &fresh, None)?;
        post.validate()?;

        let local = if comps.alignment {
            let uniform;
            let weights = if comps.gating {
                &self.weights.pixel_map
            } else {
                uniform = Grid::filled(intr.width, intr.height, 1.0);
                &uniform
            };
            estimate_reset_correction(pre, &post, weights, &intr, frame)?
        } else {
            SegmentCorrection::identity(frame)
        };
        let cumulative = self.chain.push(local).transform;
        log::debug!(
            "reset at {frame}: scale {:.4}, angle {:.4} rad, residual {:.2e}, degenerate {}",
            local.transform.scale,
            local.transform.rotation_angle(),
            local.residual,
            local.degenerate
        );

        // the repeated frame seeds the new memory ungated
        let delta = post.state_delta.as_ref().ok_or_else(|| {
            Error::InvalidParameter(format!("frame {frame}: prediction carries no state delta"))
        })?;
        self.state = apply_ungated(&fresh, delta)?;
        self.weights = StaticnessWeights::new(self.state.shape().0, intr.width, intr.height);
        self.segment_frames = 1;
        Ok(ResetEvent { local, cumulative })
    }
}

/// Runs `frames` frames through a fresh session, handing each output to
/// `sink` as soon as it is produced.
pub fn run_stream<B, F>(backbone: B, cfg: PipelineConfig, frames: usize, mut sink: F) -> Result<()>
where
    B: Backbone,
    F: FnMut(FrameOutput) -> Result<()>,
{
    let mut session = Session::new(backbone, cfg)?;
    for f in 0..frames {
        let out = session.process(f).map_err(|e| Error::Frame {
            frame: f,
            source: Box::new(e),
        })?;
        sink(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{SceneSpec, SimulatedBackbone};

    fn scene(frames: usize) -> SceneSpec {
        SceneSpec {
            frame_count: frames,
            ..SceneSpec::default()
        }
    }

    fn collect(spec: SceneSpec, cfg: PipelineConfig, frames: usize) -> Vec<FrameOutput> {
        let mut out = Vec::new();
        run_stream(SimulatedBackbone::new(spec).unwrap(), cfg, frames, |o| {
            out.push(o);
            Ok(())
        })
        .unwrap();
        out
    }

    #[test]
    fn labels() {
        let labels: Vec<_> = Components::ABLATION.iter().map(Components::label).collect();
        assert_eq!(labels, ["Base", "R", "R+M", "R+S", "Full"]);
    }

    #[test]
    fn frames_out_of_order_rejected() {
        let bb = SimulatedBackbone::new(scene(10)).unwrap();
        let mut s = Session::new(bb, PipelineConfig::default()).unwrap();
        s.process(0).unwrap();
        assert!(s.process(2).is_err());
        assert!(s.process(1).is_ok());
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = PipelineConfig::default();
        cfg.dynid.gamma = 0.0;
        assert!(Session::new(SimulatedBackbone::new(scene(5)).unwrap(), cfg).is_err());
        let mut cfg = PipelineConfig::default();
        cfg.reset.period = 1;
        assert!(Session::new(SimulatedBackbone::new(scene(5)).unwrap(), cfg).is_err());
    }

    #[test]
    fn base_outputs_raw_poses() {
        let out = collect(
            scene(60),
            PipelineConfig::with_components(Components::BASE),
            60,
        );
        for o in &out {
            assert_eq!(o.pose, o.raw_pose);
            assert!(o.smooth.is_none() && o.discrepancy.is_none());
            assert_eq!(o.gate_mean(), 1.0);
        }
    }

    #[test]
    fn resets_follow_policy() {
        let out = collect(scene(120), PipelineConfig::default(), 120);
        let resets: Vec<_> = out
            .iter()
            .filter(|o| o.reset.is_some())
            .map(|o| o.frame_index)
            .collect();
        assert_eq!(resets, [50, 100]);

        let mut cfg = PipelineConfig::default();
        cfg.reset.enabled = false;
        assert!(collect(scene(120), cfg, 120)
            .iter()
            .all(|o| o.reset.is_none()));
    }

    #[test]
    fn static_noiseless_gating_is_inert() {
        let spec = scene(40).static_only().noiseless();
        let on = collect(
            spec.clone(),
            PipelineConfig::with_components(Components::R),
            40,
        );
        let off = collect(spec, PipelineConfig::with_components(Components::BASE), 40);
        for (a, b) in on.iter().zip(&off) {
            let d = (a.pose.translation - b.pose.translation).norm();
            assert!(d < 1e-9, "frame {}: {d}", a.frame_index);
            assert!(a.gate.iter().all(|&g| (g - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn alignment_undoes_segment_drift() {
        let spec = scene(120).static_only().noiseless();
        let err = |cfg: PipelineConfig| {
            let out = collect(spec.clone(), cfg, 120);
            out.iter()
                .skip(101)
                .map(|o| (o.pose.translation - spec.gt_pose(o.frame_index).translation).norm())
                .fold(0.0, f64::max)
        };
        let with = err(PipelineConfig::with_components(Components::RM));
        let without = err(PipelineConfig::with_components(Components::R));
        assert!(with < 1e-6, "aligned error {with}");
        assert!(without > 1e-2, "unaligned error {without}");
    }
}
