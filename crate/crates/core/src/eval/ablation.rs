//! End-to-end scoring of pipeline configurations on simulated sequences.

use rayon::prelude::*;
use serde::Serialize;

use super::{EvalConfig, FramePair, MetricsReport, SequenceEvaluator, SequenceResult};
use crate::error::Result;
use crate::pipeline::{run_stream, Components, PipelineConfig};
use crate::sim::{ground_truth, SceneSpec, SimulatedBackbone};

/// Runs the pipeline on `spec` and evaluates against the simulator's ground
/// truth. Trajectories are compared after the configured alignment of camera
/// centers; the reconstruction after a similarity fit over pixel
/// correspondences.
pub fn evaluate_sequence(
    spec: &SceneSpec,
    cfg: &PipelineConfig,
    eval: &EvalConfig,
) -> Result<SequenceResult> {
    let backbone = SimulatedBackbone::new(spec.clone())?;
    let mut ev = SequenceEvaluator::new(spec.intrinsics, *eval)?;
    run_stream(backbone, *cfg, spec.frame_count, |out| {
        let truth = ground_truth(spec, out.frame_index)?;
        ev.add(FramePair {
            est_pose: &out.pose,
            est_depth: &out.depth,
            discrepancy: out.discrepancy.as_ref(),
            gt_pose: &truth.pose,
            gt_depth: &truth.depth,
            gt_mask: Some(&truth.dynamic_mask),
        })
    })?;
    ev.finish(&spec.name)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub components: Components,
    /// Means over every sequence of the suite.
    pub mean: MetricsReport,
    pub sequences: Vec<SequenceResult>,
}

fn mean_report(rs: &[SequenceResult]) -> MetricsReport {
    let mean = |f: fn(&MetricsReport) -> Option<f64>| {
        let vals: Vec<f64> = rs
            .iter()
            .filter_map(|r| f(&r.report))
            .filter(|v| v.is_finite())
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    MetricsReport {
        ate_rmse: mean(|r| r.ate_rmse),
        rpe_trans: mean(|r| r.rpe_trans),
        rpe_rot: mean(|r| r.rpe_rot),
        abs_rel: mean(|r| r.abs_rel),
        delta_125: mean(|r| r.delta_125),
        accuracy: mean(|r| r.accuracy),
        completion: mean(|r| r.completion),
        normal_consistency: mean(|r| r.normal_consistency),
        chamfer: mean(|r| r.chamfer),
        auc: mean(|r| r.auc),
        iou: mean(|r| r.iou),
        disc: mean(|r| r.disc),
        spearman_rho: None,
    }
}

/// Base / R / R+M / R+S / Full over `suite`, sharing every other setting
/// of `base`.
pub fn ablation_harness(
    suite: &[SceneSpec],
    base: &PipelineConfig,
    eval: &EvalConfig,
) -> Result<Vec<AblationRow>> {
    run_configurations(suite, base, &Components::ABLATION, eval)
}

/// Every (configuration, sequence) pair is independent; they run in
/// parallel and come back in input order.
pub fn run_configurations(
    suite: &[SceneSpec],
    base: &PipelineConfig,
    configs: &[Components],
    eval: &EvalConfig,
) -> Result<Vec<AblationRow>> {
    let jobs: Vec<(usize, &SceneSpec)> = (0..configs.len())
        .flat_map(|c| suite.iter().map(move |s| (c, s)))
        .collect();
    let mut results = jobs
        .par_iter()
        .map(|(c, s)| {
            let cfg = PipelineConfig {
                components: configs[*c],
                ..*base
            };
            evaluate_sequence(s, &cfg, eval)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    Ok(configs
        .iter()
        .map(|c| {
            let sequences: Vec<SequenceResult> = results.by_ref().take(suite.len()).collect();
            AblationRow {
                label: c.label(),
                components: *c,
                mean: mean_report(&sequences),
                sequences,
            }
        })
        .collect())
}
