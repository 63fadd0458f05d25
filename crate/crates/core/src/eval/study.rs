//! Dynamic-map study over a suite stratified by dynamic coverage.

use rayon::prelude::*;
use serde::Serialize;

use super::{auc, frame_dynmap, spearman, DynMapAccumulator, DynMapSummary};
use crate::error::Result;
use crate::pipeline::{run_stream, Components, PipelineConfig};
use crate::sim::{ground_truth, stratified_scene, SceneSpec, SimulatedBackbone, Stratum};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySequence {
    pub name: String,
    /// Stratum of the measured dynamic ratio.
    pub stratum: Stratum,
    pub summary: DynMapSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumSummary {
    pub stratum: Stratum,
    pub sequences: usize,
    /// Mean over sequences of the frame-averaged disc.
    pub disc: Option<f64>,
    pub auc: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynMapStudy {
    pub sequences: Vec<StudySequence>,
    pub strata: Vec<StratumSummary>,
    /// Rank AUC over the pooled (strided) pixels of every sequence.
    pub pooled_auc: Option<f64>,
    /// Spearman correlation between sequence IoU and dynamic ratio.
    pub spearman_iou_ratio: Option<f64>,
}

/// `n` sequences cycling Low, Medium, High with distinct seeds.
pub fn stratified_suite(n: usize, seed: u64, frame_count: usize) -> Vec<SceneSpec> {
    (0..n)
        .map(|i| {
            stratified_scene(
                Stratum::ALL[i % 3],
                seed.wrapping_mul(1009).wrapping_add(i as u64),
                frame_count,
            )
        })
        .collect()
}

struct Pooled {
    seq: StudySequence,
    scores: Vec<f64>,
    labels: Vec<bool>,
}

fn run_one(spec: &SceneSpec, cfg: &PipelineConfig, pixel_stride: usize) -> Result<Pooled> {
    let mut acc = DynMapAccumulator::default();
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    let (mut dyn_px, mut all_px) = (0usize, 0usize);
    run_stream(
        SimulatedBackbone::new(spec.clone())?,
        *cfg,
        spec.frame_count,
        |out| {
            let truth = ground_truth(spec, out.frame_index)?;
            dyn_px += truth.dynamic_mask.data.iter().filter(|m| **m).count();
            all_px += truth.dynamic_mask.len();
            if let Some(d) = &out.discrepancy {
                acc.add(&frame_dynmap(d, &truth.dynamic_mask)?);
                let w = d.delta.width;
                for (i, ((v, inc), m)) in d
                    .delta
                    .data
                    .iter()
                    .zip(&d.included.data)
                    .zip(&truth.dynamic_mask.data)
                    .enumerate()
                {
                    if *inc && (i % w) % pixel_stride == 0 && (i / w) % pixel_stride == 0 {
                        scores.push(*v);
                        labels.push(*m);
                    }
                }
            }
            Ok(())
        },
    )?;
    let mut summary = acc.summary();
    // coverage over every frame, not only gated ones
    summary.dynamic_ratio = if all_px > 0 {
        dyn_px as f64 / all_px as f64
    } else {
        0.0
    };
    Ok(Pooled {
        seq: StudySequence {
            name: spec.name.clone(),
            stratum: Stratum::of_ratio(summary.dynamic_ratio),
            summary,
        },
        scores,
        labels,
    })
}

/// Runs gating (R) on every sequence and summarizes per stratum.
/// `base` supplies every setting but the component toggles.
pub fn dynmap_study(
    suite: &[SceneSpec],
    base: &PipelineConfig,
    pixel_stride: usize,
) -> Result<DynMapStudy> {
    let cfg = PipelineConfig {
        components: Components::R,
        ..*base
    };
    let stride = pixel_stride.max(1);
    let runs = suite
        .par_iter()
        .map(|s| run_one(s, &cfg, stride))
        .collect::<Result<Vec<_>>>()?;

    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let mut sequences = Vec::with_capacity(runs.len());
    for r in runs {
        scores.extend(r.scores);
        labels.extend(r.labels);
        sequences.push(r.seq);
    }
    let mean =
        |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
    let strata = Stratum::ALL
        .iter()
        .map(|st| {
            let members: Vec<&StudySequence> =
                sequences.iter().filter(|s| s.stratum == *st).collect();
            StratumSummary {
                stratum: *st,
                sequences: members.len(),
                disc: mean(members.iter().filter_map(|s| s.summary.disc).collect()),
                auc: mean(members.iter().filter_map(|s| s.summary.auc).collect()),
                iou: mean(members.iter().filter_map(|s| s.summary.iou).collect()),
            }
        })
        .collect();
    let (ious, ratios): (Vec<f64>, Vec<f64>) = sequences
        .iter()
        .filter_map(|s| s.summary.iou.map(|i| (i, s.summary.dynamic_ratio)))
        .unzip();
    Ok(DynMapStudy {
        pooled_auc: auc(&scores, &labels),
        spearman_iou_ratio: spearman(&ious, &ratios),
        sequences,
        strata,
    })
}
