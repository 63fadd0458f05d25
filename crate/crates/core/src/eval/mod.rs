//! Trajectory, depth, reconstruction and dynamic-map metrics.

mod ablation;
mod depth;
mod dynmap;
mod recon;
mod sequence;
mod study;
mod trajectory;

pub use ablation::{ablation_harness, evaluate_sequence, run_configurations, AblationRow};
pub use depth::{depth_metrics, DepthProtocol, DepthResult};
pub use dynmap::{
    auc, average_ranks, dynmap_metrics, dynmap_metrics_with, frame_dynmap, frame_dynmap_at,
    otsu_threshold, spearman, DynMapAccumulator, DynMapSummary, FrameDynStats, IouThreshold,
    OTSU_BINS,
};
pub use recon::{recon_metrics, ReconResult, DEFAULT_NC_K};
pub use sequence::{CloudSampling, EvalConfig, FramePair, SequenceEvaluator, SequenceResult};
pub use study::{dynmap_study, stratified_suite, DynMapStudy, StratumSummary, StudySequence};
pub use trajectory::{align_trajectory, ate, rpe, Alignment, AteResult, RpeResult, Trajectory};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Every metric the pipeline reports; fields stay `None` when not measured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ate_rmse: Option<f64>,
    pub rpe_trans: Option<f64>,
    pub rpe_rot: Option<f64>,
    pub abs_rel: Option<f64>,
    pub delta_125: Option<f64>,
    pub accuracy: Option<f64>,
    pub completion: Option<f64>,
    pub normal_consistency: Option<f64>,
    pub chamfer: Option<f64>,
    pub auc: Option<f64>,
    pub iou: Option<f64>,
    pub disc: Option<f64>,
    pub spearman_rho: Option<f64>,
}

impl MetricsReport {
    const COLUMNS: [&'static str; 13] = [
        "ATE", "RPE_t", "RPE_r", "AbsRel", "d<1.25", "Acc", "Comp", "NC", "Chamfer", "AUC", "IoU",
        "disc", "rho",
    ];

    pub fn values(&self) -> [Option<f64>; 13] {
        [
            self.ate_rmse,
            self.rpe_trans,
            self.rpe_rot,
            self.abs_rel,
            self.delta_125,
            self.accuracy,
            self.completion,
            self.normal_consistency,
            self.chamfer,
            self.auc,
            self.iou,
            self.disc,
            self.spearman_rho,
        ]
    }

    /// Checks the documented ranges of each field.
    pub fn is_consistent(&self) -> bool {
        let unit = |v: Option<f64>| v.is_none_or(|x| (0.0..=1.0).contains(&x));
        self.delta_125.is_none_or(|d| (0.0..=100.0).contains(&d))
            && unit(self.auc)
            && unit(self.iou)
            && unit(self.normal_consistency)
            && self.disc.is_none_or(|d| d >= 0.0)
            && self.spearman_rho.is_none_or(|r| (-1.0..=1.0).contains(&r))
    }

    /// Fills the trajectory fields from ATE (sim3) and RPE (Δ = 1).
    pub fn with_trajectory(mut self, est: &Trajectory, gt: &Trajectory) -> crate::Result<Self> {
        self.ate_rmse = Some(ate(est, gt, Alignment::Sim3)?.rmse);
        let r = rpe(est, gt, 1)?;
        self.rpe_trans = Some(r.trans);
        self.rpe_rot = Some(r.rot);
        Ok(self)
    }

    pub fn with_depth(mut self, d: &DepthResult) -> Self {
        self.abs_rel = Some(d.abs_rel);
        self.delta_125 = Some(d.delta_125);
        self
    }

    pub fn with_recon(mut self, r: &ReconResult) -> Self {
        self.accuracy = Some(r.accuracy);
        self.completion = Some(r.completion);
        self.chamfer = Some(r.chamfer);
        self.normal_consistency = r.normal_consistency;
        self
    }

    pub fn with_dynmap(mut self, d: &DynMapSummary) -> Self {
        self.auc = d.auc;
        self.iou = d.iou;
        self.disc = d.disc;
        self
    }
}

/// Aligned-column text table: one row per labelled report, columns limited
/// to metrics present in at least one row.
pub fn format_table(rows: &[(String, MetricsReport)]) -> String {
    let cols: Vec<usize> = (0..13)
        .filter(|c| rows.iter().any(|(_, r)| r.values()[*c].is_some()))
        .collect();
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "");
    for c in &cols {
        let _ = write!(out, " {:>10}", MetricsReport::COLUMNS[*c]);
    }
    out.push('\n');
    for (label, r) in rows {
        let _ = write!(out, "{label:<label_w$}");
        let v = r.values();
        for c in &cols {
            match v[*c] {
                Some(x) => {
                    let _ = write!(out, " {x:>10.4}");
                }
                None => {
                    let _ = write!(out, " {:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_layout() {
        let a = MetricsReport {
            ate_rmse: Some(0.1),
            chamfer: Some(0.25),
            ..Default::default()
        };
        let b = MetricsReport {
            ate_rmse: Some(0.05),
            ..Default::default()
        };
        let t = format_table(&[("Base".into(), a), ("Full".into(), b)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(
            lines[0].contains("ATE") && lines[0].contains("Chamfer") && !lines[0].contains("AUC")
        );
        assert!(lines[2].trim_end().ends_with('-'));
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
    }

    #[test]
    fn consistency_ranges() {
        assert!(MetricsReport::default().is_consistent());
        let bad = MetricsReport {
            auc: Some(1.5),
            ..Default::default()
        };
        assert!(!bad.is_consistent());
    }
}
