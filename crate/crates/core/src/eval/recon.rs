use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{estimate_normals, KdTree, PointCloud, Vec3};

pub const DEFAULT_NC_K: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReconResult {
    pub accuracy: f64,
    pub completion: f64,
    pub chamfer: f64,
    /// `None` when either cloud is too small for normal estimation.
    pub normal_consistency: Option<f64>,
}

fn mean_nn(from: &[Vec3], tree: &KdTree) -> (f64, Vec<usize>) {
    let mut sum = 0.0;
    let mut idx = Vec::with_capacity(from.len());
    for p in from {
        let (i, d) = tree.nearest(p).expect("tree is nonempty");
        sum += d;
        idx.push(i);
    }
    (sum / from.len() as f64, idx)
}

fn normals_of(cloud: &PointCloud, k: usize) -> Option<Vec<Vec3>> {
    if let Some(n) = &cloud.normals {
        return Some(n.clone());
    }
    estimate_normals(cloud, k, &Vec3::zeros())
        .ok()
        .and_then(|c| c.normals)
}

/// Accuracy (pred → gt), completion (gt → pred), their mean (Chamfer) and
/// normal consistency averaged over both directions.
pub fn recon_metrics(pred: &PointCloud, gt: &PointCloud, nc_k: usize) -> Result<ReconResult> {
    if pred.points.is_empty() || gt.points.is_empty() {
        return Err(Error::Insufficient(
            "reconstruction metrics need nonempty clouds".into(),
        ));
    }
    let gt_tree = KdTree::new(&gt.points);
    let pred_tree = KdTree::new(&pred.points);
    let (accuracy, to_gt) = mean_nn(&pred.points, &gt_tree);
    let (completion, to_pred) = mean_nn(&gt.points, &pred_tree);

    let normal_consistency = match (normals_of(pred, nc_k), normals_of(gt, nc_k)) {
        (Some(np), Some(ng)) => {
            let a: f64 = to_gt
                .iter()
                .enumerate()
                .map(|(i, j)| np[i].dot(&ng[*j]).abs())
                .sum();
            let b: f64 = to_pred
                .iter()
                .enumerate()
                .map(|(i, j)| ng[i].dot(&np[*j]).abs())
                .sum();
            Some(0.5 * (a / np.len() as f64 + b / ng.len() as f64))
        }
        _ => None,
    };
    Ok(ReconResult {
        accuracy,
        completion,
        chamfer: 0.5 * (accuracy + completion),
        normal_consistency,
    })
}
