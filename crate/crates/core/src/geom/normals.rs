use nalgebra::SymmetricEigen;

use super::{KdTree, Mat3, PointCloud, Vec3};
use crate::error::{Error, Result};

/// Per-point normals from the smallest-eigenvalue eigenvector of the local
/// covariance over each point and its `k` nearest neighbors, oriented toward
/// `viewpoint`.
///
/// Degenerate neighborhoods (collinear or coincident points) still yield a
/// finite unit vector orthogonal to the dominant direction.
pub fn estimate_normals(cloud: &PointCloud, k: usize, viewpoint: &Vec3) -> Result<PointCloud> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("k must be >= 3, got {k}")));
    }
    if cloud.len() < k + 1 {
        return Err(Error::Insufficient(format!(
            "normal estimation with k={k} needs {} points, got {}",
            k + 1,
            cloud.len()
        )));
    }
    let tree = KdTree::new(&cloud.points);
    let normals = cloud
        .points
        .iter()
        .map(|p| {
            let neighbors = tree.knn(p, k + 1);
            let mut mean = Vec3::zeros();
            for (i, _) in &neighbors {
                mean += cloud.points[*i];
            }
            mean /= neighbors.len() as f64;
            let mut cov = Mat3::zeros();
            for (i, _) in &neighbors {
                let d = cloud.points[*i] - mean;
                cov += d * d.transpose();
            }
            let normal = smallest_eigenvector(cov);
            if normal.dot(&(viewpoint - p)) < 0.0 {
                -normal
            } else {
                normal
            }
        })
        .collect();
    Ok(PointCloud {
        points: cloud.points.clone(),
        weights: cloud.weights.clone(),
        normals: Some(normals),
    })
}

fn smallest_eigenvector(cov: Mat3) -> Vec3 {
    let eig = SymmetricEigen::new(cov);
    let idx = eig.eigenvalues.imin();
    let v: Vec3 = eig.eigenvectors.column(idx).into_owned();
    let n = v.norm();
    if n.is_finite() && n > 0.0 {
        v / n
    } else {
        Vec3::z()
    }
}
