use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{
    rotation_angle, weighted_rigid, weighted_umeyama, Mat3, RigidPose, SimTransform, Vec3,
};

/// Timestamped camera poses, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    stamps: Vec<f64>,
    poses: Vec<RigidPose>,
}

impl Trajectory {
    pub fn new(stamps: Vec<f64>, poses: Vec<RigidPose>) -> Result<Self> {
        if stamps.len() != poses.len() {
            return Err(Error::dims(format!("{} poses", stamps.len()), poses.len()));
        }
        let mut traj = Trajectory::default();
        for (t, p) in stamps.into_iter().zip(poses) {
            traj.push(t, p)?;
        }
        Ok(traj)
    }

    /// Timestamps are the frame indices.
    pub fn from_poses(poses: Vec<RigidPose>) -> Self {
        Trajectory {
            stamps: (0..poses.len()).map(|i| i as f64).collect(),
            poses,
        }
    }

    pub fn push(&mut self, stamp: f64, pose: RigidPose) -> Result<()> {
        if !stamp.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite timestamp {stamp}"
            )));
        }
        if let Some(last) = self.stamps.last() {
            if stamp <= *last {
                return Err(Error::InvalidParameter(format!(
                    "timestamps must increase strictly ({stamp} after {last})"
                )));
            }
        }
        self.stamps.push(stamp);
        self.poses.push(pose);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn stamps(&self) -> &[f64] {
        &self.stamps
    }

    pub fn poses(&self) -> &[RigidPose] {
        &self.poses
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &RigidPose)> {
        self.stamps.iter().copied().zip(&self.poses)
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.poses.iter().map(RigidPose::camera_center).collect()
    }

    pub fn transformed(&self, t: &SimTransform) -> Trajectory {
        Trajectory {
            stamps: self.stamps.clone(),
            poses: self.poses.iter().map(|p| t.transform_pose(p)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    #[default]
    Sim3,
    Se3,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteResult {
    pub rmse: f64,
    /// Transform applied to the estimate before measuring.
    pub transform: SimTransform,
    /// The requested alignment was degenerate and none was applied.
    pub fell_back: bool,
}

fn check_lengths(est: &Trajectory, gt: &Trajectory) -> Result<()> {
    if est.len() != gt.len() {
        return Err(Error::dims(format!("{} poses", gt.len()), est.len()));
    }
    if est.is_empty() {
        return Err(Error::Insufficient("empty trajectory".into()));
    }
    Ok(())
}

/// Fits `alignment` from estimated to ground-truth camera centers.
pub fn align_trajectory(
    est: &Trajectory,
    gt: &Trajectory,
    alignment: Alignment,
) -> Result<(SimTransform, bool)> {
    check_lengths(est, gt)?;
    let (src, dst) = (est.centers(), gt.centers());
    let w = vec![1.0; src.len()];
    let fit = match alignment {
        Alignment::None => return Ok((SimTransform::identity(), false)),
        Alignment::Sim3 => weighted_umeyama(&src, &dst, &w),
        Alignment::Se3 => weighted_rigid(&src, &dst, &w),
    };
    match fit {
        Ok(t) => Ok((t, false)),
        Err(Error::Degenerate(msg)) => {
            log::warn!("trajectory alignment degenerate ({msg}); measuring unaligned");
            Ok((SimTransform::identity(), true))
        }
        Err(e) => Err(e),
    }
}

/// Absolute translation error: RMSE of camera-center residuals after
/// alignment, with association by index.
pub fn ate(est: &Trajectory, gt: &Trajectory, alignment: Alignment) -> Result<AteResult> {
    if alignment == Alignment::Sim3 && est.len() < 3 {
        return Err(Error::Insufficient(format!(
            "sim3 alignment needs 3 poses, got {}",
            est.len()
        )));
    }
    let (transform, fell_back) = align_trajectory(est, gt, alignment)?;
    let sse: f64 = est
        .centers()
        .iter()
        .zip(gt.centers())
        .map(|(e, g)| (transform.apply(e) - g).norm_squared())
        .sum();
    Ok(AteResult {
        rmse: (sse / est.len() as f64).sqrt(),
        transform,
        fell_back,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RpeResult {
    pub trans: f64,
    /// Degrees.
    pub rot: f64,
}

/// Camera-to-world motion `(R, c)`.
type Motion = (Mat3, Vec3);

fn c2w(p: &RigidPose) -> Motion {
    (p.orientation(), p.camera_center())
}

/// `a⁻¹·b` for camera-to-world motions.
fn relative(a: &Motion, b: &Motion) -> Motion {
    (a.0.transpose() * b.0, a.0.transpose() * (b.1 - a.1))
}

/// Relative pose error over a fixed frame gap, after a similarity
/// pre-alignment of the estimate.
pub fn rpe(est: &Trajectory, gt: &Trajectory, delta_frames: usize) -> Result<RpeResult> {
    check_lengths(est, gt)?;
    if delta_frames == 0 {
        return Err(Error::InvalidParameter("delta_frames >= 1".into()));
    }
    if est.len() <= delta_frames {
        return Err(Error::Insufficient(format!(
            "{} poses do not span a gap of {delta_frames}",
            est.len()
        )));
    }
    let aligned = if est.len() >= 3 {
        let (t, _) = align_trajectory(est, gt, Alignment::Sim3)?;
        est.transformed(&t)
    } else {
        est.clone()
    };
    let e: Vec<Motion> = aligned.poses().iter().map(c2w).collect();
    let g: Vec<Motion> = gt.poses().iter().map(c2w).collect();
    let (mut st, mut sr) = (0.0, 0.0);
    let n = e.len() - delta_frames;
    for i in 0..n {
        let re = relative(&e[i], &e[i + delta_frames]);
        let rg = relative(&g[i], &g[i + delta_frames]);
        let err = relative(&rg, &re);
        // rg⁻¹·re carries the error translation directly
        st += err.1.norm_squared();
        sr += rotation_angle(&err.0).to_degrees().powi(2);
    }
    Ok(RpeResult {
        trans: (st / n as f64).sqrt(),
        rot: (sr / n as f64).sqrt(),
    })
}
