//! Periodic memory resets and metric re-alignment of the segment that
//! follows each reset.

use serde::{Deserialize, Serialize};

use crate::backbone::FramePrediction;
use crate::error::{Error, Result};
use crate::geom::umeyama::weighted_rms;
use crate::geom::{weighted_umeyama, Grid, Intrinsics, PointCloud, RigidPose, SimTransform};

/// Pixels whose staticness falls below this are dropped.
pub const WEIGHT_FLOOR: f64 = 1e-3;
/// Fewer surviving correspondences than this yields a degenerate correction.
pub const MIN_CORRESPONDENCES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResetPolicy {
    pub period: usize,
    pub enabled: bool,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        ResetPolicy {
            period: 50,
            enabled: true,
        }
    }
}

impl ResetPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.period < 2 {
            return Err(Error::Config {
                key: "period".into(),
                constraint: "period >= 2".into(),
            });
        }
        Ok(())
    }

    /// Frame 0 never resets; afterwards every `period`-th frame does.
    pub fn is_reset_frame(&self, frame: usize) -> bool {
        self.enabled && frame > 0 && frame.is_multiple_of(self.period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCorrection {
    pub transform: SimTransform,
    pub reset_frame: usize,
    /// Weighted RMS of the aligned correspondences, meters.
    pub residual: f64,
    pub degenerate: bool,
    pub correspondences: usize,
}

impl SegmentCorrection {
    pub fn identity(reset_frame: usize) -> Self {
        SegmentCorrection {
            transform: SimTransform::identity(),
            reset_frame,
            residual: 0.0,
            degenerate: false,
            correspondences: 0,
        }
    }

    fn degenerate(reset_frame: usize, correspondences: usize) -> Self {
        SegmentCorrection {
            degenerate: true,
            correspondences,
            ..Self::identity(reset_frame)
        }
    }
}

/// Estimates the similarity mapping post-reset geometry onto the pre-reset
/// geometry of the same (repeated) frame. Pixel correspondences are implicit.
///
/// Only shape mismatches are errors; anything else that prevents a fit comes
/// back as an identity correction flagged `degenerate`.
pub fn estimate_reset_correction(
    pre: &FramePrediction,
    post: &FramePrediction,
    static_weights: &Grid<f64>,
    intr: &Intrinsics,
    reset_frame: usize,
) -> Result<SegmentCorrection> {
    for (what, w, h) in [
        ("pre-reset depth", pre.depth.width, pre.depth.height),
        ("post-reset depth", post.depth.width, post.depth.height),
        (
            "static weights",
            static_weights.width,
            static_weights.height,
        ),
    ] {
        if w != intr.width || h != intr.height {
            return Err(Error::dims(
                format!("{}x{} {what}", intr.width, intr.height),
                format!("{w}x{h}"),
            ));
        }
    }
    let (Some(pre_pose), Some(post_pose)) = (pre.pose, post.pose) else {
        return Ok(SegmentCorrection::degenerate(reset_frame, 0));
    };

    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut weights = Vec::new();
    for y in 0..intr.height {
        for x in 0..intr.width {
            let w = *static_weights.get(x, y);
            if !(w >= WEIGHT_FLOOR && w.is_finite()) {
                continue;
            }
            let (Some(zp), Some(zq)) = (pre.depth.get(x, y), post.depth.get(x, y)) else {
                continue;
            };
            let ray = intr.backproject(x as f64, y as f64);
            target.push(pre_pose.to_world(&(zp * ray)));
            source.push(post_pose.to_world(&(zq * ray)));
            weights.push(w);
        }
    }
    let n = source.len();
    if n < MIN_CORRESPONDENCES {
        log::warn!("reset at frame {reset_frame}: {n} correspondences, keeping identity");
        return Ok(SegmentCorrection::degenerate(reset_frame, n));
    }
    match weighted_umeyama(&source, &target, &weights) {
        Ok(transform) => Ok(SegmentCorrection {
            transform,
            reset_frame,
            residual: weighted_rms(&transform, &source, &target, &weights),
            degenerate: false,
            correspondences: n,
        }),
        Err(e) => {
            log::warn!("reset at frame {reset_frame}: {e}, keeping identity");
            Ok(SegmentCorrection::degenerate(reset_frame, n))
        }
    }
}

/// Moves one prediction by a similarity: camera-frame depths scale by `s`
/// and the pose follows, so the unprojected cloud moves by `transform`.
pub fn transform_prediction(pred: &FramePrediction, transform: &SimTransform) -> FramePrediction {
    if transform.is_identity() {
        return pred.clone();
    }
    FramePrediction {
        depth: pred.depth.scaled(transform.scale),
        pose: pred.pose.map(|p| transform.transform_pose(&p)),
        ..pred.clone()
    }
}

pub fn correct_prediction(
    correction: &SegmentCorrection,
    pred: &FramePrediction,
) -> FramePrediction {
    transform_prediction(pred, &correction.transform)
}

pub fn correct_pose(correction: &SegmentCorrection, pose: &RigidPose) -> RigidPose {
    correction.transform.transform_pose(pose)
}

pub fn correct_cloud(correction: &SegmentCorrection, cloud: &PointCloud) -> PointCloud {
    cloud.transformed(&correction.transform)
}

/// Corrects every prediction of a segment tail.
pub fn apply_correction<'a, I>(
    correction: &'a SegmentCorrection,
    tail: I,
) -> impl Iterator<Item = FramePrediction> + 'a
where
    I: IntoIterator<Item = &'a FramePrediction>,
    I::IntoIter: 'a,
{
    tail.into_iter()
        .map(move |p| correct_prediction(correction, p))
}

/// Cumulative correction across resets. Each new local correction maps the
/// fresh segment's raw frame onto the previous segment's raw frame, so the
/// global map is `C_g = C_{g−1} ∘ L_g`. Only the running product is kept.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrectionChain {
    cumulative: SimTransform,
    segments: usize,
}

impl CorrectionChain {
    /// Folds in a local correction and returns the cumulative one.
    pub fn push(&mut self, local: SegmentCorrection) -> SegmentCorrection {
        self.cumulative = self.cumulative.compose(&local.transform);
        self.segments += 1;
        SegmentCorrection {
            transform: self.cumulative,
            ..local
        }
    }

    pub fn current(&self) -> SegmentCorrection {
        SegmentCorrection {
            transform: self.cumulative,
            ..SegmentCorrection::identity(0)
        }
    }

    pub fn cumulative(&self) -> &SimTransform {
        &self.cumulative
    }

    pub fn cumulative_scale(&self) -> f64 {
        self.cumulative.scale
    }

    pub fn resets(&self) -> usize {
        self.segments
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{Backbone, FrameHandle};
    use crate::geom::{rot_x, rot_z, unproject, DepthMap, Vec3};
    use crate::raymap::build_raymap;
    use crate::sim::{inject_reset_perturbation, SceneSpec, SimulatedBackbone, StreamItem};

    fn sim_predictions(frames: usize) -> (SimulatedBackbone, Vec<StreamItem>) {
        let spec = SceneSpec::default().noiseless();
        let bb = SimulatedBackbone::new(spec).unwrap();
        let state = bb.initial_state();
        let items = (0..frames)
            .map(|f| {
                let pose = bb.spec().gt_pose(f);
                let rm = build_raymap(bb.intrinsics(), &pose).unwrap();
                StreamItem {
                    frame_index: f,
                    prediction: bb.decode_main(FrameHandle(f), &rm, &state, None).unwrap(),
                }
            })
            .collect();
        (bb, items)
    }

    fn p_known() -> SimTransform {
        SimTransform::new(1.3, rot_z(0.2) * rot_x(-0.1), Vec3::new(0.4, -0.2, 0.7)).unwrap()
    }

    fn uniform(intr: &Intrinsics) -> Grid<f64> {
        Grid::filled(intr.width, intr.height, 1.0)
    }

    fn close(a: &SimTransform, b: &SimTransform, tol: f64) -> bool {
        (a.scale - b.scale).abs() < tol
            && (a.rotation - b.rotation).abs().max() < tol
            && (a.translation - b.translation).norm() < tol
    }

    #[test]
    fn identical_predictions_give_identity() {
        let (bb, items) = sim_predictions(1);
        let p = &items[0].prediction;
        let c =
            estimate_reset_correction(p, p, &uniform(bb.intrinsics()), bb.intrinsics(), 0).unwrap();
        assert!(!c.degenerate);
        assert!(close(&c.transform, &SimTransform::identity(), 1e-9));
        assert!(c.residual < 1e-9);
    }

    #[test]
    fn recovers_inverse_of_injected_perturbation() {
        let (bb, items) = sim_predictions(6);
        let p = p_known();
        let stream = inject_reset_perturbation(&items, 3, &p).unwrap();
        let (pre, post) = (&stream[3].prediction, &stream[4].prediction);
        let c = estimate_reset_correction(pre, post, &uniform(bb.intrinsics()), bb.intrinsics(), 3)
            .unwrap();
        assert!(close(&c.transform, &p.inverse(), 1e-6), "{:?}", c.transform);
        assert!(c.residual < 1e-9);
    }

    #[test]
    fn weighted_outliers_are_ignored() {
        let (bb, items) = sim_predictions(4);
        let intr = *bb.intrinsics();
        let p = p_known();
        let stream = inject_reset_perturbation(&items, 2, &p).unwrap();
        let pre = stream[2].prediction.clone();
        let mut post = stream[3].prediction.clone();
        let mut weights = uniform(&intr);
        // every fourth pixel becomes a wild outlier with near-zero weight
        for i in (0..intr.pixel_count()).step_by(4) {
            post.depth.values[i] = 0.5 + (i % 17) as f64;
            post.depth.valid[i] = true;
            weights.data[i] = 1e-4;
        }
        let c = estimate_reset_correction(&pre, &post, &weights, &intr, 2).unwrap();
        assert!(close(&c.transform, &p.inverse(), 1e-5));
    }

    #[test]
    fn too_few_correspondences_is_degenerate() {
        let (bb, items) = sim_predictions(1);
        let intr = *bb.intrinsics();
        let p = &items[0].prediction;
        let mut w = Grid::filled(intr.width, intr.height, 0.0);
        for i in 0..MIN_CORRESPONDENCES - 1 {
            w.data[i] = 1.0;
        }
        let c = estimate_reset_correction(p, p, &w, &intr, 50).unwrap();
        assert!(c.degenerate && c.transform.is_identity());
        assert_eq!(c.correspondences, MIN_CORRESPONDENCES - 1);

        let mut empty = p.clone();
        empty.depth = DepthMap::invalid(intr.width, intr.height);
        let c = estimate_reset_correction(p, &empty, &uniform(&intr), &intr, 50).unwrap();
        assert!(c.degenerate && c.transform.is_identity());

        let mut poseless = p.clone();
        poseless.pose = None;
        assert!(
            estimate_reset_correction(p, &poseless, &uniform(&intr), &intr, 50)
                .unwrap()
                .degenerate
        );
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (bb, items) = sim_predictions(1);
        let p = &items[0].prediction;
        let w = Grid::filled(3, 3, 1.0);
        assert!(estimate_reset_correction(p, p, &w, bb.intrinsics(), 0).is_err());
    }

    #[test]
    fn correction_is_consistent_with_unprojection() {
        let (bb, items) = sim_predictions(3);
        let intr = bb.intrinsics();
        let c = SegmentCorrection {
            transform: p_known(),
            ..SegmentCorrection::identity(0)
        };
        for it in &items {
            let orig = unproject(&it.prediction.depth, intr, &it.prediction.pose.unwrap()).unwrap();
            let fixed = correct_prediction(&c, &it.prediction);
            let moved = unproject(&fixed.depth, intr, &fixed.pose.unwrap()).unwrap();
            let expected = correct_cloud(&c, &orig);
            for (a, b) in moved.points.iter().zip(&expected.points) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_and_pure_scale() {
        let (_, items) = sim_predictions(3);
        let preds: Vec<_> = items.iter().map(|i| i.prediction.clone()).collect();
        let id = SegmentCorrection::identity(0);
        assert!(apply_correction(&id, &preds).eq(preds.iter().cloned()));

        let two = SegmentCorrection {
            transform: SimTransform::from_scale(2.0),
            ..id
        };
        let out: Vec<_> = apply_correction(&two, &preds).collect();
        for (a, b) in out.iter().zip(&preds) {
            let (ca, cb) = (
                a.pose.unwrap().camera_center(),
                b.pose.unwrap().camera_center(),
            );
            assert!((ca - 2.0 * cb).norm() < 1e-12);
            for (za, zb) in a.depth.values.iter().zip(&b.depth.values) {
                assert_eq!(*za, 2.0 * zb);
            }
        }
        let d_out = out[2].pose.unwrap().camera_center() - out[1].pose.unwrap().camera_center();
        let d_in = preds[2].pose.unwrap().camera_center() - preds[1].pose.unwrap().camera_center();
        assert!((d_out - 2.0 * d_in).norm() < 1e-12);
    }

    #[test]
    fn re_estimation_after_correction_is_near_identity() {
        let (bb, items) = sim_predictions(3);
        let intr = *bb.intrinsics();
        let stream = inject_reset_perturbation(&items, 1, &p_known()).unwrap();
        let (pre, post) = (&stream[1].prediction, &stream[2].prediction);
        let c = estimate_reset_correction(pre, post, &uniform(&intr), &intr, 1).unwrap();
        let fixed = correct_prediction(&c, post);
        let again = estimate_reset_correction(pre, &fixed, &uniform(&intr), &intr, 1).unwrap();
        assert!((again.transform.scale - 1.0).abs() < 1e-6);
    }

    #[test]
    fn chain_composes_multiplicatively() {
        let a = SimTransform::new(2.0, rot_z(0.3), Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let b = SimTransform::new(0.5, rot_x(0.1), Vec3::new(0.0, 2.0, 0.0)).unwrap();
        let mut chain = CorrectionChain::default();
        let mk = |t| SegmentCorrection {
            transform: t,
            ..SegmentCorrection::identity(0)
        };
        chain.push(mk(a));
        let g = chain.push(mk(b));
        let p = Vec3::new(0.3, -1.0, 2.0);
        assert!((g.transform.apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-12);
        assert_eq!(chain.resets(), 2);
        assert!((chain.cumulative_scale() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reset_schedule() {
        let p = ResetPolicy::default();
        assert!(!p.is_reset_frame(0));
        assert!(p.is_reset_frame(50) && p.is_reset_frame(100) && !p.is_reset_frame(51));
        assert!(!ResetPolicy {
            enabled: false,
            ..p
        }
        .is_reset_frame(50));
        assert!(ResetPolicy {
            period: 1,
            enabled: true
        }
        .validate()
        .is_err());
    }
}
