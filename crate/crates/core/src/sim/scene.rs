use std::f64::consts::TAU;

use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{DepthMap, Grid, Intrinsics, Mat3, RigidPose, Vec3};
use crate::raymap::build_raymap;

/// Minimum ray parameter accepted as a hit.
const T_MIN: f64 = 1e-6;

/// Analytic primitive in world coordinates (meters).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Points `p` with `normal·p = offset`.
    Plane {
        normal: [f64; 3],
        offset: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box.
    Cuboid {
        min: [f64; 3],
        max: [f64; 3],
    },
}

impl Shape {
    /// Nearest ray parameter `t > 0` along a unit direction.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3, offset: &Vec3) -> Option<f64> {
        match self {
            Shape::Plane { normal, offset: d } => {
                let n = Vec3::from(*normal);
                let denom = n.dot(dir);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (d + n.dot(offset) - n.dot(origin)) / denom;
                (t > T_MIN).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - (Vec3::from(*center) + offset);
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t0 = -b - sq;
                let t1 = -b + sq;
                if t0 > T_MIN {
                    Some(t0)
                } else if t1 > T_MIN {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Cuboid { min, max } => {
                let lo = Vec3::from(*min) + offset;
                let hi = Vec3::from(*max) + offset;
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if origin[a] < lo[a] || origin[a] > hi[a] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / dir[a];
                    let (mut t0, mut t1) = ((lo[a] - origin[a]) * inv, (hi[a] - origin[a]) * inv);
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    t_near = t_near.max(t0);
                    t_far = t_far.min(t1);
                    if t_near > t_far {
                        return None;
                    }
                }
                if t_near > T_MIN {
                    Some(t_near)
                } else if t_far > T_MIN {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Shape::Plane { normal, .. } => {
                let n = Vec3::from(*normal).norm();
                if (n - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(
                        "plane normal must be unit length".into(),
                    ));
                }
            }
            Shape::Sphere { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidParameter("sphere radius must be > 0".into()));
                }
            }
            Shape::Cuboid { min, max } => {
                if (0..3).any(|a| !(max[a] > min[a])) {
                    return Err(Error::InvalidParameter("cuboid max must exceed min".into()));
                }
            }
        }
        Ok(())
    }
}

/// Displacement of a dynamic primitive as a function of frame index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    /// Constant velocity in meters per frame.
    Linear { velocity: [f64; 3] },
    /// Circle in the horizontal (x, z) plane starting at phase `phase`.
    Circular {
        radius: f64,
        period_frames: f64,
        phase: f64,
    },
    /// Sinusoid along `axis` with peak displacement `amplitude`.
    Oscillate {
        axis: [f64; 3],
        amplitude: f64,
        period_frames: f64,
    },
}

impl Motion {
    pub fn offset(&self, frame: usize) -> Vec3 {
        let f = frame as f64;
        match self {
            Motion::Linear { velocity } => Vec3::from(*velocity) * f,
            Motion::Circular {
                radius,
                period_frames,
                phase,
            } => {
                let a = TAU * f / period_frames + phase;
                *radius * Vec3::new(a.cos() - phase.cos(), 0.0, a.sin() - phase.sin())
            }
            Motion::Oscillate {
                axis,
                amplitude,
                period_frames,
            } => Vec3::from(*axis).normalize() * *amplitude * (TAU * f / period_frames).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicPrimitive {
    pub shape: Shape,
    pub motion: Motion,
}

/// Camera trajectory, either procedural or an explicit pose list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CameraPath {
    /// Camera center `start + velocity·f + sway(f)` looking at
    /// `target + target_velocity·f`, world `−y` up.
    LookAt {
        start: [f64; 3],
        velocity: [f64; 3],
        sway_amplitude: [f64; 3],
        sway_period: f64,
        target: [f64; 3],
        target_velocity: [f64; 3],
    },
    /// Per-frame `[tx, ty, tz, qx, qy, qz, qw]`, camera-to-world.
    Explicit { poses: Vec<[f64; 7]> },
}

impl CameraPath {
    pub fn pose(&self, frame: usize) -> RigidPose {
        match self {
            CameraPath::LookAt {
                start,
                velocity,
                sway_amplitude,
                sway_period,
                target,
                target_velocity,
            } => {
                let f = frame as f64;
                let w = TAU * f / sway_period;
                let sway = Vec3::new(w.sin(), (1.7 * w).sin(), (0.9 * w).cos() - 1.0)
                    .component_mul(&Vec3::from(*sway_amplitude));
                let center = Vec3::from(*start) + Vec3::from(*velocity) * f + sway;
                let look = Vec3::from(*target) + Vec3::from(*target_velocity) * f;
                look_at(center, look)
            }
            CameraPath::Explicit { poses } => {
                let p = poses[frame.min(poses.len() - 1)];
                let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                    p[6], p[3], p[4], p[5],
                ));
                RigidPose::from_quaternion_center(&q, Vec3::new(p[0], p[1], p[2]))
            }
        }
    }
}

/// World-to-camera pose at `center` looking toward `target` with world
/// `−y` as up (camera `y` points down).
pub fn look_at(center: Vec3, target: Vec3) -> RigidPose {
    let z = (target - center).normalize();
    let down = Vec3::y();
    let x = down.cross(&z).normalize();
    let y = z.cross(&x);
    RigidPose::from_camera_to_world(Mat3::from_columns(&[x, y, z]), center)
}

/// Relative multiplicative depth noise, pose jitter and their bursts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub sigma_main: f64,
    pub sigma_ray: f64,
    /// Per-axis camera-center jitter in meters.
    pub pose_translation: f64,
    pub pose_rotation_deg: f64,
    /// Probability that a frame is an uncertainty burst.
    pub burst_probability: f64,
    /// Pose jitter multiplier on burst frames.
    pub burst_pose_gain: f64,
    /// Std-dev of extra state-delta energy on burst frames.
    pub burst_state_gain: f64,
    /// Radius in pixels of the binomial blur both branches apply to depth,
    /// mimicking patch-resolution decoding across depth edges.
    pub blur_radius: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_main: 0.005,
            sigma_ray: 0.005,
            pose_translation: 0.002,
            pose_rotation_deg: 0.05,
            burst_probability: 0.06,
            burst_pose_gain: 20.0,
            burst_state_gain: 3.0,
            blur_radius: 8,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec {
            sigma_main: 0.0,
            sigma_ray: 0.0,
            pose_translation: 0.0,
            pose_rotation_deg: 0.0,
            burst_probability: 0.0,
            burst_pose_gain: 1.0,
            burst_state_gain: 0.0,
            blur_radius: 0,
        }
    }
}

/// How dynamic content written into memory degrades main-branch output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContaminationSpec {
    /// Camera-center bias per unit contamination, along the mean
    /// displacement of the dynamic objects.
    pub pose_gain: f64,
    /// Relative depth-scale error per unit contamination.
    pub depth_gain: f64,
    /// Fraction of the pooled dynamic content written per frame.
    pub write_rate: f64,
    /// Per-frame relative decay of the memory's dynamic channel.
    pub decay: f64,
}

impl Default for ContaminationSpec {
    fn default() -> Self {
        ContaminationSpec {
            pose_gain: 0.1,
            depth_gain: 0.02,
            write_rate: 0.15,
            decay: 0.02,
        }
    }
}

/// Random Sim(3) offset of each post-reset segment's output frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResetDriftSpec {
    /// Log-scale drawn uniformly from `[−spread, spread]`.
    pub scale_spread: f64,
    pub rotation_deg: f64,
    pub translation: f64,
}

impl Default for ResetDriftSpec {
    fn default() -> Self {
        ResetDriftSpec {
            scale_spread: 0.15,
            rotation_deg: 3.0,
            translation: 0.2,
        }
    }
}

impl ResetDriftSpec {
    pub fn none() -> Self {
        ResetDriftSpec {
            scale_spread: 0.0,
            rotation_deg: 0.0,
            translation: 0.0,
        }
    }
}

/// Latent-state geometry of the simulated backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateSpec {
    /// Number of state tokens; must be a perfect square (anchor grid).
    pub tokens: usize,
    pub dim: usize,
    pub patch_size: usize,
    /// Attention kernel width in patch widths.
    pub attention_sigma_patches: f64,
}

impl Default for StateSpec {
    fn default() -> Self {
        StateSpec {
            tokens: 16,
            dim: 8,
            patch_size: 8,
            attention_sigma_patches: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub name: String,
    pub intrinsics: Intrinsics,
    pub frame_count: usize,
    #[serde(default)]
    pub static_primitives: Vec<Shape>,
    #[serde(default)]
    pub dynamic_primitives: Vec<DynamicPrimitive>,
    pub camera: CameraPath,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub contamination: ContaminationSpec,
    #[serde(default)]
    pub reset_drift: ResetDriftSpec,
    #[serde(default)]
    pub state: StateSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthFrame {
    pub depth: DepthMap,
    pub dynamic_mask: Grid<bool>,
    pub pose: RigidPose,
    pub frame_index: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        if self.frame_count < 1 {
            return Err(Error::InvalidParameter("frame_count must be >= 1".into()));
        }
        let n = &self.noise;
        for (name, v) in [
            ("sigma_main", n.sigma_main),
            ("sigma_ray", n.sigma_ray),
            ("pose_translation", n.pose_translation),
            ("pose_rotation_deg", n.pose_rotation_deg),
            ("burst_state_gain", n.burst_state_gain),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        let c = &self.contamination;
        for (name, v) in [
            ("contamination.pose_gain", c.pose_gain),
            ("contamination.depth_gain", c.depth_gain),
            ("contamination.write_rate", c.write_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&c.decay) {
            return Err(Error::InvalidParameter(
                "contamination.decay must be in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&n.burst_probability) {
            return Err(Error::InvalidParameter(
                "burst_probability must be in [0, 1]".into(),
            ));
        }
        if let CameraPath::Explicit { poses } = &self.camera {
            if poses.len() != self.frame_count {
                return Err(Error::InvalidParameter(format!(
                    "camera trajectory has {} poses for {} frames",
                    poses.len(),
                    self.frame_count
                )));
            }
        }
        let side = (self.state.tokens as f64).sqrt().round() as usize;
        if side * side != self.state.tokens || self.state.tokens == 0 {
            return Err(Error::InvalidParameter(
                "state tokens must be a nonzero perfect square".into(),
            ));
        }
        if self.state.dim < 2 || self.state.patch_size == 0 {
            return Err(Error::InvalidParameter(
                "state dim must be >= 2 and patch_size >= 1".into(),
            ));
        }
        for s in self
            .static_primitives
            .iter()
            .chain(self.dynamic_primitives.iter().map(|d| &d.shape))
        {
            s.validate()?;
        }
        Ok(())
    }

    pub fn gt_pose(&self, frame: usize) -> RigidPose {
        self.camera.pose(frame)
    }

    /// Mean displacement of the dynamic primitives at `frame`.
    pub fn mean_dynamic_offset(&self, frame: usize) -> Vec3 {
        if self.dynamic_primitives.is_empty() {
            return Vec3::zeros();
        }
        let sum: Vec3 = self
            .dynamic_primitives
            .iter()
            .map(|d| d.motion.offset(frame))
            .sum();
        sum / self.dynamic_primitives.len() as f64
    }

    /// Casts rays (world-frame origin, unit directions) and returns ray
    /// distances plus dynamic-hit flags; `None` where nothing is hit.
    pub(crate) fn cast(
        &self,
        origin: &Vec3,
        directions: &[Vec3],
        frame: usize,
        include_dynamic: bool,
    ) -> (Vec<Option<f64>>, Vec<bool>) {
        let offsets: Vec<Vec3> = if include_dynamic {
            self.dynamic_primitives
                .iter()
                .map(|d| d.motion.offset(frame))
                .collect()
        } else {
            Vec::new()
        };
        let zero = Vec3::zeros();
        let mut hits = Vec::with_capacity(directions.len());
        let mut dynamic = Vec::with_capacity(directions.len());
        for d in directions {
            let mut best: Option<f64> = None;
            for s in &self.static_primitives {
                if let Some(t) = s.intersect(origin, d, &zero) {
                    if best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                }
            }
            let mut is_dyn = false;
            for (prim, off) in self.dynamic_primitives.iter().zip(&offsets) {
                if let Some(t) = prim.shape.intersect(origin, d, off) {
                    if best.is_none_or(|b| t < b) {
                        best = Some(t);
                        is_dyn = true;
                    }
                }
            }
            hits.push(best);
            dynamic.push(is_dyn);
        }
        (hits, dynamic)
    }

    /// `‖K⁻¹(x, y, 1)ᵀ‖` per pixel: converts ray distance to camera depth.
    pub(crate) fn ray_norms(&self) -> Vec<f64> {
        let k = &self.intrinsics;
        let mut out = Vec::with_capacity(k.pixel_count());
        for y in 0..k.height {
            for x in 0..k.width {
                out.push(k.backproject(x as f64, y as f64).norm());
            }
        }
        out
    }
}

/// Nearest-hit camera depth along the ground-truth rays of `frame`, plus the
/// mask of pixels whose nearest hit is dynamic (empty when dynamic primitives
/// are excluded).
pub fn raycast(
    spec: &SceneSpec,
    frame: usize,
    include_dynamic: bool,
) -> Result<(DepthMap, Grid<bool>)> {
    if frame >= spec.frame_count {
        return Err(Error::OutOfRange {
            index: frame,
            len: spec.frame_count,
        });
    }
    let k = &spec.intrinsics;
    let rays = build_raymap(k, &spec.gt_pose(frame))?;
    let (hits, dynamic) = spec.cast(&rays.origin, &rays.directions, frame, include_dynamic);
    let norms = spec.ray_norms();
    let values = hits
        .iter()
        .zip(&norms)
        .map(|(h, rho)| h.map_or(0.0, |t| t / rho))
        .collect();
    let depth = DepthMap::from_values(k.width, k.height, values)?;
    Ok((depth, Grid::from_vec(k.width, k.height, dynamic)?))
}

pub fn ground_truth(spec: &SceneSpec, frame: usize) -> Result<GroundTruthFrame> {
    let (depth, dynamic_mask) = raycast(spec, frame, true)?;
    Ok(GroundTruthFrame {
        depth,
        dynamic_mask,
        pose: spec.gt_pose(frame),
        frame_index: frame,
    })
}

/// Mean fraction of dynamic pixels over the sequence.
pub fn dynamic_ratio(spec: &SceneSpec) -> Result<f64> {
    let mut total = 0.0;
    for f in 0..spec.frame_count {
        let (_, mask) = raycast(spec, f, true)?;
        total += mask.data.iter().filter(|m| **m).count() as f64 / mask.len() as f64;
    }
    Ok(total / spec.frame_count as f64)
}
