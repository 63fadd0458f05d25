//! Core geometric types: camera intrinsics, rigid and similarity transforms,
//! depth maps, point clouds, and the kernels that operate on them.

mod kdtree;
mod normals;
pub(crate) mod umeyama;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use kdtree::KdTree;
pub use normals::estimate_normals;
pub use umeyama::{weighted_rigid, weighted_umeyama};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance for orthonormality and unit-norm checks on construction.
pub const ORTHO_TOL: f64 = 1e-9;

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fx.is_finite() && self.fy > 0.0 && self.fy.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidParameter("image size must be nonzero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidParameter(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidParameter(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `K⁻¹ (x, y, 1)ᵀ` for integer pixel coordinates.
    #[inline]
    pub fn backproject(&self, x: f64, y: f64) -> Vec3 {
        Vec3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point to pixel coordinates.
    #[inline]
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }
}

/// Checks `RᵀR = I` and `det R = +1` within [`ORTHO_TOL`].
pub fn is_rotation(r: &Mat3) -> bool {
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    err <= ORTHO_TOL && (r.determinant() - 1.0).abs() <= ORTHO_TOL
}

pub fn rot_x(angle: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vec3::x_axis(), angle).into_inner()
}

pub fn rot_y(angle: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vec3::y_axis(), angle).into_inner()
}

pub fn rot_z(angle: f64) -> Mat3 {
    Rotation3::from_axis_angle(&Vec3::z_axis(), angle).into_inner()
}

/// Rotation angle of `r` in radians, in `[0, π]`.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near 0; use the skew part there.
    let skew = Vec3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let s = 0.5 * skew.norm();
    s.atan2(c)
}

/// World-to-camera rigid transform: `x_cam = R·x_world + τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        RigidPose {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !is_rotation(&rotation) {
            return Err(Error::InvalidParameter(
                "rotation is not orthonormal with det +1".into(),
            ));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("translation not finite".into()));
        }
        Ok(RigidPose {
            rotation,
            translation,
        })
    }

    /// Builds the world-to-camera pose from a camera-to-world orientation and
    /// the camera center in world coordinates.
    pub fn from_camera_to_world(orientation: Mat3, center: Vec3) -> Self {
        let rotation = orientation.transpose();
        RigidPose {
            rotation,
            translation: -(rotation * center),
        }
    }

    /// Camera center `c = −Rᵀτ`.
    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Camera-to-world orientation `Rᵀ`.
    pub fn orientation(&self) -> Mat3 {
        self.rotation.transpose()
    }

    pub fn to_camera(&self, world: &Vec3) -> Vec3 {
        self.rotation * world + self.translation
    }

    pub fn to_world(&self, cam: &Vec3) -> Vec3 {
        self.rotation.transpose() * (cam - self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidPose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `(self ∘ other)(p) = self(other(p))`.
    pub fn compose(&self, other: &RigidPose) -> Self {
        RigidPose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Camera-to-world orientation as a unit quaternion (TUM convention).
    pub fn orientation_quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.orientation()))
    }

    pub fn from_quaternion_center(q: &UnitQuaternion<f64>, center: Vec3) -> Self {
        Self::from_camera_to_world(q.to_rotation_matrix().into_inner(), center)
    }
}

/// Similarity transform acting on points as `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for SimTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimTransform {
    pub fn identity() -> Self {
        SimTransform {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(scale: f64, rotation: Mat3, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "scale must be > 0, got {scale}"
            )));
        }
        if !is_rotation(&rotation) {
            return Err(Error::InvalidParameter(
                "rotation is not orthonormal with det +1".into(),
            ));
        }
        Ok(SimTransform {
            scale,
            rotation,
            translation,
        })
    }

    pub fn from_scale(scale: f64) -> Self {
        SimTransform {
            scale,
            ..Self::identity()
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// `(self ∘ other)(p) = self(other(p))`.
    pub fn compose(&self, other: &SimTransform) -> Self {
        SimTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        SimTransform {
            scale: inv_s,
            rotation: rt,
            translation: -(inv_s * (rt * self.translation)),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.rotation == Mat3::identity() && self.translation == Vec3::zeros()
    }

    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Maps a world-to-camera pose so that unprojecting camera-frame points
    /// scaled by `s` through the new pose lands on the transformed world
    /// points: center `c ↦ s·R·c + t`, orientation `R_cam ↦ R_cam·Rᵀ`.
    pub fn transform_pose(&self, pose: &RigidPose) -> RigidPose {
        if self.is_identity() {
            return *pose;
        }
        let center = self.apply(&pose.camera_center());
        let rotation = pose.rotation * self.rotation.transpose();
        RigidPose {
            rotation,
            translation: -(rotation * center),
        }
    }
}

/// Dense row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Grid {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(
                format!("{} cells", width * height),
                format!("{} cells", data.len()),
            ));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape<U>(&self, other: &Grid<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel depth in meters with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    /// Every finite positive value is valid; anything else becomes an
    /// invalid pixel with stored depth 0.
    pub fn from_values(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dims(width * height, values.len()));
        }
        let valid: Vec<bool> = values.iter().map(|v| v.is_finite() && *v > 0.0).collect();
        for (v, ok) in values.iter_mut().zip(&valid) {
            if !ok {
                *v = 0.0;
            }
        }
        Ok(DepthMap {
            width,
            height,
            values,
            valid,
        })
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then_some(self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn scaled(&self, factor: f64) -> DepthMap {
        let mut out = self.clone();
        for (v, ok) in out.values.iter_mut().zip(&out.valid) {
            if *ok {
                *v *= factor;
            }
        }
        out
    }

    pub fn matches(&self, intr: &Intrinsics) -> bool {
        self.width == intr.width && self.height == intr.height
    }
}

/// 3D points with optional per-point weights and unit normals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub weights: Option<Vec<f64>>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        PointCloud {
            points,
            weights: None,
            normals: None,
        }
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.points.len() {
            return Err(Error::dims(self.points.len(), weights.len()));
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidParameter(format!(
                "weight {w} outside [0, 1]"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn with_normals(mut self, normals: Vec<Vec3>) -> Result<Self> {
        if normals.len() != self.points.len() {
            return Err(Error::dims(self.points.len(), normals.len()));
        }
        if normals.iter().any(|n| (n.norm() - 1.0).abs() > ORTHO_TOL) {
            return Err(Error::InvalidParameter(
                "normals must be unit length".into(),
            ));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn transformed(&self, t: &SimTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
            weights: self.weights.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|ns| ns.iter().map(|n| t.rotation * n).collect()),
        }
    }
}

/// Back-projects every valid pixel into world coordinates:
/// `x_world = Rᵀ(z·K⁻¹·(x, y, 1)ᵀ − τ)`, in row-major pixel order.
pub fn unproject(depth: &DepthMap, intr: &Intrinsics, pose: &RigidPose) -> Result<PointCloud> {
    if !depth.matches(intr) {
        return Err(Error::dims(
            format!("{}x{}", intr.width, intr.height),
            format!("{}x{}", depth.width, depth.height),
        ));
    }
    let mut points = Vec::with_capacity(depth.valid_count());
    for y in 0..depth.height {
        for x in 0..depth.width {
            if let Some(z) = depth.get(x, y) {
                let cam = z * intr.backproject(x as f64, y as f64);
                points.push(pose.to_world(&cam));
            }
        }
    }
    Ok(PointCloud::new(points))
}
