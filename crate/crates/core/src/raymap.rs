//! Per-pixel camera ray fields and their patch tokenization.

use crate::error::{Error, Result};
use crate::geom::{Intrinsics, RigidPose, Vec3};

/// Default patch side in pixels.
pub const DEFAULT_PATCH_SIZE: usize = 16;

/// Ray origin (the camera center, shared by every pixel) and per-pixel unit
/// ray directions in world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMapTensor {
    pub origin: Vec3,
    pub directions: Vec<Vec3>,
    pub width: usize,
    pub height: usize,
}

impl RayMapTensor {
    #[inline]
    pub fn direction(&self, x: usize, y: usize) -> &Vec3 {
        &self.directions[y * self.width + x]
    }

    /// Expands to the dense `H×W×6` layout, row-major, channels
    /// `[cx, cy, cz, dx, dy, dz]` per pixel.
    pub fn to_channels(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.directions.len() * 6);
        for d in &self.directions {
            out.extend(self.origin.iter().map(|v| *v as f32));
            out.extend(d.iter().map(|v| *v as f32));
        }
        out
    }
}

/// `c = −Rᵀτ` and `d̂(x, y) = normalize(Rᵀ·K⁻¹·(x, y, 1)ᵀ)`.
pub fn build_raymap(intr: &Intrinsics, pose: &RigidPose) -> Result<RayMapTensor> {
    if !(intr.fx != 0.0 && intr.fy != 0.0 && intr.fx.is_finite() && intr.fy.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "singular intrinsics (fx={}, fy={})",
            intr.fx, intr.fy
        )));
    }
    let rt = pose.rotation.transpose();
    let mut directions = Vec::with_capacity(intr.pixel_count());
    for y in 0..intr.height {
        for x in 0..intr.width {
            let d = rt * intr.backproject(x as f64, y as f64);
            directions.push(d / d.norm());
        }
    }
    Ok(RayMapTensor {
        origin: pose.camera_center(),
        directions,
        width: intr.width,
        height: intr.height,
    })
}

/// The RayMap-branch input: rays from the main branch's predicted pose
/// rather than any ground truth.
pub fn raymap_from_predicted_pose(
    pred_pose: &RigidPose,
    intr: &Intrinsics,
) -> Result<RayMapTensor> {
    build_raymap(intr, pred_pose)
}

/// Row-major token layout over an image; boundary patches are clipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.y0..self.y1).flat_map(move |y| (self.x0..self.x1).map(move |x| (x, y)))
    }
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch_size: usize) -> Self {
        let patch_size = patch_size.max(1);
        PatchGrid {
            patch_size,
            rows: height.div_ceil(patch_size),
            cols: width.div_ceil(patch_size),
            width,
            height,
        }
    }

    pub fn token_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rect(&self, token: usize) -> PixelRect {
        let (r, c) = (token / self.cols, token % self.cols);
        let x0 = c * self.patch_size;
        let y0 = r * self.patch_size;
        PixelRect {
            x0,
            y0,
            x1: (x0 + self.patch_size).min(self.width),
            y1: (y0 + self.patch_size).min(self.height),
        }
    }

    #[inline]
    pub fn token_of(&self, x: usize, y: usize) -> usize {
        (y / self.patch_size) * self.cols + x / self.patch_size
    }

    /// Center of the (clipped) patch in continuous pixel coordinates.
    pub fn center(&self, token: usize) -> (f64, f64) {
        let r = self.rect(token);
        ((r.x0 + r.x1) as f64 * 0.5, (r.y0 + r.y1) as f64 * 0.5)
    }
}

/// Splits the ray field into `patch_size`-square tokens.
pub fn tokenize(tensor: &RayMapTensor, patch_size: usize) -> PatchGrid {
    PatchGrid::new(tensor.width, tensor.height, patch_size)
}
