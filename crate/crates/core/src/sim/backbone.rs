use nalgebra::{DMatrix, Rotation3, Unit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::scene::SceneSpec;
use crate::backbone::{
    AttentionMap, Backbone, FrameHandle, FramePrediction, StateDelta, StateVector,
};
use crate::error::{Error, Result};
use crate::geom::{DepthMap, Grid, Intrinsics, RigidPose, SimTransform, Vec3};
use crate::raymap::{build_raymap, PatchGrid, RayMapTensor};

const TAG_MAIN: u64 = 0x6d61_696e;
const TAG_RAY: u64 = 0x7261_796d;
const TAG_BURST: u64 = 0x6275_7273;
const TAG_DRIFT: u64 = 0x6472_6966;
const TAG_CODE: u64 = 0x636f_6465;

/// SplitMix64 finalizer, used to derive independent per-purpose seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn seed_of(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed, |acc, p| mix(acc ^ mix(*p)))
}

fn rng_for(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed_of(parts))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Binomial blur of camera depths over hit pixels; misses stay misses.
/// Separable, so each pass mixes `radius` pixels to either side.
fn soften(depth: Vec<Option<f64>>, width: usize, height: usize, radius: usize) -> Vec<Option<f64>> {
    if radius == 0 {
        return depth;
    }
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| (0..i).fold(1.0, |c, j| c * (2 * radius - j) as f64 / (j + 1) as f64))
        .collect();
    let pass = |src: &[Option<f64>], horizontal: bool| -> Vec<Option<f64>> {
        let mut out = src.to_vec();
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                if src[i].is_none() {
                    continue;
                }
                let (mut acc, mut wsum) = (0.0, 0.0);
                for (k, w) in kernel.iter().enumerate() {
                    let o = k as isize - radius as isize;
                    let (xx, yy) = if horizontal {
                        (x as isize + o, y as isize)
                    } else {
                        (x as isize, y as isize + o)
                    };
                    if xx < 0 || yy < 0 || xx >= width as isize || yy >= height as isize {
                        continue;
                    }
                    if let Some(v) = src[yy as usize * width + xx as usize] {
                        acc += w * v;
                        wsum += w;
                    }
                }
                out[i] = Some(acc / wsum);
            }
        }
        out
    };
    let h = pass(&depth, true);
    pass(&h, false)
}

/// Deterministic mock of a dual-branch backbone over an analytic scene.
///
/// The main branch sees the full scene; the RayMap branch renders only
/// static primitives, which is exactly the static bias the dynamic
/// identification relies on. Memory matters through the last state channel,
/// which accumulates pooled dynamic content and biases main-branch pose and
/// depth scale.
#[derive(Debug, Clone)]
pub struct SimulatedBackbone {
    spec: SceneSpec,
    grid: PatchGrid,
    attention: AttentionMap,
    ray_norms: Vec<f64>,
    /// ±1 projection codes, `(D−1) × pixels`.
    codes: DMatrix<f64>,
}

impl SimulatedBackbone {
    pub fn new(spec: SceneSpec) -> Result<Self> {
        spec.validate()?;
        let k = spec.intrinsics;
        let grid = PatchGrid::new(k.width, k.height, spec.state.patch_size);
        let attention =
            anchor_attention(&grid, spec.state.tokens, spec.state.attention_sigma_patches)?;
        let ray_norms = spec.ray_norms();
        let mut rng = rng_for(&[spec.seed, TAG_CODE]);
        let codes = DMatrix::from_fn(spec.state.dim - 1, k.pixel_count(), |_, _| {
            if rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        });
        Ok(SimulatedBackbone {
            spec,
            grid,
            attention,
            ray_norms,
            codes,
        })
    }

    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn patch_grid(&self) -> &PatchGrid {
        &self.grid
    }

    pub fn attention(&self) -> &AttentionMap {
        &self.attention
    }

    /// Output-frame offset of memory lineage `epoch` relative to the ground
    /// truth frame; identity for the first segment.
    pub fn epoch_transform(&self, epoch: u32) -> SimTransform {
        if epoch == 0 {
            return SimTransform::identity();
        }
        let d = &self.spec.reset_drift;
        let mut rng = rng_for(&[self.spec.seed, TAG_DRIFT, epoch as u64]);
        let log_s = if d.scale_spread > 0.0 {
            rng.random_range(-d.scale_spread..=d.scale_spread)
        } else {
            0.0
        };
        let axis = Unit::new_normalize(Vec3::new(
            normal(&mut rng),
            normal(&mut rng),
            normal(&mut rng),
        ));
        let angle = rng.random::<f64>() * d.rotation_deg.to_radians();
        let dir = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)).normalize();
        let t = dir * rng.random::<f64>() * d.translation;
        SimTransform {
            scale: log_s.exp(),
            rotation: Rotation3::from_axis_angle(&axis, angle).into_inner(),
            translation: t,
        }
    }

    /// Whether `frame` is an uncertainty burst.
    pub fn is_burst(&self, frame: usize) -> bool {
        let p = self.spec.noise.burst_probability;
        p > 0.0 && rng_for(&[self.spec.seed, TAG_BURST, frame as u64]).random::<f64>() < p
    }

    /// Mean dynamic-content channel over state tokens (the memory's
    /// contamination level).
    pub fn contamination(&self, state: &StateVector) -> f64 {
        let last = state.tokens.ncols() - 1;
        let n = state.tokens.nrows();
        (0..n)
            .map(|j| state.tokens[(j, last)].max(0.0))
            .sum::<f64>()
            / n as f64
    }

    /// Ray hits to camera depth, softened at the decoder's resolution.
    fn camera_depth(&self, hits: &[Option<f64>]) -> Vec<Option<f64>> {
        let k = &self.spec.intrinsics;
        let z = hits
            .iter()
            .zip(&self.ray_norms)
            .map(|(h, rho)| h.map(|t| t / rho))
            .collect();
        soften(z, k.width, k.height, self.spec.noise.blur_radius)
    }

    fn check_state(&self, state: &StateVector) -> Result<()> {
        let want = (self.spec.state.tokens, self.spec.state.dim);
        if state.shape() != want {
            return Err(Error::dims(
                format!("{}x{} state", want.0, want.1),
                format!("{}x{}", state.shape().0, state.shape().1),
            ));
        }
        Ok(())
    }

    fn check_raymap(&self, raymap: &RayMapTensor) -> Result<()> {
        let k = &self.spec.intrinsics;
        if raymap.width != k.width || raymap.height != k.height {
            return Err(Error::dims(
                format!("{}x{} raymap", k.width, k.height),
                format!("{}x{}", raymap.width, raymap.height),
            ));
        }
        Ok(())
    }

    /// Per-patch features: `D−1` random projections of observed depth and
    /// the fraction of dynamic pixels.
    fn patch_features(&self, depth: &DepthMap, mask: &Grid<bool>) -> DMatrix<f64> {
        let d = self.spec.state.dim;
        let m = self.grid.token_count();
        let mut feats = DMatrix::zeros(m, d);
        for k in 0..m {
            let rect = self.grid.rect(k);
            let area = rect.area() as f64;
            for (x, y) in rect.pixels() {
                let i = y * self.grid.width + x;
                let z = depth.values[i];
                for c in 0..d - 1 {
                    feats[(k, c)] += self.codes[(c, i)] * z;
                }
                if mask.data[i] {
                    feats[(k, d - 1)] += 1.0;
                }
            }
            for c in 0..d {
                feats[(k, c)] /= area;
            }
        }
        feats
    }
}

/// Row-normalized Gaussian kernel between state-token anchors on a uniform
/// `√N × √N` grid and patch centers.
fn anchor_attention(grid: &PatchGrid, tokens: usize, sigma_patches: f64) -> Result<AttentionMap> {
    let side = (tokens as f64).sqrt().round() as usize;
    let sigma = sigma_patches * grid.patch_size as f64;
    let m = grid.token_count();
    let (w, h) = (grid.width as f64, grid.height as f64);
    let weights = DMatrix::from_fn(tokens, m, |j, k| {
        let ax = (j % side) as f64 + 0.5;
        let ay = (j / side) as f64 + 0.5;
        let anchor = (ax * w / side as f64, ay * h / side as f64);
        let c = grid.center(k);
        let d2 = (anchor.0 - c.0).powi(2) + (anchor.1 - c.1).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    });
    AttentionMap::new(weights)
}

impl Backbone for SimulatedBackbone {
    fn intrinsics(&self) -> &Intrinsics {
        &self.spec.intrinsics
    }

    fn state_shape(&self) -> (usize, usize) {
        (self.spec.state.tokens, self.spec.state.dim)
    }

    fn patch_size(&self) -> usize {
        self.spec.state.patch_size
    }

    fn decode_main(
        &self,
        frame: FrameHandle,
        raymap: &RayMapTensor,
        state: &StateVector,
        _static_weights: Option<&Grid<f64>>,
    ) -> Result<FramePrediction> {
        self.check_state(state)?;
        self.check_raymap(raymap)?;
        let f = frame.0;
        if f >= self.spec.frame_count {
            return Err(Error::OutOfRange {
                index: f,
                len: self.spec.frame_count,
            });
        }
        let k = self.spec.intrinsics;
        let noise = &self.spec.noise;
        let gt_pose = self.spec.gt_pose(f);
        let gt_rays = build_raymap(&k, &gt_pose)?;
        let (hits, dynamic) = self
            .spec
            .cast(&gt_rays.origin, &gt_rays.directions, f, true);
        let mask = Grid::from_vec(k.width, k.height, dynamic)?;

        let mut rng = rng_for(&[self.spec.seed, TAG_MAIN, f as u64, state.epoch as u64]);
        let burst = self.is_burst(f);
        let kappa = self.contamination(state);
        let perturb = self.epoch_transform(state.epoch);
        let depth_scale = perturb.scale * (1.0 + self.spec.contamination.depth_gain * kappa);

        let clean = self.camera_depth(&hits);
        let mut values = Vec::with_capacity(hits.len());
        let mut confidence = Vec::with_capacity(hits.len());
        for z in &clean {
            let eps = noise.sigma_main * normal(&mut rng);
            values.push(z.map_or(0.0, |z| z * (1.0 + eps) * depth_scale));
            confidence.push(1.0 / (1.0 + eps.abs()));
        }
        let depth = DepthMap::from_values(k.width, k.height, values)?;

        // pose: jitter (amplified on bursts) plus contamination bias
        let gain = if burst { noise.burst_pose_gain } else { 1.0 };
        let jitter = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng))
            * noise.pose_translation
            * gain;
        let bias = self.spec.mean_dynamic_offset(f) * self.spec.contamination.pose_gain * kappa;
        let axis = Unit::new_normalize(Vec3::new(
            normal(&mut rng),
            normal(&mut rng),
            normal(&mut rng),
        ));
        let angle = noise.pose_rotation_deg.to_radians() * gain * normal(&mut rng);
        let orientation =
            Rotation3::from_axis_angle(&axis, angle).into_inner() * gt_pose.orientation();
        let noisy =
            RigidPose::from_camera_to_world(orientation, gt_pose.camera_center() + jitter + bias);
        let pose = perturb.transform_pose(&noisy);

        // memory: pooled content minus what the state already holds
        let feats = self.patch_features(&depth, &mask);
        let pooled = self.attention.weights() * feats;
        let mut delta = &pooled - &state.tokens;
        // the dynamic channel integrates rather than tracks
        let last = self.spec.state.dim - 1;
        let c = &self.spec.contamination;
        for j in 0..delta.nrows() {
            delta[(j, last)] = c.write_rate * pooled[(j, last)] - c.decay * state.tokens[(j, last)];
        }
        if burst && noise.burst_state_gain > 0.0 {
            let dim = self.spec.state.dim;
            for j in 0..delta.nrows() {
                for c in 0..dim - 1 {
                    delta[(j, c)] += noise.burst_state_gain * normal(&mut rng);
                }
            }
        }

        Ok(FramePrediction {
            depth,
            confidence: Grid::from_vec(k.width, k.height, confidence)?,
            pose: Some(pose),
            state_delta: Some(StateDelta {
                tokens: delta,
                frame_index: f,
            }),
            attention: Some(self.attention.clone()),
        })
    }

    fn decode_raymap_only(
        &self,
        raymap: &RayMapTensor,
        state: &StateVector,
    ) -> Result<FramePrediction> {
        self.check_state(state)?;
        self.check_raymap(raymap)?;
        let k = self.spec.intrinsics;
        let perturb = self.epoch_transform(state.epoch);
        let inv = perturb.inverse();
        // rays are expressed in the segment's output frame; map them back
        let origin = inv.apply(&raymap.origin);
        let directions: Vec<Vec3> = raymap.directions.iter().map(|d| inv.rotation * d).collect();
        let (hits, _) = self.spec.cast(&origin, &directions, 0, false);

        let origin_bits = raymap
            .origin
            .iter()
            .fold(0u64, |acc, v| mix(acc ^ v.to_bits()));
        let mut rng = rng_for(&[
            self.spec.seed,
            TAG_RAY,
            state.frame_index as u64,
            state.epoch as u64,
            origin_bits,
        ]);
        let kappa = self.contamination(state);
        let depth_scale = perturb.scale * (1.0 + self.spec.contamination.depth_gain * kappa);
        let sigma = self.spec.noise.sigma_ray;
        let clean = self.camera_depth(&hits);
        let mut values = Vec::with_capacity(hits.len());
        let mut confidence = Vec::with_capacity(hits.len());
        for z in &clean {
            let eps = sigma * normal(&mut rng);
            values.push(z.map_or(0.0, |z| z * (1.0 + eps) * depth_scale));
            confidence.push(1.0 / (1.0 + eps.abs()));
        }
        Ok(FramePrediction {
            depth: DepthMap::from_values(k.width, k.height, values)?,
            confidence: Grid::from_vec(k.width, k.height, confidence)?,
            pose: None,
            state_delta: None,
            attention: None,
        })
    }
}
