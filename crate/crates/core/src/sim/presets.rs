//! Built-in scenes: a default furnished room and randomized variants
//! stratified by how much of the image dynamic objects cover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{
    CameraPath, ContaminationSpec, DynamicPrimitive, Motion, NoiseSpec, ResetDriftSpec, SceneSpec,
    Shape, StateSpec,
};
use crate::geom::Intrinsics;

pub const DEFAULT_WIDTH: usize = 64;
pub const DEFAULT_HEIGHT: usize = 48;

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 48.0,
        fy: 48.0,
        cx: 32.0,
        cy: 24.0,
        width: DEFAULT_WIDTH,
        height: DEFAULT_HEIGHT,
    }
}

fn room_shell() -> Vec<Shape> {
    let plane = |n: [f64; 3], d: f64| Shape::Plane {
        normal: n,
        offset: d,
    };
    vec![
        plane([0.0, 1.0, 0.0], 1.2),  // floor (camera y points down)
        plane([0.0, 1.0, 0.0], -2.2), // ceiling
        plane([0.0, 0.0, 1.0], 9.0),  // back wall
        plane([0.0, 0.0, 1.0], -4.0), // wall behind the start position
        plane([1.0, 0.0, 0.0], -4.5), // left wall
        plane([1.0, 0.0, 0.0], 4.5),  // right wall
        Shape::Cuboid {
            min: [-2.5, 0.2, 5.5],
            max: [-1.2, 1.2, 6.5],
        },
        Shape::Cuboid {
            min: [1.5, -0.5, 6.8],
            max: [2.5, 1.2, 7.8],
        },
        Shape::Sphere {
            center: [0.8, 0.7, 7.5],
            radius: 0.5,
        },
    ]
}

/// Deep, tall hall used by the stratified scenes: walls fill about half of
/// the view from the start position, so even a large object at mid depth
/// has wall behind it rather than floor or ceiling.
fn hall_shell() -> Vec<Shape> {
    let plane = |n: [f64; 3], d: f64| Shape::Plane {
        normal: n,
        offset: d,
    };
    vec![
        plane([0.0, 1.0, 0.0], 2.6),
        plane([0.0, 1.0, 0.0], -4.2),
        plane([0.0, 0.0, 1.0], 12.0),
        plane([0.0, 0.0, 1.0], -4.0),
        plane([1.0, 0.0, 0.0], -7.0),
        plane([1.0, 0.0, 0.0], 7.0),
        Shape::Cuboid {
            min: [-5.0, -4.2, 9.5],
            max: [-4.2, 2.6, 10.3],
        },
        Shape::Cuboid {
            min: [3.6, 0.6, 8.0],
            max: [5.0, 2.6, 9.0],
        },
    ]
}

fn default_camera() -> CameraPath {
    CameraPath::LookAt {
        start: [0.0, -0.2, 0.0],
        velocity: [0.004, 0.0, 0.006],
        sway_amplitude: [0.25, 0.04, 0.15],
        sway_period: 75.0,
        target: [0.0, 0.3, 7.0],
        target_velocity: [0.005, 0.0, 0.0],
    }
}

impl Default for SceneSpec {
    /// 100-frame room with one circling sphere and one pacing box.
    fn default() -> Self {
        SceneSpec {
            name: "room".into(),
            intrinsics: default_intrinsics(),
            frame_count: 100,
            static_primitives: room_shell(),
            dynamic_primitives: vec![
                DynamicPrimitive {
                    shape: Shape::Sphere {
                        center: [0.0, 0.4, 4.2],
                        radius: 0.55,
                    },
                    motion: Motion::Circular {
                        radius: 1.0,
                        period_frames: 90.0,
                        phase: 0.0,
                    },
                },
                DynamicPrimitive {
                    shape: Shape::Cuboid {
                        min: [-0.3, -0.2, 5.0],
                        max: [0.3, 1.2, 5.4],
                    },
                    motion: Motion::Oscillate {
                        axis: [1.0, 0.0, 0.0],
                        amplitude: 1.6,
                        period_frames: 70.0,
                    },
                },
            ],
            camera: default_camera(),
            noise: NoiseSpec::default(),
            contamination: ContaminationSpec::default(),
            reset_drift: ResetDriftSpec::default(),
            state: StateSpec::default(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    /// Same geometry with every dynamic primitive removed.
    pub fn static_only(mut self) -> Self {
        self.dynamic_primitives.clear();
        self
    }

    pub fn noiseless(mut self) -> Self {
        self.noise = NoiseSpec::none();
        self
    }
}

/// Dynamic-coverage strata (fraction of dynamic pixels per sequence).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    /// ≤ 10 %.
    Low,
    /// 10–30 %.
    Medium,
    /// > 30 %.
    High,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Low, Stratum::Medium, Stratum::High];

    pub fn of_ratio(ratio: f64) -> Stratum {
        if ratio <= 0.10 {
            Stratum::Low
        } else if ratio <= 0.30 {
            Stratum::Medium
        } else {
            Stratum::High
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Stratum::Low => "low",
            Stratum::Medium => "medium",
            Stratum::High => "high",
        }
    }
}

/// Randomized hall whose dynamic object is sized to land in `stratum`.
/// Every stratum keeps its objects in the same depth band, clear of the floor
/// and ceiling sightlines of a large hall, so coverage rather than proximity or background is
/// what varies. Each scene has a single moving object whose size sets the
/// stratum: a small ball for Low, a panel for Medium, a wall-sized panel for
/// High.
pub fn stratified_scene(stratum: Stratum, seed: u64, frame_count: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57a7_0000);
    let (width, height) = match stratum {
        Stratum::Low => ((0.25, 0.45), (0.0, 0.0)),
        Stratum::Medium => ((2.0, 2.8), (1.5, 1.9)),
        Stratum::High => ((4.0, 4.6), (1.85, 1.95)),
    };
    let w = rng.random_range(width.0..width.1);
    let z = rng.random_range(4.0..4.8);
    let x = rng.random_range(-0.2..0.2);
    let shape = if stratum == Stratum::Low {
        Shape::Sphere {
            center: [x, rng.random_range(-0.6..0.2), z],
            radius: w,
        }
    } else {
        let h = rng.random_range(height.0..height.1);
        let mid = rng.random_range(-0.5..-0.3);
        Shape::Cuboid {
            min: [x - w / 2.0, mid - h / 2.0, z],
            max: [x + w / 2.0, mid + h / 2.0, z + 0.3],
        }
    };
    let motion = if rng.random::<bool>() {
        Motion::Circular {
            radius: rng.random_range(0.2..0.4),
            period_frames: rng.random_range(50.0..110.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    } else {
        Motion::Oscillate {
            axis: [1.0, 0.0, rng.random_range(-0.3..0.3)],
            amplitude: rng.random_range(0.3..0.6),
            period_frames: rng.random_range(40.0..90.0),
        }
    };
    let dynamic_primitives = vec![DynamicPrimitive { shape, motion }];
    let camera = CameraPath::LookAt {
        start: [rng.random_range(-0.3..0.3), -0.2, 0.0],
        velocity: [
            rng.random_range(-0.004..0.004),
            0.0,
            rng.random_range(0.0..0.006),
        ],
        sway_amplitude: [
            rng.random_range(0.1..0.3),
            0.04,
            rng.random_range(0.05..0.2),
        ],
        sway_period: rng.random_range(50.0..100.0),
        target: [0.0, -0.3, 12.0],
        target_velocity: [0.0, 0.0, 0.0],
    };
    SceneSpec {
        name: format!("{}-{seed}", stratum.label()),
        frame_count,
        static_primitives: hall_shell(),
        dynamic_primitives,
        camera,
        seed,
        ..SceneSpec::default()
    }
}

/// The benchmark suite used by the ablation harness: the default room plus
/// one low- and one high-coverage randomized room.
pub fn standard_suite(seed: u64, frame_count: usize) -> Vec<SceneSpec> {
    vec![
        SceneSpec {
            name: format!("room-{seed}"),
            frame_count,
            seed,
            ..SceneSpec::default()
        },
        stratified_scene(
            Stratum::Low,
            seed.wrapping_mul(31).wrapping_add(1),
            frame_count,
        ),
        stratified_scene(
            Stratum::High,
            seed.wrapping_mul(31).wrapping_add(2),
            frame_count,
        ),
    ]
}
