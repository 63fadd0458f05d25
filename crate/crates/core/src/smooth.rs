//! Causal, state-aware smoothing of camera positions.
//!
//! Inter-frame displacements are exponentially filtered with a per-frame
//! coefficient `β = 1 / (1 + λ·|a·sc|)`, where `a` is the trajectory
//! acceleration and `sc` the mean norm of the proposed state change.
//! Orientation passes through untouched.

use serde::{Deserialize, Serialize};

use crate::backbone::StateDelta;
use crate::error::{Error, Result};
use crate::geom::{RigidPose, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "beta", rename_all = "snake_case")]
pub enum SmoothMode {
    Full,
    Fixed(f64),
    AccelOnly,
    StateOnly,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothConfig {
    pub lambda: f64,
    pub mode: SmoothMode,
}

impl Default for SmoothConfig {
    fn default() -> Self {
        SmoothConfig {
            lambda: 10.0,
            mode: SmoothMode::Full,
        }
    }
}

impl SmoothConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config {
                key: "lambda".into(),
                constraint: "lambda > 0".into(),
            });
        }
        if let SmoothMode::Fixed(b) = self.mode {
            if !(0.0..=1.0).contains(&b) {
                return Err(Error::Config {
                    key: "mode.beta".into(),
                    constraint: "fixed beta in [0, 1]".into(),
                });
            }
        }
        Ok(())
    }

    /// Smoothing coefficient for a frame with known acceleration.
    pub fn beta(&self, accel: f64, sc: f64) -> f64 {
        match self.mode {
            SmoothMode::Full => 1.0 / (1.0 + self.lambda * (accel * sc).abs()),
            SmoothMode::Fixed(b) => b,
            SmoothMode::AccelOnly => 1.0 / (1.0 + self.lambda * accel),
            SmoothMode::StateOnly => 1.0 / (1.0 + self.lambda * sc),
            SmoothMode::Off => 1.0,
        }
    }
}

/// Filter memory; constant size regardless of sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmootherState {
    pub prev_translation: Option<Vec3>,
    pub prev_raw_displacement: Option<Vec3>,
    pub prev_filtered_displacement: Vec3,
    pub prev_output: Vec3,
}

impl SmootherState {
    pub fn initialized(&self) -> bool {
        self.prev_translation.is_some()
    }

    /// One recursion step with an explicit coefficient:
    /// `d̂_t = β·d_t + (1 − β)·d̂_{t−1}`, `τ̂_t = τ̂_{t−1} + d̂_t`.
    pub fn advance(&mut self, translation: Vec3, beta: f64) -> Vec3 {
        match self.prev_translation {
            None => {
                self.prev_output = translation;
            }
            Some(prev) => {
                let d = translation - prev;
                let filtered = beta * d + (1.0 - beta) * self.prev_filtered_displacement;
                self.prev_output += filtered;
                self.prev_filtered_displacement = filtered;
                self.prev_raw_displacement = Some(d);
            }
        }
        self.prev_translation = Some(translation);
        self.prev_output
    }
}

/// Per-frame filter telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothTrace {
    pub beta: f64,
    pub accel: Option<f64>,
    pub sc: f64,
}

/// `sc = (1/N)·Σ_j ‖Δs_j‖₂`, sampled before any gating.
pub fn state_change_signal(delta: &StateDelta) -> f64 {
    let n = delta.tokens.nrows();
    if n == 0 {
        return 0.0;
    }
    delta.tokens.row_iter().map(|r| r.norm()).sum::<f64>() / n as f64
}

/// Smooths the camera position of `pose`. The first two frames pass through
/// (the acceleration needs two displacements).
pub fn smooth_step(
    pose: &RigidPose,
    sc: f64,
    state: &mut SmootherState,
    cfg: &SmoothConfig,
) -> (RigidPose, SmoothTrace) {
    let center = pose.camera_center();
    let (out, trace) = smooth_position(center, sc, state, cfg);
    let smoothed = if out == center {
        *pose
    } else {
        RigidPose::from_camera_to_world(pose.orientation(), out)
    };
    (smoothed, trace)
}

/// Position-only variant of [`smooth_step`].
pub fn smooth_position(
    center: Vec3,
    sc: f64,
    state: &mut SmootherState,
    cfg: &SmoothConfig,
) -> (Vec3, SmoothTrace) {
    let accel = match (state.prev_translation, state.prev_raw_displacement) {
        (Some(prev), Some(prev_d)) => Some((center - prev - prev_d).norm()),
        _ => None,
    };
    let beta = accel.map_or(1.0, |a| cfg.beta(a, sc));
    (state.advance(center, beta), SmoothTrace { beta, accel, sc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::rot_y;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose_at(c: Vec3) -> RigidPose {
        RigidPose::from_camera_to_world(rot_y(0.2), c)
    }

    #[test]
    fn state_change_signal_cases() {
        let zero = StateDelta {
            tokens: DMatrix::zeros(4, 5),
            frame_index: 0,
        };
        assert_eq!(state_change_signal(&zero), 0.0);
        let mut t = DMatrix::zeros(3, 6);
        for j in 0..3 {
            t[(j, 0)] = 3.0;
            t[(j, 1)] = 4.0;
        }
        assert_eq!(
            state_change_signal(&StateDelta {
                tokens: t,
                frame_index: 0
            }),
            5.0
        );

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = DMatrix::from_fn(7, 9, |_, _| rng.random_range(-1.0..1.0));
        let mut brute = 0.0;
        for j in 0..7 {
            let mut s: f64 = 0.0;
            for c in 0..9 {
                s += t[(j, c)] * t[(j, c)];
            }
            brute += s.sqrt();
        }
        brute /= 7.0;
        assert!(
            (state_change_signal(&StateDelta {
                tokens: t,
                frame_index: 0
            }) - brute)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn constant_velocity_passes_through() {
        let cfg = SmoothConfig::default();
        let mut st = SmootherState::default();
        for t in 0..200 {
            let c = Vec3::new(0.5, -0.25, 1.0) + Vec3::new(0.125, 0.0625, -0.25) * t as f64;
            let (out, trace) = smooth_position(c, 3.0, &mut st, &cfg);
            assert_eq!(trace.beta, 1.0);
            assert!((out - c).norm() <= 1e-12);
        }
        let mut st = SmootherState::default();
        for t in 0..200 {
            let c = Vec3::new(0.3, 0.1, -1.0) + Vec3::new(0.01, -0.02, 0.03) * t as f64;
            let (out, _) = smooth_step(&pose_at(c), 3.0, &mut st, &cfg);
            assert!((out.camera_center() - c).norm() <= 1e-12);
        }
    }

    #[test]
    fn beta_midpoint() {
        let cfg = SmoothConfig {
            lambda: 2.0,
            mode: SmoothMode::Full,
        };
        assert_eq!(cfg.beta(0.25, 2.0), 0.5);
        assert_eq!(cfg.beta(-0.25, 2.0), 0.5);
    }

    #[test]
    fn orientation_untouched() {
        let cfg = SmoothConfig::default();
        let mut st = SmootherState::default();
        for t in 0..10 {
            let p = pose_at(Vec3::new((t * t) as f64 * 0.1, 0.0, 0.0));
            let (out, _) = smooth_step(&p, 1.0, &mut st, &cfg);
            assert!((out.rotation - p.rotation).abs().max() < 1e-15);
        }
    }

    /// Closed-form expansion evaluated term by term.
    fn closed_form(translations: &[Vec3], betas: &[f64]) -> Vec<Vec3> {
        let d: Vec<Vec3> = (0..translations.len())
            .map(|k| {
                if k == 0 {
                    Vec3::zeros()
                } else {
                    translations[k] - translations[k - 1]
                }
            })
            .collect();
        let mut out = vec![translations[0]];
        for t in 1..translations.len() {
            let mut acc = translations[0];
            for m in 1..=t {
                let mut prod = 1.0;
                let mut inner = Vec3::zeros();
                for k in (1..=m).rev() {
                    inner += betas[k] * prod * d[k];
                    prod *= 1.0 - betas[k];
                }
                acc += inner;
            }
            out.push(acc);
        }
        out
    }

    #[test]
    fn recursion_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [2, 17, 1000] {
            let mut pos = Vec3::zeros();
            let translations: Vec<Vec3> = (0..n)
                .map(|_| {
                    pos += Vec3::new(
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                        rng.random_range(-0.1..0.1),
                    );
                    pos
                })
                .collect();
            let betas: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let mut st = SmootherState::default();
            let rec: Vec<Vec3> = translations
                .iter()
                .zip(&betas)
                .map(|(t, b)| st.advance(*t, *b))
                .collect();
            for (a, b) in rec.iter().zip(closed_form(&translations, &betas)) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn mode_lattice() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cs: Vec<Vec3> = (0..60)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let run = |mode, scs: &dyn Fn(usize) -> f64, cs: &[Vec3]| {
            let cfg = SmoothConfig { lambda: 3.0, mode };
            let mut st = SmootherState::default();
            cs.iter()
                .enumerate()
                .map(|(i, c)| smooth_position(*c, scs(i), &mut st, &cfg).0)
                .collect::<Vec<_>>()
        };
        assert!(run(SmoothMode::Full, &|_| 1.0, &cs) == run(SmoothMode::AccelOnly, &|_| 1.0, &cs));

        // alternating unit steps give a ≡ 1 exactly
        let unit: Vec<Vec3> = (0..60)
            .map(|i| Vec3::new(((i + 1) / 2) as f64, 0.0, 0.0))
            .collect();
        let scs = |i: usize| (i % 7) as f64 * 0.3;
        assert!(run(SmoothMode::Full, &scs, &unit) == run(SmoothMode::StateOnly, &scs, &unit));

        let off = run(SmoothMode::Off, &|_| 5.0, &cs);
        for (o, c) in off.iter().zip(&cs) {
            assert!((o - c).norm() < 1e-12);
        }
    }

    #[test]
    fn beta_in_unit_interval_and_decreasing() {
        let cfg = SmoothConfig::default();
        let mut prev = 1.0;
        for i in 0..100 {
            let b = cfg.beta(i as f64 * 0.01, 2.0);
            assert!(b > 0.0 && b <= 1.0 && b <= prev);
            prev = b;
        }
    }

    #[test]
    fn config_validation() {
        assert!(SmoothConfig {
            lambda: 0.0,
            mode: SmoothMode::Full
        }
        .validate()
        .is_err());
        assert!(SmoothConfig {
            lambda: 1.0,
            mode: SmoothMode::Fixed(1.5)
        }
        .validate()
        .is_err());
        assert!(SmoothConfig {
            lambda: 1.0,
            mode: SmoothMode::Fixed(0.3)
        }
        .validate()
        .is_ok());
    }
}
