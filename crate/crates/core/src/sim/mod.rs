//! Deterministic synthetic scenes and a mock dual-branch backbone.

mod backbone;
mod perturb;
mod presets;
mod scene;

pub use backbone::SimulatedBackbone;
pub use perturb::{inject_reset_perturbation, perturb_prediction, StreamItem};
pub use presets::{default_intrinsics, standard_suite, stratified_scene, Stratum};
pub use scene::{
    dynamic_ratio, ground_truth, look_at, raycast, CameraPath, ContaminationSpec, DynamicPrimitive,
    GroundTruthFrame, Motion, NoiseSpec, ResetDriftSpec, SceneSpec, Shape, StateSpec,
};

#[cfg(test)]
mod tests;
