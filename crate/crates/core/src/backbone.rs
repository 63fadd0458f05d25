//! The per-frame contract any reconstruction backbone (simulated or neural)
//! must satisfy, and the latent memory state it reads.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::{DepthMap, Grid, Intrinsics, RigidPose};
use crate::raymap::{RayMapTensor, DEFAULT_PATCH_SIZE};

/// Row tolerance for attention normalization.
pub const ATTENTION_ROW_TOL: f64 = 1e-6;

/// Opaque handle to an input frame. Images never enter the pipeline
/// directly; only the backbone dereferences this.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameHandle(pub usize);

/// Latent memory: `N` state tokens of dimension `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub tokens: DMatrix<f64>,
    /// Frame whose update was applied last (0 for a fresh state).
    pub frame_index: usize,
    /// Number of resets this memory lineage has gone through.
    pub epoch: u32,
}

impl StateVector {
    pub fn zeros(tokens: usize, dim: usize) -> Self {
        StateVector {
            tokens: DMatrix::zeros(tokens, dim),
            frame_index: 0,
            epoch: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tokens.shape()
    }
}

/// Proposed state update from decoding one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDelta {
    pub tokens: DMatrix<f64>,
    pub frame_index: usize,
}

impl StateDelta {
    pub fn shape(&self) -> (usize, usize) {
        self.tokens.shape()
    }
}

/// Row-stochastic state-token → image-token attention (`N × M`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    weights: DMatrix<f64>,
}

impl AttentionMap {
    /// Renormalizes each row to sum to one; rejects negative or non-finite
    /// entries and all-zero rows.
    pub fn new(mut weights: DMatrix<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "attention weights must be finite and non-negative".into(),
            ));
        }
        for mut row in weights.row_iter_mut() {
            let sum: f64 = row.iter().sum();
            if !(sum > 0.0) {
                return Err(Error::InvalidParameter(
                    "attention row with zero mass".into(),
                ));
            }
            row /= sum;
        }
        Ok(AttentionMap { weights })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn state_tokens(&self) -> usize {
        self.weights.nrows()
    }

    pub fn image_tokens(&self) -> usize {
        self.weights.ncols()
    }
}

/// One decoded frame. RayMap-only decodes carry depth and confidence only.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePrediction {
    pub depth: DepthMap,
    pub confidence: Grid<f64>,
    pub pose: Option<RigidPose>,
    pub state_delta: Option<StateDelta>,
    pub attention: Option<AttentionMap>,
}

impl FramePrediction {
    pub fn validate(&self) -> Result<()> {
        if self.depth.width != self.confidence.width || self.depth.height != self.confidence.height
        {
            return Err(Error::dims(
                format!("{}x{} confidence", self.depth.width, self.depth.height),
                format!("{}x{}", self.confidence.width, self.confidence.height),
            ));
        }
        if self
            .confidence
            .data
            .iter()
            .any(|c| !(c.is_finite() && *c > 0.0))
        {
            return Err(Error::InvalidParameter(
                "confidence must be finite and positive".into(),
            ));
        }
        Ok(())
    }

    pub fn require_pose(&self) -> Result<&RigidPose> {
        self.pose
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("prediction carries no pose".into()))
    }
}

/// Dual-branch decoding contract.
///
/// Neither decode mutates the state; gating is applied by the caller through
/// [`apply_state_update`].
pub trait Backbone {
    fn intrinsics(&self) -> &Intrinsics;

    /// `(N, D)` for this session.
    fn state_shape(&self) -> (usize, usize);

    /// Side length of the square image tokens the attention map refers to.
    fn patch_size(&self) -> usize {
        DEFAULT_PATCH_SIZE
    }

    fn initial_state(&self) -> StateVector {
        let (n, d) = self.state_shape();
        StateVector::zeros(n, d)
    }

    /// Fresh memory after a periodic reset.
    fn reset_state(&self, previous: &StateVector) -> StateVector {
        let mut state = self.initial_state();
        state.epoch = previous.epoch + 1;
        state.frame_index = previous.frame_index;
        state
    }

    /// Image + RayMap branch. `static_weights` is an optional per-pixel
    /// staticness hint for backbone-internal pose retrieval; implementations
    /// may ignore it.
    fn decode_main(
        &self,
        frame: FrameHandle,
        raymap: &RayMapTensor,
        state: &StateVector,
        static_weights: Option<&Grid<f64>>,
    ) -> Result<FramePrediction>;

    /// RayMap-only branch queried against the frozen state.
    fn decode_raymap_only(
        &self,
        raymap: &RayMapTensor,
        state: &StateVector,
    ) -> Result<FramePrediction>;
}

/// `s_t = s_{t−1} + α ⊙ Δs_t`, broadcasting each token's gate over its
/// feature dimensions.
pub fn apply_state_update(
    state: &StateVector,
    delta: &StateDelta,
    gate: &[f64],
) -> Result<StateVector> {
    let (n, d) = state.shape();
    if delta.shape() != (n, d) {
        return Err(Error::dims(
            format!("{n}x{d} state delta"),
            format!("{}x{}", delta.tokens.nrows(), delta.tokens.ncols()),
        ));
    }
    if gate.len() != n {
        return Err(Error::dims(format!("{n} gate values"), gate.len()));
    }
    if let Some(g) = gate.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::InvalidParameter(format!(
            "gate value {g} outside [0, 1]"
        )));
    }
    let mut tokens = state.tokens.clone();
    for (j, g) in gate.iter().enumerate() {
        for c in 0..d {
            tokens[(j, c)] += g * delta.tokens[(j, c)];
        }
    }
    Ok(StateVector {
        tokens,
        frame_index: delta.frame_index,
        epoch: state.epoch,
    })
}

/// Ungated recurrence `s_t = s_{t−1} + Δs_t`.
pub fn apply_ungated(state: &StateVector, delta: &StateDelta) -> Result<StateVector> {
    let (n, _) = state.shape();
    apply_state_update(state, delta, &vec![1.0; n])
}
