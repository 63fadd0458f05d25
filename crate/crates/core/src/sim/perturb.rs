use crate::align::transform_prediction;
use crate::backbone::FramePrediction;
use crate::error::{Error, Result};
use crate::geom::SimTransform;

/// A prediction tagged with the frame it decodes.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamItem {
    pub frame_index: usize,
    pub prediction: FramePrediction,
}

/// Applies a similarity to one prediction: the implied world cloud moves by
/// `perturbation`, so camera-frame depths scale by `s` and the pose follows.
pub fn perturb_prediction(pred: &FramePrediction, perturbation: &SimTransform) -> FramePrediction {
    transform_prediction(pred, perturbation)
}

/// Simulates a reset at `at_frame`: the boundary frame is emitted twice
/// (unperturbed, then perturbed) and every later prediction is perturbed.
pub fn inject_reset_perturbation(
    stream: &[StreamItem],
    at_frame: usize,
    perturbation: &SimTransform,
) -> Result<Vec<StreamItem>> {
    let pos = stream
        .iter()
        .position(|it| it.frame_index == at_frame)
        .ok_or(Error::OutOfRange {
            index: at_frame,
            len: stream.len(),
        })?;
    let mut out = Vec::with_capacity(stream.len() + 1);
    out.extend_from_slice(&stream[..=pos]);
    out.extend(stream[pos..].iter().map(|it| StreamItem {
        frame_index: it.frame_index,
        prediction: perturb_prediction(&it.prediction, perturbation),
    }));
    Ok(out)
}
