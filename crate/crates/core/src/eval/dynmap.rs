//! Dynamic-map quality: discrepancy ratio, rank AUC, thresholded IoU and
//! rank correlation.

use serde::{Deserialize, Serialize};

use crate::dynid::{quantile, PixelDiscrepancy};
use crate::error::{Error, Result};
use crate::geom::Grid;

pub const OTSU_BINS: usize = 256;

/// Fractional ranks starting at 1; ties share the average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let avg = 0.5 * ((i + 1) + j) as f64;
        for k in &order[i..j] {
            ranks[*k] = avg;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney AUC of `scores` as a detector of `labels == true`.
/// `None` unless both classes are present.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|l| **l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos as f64 * neg as f64))
}

/// Spearman rank correlation; `None` for constant input or fewer than 3 pairs.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return None;
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Otsu threshold over a 256-bin histogram spanning `[min, P99]`; values
/// above the upper edge fall in the last bin. Foreground is `v > threshold`.
pub fn otsu_threshold(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let lo = values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let mut hi = quantile(values, 0.99);
    if hi <= lo {
        hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    if hi <= lo {
        return hi;
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0f64; OTSU_BINS];
    for v in values {
        let b = (((v - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1.0;
    }
    let total = values.len() as f64;
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    let grand: f64 = (0..OTSU_BINS).map(|b| hist[b] * center(b)).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_k) = (-1.0, 0);
    for (k, count) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += count;
        sum0 += count * center(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (grand - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_k = k;
        }
    }
    if best < 0.0 {
        // a single occupied bin: no split, nothing is foreground
        return values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    lo + (best_k + 1) as f64 * width
}

/// Per-frame dynamic-map statistics over included pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct FrameDynStats {
    /// `mean(δ | dynamic) / mean(δ | static)`; may be `+∞`.
    pub disc: Option<f64>,
    pub auc: Option<f64>,
    pub iou: Option<f64>,
    pub dynamic_pixels: usize,
    pub static_pixels: usize,
}

/// Where the Otsu threshold for IoU is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IouThreshold {
    /// One threshold per frame.
    #[default]
    PerFrame,
    /// One threshold over the included pixels of the whole sequence.
    PerSequence,
}

pub fn frame_dynmap(delta: &PixelDiscrepancy, mask: &Grid<bool>) -> Result<FrameDynStats> {
    frame_dynmap_at(delta, mask, None)
}

/// Like [`frame_dynmap`] but thresholds IoU at `threshold` when given.
pub fn frame_dynmap_at(
    delta: &PixelDiscrepancy,
    mask: &Grid<bool>,
    threshold: Option<f64>,
) -> Result<FrameDynStats> {
    if !delta.delta.same_shape(mask) {
        return Err(Error::dims(
            format!("{}x{} mask", delta.delta.width, delta.delta.height),
            format!("{}x{}", mask.width, mask.height),
        ));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for ((d, inc), m) in delta
        .delta
        .data
        .iter()
        .zip(&delta.included.data)
        .zip(&mask.data)
    {
        if *inc {
            scores.push(*d);
            labels.push(*m);
        }
    }
    let dynamic_pixels = labels.iter().filter(|l| **l).count();
    let static_pixels = labels.len() - dynamic_pixels;
    let mut stats = FrameDynStats {
        dynamic_pixels,
        static_pixels,
        ..Default::default()
    };
    if dynamic_pixels == 0 || static_pixels == 0 {
        return Ok(stats);
    }
    let mean_of = |want: bool| {
        let (s, n) = scores
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == want)
            .fold((0.0, 0usize), |(s, n), (d, _)| (s + d, n + 1));
        s / n as f64
    };
    let (md, ms) = (mean_of(true), mean_of(false));
    stats.disc = Some(if ms > 0.0 {
        md / ms
    } else if md > 0.0 {
        f64::INFINITY
    } else {
        1.0
    });
    stats.auc = auc(&scores, &labels);
    let thr = threshold.unwrap_or_else(|| otsu_threshold(&scores));
    let (mut inter, mut union) = (0usize, 0usize);
    for (s, l) in scores.iter().zip(&labels) {
        let p = *s > thr;
        inter += (p && *l) as usize;
        union += (p || *l) as usize;
    }
    stats.iou = Some(inter as f64 / union as f64);
    Ok(stats)
}

/// Frame-averaged sequence summary. Undefined metrics stay `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct DynMapSummary {
    pub disc: Option<f64>,
    /// At least one frame had zero static discrepancy with nonzero dynamic.
    pub disc_saturated: bool,
    pub auc: Option<f64>,
    pub iou: Option<f64>,
    pub frames: usize,
    pub dynamic_ratio: f64,
}

/// Constant-size running aggregate of [`FrameDynStats`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DynMapAccumulator {
    disc: (f64, usize),
    auc: (f64, usize),
    iou: (f64, usize),
    saturated: bool,
    frames: usize,
    dynamic: usize,
    pixels: usize,
}

impl DynMapAccumulator {
    pub fn add(&mut self, s: &FrameDynStats) {
        self.frames += 1;
        self.dynamic += s.dynamic_pixels;
        self.pixels += s.dynamic_pixels + s.static_pixels;
        if let Some(d) = s.disc {
            if d.is_infinite() {
                self.saturated = true;
            }
            self.disc.0 += d;
            self.disc.1 += 1;
        }
        if let Some(a) = s.auc {
            self.auc.0 += a;
            self.auc.1 += 1;
        }
        if let Some(i) = s.iou {
            self.iou.0 += i;
            self.iou.1 += 1;
        }
    }

    pub fn summary(&self) -> DynMapSummary {
        let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        DynMapSummary {
            disc: mean(self.disc),
            disc_saturated: self.saturated,
            auc: mean(self.auc),
            iou: mean(self.iou),
            frames: self.frames,
            dynamic_ratio: if self.pixels > 0 {
                self.dynamic as f64 / self.pixels as f64
            } else {
                0.0
            },
        }
    }
}

/// Sequence-level dynamic-map metrics.
pub fn dynmap_metrics(deltas: &[PixelDiscrepancy], masks: &[Grid<bool>]) -> Result<DynMapSummary> {
    dynmap_metrics_with(deltas, masks, IouThreshold::PerFrame)
}

pub fn dynmap_metrics_with(
    deltas: &[PixelDiscrepancy],
    masks: &[Grid<bool>],
    mode: IouThreshold,
) -> Result<DynMapSummary> {
    if deltas.len() != masks.len() {
        return Err(Error::dims(format!("{} masks", deltas.len()), masks.len()));
    }
    let threshold = match mode {
        IouThreshold::PerFrame => None,
        IouThreshold::PerSequence => {
            let pooled: Vec<f64> = deltas
                .iter()
                .flat_map(|d| {
                    d.delta
                        .data
                        .iter()
                        .zip(&d.included.data)
                        .filter(|(_, i)| **i)
                        .map(|(v, _)| *v)
                })
                .collect();
            (!pooled.is_empty()).then(|| otsu_threshold(&pooled))
        }
    };
    let mut acc = DynMapAccumulator::default();
    for (d, m) in deltas.iter().zip(masks) {
        acc.add(&frame_dynmap_at(d, m, threshold)?);
    }
    Ok(acc.summary())
}
