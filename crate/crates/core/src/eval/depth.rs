use serde::{Deserialize, Serialize};

use crate::dynid::quantile;
use crate::error::{Error, Result};
use crate::geom::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DepthProtocol {
    /// One scale `median(gt / pred)` over every valid pixel of the sequence.
    #[default]
    PerSequenceMedian,
    Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DepthResult {
    pub abs_rel: f64,
    /// Percentage of pixels with `max(p/g, g/p) < 1.25`.
    pub delta_125: f64,
    pub scale: f64,
    pub pixels: usize,
}

fn pairs<'a>(
    pred: &'a [DepthMap],
    gt: &'a [DepthMap],
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if pred.len() != gt.len() {
        return Err(Error::dims(format!("{} depth maps", gt.len()), pred.len()));
    }
    for (p, g) in pred.iter().zip(gt) {
        if p.width != g.width || p.height != g.height {
            return Err(Error::dims(
                format!("{}x{}", g.width, g.height),
                format!("{}x{}", p.width, p.height),
            ));
        }
    }
    Ok(pred.iter().zip(gt).flat_map(|(p, g)| {
        p.values
            .iter()
            .zip(&p.valid)
            .zip(g.values.iter().zip(&g.valid))
            .filter(|((_, pv), (_, gv))| **pv && **gv)
            .map(|((pz, _), (gz, _))| (*pz, *gz))
    }))
}

/// AbsRel and δ<1.25 over pixels valid in both prediction and ground truth.
pub fn depth_metrics(
    pred: &[DepthMap],
    gt: &[DepthMap],
    protocol: DepthProtocol,
) -> Result<DepthResult> {
    let scale = match protocol {
        DepthProtocol::Metric => 1.0,
        DepthProtocol::PerSequenceMedian => {
            let ratios: Vec<f64> = pairs(pred, gt)?.map(|(p, g)| g / p).collect();
            if ratios.is_empty() {
                return Err(Error::Insufficient(
                    "no pixel valid in both prediction and ground truth".into(),
                ));
            }
            quantile(&ratios, 0.5)
        }
    };
    let (mut rel, mut good, mut n) = (0.0, 0usize, 0usize);
    for (p, g) in pairs(pred, gt)? {
        let p = scale * p;
        rel += (p - g).abs() / g;
        if (p / g).max(g / p) < 1.25 {
            good += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Insufficient(
            "no pixel valid in both prediction and ground truth".into(),
        ));
    }
    Ok(DepthResult {
        abs_rel: rel / n as f64,
        delta_125: 100.0 * good as f64 / n as f64,
        scale,
        pixels: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_maps(seed: u64, n: usize) -> Vec<DepthMap> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let v = (0..48)
                    .map(|_| {
                        if rng.random::<f64>() < 0.1 {
                            0.0
                        } else {
                            rng.random_range(0.5..8.0)
                        }
                    })
                    .collect();
                DepthMap::from_values(8, 6, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_is_perfect() {
        let gt = random_maps(1, 3);
        for proto in [DepthProtocol::Metric, DepthProtocol::PerSequenceMedian] {
            let r = depth_metrics(&gt, &gt, proto).unwrap();
            assert_eq!((r.abs_rel, r.delta_125), (0.0, 100.0));
        }
    }

    #[test]
    fn doubled_prediction() {
        let gt = random_maps(2, 2);
        let pred: Vec<_> = gt.iter().map(|d| d.scaled(2.0)).collect();
        let r = depth_metrics(&pred, &gt, DepthProtocol::PerSequenceMedian).unwrap();
        assert_eq!((r.abs_rel, r.delta_125), (0.0, 100.0));
        let r = depth_metrics(&pred, &gt, DepthProtocol::Metric).unwrap();
        assert_eq!((r.abs_rel, r.delta_125), (1.0, 0.0));
    }

    #[test]
    fn matches_brute_force_loop() {
        let gt = random_maps(3, 4);
        let pred = random_maps(4, 4);
        let r = depth_metrics(&pred, &gt, DepthProtocol::Metric).unwrap();
        let (mut rel, mut good, mut n) = (0.0, 0.0, 0.0);
        for f in 0..4 {
            for i in 0..48 {
                let (p, g) = (pred[f].values[i], gt[f].values[i]);
                if p > 0.0 && g > 0.0 {
                    rel += (p - g).abs() / g;
                    if p / g < 1.25 && g / p < 1.25 {
                        good += 1.0;
                    }
                    n += 1.0;
                }
            }
        }
        assert!((r.abs_rel - rel / n).abs() < 1e-12);
        assert!((r.delta_125 - 100.0 * good / n).abs() < 1e-12);
    }

    #[test]
    fn median_protocol_scale_invariant() {
        let gt = random_maps(5, 3);
        let pred = random_maps(6, 3);
        let a = depth_metrics(&pred, &gt, DepthProtocol::PerSequenceMedian).unwrap();
        let scaled: Vec<_> = pred.iter().map(|d| d.scaled(4.0)).collect();
        let b = depth_metrics(&scaled, &gt, DepthProtocol::PerSequenceMedian).unwrap();
        assert!((a.abs_rel - b.abs_rel).abs() < 1e-12);
        assert_eq!(a.delta_125, b.delta_125);
    }

    #[test]
    fn no_overlap_is_an_error() {
        let gt = vec![DepthMap::invalid(4, 4)];
        assert!(depth_metrics(&gt, &gt, DepthProtocol::Metric).is_err());
        assert!(depth_metrics(&gt, &[], DepthProtocol::Metric).is_err());
    }
}
