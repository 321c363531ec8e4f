//! Detection maps and the metrics used to compare detectors.

use crate::detectors::Detector;
use crate::error::{Error, Result};
use crate::stats::Scene;

/// Per-pixel filter outputs `yᵢ = wᵀ(rᵢ − μ)` in scene order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMap {
    pub scores: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub method: String,
}

impl DetectionMap {
    pub fn new(
        width: usize,
        height: usize,
        scores: Vec<f64>,
        method: impl Into<String>,
    ) -> Result<Self> {
        if width.checked_mul(height) != Some(scores.len()) {
            return Err(Error::DimensionMismatch {
                expected: width.saturating_mul(height),
                found: scores.len(),
            });
        }
        if let Some(index) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            scores,
            width,
            height,
            method: method.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Average output energy `(1/N) Σ yᵢ²`.
    pub fn output_energy(&self) -> f64 {
        output_energy(self)
    }
}

/// Target/background labels in scene order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMask {
    pub labels: Vec<bool>,
    pub width: usize,
    pub height: usize,
}

impl GroundTruthMask {
    pub fn new(width: usize, height: usize, labels: Vec<bool>) -> Result<Self> {
        if width.checked_mul(height) != Some(labels.len()) {
            return Err(Error::DimensionMismatch {
                expected: width.saturating_mul(height),
                found: labels.len(),
            });
        }
        Ok(Self {
            labels,
            width,
            height,
        })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Descending; the first entry is `+∞` for the `(0, 0)` point.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

/// Applies `detector` to every pixel.
pub fn detect(scene: &Scene, detector: &Detector) -> Result<DetectionMap> {
    if detector.w().len() != scene.bands() {
        return Err(Error::DimensionMismatch {
            expected: scene.bands(),
            found: detector.w().len(),
        });
    }
    let scores = scene.pixels().map(|p| detector.apply(p)).collect();
    DetectionMap::new(
        scene.width(),
        scene.height(),
        scores,
        detector.method().label(),
    )
}

pub fn output_energy(map: &DetectionMap) -> f64 {
    if map.scores.is_empty() {
        return 0.0;
    }
    map.scores.iter().map(|y| y * y).sum::<f64>() / map.scores.len() as f64
}

/// Squared Pearson correlation between two maps, computed two-pass.
pub fn r_squared(a: &DetectionMap, b: &DetectionMap) -> Result<f64> {
    r_squared_slices(&a.scores, &b.scores)
}

pub fn r_squared_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let negligible = |ss: f64, v: &[f64]| {
        let scale = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        ss <= n * (4.0 * f64::EPSILON * scale).powi(2)
    };
    if negligible(saa, a) || negligible(sbb, b) {
        return Err(Error::ZeroVariance);
    }
    Ok((sab * sab / (saa * sbb)).clamp(0.0, 1.0))
}

/// ROC curve over all distinct thresholds, highest first.
///
/// Pixels sharing a score enter the curve together, so ties contribute a
/// diagonal segment. The AUC is the trapezoidal area, accumulated in integer
/// counts so it equals the pairwise ranking probability (ties count ½) bit
/// for bit.
pub fn roc(map: &DetectionMap, mask: &GroundTruthMask) -> Result<RocCurve> {
    roc_scores(&map.scores, &mask.labels)
}

pub fn roc_scores(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if let Some(index) = scores.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite { index });
    }
    let positives = labels.iter().filter(|&&l| l).count() as u64;
    let negatives = labels.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateMask);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));

    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area under the count-scaled curve.
    let mut area2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let threshold = scores[order[start]];
        let mut end = start;
        let (prev_tp, prev_fp) = (tp, fp);
        while end < order.len() && scores[order[end]] == threshold {
            if labels[order[end]] {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        area2 += u128::from(fp - prev_fp) * u128::from(tp + prev_tp);
        thresholds.push(threshold);
        fpr.push(fp as f64 / negatives as f64);
        tpr.push(tp as f64 / positives as f64);
        start = end;
    }
    let auc = area2 as f64 / (2 * u128::from(positives) * u128::from(negatives)) as f64;
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc,
    })
}
