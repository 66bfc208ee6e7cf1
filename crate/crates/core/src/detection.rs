//! Box geometry, confidence aggregation and suppression.
//!
//! Boxes are kept in corner form in absolute pixel coordinates. Normalized
//! center form only appears at the annotation-file boundary (see
//! [`crate::annotation`]).

use std::cmp::Ordering;

use thiserror::Error;

/// Default minimum score kept by Soft-NMS.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.001;
/// Default Gaussian Soft-NMS spread.
pub const DEFAULT_SIGMA: f64 = 0.5;
/// Default confidence threshold used when counting detections.
pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.25;
/// Default IoU threshold for hard NMS and detection matching.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("invalid box ({xmin}, {ymin}, {xmax}, {ymax})")]
    InvalidBox {
        xmin: f64,
        ymin: f64,
        xmax: f64,
        ymax: f64,
    },
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("soft-nms sigma must be positive, got {0}")]
    InvalidSigma(f64),
}

/// Axis-aligned box in image pixels, y pointing down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BoundingBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, DetectionError> {
        let b = BoundingBox {
            xmin,
            ymin,
            xmax,
            ymax,
        };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(DetectionError::InvalidBox {
                xmin,
                ymin,
                xmax,
                ymax,
            })
        }
    }

    /// Box from a center point and a full width/height.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, DetectionError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.xmin, self.ymin, self.xmax, self.ymax]
            .iter()
            .all(|v| v.is_finite())
            && self.xmax >= self.xmin
            && self.ymax >= self.ymin
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.xmin + self.xmax) / 2.0,
            (self.ymin + self.ymax) / 2.0,
        )
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        BoundingBox {
            xmin: self.xmin + dx,
            ymin: self.ymin + dy,
            xmax: self.xmax + dx,
            ymax: self.ymax + dy,
        }
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains(&self, other: &BoundingBox) -> bool {
        other.xmin >= self.xmin
            && other.ymin >= self.ymin
            && other.xmax <= self.xmax
            && other.ymax <= self.ymax
    }
}

/// Intersection over union. Two zero-area boxes give 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// A scored box. Class 0 is the only class the pipeline produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_id: u32,
}

impl Detection {
    pub fn new(bbox: BoundingBox, confidence: f64) -> Result<Self, DetectionError> {
        Self::with_class(bbox, confidence, 0)
    }

    pub fn with_class(
        bbox: BoundingBox,
        confidence: f64,
        class_id: u32,
    ) -> Result<Self, DetectionError> {
        if !bbox.is_valid() {
            return Err(DetectionError::InvalidBox {
                xmin: bbox.xmin,
                ymin: bbox.ymin,
                xmax: bbox.xmax,
                ymax: bbox.ymax,
            });
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DetectionError::InvalidConfidence(confidence));
        }
        Ok(Detection {
            bbox,
            confidence,
            class_id,
        })
    }
}

/// Orders by confidence descending, breaking ties by the lower index.
pub(crate) fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Greedy hard non-maximum suppression.
///
/// Keeps the highest-confidence detection, drops every remaining detection
/// whose IoU with it exceeds `iou_threshold`, and repeats.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| rank_order((a, dets[a].confidence), (b, dets[b].confidence)));

    let mut suppressed = vec![false; dets.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(dets[i]);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&dets[i].bbox, &dets[j].bbox) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SoftNmsMethod {
    /// Scale by `1 - iou` when `iou > iou_threshold`.
    Linear,
    /// Scale by `exp(-iou^2 / sigma)` for every remaining box.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftNmsParams {
    pub method: SoftNmsMethod,
    pub sigma: f64,
    pub iou_threshold: f64,
    pub score_threshold: f64,
}

impl Default for SoftNmsParams {
    fn default() -> Self {
        SoftNmsParams {
            method: SoftNmsMethod::Gaussian,
            sigma: DEFAULT_SIGMA,
            iou_threshold: 0.3,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
        }
    }
}

/// Soft non-maximum suppression.
///
/// Repeatedly selects the current best detection and decays the scores of
/// the rest according to their overlap with it. Boxes are never moved; only
/// confidences change, and anything decayed below `score_threshold` is
/// dropped.
pub fn soft_nms(dets: &[Detection], params: &SoftNmsParams) -> Result<Vec<Detection>, DetectionError> {
    if !(params.sigma > 0.0) {
        return Err(DetectionError::InvalidSigma(params.sigma));
    }
    // (original index, detection with live score)
    let mut remaining: Vec<(usize, Detection)> = dets.iter().copied().enumerate().collect();
    let mut out: Vec<(usize, Detection)> = Vec::with_capacity(dets.len());

    while !remaining.is_empty() {
        let best_pos = remaining
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| rank_order((a.0, a.1.confidence), (b.0, b.1.confidence)))
            .map(|(p, _)| p)
            .expect("non-empty");
        let best = remaining.swap_remove(best_pos);

        for (_, d) in remaining.iter_mut() {
            let overlap = iou(&best.1.bbox, &d.bbox);
            let factor = match params.method {
                SoftNmsMethod::Gaussian => (-(overlap * overlap) / params.sigma).exp(),
                SoftNmsMethod::Linear if overlap > params.iou_threshold => 1.0 - overlap,
                SoftNmsMethod::Linear => 1.0,
            };
            d.confidence *= factor;
        }
        remaining.retain(|(_, d)| d.confidence >= params.score_threshold);
        out.push(best);
    }

    out.sort_by(|a, b| rank_order((a.0, a.1.confidence), (b.0, b.1.confidence)));
    Ok(out.into_iter().map(|(_, d)| d).collect())
}

/// Mean confidence of a detection set; 0 for an empty set.
pub fn mean_box_confidence(dets: &[Detection]) -> f64 {
    if dets.is_empty() {
        return 0.0;
    }
    dets.iter().map(|d| d.confidence).sum::<f64>() / dets.len() as f64
}

/// Number of detections with `confidence >= confidence_threshold`.
pub fn count_detections(dets: &[Detection], confidence_threshold: f64) -> usize {
    dets.iter()
        .filter(|d| d.confidence >= confidence_threshold)
        .count()
}

/// Which suppression to run after detection or tile merging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Suppression {
    None,
    Hard { iou_threshold: f64 },
    Soft(SoftNmsParams),
}

impl Suppression {
    pub fn apply(&self, dets: &[Detection]) -> Result<Vec<Detection>, DetectionError> {
        match self {
            Suppression::None => {
                let mut out: Vec<(usize, Detection)> = dets.iter().copied().enumerate().collect();
                out.sort_by(|a, b| rank_order((a.0, a.1.confidence), (b.0, b.1.confidence)));
                Ok(out.into_iter().map(|(_, d)| d).collect())
            }
            Suppression::Hard { iou_threshold } => Ok(nms(dets, *iou_threshold)),
            Suppression::Soft(p) => soft_nms(dets, p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(b: BoundingBox, c: f64) -> Detection {
        Detection::new(b, c).unwrap()
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&bx(0.0, 0.0, 1.0, 1.0), &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        let v = iou(&bx(0.0, 0.0, 2.0, 2.0), &bx(1.0, 1.0, 3.0, 3.0));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
        let p = bx(3.0, 3.0, 3.0, 3.0);
        assert_eq!(iou(&p, &p), 0.0);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(BoundingBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, f64::NAN, 1.0).is_err());
        assert!(Detection::new(bx(0.0, 0.0, 1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn nms_examples() {
        assert!(nms(&[], 0.5).is_empty());
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let out = nms(&[det(a, 0.8), det(a, 0.9)], 0.5);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);
        let b = bx(20.0, 20.0, 30.0, 30.0);
        let out = nms(&[det(a, 0.8), det(b, 0.9)], 0.5);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].bbox, b);
    }

    #[test]
    fn nms_ties_keep_lower_index() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let a2 = bx(0.5, 0.0, 10.5, 10.0);
        let out = nms(&[det(a, 0.7), det(a2, 0.7)], 0.5);
        assert_eq!(out, vec![det(a, 0.7)]);
    }

    #[test]
    fn soft_nms_gaussian_coincident() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let p = SoftNmsParams {
            method: SoftNmsMethod::Gaussian,
            sigma: 0.5,
            iou_threshold: 0.3,
            score_threshold: 0.001,
        };
        let out = soft_nms(&[det(a, 0.9), det(a, 0.8)], &p).unwrap();
        assert_eq!(out.len(), 2);
        assert!((out[0].confidence - 0.9).abs() < 1e-12);
        assert!((out[1].confidence - 0.108_268_226_589).abs() < 1e-9);
    }

    #[test]
    fn soft_nms_linear_full_overlap_discards() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let p = SoftNmsParams {
            method: SoftNmsMethod::Linear,
            ..SoftNmsParams::default()
        };
        let out = soft_nms(&[det(a, 0.9), det(a, 0.8)], &p).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);
    }

    #[test]
    fn soft_nms_linear_below_threshold_untouched() {
        // iou = 1/7 < 0.3
        let p = SoftNmsParams {
            method: SoftNmsMethod::Linear,
            ..SoftNmsParams::default()
        };
        let out = soft_nms(
            &[det(bx(0.0, 0.0, 2.0, 2.0), 0.9), det(bx(1.0, 1.0, 3.0, 3.0), 0.8)],
            &p,
        )
        .unwrap();
        assert_eq!(out[1].confidence, 0.8);
    }

    #[test]
    fn soft_nms_disjoint_unchanged() {
        let out = soft_nms(
            &[
                det(bx(0.0, 0.0, 1.0, 1.0), 0.4),
                det(bx(5.0, 5.0, 6.0, 6.0), 0.6),
            ],
            &SoftNmsParams::default(),
        )
        .unwrap();
        assert_eq!(out[0].confidence, 0.6);
        assert_eq!(out[1].confidence, 0.4);
    }

    #[test]
    fn soft_nms_rejects_bad_sigma() {
        let p = SoftNmsParams {
            sigma: 0.0,
            ..SoftNmsParams::default()
        };
        assert_eq!(soft_nms(&[], &p), Err(DetectionError::InvalidSigma(0.0)));
    }

    #[test]
    fn soft_nms_tiny_sigma_matches_hard_nms() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(40.0, 40.0, 50.0, 50.0);
        let dets = [det(a, 0.9), det(a, 0.8), det(b, 0.7), det(b, 0.75)];
        let p = SoftNmsParams {
            sigma: 1e-6,
            ..SoftNmsParams::default()
        };
        let soft = soft_nms(&dets, &p).unwrap();
        let hard = nms(&dets, 0.5);
        assert_eq!(soft, hard);
    }

    #[test]
    fn mean_confidence_examples() {
        let b = bx(0.0, 0.0, 1.0, 1.0);
        assert_eq!(mean_box_confidence(&[det(b, 0.5)]), 0.5);
        let v = mean_box_confidence(&[det(b, 0.6), det(b, 0.8), det(b, 1.0)]);
        assert!((v - 0.8).abs() < 1e-15);
        assert_eq!(mean_box_confidence(&[]), 0.0);
    }

    #[test]
    fn count_examples() {
        let b = bx(0.0, 0.0, 1.0, 1.0);
        let dets = [det(b, 0.3), det(b, 0.2), det(b, 0.9)];
        assert_eq!(count_detections(&[], 0.25), 0);
        assert_eq!(count_detections(&dets, 0.25), 2);
        assert_eq!(count_detections(&dets, 0.0), 3);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..100.0f64, 0.0..100.0f64, 0.1..50.0f64, 0.1..50.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::new(x, y, x + w, y + h).unwrap())
    }

    fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
        prop::collection::vec((arb_box(), 0.0..=1.0f64), 0..12)
            .prop_map(|v| v.into_iter().map(|(b, c)| Detection::new(b, c).unwrap()).collect())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn soft_nms_only_decays(dets in arb_dets(), gaussian in any::<bool>(), sigma in 0.05..2.0f64) {
            let p = SoftNmsParams {
                method: if gaussian { SoftNmsMethod::Gaussian } else { SoftNmsMethod::Linear },
                sigma,
                ..SoftNmsParams::default()
            };
            let out = soft_nms(&dets, &p).unwrap();
            let mut used = vec![false; dets.len()];
            for d in &out {
                let src = dets.iter().enumerate().position(|(i, s)| {
                    !used[i] && s.bbox == d.bbox && d.confidence <= s.confidence
                });
                prop_assert!(src.is_some());
                used[src.unwrap()] = true;
            }
            prop_assert!(out.windows(2).all(|w| w[0].confidence >= w[1].confidence));
        }

        #[test]
        fn nms_output_is_subset(dets in arb_dets(), thr in 0.0..=1.0f64) {
            let out = nms(&dets, thr);
            for d in &out {
                prop_assert!(dets.contains(d));
            }
            for (i, a) in out.iter().enumerate() {
                for b in &out[i + 1..] {
                    prop_assert!(iou(&a.bbox, &b.bbox) <= thr);
                }
            }
        }

        #[test]
        fn count_monotone_in_threshold(dets in arb_dets(), t1 in 0.0..=1.0f64, t2 in 0.0..=1.0f64) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(count_detections(&dets, hi) <= count_detections(&dets, lo));
        }
    }
}
