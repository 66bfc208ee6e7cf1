//! Matching detections to ground truth, per-frame counting confidence and
//! average precision.

use thiserror::Error;

use crate::detection::{iou, rank_order, BoundingBox, Detection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("average precision is undefined without ground truth")]
    NoGroundTruth,
}

/// Outcome of one-to-one matching on a single image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    /// `(detection index, ground-truth index, iou)` for every true positive.
    pub pairs: Vec<(usize, usize, f64)>,
}

impl MatchResult {
    /// Flag per input detection: true when it was matched.
    pub fn matched_detections(&self, n_dets: usize) -> Vec<bool> {
        let mut flags = vec![false; n_dets];
        for &(d, _, _) in &self.pairs {
            flags[d] = true;
        }
        flags
    }
}

/// Greedy matching in descending confidence order.
///
/// Each detection claims the unmatched ground truth it overlaps most, if that
/// overlap reaches `iou_threshold`. Ties in confidence go to the lower
/// detection index, ties in IoU to the lower ground-truth index.
pub fn match_detections(dets: &[Detection], gts: &[BoundingBox], iou_threshold: f64) -> MatchResult {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| rank_order((a, dets[a].confidence), (b, dets[b].confidence)));

    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for di in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let v = iou(&dets[di].bbox, gt);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((gi, v));
            }
        }
        if let Some((gi, v)) = best {
            taken[gi] = true;
            pairs.push((di, gi, v));
        }
    }
    let tp = pairs.len();
    MatchResult {
        tp,
        fp: dets.len() - tp,
        fn_: gts.len() - tp,
        pairs,
    }
}

/// `tp / (tp + fp + fn)`, or 1 for an empty scene with no detections.
pub fn counting_confidence(m: &MatchResult) -> f64 {
    let denom = m.tp + m.fp + m.fn_;
    if denom == 0 {
        1.0
    } else {
        m.tp as f64 / denom as f64
    }
}

/// Points on the recall axis where precision is sampled.
pub const RECALL_POINTS: usize = 101;

/// Area under the interpolated precision-recall curve, sampled at 101
/// recall levels `0, 0.01, ..., 1`.
///
/// Detections are ranked across all images by confidence (ties by image id,
/// then input order) and labelled true/false positive by the per-image
/// greedy matcher.
pub fn average_precision(
    dets: &[(usize, Detection)],
    gts: &[(usize, BoundingBox)],
    iou_threshold: f64,
) -> Result<f64, EvalError> {
    if gts.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    let mut images: Vec<usize> = dets.iter().map(|d| d.0).chain(gts.iter().map(|g| g.0)).collect();
    images.sort_unstable();
    images.dedup();

    // true-positive flag per input detection
    let mut is_tp = vec![false; dets.len()];
    for &img in &images {
        let det_idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].0 == img).collect();
        let img_dets: Vec<Detection> = det_idx.iter().map(|&i| dets[i].1).collect();
        let img_gts: Vec<BoundingBox> = gts.iter().filter(|g| g.0 == img).map(|g| g.1).collect();
        let m = match_detections(&img_dets, &img_gts, iou_threshold);
        for (local, flag) in m.matched_detections(img_dets.len()).into_iter().enumerate() {
            is_tp[det_idx[local]] = flag;
        }
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .1
            .confidence
            .total_cmp(&dets[a].1.confidence)
            .then(dets[a].0.cmp(&dets[b].0))
            .then(a.cmp(&b))
    });

    let n_gt = gts.len() as f64;
    let mut recall = Vec::with_capacity(order.len());
    let mut precision = Vec::with_capacity(order.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &i in &order {
        if is_tp[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt);
        precision.push(tp as f64 / (tp + fp) as f64);
    }

    // precision envelope: max precision at any later rank
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }

    let mut total = 0.0;
    for step in 0..RECALL_POINTS {
        let level = step as f64 / (RECALL_POINTS - 1) as f64;
        // recall is non-decreasing, so the first rank reaching `level`
        // carries the envelope maximum
        let first = recall.partition_point(|&r| r < level);
        if first < precision.len() {
            total += precision[first];
        }
    }
    Ok(total / RECALL_POINTS as f64)
}

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Mean of [`average_precision`] over IoU thresholds 0.50:0.05:0.95.
pub fn average_precision_range(
    dets: &[(usize, Detection)],
    gts: &[(usize, BoundingBox)],
) -> Result<f64, EvalError> {
    let ts = coco_thresholds();
    let mut sum = 0.0;
    for t in ts {
        sum += average_precision(dets, gts, t)?;
    }
    Ok(sum / ts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BoundingBox {
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    }

    fn det(b: BoundingBox, c: f64) -> Detection {
        Detection::new(b, c).unwrap()
    }

    #[test]
    fn match_examples() {
        let gts = [bx(0.0, 0.0, 1.0, 1.0), bx(5.0, 5.0, 6.0, 6.0), bx(9.0, 9.0, 10.0, 10.0)];
        let m = match_detections(&[], &gts, 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (0, 0, 3));

        let a = bx(0.0, 0.0, 10.0, 10.0);
        let m = match_detections(&[det(a, 0.9)], &[a], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 0));
        assert_eq!(m.pairs, vec![(0, 0, 1.0)]);
    }

    #[test]
    fn greedy_prefers_higher_confidence() {
        let gt = bx(0.0, 0.0, 10.0, 10.0);
        let d_hi = det(bx(0.0, 0.0, 10.0, 6.0), 0.9); // iou 0.6
        let d_lo = det(bx(0.0, 0.0, 10.0, 7.0), 0.8); // iou 0.7
        assert!((iou(&d_hi.bbox, &gt) - 0.6).abs() < 1e-12);
        assert!((iou(&d_lo.bbox, &gt) - 0.7).abs() < 1e-12);
        let m = match_detections(&[d_lo, d_hi], &[gt], 0.5);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 1, 0));
        assert_eq!(m.pairs[0].0, 1);
    }

    #[test]
    fn counting_confidence_examples() {
        let m = |tp, fp, fn_| MatchResult { tp, fp, fn_, pairs: vec![] };
        assert_eq!(counting_confidence(&m(9, 1, 2)), 0.75);
        assert_eq!(counting_confidence(&m(0, 0, 0)), 1.0);
        assert_eq!(counting_confidence(&m(0, 5, 0)), 0.0);
    }

    #[test]
    fn ap_worked_example() {
        let g1 = bx(0.0, 0.0, 10.0, 10.0);
        let g2 = bx(20.0, 0.0, 30.0, 10.0);
        let dets = [
            (0, det(g1, 0.9)),
            (0, det(bx(50.0, 50.0, 60.0, 60.0), 0.8)),
            (0, det(g2, 0.7)),
        ];
        let ap = average_precision(&dets, &[(0, g1), (0, g2)], 0.5).unwrap();
        let expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap - expected).abs() < 1e-12);
        assert!((ap - 0.8350).abs() < 1e-4);
    }

    #[test]
    fn ap_extremes() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let perfect = average_precision(&[(0, det(g, 0.5)), (1, det(g, 0.6))], &[(0, g), (1, g)], 0.5).unwrap();
        assert_eq!(perfect, 1.0);
        let wrong = average_precision(&[(0, det(bx(50.0, 50.0, 60.0, 60.0), 0.9))], &[(0, g)], 0.5).unwrap();
        assert_eq!(wrong, 0.0);
        assert_eq!(average_precision(&[], &[], 0.5), Err(EvalError::NoGroundTruth));
        assert_eq!(average_precision_range(&[], &[(0, g)]).unwrap(), 0.0);
    }

    #[test]
    fn ap_range_counts_passing_thresholds() {
        let g = bx(0.0, 0.0, 100.0, 100.0);
        // iou 0.52: passes 0.50 only
        let d = bx(0.0, 0.0, 100.0, 52.0);
        assert!((iou(&d, &g) - 0.52).abs() < 1e-12);
        let per: Vec<f64> = coco_thresholds()
            .iter()
            .map(|&t| average_precision(&[(0, det(d, 0.9))], &[(0, g)], t).unwrap())
            .collect();
        assert_eq!(per.iter().filter(|&&v| v == 1.0).count(), 1);
        let ap = average_precision_range(&[(0, det(d, 0.9))], &[(0, g)]).unwrap();
        assert!((ap - 0.1).abs() < 1e-12);
        assert!((average_precision_range(&[(0, det(g, 0.9))], &[(0, g)]).unwrap() - 1.0).abs() < 1e-12);
    }
}
