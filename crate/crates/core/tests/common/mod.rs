//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's matching or AP code.
#![allow(dead_code)]

use aphid_count::{BoundingBox, Detection};

pub fn iou_oracle(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let h = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = w * h;
    let area = |r: &BoundingBox| (r.xmax - r.xmin) * (r.ymax - r.ymin);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// True-positive flag per detection of one image: detections in descending
/// confidence (lower index first on ties) each take the free ground truth
/// with the highest IoU at or above `thr` (lower index first on ties).
pub fn tp_flags(dets: &[Detection], gts: &[BoundingBox], thr: f64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // insertion sort keeps the rule explicit
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && dets[order[j]].confidence > dets[order[j - 1]].confidence {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let mut free = vec![true; gts.len()];
    let mut flags = vec![false; dets.len()];
    for d in order {
        let mut best = None;
        let mut best_iou = thr;
        for g in 0..gts.len() {
            let v = iou_oracle(&dets[d].bbox, &gts[g]);
            if free[g] && v >= best_iou && best.map_or(true, |_| v > best_iou) {
                best = Some(g);
                best_iou = v;
            }
        }
        if let Some(g) = best {
            free[g] = false;
            flags[d] = true;
        }
    }
    flags
}

/// 101-point interpolated AP from the raw precision/recall list: at each
/// recall level take the best precision of any rank whose recall reaches it.
pub fn ap_oracle(dets: &[(usize, Detection)], gts: &[(usize, BoundingBox)], thr: f64) -> f64 {
    let mut flags = vec![false; dets.len()];
    let mut images: Vec<usize> = dets.iter().map(|d| d.0).chain(gts.iter().map(|g| g.0)).collect();
    images.sort();
    images.dedup();
    for img in images {
        let idx: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].0 == img).collect();
        let local: Vec<Detection> = idx.iter().map(|&i| dets[i].1).collect();
        let g: Vec<BoundingBox> = gts.iter().filter(|x| x.0 == img).map(|x| x.1).collect();
        for (k, f) in tp_flags(&local, &g, thr).into_iter().enumerate() {
            flags[idx[k]] = f;
        }
    }
    let mut ranked: Vec<usize> = (0..dets.len()).collect();
    ranked.sort_by(|&a, &b| {
        dets[b].1.confidence
            .partial_cmp(&dets[a].1.confidence)
            .unwrap()
            .then(dets[a].0.cmp(&dets[b].0))
            .then(a.cmp(&b))
    });
    let mut points = Vec::new();
    let (mut tp, mut seen) = (0.0, 0.0);
    for i in ranked {
        seen += 1.0;
        if flags[i] {
            tp += 1.0;
        }
        points.push((tp / gts.len() as f64, tp / seen));
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let level = k as f64 / 100.0;
        let best = points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    sum / 101.0
}

/// Solves the 4x4 normal equations by Gaussian elimination with partial
/// pivoting.
pub fn ols_normal_equations(rows: &[[f64; 3]], y: &[f64]) -> [f64; 4] {
    let mut a = [[0.0; 5]; 4];
    for (r, &t) in rows.iter().zip(y) {
        let x = [1.0, r[0], r[1], r[2]];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] += x[i] * x[j];
            }
            a[i][4] += x[i] * t;
        }
    }
    for col in 0..4 {
        let piv = (col..4).max_by(|&p, &q| a[p][col].abs().partial_cmp(&a[q][col].abs()).unwrap()).unwrap();
        a.swap(col, piv);
        for r in 0..4 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..5 {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    std::array::from_fn(|i| a[i][4] / a[i][i])
}

/// Largest |X^T (y - X w)| entry, with X carrying a leading ones column.
pub fn normal_equation_residual(rows: &[[f64; 3]], y: &[f64], w: [f64; 4]) -> f64 {
    let mut g = [0.0; 4];
    for (r, &t) in rows.iter().zip(y) {
        let x = [1.0, r[0], r[1], r[2]];
        let e = t - (w[0] + w[1] * r[0] + w[2] * r[1] + w[3] * r[2]);
        for i in 0..4 {
            g[i] += x[i] * e;
        }
    }
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}
