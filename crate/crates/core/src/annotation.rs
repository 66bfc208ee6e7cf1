//! Line-oriented annotation files.
//!
//! Detections: `class_id cx cy w h confidence`, ground truth: `class_id cx cy w h`.
//! Centers and sizes are normalized to `[0, 1]` by the image dimensions.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::detection::{BoundingBox, Detection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotationError {
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: &'static str,
        found: usize,
    },
    #[error("line {line}: cannot parse `{token}`")]
    BadNumber { line: usize, token: String },
    #[error("line {line}: {reason}")]
    BadValue { line: usize, reason: String },
}

impl AnnotationError {
    pub fn line(&self) -> usize {
        match self {
            AnnotationError::ColumnCount { line, .. }
            | AnnotationError::BadNumber { line, .. }
            | AnnotationError::BadValue { line, .. } => *line,
        }
    }

    /// The message without its line prefix.
    pub fn detail(&self) -> String {
        let full = self.to_string();
        match full.split_once(": ") {
            Some((_, rest)) => rest.to_string(),
            None => full,
        }
    }
}

struct Row {
    class_id: u32,
    bbox: BoundingBox,
    confidence: Option<f64>,
}

fn parse_rows(
    text: &str,
    width: u32,
    height: u32,
    allow_confidence: bool,
    require_confidence: bool,
) -> Result<Vec<Row>, AnnotationError> {
    let (w, h) = (width as f64, height as f64);
    let expected = match (allow_confidence, require_confidence) {
        (true, true) => "6",
        (true, false) => "5 or 6",
        _ => "5",
    };
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        let ok = match tokens.len() {
            5 => !require_confidence,
            6 => allow_confidence,
            _ => false,
        };
        if !ok {
            return Err(AnnotationError::ColumnCount {
                line,
                expected,
                found: tokens.len(),
            });
        }
        let class_id: u32 = tokens[0].parse().map_err(|_| AnnotationError::BadNumber {
            line,
            token: tokens[0].to_string(),
        })?;
        let mut vals = [0.0f64; 5];
        for (slot, tok) in vals.iter_mut().zip(&tokens[1..]) {
            *slot = tok
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| AnnotationError::BadNumber {
                    line,
                    token: tok.to_string(),
                })?;
        }
        let [cx, cy, bw, bh, conf] = vals;
        if bw < 0.0 || bh < 0.0 {
            return Err(AnnotationError::BadValue {
                line,
                reason: "negative box size".into(),
            });
        }
        let bbox = BoundingBox::from_center(cx * w, cy * h, bw * w, bh * h).map_err(|e| {
            AnnotationError::BadValue {
                line,
                reason: e.to_string(),
            }
        })?;
        let confidence = if tokens.len() == 6 {
            if !(0.0..=1.0).contains(&conf) {
                return Err(AnnotationError::BadValue {
                    line,
                    reason: format!("confidence {conf} outside [0, 1]"),
                });
            }
            Some(conf)
        } else {
            None
        };
        rows.push(Row {
            class_id,
            bbox,
            confidence,
        });
    }
    Ok(rows)
}

/// Parses a detection file for an image of the given size.
pub fn parse_detections(text: &str, width: u32, height: u32) -> Result<Vec<Detection>, AnnotationError> {
    Ok(parse_rows(text, width, height, true, true)?
        .into_iter()
        .map(|r| Detection {
            bbox: r.bbox,
            confidence: r.confidence.unwrap_or(1.0),
            class_id: r.class_id,
        })
        .collect())
}

/// Like [`parse_detections`] but also accepts five-column rows, which are
/// read with confidence 1. Lets ground-truth files stand in for detector
/// output.
pub fn parse_detections_lenient(
    text: &str,
    width: u32,
    height: u32,
) -> Result<Vec<Detection>, AnnotationError> {
    Ok(parse_rows(text, width, height, true, false)?
        .into_iter()
        .map(|r| Detection {
            bbox: r.bbox,
            confidence: r.confidence.unwrap_or(1.0),
            class_id: r.class_id,
        })
        .collect())
}

pub fn parse_ground_truth(text: &str, width: u32, height: u32) -> Result<Vec<BoundingBox>, AnnotationError> {
    Ok(parse_rows(text, width, height, false, false)?
        .into_iter()
        .map(|r| r.bbox)
        .collect())
}

fn push_box(out: &mut String, class_id: u32, b: &BoundingBox, width: u32, height: u32) {
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = b.center();
    let _ = write!(
        out,
        "{} {:.6} {:.6} {:.6} {:.6}",
        class_id,
        cx / w,
        cy / h,
        b.width() / w,
        b.height() / h
    );
}

pub fn format_detections(dets: &[Detection], width: u32, height: u32) -> String {
    let mut out = String::new();
    for d in dets {
        push_box(&mut out, d.class_id, &d.bbox, width, height);
        let _ = writeln!(out, " {:.6}", d.confidence);
    }
    out
}

pub fn format_ground_truth(boxes: &[BoundingBox], width: u32, height: u32) -> String {
    let mut out = String::new();
    for b in boxes {
        push_box(&mut out, 0, b, width, height);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::iou;
    use proptest::prelude::*;

    #[test]
    fn parses_detection_lines() {
        let text = "# comment\n0 0.5 0.5 0.1 0.2 0.9\n\n0 0.25 0.25 0.5 0.5 0.4\n";
        let dets = parse_detections(text, 100, 200).unwrap();
        assert_eq!(dets.len(), 2);
        let b = dets[0].bbox;
        assert!((b.xmin - 45.0).abs() < 1e-9 && (b.xmax - 55.0).abs() < 1e-9);
        assert!((b.ymin - 80.0).abs() < 1e-9 && (b.ymax - 120.0).abs() < 1e-9);
        assert_eq!(dets[0].confidence, 0.9);
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_detections("0 0.5 0.5 0.1 0.1 0.9\n0 0.5 x 0.1 0.1 0.9\n", 10, 10).unwrap_err();
        assert_eq!(err.line(), 2);
        let err = parse_detections("0 0.5 0.5 0.1 0.1\n", 10, 10).unwrap_err();
        assert!(matches!(err, AnnotationError::ColumnCount { line: 1, found: 5, .. }));
        let err = parse_ground_truth("0 0.5 0.5 0.1 0.1 0.3\n", 10, 10).unwrap_err();
        assert!(matches!(err, AnnotationError::ColumnCount { .. }));
        let err = parse_detections("0 0.5 0.5 0.1 0.1 1.3\n", 10, 10).unwrap_err();
        assert!(matches!(err, AnnotationError::BadValue { .. }));
    }

    #[test]
    fn lenient_accepts_ground_truth_rows() {
        let dets = parse_detections_lenient("0 0.5 0.5 0.1 0.1\n", 10, 10).unwrap();
        assert_eq!(dets[0].confidence, 1.0);
    }

    proptest! {
        #[test]
        fn detection_text_round_trip(
            cx in 0.05..0.95f64, cy in 0.05..0.95f64,
            w in 0.01..0.1f64, h in 0.01..0.1f64, conf in 0.0..=1.0f64,
        ) {
            let (iw, ih) = (640u32, 480u32);
            let b = BoundingBox::from_center(cx * 640.0, cy * 480.0, w * 640.0, h * 480.0).unwrap();
            let d = Detection::new(b, conf).unwrap();
            let text = format_detections(&[d], iw, ih);
            let back = parse_detections(&text, iw, ih).unwrap();
            prop_assert_eq!(back.len(), 1);
            prop_assert!(iou(&back[0].bbox, &b) > 0.999);
            prop_assert!((back[0].confidence - conf).abs() <= 5e-7);
        }
    }
}
