//! Per-frame features and the linear counting-confidence model.
//!
//! A sequence is summarised by three time series: mean box confidence `C`,
//! detection count `N` and clarity `G`. After per-sequence min-max scaling,
//! a least-squares fit of `R = w0 + wC*C + wG*G + wN*N` predicts how
//! trustworthy each frame's count is.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::clarity::average_gradient_magnitude;
use crate::detection::{count_detections, mean_box_confidence, Detection};
use crate::image::{GrayImage, ImageError};

/// Model file for the published reference weights.
pub const REFERENCE_MODEL: &str = include_str!("../models/reference.toml");

pub const FORMAT_VERSION: i64 = 1;
pub const FEATURE_ORDER: [&str; 3] = ["C", "G", "N"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("a sequence needs at least one frame")]
    EmptySequence,
    #[error("sequence lengths differ: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("sequence {0} has no counting-confidence labels")]
    MissingLabels(usize),
    #[error("no sequences given")]
    NoSets,
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} rows to fit, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("{rows} feature rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("non-finite value in training data")]
    NonFinite,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelFileError {
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("unsupported format_version {0}")]
    UnsupportedVersion(i64),
}

/// Time-ordered per-frame factors of one stirring sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFeatures {
    /// Mean box confidence per frame.
    pub c: Vec<f64>,
    /// Detection count per frame.
    pub n_count: Vec<f64>,
    /// Clarity per frame.
    pub g: Vec<f64>,
    /// Counting confidence per frame, when ground truth exists.
    pub r: Option<Vec<f64>>,
}

impl SequenceFeatures {
    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Min-max scales `c`, `n_count` and `g` within this sequence. Labels are
    /// already proportions and pass through unchanged.
    pub fn normalized(&self) -> SequenceFeatures {
        SequenceFeatures {
            c: minmax_normalize(&self.c),
            n_count: minmax_normalize(&self.n_count),
            g: minmax_normalize(&self.g),
            r: self.r.clone(),
        }
    }

    /// `(c, g, n)` per frame, in model feature order.
    pub fn rows(&self) -> Vec<[f64; 3]> {
        (0..self.len())
            .map(|i| [self.c[i], self.g[i], self.n_count[i]])
            .collect()
    }
}

/// Computes `C`, `N` and `G` per frame. `C` averages the confidences of the
/// detections that are counted, i.e. those at or above the threshold.
pub fn extract_features(
    frames: &[(GrayImage, Vec<Detection>)],
    confidence_threshold: f64,
) -> Result<SequenceFeatures, FeatureError> {
    if frames.is_empty() {
        return Err(FeatureError::EmptySequence);
    }
    let mut f = SequenceFeatures {
        c: Vec::with_capacity(frames.len()),
        n_count: Vec::with_capacity(frames.len()),
        g: Vec::with_capacity(frames.len()),
        r: None,
    };
    for (img, dets) in frames {
        let counted: Vec<Detection> = dets
            .iter()
            .filter(|d| d.confidence >= confidence_threshold)
            .copied()
            .collect();
        f.c.push(mean_box_confidence(&counted));
        f.n_count.push(count_detections(dets, confidence_threshold) as f64);
        f.g.push(average_gradient_magnitude(img)?);
    }
    Ok(f)
}

/// `(v - min) / (max - min)`; a constant series maps to 0.5 everywhere.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![0.5; values.len()];
    }
    values
        .iter()
        .map(|&v| ((v - lo) / span).clamp(0.0, 1.0))
        .collect()
}

/// Element-wise mean over sequences of equal length. Every set must carry
/// labels.
pub fn average_over_sets(sets: &[SequenceFeatures]) -> Result<SequenceFeatures, FeatureError> {
    let first = sets.first().ok_or(FeatureError::NoSets)?;
    let n = first.len();
    if n == 0 {
        return Err(FeatureError::EmptySequence);
    }
    for (i, s) in sets.iter().enumerate() {
        if s.len() != n {
            return Err(FeatureError::LengthMismatch {
                expected: n,
                got: s.len(),
            });
        }
        if s.r.is_none() {
            return Err(FeatureError::MissingLabels(i));
        }
    }
    let m = sets.len() as f64;
    let mean = |get: &dyn Fn(&SequenceFeatures) -> &Vec<f64>| -> Vec<f64> {
        (0..n)
            .map(|t| sets.iter().map(|s| get(s)[t]).sum::<f64>() / m)
            .collect()
    };
    Ok(SequenceFeatures {
        c: mean(&|s| &s.c),
        n_count: mean(&|s| &s.n_count),
        g: mean(&|s| &s.g),
        r: Some(mean(&|s| s.r.as_ref().unwrap())),
    })
}

/// Fitted linear confidence model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceModel {
    pub w0: f64,
    pub w_c: f64,
    pub w_g: f64,
    pub w_n: f64,
    /// Training residuals, kept for inspection only.
    pub residuals: Vec<f64>,
}

impl ConfidenceModel {
    /// Intercept-only model.
    pub fn constant(w0: f64) -> Self {
        ConfidenceModel {
            w0,
            w_c: 0.0,
            w_g: 0.0,
            w_n: 0.0,
            residuals: Vec::new(),
        }
    }

    /// The shipped reference weights.
    pub fn reference() -> Self {
        load_model(REFERENCE_MODEL).expect("bundled reference model is valid")
    }

    pub fn weights(&self) -> [f64; 4] {
        [self.w0, self.w_c, self.w_g, self.w_n]
    }

    /// Linear prediction before clamping.
    pub fn predict_raw(&self, c: f64, g: f64, n_norm: f64) -> f64 {
        self.w0 + self.w_c * c + self.w_g * g + self.w_n * n_norm
    }

    /// Predicted counting confidence, clamped to `[0, 1]`.
    pub fn predict(&self, c: f64, g: f64, n_norm: f64) -> f64 {
        self.predict_raw(c, g, n_norm).clamp(0.0, 1.0)
    }

    /// Predictions for every frame of an already normalized sequence.
    pub fn predict_sequence(&self, normalized: &SequenceFeatures) -> Vec<f64> {
        normalized
            .rows()
            .iter()
            .map(|[c, g, n]| self.predict(*c, *g, *n))
            .collect()
    }
}

/// Free-function form of [`ConfidenceModel::predict`].
pub fn predict_confidence(model: &ConfidenceModel, c: f64, g: f64, n_norm: f64) -> f64 {
    model.predict(c, g, n_norm)
}

/// Ordinary least squares for `r = w0 + wC*c + wG*g + wN*n`.
///
/// Solved through an SVD of the design matrix. Singular values below a
/// relative tolerance are dropped, which yields the minimum-norm solution
/// when the columns are dependent.
pub fn fit_model(rows: &[[f64; 3]], targets: &[f64]) -> Result<ConfidenceModel, FitError> {
    const UNKNOWNS: usize = 4;
    if rows.len() != targets.len() {
        return Err(FitError::LengthMismatch {
            rows: rows.len(),
            targets: targets.len(),
        });
    }
    if rows.len() < UNKNOWNS {
        return Err(FitError::TooFewRows {
            needed: UNKNOWNS,
            got: rows.len(),
        });
    }
    if rows.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }

    let m = rows.len();
    let x = DMatrix::from_fn(m, UNKNOWNS, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let y = DVector::from_column_slice(targets);

    let svd = x.clone().svd(true, true);
    let tol = svd.singular_values.max() * (m.max(UNKNOWNS) as f64) * f64::EPSILON;
    let w = svd.solve(&y, tol).map_err(|_| FitError::NonFinite)?;
    let residuals = (&y - &x * &w).iter().copied().collect();

    Ok(ConfidenceModel {
        w0: w[0],
        w_c: w[1],
        w_g: w[2],
        w_n: w[3],
        residuals,
    })
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

/// Serialises a model as a flat TOML document.
pub fn save_model(model: &ConfidenceModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format_version = {FORMAT_VERSION}");
    let _ = writeln!(
        out,
        "feature_order = [{}]",
        FEATURE_ORDER.map(|f| format!("\"{f}\"")).join(", ")
    );
    let _ = writeln!(out, "w0 = {}", fmt_f64(model.w0));
    let _ = writeln!(out, "wC = {}", fmt_f64(model.w_c));
    let _ = writeln!(out, "wG = {}", fmt_f64(model.w_g));
    let _ = writeln!(out, "wN = {}", fmt_f64(model.w_n));
    let res: Vec<String> = model.residuals.iter().map(|&v| fmt_f64(v)).collect();
    let _ = writeln!(out, "residuals = [{}]", res.join(", "));
    out
}

fn get_float(table: &toml::Table, key: &'static str) -> Result<f64, ModelFileError> {
    let v = table.get(key).ok_or(ModelFileError::MissingField(key))?;
    let f = match v {
        toml::Value::Float(f) => *f,
        toml::Value::Integer(i) => *i as f64,
        other => {
            return Err(ModelFileError::Malformed(format!(
                "`{key}` must be a number, found {}",
                other.type_str()
            )))
        }
    };
    if f.is_finite() {
        Ok(f)
    } else {
        Err(ModelFileError::NonFinite(key))
    }
}

pub fn load_model(text: &str) -> Result<ConfidenceModel, ModelFileError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ModelFileError::Malformed(e.message().to_string()))?;

    match table.get("format_version") {
        None => return Err(ModelFileError::MissingField("format_version")),
        Some(toml::Value::Integer(FORMAT_VERSION)) => {}
        Some(toml::Value::Integer(v)) => return Err(ModelFileError::UnsupportedVersion(*v)),
        Some(_) => return Err(ModelFileError::Malformed("format_version must be an integer".into())),
    }
    let order = table
        .get("feature_order")
        .ok_or(ModelFileError::MissingField("feature_order"))?;
    let order_ok = order
        .as_array()
        .map(|a| a.iter().map(|v| v.as_str()).eq(FEATURE_ORDER.iter().map(|s| Some(*s))))
        .unwrap_or(false);
    if !order_ok {
        return Err(ModelFileError::Malformed(format!(
            "feature_order must be {FEATURE_ORDER:?}"
        )));
    }

    let w0 = get_float(&table, "w0")?;
    let w_c = get_float(&table, "wC")?;
    let w_g = get_float(&table, "wG")?;
    let w_n = get_float(&table, "wN")?;

    let residuals = match table.get("residuals") {
        None => return Err(ModelFileError::MissingField("residuals")),
        Some(toml::Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                toml::Value::Float(f) if f.is_finite() => Ok(*f),
                toml::Value::Integer(i) => Ok(*i as f64),
                toml::Value::Float(_) => Err(ModelFileError::NonFinite("residuals")),
                _ => Err(ModelFileError::Malformed("residuals must be numbers".into())),
            })
            .collect::<Result<Vec<f64>, _>>()?,
        Some(_) => return Err(ModelFileError::Malformed("residuals must be an array".into())),
    };

    Ok(ConfidenceModel {
        w0,
        w_c,
        w_g,
        w_n,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_normalize(&[7.0, 7.0, 7.0]), vec![0.5; 3]);
        assert_eq!(minmax_normalize(&[1.0, 0.0]), vec![1.0, 0.0]);
    }

    #[test]
    fn averaging_examples() {
        let set = |c: Vec<f64>, r: Vec<f64>| SequenceFeatures {
            n_count: vec![0.0; c.len()],
            g: vec![0.0; c.len()],
            c,
            r: Some(r),
        };
        let a = set(vec![0.0, 1.0], vec![0.6, 0.1]);
        assert_eq!(average_over_sets(std::slice::from_ref(&a)).unwrap(), a);
        let b = set(vec![1.0, 0.0], vec![0.75, 0.1]);
        let c = set(vec![0.5, 0.5], vec![0.9, 0.1]);
        let avg = average_over_sets(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(avg.c, vec![0.5, 0.5]);
        let avg3 = average_over_sets(&[a, b, c]).unwrap();
        assert!((avg3.r.unwrap()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn averaging_rejects_bad_sets() {
        let s = SequenceFeatures { c: vec![0.0], n_count: vec![0.0], g: vec![0.0], r: Some(vec![1.0]) };
        let t = SequenceFeatures { c: vec![0.0; 2], n_count: vec![0.0; 2], g: vec![0.0; 2], r: Some(vec![1.0; 2]) };
        assert!(matches!(average_over_sets(&[s.clone(), t]), Err(FeatureError::LengthMismatch { .. })));
        let unlabeled = SequenceFeatures { r: None, ..s.clone() };
        assert_eq!(average_over_sets(&[s, unlabeled]), Err(FeatureError::MissingLabels(1)));
        assert_eq!(average_over_sets(&[]), Err(FeatureError::NoSets));
    }

    fn generic_rows() -> Vec<[f64; 3]> {
        vec![
            [0.1, 0.9, 0.3],
            [0.4, 0.2, 0.8],
            [0.7, 0.5, 0.1],
            [0.9, 0.1, 0.6],
            [0.3, 0.6, 0.9],
            [0.0, 0.4, 0.2],
            [1.0, 1.0, 0.5],
            [0.6, 0.0, 0.0],
            [0.2, 0.8, 1.0],
        ]
    }

    #[test]
    fn fit_recovers_noiseless_weights() {
        let rows = generic_rows();
        let y: Vec<f64> = rows.iter().map(|[c, g, n]| 0.3 + 0.1 * c - 0.2 * g + 0.05 * n).collect();
        let m = fit_model(&rows, &y).unwrap();
        for (got, want) in m.weights().iter().zip([0.3, 0.1, -0.2, 0.05]) {
            assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
        }
        assert_eq!(m.residuals.len(), rows.len());
        assert!(m.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn fit_constant_targets() {
        let m = fit_model(&generic_rows(), &[0.5; 9]).unwrap();
        assert!((m.w0 - 0.5).abs() < 1e-12);
        for w in [m.w_c, m.w_g, m.w_n] {
            assert!(w.abs() < 1e-12);
        }
    }

    #[test]
    fn fit_rank_deficient_is_minimum_norm() {
        // c and g identical: only their sum is identified
        let rows: Vec<[f64; 3]> = (0..6).map(|i| {
            let t = i as f64 / 5.0;
            [t, t, (i % 2) as f64]
        }).collect();
        let y: Vec<f64> = rows.iter().map(|[c, _, n]| 0.2 + 0.6 * c + 0.1 * n).collect();
        let m = fit_model(&rows, &y).unwrap();
        assert!((m.w_c - 0.3).abs() < 1e-9 && (m.w_g - 0.3).abs() < 1e-9);
        assert!((m.w0 - 0.2).abs() < 1e-9 && (m.w_n - 0.1).abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        assert_eq!(
            fit_model(&generic_rows()[..3], &[0.0; 3]),
            Err(FitError::TooFewRows { needed: 4, got: 3 })
        );
        assert!(matches!(fit_model(&generic_rows(), &[0.0; 4]), Err(FitError::LengthMismatch { .. })));
    }

    #[test]
    fn predict_examples() {
        let m = ConfidenceModel::constant(0.5);
        assert_eq!(m.predict(0.2, 0.9, 0.4), 0.5);
        let r = ConfidenceModel::reference();
        assert!((predict_confidence(&r, 1.0, 1.0, 1.0) - 0.5398).abs() < 1e-9);
        let neg = ConfidenceModel { w0: -0.2, ..ConfidenceModel::constant(0.0) };
        assert_eq!(neg.predict(0.0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn reference_file_round_trips() {
        let r = ConfidenceModel::reference();
        assert_eq!(r.weights(), [0.3756, -0.0023, 0.3205, -0.1540]);
        assert_eq!(r.residuals.len(), 9);
        assert_eq!(save_model(&r), REFERENCE_MODEL);
    }

    #[test]
    fn save_load_is_lossless() {
        let m = ConfidenceModel {
            w0: 0.1 + 0.2,
            w_c: -1e-17,
            w_g: 12345.678901234567,
            w_n: std::f64::consts::PI,
            residuals: vec![1.0 / 3.0, -2.5e-300, 0.0],
        };
        let text = save_model(&m);
        let back = load_model(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(save_model(&back), text);
    }

    #[test]
    fn load_errors_are_distinct() {
        let good = save_model(&ConfidenceModel::reference());
        let without_wg: String = good.lines().filter(|l| !l.starts_with("wG")).map(|l| format!("{l}\n")).collect();
        assert_eq!(load_model(&without_wg), Err(ModelFileError::MissingField("wG")));
        let nan = good.replace("wN = -0.154", "wN = nan");
        assert_eq!(load_model(&nan), Err(ModelFileError::NonFinite("wN")));
        assert!(matches!(load_model("w0 = = 1"), Err(ModelFileError::Malformed(_))));
        let v2 = good.replace("format_version = 1", "format_version = 2");
        assert_eq!(load_model(&v2), Err(ModelFileError::UnsupportedVersion(2)));
    }

    #[test]
    fn features_of_blank_frame() {
        let img = GrayImage::filled(4, 4, 10).unwrap();
        let f = extract_features(&[(img, vec![])], 0.25).unwrap();
        assert_eq!((f.c[0], f.n_count[0], f.g[0]), (0.0, 0.0, 0.0));
        assert!(f.r.is_none());
        assert_eq!(extract_features(&[], 0.25), Err(FeatureError::EmptySequence));
    }
}
