//! End-to-end glue: raw frames to features, training data to a model, and a
//! model plus a new sequence to count estimates.

use thiserror::Error;

use crate::detection::{
    BoundingBox, Detection, DetectionError, SoftNmsMethod, SoftNmsParams, Suppression,
    DEFAULT_CONFIDENCE_THRESHOLD, DEFAULT_IOU_THRESHOLD, DEFAULT_SCORE_THRESHOLD, DEFAULT_SIGMA,
};
use crate::evaluation::{counting_confidence, match_detections};
use crate::fusion::{fuse_counts_with_temperature, max_count, static_count, CountEstimate, FusionError};
use crate::image::GrayImage;
use crate::model::{
    average_over_sets, extract_features, fit_model, ConfidenceModel, FeatureError, FitError,
    SequenceFeatures,
};
use crate::sim::{simulate_sequence, SimConfig, SimError, SimulatedSequence};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("training sequence {0} has no ground truth")]
    Unlabeled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    /// Post-processing applied to each frame's raw detections.
    pub suppression: Suppression,
    pub confidence_threshold: f64,
    /// IoU needed for a detection to match ground truth.
    pub match_iou: f64,
    pub temperature: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            suppression: Suppression::Soft(SoftNmsParams {
                method: SoftNmsMethod::Gaussian,
                sigma: DEFAULT_SIGMA,
                iou_threshold: DEFAULT_IOU_THRESHOLD,
                score_threshold: DEFAULT_SCORE_THRESHOLD,
            }),
            confidence_threshold: DEFAULT_CONFIDENCE_THRESHOLD,
            match_iou: DEFAULT_IOU_THRESHOLD,
            temperature: 1.0,
        }
    }
}

/// One captured image with its detector output and optional annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: GrayImage,
    pub detections: Vec<Detection>,
    pub ground_truth: Option<Vec<BoundingBox>>,
}

impl SimulatedSequence {
    pub fn to_frames(&self) -> Vec<Frame> {
        self.frames
            .iter()
            .zip(&self.detections)
            .zip(&self.visible_gt)
            .map(|((img, dets), gt)| Frame {
                image: img.clone(),
                detections: dets.clone(),
                ground_truth: Some(gt.clone()),
            })
            .collect()
    }
}

/// Suppressed detections that pass the counting threshold.
pub fn counted_detections(dets: &[Detection], params: &PipelineParams) -> Result<Vec<Detection>, PipelineError> {
    Ok(params
        .suppression
        .apply(dets)?
        .into_iter()
        .filter(|d| d.confidence >= params.confidence_threshold)
        .collect())
}

/// Features of a sequence. Counting-confidence labels are attached when
/// every frame carries ground truth.
pub fn sequence_features(frames: &[Frame], params: &PipelineParams) -> Result<SequenceFeatures, PipelineError> {
    let mut processed = Vec::with_capacity(frames.len());
    let mut labels = Vec::with_capacity(frames.len());
    for f in frames {
        let counted = counted_detections(&f.detections, params)?;
        if let Some(gt) = &f.ground_truth {
            labels.push(counting_confidence(&match_detections(&counted, gt, params.match_iou)));
        }
        processed.push((f.image.clone(), counted));
    }
    let mut feats = extract_features(&processed, params.confidence_threshold)?;
    if labels.len() == frames.len() {
        feats.r = Some(labels);
    }
    Ok(feats)
}

/// Regression rows and targets from labelled sequences. Each sequence is
/// min-max normalized on its own; with `average` the normalized sets are
/// then averaged per time index, otherwise every frame is its own row.
pub fn training_data(
    sets: &[SequenceFeatures],
    average: bool,
) -> Result<(Vec<[f64; 3]>, Vec<f64>), PipelineError> {
    if let Some(i) = sets.iter().position(|s| s.r.is_none()) {
        return Err(PipelineError::Unlabeled(i));
    }
    let normalized: Vec<SequenceFeatures> = sets.iter().map(SequenceFeatures::normalized).collect();
    if average {
        let avg = average_over_sets(&normalized)?;
        let targets = avg.r.clone().expect("averaged labels");
        Ok((avg.rows(), targets))
    } else {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for s in &normalized {
            rows.extend(s.rows());
            targets.extend(s.r.as_ref().expect("checked above"));
        }
        Ok((rows, targets))
    }
}

pub fn fit_sequences(sets: &[SequenceFeatures], average: bool) -> Result<ConfidenceModel, PipelineError> {
    let (rows, targets) = training_data(sets, average)?;
    Ok(fit_model(&rows, &targets)?)
}

/// The three count estimates for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CountReport {
    pub static_count: u64,
    pub max_count: u64,
    pub fused: CountEstimate,
    pub predicted_confidence: Vec<f64>,
}

pub fn frame_counts(features: &SequenceFeatures) -> Vec<u64> {
    features.n_count.iter().map(|&n| n.round() as u64).collect()
}

/// Predicts per-frame confidence from normalized features, then fuses the
/// raw counts.
pub fn estimate_count(
    model: &ConfidenceModel,
    features: &SequenceFeatures,
    params: &PipelineParams,
) -> Result<CountReport, PipelineError> {
    let predicted = model.predict_sequence(&features.normalized());
    let counts = frame_counts(features);
    let fused = fuse_counts_with_temperature(&predicted, &features.n_count, params.temperature)?;
    Ok(CountReport {
        static_count: static_count(&counts)?,
        max_count: max_count(&counts)?,
        fused,
        predicted_confidence: predicted,
    })
}

/// Outcome of one held-out sequence in a simulated train/test protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutcome {
    pub true_count: u64,
    pub report: CountReport,
}

/// Seed of sequence `index` under master seed `master`.
pub fn sequence_seed(master: u64, index: u64) -> u64 {
    master.wrapping_mul(1_000).wrapping_add(index)
}

/// Simulates `train + test` sequences, fits a model on the first `train`
/// and reports count estimates for the remaining `test`.
pub fn run_protocol(
    base: &SimConfig,
    master_seed: u64,
    train: usize,
    test: usize,
    average: bool,
    params: &PipelineParams,
) -> Result<(ConfidenceModel, Vec<ProtocolOutcome>), ProtocolError> {
    let mut sets = Vec::with_capacity(train + test);
    let mut truths = Vec::with_capacity(train + test);
    for k in 0..(train + test) as u64 {
        let seq = simulate_sequence(&base.clone().seeded(sequence_seed(master_seed, k)))?;
        sets.push(sequence_features(&seq.to_frames(), params)?);
        truths.push(seq.true_count as u64);
    }
    let model = fit_sequences(&sets[..train], average)?;
    let outcomes = sets[train..]
        .iter()
        .zip(&truths[train..])
        .map(|(f, &t)| {
            Ok(ProtocolOutcome {
                true_count: t,
                report: estimate_count(&model, f, params)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok((model, outcomes))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_present_only_with_ground_truth() {
        let seq = simulate_sequence(&SimConfig::default().seeded(1)).unwrap();
        let mut frames = seq.to_frames();
        let f = sequence_features(&frames, &PipelineParams::default()).unwrap();
        assert_eq!(f.len(), 9);
        assert!(f.r.as_ref().unwrap().iter().all(|r| (0.0..=1.0).contains(r)));
        frames[3].ground_truth = None;
        assert!(sequence_features(&frames, &PipelineParams::default()).unwrap().r.is_none());
    }

    #[test]
    fn averaged_and_flat_training_data() {
        let params = PipelineParams::default();
        let sets: Vec<SequenceFeatures> = (0..3)
            .map(|s| sequence_features(&simulate_sequence(&SimConfig::default().seeded(s)).unwrap().to_frames(), &params).unwrap())
            .collect();
        let (rows, targets) = training_data(&sets, true).unwrap();
        assert_eq!((rows.len(), targets.len()), (9, 9));
        let (rows, _) = training_data(&sets, false).unwrap();
        assert_eq!(rows.len(), 27);
        assert!(rows.iter().flatten().all(|v| (0.0..=1.0).contains(v)));

        let mut unlabeled = sets.clone();
        unlabeled[2].r = None;
        assert_eq!(training_data(&unlabeled, true), Err(PipelineError::Unlabeled(2)));
    }

    #[test]
    fn single_frame_report() {
        let f = SequenceFeatures { c: vec![0.8], n_count: vec![7.0], g: vec![3.0], r: None };
        let r = estimate_count(&ConfidenceModel::reference(), &f, &PipelineParams::default()).unwrap();
        assert_eq!((r.static_count, r.max_count, r.fused.value_int), (7, 7, 7));
        assert_eq!(r.fused.value_real, 7.0);
    }
}
