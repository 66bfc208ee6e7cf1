//! Synthetic stirring sequences with known ground truth.
//!
//! A trap holds `true_count` insects. Each one is either visible on the
//! surface or hidden. During the stirring window hidden insects surface at a
//! fixed per-frame rate, and visible ones sink again at another rate on every
//! frame after the first. Frames are rendered as a bright disk with dark
//! blobs, box-blurred according to a rise-peak-fall schedule, and perturbed
//! with Gaussian noise. A noisy detector then misses insects and invents
//! false positives at rates that grow with blur.
//!
//! Everything is driven by one seeded ChaCha stream, so a configuration and
//! seed always reproduce the same sequence bit for bit.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use thiserror::Error;

use crate::detection::{BoundingBox, Detection};
use crate::image::{box_blur_real, quantize, GrayImage};

/// Gray level outside the trap.
pub const BACKGROUND_LEVEL: f64 = 70.0;
/// Gray level of the trap water.
pub const TRAP_LEVEL: f64 = 215.0;
/// Gray level at the center of an insect blob.
pub const INSECT_LEVEL: f64 = 45.0;

const PLACEMENT_RETRIES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("could not place {count} non-overlapping insects in the trap")]
    PlacementFailed { count: usize },
}

/// Noise model of the simulated detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel {
    pub miss_base: f64,
    /// Added to the miss probability per unit of blur radius.
    pub miss_blur_coeff: f64,
    /// Poisson mean of false positives on a sharp frame.
    pub fp_base: f64,
    pub fp_blur_coeff: f64,
    /// Mean confidence of a true detection on a sharp frame.
    pub confidence_base: f64,
    /// Decrease of the mean true-detection confidence per unit of blur.
    pub confidence_blur_coeff: f64,
    /// Mean confidence of a false positive.
    pub fp_confidence: f64,
    /// Standard deviation of confidences.
    pub confidence_spread: f64,
    /// Standard deviation of box corner jitter, in pixels.
    pub jitter: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            miss_base: 0.05,
            miss_blur_coeff: 0.05,
            fp_base: 0.3,
            fp_blur_coeff: 2.0,
            confidence_base: 0.8,
            confidence_blur_coeff: 0.01,
            fp_confidence: 0.6,
            confidence_spread: 0.08,
            jitter: 0.4,
        }
    }
}

impl DetectorModel {
    /// Detector that reports every visible insect exactly.
    pub fn perfect() -> Self {
        DetectorModel {
            miss_base: 0.0,
            miss_blur_coeff: 0.0,
            fp_base: 0.0,
            fp_blur_coeff: 0.0,
            confidence_base: 0.9,
            confidence_blur_coeff: 0.0,
            fp_confidence: 0.5,
            confidence_spread: 0.0,
            jitter: 0.0,
        }
    }

    pub fn miss_probability(&self, blur: f64) -> f64 {
        (self.miss_base + self.miss_blur_coeff * blur).clamp(0.0, 1.0)
    }

    pub fn false_positive_mean(&self, blur: f64) -> f64 {
        (self.fp_base + self.fp_blur_coeff * blur).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub trap_center: (f64, f64),
    pub trap_radius: f64,
    pub true_count: usize,
    pub hidden_fraction_initial: f64,
    pub frames: usize,
    /// First and last frame (inclusive) during which hidden insects surface.
    pub stir_window: Option<(usize, usize)>,
    pub surface_rate: f64,
    pub resubmerge_rate: f64,
    /// Blur radius per frame. Rendering rounds to whole pixels.
    pub blur_schedule: Vec<f64>,
    pub detector: DetectorModel,
    /// Radius of a rendered insect, in pixels.
    pub insect_radius: f64,
    /// Standard deviation of additive pixel noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Peak blur radius of the default schedule.
pub const DEFAULT_PEAK_BLUR: f64 = 4.0;

/// Stirring covers every frame except the first and the last.
pub fn default_stir_window(frames: usize) -> Option<(usize, usize)> {
    (frames >= 3).then(|| (1, frames - 2))
}

/// Blur that is zero outside the stirring window, rising linearly to `peak`
/// at its middle frame and falling back symmetrically.
pub fn default_blur_schedule(frames: usize, window: Option<(usize, usize)>, peak: f64) -> Vec<f64> {
    let Some((start, end)) = window else {
        return vec![0.0; frames];
    };
    let mid = (start + end) as f64 / 2.0;
    let half = (end - start) as f64 / 2.0 + 1.0;
    (0..frames)
        .map(|t| {
            if t < start || t > end {
                0.0
            } else {
                peak * (1.0 - (t as f64 - mid).abs() / half)
            }
        })
        .collect()
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::with_frames(9)
    }
}

impl SimConfig {
    /// Default configuration for a sequence of `frames` images.
    pub fn with_frames(frames: usize) -> Self {
        let window = default_stir_window(frames);
        SimConfig {
            image_width: 256,
            image_height: 256,
            trap_center: (128.0, 128.0),
            trap_radius: 118.0,
            true_count: 20,
            hidden_fraction_initial: 0.6,
            frames,
            stir_window: window,
            surface_rate: 0.6,
            resubmerge_rate: 0.03,
            blur_schedule: default_blur_schedule(frames, window, DEFAULT_PEAK_BLUR),
            detector: DetectorModel::default(),
            insect_radius: 3.0,
            noise_sigma: 2.0,
            seed: 0,
        }
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_stirring(&self, frame: usize) -> bool {
        self.stir_window
            .is_some_and(|(a, b)| frame >= a && frame <= b)
    }

    /// Frame with the largest scheduled blur (first one on ties).
    pub fn peak_blur_frame(&self) -> usize {
        let mut best = 0;
        for (i, &b) in self.blur_schedule.iter().enumerate() {
            if b > self.blur_schedule[best] {
                best = i;
            }
        }
        best
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.image_width < 2 || self.image_height < 2 {
            return bad("image must be at least 2x2".into());
        }
        if self.blur_schedule.len() != self.frames {
            return bad(format!(
                "blur schedule has {} entries for {} frames",
                self.blur_schedule.len(),
                self.frames
            ));
        }
        if self.blur_schedule.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("blur radii must be finite and non-negative".into());
        }
        let d = &self.detector;
        for (name, p) in [
            ("hidden_fraction_initial", self.hidden_fraction_initial),
            ("surface_rate", self.surface_rate),
            ("resubmerge_rate", self.resubmerge_rate),
            ("miss_base", d.miss_base),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        for (name, v) in [
            ("miss_blur_coeff", d.miss_blur_coeff),
            ("fp_base", d.fp_base),
            ("fp_blur_coeff", d.fp_blur_coeff),
            ("confidence_spread", d.confidence_spread),
            ("jitter", d.jitter),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if !(self.insect_radius > 0.0) {
            return bad("insect radius must be positive".into());
        }
        let (cx, cy) = self.trap_center;
        let r = self.trap_radius;
        if !(r > self.insect_radius * 2.0)
            || cx - r < 0.0
            || cy - r < 0.0
            || cx + r > self.image_width as f64
            || cy + r > self.image_height as f64
        {
            return bad("trap must fit inside the image and hold an insect".into());
        }
        if let Some((a, b)) = self.stir_window {
            if a > b || b >= self.frames {
                return bad(format!("stir window {a}..={b} outside 0..{}", self.frames));
            }
        }
        Ok(())
    }

    fn insect_box(&self, (x, y): (f64, f64)) -> BoundingBox {
        let r = self.insect_radius;
        BoundingBox {
            xmin: x - r,
            ymin: y - r,
            xmax: x + r,
            ymax: y + r,
        }
    }

    /// Radius within which an insect center keeps its whole box in the trap.
    fn placement_radius(&self) -> f64 {
        self.trap_radius - self.insect_radius * std::f64::consts::SQRT_2 - 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSequence {
    pub frames: Vec<GrayImage>,
    /// Boxes of the insects visible in each frame.
    pub visible_gt: Vec<Vec<BoundingBox>>,
    pub detections: Vec<Vec<Detection>>,
    pub true_count: usize,
    /// Centers of all insects, visible or not.
    pub positions: Vec<(f64, f64)>,
}

impl SimulatedSequence {
    pub fn visible_counts(&self) -> Vec<usize> {
        self.visible_gt.iter().map(Vec::len).collect()
    }
}

fn uniform_in_disk(rng: &mut impl Rng, center: (f64, f64), radius: f64) -> (f64, f64) {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    (center.0 + r * theta.cos(), center.1 + r * theta.sin())
}

fn place_insects(config: &SimConfig, rng: &mut impl Rng) -> Result<Vec<(f64, f64)>, SimError> {
    let min_dist = 2.0 * config.insect_radius + 2.0;
    let radius = config.placement_radius();
    let mut placed: Vec<(f64, f64)> = Vec::with_capacity(config.true_count);
    for _ in 0..config.true_count {
        let mut ok = false;
        for _ in 0..PLACEMENT_RETRIES {
            let p = uniform_in_disk(rng, config.trap_center, radius);
            if placed
                .iter()
                .all(|q| (p.0 - q.0).hypot(p.1 - q.1) >= min_dist)
            {
                placed.push(p);
                ok = true;
                break;
            }
        }
        if !ok {
            return Err(SimError::PlacementFailed {
                count: config.true_count,
            });
        }
    }
    Ok(placed)
}

/// The empty trap: background with a bright disk.
pub fn trap_template(config: &SimConfig) -> Vec<f64> {
    let (w, h) = (config.image_width as usize, config.image_height as usize);
    let (cx, cy) = config.trap_center;
    let mut canvas = vec![BACKGROUND_LEVEL; w * h];
    for y in 0..h {
        for x in 0..w {
            let d = (x as f64 + 0.5 - cx).hypot(y as f64 + 0.5 - cy);
            if d <= config.trap_radius {
                canvas[y * w + x] = TRAP_LEVEL;
            }
        }
    }
    canvas
}

/// Draws the visible insects on the trap without blur or noise. Blobs are
/// darkest at their center.
pub fn draw_insects(config: &SimConfig, positions: &[(f64, f64)]) -> Vec<f64> {
    let (w, h) = (config.image_width as usize, config.image_height as usize);
    let mut canvas = trap_template(config);
    let r = config.insect_radius;
    for &(px, py) in positions {
        let x0 = (px - r).floor().max(0.0) as usize;
        let y0 = (py - r).floor().max(0.0) as usize;
        let x1 = ((px + r).ceil() as usize).min(w - 1);
        let y1 = ((py + r).ceil() as usize).min(h - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = (x as f64 + 0.5 - px).hypot(y as f64 + 0.5 - py);
                if d <= r {
                    let shade = INSECT_LEVEL + (TRAP_LEVEL - INSECT_LEVEL) * 0.5 * (d / r).powi(2);
                    let px_ref = &mut canvas[y * w + x];
                    *px_ref = px_ref.min(shade);
                }
            }
        }
    }
    canvas
}

/// Renders one frame: insects, box blur, then additive noise.
pub fn render_frame(
    positions: &[(f64, f64)],
    blur_radius: f64,
    config: &SimConfig,
    rng: &mut impl Rng,
) -> GrayImage {
    let (w, h) = (config.image_width as usize, config.image_height as usize);
    let canvas = draw_insects(config, positions);
    let mut blurred = box_blur_real(w, h, &canvas, blur_radius.round() as usize);
    if config.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
        for v in blurred.iter_mut() {
            *v += noise.sample(rng);
        }
    }
    GrayImage::new(w, h, blurred.into_iter().map(quantize).collect()).expect("config dimensions")
}

fn noisy_confidence(mean: f64, spread: f64, rng: &mut impl Rng) -> f64 {
    let v = if spread > 0.0 {
        mean + Normal::new(0.0, spread).expect("validated spread").sample(rng)
    } else {
        mean
    };
    v.clamp(0.0, 1.0)
}

fn jittered(b: &BoundingBox, jitter: f64, rng: &mut impl Rng) -> BoundingBox {
    if jitter <= 0.0 {
        return *b;
    }
    let n = Normal::new(0.0, jitter).expect("validated jitter");
    let (x0, x1) = (b.xmin + n.sample(rng), b.xmax + n.sample(rng));
    let (y0, y1) = (b.ymin + n.sample(rng), b.ymax + n.sample(rng));
    BoundingBox {
        xmin: x0.min(x1),
        ymin: y0.min(y1),
        xmax: x0.max(x1),
        ymax: y0.max(y1),
    }
}

/// Noisy detections for one frame.
pub fn simulate_detector(
    visible_gt: &[BoundingBox],
    blur_radius: f64,
    config: &SimConfig,
    rng: &mut impl Rng,
) -> Vec<Detection> {
    let d = &config.detector;
    let p_miss = d.miss_probability(blur_radius);
    let mean_conf = d.confidence_base - d.confidence_blur_coeff * blur_radius;
    let mut out = Vec::new();
    for gt in visible_gt {
        if rng.random::<f64>() < p_miss {
            continue;
        }
        out.push(Detection {
            bbox: jittered(gt, d.jitter, rng),
            confidence: noisy_confidence(mean_conf, d.confidence_spread, rng),
            class_id: 0,
        });
    }
    let fp_mean = d.false_positive_mean(blur_radius);
    if fp_mean > 0.0 {
        let k = Poisson::new(fp_mean).expect("positive mean").sample(rng) as usize;
        for _ in 0..k {
            let c = uniform_in_disk(rng, config.trap_center, config.placement_radius());
            out.push(Detection {
                bbox: jittered(&config.insect_box(c), d.jitter, rng),
                confidence: noisy_confidence(d.fp_confidence, d.confidence_spread, rng),
                class_id: 0,
            });
        }
    }
    out
}

/// Generates a full sequence from `config.seed`.
pub fn simulate_sequence(config: &SimConfig) -> Result<SimulatedSequence, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let positions = place_insects(config, &mut rng)?;
    let mut visible: Vec<bool> = positions
        .iter()
        .map(|_| rng.random::<f64>() >= config.hidden_fraction_initial)
        .collect();

    let mut seq = SimulatedSequence {
        frames: Vec::with_capacity(config.frames),
        visible_gt: Vec::with_capacity(config.frames),
        detections: Vec::with_capacity(config.frames),
        true_count: config.true_count,
        positions: positions.clone(),
    };

    for t in 0..config.frames {
        if t > 0 {
            let stirring = config.is_stirring(t);
            for v in visible.iter_mut() {
                let u = rng.random::<f64>();
                if *v {
                    if u < config.resubmerge_rate {
                        *v = false;
                    }
                } else if stirring && u < config.surface_rate {
                    *v = true;
                }
            }
        }
        let shown: Vec<(f64, f64)> = positions
            .iter()
            .zip(&visible)
            .filter(|(_, &v)| v)
            .map(|(p, _)| *p)
            .collect();
        let blur = config.blur_schedule[t];
        let frame = render_frame(&shown, blur, config, &mut rng);
        let gt: Vec<BoundingBox> = shown.iter().map(|&p| config.insect_box(p)).collect();
        let dets = simulate_detector(&gt, blur, config, &mut rng);
        seq.frames.push(frame);
        seq.visible_gt.push(gt);
        seq.detections.push(dets);
    }
    Ok(seq)
}
