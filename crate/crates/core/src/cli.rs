//! The `aphid-count` command line.
//!
//! Every subcommand writes newline-terminated, fixed-column text. Exit status
//! is 0 on success, 1 on a usage error and 2 when an input file is missing or
//! malformed (the message names the file and, where possible, the line).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::annotation::{format_detections, format_ground_truth, parse_detections_lenient, parse_ground_truth};
use crate::detection::{
    BoundingBox, Detection, SoftNmsMethod, SoftNmsParams, Suppression, DEFAULT_CONFIDENCE_THRESHOLD,
    DEFAULT_IOU_THRESHOLD, DEFAULT_SCORE_THRESHOLD, DEFAULT_SIGMA,
};
use crate::evaluation::{average_precision, average_precision_range};
use crate::manifest::{read_bytes, read_text, write_file, DataError, GridManifest, SequenceManifest};
use crate::model::{load_model, save_model, ConfidenceModel, SequenceFeatures};
use crate::pipeline::{estimate_count, fit_sequences, sequence_features, sequence_seed, PipelineParams};
use crate::pnm;
use crate::report::{count_report, features_csv, features_svg};
use crate::sim::{simulate_sequence, SimConfig};
use crate::tiling::{boxes_in_tile, merge_tiles, plan_tiles, DEFAULT_OVERLAP, DEFAULT_TILE_SIZE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "aphid-count", version, about = "Count insects in stirred water-trap image sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate seeded synthetic stirring sequences with ground truth.
    Simulate(SimulateArgs),
    /// Cut an image (and its annotation) into overlapping tiles.
    Slice(SliceArgs),
    /// Combine per-tile detection files into image-level detections.
    Merge(MergeArgs),
    /// Per-frame features of one sequence as CSV.
    Features(FeaturesArgs),
    /// Fit the confidence model on labelled sequences.
    Fit(FitArgs),
    /// Static, maximum and fused counts for one sequence.
    Count(CountArgs),
    /// Average precision of detections against ground truth.
    EvalAp(EvalApArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SoftNmsChoice {
    /// Plain non-maximum suppression.
    Off,
    Linear,
    Gaussian,
}

fn suppression(choice: SoftNmsChoice, iou_threshold: f64, sigma: f64) -> Suppression {
    let soft = |method| {
        Suppression::Soft(SoftNmsParams {
            method,
            sigma,
            iou_threshold,
            score_threshold: DEFAULT_SCORE_THRESHOLD,
        })
    };
    match choice {
        SoftNmsChoice::Off => Suppression::Hard { iou_threshold },
        SoftNmsChoice::Linear => soft(SoftNmsMethod::Linear),
        SoftNmsChoice::Gaussian => soft(SoftNmsMethod::Gaussian),
    }
}

/// Post-processing shared by the sequence commands.
#[derive(Debug, Args)]
struct PostArgs {
    /// Minimum confidence for a detection to be counted.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE_THRESHOLD)]
    conf_threshold: f64,
    /// IoU used for suppression and for matching against ground truth.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    #[arg(long, value_enum, default_value_t = SoftNmsChoice::Gaussian)]
    softnms: SoftNmsChoice,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

impl PostArgs {
    fn params(&self) -> PipelineParams {
        PipelineParams {
            suppression: suppression(self.softnms, self.iou_threshold, self.sigma),
            confidence_threshold: self.conf_threshold,
            match_iou: self.iou_threshold,
            ..PipelineParams::default()
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 9)]
    frames: usize,
    #[arg(long, default_value_t = 20)]
    true_count: usize,
    /// Fraction of insects hidden before stirring starts.
    #[arg(long, default_value_t = 0.6)]
    hidden_fraction: f64,
    /// Number of sequences. With more than one, sequence k goes to
    /// `set_<k>/` and is seeded from `--seed` and k.
    #[arg(long, default_value_t = 1)]
    sets: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SliceArgs {
    /// Image to cut (PGM or PPM).
    image: PathBuf,
    /// Annotation file for the image; tiles get remapped copies.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    tile_size: u32,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    overlap: f64,
    /// Skip tiles that contain no annotated box.
    #[arg(long, requires = "gt")]
    filter_nonempty: bool,
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// Grid manifest written by `slice`.
    #[arg(long)]
    grid: PathBuf,
    /// Directory holding `<tile>.txt` detection files. Defaults to the grid's
    /// directory. Missing files count as empty tiles.
    #[arg(long)]
    tiles_dir: Option<PathBuf>,
    /// Output detection file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    #[arg(long, value_enum, default_value_t = SoftNmsChoice::Off)]
    softnms: SoftNmsChoice,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    manifest: PathBuf,
    /// Write the CSV to this file instead of stdout (`-` for stdout).
    #[arg(long, num_args = 0..=1, default_missing_value = "-")]
    csv: Option<PathBuf>,
    /// Also draw the curves as SVG.
    #[arg(long)]
    svg_plot: Option<PathBuf>,
    /// Add an `R_pred` column from this model.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    post: PostArgs,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Sequence manifests; every frame needs ground truth.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    model: PathBuf,
    /// Fit on the per-frame average of the normalized sequences instead of
    /// on every frame.
    #[arg(long)]
    average_sets: bool,
    #[command(flatten)]
    post: PostArgs,
}

#[derive(Debug, Args)]
struct CountArgs {
    manifest: PathBuf,
    /// Model file; the bundled reference model when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    /// File holding the manual count, reported as an extra column.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    post: PostArgs,
}

#[derive(Debug, Args)]
struct EvalApArgs {
    /// Sequence manifests; every frame needs ground truth.
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = SoftNmsChoice::Gaussian)]
    softnms: SoftNmsChoice,
    /// IoU for suppression.
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

type CmdResult = Result<(), DataError>;

/// Runs the command line `argv` (program name first) and returns the exit
/// status.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, stdout),
        Command::Slice(a) => slice(&a, stdout),
        Command::Merge(a) => merge(&a, stdout),
        Command::Features(a) => features(&a, stdout),
        Command::Fit(a) => fit(&a, stdout),
        Command::Count(a) => count(&a, stdout),
        Command::EvalAp(a) => eval_ap(&a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_DATA
        }
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> CmdResult {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| DataError::new("<stdout>", None, e.to_string()))
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| DataError::new(dir, None, e.to_string()))
}

fn simulate(a: &SimulateArgs, stdout: &mut dyn Write) -> CmdResult {
    let mut base = SimConfig::with_frames(a.frames);
    base.true_count = a.true_count;
    base.hidden_fraction_initial = a.hidden_fraction;
    let mut summary = String::from("sequence,seed,true_count,manifest\n");
    for k in 0..a.sets {
        let (dir, seed) = if a.sets == 1 {
            (a.out_dir.clone(), a.seed)
        } else {
            (a.out_dir.join(format!("set_{k}")), sequence_seed(a.seed, k as u64))
        };
        let seq = simulate_sequence(&base.clone().seeded(seed))
            .map_err(|e| DataError::new(&a.out_dir, None, e.to_string()))?;
        create_dir(&dir)?;
        let (w, h) = (base.image_width, base.image_height);
        let mut entries = Vec::with_capacity(seq.frames.len());
        for (t, img) in seq.frames.iter().enumerate() {
            let stem = format!("frame_{t:02}");
            let (img_name, det_name, gt_name) =
                (format!("{stem}.pgm"), format!("{stem}.det.txt"), format!("{stem}.gt.txt"));
            write_file(&dir.join(&img_name), pnm::encode_p5(img))?;
            write_file(&dir.join(&det_name), format_detections(&seq.detections[t], w, h))?;
            write_file(&dir.join(&gt_name), format_ground_truth(&seq.visible_gt[t], w, h))?;
            entries.push((t, img_name, det_name, Some(gt_name)));
        }
        let manifest = dir.join("manifest.txt");
        write_file(&manifest, SequenceManifest::format(&entries))?;
        write_file(&dir.join("truth"), format!("{}\n", seq.true_count))?;
        summary.push_str(&format!("{k},{seed},{},{}\n", seq.true_count, manifest.display()));
    }
    emit(stdout, &summary)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn slice(a: &SliceArgs, stdout: &mut dyn Write) -> CmdResult {
    let image = pnm::decode(&read_bytes(&a.image)?).map_err(|e| DataError::new(&a.image, None, e.to_string()))?;
    let (w, h) = (image.width() as u32, image.height() as u32);
    let gt = match &a.gt {
        Some(p) => Some(parse_ground_truth(&read_text(p)?, w, h).map_err(|e| DataError::annotation(p, e))?),
        None => None,
    };
    let grid = plan_tiles(w, h, a.tile_size, a.overlap).map_err(|e| DataError::new(&a.image, None, e.to_string()))?;
    let gm = GridManifest { stem: file_stem(&a.image), grid };
    create_dir(&a.out_dir)?;

    let mut written = 0usize;
    for (i, tile) in gm.grid.tiles.iter().enumerate() {
        let local = gt.as_ref().map(|boxes| boxes_in_tile(boxes, tile));
        if a.filter_nonempty && local.as_ref().is_some_and(Vec::is_empty) {
            continue;
        }
        let name = gm.tile_name(i);
        let crop = image
            .crop(tile.x0 as usize, tile.y0 as usize, tile.width as usize, tile.height as usize)
            .map_err(|e| DataError::new(&a.image, None, e.to_string()))?;
        write_file(&a.out_dir.join(format!("{name}.pgm")), pnm::encode_p5(&crop))?;
        if let Some(boxes) = &local {
            write_file(
                &a.out_dir.join(format!("{name}.txt")),
                format_ground_truth(boxes, tile.width, tile.height),
            )?;
        }
        written += 1;
    }
    write_file(&a.out_dir.join(format!("{}_grid.txt", gm.stem)), gm.format())?;
    emit(stdout, &format!("tiles,written\n{},{written}\n", gm.grid.tiles.len()))
}

fn merge(a: &MergeArgs, stdout: &mut dyn Write) -> CmdResult {
    let gm = GridManifest::parse(&read_text(&a.grid)?, &a.grid)?;
    let dir = a
        .tiles_dir
        .clone()
        .unwrap_or_else(|| a.grid.parent().unwrap_or(Path::new(".")).to_path_buf());
    let mut per_tile = Vec::with_capacity(gm.grid.tiles.len());
    for (i, tile) in gm.grid.tiles.iter().enumerate() {
        let path = dir.join(format!("{}.txt", gm.tile_name(i)));
        let dets = if path.is_file() {
            parse_detections_lenient(&read_text(&path)?, tile.width, tile.height)
                .map_err(|e| DataError::annotation(&path, e))?
        } else {
            Vec::new()
        };
        per_tile.push((*tile, dets));
    }
    let merged = merge_tiles(&per_tile, &gm.grid, &suppression(a.softnms, a.iou_threshold, a.sigma))
        .map_err(|e| DataError::new(&a.grid, None, e.to_string()))?;
    let text = format_detections(&merged, gm.grid.image_width, gm.grid.image_height);
    match &a.out {
        Some(p) => write_file(p, text),
        None => emit(stdout, &text),
    }
}

fn load_features(manifest: &Path, params: &PipelineParams) -> Result<SequenceFeatures, DataError> {
    let frames = SequenceManifest::load(manifest)?.load_frames()?;
    sequence_features(&frames, params).map_err(|e| DataError::new(manifest, None, e.to_string()))
}

fn read_model(path: Option<&Path>) -> Result<ConfidenceModel, DataError> {
    match path {
        Some(p) => load_model(&read_text(p)?).map_err(|e| DataError::new(p, None, e.to_string())),
        None => Ok(ConfidenceModel::reference()),
    }
}

fn features(a: &FeaturesArgs, stdout: &mut dyn Write) -> CmdResult {
    let feats = load_features(&a.manifest, &a.post.params())?;
    let predicted = match &a.model {
        Some(p) => Some(read_model(Some(p))?.predict_sequence(&feats.normalized())),
        None => None,
    };
    let csv = features_csv(&feats, predicted.as_deref());
    if let Some(svg) = &a.svg_plot {
        let r = predicted.as_deref().or(feats.r.as_deref());
        write_file(svg, features_svg(&feats, r))?;
    }
    match &a.csv {
        Some(p) if p.as_os_str() != "-" => write_file(p, csv),
        _ => emit(stdout, &csv),
    }
}

fn fit(a: &FitArgs, stdout: &mut dyn Write) -> CmdResult {
    let params = a.post.params();
    let mut sets = Vec::with_capacity(a.manifests.len());
    for m in &a.manifests {
        let f = load_features(m, &params)?;
        if f.r.is_none() {
            return Err(DataError::new(m, None, "every frame needs a ground-truth file for fitting"));
        }
        sets.push(f);
    }
    let model = fit_sequences(&sets, a.average_sets)
        .map_err(|e| DataError::new(&a.manifests[0], None, e.to_string()))?;
    write_file(&a.model, save_model(&model))?;
    let [w0, wc, wg, wn] = model.weights();
    emit(stdout, &format!("w0,wC,wG,wN\n{w0:.6},{wc:.6},{wg:.6},{wn:.6}\n"))
}

fn read_count(path: &Path) -> Result<u64, DataError> {
    let text = read_text(path)?;
    let (line, value) = text
        .lines()
        .enumerate()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| DataError::new(path, None, "empty count file"))?;
    value
        .trim()
        .parse()
        .map_err(|_| DataError::new(path, Some(line + 1), format!("invalid count `{}`", value.trim())))
}

fn count(a: &CountArgs, stdout: &mut dyn Write) -> CmdResult {
    let params = a.post.params();
    let model = read_model(a.model.as_deref())?;
    let feats = load_features(&a.manifest, &params)?;
    let report = estimate_count(&model, &feats, &params).map_err(|e| DataError::new(&a.manifest, None, e.to_string()))?;
    let manual = a.truth.as_deref().map(read_count).transpose()?;
    emit(stdout, &count_report(&report, manual))
}

fn eval_ap(a: &EvalApArgs, stdout: &mut dyn Write) -> CmdResult {
    let sup = suppression(a.softnms, a.iou_threshold, a.sigma);
    let mut dets: Vec<(usize, Detection)> = Vec::new();
    let mut gts: Vec<(usize, BoundingBox)> = Vec::new();
    let mut image_id = 0usize;
    for m in &a.manifests {
        let manifest = SequenceManifest::load(m)?;
        if !manifest.has_ground_truth() {
            return Err(DataError::new(m, None, "every frame needs a ground-truth file"));
        }
        for frame in manifest.load_frames()? {
            let kept = sup.apply(&frame.detections).map_err(|e| DataError::new(m, None, e.to_string()))?;
            dets.extend(kept.into_iter().map(|d| (image_id, d)));
            gts.extend(frame.ground_truth.unwrap_or_default().into_iter().map(|g| (image_id, g)));
            image_id += 1;
        }
    }
    let source = &a.manifests[0];
    let ap50 = average_precision(&dets, &gts, 0.5).map_err(|e| DataError::new(source, None, e.to_string()))?;
    let ap = average_precision_range(&dets, &gts).map_err(|e| DataError::new(source, None, e.to_string()))?;
    emit(stdout, &format!("AP@0.5,AP@[0.5:0.95]\n{:.1},{:.1}\n", 100.0 * ap50, 100.0 * ap))
}
