//! Text manifests that tie image, detection and annotation files together.
//!
//! Sequence manifest, one frame per line in time order:
//!
//! ```text
//! # frame image detections ground_truth
//! 0 frame_00.pgm frame_00.det.txt frame_00.gt.txt
//! 1 frame_01.pgm frame_01.det.txt -
//! ```
//!
//! `-` marks a missing ground-truth file. Relative paths resolve against the
//! manifest's directory.
//!
//! Grid manifest, written by `slice`:
//!
//! ```text
//! image trap 1024 768
//! tile_size 640
//! overlap 0.2
//! grid 2 2
//! tile 0 0 0 0 640 640
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::annotation::{parse_detections, parse_ground_truth, AnnotationError};
use crate::pipeline::Frame;
use crate::pnm::{self, PnmError};
use crate::tiling::{Tile, TileGrid};

/// A data problem tied to a file and, when known, a line in it.
#[derive(Debug, Error)]
#[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
pub struct DataError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl DataError {
    pub fn new(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        DataError {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        DataError::new(path, None, err.to_string())
    }

    pub fn annotation(path: &Path, err: AnnotationError) -> Self {
        DataError::new(path, Some(err.line()), err.detail())
    }

    fn image(path: &Path, err: PnmError) -> Self {
        DataError::new(path, None, err.to_string())
    }
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    std::fs::read(path).map_err(|e| DataError::io(path, e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), DataError> {
    std::fs::write(path, contents).map_err(|e| DataError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub frame_index: usize,
    pub image: PathBuf,
    pub detections: PathBuf,
    pub ground_truth: Option<PathBuf>,
}

/// Time-ordered list of frames in one stirring sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceManifest {
    pub entries: Vec<ManifestEntry>,
}

impl SequenceManifest {
    /// Parses manifest text. Paths are joined onto `base_dir`.
    pub fn parse(text: &str, base_dir: &Path, source: &Path) -> Result<Self, DataError> {
        let mut entries: Vec<ManifestEntry> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(DataError::new(
                    source,
                    Some(line),
                    format!("expected `frame image detections [ground_truth]`, found {} fields", fields.len()),
                ));
            }
            let frame_index: usize = fields[0].parse().map_err(|_| {
                DataError::new(source, Some(line), format!("invalid frame index `{}`", fields[0]))
            })?;
            let expected_ok = match entries.last() {
                None => frame_index == 0,
                Some(prev) => frame_index > prev.frame_index,
            };
            if !expected_ok {
                return Err(DataError::new(
                    source,
                    Some(line),
                    "frame indices must start at 0 and strictly increase",
                ));
            }
            let ground_truth = fields
                .get(3)
                .filter(|s| **s != "-")
                .map(|s| base_dir.join(s));
            entries.push(ManifestEntry {
                frame_index,
                image: base_dir.join(fields[1]),
                detections: base_dir.join(fields[2]),
                ground_truth,
            });
        }
        if entries.is_empty() {
            return Err(DataError::new(source, None, "manifest lists no frames"));
        }
        Ok(SequenceManifest { entries })
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let manifest = Self::parse(&text, base, path)?;
        for e in &manifest.entries {
            for p in [Some(&e.image), Some(&e.detections), e.ground_truth.as_ref()].into_iter().flatten() {
                if !p.is_file() {
                    return Err(DataError::new(path, None, format!("missing file {}", p.display())));
                }
            }
        }
        Ok(manifest)
    }

    pub fn has_ground_truth(&self) -> bool {
        self.entries.iter().all(|e| e.ground_truth.is_some())
    }

    /// Renders manifest text with paths relative to the manifest directory.
    pub fn format(entries: &[(usize, String, String, Option<String>)]) -> String {
        let mut out = String::from("# frame image detections ground_truth\n");
        for (i, img, det, gt) in entries {
            let _ = writeln!(out, "{i} {img} {det} {}", gt.as_deref().unwrap_or("-"));
        }
        out
    }

    /// Loads every frame: image, detections and (if listed) ground truth.
    pub fn load_frames(&self) -> Result<Vec<Frame>, DataError> {
        self.entries.iter().map(load_frame).collect()
    }
}

fn load_frame(e: &ManifestEntry) -> Result<Frame, DataError> {
    let bytes = read_bytes(&e.image)?;
    let image = pnm::decode(&bytes).map_err(|err| DataError::image(&e.image, err))?;
    let (w, h) = (image.width() as u32, image.height() as u32);
    let detections = parse_detections(&read_text(&e.detections)?, w, h)
        .map_err(|err| DataError::annotation(&e.detections, err))?;
    let ground_truth = match &e.ground_truth {
        Some(p) => Some(parse_ground_truth(&read_text(p)?, w, h).map_err(|err| DataError::annotation(p, err))?),
        None => None,
    };
    Ok(Frame {
        image,
        detections,
        ground_truth,
    })
}

/// Tile layout plus the file stem used for per-tile files.
#[derive(Debug, Clone, PartialEq)]
pub struct GridManifest {
    pub stem: String,
    pub grid: TileGrid,
}

impl GridManifest {
    pub fn tile_name(&self, index: usize) -> String {
        let (r, c) = self.grid.position(index);
        format!("{}_r{}_c{}", self.stem, r, c)
    }

    pub fn format(&self) -> String {
        let g = &self.grid;
        let mut out = String::new();
        let _ = writeln!(out, "image {} {} {}", self.stem, g.image_width, g.image_height);
        let _ = writeln!(out, "tile_size {}", g.tile_size);
        let _ = writeln!(out, "overlap {}", g.overlap_fraction);
        let _ = writeln!(out, "grid {} {}", g.rows(), g.cols());
        for (i, t) in g.tiles.iter().enumerate() {
            let (r, c) = g.position(i);
            let _ = writeln!(out, "tile {r} {c} {} {} {} {}", t.x0, t.y0, t.width, t.height);
        }
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self, DataError> {
        let err = |line: usize, msg: String| DataError::new(source, Some(line), msg);
        let mut stem = None;
        let mut dims = None;
        let mut tile_size = None;
        let mut overlap = None;
        let mut shape = None;
        let mut tiles: Vec<(usize, usize, Tile)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let f: Vec<&str> = raw.split_whitespace().collect();
            if f.is_empty() || f[0].starts_with('#') {
                continue;
            }
            let num = |i: usize| -> Result<u64, DataError> {
                f.get(i)
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| err(line, format!("expected integer in field {}", i + 1)))
            };
            match (f[0], f.len()) {
                ("image", 4) => {
                    stem = Some(f[1].to_string());
                    dims = Some((num(2)? as u32, num(3)? as u32));
                }
                ("tile_size", 2) => tile_size = Some(num(1)? as u32),
                ("overlap", 2) => {
                    overlap = Some(f[1].parse::<f64>().map_err(|_| err(line, "invalid overlap".into()))?)
                }
                ("grid", 3) => shape = Some((num(1)? as usize, num(2)? as usize)),
                ("tile", 7) => tiles.push((
                    num(1)? as usize,
                    num(2)? as usize,
                    Tile {
                        x0: num(3)? as u32,
                        y0: num(4)? as u32,
                        width: num(5)? as u32,
                        height: num(6)? as u32,
                    },
                )),
                _ => return Err(err(line, format!("unrecognized grid entry `{}`", raw.trim()))),
            }
        }
        let missing = |what: &str| DataError::new(source, None, format!("grid manifest lacks `{what}`"));
        let stem = stem.ok_or_else(|| missing("image"))?;
        let (w, h) = dims.expect("set with stem");
        let tile_size = tile_size.ok_or_else(|| missing("tile_size"))?;
        let overlap = overlap.ok_or_else(|| missing("overlap"))?;
        let (rows, cols) = shape.ok_or_else(|| missing("grid"))?;
        if rows * cols != tiles.len() || cols == 0 {
            return Err(DataError::new(
                source,
                None,
                format!("grid {rows}x{cols} but {} tiles listed", tiles.len()),
            ));
        }
        tiles.sort_by_key(|(r, c, _)| (*r, *c));
        for (i, (r, c, t)) in tiles.iter().enumerate() {
            if (*r, *c) != (i / cols, i % cols) {
                return Err(DataError::new(source, None, format!("tile r{r} c{c} duplicated or out of range")));
            }
            if t.x0 + t.width > w || t.y0 + t.height > h {
                return Err(DataError::new(source, None, format!("tile r{r} c{c} extends past the image")));
            }
        }
        let grid = TileGrid::from_parts(w, h, tile_size, overlap, tiles.into_iter().map(|(_, _, t)| t).collect(), cols);
        Ok(GridManifest { stem, grid })
    }
}
