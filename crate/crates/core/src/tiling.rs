//! Overlapping tile planning and merging of per-tile detections.
//!
//! Tiles are laid out on a regular stride of `floor(tile_size * (1 - overlap))`
//! pixels. The last tile on each axis is shifted back so its far edge meets
//! the image edge, which can only enlarge its overlap with the previous
//! tile. Images smaller than a tile on some axis get a single tile covering
//! that whole axis.

use thiserror::Error;

use crate::detection::{BoundingBox, Detection, DetectionError, Suppression};

/// Tile edge length used by the detector.
pub const DEFAULT_TILE_SIZE: u32 = 640;
/// Fraction of a tile shared with each neighbour.
pub const DEFAULT_OVERLAP: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    InvalidImage { width: u32, height: u32 },
    #[error("tile size must be positive")]
    InvalidTileSize,
    #[error("overlap fraction must lie in [0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error(transparent)]
    Suppression(#[from] DetectionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tile {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

impl Tile {
    pub fn bounds(&self) -> BoundingBox {
        BoundingBox {
            xmin: self.x0 as f64,
            ymin: self.y0 as f64,
            xmax: (self.x0 + self.width) as f64,
            ymax: (self.y0 + self.height) as f64,
        }
    }

    pub fn contains_pixel(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }
}

/// Row-major tile layout for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub image_width: u32,
    pub image_height: u32,
    pub tile_size: u32,
    pub overlap_fraction: f64,
    pub tiles: Vec<Tile>,
    cols: usize,
}

impl TileGrid {
    pub fn rows(&self) -> usize {
        self.tiles.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `(row, col)` of the tile at `index`.
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn index_of(&self, tile: &Tile) -> Option<usize> {
        self.tiles.iter().position(|t| t == tile)
    }

    /// Rebuilds a grid from an explicit tile list (e.g. read from a grid
    /// manifest). Tiles must be row-major with `cols` tiles per row.
    pub fn from_parts(
        image_width: u32,
        image_height: u32,
        tile_size: u32,
        overlap_fraction: f64,
        tiles: Vec<Tile>,
        cols: usize,
    ) -> Self {
        assert!(cols > 0 && tiles.len() % cols == 0, "tile list is not rectangular");
        TileGrid {
            image_width,
            image_height,
            tile_size,
            overlap_fraction,
            tiles,
            cols,
        }
    }
}

/// Tile origins and length along one axis.
fn axis_origins(dim: u32, tile: u32, stride: u32) -> (Vec<u32>, u32) {
    if dim <= tile {
        return (vec![0], dim);
    }
    let mut origins = vec![0u32];
    loop {
        let last = *origins.last().unwrap();
        if last + tile >= dim {
            break;
        }
        let next = (last + stride).min(dim - tile);
        origins.push(next);
    }
    (origins, tile)
}

pub fn plan_tiles(
    image_width: u32,
    image_height: u32,
    tile_size: u32,
    overlap_fraction: f64,
) -> Result<TileGrid, TilingError> {
    if image_width == 0 || image_height == 0 {
        return Err(TilingError::InvalidImage {
            width: image_width,
            height: image_height,
        });
    }
    if tile_size == 0 {
        return Err(TilingError::InvalidTileSize);
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(TilingError::InvalidOverlap(overlap_fraction));
    }
    // the epsilon absorbs representation error in products like 640 * 0.8
    let stride = ((tile_size as f64 * (1.0 - overlap_fraction)) + 1e-9).floor().max(1.0) as u32;

    let (xs, tw) = axis_origins(image_width, tile_size, stride);
    let (ys, th) = axis_origins(image_height, tile_size, stride);
    let tiles = ys
        .iter()
        .flat_map(|&y0| {
            xs.iter().map(move |&x0| Tile {
                x0,
                y0,
                width: tw,
                height: th,
            })
        })
        .collect();
    Ok(TileGrid {
        image_width,
        image_height,
        tile_size,
        overlap_fraction,
        tiles,
        cols: xs.len(),
    })
}

/// Moves a tile-local detection into image coordinates.
pub fn to_global(det: &Detection, tile: &Tile) -> Detection {
    Detection {
        bbox: det.bbox.translate(tile.x0 as f64, tile.y0 as f64),
        ..*det
    }
}

/// Moves an image-space box into the frame of `tile`.
pub fn to_local(bbox: &BoundingBox, tile: &Tile) -> BoundingBox {
    bbox.translate(-(tile.x0 as f64), -(tile.y0 as f64))
}

/// Remaps every tile's detections to image coordinates and removes
/// cross-tile duplicates with `suppression`.
///
/// Detections are gathered in grid order (then by confidence within a
/// tile) before suppression, so the output does not depend on the order of
/// `per_tile`.
pub fn merge_tiles(
    per_tile: &[(Tile, Vec<Detection>)],
    grid: &TileGrid,
    suppression: &Suppression,
) -> Result<Vec<Detection>, TilingError> {
    let mut indexed: Vec<(usize, &Tile, &Vec<Detection>)> = per_tile
        .iter()
        .map(|(t, d)| {
            let idx = grid.index_of(t);
            debug_assert!(idx.is_some(), "tile {t:?} is not part of the grid");
            (idx.unwrap_or(usize::MAX), t, d)
        })
        .collect();
    indexed.sort_by_key(|(i, _, _)| *i);

    let mut all = Vec::new();
    for (_, tile, dets) in indexed {
        let mut local: Vec<Detection> = dets.iter().map(|d| to_global(d, tile)).collect();
        local.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        all.extend(local);
    }
    Ok(suppression.apply(&all)?)
}

/// Ground-truth boxes that lie entirely inside `tile`, in tile coordinates.
pub fn boxes_in_tile(boxes: &[BoundingBox], tile: &Tile) -> Vec<BoundingBox> {
    let bounds = tile.bounds();
    boxes
        .iter()
        .filter(|b| bounds.contains(b))
        .map(|b| to_local(b, tile))
        .collect()
}
