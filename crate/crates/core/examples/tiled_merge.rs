//! Plans overlapping tiles over a large image, fakes a detector that sees
//! each object in every tile containing it, and merges the tiles back.
//!
//! cargo run --example tiled_merge

use aphid_count::tiling::{boxes_in_tile, merge_tiles, plan_tiles, DEFAULT_OVERLAP, DEFAULT_TILE_SIZE};
use aphid_count::{BoundingBox, Detection, Suppression};

fn main() {
    let (w, h) = (1920, 1080);
    let grid = plan_tiles(w, h, DEFAULT_TILE_SIZE, DEFAULT_OVERLAP).unwrap();
    println!("{}x{} image -> {} rows x {} cols", w, h, grid.rows(), grid.cols());
    for (i, t) in grid.tiles.iter().enumerate() {
        let (r, c) = grid.position(i);
        println!("  r{r} c{c}: origin ({}, {}) size {}x{}", t.x0, t.y0, t.width, t.height);
    }

    // a diagonal line of objects, several in the overlap bands
    let objects: Vec<BoundingBox> = (0..12)
        .map(|i| {
            let x = 60.0 + 150.0 * i as f64;
            let y = 40.0 + 80.0 * i as f64;
            BoundingBox::new(x, y, x + 24.0, y + 24.0).unwrap()
        })
        .collect();

    let per_tile: Vec<_> = grid
        .tiles
        .iter()
        .map(|t| {
            let seen = boxes_in_tile(&objects, t)
                .into_iter()
                .map(|b| Detection::new(b, 0.9).unwrap())
                .collect::<Vec<_>>();
            (*t, seen)
        })
        .collect();
    let raw: usize = per_tile.iter().map(|(_, d)| d.len()).sum();
    let merged = merge_tiles(&per_tile, &grid, &Suppression::Hard { iou_threshold: 0.5 }).unwrap();
    println!("objects {}  per-tile detections {raw}  after merge {}", objects.len(), merged.len());
}
