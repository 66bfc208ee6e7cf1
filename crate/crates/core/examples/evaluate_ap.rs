//! Matching, counting confidence and average precision on a toy scene.
//!
//! cargo run --example evaluate_ap

use aphid_count::evaluation::{average_precision, average_precision_range, counting_confidence, match_detections};
use aphid_count::{BoundingBox, Detection};

fn bx(x: f64, y: f64) -> BoundingBox {
    BoundingBox::new(x, y, x + 10.0, y + 10.0).unwrap()
}

fn main() {
    let gts = vec![bx(0.0, 0.0), bx(50.0, 50.0)];
    let dets = vec![
        Detection::new(bx(0.0, 0.0), 0.9).unwrap(),
        Detection::new(bx(100.0, 100.0), 0.8).unwrap(),
        Detection::new(bx(51.0, 50.0), 0.7).unwrap(),
    ];

    let m = match_detections(&dets, &gts, 0.5);
    println!("tp {} fp {} fn {}  counting confidence {:.4}", m.tp, m.fp, m.fn_, counting_confidence(&m));

    let d: Vec<(usize, Detection)> = dets.into_iter().map(|d| (0, d)).collect();
    let g: Vec<(usize, BoundingBox)> = gts.into_iter().map(|b| (0, b)).collect();
    println!("AP@0.5        {:.4}", average_precision(&d, &g, 0.5).unwrap());
    println!("AP@[0.5:0.95] {:.4}", average_precision_range(&d, &g).unwrap());
}
