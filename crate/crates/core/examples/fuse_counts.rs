//! Static, maximum and softmax-fused counts for one sequence of per-frame
//! counts and predicted confidences.
//!
//! cargo run --example fuse_counts

use aphid_count::fuse_counts;
use aphid_count::fusion::{max_count, static_count};

fn main() {
    let counts = [2u64, 6, 9, 14, 17, 11, 10, 10, 9];
    let confidence = [0.95, 0.7, 0.55, 0.4, 0.3, 0.5, 0.75, 0.85, 0.9];

    let real: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let fused = fuse_counts(&confidence, &real).unwrap();
    println!("static {}  max {}  fused {:.3} -> {}", static_count(&counts).unwrap(), max_count(&counts).unwrap(), fused.value_real, fused.value_int);
    for (t, w) in fused.per_frame_weights.iter().enumerate() {
        println!("  t{t}  count {:>2}  R {:.2}  weight {w:.4}", counts[t], confidence[t]);
    }
}
