//! Average gradient magnitude of a simulated trap frame under growing blur.
//!
//! cargo run --example clarity

use aphid_count::clarity::{average_gradient_magnitude, average_gradient_magnitude_with, GradientOperator};
use aphid_count::image::box_blur;
use aphid_count::{simulate_sequence, GrayImage, SimConfig};

fn main() {
    let ramp = GrayImage::from_fn(16, 8, |x, _| x as u8).unwrap();
    println!("ramp            G = {}", average_gradient_magnitude(&ramp).unwrap());

    let seq = simulate_sequence(&SimConfig::default().seeded(7)).unwrap();
    let frame = &seq.frames[0];
    for radius in [0, 1, 2, 4, 8] {
        let blurred = box_blur(frame, radius);
        println!(
            "blur radius {radius:>2}  G = {:.4}  (sobel {:.4})",
            average_gradient_magnitude(&blurred).unwrap(),
            average_gradient_magnitude_with(&blurred, GradientOperator::Sobel).unwrap()
        );
    }

    println!("per-frame G of the stirred sequence:");
    for (t, f) in seq.frames.iter().enumerate() {
        println!("  t{t}  G = {:.4}", average_gradient_magnitude(f).unwrap());
    }
}
