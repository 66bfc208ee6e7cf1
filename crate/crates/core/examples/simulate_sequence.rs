//! One simulated stirring sequence: visible insects, detections and blur per
//! frame. Writes the frames as PGM files when given a directory.
//!
//! cargo run --example simulate_sequence -- [out_dir]

use aphid_count::pnm::encode_p5;
use aphid_count::{simulate_sequence, SimConfig};

fn main() {
    let config = SimConfig::default().seeded(42);
    let seq = simulate_sequence(&config).unwrap();
    println!("true count {}", seq.true_count);
    for t in 0..config.frames {
        println!(
            "t{t}  stirring {:<5}  blur {:.1}  visible {:>2}  detections {:>2}",
            config.is_stirring(t),
            config.blur_schedule[t],
            seq.visible_gt[t].len(),
            seq.detections[t].len()
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        std::fs::create_dir_all(&dir).unwrap();
        for (t, f) in seq.frames.iter().enumerate() {
            std::fs::write(format!("{dir}/frame_{t:02}.pgm"), encode_p5(f)).unwrap();
        }
        println!("frames written to {dir}");
    }
}
