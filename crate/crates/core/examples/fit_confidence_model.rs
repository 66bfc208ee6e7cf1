//! Fits the confidence model on simulated labelled sequences and compares it
//! with the bundled reference weights.
//!
//! cargo run --release --example fit_confidence_model

use aphid_count::model::{predict_confidence, save_model};
use aphid_count::pipeline::{fit_sequences, sequence_features, PipelineParams};
use aphid_count::{simulate_sequence, ConfidenceModel, SimConfig};

fn main() {
    let params = PipelineParams::default();
    let sets: Vec<_> = (0..7)
        .map(|seed| {
            let seq = simulate_sequence(&SimConfig::default().seeded(seed)).unwrap();
            sequence_features(&seq.to_frames(), &params).unwrap()
        })
        .collect();

    for (label, average) in [("averaged sets", true), ("all frames", false)] {
        let model = fit_sequences(&sets, average).unwrap();
        let [w0, wc, wg, wn] = model.weights();
        println!("{label:<14} w0 {w0:+.4}  wC {wc:+.4}  wG {wg:+.4}  wN {wn:+.4}");
    }

    let reference = ConfidenceModel::reference();
    println!("reference R(1,1,1) = {:.4}", predict_confidence(&reference, 1.0, 1.0, 1.0));
    print!("{}", save_model(&reference));
}
