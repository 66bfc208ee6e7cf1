//! Hard NMS versus the two Soft-NMS decays on a small cluster of boxes.
//!
//! cargo run --example soft_nms

use aphid_count::{nms, soft_nms, BoundingBox, Detection, SoftNmsMethod, SoftNmsParams};

fn det(x: f64, y: f64, conf: f64) -> Detection {
    Detection::new(BoundingBox::new(x, y, x + 10.0, y + 10.0).unwrap(), conf).unwrap()
}

fn show(label: &str, dets: &[Detection]) {
    let scores: Vec<String> = dets.iter().map(|d| format!("{:.4}", d.confidence)).collect();
    println!("{label:<10} {} kept: [{}]", dets.len(), scores.join(", "));
}

fn main() {
    // two insects touching, plus a duplicate box on the first one
    let dets = [det(0.0, 0.0, 0.9), det(1.0, 0.0, 0.8), det(8.0, 0.0, 0.7), det(30.0, 30.0, 0.6)];
    show("input", &dets);
    show("hard", &nms(&dets, 0.5));
    for method in [SoftNmsMethod::Linear, SoftNmsMethod::Gaussian] {
        let params = SoftNmsParams { method, ..SoftNmsParams::default() };
        show(&format!("{method:?}").to_lowercase(), &soft_nms(&dets, &params).unwrap());
    }
}
