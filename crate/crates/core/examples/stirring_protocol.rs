//! The train/test protocol on simulated data: fit on 7 sequences, count the 2
//! held-out ones, repeated over several master seeds.
//!
//! cargo run --release --example stirring_protocol -- [master_seeds]

use aphid_count::pipeline::{run_protocol, PipelineParams};
use aphid_count::SimConfig;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let config = SimConfig::default();
    let params = PipelineParams::default();
    let (mut err_static, mut err_max, mut err_fused, mut runs) = (0.0, 0.0, 0.0, 0.0);

    println!("seed true static max fused");
    for master in 0..seeds {
        let (_, outcomes) = run_protocol(&config, master, 7, 2, true, &params).unwrap();
        for o in &outcomes {
            let truth = o.true_count as f64;
            let r = &o.report;
            println!("{master:>4} {:>4} {:>6} {:>3} {:>5.1}", o.true_count, r.static_count, r.max_count, r.fused.value_real);
            err_static += (r.static_count as f64 - truth).abs();
            err_max += (r.max_count as f64 - truth).abs();
            err_fused += (r.fused.value_real - truth).abs();
            runs += 1.0;
        }
    }
    println!(
        "mean abs error  static {:.2}  max {:.2}  fused {:.2}",
        err_static / runs,
        err_max / runs,
        err_fused / runs
    );
}
