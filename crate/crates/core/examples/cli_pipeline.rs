//! Drives the command-line front end in-process: simulate, fit, count.
//!
//! cargo run --release --example cli_pipeline -- <work_dir>

use aphid_count::cli::run;

fn call(args: &[String]) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("aphid-count".to_string()).chain(args.iter().cloned()), &mut out, &mut err);
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));
    assert_eq!(code, 0, "{args:?} failed");
}

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "aphid-demo".into());
    let s = |v: &str| v.to_string();
    call(&[s("simulate"), s("--seed"), s("5"), s("--sets"), s("9"), s("--out-dir"), dir.clone()]);

    let mut fit: Vec<String> = (0..7).map(|k| format!("{dir}/set_{k}/manifest.txt")).collect();
    fit.insert(0, s("fit"));
    fit.extend([s("--average-sets"), s("--model"), format!("{dir}/model.toml")]);
    call(&fit);

    for k in 7..9 {
        call(&[
            s("count"),
            format!("{dir}/set_{k}/manifest.txt"),
            s("--model"),
            format!("{dir}/model.toml"),
            s("--truth"),
            format!("{dir}/set_{k}/truth"),
        ]);
    }
}
