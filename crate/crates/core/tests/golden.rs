//! Report schema stability against a checked-in, RNG-free record.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the expected report.

use std::path::Path;
use std::process::Command;

const INPUT: &str = "tests/golden/squeezed.csv";
const EXPECTED: &str = "tests/golden/squeezed.report.json";

fn report() -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_homodyne-purity"))
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .args(["analyze", INPUT, "--omega", "1.2e15"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

#[test]
fn report_matches_golden_file() {
    let actual = report();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(EXPECTED);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read(&path).expect("golden file; run with UPDATE_GOLDEN=1 to create");
    assert_eq!(
        String::from_utf8(actual).unwrap(),
        String::from_utf8(expected).unwrap()
    );
}

#[test]
fn golden_record_values() {
    // Samples are √σ(θ) times 24 normal quantiles, so every bin variance is
    // exactly c·σ(θ) with c = Σz²/23 for the state (0.9, 0.4, 0.1).
    let r: serde_json::Value = serde_json::from_slice(&report()).unwrap();
    let f = |p: &str| r.pointer(p).and_then(|v| v.as_f64()).unwrap();
    assert!((f("/profile/f_mean") - 0.09289350013609393).abs() < 1e-9);
    assert!((f("/profile/f_min") - 0.09289350013609393).abs() < 1e-9);
    assert!(f("/profile/f_std") < 1e-9);
    assert!((f("/purity/pi_gauss") - 0.8538672921052607).abs() < 1e-9);
    // θ = 0, π/4, π/2 fall between bin centers; linear interpolation costs accuracy
    assert!((f("/purity/pi_gauss_three_angle") - 0.8538672921052607).abs() < 0.01);
    assert_eq!(r["meta"]["bins"], 12);
    assert_eq!(r["meta"]["total_samples"], 288);
    assert_eq!(r["normality"]["bins_rejected"], 0);
}
