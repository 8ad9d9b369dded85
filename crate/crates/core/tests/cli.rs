use num_complex::Complex64 as C;
use pencilspec::cli::run;
use pencilspec::coefficients::CoefficientPair;
use pencilspec::forward::Subspectrum;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use tempfile::TempDir;

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn cosine_problem(dir: &TempDir) -> PathBuf {
    let cp = CoefficientPair::from_fns((0.0, PI), 129, |x| C::new(0.3 * x.cos(), 0.0), |_| C::new(0.0, 0.0), vec![]).unwrap();
    write(dir, "problem.json", &serde_json::json!({ "pieces": [cp] }).to_string())
}

fn free_window(t: i64, keep: impl Fn(i64) -> bool) -> Subspectrum {
    let v = (-t..=t).filter(|&k| k != 0 && keep(k)).map(|k| C::new(k as f64, 0.0)).collect();
    Subspectrum::new(v, C::new(0.0, 0.0)).unwrap()
}

#[test]
fn forward_output_is_reproducible_and_manifested() {
    let dir = TempDir::new().unwrap();
    let problem = cosine_problem(&dir);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let args = ["pencilspec", "forward", "--problem", &s(&problem), "--lambda-grid", "-5:5:21", "--im", "0.5", "--out", &s(out)];
        assert_eq!(run(args), 0);
    }
    let csv = std::fs::read_to_string(&a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&b).unwrap());
    assert_eq!(csv.lines().count(), 22);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "forward");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn spectrum_then_invert_free_problem() {
    let dir = TempDir::new().unwrap();
    let problem = write(&dir, "free.json", &serde_json::json!({ "pieces": [CoefficientPair::zero((0.0, PI))] }).to_string());
    let spec = dir.path().join("spec.json");
    assert_eq!(run(["pencilspec", "spectrum", "--problem", &s(&problem), "--search", "-16.5:16.5:-3:3", "--out", &s(&spec)]), 0);
    let sub: Subspectrum = serde_json::from_str(&std::fs::read_to_string(&spec).unwrap()).unwrap();
    assert_eq!(sub.len(), 32);
    let (triple, weyl) = (dir.path().join("triple.json"), dir.path().join("weyl.json"));
    let args = [
        "pencilspec", "invert", "--subspectrum", &s(&spec), "--trunc", "16", "--out", &s(&triple), "--emit-weyl", &s(&weyl),
        "--weyl-count", "8",
    ];
    assert_eq!(run(args), 0);
    assert!(triple.exists() && weyl.exists());
}

#[test]
fn deleted_half_of_the_spectrum_exits_four() {
    let dir = TempDir::new().unwrap();
    let sub = write(&dir, "half.json", &serde_json::to_string(&free_window(16, |k| k % 2 == 0)).unwrap());
    let out = dir.path().join("out.json");
    assert_eq!(run(["pencilspec", "invert", "--subspectrum", &s(&sub), "--trunc", "16", "--out", &s(&out)]), 4);
    assert_eq!(run(["pencilspec", "check", "--subspectrum", &s(&sub), "--trunc", "16", "--report", &s(&out)]), 4);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["moments"]["complete"], false);
}

#[test]
fn full_free_spectrum_passes_the_check() {
    let dir = TempDir::new().unwrap();
    let sub = write(&dir, "full.json", &serde_json::to_string(&free_window(16, |_| true)).unwrap());
    let out = dir.path().join("report.json");
    assert_eq!(run(["pencilspec", "check", "--subspectrum", &s(&sub), "--trunc", "16", "--report", &s(&out)]), 0);
}

#[test]
fn malformed_or_missing_input_exits_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", "{ \"pieces\": [ 1, 2");
    let out = s(&dir.path().join("o.csv"));
    assert_eq!(run(["pencilspec", "forward", "--problem", &s(&bad), "--lambda-grid", "0:1:3", "--out", &out]), 2);
    let missing = s(&dir.path().join("missing.json"));
    assert_eq!(run(["pencilspec", "forward", "--problem", &missing, "--lambda-grid", "0:1:3", "--out", &out]), 2);
    let problem = cosine_problem(&dir);
    assert_eq!(run(["pencilspec", "forward", "--problem", &s(&problem), "--lambda-grid", "0:1", "--out", &out]), 2);
    let cfg = write(&dir, "cfg.json", "{\"basis_dim\": 0}");
    assert_eq!(run(["pencilspec", "roundtrip", "--trunc", "16", "--recover", &s(&cfg), "--out", &out]), 2);
}

#[test]
fn roundtrip_free_case_reports_small_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("rt.txt");
    assert_eq!(run(["pencilspec", "roundtrip", "--case", "free", "--trunc", "24", "--out", &s(&out)]), 0);
    let table = std::fs::read_to_string(&out).unwrap();
    assert!(table.contains("kernel_l2,"), "{table}");
    assert!(dir.path().join("rt.txt.manifest.json").exists());
}
