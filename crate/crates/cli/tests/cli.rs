use serde_json::Value;
use std::path::Path;
use std::process::Command;

fn drawstring(args: &[&str], dir: &Path) -> (i32, Value) {
    let report = dir.join("report.json");
    let _ = std::fs::remove_file(&report);
    let out = Command::new(env!("CARGO_BIN_EXE_drawstring"))
        .args(args)
        .arg("--report")
        .arg(&report)
        .env("DRAWSTRING_THREADS", "2")
        .output()
        .expect("binary runs");
    let text = std::fs::read_to_string(&report).unwrap_or_else(|_| String::from_utf8_lossy(&out.stdout).into_owned());
    (out.status.code().unwrap_or(-1), serde_json::from_str(&text).expect("report is JSON"))
}

fn strip_timestamp(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timestamp");
    v
}

#[test]
fn construct_method_b_passes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("profile.csv");
    let (code, rep) = drawstring(
        &["construct", "--method", "B", "--k", "0", "--epsilon", "0.1", "--delta", "0.1", "--r0", "1e-3", "--csv", csv.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code, 0, "{rep}");
    assert_eq!(rep["schema"], 1);
    assert_eq!(rep["status"], "pass");
    let conds = rep["result"]["certification"]["conditions"].as_object().unwrap();
    assert_eq!(conds.len(), 7);
    assert!(conds.values().all(|c| c["status"] == "pass" && c["grid"].as_u64().unwrap() > 0));
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("r,w,f,fp,fpp,u,up,R,H\n"));
    assert!(!text.contains('\r'));
}

#[test]
fn reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["certify", "--method", "A", "--k", "-1", "--grid", "2000", "--fd-points", "200"];
    let (c1, a) = drawstring(&args, dir.path());
    let (c2, b) = drawstring(&args, dir.path());
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(strip_timestamp(a), strip_timestamp(b));
}

#[test]
fn sequence_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("seq.csv");
    let (code, rep) = drawstring(&["sequence", "--topology", "T3", "--i-max", "16", "--csv", csv.to_str().unwrap()], dir.path());
    assert_eq!(code, 0, "{rep}");
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "i,eps,delta,H,volU,w1p_1.5");
    assert_eq!(lines.len(), 16);
    for (row, i) in lines[1..].iter().zip(2..) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert_eq!(cols[0], i.to_string());
        assert_eq!(cols[1].parse::<f64>().unwrap(), 1.0 / i as f64);
    }
    assert_eq!(rep["result"]["members"].as_array().unwrap().len(), 15);
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# two-member sequence\ntopology = S2xS1\ni_max = 9\nmethod = B\n").unwrap();
    let (code, rep) = drawstring(&["sequence", "--config", cfg.to_str().unwrap(), "--i-max", "3"], dir.path());
    assert_eq!(code, 0, "{rep}");
    assert_eq!(rep["config"]["topology"], "S2xS1");
    assert_eq!(rep["config"]["i_max"], 3);
}

#[test]
fn malformed_input_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epsilon = 0.1\nwidth = 3\n").unwrap();
    let (code, rep) = drawstring(&["construct", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 1);
    assert_eq!(rep["status"], "error");
    assert_eq!(rep["error"]["field"], "width");

    let (code, rep) = drawstring(&["construct", "--r0", "-1"], dir.path());
    assert_eq!(code, 1);
    assert_eq!(rep["error"]["field"], "r0");

    let (code, rep) = drawstring(&["torus-green", "--z", "0.7,1"], dir.path());
    assert_eq!(code, 1);
    assert_eq!(rep["error"]["field"], "z");
}

#[test]
fn torus_green_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("green.csv");
    let (code, rep) = drawstring(&["torus-green", "--z", "0,1", "--torus-n", "32", "--pairs", "200", "--csv", csv.to_str().unwrap()], dir.path());
    assert_eq!(code, 0, "{rep}");
    let s = &rep["result"]["summary"];
    assert!(s["c1"]["c1"].as_f64().unwrap().is_finite());
    assert!(s["c2"].as_f64().unwrap() <= s["c2_envelope"].as_f64().unwrap());
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 32 * 32);
}
