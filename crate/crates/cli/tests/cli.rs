use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cptp-hmc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut rd = csv::Reader::from_path(path).unwrap();
    rd.records().map(|r| r.unwrap().iter().map(|v| v.parse::<f64>().unwrap()).collect()).collect()
}

#[test]
fn simulate_totals() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let s = ok(&["simulate", "--channel", "amplitude-damping:gamma=0.4", "--copies", "24", "--seed", "1", "--out", d]);
    assert!(s.contains("total 96"));
    let text = std::fs::read_to_string(dir.path().join("counts.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.split(',').count() == 4));
    let s = ok(&[
        "simulate",
        "--scheme",
        "qutrit-sic",
        "--channel",
        "qutrit-amplitude-damping:g1=0.1,g2=0.5",
        "--copies",
        "27",
        "--out",
        d,
    ]);
    assert!(s.contains("total 243"));
    let s = ok(&["simulate", "--channel", "identity", "--copies", "0", "--out", d]);
    assert!(s.contains("total 0"));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        vec!["simulate", "--channel", "swap", "--copies", "3", "--out", d],
        vec!["simulate", "--channel", "identity:d=3", "--copies", "3", "--out", d],
        vec!["regions", "--out", d],
        vec!["marginal", "--counts", "fixture:table3", "--property", "purity", "--out", d],
        vec!["sample", "--family", "unital", "--scheme", "qutrit-sic", "--out", d],
        vec!["sample", "--prior", "conjugate:beta=48", "--out", d],
        vec!["sample", "--family", "bogus", "--out", d],
        vec!["sample", "--draws", "0", "--out", d],
    ] {
        assert_eq!(run(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn sample_general_qubit() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["sample", "--draws", "10000", "--seed", "4", "--out", d]);
    let s = json(&dir.path().join("summary.json"));
    let acc = s["acceptance_rate"].as_f64().unwrap();
    assert!((0.55..=0.75).contains(&acc), "{acc}");
    assert_eq!(s["draws"].as_u64(), Some(10000));
    let chain = std::fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    assert!(chain.starts_with("theta_0,"));
    assert_eq!(chain.lines().count(), 10001);
}

#[test]
fn sample_is_reproducible_and_replayable() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = |d: &str| vec!["sample".to_string(), "--family".into(), "unital".into(), "--draws".into(), "800".into(), "--seed".into(), "9".into(), "--out".into(), d.into()];
    let s1: Vec<String> = args(a.path().to_str().unwrap());
    let s2: Vec<String> = args(b.path().to_str().unwrap());
    ok(&s1.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&s2.iter().map(String::as_str).collect::<Vec<_>>());
    let m = a.path().join("manifest.json");
    ok(&["replay", m.to_str().unwrap(), "--out", c.path().to_str().unwrap()]);
    for f in ["chain.csv", "summary.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.path().join(f)).unwrap(), "{f}");
        assert_eq!(x, std::fs::read(c.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sample_qutrit() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sample", "--scheme", "qutrit-sic", "--draws", "1000", "--seed", "2", "--out", dir.path().to_str().unwrap()]);
    let s = json(&dir.path().join("summary.json"));
    assert_eq!(s["validation"]["checked"].as_u64(), Some(10));
    assert!(s["validation"]["min_eigenvalue"].as_f64().unwrap() >= -1e-10);
    assert_eq!(s["ess"].as_array().unwrap().len(), 72);
}

#[test]
fn regions_conjugate_prior_desk() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "regions",
        "--counts",
        "fixture:table1",
        "--prior",
        "conjugate:beta=48,ref=amplitude-damping:gamma=0.5",
        "--truth",
        "amplitude-damping:gamma=0.4",
        "--seed",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = csv_rows(&dir.path().join("curves.csv"));
    assert_eq!(rows.len(), 201);
    for w in rows.windows(2) {
        assert!(w[1][1] <= w[0][1] && w[1][2] <= w[0][2]);
    }
    let s = json(&dir.path().join("regions.json"));
    let c = s["c_crit"].as_f64().unwrap();
    assert!(c > s["s_crit"].as_f64().unwrap());
    assert!(s["truth"]["member_below_lambda"].as_f64().unwrap() > 0.0);
}

#[test]
fn marginal_avg_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "marginal",
        "--counts",
        "fixture:table3",
        "--property",
        "avg-fidelity",
        "--draws",
        "15000",
        "--seed",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let rows = csv_rows(&dir.path().join("marginal.csv"));
    let best = rows.iter().max_by(|a, b| a[1].total_cmp(&b[1])).unwrap();
    assert!(best[0] > 0.5 && best[0] < 0.95, "{}", best[0]);
    assert!(rows.iter().all(|r| r[1] >= 0.0));
    assert!(dir.path().join("intervals.csv").exists());
}

#[test]
fn model_select_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["simulate", "--channel", "pauli:px=0.05,py=0.15,pz=0.2", "--copies", "250", "--seed", "8", "--out", d]);
    let counts = dir.path().join("counts.csv");
    ok(&["model-select", "--counts", counts.to_str().unwrap(), "--draws", "3000", "--seed", "1", "--out", d]);
    let r = json(&dir.path().join("report.json"));
    let fams = r["families"].as_array().unwrap();
    assert_eq!(fams.len(), 5);
    let total: f64 = fams.iter().map(|f| f["posterior"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);
    assert_eq!(r["copies"].as_u64(), Some(1000));
}
