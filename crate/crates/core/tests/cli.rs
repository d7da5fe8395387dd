use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use postspec::cli::{parse_args, Command as Sub};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_postspec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "off").output().unwrap()
}

fn fixture() -> TempDir {
    let dir = TempDir::new().unwrap();
    let mut vectors = String::from("40 4\n");
    for i in 0..40 {
        let v: Vec<String> = (0..4).map(|k| format!("{:.3}", ((i * 7 + k * 3) % 11) as f64 / 5.0 - 1.0)).collect();
        vectors.push_str(&format!("w{i} {}\n", v.join(" ")));
    }
    fs::write(dir.path().join("v.txt"), vectors).unwrap();
    let att: String = (0..24).step_by(2).map(|i| format!("w{i} w{}\n", i + 1)).collect();
    let rep: String = (0..12).map(|i| format!("w{i} w{}\n", i + 12)).collect();
    fs::write(dir.path().join("a.txt"), att).unwrap();
    fs::write(dir.path().join("r.txt"), rep).unwrap();
    let sim: String = (0..12).map(|i| format!("w{i} w{} {}\n", 39 - i, (i % 5) as f64)).collect();
    fs::write(dir.path().join("sim.txt"), sim).unwrap();
    dir
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

#[test]
fn pipeline_arguments_parse() {
    let d = fixture();
    let cli = parse_args([
        "postspec", "pipeline", "--vectors", &p(&d, "v.txt"), "--attract", &p(&d, "a.txt"), "--repel",
        &p(&d, "r.txt"), "--out", &p(&d, "f.txt"),
    ])
    .unwrap();
    assert!(matches!(cli.command, Sub::Pipeline(_)));
}

#[test]
fn missing_vectors_is_a_usage_error() {
    let d = fixture();
    let out = run(&["pipeline", "--attract", &p(&d, "a.txt"), "--repel", &p(&d, "r.txt"), "--out", &p(&d, "f.txt")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonexistent_input_is_a_usage_error() {
    let d = fixture();
    let out = run(&["evaluate", "--vectors", &p(&d, "nope.txt"), "--dataset", &p(&d, "sim.txt")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));
}

#[test]
fn retrofit_rejects_attract_repel_options() {
    let d = fixture();
    let args = [
        "postspec", "specialise", "--method", "retrofit", "--delta-rep", "0.1", "--vectors", &p(&d, "v.txt"),
        "--attract", &p(&d, "a.txt"), "--repel", &p(&d, "r.txt"), "--out", &p(&d, "o.txt"),
    ];
    let err = parse_args(args).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn flags_override_config_file() {
    let d = fixture();
    let cfg = p(&d, "run.cfg");
    fs::write(&cfg, "epochs=5\nlr=0.2\n").unwrap();
    let base = [
        "postspec", "specialise", "--config", &cfg, "--vectors", &p(&d, "v.txt"), "--attract", &p(&d, "a.txt"),
        "--repel", &p(&d, "r.txt"), "--out", &p(&d, "o.txt"),
    ];
    let Sub::Specialise(a) = parse_args(base).unwrap().command else { panic!() };
    assert_eq!((a.epochs, a.lr), (Some(5), Some(0.2)));
    let mut with_flag = base.to_vec();
    with_flag.extend(["--epochs", "3"]);
    let Sub::Specialise(a) = parse_args(with_flag).unwrap().command else { panic!() };
    assert_eq!((a.epochs, a.lr), (Some(3), Some(0.2)));
}

#[test]
fn evaluate_reports_and_exits_zero() {
    let d = fixture();
    let out = run(&["evaluate", "--vectors", &p(&d, "v.txt"), "--dataset", &p(&d, "sim.txt")]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report[0]["dataset"], "sim");
    assert_eq!(report[0]["covered"], 12);
    assert!(report[0]["rho"].is_number());
}

#[test]
fn malformed_vectors_name_file_and_line() {
    let d = fixture();
    let bad = p(&d, "bad.txt");
    fs::write(&bad, "a 1 2\nb 1 oops\n").unwrap();
    let out = run(&["evaluate", "--vectors", &bad, "--dataset", &p(&d, "sim.txt")]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.txt:2"), "{err}");
}

#[test]
fn failed_run_leaves_no_output() {
    let d = fixture();
    let out_path = p(&d, "never.txt");
    // Constraints that miss the vocabulary make the pipeline fail after loading.
    fs::write(p(&d, "x.txt"), "zz yy\n").unwrap();
    let out = run(&[
        "pipeline", "--vectors", &p(&d, "v.txt"), "--attract", &p(&d, "x.txt"), "--repel", &p(&d, "x.txt"),
        "--out", &out_path,
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!Path::new(&out_path).exists());
    let leftovers: Vec<_> = fs::read_dir(d.path()).unwrap().filter_map(|e| e.ok()).filter(|e| e.file_name().to_string_lossy().starts_with(".tmp")).collect();
    assert!(leftovers.is_empty());
}

#[test]
fn pipeline_summary_reproduces_the_run() {
    let d = fixture();
    let args = |out: &str, summary: &str| {
        vec![
            "--seed".to_string(), "9".into(), "pipeline".into(), "--vectors".into(), p(&d, "v.txt"), "--attract".into(),
            p(&d, "a.txt"), "--repel".into(), p(&d, "r.txt"), "--out".into(), out.into(), "--hidden".into(), "1".into(),
            "--width".into(), "8".into(), "--epochs".into(), "5".into(), "--k".into(), "3".into(), "--summary".into(),
            summary.into(), "--dataset".into(), p(&d, "sim.txt"),
        ]
    };
    let first = bin().args(args(&p(&d, "f1.txt"), &p(&d, "s1.json"))).output().unwrap();
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let second = bin().args(args(&p(&d, "f2.txt"), &p(&d, "s2.json"))).output().unwrap();
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(fs::read(p(&d, "f1.txt")).unwrap(), fs::read(p(&d, "f2.txt")).unwrap());

    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(p(&d, "s1.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["config"]["command"]["map"]["epochs"], 5);
    assert_eq!(summary["config"]["command"]["post"]["method"], "ar");
    assert_eq!(summary["metrics"]["pipeline"]["vocabulary"], 40);
    assert!(summary["metrics"]["evaluation"][0]["rho"].is_number());
}

#[test]
fn specialise_train_apply_chain() {
    let d = fixture();
    let ok = |o: Output| assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (v, a, r) = (p(&d, "v.txt"), p(&d, "a.txt"), p(&d, "r.txt"));
    let common = ["--attract", a.as_str(), "--repel", r.as_str()];
    let mut spec = vec!["specialise", "--vectors", &v];
    let s_out = p(&d, "s.txt");
    spec.extend(common);
    spec.extend(["--out", &s_out]);
    ok(run(&spec));

    let model = p(&d, "m.txt");
    let mut train = vec!["train-map", "--original", &v, "--specialised", &s_out];
    train.extend(common);
    train.extend(["--model-out", &model, "--kind", "linear", "--objective", "mse", "--epochs", "5"]);
    ok(run(&train));

    let f_out = p(&d, "f.txt");
    let mut apply = vec!["apply", "--model", &model, "--vectors", &v, "--out", &f_out, "--specialised", &s_out];
    apply.extend(common);
    ok(run(&apply));

    let final_space = postspec::embedding::load_embeddings(&f_out, None).unwrap();
    let specialised = postspec::embedding::load_embeddings(&s_out, None).unwrap();
    assert_eq!(final_space.len(), 40);
    // w0 is constrained, w30 is not.
    assert_eq!(final_space.vector("w0"), specialised.vector("w0"));
    assert_ne!(final_space.vector("w30"), specialised.vector("w30"));
}
