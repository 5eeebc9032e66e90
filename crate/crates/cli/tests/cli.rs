use std::path::Path;
use std::process::{Command, Output};

fn wfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wfc")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const TINY: &[&str] = &[
    "--set", "epochs=4",
    "--set", "classifier.hidden=8",
    "--set", "critic.hidden=16",
    "--set", "demonic.hidden=8",
    "--set", "probe.hidden=8",
    "--set", "probe.epochs=10",
];

fn with_tiny<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(TINY);
    v
}

fn gen(path: &Path, d: &str) {
    let p = path.to_str().unwrap();
    let o = wfc(&["gen-data", "--file", p, "--set", "synthetic.n_per_cell=120", "--set", &format!("synthetic.d={d}")]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
}

#[test]
fn selftest_passes() {
    let o = wfc(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    assert!(!text(&o.stdout).contains("FAIL"));
}

#[test]
fn configuration_errors_exit_with_1() {
    let o = wfc(&["train", "--beta", "banana"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("beta"), "{}", text(&o.stderr));

    let o = wfc(&["train", "--set", "colour=red"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("colour"));

    assert_eq!(code(&wfc(&["train", "--data", "/no/such/file"])), 1);
    assert_eq!(code(&wfc(&["train", "--no-such-flag"])), 1);
    assert_eq!(code(&wfc(&["--help"])), 0);
}

#[test]
fn file_workflow_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.txt");
    gen(&data, "8");
    let data_s = data.to_str().unwrap();

    let model = dir.path().join("demonic.wfc");
    let o = wfc(&with_tiny(&["train-demonic", "--data", data_s, "--model", model.to_str().unwrap()]));
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("held-out"));

    let runs: Vec<_> = ["a", "b"].iter().map(|r| dir.path().join(r)).collect();
    for (run, seed) in runs.iter().zip(["1", "2"]) {
        let o = wfc(&with_tiny(&[
            "train",
            "--data", data_s,
            "--demonic", model.to_str().unwrap(),
            "--seed", seed,
            "--out", run.to_str().unwrap(),
        ]));
        assert_eq!(code(&o), 0, "{}", text(&o.stderr));
        assert!(run.join("report.csv").is_file());
        assert!(run.join("wfc").join(format!("model_{seed}.wfc")).is_file());
    }

    let o = wfc(&["compare", runs[0].to_str().unwrap(), runs[1].to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let table = text(&o.stdout);
    assert!(table.contains("#1 wfc") && table.contains("#2 ce") && table.contains("DTO"), "{table}");

    let clf = runs[0].join("wfc").join("model_1.wfc");
    let o = wfc(&with_tiny(&["eval", "--data", data_s, "--model", clf.to_str().unwrap()]));
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let record = text(&o.stdout);
    assert!(record.contains("accuracy=") && record.contains("gap=") && record.contains("leakage="), "{record}");
}

#[test]
fn failed_arms_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let other = dir.path().join("other.txt");
    gen(&other, "5");
    let model = dir.path().join("demonic.wfc");
    let o = wfc(&with_tiny(&["train-demonic", "--data", other.to_str().unwrap(), "--model", model.to_str().unwrap()]));
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));

    let o = wfc(&with_tiny(&[
        "train",
        "--set", "synthetic.n_per_cell=120",
        "--set", "synthetic.d=8",
        "--demonic", model.to_str().unwrap(),
    ]));
    assert_eq!(code(&o), 2, "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("failures"));
}

#[test]
fn sweep_runs_one_arm_per_beta() {
    let o = wfc(&with_tiny(&[
        "sweep",
        "--betas", "0,2",
        "--set", "synthetic.n_per_cell=120",
        "--set", "synthetic.d=8",
    ]));
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("beta_0") && out.contains("beta_2"), "{out}");
}
