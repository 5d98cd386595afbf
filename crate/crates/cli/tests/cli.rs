//! Runs the built `csifb` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use csifb::bases::Basis;
use csifb::quantization::Codebook;

const MSE_CONFIG: &str = r#"
eta = [0.125, 0.25]
trials = 20
drops = 2
seed = 5
covariance_samples = 200
[geometry]
kind = "upa"
n_v = 4
n_h = 4
d_over_lambda = [0.1]
[[arms]]
scheme = "truncation"
basis = "klt"
[[arms]]
scheme = "omp"
basis = "dct"
"#;

fn csifb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csifb")).args(args).output().expect("run csifb")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn mse_sweep_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mse.toml", MSE_CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&csifb(&["mse-sweep", "--config", &cfg, "--seed", "42", "--trials", "25", "--out", out.to_str().unwrap()]));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.config.json").exists());
    let sidecar = std::fs::read_to_string(dir.path().join("a.config.json")).unwrap();
    assert!(sidecar.contains("\"seed\": 42") && sidecar.contains("\"trials\": 25"));

    let stdout = csifb(&["mse-sweep", "--config", &cfg, "--seed", "42", "--trials", "25"]);
    ok(&stdout);
    assert_eq!(stdout.stdout, text);

    let other = csifb(&["mse-sweep", "--config", &cfg, "--seed", "43", "--trials", "25"]);
    ok(&other);
    assert_ne!(other.stdout, text);
}

#[test]
fn config_errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "eta = [0.1]\ntrials = \"many\"\n");
    let out = csifb(&["mse-sweep", "--config", &bad]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("trials") && err.contains("line 2"), "{err}");

    let invalid = write(dir.path(), "invalid.toml", &MSE_CONFIG.replace("n_h = 4", "n_h = 0"));
    let out = csifb(&["mse-sweep", "--config", &invalid]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry"));

    let out = csifb(&["mse-sweep", "--config", &dir.path().join("missing.toml").to_string_lossy()]);
    assert!(!out.status.success());
}

#[test]
fn trained_codebook_is_reusable_by_rate_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let train_cfg = write(
        dir.path(),
        "train.toml",
        r#"
        m = [3]
        training_size = 500
        covariance_samples = 200
        seed = 9
        [geometry]
        kind = "upa"
        n_v = 4
        n_h = 4
        d_over_lambda = [0.1]
        [[arms]]
        scheme = "truncation"
        basis = "klt"
        quantizer = "lbg"
        "#,
    );
    let cb_path = dir.path().join("cb.bin");
    ok(&csifb(&["train-codebook", "--config", &train_cfg, "--bits", "5", "--out", cb_path.to_str().unwrap()]));
    let cb = Codebook::load(&cb_path).unwrap();
    assert_eq!((cb.bits(), cb.dim(), cb.len()), (5, 3, 32));

    let rate_cfg = write(
        dir.path(),
        "rate.toml",
        &format!(
            r#"
            n_users = 2
            m = [3]
            snr_db = [10]
            trials = 20
            drops = 1
            covariance_samples = 200
            seed = 9
            [geometry]
            kind = "upa"
            n_v = 4
            n_h = 4
            d_over_lambda = [0.1]
            [[arms]]
            scheme = "truncation"
            basis = "klt"
            quantizer = "lbg"
            codebook = {:?}
            "#,
            cb_path.to_str().unwrap()
        ),
    );
    let out = csifb(&["rate-sweep", "--config", &rate_cfg]);
    ok(&out);
    let csv = String::from_utf8(out.stdout).unwrap();
    let row = csv
        .lines()
        .find(|l| l.starts_with("truncation+lbg,") && l.contains("sum_rate"))
        .expect("quantized rate row");
    assert!(row.contains(",5,10.0,sum_rate,") && row.ends_with(",20,ok"), "{row}");
    assert!(csv.lines().any(|l| l.starts_with("perfect,none,")));
}

#[test]
fn gen_basis_writes_loadable_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mse.toml", MSE_CONFIG);
    let klt = dir.path().join("klt.bin");
    let dct = dir.path().join("dct.bin");
    ok(&csifb(&["gen-basis", "--config", &cfg, "--out", klt.to_str().unwrap()]));
    ok(&csifb(&["gen-basis", "--config", &cfg, "--basis", "dct", "--out", dct.to_str().unwrap()]));
    let klt = Basis::load(&klt).unwrap();
    let ev = klt.eigenvalues().unwrap();
    assert_eq!(klt.dim(), 16);
    assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(Basis::load(&dct).unwrap().dim(), 16);

    let out = csifb(&["gen-basis", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = csifb::harness::ExperimentConfig::load(&path).unwrap();
        let sweep = if cfg.snr_db.is_empty() {
            csifb::harness::SweepKind::Mse
        } else {
            csifb::harness::SweepKind::Rate
        };
        cfg.validate(sweep).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 4);
}
