use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn landcover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landcover"))
        .args(args)
        .output()
        .expect("spawn landcover")
}

fn ok(args: &[&str]) -> String {
    let out = landcover(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = landcover(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let f = Fixture { _dir: dir, root };
        ok(&[
            "synth",
            "--size",
            "36",
            "--seed",
            "4",
            "--out",
            s(&f.path("scene.raw")),
            "--truth",
            s(&f.path("truth.raw")),
            "--samples",
            s(&f.path("samples.csv")),
        ]);
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn classification_workflow() {
    let f = Fixture::new();
    let scene = f.path("scene.raw");
    let stacked = f.path("stacked.raw");
    ok(&[
        "texture", "--input", s(&scene), "--band", "texture_source", "--levels", "16", "--window", "5",
        "--append", "--out", s(&stacked),
    ]);
    let with_rdvi = f.path("rdvi.raw");
    ok(&["derive", "--input", s(&stacked), "--op", "rdvi", "--inputs", "b_0,b_1", "--append", "--out", s(&with_rdvi)]);

    let model = f.path("model.json");
    ok(&[
        "train", "--raster", s(&with_rdvi), "--truth", s(&f.path("truth.raw")), "--model", "rf", "--trees", "8",
        "--seed", "3", "--out", s(&model),
    ]);
    let json = std::fs::read_to_string(&model).unwrap();
    assert!(json.starts_with("{\"model\":\"rf\""));

    let map = f.path("map.raw");
    ok(&["classify", "--model", s(&model), "--raster", s(&with_rdvi), "--out", s(&map)]);
    let report_path = f.path("report.json");
    ok(&["evaluate", "--pred", s(&map), "--ref", s(&f.path("truth.raw")), "--out", s(&report_path)]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["confusion"].as_array().unwrap().len(), 5);
    // Texture borders are nodata and stay unlabeled in the map.
    assert!(report["skipped"].as_u64().unwrap() > 0);
    assert!(report["kappa"]["kappa"].as_f64().unwrap() > 0.8);

    // A model for the stacked raster cannot classify the bare scene.
    let err = fails(&["classify", "--model", s(&model), "--raster", s(&scene), "--out", s(&map)]);
    assert!(err.contains("error[dimension_mismatch]"), "{err}");
}

#[test]
fn ensemble_training_is_deterministic() {
    let f = Fixture::new();
    let samples = f.path("samples.csv");
    for kind in ["pca-rfe", "srp-rfe", "crp-rfe"] {
        let a = f.path(&format!("{kind}-a.json"));
        let b = f.path(&format!("{kind}-b.json"));
        for out in [&a, &b] {
            ok(&[
                "train", "--samples", s(&samples), "--model", kind, "--forests", "3", "--trees", "4", "--seed", "9",
                "--out", s(out),
            ]);
        }
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    let err = fails(&[
        "train", "--samples", s(&samples), "--model", "srp-rfe", "--test-set-weighting", "--out",
        s(&f.path("x.json")),
    ]);
    assert!(err.contains("error[invalid_argument]"), "{err}");
    ok(&[
        "train", "--samples", s(&samples), "--model", "srp-rfe", "--forests", "2", "--trees", "3",
        "--train-fraction", "0.5", "--test-set-weighting", "--out", s(&f.path("x.json")),
    ]);
}

#[test]
fn tuning_outputs() {
    let f = Fixture::new();
    let samples = f.path("samples.csv");
    let trees = f.path("trees.csv");
    let stdout = ok(&[
        "tune-trees", "--samples", s(&samples), "--train-fraction", "0.3", "--counts", "1,4", "--reps", "2",
        "--out", s(&trees),
    ]);
    assert!(stdout.starts_with("optimum trees: "));
    let text = std::fs::read_to_string(&trees).unwrap();
    assert_eq!(text.lines().next().unwrap(), "param,mean_kappa,mean_kappa_se,optimum");
    assert_eq!(text.lines().count(), 3);

    let forests = f.path("forests.csv");
    ok(&[
        "tune-forests", "--samples", s(&samples), "--train-fraction", "0.3", "--model", "crp-rfe", "--trees", "3",
        "--counts", "1..2", "--reps", "2", "--out", s(&forests),
    ]);
    assert_eq!(std::fs::read_to_string(&forests).unwrap().lines().count(), 3);
    let err = fails(&[
        "tune-forests", "--samples", s(&samples), "--train-fraction", "0.3", "--model", "rf", "--out", s(&forests),
    ]);
    assert!(err.contains("error[invalid_argument]"));
}

#[test]
fn fusion_commands() {
    let f = Fixture::new();
    let scene = f.path("scene.raw");
    let fused = f.path("fused.raw");
    let fit = f.path("fit.json");
    // Fuse the whole scene with its own textured band as the auxiliary input.
    ok(&[
        "fuse", "--ms", s(&scene), "--aux", s(&scene), "--aux-band", "texture_source", "--w", "0.3", "--kernel",
        "reference", "--out", s(&fused), "--model-out", s(&fit),
    ]);
    let model: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert_eq!(model["w"].as_f64().unwrap(), 0.3);

    let bench = f.path("bench.csv");
    ok(&["bench-fusion", "--sizes", "16", "--bands", "2,3", "--reps", "3", "--out", s(&bench)]);
    let text = std::fs::read_to_string(&bench).unwrap();
    assert_eq!(text.lines().next().unwrap(), "size,bands,t_reference,t_fast,factor");
    assert_eq!(text.lines().count(), 3);
    let err = fails(&["bench-fusion", "--sizes", "8", "--reps", "3", "--out", s(&bench)]);
    assert!(err.contains("error[invalid_argument]"));
}

#[test]
fn experiment_is_reproducible() {
    let f = Fixture::new();
    let recipe = f.path("recipe.json");
    std::fs::write(
        &recipe,
        r#"{
  "datasets": [
    {"name": "spectral", "rasters": ["scene.raw"], "bands": ["b_0", "b_1", "b_2", "b_3"], "truth": "truth.raw"},
    {"name": "full", "rasters": ["scene.raw"], "truth": "truth.raw"}
  ],
  "models": ["rf", "srp-rfe"],
  "fractions": [0.1],
  "repetitions": 2,
  "seed": 5,
  "model": {"trees": 4, "forests": 2}
}"#,
    )
    .unwrap();
    let run = |name: &str| {
        let out = f.path(name);
        let classes = f.path(&format!("{name}.classes"));
        ok(&[
            "experiment", "--recipe", s(&recipe), "--timing", "false", "--out", s(&out), "--class-out", s(&classes),
        ]);
        (std::fs::read(out).unwrap(), std::fs::read(classes).unwrap())
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    let summary = String::from_utf8(a.0).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "dataset,model,fraction,mean_kappa,mean_kappa_se");
    assert_eq!(summary.lines().count(), 5);
    assert_eq!(String::from_utf8(a.1).unwrap().lines().count(), 1 + 4 * 5);

    let timed = f.path("timed.csv");
    ok(&["experiment", "--recipe", s(&recipe), "--reps", "1", "--out", s(&timed)]);
    assert!(std::fs::read_to_string(&timed).unwrap().starts_with(
        "dataset,model,fraction,mean_kappa,mean_kappa_se,mean_runtime_s\n"
    ));

    std::fs::write(&recipe, r#"{"datasets": [], "sed": 1}"#).unwrap();
    let err = fails(&["experiment", "--recipe", s(&recipe), "--out", s(&timed)]);
    assert!(err.contains("error[invalid_argument]"));
}

#[test]
fn config_file_mirrors_flags() {
    let f = Fixture::new();
    let cfg = f.path("train.json");
    let model = f.path("m.json");
    std::fs::write(
        &cfg,
        format!(r#"{{"samples": "{}", "trees": 2, "seed": 1, "out": "{}"}}"#, s(&f.path("samples.csv")), s(&model)),
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg)]);
    let from_config = std::fs::read(&model).unwrap();
    // Explicit flags override the file.
    ok(&["train", "--config", s(&cfg), "--trees", "3"]);
    assert_ne!(std::fs::read(&model).unwrap(), from_config);

    std::fs::write(&cfg, r#"{"tress": 2}"#).unwrap();
    let err = fails(&["train", "--config", s(&cfg)]);
    assert!(err.contains("error[invalid_argument]"), "{err}");
}

#[test]
fn errors_carry_categories() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.raw");
    let out = dir.path().join("o.raw");
    let err = fails(&["texture", "--input", s(&missing), "--out", s(&out)]);
    assert!(err.starts_with("error[io]"), "{err}");

    let bad = dir.path().join("bad.raw");
    std::fs::write(&bad, [0u8; 8]).unwrap();
    std::fs::write(dir.path().join("bad.raw.json"), r#"{"rows":1,"cols":1,"bands":1,"dtype":"f64","band_names":["a"],"nodata":null}"#).unwrap();
    let err = fails(&["texture", "--input", s(&bad), "--out", s(&out)]);
    assert!(err.starts_with("error[unknown_dtype]"), "{err}");

    let err = fails(&["texture", "--input", s(&missing), "--levels", "many", "--out", s(&out)]);
    assert!(err.starts_with("error[invalid_argument]"), "{err}");
}
