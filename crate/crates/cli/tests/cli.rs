use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scoreplot_core::diagnose::{align_signs, classify_transform, fit_pair_transform, Thresholds};
use scoreplot_core::io::{read_data_matrix, read_table_path, Orientation};
use scoreplot_core::pca::{pca_decompose, Normalization};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scoreplot"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SPIKE: &str = r#"
seed = 9
[model]
type = "spike"
strengths = [12.0, 8.0, 3.0]
tau2 = 1.0
p = 400
n = 30
"#;

#[test]
fn simulate_writes_files_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.cfg");
    fs::write(&cfg, SMALL_SPIKE).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap()], out);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in [
        "data.csv",
        "population_scores.csv",
        "metadata.toml",
        "manifest.toml",
    ] {
        assert!(a.join(f).exists(), "{f}");
    }
    for f in ["data.csv", "population_scores.csv", "metadata.toml"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let x = read_data_matrix(&a.join("data.csv"), Orientation::VarsRows).unwrap();
    assert_eq!(x.shape(), (400, 30));
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("subcommand = \"simulate\"") && manifest.contains("seed = 9"));
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.cfg");
    fs::write(&cfg, SMALL_SPIKE).unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run(&["simulate", "--config", cfg.to_str().unwrap()], &a);
    let o = run(
        &[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "10",
        ],
        &b,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        fs::read(a.join("data.csv")).unwrap(),
        fs::read(b.join("data.csv")).unwrap()
    );
    assert!(fs::read_to_string(b.join("manifest.toml"))
        .unwrap()
        .contains("seed = 10"));
}

#[test]
fn missing_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(
        &cfg,
        "[model]\ntype = \"spike\"\nstrengths = [2.0]\ntau2 = 1.0\np = 10\nn = 5\n",
    )
    .unwrap();
    let o = run(
        &["simulate", "--config", cfg.to_str().unwrap()],
        &tmp.path().join("o"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(2)
    );
    assert_eq!(
        bin()
            .args(["simulate", "--orientation", "sideways"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(2)
    );
    let o = run(&["verify"], &tmp.path().join("o"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn tight_tolerance_fails_check() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("v.cfg");
    fs::write(
        &cfg,
        "seed = 1\n[chisq]\nstrength = 2.0\nn = 10\nreplicates = 2000\nmean_band = [9.999, 10.001]\nvariance_band = [0.0, 100.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("o");
    let o = run(&["verify", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("chisq: mean"), "{}", stderr(&o));
    assert!(out.join("chisq.csv").exists() && out.join("manifest.toml").exists());
}

#[test]
fn bundled_verify_configs_pass() {
    let tmp = tempfile::tempdir().unwrap();
    for c in ["convergence.cfg", "lln.cfg", "chisq.cfg"] {
        let out = tmp.path().join(c);
        let o = run(
            &["verify", "--config", configs().join(c).to_str().unwrap()],
            &out,
        );
        assert_eq!(o.status.code(), Some(0), "{c}: {}", stderr(&o));
        let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
        assert!(!summary.contains("FAIL"), "{summary}");
    }
}

#[test]
fn noise_smoke_has_analytic_column() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let start = std::time::Instant::now();
    let o = run(
        &[
            "noise",
            "--config",
            configs().join("noise_smoke.cfg").to_str().unwrap(),
        ],
        &out,
    );
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("smoke.csv")).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "analytic_sd").unwrap();
    let mut rows = 0;
    for l in lines {
        let v: f64 = l.split(',').nth(col).unwrap().parse().unwrap();
        assert!(v > 0.0);
        rows += 1;
    }
    assert_eq!(rows, 4);
    assert!(!text.contains('\r'));
}

#[test]
fn noise_with_two_components_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("n.cfg");
    fs::write(
        &cfg,
        "seed = 1\nstrengths = [3.0, 1.0]\n[[figure]]\nname = \"a\"\nx = \"n\"\nx_values = [10]\n",
    )
    .unwrap();
    let o = run(
        &["noise", "--config", cfg.to_str().unwrap()],
        &tmp.path().join("o"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("at least 3 components"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn metabric_required_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(
        &[
            "diagnose",
            "--config",
            configs().join("metabric.cfg").to_str().unwrap(),
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = fs::read_to_string(out.join("required_n.csv")).unwrap();
    let first = t.lines().nth(1).unwrap();
    let f: Vec<&str> = first.split(',').collect();
    assert_eq!((f[0], f[1]), ("1", "2"));
    let (n1, n2): (usize, usize) = (f[4].parse().unwrap(), f[5].parse().unwrap());
    assert!(
        (19..=22).contains(&n1) && (212..=225).contains(&n2),
        "{n1} {n2}"
    );
    assert!(
        out.join("scree.csv").exists()
            && out.join("report.toml").exists()
            && out.join("manifest.toml").exists()
    );
}

#[test]
fn diagnose_empty_and_malformed_files() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = run(
        &["diagnose", "--matrix", empty.to_str().unwrap()],
        &tmp.path().join("o"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "variable,o1,o2,o3\nv1,1,2,3\nv2,4,oops,6\n").unwrap();
    let o = run(
        &["diagnose", "--matrix", bad.to_str().unwrap()],
        &tmp.path().join("o2"),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3, column 3"), "{}", stderr(&o));
}

#[test]
fn diagnose_simulated_pair_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("s.cfg");
    fs::write(&cfg, SMALL_SPIKE).unwrap();
    let sim = tmp.path().join("sim");
    for orientation in ["vars-rows", "obs-rows"] {
        let o = run(
            &[
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--orientation",
                orientation,
            ],
            &sim.join(orientation),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    let mut reports = Vec::new();
    for orientation in ["vars-rows", "obs-rows"] {
        let dir = sim.join(orientation);
        let out = tmp.path().join(format!("diag-{orientation}"));
        let o = run(
            &[
                "diagnose",
                "--matrix",
                dir.join("data.csv").to_str().unwrap(),
                "--population-scores",
                dir.join("population_scores.csv").to_str().unwrap(),
                "--centered",
                "false",
                "--m",
                "3",
                "--orientation",
                orientation,
            ],
            &out,
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        reports.push(fs::read_to_string(out.join("report.toml")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);

    let dir = sim.join("vars-rows");
    let x = read_data_matrix(&dir.join("data.csv"), Orientation::VarsRows).unwrap();
    let pop = read_table_path(&dir.join("population_scores.csv"))
        .unwrap()
        .values;
    let r = pca_decompose(&x, 2, Normalization::default()).unwrap();
    let mut sample = r.std_scores.rows(0, 2).into_owned();
    let population = pop.rows(0, 2).into_owned();
    align_signs(&mut sample, &population);
    let t = fit_pair_transform(&sample, &population).unwrap();
    let label = classify_transform(&t, &Thresholds::default())
        .label
        .to_string();
    assert!(
        reports[0].contains(&format!("label = \"{label}\"")),
        "{label}\n{}",
        reports[0]
    );
}
