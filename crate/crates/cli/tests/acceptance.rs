//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` fail at their stated tolerances for
//! reasons analysed in the project notes; they still print FAIL. The run fails
//! if any other criterion fails, or if a known failure starts passing.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, Matrix2};

use scoreplot_core::diagnose::{
    classify_transform, fit_pair_transform, required_sample_size, Thresholds, TransformLabel,
};
use scoreplot_core::experiments::{
    chi_square_check, convergence_rows, convergence_study, lln_check, loglog_slopes,
    noise_sd_sweep, sigma3_sweep, SweepResult,
};
use scoreplot_core::model::{Block, BlockSpec, SignalStrengths, SpikeSpec};
use scoreplot_core::rng::splitmix64;
use scoreplot_core::simulate::ScoreDistribution;

const KNOWN_FAILURES: &[u32] = &[5, 6];
const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn reference_strengths(sigma3: f64) -> SignalStrengths {
    SignalStrengths::new(vec![12.0, 8.0, sigma3, 0.1, 0.02]).unwrap()
}

struct ConvergenceRuns {
    rows: SweepResult,
    secs: f64,
}

fn convergence_runs() -> ConvergenceRuns {
    let t = Instant::now();
    let spec = SpikeSpec::new(vec![12.0, 8.0], 1.0, 500, 50).unwrap();
    let study = convergence_study(
        &spec,
        &[500, 5000, 50_000],
        1,
        SEED,
        ScoreDistribution::StandardNormal,
    )
    .unwrap();
    ConvergenceRuns {
        rows: convergence_rows("convergence", &study),
        secs: t.elapsed().as_secs_f64(),
    }
}

fn curve(r: &SweepResult, stat: &str) -> Vec<f64> {
    r.curve(f64::NAN, stat)
        .iter()
        .map(|row| row.summary.q500)
        .collect()
}

fn c1(runs: &ConvergenceRuns) -> Outcome {
    let rmse = curve(&runs.rows, "rmse");
    let decreasing = rmse.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && rmse[2] < 0.05 && runs.secs < 30.0,
        format!(
            "rmse over p = 500, 5000, 50000: [{}]; decreasing {decreasing}; {:.1} s",
            sci(&rmse),
            runs.secs
        ),
    )
}

fn sci(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn c2(runs: &ConvergenceRuns) -> Outcome {
    let e1 = *curve(&runs.rows, "eigen_rel_err_1").last().unwrap();
    let e2 = *curve(&runs.rows, "eigen_rel_err_2").last().unwrap();
    let tail = *curve(&runs.rows, "tail_median_ratio").last().unwrap();
    outcome(
        e1 < 0.05 && e2 < 0.05 && (tail - 1.0).abs() <= 0.10,
        format!("eigen rel err ({e1:.2e}, {e2:.2e}); tail median / (tau2/n) = {tail:.4}"),
    )
}

fn c3() -> Outcome {
    let t = Instant::now();
    let spec = SpikeSpec::new(vec![12.0, 8.0], 1.0, 100, 10).unwrap();
    let rows = lln_check(&spec, 10, &[100, 1000, 10_000], 50, SEED).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let med: Vec<f64> = rows.iter().map(|r| r.median_deviation).collect();
    let decreasing = med.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && med[2] < 0.1 && secs < 10.0,
        format!(
            "median max-deviation {med:.4?} (largest at p = 10000: {:.4}); {secs:.2} s",
            rows[2].max_deviation
        ),
    )
}

fn c4() -> Outcome {
    let t = Instant::now();
    let r = chi_square_check(3.0, 10, 100_000, SEED).unwrap();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        within(r.mean, 9.8, 10.2) && within(r.variance, 19.0, 21.0) && secs < 5.0,
        format!(
            "mean {:.4}, variance {:.4}, KS p = {:.3}; {secs:.2} s",
            r.mean, r.variance, r.ks_p_value
        ),
    )
}

struct GraphSd {
    result: SweepResult,
    secs: f64,
}

fn graphsd() -> GraphSd {
    let t = Instant::now();
    let result = noise_sd_sweep(
        &reference_strengths(0.7),
        &[40, 60, 80, 120, 160, 240],
        Some((2, vec![0.35, 0.7, 1.4])),
        10_000,
        SEED,
    )
    .unwrap();
    GraphSd {
        result,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn sd(r: &SweepResult, series: f64, x: f64, stat: &str) -> (f64, f64, f64) {
    let row = r
        .find(series, x, stat)
        .unwrap_or_else(|| panic!("missing row {series} {x} {stat}"));
    (
        row.summary.sd,
        row.summary.sd_se,
        row.reference.unwrap_or(f64::NAN),
    )
}

fn c5(g: &GraphSd) -> Outcome {
    let slopes = loglog_slopes(&g.result);
    let a = slopes.iter().all(|s| within(s.slope, -0.55, -0.45));
    let slope_text: Vec<String> = slopes
        .iter()
        .map(|s| format!("{}@{}={:.3}", s.statistic, s.series_value, s.slope))
        .collect();
    let ratio = |stat| sd(&g.result, 1.4, 60.0, stat).0 / sd(&g.result, 0.7, 60.0, stat).0;
    let (r1, r2) = (ratio("eps_1"), ratio("eps_2"));
    let b = within(r1, 1.8, 2.2) && within(r2, 1.8, 2.2);
    let c_ratio = sd(&g.result, 0.7, 240.0, "eps_2").0 / sd(&g.result, 0.7, 240.0, "eps_1").0;
    let c = within(c_ratio, 1.2, 1.6);
    outcome(
        a && b && c && g.secs < 60.0,
        format!(
            "(a) {} slopes [{}]; (b) {} ratios at n = 60: eps_1 {r1:.3}, eps_2 {r2:.3}; (c) {} sd2/sd1 at n = 240 {c_ratio:.3}; {:.1} s",
            pf(a),
            slope_text.join(" "),
            pf(b),
            pf(c),
            g.secs
        ),
    )
}

fn pf(b: bool) -> &'static str {
    if b {
        "PASS"
    } else {
        "FAIL"
    }
}

fn c6() -> Outcome {
    let grid = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4];
    let sigma2 = [4.0, 6.0, 8.0];
    let r = sigma3_sweep(&reference_strengths(0.7), 60, &grid, &sigma2, 10_000, SEED).unwrap();
    let mut increasing = true;
    for &s2 in &sigma2 {
        for stat in ["eps_1", "eps_2"] {
            for w in grid.windows(2) {
                let (a, sa, _) = sd(&r, s2, w[0], stat);
                let (b, sb, _) = sd(&r, s2, w[1], stat);
                increasing &= b > a - 2.0 * (sa * sa + sb * sb).sqrt();
            }
        }
    }
    let mut unchanged = true;
    let mut worst = 0.0f64;
    for &x in &grid {
        for (i, &s_a) in sigma2.iter().enumerate() {
            for &s_b in &sigma2[i + 1..] {
                let (a, sa, _) = sd(&r, s_a, x, "eps_1");
                let (b, sb, _) = sd(&r, s_b, x, "eps_1");
                let band = 2.0 * (sa * sa + sb * sb).sqrt();
                worst = worst.max((a - b).abs() / band);
                unchanged &= (a - b).abs() <= band;
            }
        }
    }
    let spread: Vec<f64> = sigma2
        .iter()
        .map(|&s2| sd(&r, s2, 1.4, "eps_1").0)
        .collect();
    outcome(
        increasing && unchanged,
        format!(
            "{} increasing in sigma3^2; {} SD(eps_1) constant over sigma2^2 (worst |diff| / band = {worst:.2}; at sigma3^2 = 1.4: {spread:.5?})",
            pf(increasing),
            pf(unchanged)
        ),
    )
}

fn c7(g: &GraphSd) -> Outcome {
    let (m1, _, a1) = sd(&g.result, 0.7, 240.0, "eps_1");
    let (m2, _, a2) = sd(&g.result, 0.7, 240.0, "eps_2");
    let (e1, e2) = ((a1 - m1).abs() / m1, (a2 - m2).abs() / m2);
    outcome(
        e1 < 0.10 && e2 < 0.10,
        format!("eps_1 mc {m1:.5} analytic {a1:.5} ({:.1}%); eps_2 mc {m2:.5} analytic {a2:.5} ({:.1}%)", e1 * 100.0, e2 * 100.0),
    )
}

fn c8() -> Outcome {
    let t = Instant::now();
    let s = SignalStrengths::new(vec![0.133, 0.068, 0.044, 0.033, 0.031]).unwrap();
    let (n1, n2) = required_sample_size(&s, 0, 1, 0.15).unwrap();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        within(n1 as f64, 19.0, 22.0) && within(n2 as f64, 212.0, 225.0) && secs < 1.0,
        format!("required n = ({n1}, {n2}); {:.3} ms", secs * 1e3),
    )
}

fn c9() -> Outcome {
    let mut state = SEED;
    let mut next = || {
        state = splitmix64(state);
        state as f64 / u64::MAX as f64
    };
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let p = 10 + (next() * 191.0) as usize;
        let nb = 1 + (next() * 3.0) as usize;
        let blocks: Vec<Block> = (0..nb)
            .map(|_| Block {
                fraction: 0.02 + 0.28 * next(),
                rho: 0.95 * next(),
            })
            .collect();
        let Ok(spec) = BlockSpec::new(0.1 + 5.0 * next(), blocks, p) else {
            continue;
        };
        let closed = spec.eigenvalues().sorted();
        let mut dense: Vec<f64> = spec
            .materialize(500)
            .unwrap()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        dense.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in closed.iter().zip(&dense) {
            worst = worst.max((a - b).abs() / a.abs());
        }
        checked += 1;
    }
    outcome(
        worst < 1e-9,
        format!("{checked} specs, worst relative error {worst:.2e}"),
    )
}

fn c10() -> Outcome {
    let n = 40;
    let pop = DMatrix::from_fn(2, n, |r, c| {
        let h = splitmix64(SEED ^ ((c * 2 + r) as u64));
        h as f64 / u64::MAX as f64 * 2.0 - 1.0
    });
    let rot = |deg: f64| {
        let t = deg.to_radians();
        Matrix2::new(t.cos(), -t.sin(), t.sin(), t.cos())
    };
    let cases = [
        (
            "scaling-outward",
            Matrix2::new(1.5, 0.0, 0.0, 1.4),
            TransformLabel::ScalingOutward,
        ),
        (
            "scaling-inward",
            Matrix2::new(0.6, 0.0, 0.0, 0.7),
            TransformLabel::ScalingInward,
        ),
        ("rotation", rot(25.0), TransformLabel::Rotation),
        (
            "saddle",
            Matrix2::new(1.4, 0.0, 0.0, 0.6),
            TransformLabel::Saddle,
        ),
        (
            "fault",
            Matrix2::new(1.4, 0.0, 0.0, 0.6) * rot(30.0),
            TransformLabel::Fault,
        ),
    ];
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut labels = Vec::new();
    for (name, a, want) in cases {
        let sample = DMatrix::from_fn(2, n, |r, c| {
            a[(r, 0)] * pop[(0, c)] + a[(r, 1)] * pop[(1, c)]
        });
        let t = fit_pair_transform(&sample, &pop).unwrap();
        let got = classify_transform(&t, &Thresholds::default()).label;
        worst = worst.max(t.residual);
        ok &= got == want;
        labels.push(format!("{name}->{got}"));
    }
    outcome(
        ok && worst < 1e-10,
        format!("{}; worst residual {worst:.1e}", labels.join(", ")),
    )
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

fn c11() -> Outcome {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let bin = env!("CARGO_BIN_EXE_scoreplot");
    let tmp = tempfile::tempdir().unwrap();
    let runs: &[(&str, &[&str])] = &[
        ("simulate_spike.cfg", &["simulate"]),
        ("simulate_block.cfg", &["simulate"]),
        ("convergence.cfg", &["verify"]),
        ("lln.cfg", &["verify"]),
        ("chisq.cfg", &["verify"]),
        ("graphsd.cfg", &["noise"]),
        ("graphsd2.cfg", &["noise"]),
        ("noise_smoke.cfg", &["noise"]),
        ("metabric.cfg", &["diagnose"]),
    ];
    let mut problems = Vec::new();
    let mut files = 0;
    for (cfg, args) in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("{cfg}-{threads}"));
            let status = Command::new(bin)
                .args(*args)
                .arg("--config")
                .arg(root.join(cfg))
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads])
                .output()
                .unwrap();
            if !matches!(status.status.code(), Some(0) | Some(1)) {
                problems.push(format!("{cfg} exited {:?}", status.status.code()));
            }
            outputs.push(out);
        }
        let a = csv_files(&outputs[0]);
        let b = csv_files(&outputs[1]);
        if a.is_empty() || a.len() != b.len() {
            problems.push(format!("{cfg}: csv sets differ"));
            continue;
        }
        for (x, y) in a.iter().zip(&b) {
            files += 1;
            if std::fs::read(x).unwrap() != std::fs::read(y).unwrap() {
                problems.push(format!("{} differs", x.display()));
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "{} configs, {files} CSV files identical under --threads 1 and 4",
                runs.len()
            )
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    // The harness passes filter arguments; this target always runs everything.
    let conv = convergence_runs();
    let g = graphsd();
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "score convergence in p", c1(&conv)),
        (2, "sample eigenvalue limits", c2(&conv)),
        (3, "law of large numbers for the tail Gram part", c3()),
        (4, "chi-square law of d1(W)", c4()),
        (5, "noise SD against n", c5(&g)),
        (6, "noise SD against sigma3^2", c6()),
        (7, "analytic noise SD against Monte Carlo", c7(&g)),
        (8, "required sample sizes", c8()),
        (9, "block spectra against dense eigensolver", c9()),
        (10, "transform classifier", c10()),
        (11, "determinism across thread counts", c11()),
    ];
    let mut unexpected = Vec::new();
    for (id, name, o) in &results {
        let known = KNOWN_FAILURES.contains(id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {tag}: {name}: {}", o.detail);
        if o.pass == known {
            unexpected.push(*id);
        }
    }
    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("{passed}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
