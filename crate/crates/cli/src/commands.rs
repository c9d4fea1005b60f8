use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use nalgebra::DMatrix;
use serde::Serialize;

use scoreplot_core::config::{self, DiagnoseConfig, NoiseConfig, SimulateConfig, VerifyConfig};
use scoreplot_core::diagnose::{
    align_signs, classify_transform, estimate_signals, fit_pair_transform, required_sample_size,
    PairTransform, SpikeCount, TransformClass,
};
use scoreplot_core::experiments::{
    chi_square_check, convergence_rows, convergence_study, lln_check, loglog_slopes, noise_sweep,
    SweepResult,
};
use scoreplot_core::io::{self, format_f64, Orientation};
use scoreplot_core::limit::noise_variance_asymptotic;
use scoreplot_core::model::SignalStrengths;
use scoreplot_core::pca::{pca_decompose, Normalization};
use scoreplot_core::simulate::generate_dataset;

use crate::manifest::RunManifest;
use crate::GlobalArgs;

/// Failed checks, one message each; empty on success.
pub type Failures = Vec<String>;

fn config_path(g: &GlobalArgs) -> Result<&Path> {
    g.config.as_deref().context("missing --config <FILE>")
}

fn out_dir(g: &GlobalArgs) -> Result<&Path> {
    fs::create_dir_all(&g.out)
        .with_context(|| format!("cannot create output directory {}", g.out.display()))?;
    Ok(&g.out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn check(summary: &mut Vec<String>, failures: &mut Failures, ok: bool, line: String) {
    summary.push(format!("{} {line}", if ok { "PASS" } else { "FAIL" }));
    if !ok {
        failures.push(line);
    }
}

fn write_summary(dir: &Path, lines: &[String]) -> Result<()> {
    for l in lines {
        println!("{l}");
    }
    let mut text = lines.join("\n");
    text.push('\n');
    fs::write(dir.join("summary.txt"), text).context("writing summary.txt")
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

pub fn simulate(g: &GlobalArgs) -> Result<Failures> {
    let mut cfg: SimulateConfig = config::load(config_path(g)?)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let n = cfg.sample_size()?;
    let dir = out_dir(g)?;
    let ds = generate_dataset(&cfg.model, n, cfg.scores, cfg.seed)?;
    let m = cfg.model.spike_count();

    io::write_data_matrix(create(dir, "data.csv")?, &ds.x, g.orientation)?;
    io::write_scores(
        create(dir, "population_scores.csv")?,
        &ds.top_scores(m).transpose(),
        g.orientation,
    )?;

    #[derive(Serialize)]
    struct Metadata<'a> {
        p: usize,
        n: usize,
        spikes: usize,
        seed: u64,
        orientation: String,
        data_file: &'a str,
        scores_file: &'a str,
        /// Population eigenvalues of the spiked components.
        spike_eigenvalues: Vec<f64>,
        scores: scoreplot_core::simulate::ScoreDistribution,
        model: &'a scoreplot_core::model::CovarianceModel,
    }
    io::write_toml(
        &dir.join("metadata.toml"),
        &Metadata {
            p: ds.p(),
            n,
            spikes: m,
            seed: cfg.seed,
            orientation: g.orientation.to_string(),
            data_file: "data.csv",
            scores_file: "population_scores.csv",
            spike_eigenvalues: ds.eigenvalues()[..m].to_vec(),
            scores: cfg.scores,
            model: &cfg.model,
        },
    )?;
    RunManifest::new("simulate", g, Some(cfg.seed), &cfg).write(dir)?;
    println!("wrote {} x {} data matrix to {}", ds.p(), n, dir.display());
    Ok(Vec::new())
}

pub fn verify(g: &GlobalArgs) -> Result<Failures> {
    let mut cfg: VerifyConfig = config::load(config_path(g)?)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let dir = out_dir(g)?;
    let mut summary = Vec::new();
    let mut failures = Vec::new();

    if let Some(t) = &cfg.convergence {
        let study = convergence_study(&t.spec()?, &t.p_grid, t.replicates, cfg.seed, t.scores)?;
        let rows = convergence_rows("convergence", &study);
        io::write_tidy(create(dir, "convergence.csv")?, &rows.rows, "reference")?;
        let medians = |stat: &str| -> Vec<f64> {
            rows.curve(f64::NAN, stat)
                .iter()
                .map(|r| r.summary.q500)
                .collect()
        };
        let rmse = medians("rmse");
        let last_p = *t.p_grid.last().unwrap_or(&0);
        let final_rmse = *rmse.last().unwrap_or(&f64::NAN);
        check(
            &mut summary,
            &mut failures,
            final_rmse < t.max_final_rmse,
            format!(
                "convergence: rmse at p = {last_p} is {} (limit {})",
                format_f64(final_rmse),
                t.max_final_rmse
            ),
        );
        if t.require_decreasing {
            check(
                &mut summary,
                &mut failures,
                strictly_decreasing(&rmse),
                format!("convergence: rmse decreasing over p_grid {:?}", rmse),
            );
        }
        for j in 1..=t.strengths.len() {
            let e = *medians(&format!("eigen_rel_err_{j}"))
                .last()
                .unwrap_or(&f64::NAN);
            check(
                &mut summary,
                &mut failures,
                e < t.max_eigen_rel_err,
                format!(
                    "convergence: eigen_rel_err_{j} at p = {last_p} is {} (limit {})",
                    format_f64(e),
                    t.max_eigen_rel_err
                ),
            );
        }
        if t.tau2 > 0.0 {
            let r = *medians("tail_median_ratio").last().unwrap_or(&f64::NAN);
            check(
                &mut summary,
                &mut failures,
                (r - 1.0).abs() <= t.tail_median_tol,
                format!(
                    "convergence: tail_median_ratio at p = {last_p} is {} (tolerance {})",
                    format_f64(r),
                    t.tail_median_tol
                ),
            );
        }
    }

    if let Some(l) = &cfg.lln {
        let rows = lln_check(&l.spec()?, l.n, &l.p_grid, l.replicates, cfg.seed)?;
        let records: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.p.to_string(),
                    r.deviations.len().to_string(),
                    format_f64(r.median_deviation),
                    format_f64(r.max_deviation),
                ]
            })
            .collect();
        io::write_records(
            create(dir, "lln.csv")?,
            &["p", "replicates", "median_deviation", "max_deviation"],
            &records,
        )?;
        let med: Vec<f64> = rows.iter().map(|r| r.median_deviation).collect();
        let last = *med.last().unwrap_or(&f64::NAN);
        check(
            &mut summary,
            &mut failures,
            last < l.max_final_deviation,
            format!(
                "lln: median deviation at p = {} is {} (limit {})",
                rows.last().map_or(0, |r| r.p),
                format_f64(last),
                l.max_final_deviation
            ),
        );
        if l.require_decreasing {
            check(
                &mut summary,
                &mut failures,
                strictly_decreasing(&med),
                format!("lln: median deviation decreasing {:?}", med),
            );
        }
    }

    if let Some(c) = &cfg.chisq {
        let r = chi_square_check(c.strength, c.n, c.replicates, cfg.seed)?;
        io::write_records(
            create(dir, "chisq.csv")?,
            &[
                "n",
                "replicates",
                "mean",
                "variance",
                "ks_statistic",
                "ks_p_value",
            ],
            &[vec![
                r.n.to_string(),
                r.replicates.to_string(),
                format_f64(r.mean),
                format_f64(r.variance),
                format_f64(r.ks_statistic),
                format_f64(r.ks_p_value),
            ]],
        )?;
        let within = |v: f64, b: [f64; 2]| v >= b[0] && v <= b[1];
        check(
            &mut summary,
            &mut failures,
            within(r.mean, c.mean_band),
            format!("chisq: mean {} in {:?}", format_f64(r.mean), c.mean_band),
        );
        check(
            &mut summary,
            &mut failures,
            within(r.variance, c.variance_band),
            format!(
                "chisq: variance {} in {:?}",
                format_f64(r.variance),
                c.variance_band
            ),
        );
    }

    write_summary(dir, &summary)?;
    RunManifest::new("verify", g, Some(cfg.seed), &cfg).write(dir)?;
    Ok(failures)
}

fn write_slopes(
    dir: &Path,
    name: &str,
    result: &SweepResult,
    band: [f64; 2],
    summary: &mut Vec<String>,
    failures: &mut Failures,
) -> Result<()> {
    let slopes = loglog_slopes(result);
    let records: Vec<Vec<String>> = slopes
        .iter()
        .map(|s| {
            vec![
                format_f64(s.series_value),
                s.statistic.clone(),
                format_f64(s.slope),
            ]
        })
        .collect();
    io::write_records(
        create(dir, &format!("{name}_slopes.csv"))?,
        &["series_value", "statistic", "slope"],
        &records,
    )?;
    for s in &slopes {
        check(
            summary,
            failures,
            s.slope >= band[0] && s.slope <= band[1],
            format!(
                "{name}: log-log slope of {} (series {}) is {} (band {:?})",
                s.statistic,
                format_f64(s.series_value),
                format_f64(s.slope),
                band
            ),
        );
    }
    Ok(())
}

pub fn noise(g: &GlobalArgs) -> Result<Failures> {
    let mut cfg: NoiseConfig = config::load(config_path(g)?)?;
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    let studies = cfg.studies()?;
    let dir = out_dir(g)?;
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for (study, band) in &studies {
        let result = noise_sweep(study)?;
        io::write_tidy(
            create(dir, &format!("{}.csv", study.name))?,
            &result.rows,
            "analytic_sd",
        )?;
        summary.push(format!("{}: {} rows", study.name, result.rows.len()));
        if let Some(b) = band {
            write_slopes(dir, &study.name, &result, *b, &mut summary, &mut failures)?;
        }
    }
    write_summary(dir, &summary)?;
    RunManifest::new("noise", g, Some(cfg.seed), &cfg).write(dir)?;
    Ok(failures)
}

#[derive(Args, Debug, Clone)]
pub struct DiagnoseArgs {
    /// Data matrix CSV (layout from --orientation).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Single-column CSV of descending sample eigenvalues.
    #[arg(long)]
    pub eigenvalues: Option<PathBuf>,
    /// Population score CSV (components by observations in vars-rows layout).
    #[arg(long)]
    pub population_scores: Option<PathBuf>,
    /// Number of variables (needed with --eigenvalues).
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of spikes; chosen from the largest scree gap when absent.
    #[arg(long)]
    pub m: Option<usize>,
    /// Sample size at which to report noise SDs.
    #[arg(long)]
    pub n: Option<usize>,
    /// Target noise SD for the required sample sizes.
    #[arg(long)]
    pub target_sd: Option<f64>,
}

#[derive(Serialize)]
struct PairRow {
    j: usize,
    k: usize,
    sd_j: Option<f64>,
    sd_k: Option<f64>,
    n_j: usize,
    n_k: usize,
}

#[derive(Serialize)]
struct DiagnosticReport {
    source: String,
    p: Option<usize>,
    n: Option<usize>,
    normalization: Option<Normalization>,
    m_hat: usize,
    sigma2_hat: Vec<f64>,
    target_sd: f64,
    pair: [usize; 2],
    pairs: Vec<PairRow>,
    flipped_signs: Vec<usize>,
    transform: Option<PairTransform>,
    class: Option<TransformClass>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct DiagnoseEcho<'a> {
    matrix: Option<String>,
    eigenvalues: Option<String>,
    population_scores: Option<String>,
    settings: &'a DiagnoseConfig,
}

fn show(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn read_scores(path: &Path, orientation: Orientation) -> Result<DMatrix<f64>> {
    let t = io::read_table_path(path)?;
    Ok(match orientation {
        Orientation::VarsRows => t.values,
        Orientation::ObsRows => t.values.transpose(),
    })
}

pub fn diagnose(g: &GlobalArgs, a: &DiagnoseArgs) -> Result<Failures> {
    let mut cfg: DiagnoseConfig = match &g.config {
        Some(p) => config::load(p)?,
        None => DiagnoseConfig::default(),
    };
    cfg.p = a.p.or(cfg.p);
    cfg.m = a.m.or(cfg.m);
    cfg.n = a.n.or(cfg.n);
    cfg.target_sd = a.target_sd.unwrap_or(cfg.target_sd);
    let [pj, pk] = cfg.pair;
    if pj == 0 || pk == 0 || pj == pk {
        bail!("invalid pair [{pj}, {pk}]");
    }
    let spike_count = cfg.m.map_or(SpikeCount::Auto, SpikeCount::Fixed);
    let mut notes = Vec::new();

    let norm = if g.centered {
        Normalization::sample_covariance()
    } else {
        Normalization::default()
    };
    let mut pca = None;
    let (source, scree, sigma2_hat, m_hat) = if let Some(path) = &a.matrix {
        let x = io::read_data_matrix(path, g.orientation)?;
        let (p, n) = x.shape();
        let max_k = p.min(if g.centered { n.saturating_sub(1) } else { n });
        let k = pj.max(pk).min(max_k).max(1);
        let r = pca_decompose(&x, k, norm).with_context(|| format!("PCA of {}", path.display()))?;
        for w in &r.warnings {
            notes.push(format!(
                "component {} has a vanishing eigenvalue; its scores were zeroed",
                w.component + 1
            ));
        }
        cfg.p = Some(p);
        cfg.n = cfg.n.or(Some(n));
        let e = estimate_signals(&r.eigenvalues, p, spike_count)?;
        pca = Some(r);
        ("matrix".to_string(), e.scree, e.sigma2_hat, e.m_hat)
    } else if let Some(eig) = a
        .eigenvalues
        .as_ref()
        .map(|p| io::read_vector(p))
        .transpose()?
        .or(cfg.eigenvalues.clone())
    {
        let p = cfg
            .p
            .context("eigenvalue input needs the number of variables (--p or `p` in the config)")?;
        let e = estimate_signals(&eig, p, spike_count)?;
        ("eigenvalues".to_string(), e.scree, e.sigma2_hat, e.m_hat)
    } else if let Some(s) = &cfg.strengths {
        ("strengths".to_string(), Vec::new(), s.clone(), s.len())
    } else {
        bail!("diagnose needs --matrix, --eigenvalues, or `eigenvalues`/`strengths` in the config");
    };

    let mut pairs = Vec::new();
    if m_hat >= 2 {
        let strengths =
            SignalStrengths::new(sigma2_hat.clone()).context("estimated signal strengths")?;
        for j in 0..m_hat {
            for k in j + 1..m_hat {
                let sd = cfg
                    .n
                    .map(|n| noise_variance_asymptotic(&strengths, n, j, k))
                    .transpose()?;
                let (n_j, n_k) = required_sample_size(&strengths, j, k, cfg.target_sd)?;
                pairs.push(PairRow {
                    j: j + 1,
                    k: k + 1,
                    sd_j: sd.as_ref().map(|v| v.sd_j),
                    sd_k: sd.as_ref().map(|v| v.sd_k),
                    n_j,
                    n_k,
                });
            }
        }
    } else {
        notes.push(format!(
            "{m_hat} spike(s) retained; pair noise needs at least 2"
        ));
    }

    let (mut transform, mut class, mut flipped) = (None, None, Vec::new());
    if let Some(ps) = &a.population_scores {
        let Some(r) = &pca else {
            bail!("--population-scores needs --matrix")
        };
        let pop = read_scores(ps, g.orientation)?;
        let n = r.std_scores.ncols();
        if pop.ncols() != n {
            bail!(
                "population scores have {} observations, the matrix has {n}",
                pop.ncols()
            );
        }
        if pj.max(pk) > pop.nrows() || pj.max(pk) > r.k() {
            bail!("pair [{pj}, {pk}] exceeds the available components");
        }
        let pick = |m: &DMatrix<f64>| {
            DMatrix::from_fn(2, n, |row, c| m[(if row == 0 { pj } else { pk } - 1, c)])
        };
        let mut sample = pick(&r.std_scores);
        let population = pick(&pop);
        flipped = align_signs(&mut sample, &population)
            .into_iter()
            .map(|i| cfg.pair[i])
            .collect();
        let t = fit_pair_transform(&sample, &population)?;
        class = Some(classify_transform(&t, &cfg.thresholds));
        transform = Some(t);
    }

    let dir = out_dir(g)?;
    if !scree.is_empty() {
        let records: Vec<Vec<String>> = scree
            .iter()
            .enumerate()
            .map(|(i, d)| {
                vec![
                    (i + 1).to_string(),
                    format_f64(*d),
                    sigma2_hat
                        .get(i)
                        .map(|v| format_f64(*v))
                        .unwrap_or_default(),
                ]
            })
            .collect();
        io::write_records(
            create(dir, "scree.csv")?,
            &["component", "eigenvalue", "sigma2_hat"],
            &records,
        )?;
    }
    let records: Vec<Vec<String>> = pairs
        .iter()
        .map(|r| {
            vec![
                r.j.to_string(),
                r.k.to_string(),
                r.sd_j.map(format_f64).unwrap_or_default(),
                r.sd_k.map(format_f64).unwrap_or_default(),
                r.n_j.to_string(),
                r.n_k.to_string(),
            ]
        })
        .collect();
    io::write_records(
        create(dir, "required_n.csv")?,
        &["j", "k", "sd_j", "sd_k", "n_j", "n_k"],
        &records,
    )?;

    let report = DiagnosticReport {
        source,
        p: cfg.p,
        n: cfg.n,
        normalization: pca.as_ref().map(|r| r.normalization),
        m_hat,
        sigma2_hat,
        target_sd: cfg.target_sd,
        pair: cfg.pair,
        pairs,
        flipped_signs: flipped,
        transform,
        class,
        notes,
    };
    let text = toml::to_string_pretty(&report).context("serialising report")?;
    fs::write(dir.join("report.toml"), &text).context("writing report.toml")?;
    print!("{text}");
    let echo = DiagnoseEcho {
        matrix: show(&a.matrix),
        eigenvalues: show(&a.eigenvalues),
        population_scores: show(&a.population_scores),
        settings: &cfg,
    };
    RunManifest::new("diagnose", g, None, echo).write(dir)?;
    Ok(Vec::new())
}
