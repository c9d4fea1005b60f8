//! Seeded Monte Carlo harness.
//!
//! Replicates are independent work units run through [`crate::par`]. Each
//! replicate draws from its own substream and results are collected in
//! replicate order before summarising, so every output is a pure function of
//! the configuration and master seed.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::limit::{
    build_w, noise_variance_asymptotic, predict_sample_eigenvalues, predict_scores,
};
use crate::model::{CovarianceModel, SignalStrengths, SpikeSpec};
use crate::par;
use crate::pca::{pca_decompose, Normalization};
use crate::rng::{keyed_substream, replicate_seed, substream, Domain};
use crate::simulate::{draw_score_rows, generate_dataset, Dataset, ScoreDistribution};
use crate::stats::{median, ols_slope, Summary};

/// Default replicate count of the noise studies.
pub const DEFAULT_REPLICATES: usize = 10_000;

/// One row of tidy (long-form) output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TidyRow {
    pub study: String,
    pub series: String,
    pub series_value: f64,
    pub x: String,
    pub x_value: f64,
    pub statistic: String,
    pub summary: Summary,
    /// Analytic counterpart of `summary.sd` or `summary.mean`, when one exists.
    pub reference: Option<f64>,
}

impl TidyRow {
    pub fn flag(&self) -> &'static str {
        if self.summary.sd_undefined() {
            "sd-undefined"
        } else {
            ""
        }
    }
}

/// Summaries per grid point; raw replicate values are kept when requested.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SweepResult {
    pub rows: Vec<TidyRow>,
}

impl SweepResult {
    pub fn find(&self, series_value: f64, x_value: f64, statistic: &str) -> Option<&TidyRow> {
        self.rows.iter().find(|r| {
            same(r.series_value, series_value)
                && same(r.x_value, x_value)
                && r.statistic == statistic
        })
    }

    /// Rows of one `(series_value, statistic)` curve ordered by `x_value`.
    pub fn curve(&self, series_value: f64, statistic: &str) -> Vec<&TidyRow> {
        let mut v: Vec<&TidyRow> = self
            .rows
            .iter()
            .filter(|r| same(r.series_value, series_value) && r.statistic == statistic)
            .collect();
        v.sort_by(|a, b| a.x_value.total_cmp(&b.x_value));
        v
    }
}

fn same(a: f64, b: f64) -> bool {
    (a.is_nan() && b.is_nan()) || a == b
}

/// Parameter a noise sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SampleSize,
    /// Signal strength of component `l` (0-based).
    Strength(usize),
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepAxis::SampleSize => write!(f, "n"),
            SweepAxis::Strength(l) => write!(f, "sigma2_{}", l + 1),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "n" {
            return Ok(SweepAxis::SampleSize);
        }
        s.strip_prefix("sigma2_")
            .and_then(|l| l.parse::<usize>().ok())
            .filter(|&l| l >= 1)
            .map(|l| SweepAxis::Strength(l - 1))
            .ok_or_else(|| {
                Error::Parse(format!(
                    "unknown sweep axis `{s}` (expected `n` or `sigma2_<l>`)"
                ))
            })
    }
}

impl Serialize for SweepAxis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SweepAxis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Population scores entering the noise terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreMode {
    /// All population scores set to one.
    #[default]
    Fixed,
    /// The first observation's scores from the same draw.
    Random,
}

/// Monte Carlo study of the standard deviation of the pair noise terms.
#[derive(Debug, Clone, Serialize)]
pub struct NoiseStudy {
    pub name: String,
    pub strengths: SignalStrengths,
    /// 0-based component pair.
    pub pair: (usize, usize),
    /// Sample size when the x axis is not `n`.
    pub n: usize,
    pub x_axis: SweepAxis,
    pub x_values: Vec<f64>,
    /// Optional second parameter, one curve per value.
    pub series: Option<(SweepAxis, Vec<f64>)>,
    pub replicates: usize,
    pub seed: u64,
    pub scores: ScoreMode,
}

impl NoiseStudy {
    fn validate(&self) -> Result<()> {
        let m = self.strengths.len();
        let (j, k) = self.pair;
        if j >= m || k >= m || j == k {
            return Err(Error::spec(format!(
                "invalid component pair ({}, {})",
                j + 1,
                k + 1
            )));
        }
        if self.x_values.is_empty() {
            return Err(Error::spec("noise sweep grid is empty"));
        }
        if let Some((_, v)) = &self.series {
            if v.is_empty() {
                return Err(Error::spec("noise sweep series values are empty"));
            }
        }
        if self.replicates == 0 {
            return Err(Error::spec("replicate count must be at least 1"));
        }
        Ok(())
    }
}

fn apply_axis(
    axis: SweepAxis,
    value: f64,
    strengths: &mut SignalStrengths,
    n: &mut usize,
) -> Result<()> {
    match axis {
        SweepAxis::SampleSize => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::spec(format!(
                    "sample size must be a positive integer, got {value}"
                )));
            }
            *n = value as usize;
        }
        SweepAxis::Strength(l) => *strengths = strengths.with_value(l, value)?,
    }
    Ok(())
}

/// Noise terms `(eps_ij, eps_ik)` of one replicate.
///
/// The standard normal draws depend only on `(seed, n, replicate)`, so grid
/// points that share `n` use common random numbers.
pub fn noise_replicate(
    strengths: &SignalStrengths,
    pair: (usize, usize),
    n: usize,
    seed: u64,
    replicate: usize,
    mode: ScoreMode,
) -> Result<[f64; 2]> {
    let m = strengths.len();
    if m <= 2 {
        return Ok([0.0, 0.0]);
    }
    let mut rng = keyed_substream(seed, Domain::Noise, n as u64, replicate as u64);
    let mut z = DMatrix::<f64>::zeros(n, m);
    for l in 0..m {
        for i in 0..n {
            z[(i, l)] = StandardNormal.sample(&mut rng);
        }
    }
    let we = build_w(&z, strengths)?;
    let (j, k) = pair;
    let mut out = [0.0; 2];
    for (slot, c) in [j, k].into_iter().enumerate() {
        let d = we.eigenvalues[c];
        if d <= 0.0 {
            return Err(Error::Degenerate(format!("d_{}(W) = {d}", c + 1)));
        }
        let s: f64 = (0..m)
            .filter(|&l| l != j && l != k)
            .map(|l| {
                let zl = match mode {
                    ScoreMode::Fixed => 1.0,
                    ScoreMode::Random => z[(0, l)],
                };
                strengths.sd(l) * zl * we.v(c, l)
            })
            .sum();
        out[slot] = (n as f64 / d).sqrt() * s;
    }
    Ok(out)
}

/// Runs a noise study over its full grid.
pub fn noise_sweep(study: &NoiseStudy) -> Result<SweepResult> {
    study.validate()?;
    let (j, k) = study.pair;
    let series_vals: Vec<Option<f64>> = match &study.series {
        Some((_, v)) => v.iter().copied().map(Some).collect(),
        None => vec![None],
    };
    let mut rows = Vec::new();
    for sv in &series_vals {
        for &xv in &study.x_values {
            let mut strengths = study.strengths.clone();
            let mut n = study.n;
            if let (Some((axis, _)), Some(v)) = (&study.series, sv) {
                apply_axis(*axis, *v, &mut strengths, &mut n)?;
            }
            apply_axis(study.x_axis, xv, &mut strengths, &mut n)?;

            let draws = par::map_indexed(study.replicates, |r| {
                noise_replicate(&strengths, study.pair, n, study.seed, r, study.scores)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let analytic = noise_variance_asymptotic(&strengths, n, j, k)?;
            for (slot, comp) in [j, k].into_iter().enumerate() {
                let values: Vec<f64> = draws.iter().map(|d| d[slot]).collect();
                rows.push(TidyRow {
                    study: study.name.clone(),
                    series: study
                        .series
                        .as_ref()
                        .map(|(a, _)| a.to_string())
                        .unwrap_or_default(),
                    series_value: sv.unwrap_or(f64::NAN),
                    x: study.x_axis.to_string(),
                    x_value: xv,
                    statistic: format!("eps_{}", comp + 1),
                    summary: Summary::from_values(&values),
                    reference: Some(if slot == 0 {
                        analytic.sd_j
                    } else {
                        analytic.sd_k
                    }),
                });
            }
        }
    }
    Ok(SweepResult { rows })
}

/// Noise SD against the sample size, one curve per `sigma_l^2` value.
pub fn noise_sd_sweep(
    strengths: &SignalStrengths,
    n_grid: &[usize],
    series: Option<(usize, Vec<f64>)>,
    replicates: usize,
    seed: u64,
) -> Result<SweepResult> {
    noise_sweep(&NoiseStudy {
        name: "noise_sd".into(),
        strengths: strengths.clone(),
        pair: (0, 1),
        n: n_grid.first().copied().unwrap_or(1),
        x_axis: SweepAxis::SampleSize,
        x_values: n_grid.iter().map(|&n| n as f64).collect(),
        series: series.map(|(l, v)| (SweepAxis::Strength(l), v)),
        replicates,
        seed,
        scores: ScoreMode::Fixed,
    })
}

/// Noise SD against `sigma_3^2` at fixed `n`, one curve per `sigma_2^2` value.
pub fn sigma3_sweep(
    strengths: &SignalStrengths,
    n: usize,
    sigma3_grid: &[f64],
    sigma2_values: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<SweepResult> {
    noise_sweep(&NoiseStudy {
        name: "sigma3".into(),
        strengths: strengths.clone(),
        pair: (0, 1),
        n,
        x_axis: SweepAxis::Strength(2),
        x_values: sigma3_grid.to_vec(),
        series: Some((SweepAxis::Strength(1), sigma2_values.to_vec())),
        replicates,
        seed,
        scores: ScoreMode::Fixed,
    })
}

/// Log-log slope of one SD curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub series_value: f64,
    pub statistic: String,
    pub slope: f64,
}

/// Slopes of `log sd` on `log x` for every curve of a sweep.
pub fn loglog_slopes(result: &SweepResult) -> Vec<SlopeRow> {
    let mut keys: Vec<(f64, String)> = Vec::new();
    for r in &result.rows {
        if !keys
            .iter()
            .any(|(v, s)| same(*v, r.series_value) && *s == r.statistic)
        {
            keys.push((r.series_value, r.statistic.clone()));
        }
    }
    keys.into_iter()
        .map(|(sv, stat)| {
            let curve = result.curve(sv, &stat);
            let x: Vec<f64> = curve.iter().map(|r| r.x_value.ln()).collect();
            let y: Vec<f64> = curve.iter().map(|r| r.summary.sd.ln()).collect();
            SlopeRow {
                series_value: sv,
                statistic: stat,
                slope: ols_slope(&x, &y),
            }
        })
        .collect()
}

/// Distribution check of `d_1(W) / sigma_1^2` for a single spike.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub n: usize,
    pub replicates: usize,
    pub mean: f64,
    pub variance: f64,
    /// Kolmogorov-Smirnov distance to the chi-square CDF with `n` degrees of freedom.
    pub ks_statistic: f64,
    pub ks_p_value: f64,
}

/// Asymptotic Kolmogorov tail probability `P(K > lambda)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

pub fn chi_square_check(
    strength: f64,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<ChiSquareReport> {
    let strengths = SignalStrengths::new(vec![strength])?;
    if n == 0 || replicates == 0 {
        return Err(Error::spec(
            "chi-square check needs n >= 1 and at least one replicate",
        ));
    }
    let values = par::map_indexed(replicates, |r| {
        let mut rng = substream(seed, Domain::ChiSquare, r as u64);
        let z = DMatrix::from_fn(n, 1, |_, _| StandardNormal.sample(&mut rng));
        build_w(&z, &strengths).map(|we| we.eigenvalues[0] / strength)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;

    let summary = Summary::from_values(&values);
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let dist = ChiSquared::new(n as f64).map_err(|e| Error::spec(e.to_string()))?;
    let r = sorted.len() as f64;
    let ks = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = dist.cdf(x);
            (f - i as f64 / r).max((i as f64 + 1.0) / r - f)
        })
        .fold(0.0, f64::max);
    let sq = r.sqrt();
    Ok(ChiSquareReport {
        n,
        replicates,
        mean: summary.mean,
        variance: summary.sd * summary.sd,
        ks_statistic: ks,
        ks_p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * ks),
    })
}

/// Law-of-large-numbers check for the non-spiked part of the dual Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnRow {
    pub p: usize,
    /// `max |(1/p) sum_{i>m} lambda_i z_i z_i^T - tau^2 I|` per replicate.
    pub deviations: Vec<f64>,
    pub median_deviation: f64,
    pub max_deviation: f64,
}

/// `(1/p) sum_{i>m} lambda_i z_i z_i^T - tau^2 I` max-norm for one replicate.
fn lln_deviation(spec: &SpikeSpec, seed: u64) -> Result<f64> {
    let (p, n, m) = (spec.p(), spec.n(), spec.m());
    let tail = spec.tail_eigenvalues();
    let rows = draw_score_rows(ScoreDistribution::StandardNormal, m..p, n, seed)?;
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for (row, lam) in rows.iter().zip(&tail) {
        for a in 0..n {
            let za = lam * row[a];
            for b in a..n {
                acc[(a, b)] += za * row[b];
            }
        }
    }
    let mut dev = 0.0f64;
    for a in 0..n {
        for b in a..n {
            let target = if a == b { spec.tau2() } else { 0.0 };
            dev = dev.max((acc[(a, b)] / p as f64 - target).abs());
        }
    }
    Ok(dev)
}

pub fn lln_check(
    spec: &SpikeSpec,
    n: usize,
    p_grid: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<Vec<LlnRow>> {
    if replicates == 0 || p_grid.is_empty() {
        return Err(Error::spec(
            "LLN check needs a non-empty p grid and replicates",
        ));
    }
    p_grid
        .iter()
        .map(|&p| {
            let s = spec.with_dim(p)?.with_sample_size(n)?;
            if s.m() >= p {
                return Err(Error::spec(format!("p = {p} leaves no non-spiked tail")));
            }
            let deviations = par::map_indexed(replicates, |r| {
                lln_deviation(&s, replicate_seed(seed, r as u64))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            Ok(LlnRow {
                p,
                median_deviation: median(&deviations),
                max_deviation: deviations.iter().copied().fold(0.0, f64::max),
                deviations,
            })
        })
        .collect()
}

/// Agreement between sample PCA and the limiting prediction on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceMetrics {
    pub p: usize,
    /// RMSE over the `m x n` sign-aligned standardized scores.
    pub rmse: f64,
    pub max_abs: f64,
    /// `|p^-1 d_j - (d_j(W) + tau^2)/n| / (p^-1 d_j)` for `j <= m`.
    pub eigen_rel_err: Vec<f64>,
    /// Median of the non-spiked `p^-1 d_j` divided by `tau^2 / n` (`NaN` when `tau^2 = 0`).
    pub tail_median_ratio: f64,
}

/// Compares the sample scores of `ds` with the limit built from its own population scores.
pub fn convergence_metrics(
    ds: &Dataset,
    strengths: &SignalStrengths,
    tau2: f64,
) -> Result<ConvergenceMetrics> {
    let m = strengths.len();
    let (p, n) = (ds.p(), ds.n());
    let pca = pca_decompose(&ds.x, m, Normalization::default())?;
    let we = build_w(&ds.top_scores(m), strengths)?;
    let pred = predict_scores(&we)?;
    let mut sq = 0.0;
    let mut max_abs = 0.0f64;
    for j in 0..m {
        let dotp: f64 = (0..n).map(|i| pca.std_scores[(j, i)] * pred[(j, i)]).sum();
        let sign = if dotp < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            let e = sign * pca.std_scores[(j, i)] - pred[(j, i)];
            sq += e * e;
            max_abs = max_abs.max(e.abs());
        }
    }
    let predicted = predict_sample_eigenvalues(&we, tau2, pca.eigenvalues.len());
    let scaled: Vec<f64> = pca.eigenvalues.iter().map(|d| d / p as f64).collect();
    let eigen_rel_err = (0..m)
        .map(|j| (scaled[j] - predicted[j]).abs() / scaled[j])
        .collect();
    let tail_median_ratio = if tau2 > 0.0 && scaled.len() > m {
        median(&scaled[m..]) / (tau2 / n as f64)
    } else {
        f64::NAN
    };
    Ok(ConvergenceMetrics {
        p,
        rmse: (sq / (m * n) as f64).sqrt(),
        max_abs,
        eigen_rel_err,
        tail_median_ratio,
    })
}

/// Sample-versus-limit agreement across a grid of dimensions.
///
/// Replicate `r` uses the same master seed at every `p`; since score rows are
/// drawn from per-row substreams, the spiked population scores (and hence the
/// prediction) are identical across the grid.
pub fn convergence_study(
    spec: &SpikeSpec,
    p_grid: &[usize],
    replicates: usize,
    seed: u64,
    dist: ScoreDistribution,
) -> Result<Vec<Vec<ConvergenceMetrics>>> {
    if replicates == 0 || p_grid.is_empty() {
        return Err(Error::spec(
            "convergence study needs a non-empty p grid and replicates",
        ));
    }
    p_grid
        .iter()
        .map(|&p| {
            let s = spec.with_dim(p)?;
            let model = CovarianceModel::Spike(s.clone());
            (0..replicates)
                .map(|r| {
                    let ds = generate_dataset(&model, s.n(), dist, replicate_seed(seed, r as u64))?;
                    convergence_metrics(&ds, s.strengths(), s.tau2())
                })
                .collect()
        })
        .collect()
}

/// Tidy summary of a convergence study.
pub fn convergence_rows(name: &str, study: &[Vec<ConvergenceMetrics>]) -> SweepResult {
    let mut rows = Vec::new();
    for per_p in study {
        let Some(first) = per_p.first() else { continue };
        let mut stats: Vec<(String, Vec<f64>)> = vec![
            ("rmse".into(), per_p.iter().map(|c| c.rmse).collect()),
            ("max_abs".into(), per_p.iter().map(|c| c.max_abs).collect()),
        ];
        for j in 0..first.eigen_rel_err.len() {
            stats.push((
                format!("eigen_rel_err_{}", j + 1),
                per_p.iter().map(|c| c.eigen_rel_err[j]).collect(),
            ));
        }
        stats.push((
            "tail_median_ratio".into(),
            per_p.iter().map(|c| c.tail_median_ratio).collect(),
        ));
        for (statistic, values) in stats {
            rows.push(TidyRow {
                study: name.into(),
                series: String::new(),
                series_value: f64::NAN,
                x: "p".into(),
                x_value: first.p as f64,
                statistic,
                summary: Summary::from_values(&values),
                reference: None,
            });
        }
    }
    SweepResult { rows }
}

/// Monte Carlo `n * var(v_j(W)_i)` for each entry `i`, to compare with the
/// Wishart eigenvector covariance.
pub fn wishart_eigvec_variance(
    strengths: &SignalStrengths,
    j: usize,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let m = strengths.len();
    let draws = par::map_indexed(replicates, |r| {
        let mut rng = substream(seed, Domain::Wishart, r as u64);
        let z = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
        build_w(&z, strengths).map(|we| (0..m).map(|i| we.v(j, i)).collect::<Vec<f64>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((0..m)
        .map(|i| {
            let v: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let s = Summary::from_values(&v);
            n as f64 * s.sd * s.sd
        })
        .collect())
}
