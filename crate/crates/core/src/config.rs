//! TOML run configurations.
//!
//! Components are numbered from 1 in configuration files and from 0 in code.
//! Unknown keys are rejected so that typos surface as errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnose::Thresholds;
use crate::error::{Error, Result};
use crate::experiments::{NoiseStudy, ScoreMode, SweepAxis, DEFAULT_REPLICATES};
use crate::model::{CovarianceModel, SignalStrengths, SpikeSpec};
use crate::simulate::ScoreDistribution;

/// Parses a configuration, prefixing errors with the file name.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

pub fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    Ok(toml::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    /// Sample size; required for block models, defaults to the spike model's `n`.
    #[serde(default)]
    pub n: Option<usize>,
    pub model: CovarianceModel,
    #[serde(default)]
    pub scores: ScoreDistribution,
}

impl SimulateConfig {
    pub fn sample_size(&self) -> Result<usize> {
        match (&self.model, self.n) {
            (CovarianceModel::Spike(s), Some(n)) if n != s.n() => Err(Error::spec(format!(
                "n = {n} disagrees with model.n = {}",
                s.n()
            ))),
            (_, Some(n)) => Ok(n),
            (CovarianceModel::Spike(s), None) => Ok(s.n()),
            (CovarianceModel::Block(_), None) => {
                Err(Error::spec("missing field `n` (required for block models)"))
            }
        }
    }
}

fn one() -> usize {
    1
}
fn fifty() -> usize {
    50
}
fn rmse_tol() -> f64 {
    0.05
}
fn eig_tol() -> f64 {
    0.05
}
fn tail_tol() -> f64 {
    0.10
}
fn lln_tol() -> f64 {
    0.1
}
fn yes() -> bool {
    true
}

/// Convergence of sample scores to the limit over a grid of `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub strengths: Vec<f64>,
    pub tau2: f64,
    pub n: usize,
    pub p_grid: Vec<usize>,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub scores: ScoreDistribution,
    #[serde(default = "rmse_tol")]
    pub max_final_rmse: f64,
    #[serde(default = "eig_tol")]
    pub max_eigen_rel_err: f64,
    #[serde(default = "tail_tol")]
    pub tail_median_tol: f64,
    #[serde(default = "yes")]
    pub require_decreasing: bool,
}

impl ConvergenceConfig {
    pub fn spec(&self) -> Result<SpikeSpec> {
        let p0 = *self
            .p_grid
            .first()
            .ok_or_else(|| Error::spec("convergence.p_grid is empty"))?;
        SpikeSpec::new(self.strengths.clone(), self.tau2, p0, self.n)
    }
}

/// Law-of-large-numbers check of the non-spiked Gram part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnConfig {
    pub strengths: Vec<f64>,
    pub tau2: f64,
    pub n: usize,
    pub p_grid: Vec<usize>,
    #[serde(default = "fifty")]
    pub replicates: usize,
    #[serde(default = "lln_tol")]
    pub max_final_deviation: f64,
    #[serde(default = "yes")]
    pub require_decreasing: bool,
}

impl LlnConfig {
    pub fn spec(&self) -> Result<SpikeSpec> {
        let p0 = *self
            .p_grid
            .first()
            .ok_or_else(|| Error::spec("lln.p_grid is empty"))?;
        SpikeSpec::new(self.strengths.clone(), self.tau2, p0, self.n)
    }
}

/// Moments of `d_1(W) / sigma_1^2` against the chi-square law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSquareConfig {
    pub strength: f64,
    pub n: usize,
    pub replicates: usize,
    pub mean_band: [f64; 2],
    pub variance_band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    #[serde(default)]
    pub convergence: Option<ConvergenceConfig>,
    #[serde(default)]
    pub lln: Option<LlnConfig>,
    #[serde(default)]
    pub chisq: Option<ChiSquareConfig>,
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.convergence.is_none() && self.lln.is_none() && self.chisq.is_none() {
            return Err(Error::spec(
                "verify config needs at least one of [convergence], [lln], [chisq]",
            ));
        }
        if let Some(t) = &self.convergence {
            t.spec()?;
        }
        if let Some(l) = &self.lln {
            l.spec()?;
        }
        Ok(())
    }
}

/// One figure of a noise study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub name: String,
    pub x: SweepAxis,
    pub x_values: Vec<f64>,
    /// Sample size when `x` is not `n`.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub series: Option<SweepAxis>,
    #[serde(default)]
    pub series_values: Vec<f64>,
    /// Allowed range of the log-log slope of SD on `n`.
    #[serde(default)]
    pub slope_band: Option<[f64; 2]>,
}

fn default_pair() -> [usize; 2] {
    [1, 2]
}
fn default_replicates() -> usize {
    DEFAULT_REPLICATES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub seed: u64,
    pub strengths: Vec<f64>,
    /// 1-based component pair.
    #[serde(default = "default_pair")]
    pub pair: [usize; 2],
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub scores: ScoreMode,
    pub figure: Vec<FigureConfig>,
}

impl NoiseConfig {
    /// Studies with their slope bands, in file order.
    pub fn studies(&self) -> Result<Vec<(NoiseStudy, Option<[f64; 2]>)>> {
        let strengths = SignalStrengths::new(self.strengths.clone())?;
        if strengths.len() < 3 {
            return Err(Error::spec(format!(
                "noise terms need at least 3 components, got {}; with m <= 2 the noise vanishes identically",
                strengths.len()
            )));
        }
        let [j, k] = self.pair;
        if j == 0 || k == 0 || j > strengths.len() || k > strengths.len() || j == k {
            return Err(Error::spec(format!(
                "invalid pair [{j}, {k}] for {} components",
                strengths.len()
            )));
        }
        if self.figure.is_empty() {
            return Err(Error::spec("noise config has no [[figure]] entries"));
        }
        self.figure
            .iter()
            .map(|f| {
                let n = match (f.x, f.n) {
                    (SweepAxis::SampleSize, _) => {
                        f.x_values.first().map(|v| *v as usize).unwrap_or(1)
                    }
                    (_, Some(n)) => n,
                    (_, None) => {
                        return Err(Error::spec(format!(
                            "figure `{}`: missing field `n`",
                            f.name
                        )));
                    }
                };
                let series = match (f.series, f.series_values.is_empty()) {
                    (Some(a), false) => Some((a, f.series_values.clone())),
                    (Some(_), true) => {
                        return Err(Error::spec(format!(
                            "figure `{}`: series_values is empty",
                            f.name
                        )));
                    }
                    (None, false) => {
                        return Err(Error::spec(format!(
                            "figure `{}`: series_values without series",
                            f.name
                        )));
                    }
                    (None, true) => None,
                };
                if f.slope_band.is_some() && f.x != SweepAxis::SampleSize {
                    return Err(Error::spec(format!(
                        "figure `{}`: slope_band needs x = \"n\"",
                        f.name
                    )));
                }
                Ok((
                    NoiseStudy {
                        name: f.name.clone(),
                        strengths: strengths.clone(),
                        pair: (j - 1, k - 1),
                        n,
                        x_axis: f.x,
                        x_values: f.x_values.clone(),
                        series,
                        replicates: self.replicates,
                        seed: self.seed,
                        scores: self.scores,
                    },
                    f.slope_band,
                ))
            })
            .collect()
    }
}

fn default_target() -> f64 {
    0.15
}

/// Inputs of the diagnose subcommand that are not data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    /// Number of variables; needed when only eigenvalues are given.
    #[serde(default)]
    pub p: Option<usize>,
    /// Spike count; automatic when absent.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default = "default_target")]
    pub target_sd: f64,
    /// Sample size at which to report noise SDs.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default)]
    pub strengths: Option<Vec<f64>>,
    #[serde(default = "default_pair")]
    pub pair: [usize; 2],
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            p: None,
            m: None,
            target_sd: default_target(),
            n: None,
            eigenvalues: None,
            strengths: None,
            pair: default_pair(),
            thresholds: Thresholds::default(),
        }
    }
}
