//! Seeded data generation through the model eigenbasis.
//!
//! Scores come first: the `p x n` standardized score matrix `Z` is drawn row
//! by row (row `j` from substream `j`), then every observation is synthesised
//! as `x_i = sum_j sqrt(lambda_j) z_ji v_j`. The population scores are therefore
//! exact and the covariance matrix is never formed.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::model::{CovarianceModel, EigenBasis};
use crate::par;
use crate::rng::{substream, Domain};

/// Distribution of the i.i.d. standardized scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "ScoreDistributionRaw", into = "ScoreDistributionRaw")]
pub enum ScoreDistribution {
    #[default]
    StandardNormal,
    /// Student-t rescaled to unit variance; `df > 4` keeps the fourth moment finite.
    StudentT { df: u32 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum ScoreDistributionRaw {
    Normal,
    StudentT { df: u32 },
}

impl TryFrom<ScoreDistributionRaw> for ScoreDistribution {
    type Error = Error;
    fn try_from(r: ScoreDistributionRaw) -> Result<Self> {
        match r {
            ScoreDistributionRaw::Normal => Ok(ScoreDistribution::StandardNormal),
            ScoreDistributionRaw::StudentT { df } => ScoreDistribution::student_t(df),
        }
    }
}

impl From<ScoreDistribution> for ScoreDistributionRaw {
    fn from(d: ScoreDistribution) -> Self {
        match d {
            ScoreDistribution::StandardNormal => ScoreDistributionRaw::Normal,
            ScoreDistribution::StudentT { df } => ScoreDistributionRaw::StudentT { df },
        }
    }
}

impl ScoreDistribution {
    pub fn student_t(df: u32) -> Result<Self> {
        if df <= 4 {
            return Err(Error::spec(format!(
                "student-t scores need df > 4 for a finite fourth moment, got {df}"
            )));
        }
        Ok(ScoreDistribution::StudentT { df })
    }

    fn validate(self) -> Result<Self> {
        match self {
            ScoreDistribution::StudentT { df } => ScoreDistribution::student_t(df),
            d => Ok(d),
        }
    }

    fn fill<R: Rng>(self, rng: &mut R, out: &mut [f64]) {
        match self {
            ScoreDistribution::StandardNormal => {
                out.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
            }
            ScoreDistribution::StudentT { df } => {
                let dist = StudentT::new(df as f64).expect("df validated");
                let scale = ((df as f64 - 2.0) / df as f64).sqrt();
                out.iter_mut().for_each(|v| *v = scale * dist.sample(rng));
            }
        }
    }
}

/// Draws a `p x n` matrix of unit-variance i.i.d. scores. Row `j` comes from
/// substream `j` of `seed`, so it does not depend on `p`.
pub fn draw_scores(dist: ScoreDistribution, p: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let dist = dist.validate()?;
    let mut rows = vec![0.0; p * n];
    par::for_each_chunk_mut(&mut rows, n, |j, row| {
        let mut rng = substream(seed, Domain::Scores, j as u64);
        dist.fill(&mut rng, row);
    });
    Ok(DMatrix::from_row_slice(p, n, &rows))
}

/// Rows `start..end` of the score matrix that [`draw_scores`] would produce,
/// without drawing the others. Returned row-major, `(end - start) x n`.
pub fn draw_score_rows(
    dist: ScoreDistribution,
    rows: std::ops::Range<usize>,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let dist = dist.validate()?;
    let start = rows.start;
    Ok(par::map_indexed(rows.len(), |r| {
        let mut rng = substream(seed, Domain::Scores, (start + r) as u64);
        let mut row = vec![0.0; n];
        dist.fill(&mut rng, &mut row);
        row
    }))
}

/// Generated data with its population scores.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub model: CovarianceModel,
    pub distribution: ScoreDistribution,
    pub seed: u64,
    /// `p x n`, observations in columns.
    pub x: DMatrix<f64>,
    /// `p x n` population standardized scores; row `j` belongs to the `j`-th largest eigenvalue.
    pub z: DMatrix<f64>,
    basis: EigenBasis,
}

/// Population scores of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationScores {
    /// `s_j = v_j^T X`.
    pub raw: Vec<f64>,
    /// `z_j = s_j / sqrt(lambda_j)`.
    pub standardized: Vec<f64>,
    pub eigenvalue: f64,
}

/// Generates `n` observations of `model`.
pub fn generate_dataset(
    model: &CovarianceModel,
    n: usize,
    dist: ScoreDistribution,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::spec("sample size must be at least 1"));
    }
    let z = draw_scores(dist, model.p(), n, seed)?;
    let mut ds = Dataset::from_scores(model, z)?;
    ds.distribution = dist;
    ds.seed = seed;
    Ok(ds)
}

impl Dataset {
    /// Builds `X` from caller-supplied standardized scores (`p x n`).
    pub fn from_scores(model: &CovarianceModel, z: DMatrix<f64>) -> Result<Self> {
        let p = model.p();
        if z.nrows() != p {
            return Err(Error::DimensionMismatch(format!(
                "score matrix has {} rows, model dimension is {p}",
                z.nrows()
            )));
        }
        let n = z.ncols();
        let basis = model.eigenbasis();
        let sqrt_l: Vec<f64> = basis
            .eigenvalues()
            .iter()
            .map(|l| l.max(0.0).sqrt())
            .collect();
        let mut x = DMatrix::<f64>::zeros(p, n);
        par::for_each_chunk_mut(x.as_mut_slice(), p, |i, col| {
            let coeffs: Vec<f64> = z
                .column(i)
                .iter()
                .zip(&sqrt_l)
                .map(|(a, b)| a * b)
                .collect();
            let mut scratch = vec![0.0; p];
            basis.apply_into(&coeffs, &mut scratch, col);
        });
        Ok(Dataset {
            model: model.clone(),
            distribution: ScoreDistribution::StandardNormal,
            seed: 0,
            x,
            z,
            basis,
        })
    }

    pub fn p(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn basis(&self) -> &EigenBasis {
        &self.basis
    }

    /// Population eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        self.basis.eigenvalues()
    }

    /// Projects the data on the true eigenvector of rank `j` (0-based).
    pub fn population_scores(&self, j: usize) -> Result<PopulationScores> {
        let p = self.p();
        if j >= p {
            return Err(Error::OutOfRange { index: j, limit: p });
        }
        let v = self.basis.vector(j);
        let lambda = self.basis.eigenvalues()[j];
        if lambda <= 0.0 {
            return Err(Error::Degenerate(format!(
                "component {j} has eigenvalue {lambda}; standardized scores undefined"
            )));
        }
        let raw: Vec<f64> = (0..self.n())
            .map(|i| dot(&v, self.x.column(i).as_slice()))
            .collect();
        let standardized = raw.iter().map(|s| s / lambda.sqrt()).collect();
        Ok(PopulationScores {
            raw,
            standardized,
            eigenvalue: lambda,
        })
    }

    /// First `m` rows of `Z`, transposed to `n x m` (columns `z_1..z_m`).
    pub fn top_scores(&self, m: usize) -> DMatrix<f64> {
        self.z.rows(0, m).transpose()
    }
}
