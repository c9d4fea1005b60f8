//! Limiting behaviour of sample scores when the spiked eigenvalues grow
//! linearly with the dimension.
//!
//! Everything is driven by the `m x m` random matrix `W = Zt^T Zt`, where the
//! columns of `Zt` are the scaled population scores `sigma_l z_l`. As `p` grows
//! with `n` fixed the standardized sample scores converge to
//! `sqrt(n / d_j(W)) * Zt v_j(W)`, a scaled rotation of the population scores.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::model::SignalStrengths;

/// Ratio `d_j(W) / d_{j+1}(W)` below which a component is flagged as poorly separated.
pub const SEPARATION_RATIO: f64 = 1.05;

/// Eigensystem of `W`.
///
/// Eigenvector signs are fixed so that entry `j` of `v_j(W)` is non-negative,
/// which makes `v_j(W)` approach `e_j` rather than `-e_j` for large `n`.
#[derive(Debug, Clone)]
pub struct WEigen {
    /// `n x m` scaled scores `(sigma_1 z_1, ..., sigma_m z_m)`.
    pub scaled_scores: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// `d_j(W)`, descending.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is `v_j(W)`.
    pub eigenvectors: DMatrix<f64>,
}

impl WEigen {
    pub fn n(&self) -> usize {
        self.scaled_scores.nrows()
    }

    pub fn m(&self) -> usize {
        self.scaled_scores.ncols()
    }

    /// Entry `l` of `v_j(W)`.
    pub fn v(&self, j: usize, l: usize) -> f64 {
        self.eigenvectors[(l, j)]
    }

    /// Components `j` with `d_j(W) / d_{j+1}(W) < SEPARATION_RATIO`.
    pub fn poorly_separated(&self) -> Vec<usize> {
        self.eigenvalues
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0] < SEPARATION_RATIO * w[1])
            .map(|(j, _)| j)
            .collect()
    }

    fn check_component(&self, j: usize) -> Result<f64> {
        if j >= self.m() {
            return Err(Error::OutOfRange {
                index: j,
                limit: self.m(),
            });
        }
        let d = self.eigenvalues[j];
        if d <= 0.0 {
            return Err(Error::Degenerate(format!("d_{}(W) = {d}", j + 1)));
        }
        Ok(d)
    }
}

/// Builds `W` from `n x m` population scores (columns `z_1..z_m`).
pub fn build_w(z_top: &DMatrix<f64>, strengths: &SignalStrengths) -> Result<WEigen> {
    let m = strengths.len();
    if m == 0 {
        return Err(Error::spec("W needs at least one spiked component"));
    }
    if z_top.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} score columns for {m} signal strengths",
            z_top.ncols()
        )));
    }
    let mut scaled = z_top.clone();
    for (l, mut col) in scaled.column_iter_mut().enumerate() {
        col *= strengths.sd(l);
    }
    let w = scaled.transpose() * &scaled;
    let (eigenvalues, mut eigenvectors) = sym_eigen_desc(&w);
    for j in 0..m {
        if eigenvectors[(j, j)] < 0.0 {
            let mut col = eigenvectors.column_mut(j);
            col *= -1.0;
        }
    }
    Ok(WEigen {
        scaled_scores: scaled,
        w,
        eigenvalues,
        eigenvectors,
    })
}

/// `m x n` matrix with entry `(j, i) = sqrt(n / d_j(W)) sum_l sigma_l z_il v_jl(W)`.
pub fn predict_scores(we: &WEigen) -> Result<DMatrix<f64>> {
    let n = we.n();
    let mut out = DMatrix::<f64>::zeros(we.m(), n);
    for j in 0..we.m() {
        let d = we.check_component(j)?;
        let col = &we.scaled_scores * we.eigenvectors.column(j);
        let scale = (n as f64 / d).sqrt();
        for i in 0..n {
            out[(j, i)] = scale * col[i];
        }
    }
    Ok(out)
}

/// Limits of `p^{-1} d_j`: `(d_j(W) + tau^2) / n` for spiked components and
/// `tau^2 / n` afterwards, `count` values in total.
pub fn predict_sample_eigenvalues(we: &WEigen, tau2: f64, count: usize) -> Vec<f64> {
    let n = we.n() as f64;
    (0..count)
        .map(|j| match we.eigenvalues.get(j) {
            Some(d) => (d + tau2) / n,
            None => tau2 / n,
        })
        .collect()
}

/// Limit of the `j`-th dual sample eigenvector, `Zt v_j(W) / sqrt(d_j(W))`.
pub fn predict_dual_eigenvector(we: &WEigen, j: usize) -> Result<Vec<f64>> {
    let d = we.check_component(j)?;
    let col = &we.scaled_scores * we.eigenvectors.column(j);
    Ok(col.iter().map(|v| v / d.sqrt()).collect())
}

/// Split of a pair of limiting scores into scaling, approximate rotation and
/// contamination from the remaining spiked components.
#[derive(Debug, Clone, Serialize)]
pub struct PairDecomposition {
    pub j: usize,
    pub k: usize,
    /// `(sqrt(n / d_j(W)), sqrt(n / d_k(W)))`.
    pub scaling: [f64; 2],
    /// `[[v_jj, v_jk], [v_kj, v_kk]]` where `v_ab` is entry `b` of `v_a(W)`.
    pub rotation: [[f64; 2]; 2],
    /// Per observation `(eps_ij, eps_ik)`.
    pub noise: Vec<[f64; 2]>,
}

impl PairDecomposition {
    /// `scaling * rotation * (sigma_j z_ij, sigma_k z_ik)^T + noise` for observation `i`.
    pub fn recompose(&self, we: &WEigen, i: usize) -> [f64; 2] {
        let a = we.scaled_scores[(i, self.j)];
        let b = we.scaled_scores[(i, self.k)];
        let r = &self.rotation;
        [
            self.scaling[0] * (r[0][0] * a + r[0][1] * b) + self.noise[i][0],
            self.scaling[1] * (r[1][0] * a + r[1][1] * b) + self.noise[i][1],
        ]
    }
}

pub fn pair_decomposition(we: &WEigen, j: usize, k: usize) -> Result<PairDecomposition> {
    if j == k {
        return Err(Error::spec(
            "pair decomposition needs two distinct components",
        ));
    }
    let dj = we.check_component(j)?;
    let dk = we.check_component(k)?;
    let n = we.n();
    let sj = (n as f64 / dj).sqrt();
    let sk = (n as f64 / dk).sqrt();
    let others: Vec<usize> = (0..we.m()).filter(|&l| l != j && l != k).collect();
    let noise = (0..n)
        .map(|i| {
            let ej: f64 = others
                .iter()
                .map(|&l| we.scaled_scores[(i, l)] * we.v(j, l))
                .sum();
            let ek: f64 = others
                .iter()
                .map(|&l| we.scaled_scores[(i, l)] * we.v(k, l))
                .sum();
            [sj * ej, sk * ek]
        })
        .collect();
    Ok(PairDecomposition {
        j,
        k,
        scaling: [sj, sk],
        rotation: [[we.v(j, j), we.v(j, k)], [we.v(k, j), we.v(k, k)]],
        noise,
    })
}

/// Full limiting prediction for one draw of population scores.
#[derive(Debug, Clone, Serialize)]
pub struct LimitPrediction {
    /// Row-major `m x n` predicted standardized scores.
    pub predicted_scores: Vec<Vec<f64>>,
    pub predicted_sample_eigenvalues: Vec<f64>,
    pub w_eigenvalues: Vec<f64>,
    pub pairs: Vec<PairDecomposition>,
    pub poorly_separated: Vec<usize>,
}

impl LimitPrediction {
    /// Prediction with pair decompositions for every `j < k`.
    pub fn new(we: &WEigen, tau2: f64, eigenvalue_count: usize) -> Result<Self> {
        let scores = predict_scores(we)?;
        let mut pairs = Vec::new();
        for j in 0..we.m() {
            for k in j + 1..we.m() {
                pairs.push(pair_decomposition(we, j, k)?);
            }
        }
        Ok(LimitPrediction {
            predicted_scores: scores
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            predicted_sample_eigenvalues: predict_sample_eigenvalues(we, tau2, eigenvalue_count),
            w_eigenvalues: we.eigenvalues.clone(),
            pairs,
            poorly_separated: we.poorly_separated(),
        })
    }
}

/// Leading-order variance of the pair noise terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseVariance {
    pub n: usize,
    pub j: usize,
    pub k: usize,
    pub var_j: f64,
    pub var_k: f64,
    pub sd_j: f64,
    pub sd_k: f64,
    /// `(l, (sigma_j^2 / sigma_l^2 - 1)^-2)` for every `l != j, k`.
    pub components_j: Vec<(usize, f64)>,
    pub components_k: Vec<(usize, f64)>,
}

fn ratio_terms(
    s: &SignalStrengths,
    target: usize,
    j: usize,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    (0..s.len())
        .filter(|&l| l != j && l != k)
        .map(|l| {
            let r = s.variance(target) / s.variance(l) - 1.0;
            if r == 0.0 {
                Err(Error::Degenerate(format!(
                    "sigma_{}^2 equals sigma_{}^2; noise variance is singular",
                    target + 1,
                    l + 1
                )))
            } else {
                Ok((l, r.powi(-2)))
            }
        })
        .collect()
}

/// `var(eps_ij) = (1/n) sum_{l != j,k} (sigma_j^2 / sigma_l^2 - 1)^-2` and the same for `k`.
pub fn noise_variance_asymptotic(
    strengths: &SignalStrengths,
    n: usize,
    j: usize,
    k: usize,
) -> Result<NoiseVariance> {
    let m = strengths.len();
    for idx in [j, k] {
        if idx >= m {
            return Err(Error::OutOfRange {
                index: idx,
                limit: m,
            });
        }
    }
    if j == k {
        return Err(Error::spec("noise variance needs two distinct components"));
    }
    if n == 0 {
        return Err(Error::spec("sample size must be at least 1"));
    }
    let components_j = ratio_terms(strengths, j, j, k)?;
    let components_k = ratio_terms(strengths, k, j, k)?;
    let var_j = components_j.iter().map(|c| c.1).sum::<f64>() / n as f64;
    let var_k = components_k.iter().map(|c| c.1).sum::<f64>() / n as f64;
    Ok(NoiseVariance {
        n,
        j,
        k,
        var_j,
        var_k,
        sd_j: var_j.sqrt(),
        sd_k: var_k.sqrt(),
        components_j,
        components_k,
    })
}

/// Delta-method asymptotic variance of `sqrt(n) eps_ij`,
/// `sum_{l != j,k} sigma_l^4 / (sigma_j^2 - sigma_l^2)^2`.
pub fn delta_method_tau(strengths: &SignalStrengths, j: usize, k: usize) -> Result<f64> {
    let mut tau = 0.0;
    for l in (0..strengths.len()).filter(|&l| l != j && l != k) {
        let diff = strengths.variance(j) - strengths.variance(l);
        if diff == 0.0 {
            return Err(Error::Degenerate(format!(
                "sigma_{}^2 = sigma_{}^2",
                j + 1,
                l + 1
            )));
        }
        tau += strengths.variance(l).powi(2) / (diff * diff);
    }
    Ok(tau)
}

/// Large-`n` Wishart distribution of the `j`-th eigenpair of `W / n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WishartAsymptotics {
    /// Diagonal of the covariance of `sqrt(n) (v_j(W) - e_j)`:
    /// `sigma_j^2 sigma_i^2 / (sigma_j^2 - sigma_i^2)^2`, zero at `i = j`.
    pub eigvec_cov_diag: Vec<f64>,
    /// Variance of `sqrt(n) (d_j(W/n) - sigma_j^2)`, i.e. `2 sigma_j^4`.
    pub eigval_var: f64,
}

pub fn wishart_asymptotics(strengths: &SignalStrengths, j: usize) -> Result<WishartAsymptotics> {
    let m = strengths.len();
    if j >= m {
        return Err(Error::OutOfRange { index: j, limit: m });
    }
    let sj = strengths.variance(j);
    let eigvec_cov_diag = (0..m)
        .map(|i| {
            if i == j {
                return Ok(0.0);
            }
            let si = strengths.variance(i);
            let diff = sj - si;
            if diff == 0.0 {
                return Err(Error::Degenerate(format!(
                    "tied signal strengths at {i}, {j}"
                )));
            }
            Ok(sj * si / (diff * diff))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WishartAsymptotics {
        eigvec_cov_diag,
        eigval_var: 2.0 * sj * sj,
    })
}
