//! Practitioner diagnostics: fitting and classifying score-pair distortions,
//! scree-based signal estimates and required sample sizes.

use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::noise_variance_asymptotic;
use crate::model::SignalStrengths;

/// Least-squares 2x2 map from population to sample scores, polar decomposed
/// as `A = H R` with `H` symmetric positive definite and `R` orthogonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTransform {
    pub scale_x: f64,
    pub scale_y: f64,
    /// Off-diagonal of `H`.
    pub shear: f64,
    /// Angle of the rotation in `(-pi, pi]`; of `R diag(1, -1)` when reflected.
    pub angle: f64,
    /// RMS of `S - A P` over all entries.
    pub residual: f64,
    pub reflection: bool,
    /// Row-major `A`.
    pub matrix: [[f64; 2]; 2],
}

fn sqrt_spd(m: Matrix2<f64>) -> Matrix2<f64> {
    let s = m.determinant().max(0.0).sqrt();
    let t = (m.trace() + 2.0 * s).sqrt();
    (m + Matrix2::identity() * s) / t
}

/// Fits `sample ~ A population` for two `2 x n` score matrices.
pub fn fit_pair_transform(
    sample: &DMatrix<f64>,
    population: &DMatrix<f64>,
) -> Result<PairTransform> {
    if sample.nrows() != 2 || population.nrows() != 2 || sample.ncols() != population.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "expected two 2 x n score matrices, got {:?} and {:?}",
            sample.shape(),
            population.shape()
        )));
    }
    let n = sample.ncols();
    if n < 3 {
        return Err(Error::spec(format!("transform fit needs n >= 3, got {n}")));
    }
    for (mat, name) in [(sample, "sample"), (population, "population")] {
        if let Some(pos) = mat.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "non-finite {name} score at row {}, column {}",
                pos % 2,
                pos / 2
            )));
        }
    }
    let s: Matrix2<f64> = (sample * population.transpose())
        .fixed_view::<2, 2>(0, 0)
        .into_owned();
    let g: Matrix2<f64> = (population * population.transpose())
        .fixed_view::<2, 2>(0, 0)
        .into_owned();
    let scale = g.trace();
    if scale <= 0.0 || g.determinant() <= 1e-12 * scale * scale {
        return Err(Error::Degenerate(
            "population score pair is rank-deficient".into(),
        ));
    }
    let a = s * g
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("population Gram is singular".into()))?;
    let det = a.determinant();
    if det == 0.0 {
        return Err(Error::Degenerate("fitted map is singular".into()));
    }
    let h = sqrt_spd(a * a.transpose());
    let r = h
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("fitted map is singular".into()))?
        * a;
    let reflection = det < 0.0;
    let rot = if reflection {
        r * Matrix2::new(1.0, 0.0, 0.0, -1.0)
    } else {
        r
    };
    let angle = rot[(1, 0)].atan2(rot[(0, 0)]);

    let mut sq = 0.0;
    for i in 0..n {
        for row in 0..2 {
            let fit = a[(row, 0)] * population[(0, i)] + a[(row, 1)] * population[(1, i)];
            let e = sample[(row, i)] - fit;
            sq += e * e;
        }
    }
    Ok(PairTransform {
        scale_x: h[(0, 0)],
        scale_y: h[(1, 1)],
        shear: h[(0, 1)],
        angle,
        residual: (sq / (2 * n) as f64).sqrt(),
        reflection,
        matrix: [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]],
    })
}

/// Flips each sample score row whose inner product with the matching
/// population row is negative. Returns the flipped row indices.
pub fn align_signs(sample: &mut DMatrix<f64>, population: &DMatrix<f64>) -> Vec<usize> {
    let mut flipped = Vec::new();
    for j in 0..sample.nrows().min(population.nrows()) {
        let d = sample.row(j).dot(&population.row(j));
        if d < 0.0 {
            sample.row_mut(j).neg_mut();
            flipped.push(j);
        }
    }
    flipped
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Relative scale deviation `delta_s`.
    pub scale: f64,
    /// Angle threshold `delta_r` in degrees.
    pub angle_deg: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            scale: 0.1,
            angle_deg: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformLabel {
    ScalingOutward,
    ScalingInward,
    Rotation,
    Saddle,
    Fault,
    NearIdentity,
    Mixed,
}

impl fmt::Display for TransformLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformLabel::ScalingOutward => "scaling-outward",
            TransformLabel::ScalingInward => "scaling-inward",
            TransformLabel::Rotation => "rotation",
            TransformLabel::Saddle => "saddle",
            TransformLabel::Fault => "fault",
            TransformLabel::NearIdentity => "near-identity",
            TransformLabel::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformClass {
    pub label: TransformLabel,
    /// Thresholds that were crossed.
    pub evidence: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Scale {
    Up,
    Down,
    Flat,
}

pub fn classify_transform(t: &PairTransform, th: &Thresholds) -> TransformClass {
    let level = |s: f64| {
        if s > 1.0 + th.scale {
            Scale::Up
        } else if s < 1.0 - th.scale {
            Scale::Down
        } else {
            Scale::Flat
        }
    };
    let (x, y) = (level(t.scale_x), level(t.scale_y));
    let turned = t.angle.abs() > th.angle_deg.to_radians();

    let mut evidence = Vec::new();
    for (name, lv, s) in [("scale_x", x, t.scale_x), ("scale_y", y, t.scale_y)] {
        match lv {
            Scale::Up => evidence.push(format!("{name} = {s:.4} > {}", 1.0 + th.scale)),
            Scale::Down => evidence.push(format!("{name} = {s:.4} < {}", 1.0 - th.scale)),
            Scale::Flat => {}
        }
    }
    if turned {
        evidence.push(format!(
            "|angle| = {:.2} deg > {}",
            t.angle.to_degrees().abs(),
            th.angle_deg
        ));
    }
    if t.reflection {
        evidence.push("reflection".into());
    }

    use Scale::*;
    let label = match (x, y, turned) {
        (Up, Up, false) => TransformLabel::ScalingOutward,
        (Down, Down, false) => TransformLabel::ScalingInward,
        (Flat, Flat, true) => TransformLabel::Rotation,
        (Up, Down, false) | (Down, Up, false) => TransformLabel::Saddle,
        (Up, Down, true) | (Down, Up, true) => TransformLabel::Fault,
        (Flat, Flat, false) => TransformLabel::NearIdentity,
        _ => TransformLabel::Mixed,
    };
    TransformClass { label, evidence }
}

/// How many spikes to keep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpikeCount {
    Fixed(usize),
    /// Largest ratio `d_j / d_{j+1}` on the scree sequence.
    Auto,
}

/// Minimal relative gap `d_j / d_{j+1} - 1` for the automatic choice to report any spike.
pub const AUTO_MIN_GAP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalEstimate {
    /// `d_j / p` for the retained components.
    pub sigma2_hat: Vec<f64>,
    pub m_hat: usize,
    pub scree: Vec<f64>,
}

/// Signal strengths `d_j / p` from a descending eigenvalue sequence.
pub fn estimate_signals(eigenvalues: &[f64], p: usize, m: SpikeCount) -> Result<SignalEstimate> {
    if eigenvalues.is_empty() {
        return Err(Error::spec("eigenvalue list is empty"));
    }
    if p < eigenvalues.len() {
        return Err(Error::spec(format!(
            "p = {p} is smaller than the {} eigenvalues",
            eigenvalues.len()
        )));
    }
    for (i, d) in eigenvalues.iter().enumerate() {
        if !d.is_finite() || *d < 0.0 {
            return Err(Error::Parse(format!(
                "eigenvalue {} is not a finite non-negative number: {d}",
                i + 1
            )));
        }
    }
    if let Some(i) = eigenvalues.windows(2).position(|w| w[1] > w[0]) {
        return Err(Error::spec(format!(
            "eigenvalues are not descending at position {} ({} < {})",
            i + 2,
            eigenvalues[i],
            eigenvalues[i + 1]
        )));
    }
    let m_hat = match m {
        SpikeCount::Fixed(m) => {
            if m > eigenvalues.len() {
                return Err(Error::OutOfRange {
                    index: m,
                    limit: eigenvalues.len(),
                });
            }
            m
        }
        SpikeCount::Auto => auto_spike_count(eigenvalues),
    };
    Ok(SignalEstimate {
        sigma2_hat: eigenvalues[..m_hat].iter().map(|d| d / p as f64).collect(),
        m_hat,
        scree: eigenvalues.to_vec(),
    })
}

fn auto_spike_count(d: &[f64]) -> usize {
    let mut best = (0, 0.0f64);
    for (j, w) in d.windows(2).enumerate() {
        if w[0] == 0.0 {
            break;
        }
        let gap = if w[1] == 0.0 {
            f64::INFINITY
        } else {
            w[0] / w[1] - 1.0
        };
        if gap > best.1 {
            best = (j + 1, gap);
        }
    }
    if best.1 < AUTO_MIN_GAP {
        0
    } else {
        best.0
    }
}

/// Smallest `n` with analytic noise SD below `target_sd` for both members of
/// the pair `(j, k)`; `1` when the noise vanishes.
pub fn required_sample_size(
    strengths: &SignalStrengths,
    j: usize,
    k: usize,
    target_sd: f64,
) -> Result<(usize, usize)> {
    if target_sd.is_nan() || target_sd <= 0.0 || target_sd.is_infinite() {
        return Err(Error::spec(format!(
            "target sd must be positive, got {target_sd}"
        )));
    }
    let unit = noise_variance_asymptotic(strengths, 1, j, k)?;
    let solve = |s: f64, pick: fn(&crate::limit::NoiseVariance) -> f64| -> Result<usize> {
        if s == 0.0 {
            return Ok(1);
        }
        let sd_at = |n: usize| noise_variance_asymptotic(strengths, n, j, k).map(|v| pick(&v));
        let mut n = ((s / (target_sd * target_sd)).floor() as usize)
            .saturating_add(1)
            .max(1);
        while n > 1 && sd_at(n - 1)? < target_sd {
            n -= 1;
        }
        while sd_at(n)? >= target_sd {
            n += 1;
        }
        Ok(n)
    };
    Ok((
        solve(unit.var_j, |v| v.sd_j)?,
        solve(unit.var_k, |v| v.sd_k)?,
    ))
}

/// One row of the per-pair noise table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairNoiseRow {
    pub j: usize,
    pub k: usize,
    pub sd_j: f64,
    pub sd_k: f64,
    pub n_j: usize,
    pub n_k: usize,
}

/// Noise SDs at `n` and required sample sizes for every component pair.
pub fn pair_noise_table(
    strengths: &SignalStrengths,
    n: usize,
    target_sd: f64,
) -> Result<Vec<PairNoiseRow>> {
    let m = strengths.len();
    let mut rows = Vec::new();
    for j in 0..m {
        for k in j + 1..m {
            let v = noise_variance_asymptotic(strengths, n, j, k)?;
            let (n_j, n_k) = required_sample_size(strengths, j, k, target_sd)?;
            rows.push(PairNoiseRow {
                j,
                k,
                sd_j: v.sd_j,
                sd_k: v.sd_k,
                n_j,
                n_k,
            });
        }
    }
    Ok(rows)
}
