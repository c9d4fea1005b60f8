//! Covariance models whose eigenstructure is known in closed form.
//!
//! Two families are provided:
//!
//! * [`SpikeSpec`]: `m` spikes with eigenvalues `sigma_j^2 * p + tau^2` and a
//!   non-spiked tail averaging `tau^2`.
//! * [`BlockSpec`]: independent equicorrelated blocks of size `round(r_j p)`
//!   followed by an identity tail, each block contributing one spike
//!   `sigma^2 (rho_j k_j + 1 - rho_j)`.
//!
//! Both expose an [`EigenBasis`], an implicit orthonormal basis of `R^p`
//! together with the eigenvalue attached to every basis vector. Data are
//! synthesised through this basis so the `p x p` matrix is never formed.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Domain};

/// Largest dimension [`CovarianceModel::materialize`] accepts by default.
pub const DEFAULT_MATERIALIZE_LIMIT: usize = 5000;

/// Fraction of non-zero loadings, `(1/p) * #{i : v_i^2 > threshold}`.
///
/// With `threshold = None` the test is an exact comparison against zero.
pub fn pervasiveness_ratio(coefficients: &[f64], threshold: Option<f64>) -> f64 {
    if coefficients.is_empty() {
        return 0.0;
    }
    let cut = threshold.unwrap_or(0.0);
    let hits = coefficients.iter().filter(|v| **v * **v > cut).count();
    hits as f64 / coefficients.len() as f64
}

/// Signal strengths `sigma_1^2 > sigma_2^2 > ... > sigma_m^2 > 0` (variance units).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SignalStrengths(Vec<f64>);

impl SignalStrengths {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::spec(format!(
                "signal strengths must be positive and finite, got {v}"
            )));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::spec(format!(
                "signal strengths must be strictly decreasing, got {values:?}"
            )));
        }
        Ok(SignalStrengths(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sigma_j^2`.
    pub fn variance(&self, j: usize) -> f64 {
        self.0[j]
    }

    /// `sigma_j`.
    pub fn sd(&self, j: usize) -> f64 {
        self.0[j].sqrt()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with entry `j` replaced, re-validated.
    pub fn with_value(&self, j: usize, value: f64) -> Result<Self> {
        if j >= self.len() {
            return Err(Error::OutOfRange {
                index: j,
                limit: self.len(),
            });
        }
        let mut v = self.0.clone();
        v[j] = value;
        SignalStrengths::new(v)
    }
}

impl TryFrom<Vec<f64>> for SignalStrengths {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        SignalStrengths::new(v)
    }
}

impl From<SignalStrengths> for Vec<f64> {
    fn from(s: SignalStrengths) -> Self {
        s.0
    }
}

/// Loading vector `v` and noise level of the one-factor model `x = v z + eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorVector {
    coefficients: Vec<f64>,
    noise_sigma2: f64,
}

impl FactorVector {
    pub fn new(coefficients: Vec<f64>, noise_sigma2: f64) -> Result<Self> {
        if coefficients.iter().all(|v| *v == 0.0) {
            return Err(Error::spec("factor loading vector is all zero"));
        }
        if coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::spec("factor loadings must be finite"));
        }
        if !(noise_sigma2 > 0.0 && noise_sigma2.is_finite()) {
            return Err(Error::spec(format!(
                "noise variance must be positive, got {noise_sigma2}"
            )));
        }
        Ok(FactorVector {
            coefficients,
            noise_sigma2,
        })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn noise_sigma2(&self) -> f64 {
        self.noise_sigma2
    }

    pub fn pervasiveness(&self, threshold: Option<f64>) -> f64 {
        pervasiveness_ratio(&self.coefficients, threshold)
    }

    /// Top eigenvalue of `v v^T + sigma^2 I`, i.e. the squared norm of `v` plus `sigma^2`.
    pub fn spike_eigenvalue(&self) -> f64 {
        self.coefficients.iter().map(|v| v * v).sum::<f64>() + self.noise_sigma2
    }
}

/// How the spiked eigenvectors of a [`SpikeSpec`] are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EigenvectorLayout {
    /// Disjoint supports of `floor(p/m)` consecutive coordinates with constant
    /// coefficients; pervasive by construction.
    #[default]
    DisjointSupport,
    /// Orthonormalised Gaussian directions drawn from `seed`.
    RandomOrthonormal { seed: u64 },
}

/// Shape of the non-spiked eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TailShape {
    /// Every non-spiked eigenvalue equals `tau^2`.
    #[default]
    Flat,
    /// `tau^2 * w_i` with weights falling linearly from 1.5 to 0.5 (mean one).
    LinearDecay,
}

/// Spiked model with eigenvalues scaling linearly in `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpikeSpecRaw", into = "SpikeSpecRaw")]
pub struct SpikeSpec {
    strengths: SignalStrengths,
    tau2: f64,
    p: usize,
    n: usize,
    eigenvectors: EigenvectorLayout,
    tail: TailShape,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpikeSpecRaw {
    strengths: Vec<f64>,
    tau2: f64,
    p: usize,
    n: usize,
    #[serde(default)]
    eigenvectors: EigenvectorLayout,
    #[serde(default)]
    tail: TailShape,
}

impl TryFrom<SpikeSpecRaw> for SpikeSpec {
    type Error = Error;
    fn try_from(r: SpikeSpecRaw) -> Result<Self> {
        Ok(SpikeSpec::new(r.strengths, r.tau2, r.p, r.n)?
            .with_eigenvectors(r.eigenvectors)
            .with_tail(r.tail))
    }
}

impl From<SpikeSpec> for SpikeSpecRaw {
    fn from(s: SpikeSpec) -> Self {
        SpikeSpecRaw {
            strengths: s.strengths.into(),
            tau2: s.tau2,
            p: s.p,
            n: s.n,
            eigenvectors: s.eigenvectors,
            tail: s.tail,
        }
    }
}

impl SpikeSpec {
    pub fn new(strengths: Vec<f64>, tau2: f64, p: usize, n: usize) -> Result<Self> {
        let strengths = SignalStrengths::new(strengths)?;
        if p == 0 || n == 0 {
            return Err(Error::spec("p and n must be at least 1"));
        }
        if !(tau2 >= 0.0 && tau2.is_finite()) {
            return Err(Error::spec(format!(
                "tau2 must be non-negative, got {tau2}"
            )));
        }
        if strengths.len() > p.min(n) {
            return Err(Error::spec(format!(
                "spike count {} exceeds min(p, n) = {}",
                strengths.len(),
                p.min(n)
            )));
        }
        Ok(SpikeSpec {
            strengths,
            tau2,
            p,
            n,
            eigenvectors: EigenvectorLayout::default(),
            tail: TailShape::default(),
        })
    }

    pub fn with_eigenvectors(mut self, layout: EigenvectorLayout) -> Self {
        self.eigenvectors = layout;
        self
    }

    pub fn with_tail(mut self, tail: TailShape) -> Self {
        self.tail = tail;
        self
    }

    /// Same model at another dimension.
    pub fn with_dim(&self, p: usize) -> Result<Self> {
        Ok(
            SpikeSpec::new(self.strengths.0.clone(), self.tau2, p, self.n)?
                .with_eigenvectors(self.eigenvectors)
                .with_tail(self.tail),
        )
    }

    pub fn with_sample_size(&self, n: usize) -> Result<Self> {
        Ok(
            SpikeSpec::new(self.strengths.0.clone(), self.tau2, self.p, n)?
                .with_eigenvectors(self.eigenvectors)
                .with_tail(self.tail),
        )
    }

    pub fn strengths(&self) -> &SignalStrengths {
        &self.strengths
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.strengths.len()
    }

    pub fn eigenvectors(&self) -> EigenvectorLayout {
        self.eigenvectors
    }

    pub fn tail(&self) -> TailShape {
        self.tail
    }

    /// Spiked eigenvalues `sigma_j^2 p + tau^2`.
    pub fn spike_eigenvalues(&self) -> Vec<f64> {
        let p = self.p as f64;
        self.strengths
            .as_slice()
            .iter()
            .map(|s| s * p + self.tau2)
            .collect()
    }

    /// The `p - m` non-spiked eigenvalues in descending order.
    pub fn tail_eigenvalues(&self) -> Vec<f64> {
        let len = self.p - self.m();
        match self.tail {
            TailShape::Flat => vec![self.tau2; len],
            TailShape::LinearDecay => (0..len)
                .map(|i| self.tau2 * (1.5 - (i as f64 + 0.5) / len as f64))
                .collect(),
        }
    }

    fn native_eigenvalues(&self) -> Vec<f64> {
        let mut v = self.spike_eigenvalues();
        v.extend(self.tail_eigenvalues());
        v
    }

    pub fn eigenbasis(&self) -> EigenBasis {
        let m = self.m();
        let kind = match self.eigenvectors {
            EigenvectorLayout::DisjointSupport => {
                let width = self.p.checked_div(m).unwrap_or(0);
                let blocks = (0..m).map(|j| (j * width, width)).collect();
                BasisKind::helmert(self.p, blocks)
            }
            EigenvectorLayout::RandomOrthonormal { seed } => {
                BasisKind::householder(self.p, m, seed)
            }
        };
        // Native order in both layouts: spikes first, then the tail.
        EigenBasis::new(self.p, kind, self.native_eigenvalues())
    }

    /// `sum_j (lambda_j - tau^2) v_j v_j^T + tau^2 I` for a flat tail; the full
    /// `B diag(lambda) B^T` otherwise.
    pub fn materialize(&self, limit: usize) -> Result<DMatrix<f64>> {
        if self.p > limit {
            return Err(Error::TooLarge { p: self.p, limit });
        }
        let basis = self.eigenbasis();
        match self.tail {
            TailShape::Flat => {
                let mut sigma = DMatrix::<f64>::identity(self.p, self.p) * self.tau2;
                for (j, lam) in self.spike_eigenvalues().iter().enumerate() {
                    let v = basis.vector(j);
                    let w = lam - self.tau2;
                    for c in 0..self.p {
                        for r in 0..self.p {
                            sigma[(r, c)] += w * v[r] * v[c];
                        }
                    }
                }
                Ok(sigma)
            }
            TailShape::LinearDecay => Ok(basis.materialize()),
        }
    }
}

/// One equicorrelated block: a fraction of the variables and their common correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub fraction: f64,
    pub rho: f64,
}

/// Block-diagonal covariance with equicorrelated blocks and an identity tail,
/// all scaled by `sigma2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BlockSpecRaw", into = "BlockSpecRaw")]
pub struct BlockSpec {
    sigma2: f64,
    blocks: Vec<Block>,
    p: usize,
    sizes: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockSpecRaw {
    sigma2: f64,
    blocks: Vec<Block>,
    p: usize,
}

impl TryFrom<BlockSpecRaw> for BlockSpec {
    type Error = Error;
    fn try_from(r: BlockSpecRaw) -> Result<Self> {
        BlockSpec::new(r.sigma2, r.blocks, r.p)
    }
}

impl From<BlockSpec> for BlockSpecRaw {
    fn from(b: BlockSpec) -> Self {
        BlockSpecRaw {
            sigma2: b.sigma2,
            blocks: b.blocks,
            p: b.p,
        }
    }
}

impl BlockSpec {
    pub fn new(sigma2: f64, blocks: Vec<Block>, p: usize) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::spec(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        if p == 0 {
            return Err(Error::spec("p must be at least 1"));
        }
        let mut total = 0.0;
        let mut sizes = Vec::with_capacity(blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            if !(b.fraction > 0.0 && b.fraction <= 1.0) {
                return Err(Error::spec(format!(
                    "block {i}: fraction must lie in (0, 1], got {}",
                    b.fraction
                )));
            }
            if !(0.0..1.0).contains(&b.rho) {
                return Err(Error::spec(format!(
                    "block {i}: correlation must lie in [0, 1), got {}",
                    b.rho
                )));
            }
            total += b.fraction;
            let k = (b.fraction * p as f64).round() as usize;
            if k == 0 {
                return Err(Error::spec(format!(
                    "block {i}: round({} * {p}) = 0 variables",
                    b.fraction
                )));
            }
            sizes.push(k);
        }
        if total > 1.0 + 1e-12 {
            return Err(Error::spec(format!("block fractions sum to {total} > 1")));
        }
        let used: usize = sizes.iter().sum();
        if used > p {
            return Err(Error::spec(format!(
                "rounded block sizes {sizes:?} need {used} > p = {p} variables"
            )));
        }
        Ok(BlockSpec {
            sigma2,
            blocks,
            p,
            sizes,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// `round(r_j p)` for each block.
    pub fn block_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn with_dim(&self, p: usize) -> Result<Self> {
        BlockSpec::new(self.sigma2, self.blocks.clone(), p)
    }

    /// Closed-form spectrum using the integer block sizes.
    pub fn eigenvalues(&self) -> BlockSpectrum {
        let s = self.sigma2;
        let spikes = self
            .blocks
            .iter()
            .zip(&self.sizes)
            .map(|(b, &k)| s * (b.rho * k as f64 + 1.0 - b.rho))
            .collect();
        let remainders = self
            .blocks
            .iter()
            .zip(&self.sizes)
            .map(|(b, &k)| (s * (1.0 - b.rho), k - 1))
            .collect();
        let used: usize = self.sizes.iter().sum();
        BlockSpectrum {
            spikes,
            remainders,
            identity: (s, self.p - used),
        }
    }

    pub fn eigenbasis(&self) -> EigenBasis {
        let mut offset = 0;
        let blocks: Vec<(usize, usize)> = self
            .sizes
            .iter()
            .map(|&k| {
                let b = (offset, k);
                offset += k;
                b
            })
            .collect();
        let spec = self.eigenvalues();
        let mut native = spec.spikes.clone();
        for &(value, count) in &spec.remainders {
            native.extend(std::iter::repeat_n(value, count));
        }
        native.extend(std::iter::repeat_n(spec.identity.0, spec.identity.1));
        EigenBasis::new(self.p, BasisKind::helmert(self.p, blocks), native)
    }

    /// The block-diagonal matrix assembled entry by entry.
    pub fn materialize(&self, limit: usize) -> Result<DMatrix<f64>> {
        if self.p > limit {
            return Err(Error::TooLarge { p: self.p, limit });
        }
        let mut sigma = DMatrix::<f64>::identity(self.p, self.p) * self.sigma2;
        let mut offset = 0;
        for (b, &k) in self.blocks.iter().zip(&self.sizes) {
            for r in offset..offset + k {
                for c in offset..offset + k {
                    if r != c {
                        sigma[(r, c)] = self.sigma2 * b.rho;
                    }
                }
            }
            offset += k;
        }
        Ok(sigma)
    }
}

/// Spectrum of a [`BlockSpec`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSpectrum {
    /// One spiked eigenvalue per block, in block order.
    pub spikes: Vec<f64>,
    /// Per block: the within-block remainder value `sigma^2 (1 - rho)` and its multiplicity `k - 1`.
    pub remainders: Vec<(f64, usize)>,
    /// Identity tail value `sigma^2` and multiplicity.
    pub identity: (f64, usize),
}

impl BlockSpectrum {
    /// All `p` eigenvalues in descending order.
    pub fn sorted(&self) -> Vec<f64> {
        let mut all = self.spikes.clone();
        for &(v, c) in &self.remainders {
            all.extend(std::iter::repeat_n(v, c));
        }
        all.extend(std::iter::repeat_n(self.identity.0, self.identity.1));
        all.sort_by(|a, b| b.total_cmp(a));
        all
    }
}

/// Either model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CovarianceModel {
    Spike(SpikeSpec),
    Block(BlockSpec),
}

impl CovarianceModel {
    pub fn p(&self) -> usize {
        match self {
            CovarianceModel::Spike(s) => s.p(),
            CovarianceModel::Block(b) => b.p(),
        }
    }

    /// Number of spiked components (spikes or blocks).
    pub fn spike_count(&self) -> usize {
        match self {
            CovarianceModel::Spike(s) => s.m(),
            CovarianceModel::Block(b) => b.blocks().len(),
        }
    }

    pub fn eigenbasis(&self) -> EigenBasis {
        match self {
            CovarianceModel::Spike(s) => s.eigenbasis(),
            CovarianceModel::Block(b) => b.eigenbasis(),
        }
    }

    pub fn materialize(&self, limit: usize) -> Result<DMatrix<f64>> {
        match self {
            CovarianceModel::Spike(s) => s.materialize(limit),
            CovarianceModel::Block(b) => b.materialize(limit),
        }
    }
}

impl From<SpikeSpec> for CovarianceModel {
    fn from(s: SpikeSpec) -> Self {
        CovarianceModel::Spike(s)
    }
}

impl From<BlockSpec> for CovarianceModel {
    fn from(b: BlockSpec) -> Self {
        CovarianceModel::Block(b)
    }
}

#[derive(Debug, Clone)]
enum BasisKind {
    /// Native order: one constant vector per block, then the Helmert contrasts
    /// of each block, then unit vectors of uncovered coordinates.
    Helmert {
        blocks: Vec<(usize, usize)>,
        uncovered: Vec<usize>,
    },
    /// `Q = H_0 H_1 ... H_{m-1}`; reflector `j` acts on coordinates `j..p`.
    Householder { reflectors: Vec<Vec<f64>> },
}

impl BasisKind {
    fn helmert(p: usize, blocks: Vec<(usize, usize)>) -> Self {
        let mut covered = vec![false; p];
        for &(o, k) in &blocks {
            covered[o..o + k].iter_mut().for_each(|c| *c = true);
        }
        let uncovered = (0..p).filter(|&i| !covered[i]).collect();
        BasisKind::Helmert { blocks, uncovered }
    }

    fn householder(p: usize, m: usize, seed: u64) -> Self {
        // Gaussian p x m matrix, column j from its own substream.
        let mut a: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut rng = substream(seed, Domain::Basis, j as u64);
                (0..p).map(|_| StandardNormal.sample(&mut rng)).collect()
            })
            .collect();
        let mut reflectors = Vec::with_capacity(m);
        for j in 0..m {
            let x = &a[j][j..];
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut u = x.to_vec();
            let alpha = if u[0] >= 0.0 { norm } else { -norm };
            u[0] += alpha;
            let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if un > 0.0 {
                u.iter_mut().for_each(|v| *v /= un);
            }
            for col in a.iter_mut().skip(j + 1) {
                reflect(&u, &mut col[j..]);
            }
            reflectors.push(u);
        }
        BasisKind::Householder { reflectors }
    }
}

/// `y <- (I - 2 u u^T) y` for unit `u`.
fn reflect(u: &[f64], y: &mut [f64]) {
    let d: f64 = u.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    y.iter_mut().zip(u).for_each(|(yi, ui)| *yi -= 2.0 * d * ui);
}

/// Implicit orthonormal eigenbasis of a model covariance.
///
/// Basis vectors are indexed by *rank*: rank 0 carries the largest eigenvalue.
/// Ties are broken by the native construction order, so spiked directions come
/// before tail directions of equal value.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    p: usize,
    kind: BasisKind,
    /// `order[rank]` = native index.
    order: Vec<usize>,
    eigenvalues: Vec<f64>,
}

impl EigenBasis {
    fn new(p: usize, kind: BasisKind, native: Vec<f64>) -> Self {
        debug_assert_eq!(native.len(), p);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| native[b].total_cmp(&native[a]));
        let eigenvalues = order.iter().map(|&i| native[i]).collect();
        EigenBasis {
            p,
            kind,
            order,
            eigenvalues,
        }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `x = sum_r coeffs[r] * b_r`.
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut native = vec![0.0; self.p];
        for (r, &c) in coeffs.iter().enumerate() {
            native[self.order[r]] = c;
        }
        let mut out = vec![0.0; self.p];
        self.synthesize(&native, &mut out);
        out
    }

    /// Writes `sum_r coeffs[r] * b_r` into `out`; `scratch` must have length `p`.
    pub fn apply_into(&self, coeffs: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        scratch.iter_mut().for_each(|v| *v = 0.0);
        for (r, &c) in coeffs.iter().enumerate() {
            scratch[self.order[r]] = c;
        }
        self.synthesize(scratch, out);
    }

    /// Coordinates of `x` in the basis, rank order (`B^T x`).
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let native = self.analyze(x);
        self.order.iter().map(|&i| native[i]).collect()
    }

    /// Coordinate of `x` along the basis vector of rank `rank`.
    pub fn project_one(&self, x: &[f64], rank: usize) -> f64 {
        let v = self.vector(rank);
        v.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Basis vector of rank `rank`.
    pub fn vector(&self, rank: usize) -> Vec<f64> {
        let mut e = vec![0.0; rank + 1];
        e[rank] = 1.0;
        self.apply(&e)
    }

    /// Dense `B diag(lambda) B^T`, built column by column through the fast transforms.
    fn materialize(&self) -> DMatrix<f64> {
        let mut sigma = DMatrix::<f64>::zeros(self.p, self.p);
        let mut e = vec![0.0; self.p];
        for k in 0..self.p {
            e[k] = 1.0;
            let mut c = self.project(&e);
            e[k] = 0.0;
            c.iter_mut()
                .zip(&self.eigenvalues)
                .for_each(|(ci, l)| *ci *= l);
            let col = self.apply(&c);
            sigma.column_mut(k).copy_from_slice(&col);
        }
        sigma
    }

    fn synthesize(&self, native: &[f64], out: &mut [f64]) {
        match &self.kind {
            BasisKind::Helmert { blocks, uncovered } => {
                let nb = blocks.len();
                let mut next = nb;
                for (b, &(o, k)) in blocks.iter().enumerate() {
                    let contrasts = &native[next..next + k - 1];
                    next += k - 1;
                    let base = native[b] / (k as f64).sqrt();
                    // Coordinate i gets +c_r/sqrt(r(r+1)) from every r > i and
                    // -i c_i/sqrt(i(i+1)) from r = i.
                    let mut suffix = 0.0;
                    for i in (0..k).rev() {
                        let own = if i >= 1 {
                            let r = i as f64;
                            -r * contrasts[i - 1] / (r * (r + 1.0)).sqrt()
                        } else {
                            0.0
                        };
                        out[o + i] = base + suffix + own;
                        if i >= 1 {
                            let r = i as f64;
                            suffix += contrasts[i - 1] / (r * (r + 1.0)).sqrt();
                        }
                    }
                }
                for (t, &coord) in uncovered.iter().enumerate() {
                    out[coord] = native[next + t];
                }
            }
            BasisKind::Householder { reflectors } => {
                out.copy_from_slice(native);
                for (j, u) in reflectors.iter().enumerate().rev() {
                    reflect(u, &mut out[j..]);
                }
            }
        }
    }

    fn analyze(&self, x: &[f64]) -> Vec<f64> {
        let mut native = vec![0.0; self.p];
        match &self.kind {
            BasisKind::Helmert { blocks, uncovered } => {
                let nb = blocks.len();
                let mut next = nb;
                for (b, &(o, k)) in blocks.iter().enumerate() {
                    let xs = &x[o..o + k];
                    native[b] = xs.iter().sum::<f64>() / (k as f64).sqrt();
                    let mut prefix = 0.0;
                    for r in 1..k {
                        prefix += xs[r - 1];
                        let rf = r as f64;
                        native[next + r - 1] = (prefix - rf * xs[r]) / (rf * (rf + 1.0)).sqrt();
                    }
                    next += k - 1;
                }
                for (t, &coord) in uncovered.iter().enumerate() {
                    native[next + t] = x[coord];
                }
            }
            BasisKind::Householder { reflectors } => {
                native.copy_from_slice(x);
                for (j, u) in reflectors.iter().enumerate() {
                    reflect(u, &mut native[j..]);
                }
            }
        }
        native
    }
}
