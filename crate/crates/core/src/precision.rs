//! Gaussian precision algebra for the latent positions.
//!
//! `Ω` is always a precision matrix. The operator at the heart of split HMC is
//! `Σ = Ω/γ² + L`, where `L` is the network Laplacian; it is both the
//! precision of the Gaussian part of the posterior and the momentum
//! covariance (mass matrix). The fill-reducing symbolic analysis of `Σ` is
//! computed once and every change of `γ²` only redoes the numeric factorization.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GlpmError, Result};
use crate::sparse::{PatternUnion, SparseCholesky, SymbolicCholesky, SymmetricCsc};

/// Structured description of the prior precision `Ω`.
///
/// In TOML: `omega = "identity"`,
/// `omega = { ar1 = { blocks = [[1, 2, 3]], rho = 0.95 } }` or
/// `omega = { triplets = "omega.txt" }`. Node indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaSpec {
    Identity,
    /// Tridiagonal AR(1) precision along each block, scaled so every node has
    /// unit marginal variance. Nodes outside all blocks get a unit diagonal.
    Ar1 { blocks: Vec<Vec<usize>>, rho: f64 },
    /// Text file of `i j value` lines; each unordered pair at most once.
    Triplets(PathBuf),
}

impl Default for OmegaSpec {
    fn default() -> Self {
        OmegaSpec::Identity
    }
}

#[derive(Deserialize)]
struct OmegaFile {
    omega: OmegaSpec,
}

impl OmegaSpec {
    /// Parses an Ω specification file (a TOML document with an `omega` key).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str::<OmegaFile>(text)
            .map(|f| f.omega)
            .map_err(|e| GlpmError::parse("omega specification", 0, e.to_string()))
    }

    /// Builds the `n × n` precision. Relative triplet paths resolve against `base_dir`.
    pub fn build(&self, n: usize, base_dir: Option<&Path>) -> Result<SymmetricCsc> {
        match self {
            OmegaSpec::Identity => Ok(SymmetricCsc::identity(n)),
            OmegaSpec::Ar1 { blocks, rho } => ar1_precision(n, blocks, *rho),
            OmegaSpec::Triplets(path) => {
                let path = match base_dir {
                    Some(base) if path.is_relative() => base.join(path),
                    _ => path.clone(),
                };
                let text = fs::read_to_string(&path)?;
                parse_triplets(n, &text, &path.display().to_string())
            }
        }
    }
}

/// Unit-marginal-variance AR(1) precision on each block of 1-based node indices.
pub fn ar1_precision(n: usize, blocks: &[Vec<usize>], rho: f64) -> Result<SymmetricCsc> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(GlpmError::InvalidParameter(format!("AR(1) rho {rho} outside (-1, 1)")));
    }
    let mut covered = vec![false; n];
    let mut triplets = Vec::new();
    let scale = 1.0 / (1.0 - rho * rho);
    for block in blocks {
        for &node in block {
            if node == 0 || node > n {
                return Err(GlpmError::NodeOutOfRange { node, n });
            }
            if std::mem::replace(&mut covered[node - 1], true) {
                return Err(GlpmError::InvalidParameter(format!(
                    "node {node} appears in more than one AR(1) block"
                )));
            }
        }
        let m = block.len();
        for (t, &node) in block.iter().enumerate() {
            let interior = t > 0 && t + 1 < m;
            let diag = if m == 1 {
                1.0
            } else if interior {
                (1.0 + rho * rho) * scale
            } else {
                scale
            };
            triplets.push((node - 1, node - 1, diag));
            if t + 1 < m {
                triplets.push((node - 1, block[t + 1] - 1, -rho * scale));
            }
        }
    }
    for (node, seen) in covered.iter().enumerate() {
        if !seen {
            triplets.push((node, node, 1.0));
        }
    }
    SymmetricCsc::from_triplets(n, &triplets)
}

fn parse_triplets(n: usize, text: &str, source: &str) -> Result<SymmetricCsc> {
    let mut triplets = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(GlpmError::parse(source, lineno + 1, "expected `i j value`"));
        }
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| GlpmError::parse(source, lineno + 1, e.to_string()))
        };
        let (i, j) = (idx(fields[0])?, idx(fields[1])?);
        let v: f64 = fields[2]
            .parse()
            .map_err(|e: std::num::ParseFloatError| GlpmError::parse(source, lineno + 1, e.to_string()))?;
        for node in [i, j] {
            if node == 0 || node > n {
                return Err(GlpmError::NodeOutOfRange { node, n });
            }
        }
        if !seen.insert((i.min(j), i.max(j))) {
            return Err(GlpmError::DuplicateDyad { i: i.min(j), j: i.max(j) });
        }
        triplets.push((i - 1, j - 1, v));
    }
    SymmetricCsc::from_triplets(n, &triplets)
}

/// Prior over positions and link parameters.
#[derive(Debug, Clone)]
pub struct PriorSpec {
    omega: SymmetricCsc,
    omega_factor: SparseCholesky,
    pub tau_alpha: Vec<f64>,
    pub tau_beta: Vec<f64>,
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub d: usize,
}

impl PriorSpec {
    /// Validates the hyperparameters and checks that `Ω` is SPD.
    pub fn new(
        omega: SymmetricCsc,
        tau_alpha: Vec<f64>,
        tau_beta: Vec<f64>,
        gamma_a: f64,
        gamma_b: f64,
        d: usize,
    ) -> Result<Self> {
        if d == 0 {
            return Err(GlpmError::InvalidParameter("latent dimension must be positive".into()));
        }
        if tau_alpha.is_empty() || tau_alpha.len() != tau_beta.len() {
            return Err(GlpmError::dims(
                format!("{} Beta α values", tau_beta.len()),
                tau_alpha.len(),
            ));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !tau_alpha.iter().chain(&tau_beta).all(|&v| positive(v)) {
            return Err(GlpmError::InvalidParameter("Beta hyperparameters must be positive".into()));
        }
        if !positive(gamma_a) || !positive(gamma_b) {
            return Err(GlpmError::InvalidParameter(
                "InverseGamma hyperparameters must be positive".into(),
            ));
        }
        if !omega.is_symmetric(1e-12 * omega.norm().max(1.0)) {
            return Err(GlpmError::InvalidParameter("Ω is not symmetric".into()));
        }
        let omega_factor = SparseCholesky::factorize(&omega)?;
        Ok(PriorSpec {
            omega,
            omega_factor,
            tau_alpha,
            tau_beta,
            gamma_a,
            gamma_b,
            d,
        })
    }

    /// `Ω = I`, Beta(1, 1) for each of `categories`, InverseGamma(1, 1), `d = 2`.
    pub fn standard(n: usize, categories: usize) -> Self {
        Self::new(
            SymmetricCsc::identity(n),
            vec![1.0; categories],
            vec![1.0; categories],
            1.0,
            1.0,
            2,
        )
        .expect("standard prior is valid")
    }

    pub fn omega(&self) -> &SymmetricCsc {
        &self.omega
    }

    pub fn node_count(&self) -> usize {
        self.omega.dim()
    }

    pub fn num_categories(&self) -> usize {
        self.tau_alpha.len()
    }

    /// `Σ_ℓ Z_ℓᵀ Ω Z_ℓ`.
    pub fn omega_quadratic(&self, z: &Array2<f64>) -> f64 {
        (0..z.ncols())
            .map(|k| {
                let col: Vec<f64> = z.column(k).to_vec();
                self.omega.quadratic(&col)
            })
            .sum()
    }
}

/// Draws positions with independent columns of precision `Ω/γ²`.
pub fn sample_prior_positions<R: Rng + ?Sized>(
    prior: &PriorSpec,
    gamma2: f64,
    rng: &mut R,
) -> Array2<f64> {
    let n = prior.node_count();
    let scale = gamma2.sqrt();
    let mut z = Array2::zeros((n, prior.d));
    let mut xi = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut work = vec![0.0; n];
    for k in 0..prior.d {
        xi.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        prior.omega_factor.solve_factor_transpose(&xi, &mut out, &mut work);
        for i in 0..n {
            z[[i, k]] = scale * out[i];
        }
    }
    z
}

/// Which factorization backs a [`PrecisionOperator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorBackend {
    /// Sparse unless the predicted Cholesky fill is dense enough that the
    /// spectral basis is cheaper per `γ²` change.
    #[default]
    Auto,
    Sparse,
    Spectral,
}

/// Fill fraction of the lower triangle above which `Auto` goes spectral.
const SPECTRAL_FILL_FRACTION: f64 = 0.25;
const SPECTRAL_MIN_NODES: usize = 64;
const SPECTRAL_MAX_NODES: usize = 4000;

/// Generalized eigenbasis of `(L, Ω)`: `Wᵀ Ω W = I`, `Wᵀ L W = Λ`, so that
/// `Σ(γ²) = W⁻ᵀ (I/γ² + Λ) W⁻¹` for every `γ²`.
#[derive(Debug)]
struct SpectralBasis {
    eigenvalues: Vec<f64>,
    w: DenseColumns,
    /// `Ω W = W⁻ᵀ`.
    omega_w: DenseColumns,
}

/// Square column-major matrix. The products here have only `d` right-hand
/// sides, so explicit column loops beat a packed GEMM.
#[derive(Debug)]
struct DenseColumns {
    n: usize,
    data: Vec<f64>,
}

impl DenseColumns {
    fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    /// `out[c][k] = colₖ · x[c]` for each right-hand side `x[c]`.
    fn tmul(&self, x: &[Vec<f64>], out: &mut [Vec<f64>]) {
        for k in 0..self.n {
            let col = self.column(k);
            for (xc, oc) in x.iter().zip(out.iter_mut()) {
                oc[k] = dot(col, xc);
            }
        }
    }

    /// `out[c] = Σ_k x[c][k]·colₖ`.
    fn mul(&self, x: &[Vec<f64>], out: &mut [Vec<f64>]) {
        for oc in out.iter_mut() {
            oc.iter_mut().for_each(|v| *v = 0.0);
        }
        for k in 0..self.n {
            let col = self.column(k);
            for (xc, oc) in x.iter().zip(out.iter_mut()) {
                let a = xc[k];
                for (o, w) in oc.iter_mut().zip(col) {
                    *o += a * w;
                }
            }
        }
    }
}

/// Four partial sums so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn split_columns(b: &Array2<f64>) -> Vec<Vec<f64>> {
    b.columns().into_iter().map(|c| c.to_vec()).collect()
}

fn join_columns(cols: &[Vec<f64>], b: &mut Array2<f64>) {
    for (k, col) in cols.iter().enumerate() {
        b.column_mut(k).iter_mut().zip(col).for_each(|(x, v)| *x = *v);
    }
}

impl SpectralBasis {
    fn compute(prior: &PriorSpec, laplacian: &SymmetricCsc) -> Self {
        let n = prior.node_count();
        let chol = &prior.omega_factor;
        // Y = B⁻¹ L with Ω = B Bᵀ, then C = B⁻¹ Yᵀ = B⁻¹ L B⁻ᵀ.
        let mut col = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        let mut y = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            for (i, v) in laplacian.column(j) {
                col[i] = v;
            }
            chol.solve_factor(&col, &mut tmp);
            y.column_mut(j).copy_from_slice(&tmp);
        }
        let yt = y.transpose();
        let mut c = nalgebra::DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            col.copy_from_slice(yt.column(j).as_slice());
            chol.solve_factor(&col, &mut tmp);
            c.column_mut(j).copy_from_slice(&tmp);
        }
        let c = (&c + c.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(c);

        let mut w = Vec::with_capacity(n * n);
        let mut omega_w = Vec::with_capacity(n * n);
        let mut work = vec![0.0; n];
        let mut ow = vec![0.0; n];
        for k in 0..n {
            col.copy_from_slice(eig.eigenvectors.column(k).as_slice());
            // W = B⁻ᵀ Q
            chol.solve_factor_transpose(&col, &mut tmp, &mut work);
            prior.omega.mul_vec(&tmp, &mut ow);
            w.extend_from_slice(&tmp);
            omega_w.extend_from_slice(&ow);
        }
        SpectralBasis {
            eigenvalues: eig.eigenvalues.iter().copied().collect(),
            w: DenseColumns { n, data: w },
            omega_w: DenseColumns { n, data: omega_w },
        }
    }

    fn scales(&self, gamma2: f64) -> Result<Vec<f64>> {
        let inv = 1.0 / gamma2;
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &lambda)| {
                let d = inv + lambda;
                if d > 0.0 && d.is_finite() {
                    Ok(d)
                } else {
                    Err(GlpmError::NotPositiveDefinite { pivot: k })
                }
            })
            .collect()
    }

    /// `B ← W diag(1/D) Wᵀ B`.
    fn solve(&self, diag: &[f64], b: &mut Array2<f64>) {
        let mut cols = split_columns(b);
        let mut t = vec![vec![0.0; self.w.n]; cols.len()];
        self.w.tmul(&cols, &mut t);
        for tc in t.iter_mut() {
            tc.iter_mut().zip(diag).for_each(|(v, d)| *v /= d);
        }
        self.w.mul(&t, &mut cols);
        join_columns(&cols, b);
    }

    /// `Ω W diag(√D) Ξ`: columns with covariance `Σ` when `Ξ` is standard normal.
    fn mul_factor(&self, sqrt_diag: &[f64], xi: &Array2<f64>) -> Array2<f64> {
        let mut t = split_columns(xi);
        for tc in t.iter_mut() {
            tc.iter_mut().zip(sqrt_diag).for_each(|(v, s)| *v *= s);
        }
        let mut out = vec![vec![0.0; self.omega_w.n]; t.len()];
        self.omega_w.mul(&t, &mut out);
        let mut result = Array2::zeros(xi.raw_dim());
        join_columns(&out, &mut result);
        result
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Sparse(SparseCholesky),
    Spectral {
        basis: Arc<SpectralBasis>,
        diag: Vec<f64>,
        sqrt_diag: Vec<f64>,
    },
}

/// Factorized `Σ = Ω/γ² + L`.
#[derive(Debug, Clone)]
pub struct PrecisionOperator {
    sigma: SymmetricCsc,
    factor: Factor,
    symbolic: Arc<SymbolicCholesky>,
    gamma2: f64,
    pattern: Arc<PatternUnion>,
}

fn check_gamma2(gamma2: f64) -> Result<()> {
    if gamma2 > 0.0 && gamma2.is_finite() {
        Ok(())
    } else {
        Err(GlpmError::InvalidParameter(format!("γ² = {gamma2} must be positive")))
    }
}

impl PrecisionOperator {
    /// Builds and factorizes `Σ` at `gamma2` with the automatic backend choice.
    pub fn build(prior: &PriorSpec, laplacian: &SymmetricCsc, gamma2: f64) -> Result<Self> {
        Self::build_with(prior, laplacian, gamma2, FactorBackend::Auto)
    }

    pub fn build_with(
        prior: &PriorSpec,
        laplacian: &SymmetricCsc,
        gamma2: f64,
        backend: FactorBackend,
    ) -> Result<Self> {
        check_gamma2(gamma2)?;
        if laplacian.dim() != prior.node_count() {
            return Err(GlpmError::dims(
                format!("{} nodes", prior.node_count()),
                laplacian.dim(),
            ));
        }
        let pattern = Arc::new(PatternUnion::new(prior.omega(), laplacian)?);
        let sigma = pattern.combine(1.0 / gamma2, 1.0);
        let symbolic = Arc::new(SymbolicCholesky::analyze(&sigma));
        let n = sigma.dim();
        let spectral = match backend {
            FactorBackend::Sparse => false,
            FactorBackend::Spectral => true,
            FactorBackend::Auto => {
                let dense = n * (n + 1) / 2;
                (SPECTRAL_MIN_NODES..=SPECTRAL_MAX_NODES).contains(&n)
                    && symbolic.factor_nnz() as f64 > SPECTRAL_FILL_FRACTION * dense as f64
            }
        };
        let factor = if spectral {
            let basis = Arc::new(SpectralBasis::compute(prior, laplacian));
            Self::spectral_factor(basis, gamma2)?
        } else {
            Factor::Sparse(SparseCholesky::refactorize(Arc::clone(&symbolic), &sigma)?)
        };
        Ok(PrecisionOperator {
            sigma,
            factor,
            symbolic,
            gamma2,
            pattern,
        })
    }

    fn spectral_factor(basis: Arc<SpectralBasis>, gamma2: f64) -> Result<Factor> {
        let diag = basis.scales(gamma2)?;
        let sqrt_diag = diag.iter().map(|d| d.sqrt()).collect();
        Ok(Factor::Spectral {
            basis,
            diag,
            sqrt_diag,
        })
    }

    /// Refactorization at a new `γ²`, reusing the symbolic analysis (sparse)
    /// or the eigenbasis (spectral).
    pub fn rebuild(&self, gamma2: f64) -> Result<Self> {
        check_gamma2(gamma2)?;
        let sigma = self.pattern.combine(1.0 / gamma2, 1.0);
        let factor = match &self.factor {
            Factor::Sparse(_) => {
                Factor::Sparse(SparseCholesky::refactorize(Arc::clone(&self.symbolic), &sigma)?)
            }
            Factor::Spectral { basis, .. } => Self::spectral_factor(Arc::clone(basis), gamma2)?,
        };
        Ok(PrecisionOperator {
            sigma,
            factor,
            symbolic: Arc::clone(&self.symbolic),
            gamma2,
            pattern: Arc::clone(&self.pattern),
        })
    }

    pub fn sigma(&self) -> &SymmetricCsc {
        &self.sigma
    }

    pub fn backend(&self) -> FactorBackend {
        match self.factor {
            Factor::Sparse(_) => FactorBackend::Sparse,
            Factor::Spectral { .. } => FactorBackend::Spectral,
        }
    }

    /// The sparse Cholesky factor, when that backend is active.
    pub fn sparse_factor(&self) -> Option<&SparseCholesky> {
        match &self.factor {
            Factor::Sparse(f) => Some(f),
            Factor::Spectral { .. } => None,
        }
    }

    /// Fill-reducing symbolic analysis of `Σ`'s pattern.
    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn gamma2(&self) -> f64 {
        self.gamma2
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }

    fn check_rows(&self, m: &Array2<f64>) -> Result<()> {
        if m.nrows() != self.dim() {
            return Err(GlpmError::dims(format!("{} rows", self.dim()), m.nrows()));
        }
        Ok(())
    }

    /// `Σ⁻¹ B`, column by column.
    pub fn solve(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_rows(b)?;
        let mut out = b.clone();
        self.solve_in_place(&mut out);
        Ok(out)
    }

    /// `B ← Σ⁻¹ B`. Panics on a row-count mismatch.
    pub fn solve_in_place(&self, b: &mut Array2<f64>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n);
        match &self.factor {
            Factor::Sparse(f) => {
                let mut col = vec![0.0; n];
                let mut work = vec![0.0; n];
                for mut column in b.columns_mut() {
                    for (c, v) in col.iter_mut().zip(column.iter()) {
                        *c = *v;
                    }
                    f.solve_in_place(&mut col, &mut work);
                    for (v, c) in column.iter_mut().zip(&col) {
                        *v = *c;
                    }
                }
            }
            Factor::Spectral { basis, diag, .. } => basis.solve(diag, b),
        }
    }

    /// `Σ B`, column by column.
    pub fn multiply(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_rows(b)?;
        let n = self.dim();
        let mut out = Array2::zeros(b.raw_dim());
        let mut col = vec![0.0; n];
        let mut prod = vec![0.0; n];
        for k in 0..b.ncols() {
            for i in 0..n {
                col[i] = b[[i, k]];
            }
            self.sigma.mul_vec(&col, &mut prod);
            for i in 0..n {
                out[[i, k]] = prod[i];
            }
        }
        Ok(out)
    }

    /// `d` independent columns, each `N(0, Σ)`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Array2<f64> {
        let n = self.dim();
        let xi = Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal));
        self.apply_root(&xi)
    }

    /// `G Ξ` for the backend's square root `G Gᵀ = Σ`.
    /// Sparse backend: `G = Pᵀ L`; spectral backend: `G = Ω W diag(√D)`.
    pub fn apply_root(&self, xi: &Array2<f64>) -> Array2<f64> {
        let n = self.dim();
        assert_eq!(xi.nrows(), n);
        match &self.factor {
            Factor::Sparse(f) => {
                let mut out = Array2::zeros(xi.raw_dim());
                let mut col = vec![0.0; n];
                let mut prod = vec![0.0; n];
                let mut work = vec![0.0; n];
                for (src, mut dst) in xi.columns().into_iter().zip(out.columns_mut()) {
                    for (c, v) in col.iter_mut().zip(src.iter()) {
                        *c = *v;
                    }
                    f.mul_factor(&col, &mut prod, &mut work);
                    for (v, p) in dst.iter_mut().zip(&prod) {
                        *v = *p;
                    }
                }
                out
            }
            Factor::Spectral {
                basis, sqrt_diag, ..
            } => basis.mul_factor(sqrt_diag, xi),
        }
    }

    /// `½ Σ_ℓ Z_ℓᵀ Σ Z_ℓ`.
    pub fn quadratic_form(&self, z: &Array2<f64>) -> Result<f64> {
        self.check_rows(z)?;
        let mut col = vec![0.0; self.dim()];
        let mut total = 0.0;
        for k in 0..z.ncols() {
            for (c, v) in col.iter_mut().zip(z.column(k)) {
                *c = *v;
            }
            total += self.sigma.quadratic(&col);
        }
        Ok(0.5 * total)
    }
}

/// Builds the factorized `Σ` for `(prior, laplacian, γ²)`.
pub fn build_precision(
    prior: &PriorSpec,
    laplacian: &SymmetricCsc,
    gamma2: f64,
) -> Result<PrecisionOperator> {
    PrecisionOperator::build(prior, laplacian, gamma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> SymmetricCsc {
        Network::new(3, 1, &[(0, 1), (1, 2)], &[], &[]).unwrap().laplacian()
    }

    #[test]
    fn identity_prior_empty_graph_is_identity() {
        let prior = PriorSpec::standard(3, 1);
        let op = build_precision(&prior, &SymmetricCsc::zeros(3), 1.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(op.sigma().get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn half_gamma_doubles_prior_part() {
        let prior = PriorSpec::standard(3, 1);
        let lap = path3();
        let op = build_precision(&prior, &lap, 0.5).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 2.0 } else { 0.0 } + lap.get(i, j);
                assert_eq!(op.sigma().get(i, j), expect);
            }
        }
    }

    #[test]
    fn ar1_precision_inverts_to_toeplitz_correlation() {
        let rho: f64 = 0.95;
        let omega = ar1_precision(4, &[vec![1, 2, 3, 4]], rho).unwrap();
        let prior = PriorSpec::new(omega, vec![1.0], vec![1.0], 1.0, 1.0, 1).unwrap();
        let op = build_precision(&prior, &SymmetricCsc::zeros(4), 1.0).unwrap();
        for j in 0..4 {
            let mut e = Array2::zeros((4, 1));
            e[[j, 0]] = 1.0;
            let col = op.solve(&e).unwrap();
            for i in 0..4 {
                let expect = rho.powi((i as i32 - j as i32).abs());
                assert!((col[[i, 0]] - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ar1_rejects_overlapping_blocks() {
        assert!(ar1_precision(3, &[vec![1, 2], vec![2, 3]], 0.5).is_err());
        assert!(ar1_precision(3, &[vec![1, 2]], 1.0).is_err());
    }

    #[test]
    fn omega_spec_toml_forms() {
        assert_eq!(OmegaSpec::from_toml_str("omega = \"identity\"").unwrap(), OmegaSpec::Identity);
        let ar = OmegaSpec::from_toml_str("[omega.ar1]\nblocks = [[1, 2]]\nrho = 0.95\n").unwrap();
        assert_eq!(ar, OmegaSpec::Ar1 { blocks: vec![vec![1, 2]], rho: 0.95 });
        let tr = OmegaSpec::from_toml_str("omega = { triplets = \"om.txt\" }").unwrap();
        assert_eq!(tr, OmegaSpec::Triplets("om.txt".into()));
    }

    #[test]
    fn triplet_parsing() {
        let om = parse_triplets(2, "1 1 2.0\n2 2 2.0\n1 2 -0.5\n", "t").unwrap();
        assert_eq!(om.get(1, 0), -0.5);
        assert!(parse_triplets(2, "1 2 1\n2 1 1\n", "t").is_err());
        assert!(parse_triplets(2, "1 3 1\n", "t").is_err());
    }

    #[test]
    fn solve_identity_and_zero() {
        let prior = PriorSpec::standard(4, 1);
        let op = build_precision(&prior, &SymmetricCsc::zeros(4), 1.0).unwrap();
        let b = Array2::from_shape_fn((4, 2), |(i, k)| (i * 2 + k) as f64);
        assert_eq!(op.solve(&b).unwrap(), b);
        let zero = Array2::zeros((4, 2));
        assert_eq!(op.solve(&zero).unwrap(), zero);
        assert!(op.solve(&Array2::zeros((3, 2))).is_err());
    }

    #[test]
    fn quadratic_form_examples() {
        let prior = PriorSpec::standard(3, 1);
        let op = build_precision(&prior, &SymmetricCsc::zeros(3), 1.0).unwrap();
        assert_eq!(op.quadratic_form(&Array2::zeros((3, 2))).unwrap(), 0.0);
        // ‖Z‖² = 6
        let z = Array2::from_shape_vec((3, 2), vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((op.quadratic_form(&z).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn rebuild_matches_fresh_build() {
        let prior = PriorSpec::standard(3, 1);
        let lap = path3();
        let op = build_precision(&prior, &lap, 1.0).unwrap();
        let re = op.rebuild(0.25).unwrap();
        let fresh = build_precision(&prior, &lap, 0.25).unwrap();
        assert_eq!(re.sigma(), fresh.sigma());
        assert!(Arc::ptr_eq(re.symbolic(), op.symbolic()));
        assert_eq!(re.backend(), FactorBackend::Sparse);
        assert!(op.rebuild(0.0).is_err());
    }

    #[test]
    fn spectral_backend_matches_sparse() {
        let net = Network::new(5, 1, &[(0, 1), (1, 2), (2, 3), (0, 4)], &[], &[]).unwrap();
        let omega = ar1_precision(5, &[vec![1, 2, 3], vec![4, 5]], 0.6).unwrap();
        let prior = PriorSpec::new(omega, vec![1.0], vec![1.0], 1.0, 1.0, 2).unwrap();
        let lap = net.laplacian();
        let sparse = PrecisionOperator::build_with(&prior, &lap, 0.7, FactorBackend::Sparse).unwrap();
        let spectral =
            PrecisionOperator::build_with(&prior, &lap, 0.7, FactorBackend::Spectral).unwrap();
        assert_eq!(spectral.backend(), FactorBackend::Spectral);
        let b = Array2::from_shape_fn((5, 2), |(i, k)| (i as f64 + 1.0) * (k as f64 - 0.5));
        let x1 = sparse.solve(&b).unwrap();
        let x2 = spectral.solve(&b).unwrap();
        for (a, c) in x1.iter().zip(x2.iter()) {
            assert!((a - c).abs() < 1e-12);
        }
        let re = spectral.rebuild(3.0).unwrap();
        assert_eq!(re.backend(), FactorBackend::Spectral);
        let g = re.apply_root(&Array2::eye(5));
        let dense = re.sigma().to_dense();
        for i in 0..5 {
            for j in 0..5 {
                let ggt: f64 = (0..5).map(|k| g[[i, k]] * g[[j, k]]).sum();
                assert!((ggt - dense[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let prior = PriorSpec::standard(5, 1);
        let op = build_precision(&prior, &SymmetricCsc::zeros(5), 1.0).unwrap();
        let a = op.sample_momentum(2, &mut ChaCha8Rng::seed_from_u64(7));
        let b = op.sample_momentum(2, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        let p = sample_prior_positions(&prior, 2.0, &mut ChaCha8Rng::seed_from_u64(3));
        let q = sample_prior_positions(&prior, 2.0, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_invalid_priors() {
        let id = SymmetricCsc::identity(2);
        assert!(PriorSpec::new(id.clone(), vec![1.0], vec![1.0, 1.0], 1.0, 1.0, 2).is_err());
        assert!(PriorSpec::new(id.clone(), vec![0.0], vec![1.0], 1.0, 1.0, 2).is_err());
        assert!(PriorSpec::new(id.clone(), vec![1.0], vec![1.0], 1.0, -1.0, 2).is_err());
        assert!(PriorSpec::new(id, vec![1.0], vec![1.0], 1.0, 1.0, 0).is_err());
        let indefinite = SymmetricCsc::from_triplets(2, &[(0, 0, 1.0), (1, 1, -1.0)]).unwrap();
        assert!(matches!(
            PriorSpec::new(indefinite, vec![1.0], vec![1.0], 1.0, 1.0, 2),
            Err(GlpmError::NotPositiveDefinite { pivot: 1 })
        ));
    }
}
