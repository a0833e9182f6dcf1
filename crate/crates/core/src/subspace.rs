//! RKHS subspace learners over a joint Gram: TCA, SSTCA and IGLDA.
//!
//! Each method minimizes `tr(Wᵀ(K 𝓛 K + μI)W)` subject to `WᵀKH_c A H_c KW = I_m`,
//! where `𝓛` collects the method's penalty matrices (`γγᵀ`, the graph
//! Laplacian, the intra-class matrix) and `A` is the constraint core (`I`,
//! or the label kernel for SSTCA). The solution is the top-`m` generalized
//! eigenvectors of `(B, A_reg)` with `B = KH_cAH_cK`, `A_reg = K𝓛K + μI`.
//! `A_reg` is factored as `LLᵀ` and the symmetric problem
//! `L⁻¹BL⁻ᵀ u = λu` is solved instead; `w = L⁻ᵀu/√λ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::mmd::{GammaVector, JointGram};
use crate::types::UNLABELED;

/// Eigenpairs below this fraction of the largest eigenvalue are discarded.
pub const EIGEN_CUTOFF: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceMethod {
    Tca,
    Sstca,
    Iglda,
}

impl fmt::Display for SubspaceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubspaceMethod::Tca => "tca",
            SubspaceMethod::Sstca => "sstca",
            SubspaceMethod::Iglda => "iglda",
        })
    }
}

impl FromStr for SubspaceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tca" => Ok(SubspaceMethod::Tca),
            "sstca" => Ok(SubspaceMethod::Sstca),
            "iglda" => Ok(SubspaceMethod::Iglda),
            _ => Err(Error::InvalidConfig(format!("unknown subspace method `{s}`"))),
        }
    }
}

/// `I − (1/N)𝟙𝟙ᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CenteringMatrix(DMatrix<f64>);

impl CenteringMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn centering_matrix(n: usize) -> Result<CenteringMatrix> {
    if n == 0 {
        return Err(Error::ZeroCount("centering matrix size"));
    }
    let c = 1.0 / n as f64;
    Ok(CenteringMatrix(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0 - c
        } else {
            -c
        }
    })))
}

/// Rank-one MMD matrix `γγᵀ`.
pub fn mmd_matrix(gamma: &GammaVector) -> DMatrix<f64> {
    let g = gamma.as_vector();
    g * g.transpose()
}

fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mut d = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = (x.column(i) - x.column(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Median of the pairwise Euclidean distances between distinct columns.
pub fn median_pairwise_distance(x: &DMatrix<f64>) -> f64 {
    let n = x.ncols();
    let d = pairwise_sq_dists(x);
    let mut v: Vec<f64> = (0..n)
        .flat_map(|j| (0..j).map(move |i| (i, j)))
        .map(|(i, j)| d[(i, j)].sqrt())
        .collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Graph Laplacian `L = D − W` of the symmetrized k-nearest-neighbour graph
/// with heat-kernel weights `exp(−‖x_i − x_j‖²/(2·bandwidth²))`.
///
/// An edge joins `i` and `j` when either is among the other's `k` nearest
/// neighbours. `bandwidth = None` uses the median pairwise distance.
pub fn graph_laplacian(x: &DMatrix<f64>, k_neighbors: usize, bandwidth: Option<f64>) -> Result<DMatrix<f64>> {
    let n = x.ncols();
    if k_neighbors == 0 || k_neighbors >= n {
        return Err(Error::InvalidConfig(format!(
            "k_neighbors must lie in [1, {}), got {k_neighbors}",
            n
        )));
    }
    let d = pairwise_sq_dists(x);
    if d.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("all points are identical"));
    }
    let bw = match bandwidth {
        Some(b) if b > 0.0 => b,
        Some(b) => return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {b}"))),
        None => median_pairwise_distance(x),
    };
    if !(bw > 0.0) {
        return Err(Error::DegenerateData("median pairwise distance is zero"));
    }

    let mut adj = vec![false; n * n];
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d[(i, a)].total_cmp(&d[(i, b)]).then(a.cmp(&b)));
        for &j in others.iter().take(k_neighbors) {
            adj[i * n + j] = true;
            adj[j * n + i] = true;
        }
    }
    let denom = 2.0 * bw * bw;
    let mut lap = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            if i != j && adj[i * n + j] {
                lap[(i, j)] = -(-d[(i, j)] / denom).exp();
            }
        }
    }
    for i in 0..n {
        let degree: f64 = -lap.row(i).sum();
        lap[(i, i)] = degree;
    }
    Ok(lap)
}

/// `γ_mix·K_l + (1 − γ_mix)·I`, with `K_l(i, j) = 1` when both samples carry
/// the same label and `0` otherwise.
pub fn label_kernel(labels: &[i64], gamma_mix: f64) -> DMatrix<f64> {
    let n = labels.len();
    DMatrix::from_fn(n, n, |i, j| {
        let same = labels[i] != UNLABELED && labels[i] == labels[j];
        let kl = if same { gamma_mix } else { 0.0 };
        kl + if i == j { 1.0 - gamma_mix } else { 0.0 }
    })
}

/// Intra-class divergence matrix: for source samples `i, j` of class `c`
/// (size `n_c`), `(1/N_s)(δ_ij − 1/n_c)`; zero on target rows and columns.
pub fn intra_class_matrix(labels: &[i64], n_source: usize) -> Result<DMatrix<f64>> {
    if n_source > labels.len() {
        return Err(Error::DimensionMismatch {
            context: "source count vs label vector",
            expected: labels.len(),
            found: n_source,
        });
    }
    if let Some(i) = labels[..n_source].iter().position(|&l| l == UNLABELED) {
        return Err(Error::UnlabeledSource(i));
    }
    let n = labels.len();
    let mut counts = std::collections::BTreeMap::new();
    for &l in &labels[..n_source] {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    let scale = 1.0 / n_source as f64;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i >= n_source || j >= n_source || labels[i] != labels[j] {
            return 0.0;
        }
        let nc = counts[&labels[i]] as f64;
        let delta = if i == j { 1.0 } else { 0.0 };
        scale * (delta - 1.0 / nc)
    }))
}

/// A fitted projection `W` (`N × m`) together with the training joint Gram.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceModel {
    method: SubspaceMethod,
    w: DMatrix<f64>,
    gram: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    constraint_residual: f64,
}

impl SubspaceModel {
    /// Assembles a model from explicit parts (no optimality implied).
    pub fn from_parts(method: SubspaceMethod, w: DMatrix<f64>, gram: DMatrix<f64>) -> Result<Self> {
        if gram.nrows() != w.nrows() || !gram.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "W has {} rows, Gram is {}x{}",
                w.nrows(),
                gram.nrows(),
                gram.ncols()
            )));
        }
        Ok(SubspaceModel {
            method,
            w,
            gram,
            eigenvalues: Vec::new(),
            constraint_residual: f64::NAN,
        })
    }

    pub fn method(&self) -> SubspaceMethod {
        self.method
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }

    /// Generalized eigenvalues of the kept directions, non-increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `‖WᵀBW − I_m‖_F` at fit time.
    pub fn constraint_residual(&self) -> f64 {
        self.constraint_residual
    }

    /// Transductive representation of every training sample, `WᵀK`.
    pub fn training_projection(&self) -> DMatrix<f64> {
        self.w.transpose() * &self.gram
    }

    pub fn to_doc(&self) -> SubspaceModelDoc {
        SubspaceModelDoc {
            method: self.method,
            m: self.dim(),
            n: self.w.nrows(),
            w: self.w.row_iter().map(|r| r.iter().copied().collect()).collect(),
            constraint_residual: self.constraint_residual,
        }
    }
}

/// JSON form of a [`SubspaceModel`]; `w` is row-major (`n` rows of length `m`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceModelDoc {
    pub method: SubspaceMethod,
    pub m: usize,
    pub n: usize,
    pub w: Vec<Vec<f64>>,
    pub constraint_residual: f64,
}

/// Solves `max` generalized eigenpairs of `(B, K𝓛K + μI)`.
fn fit_generalized(
    method: SubspaceMethod,
    k: &DMatrix<f64>,
    penalty: &DMatrix<f64>,
    constraint: &DMatrix<f64>,
    mu: f64,
    m: usize,
) -> Result<SubspaceModel> {
    let n = k.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidConfig(format!(
            "subspace dimension {m} must lie in [1, {n}]"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::InvalidConfig(format!("mu must be positive, got {mu}")));
    }
    let a_reg = symmetrize(&(k * penalty * k)) + DMatrix::identity(n, n) * mu;
    let b = symmetrize(&(k * constraint * k));

    let chol = a_reg
        .cholesky()
        .ok_or_else(|| Error::SingularPoint("regularized penalty matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L⁻¹ B L⁻ᵀ
    let linv_b = l
        .solve_lower_triangular(&b)
        .ok_or_else(|| Error::SingularPoint("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_b.transpose())
        .ok_or_else(|| Error::SingularPoint("triangular solve failed".into()))?;
    let (vals, vecs) = sym_eigen_desc(&symmetrize(&c));

    let lmax = vals.first().copied().unwrap_or(0.0);
    let usable = if lmax > 0.0 {
        vals.iter().take_while(|&&v| v > EIGEN_CUTOFF * lmax).count()
    } else {
        0
    };
    if usable < m {
        return Err(Error::RankDeficiency { requested: m, usable });
    }
    let u = vecs.columns(0, m).into_owned();
    let mut w = l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(|| Error::SingularPoint("triangular solve failed".into()))?;
    for (j, &lam) in vals.iter().take(m).enumerate() {
        w.column_mut(j).scale_mut(1.0 / lam.sqrt());
    }
    let residual = (w.transpose() * &b * &w - DMatrix::identity(m, m)).norm();
    Ok(SubspaceModel {
        method,
        w,
        gram: k.clone(),
        eigenvalues: vals[..m].to_vec(),
        constraint_residual: residual,
    })
}

fn check_gamma(k: &JointGram, gamma: &GammaVector) -> Result<()> {
    if k.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            context: "gamma vector vs joint Gram",
            expected: k.len(),
            found: gamma.len(),
        });
    }
    Ok(())
}

fn check_square(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// `H_c A H_c`.
fn centered(core: Option<&DMatrix<f64>>, n: usize) -> Result<DMatrix<f64>> {
    let h = centering_matrix(n)?.0;
    Ok(match core {
        Some(a) => &h * a * &h,
        None => h,
    })
}

pub fn tca_fit(k: &JointGram, gamma: &GammaVector, mu: f64, m: usize) -> Result<SubspaceModel> {
    check_gamma(k, gamma)?;
    let n = k.len();
    fit_generalized(
        SubspaceMethod::Tca,
        k.matrix(),
        &mmd_matrix(gamma),
        &centered(None, n)?,
        mu,
        m,
    )
}

/// SSTCA with graph Laplacian `laplacian` and label kernel `kyy`.
#[allow(clippy::too_many_arguments)]
pub fn sstca_fit(
    k: &JointGram,
    gamma: &GammaVector,
    laplacian: &DMatrix<f64>,
    kyy: &DMatrix<f64>,
    mu: f64,
    lambda: f64,
    m: usize,
) -> Result<SubspaceModel> {
    check_gamma(k, gamma)?;
    let n = k.len();
    check_square("graph Laplacian", laplacian, n)?;
    check_square("label kernel", kyy, n)?;
    let nf = n as f64;
    let penalty = mmd_matrix(gamma) + laplacian * (lambda / (nf * nf));
    fit_generalized(
        SubspaceMethod::Sstca,
        k.matrix(),
        &penalty,
        &centered(Some(kyy), n)?,
        mu,
        m,
    )
}

pub fn iglda_fit(
    k: &JointGram,
    gamma: &GammaVector,
    intra_class: &DMatrix<f64>,
    mu: f64,
    lambda: f64,
    m: usize,
) -> Result<SubspaceModel> {
    check_gamma(k, gamma)?;
    let n = k.len();
    check_square("intra-class matrix", intra_class, n)?;
    let penalty = mmd_matrix(gamma) + intra_class * lambda;
    fit_generalized(SubspaceMethod::Iglda, k.matrix(), &penalty, &centered(None, n)?, mu, m)
}

/// `Wᵀ K_cols`: column `i` is the `m`-dimensional representation of sample `i`.
pub fn project(model: &SubspaceModel, k_cols: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if k_cols.nrows() != model.w.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "Gram columns have {} rows, model was trained on {} samples",
            k_cols.nrows(),
            model.w.nrows()
        )));
    }
    Ok(model.w.transpose() * k_cols)
}

/// `(1/N_s) Σ_c Σ_{i∈c} ‖y_i − ȳ_c‖²` over the first `n_source` columns of `y`.
pub fn intra_class_variance(y: &DMatrix<f64>, labels: &[i64], n_source: usize) -> f64 {
    let mut total = 0.0;
    let mut classes: Vec<i64> = labels[..n_source].to_vec();
    classes.sort_unstable();
    classes.dedup();
    for c in classes {
        let idx: Vec<usize> = (0..n_source).filter(|&i| labels[i] == c).collect();
        let mut mean = DVector::zeros(y.nrows());
        for &i in &idx {
            mean += y.column(i);
        }
        mean /= idx.len() as f64;
        total += idx.iter().map(|&i| (y.column(i) - &mean).norm_squared()).sum::<f64>();
    }
    total / n_source as f64
}
