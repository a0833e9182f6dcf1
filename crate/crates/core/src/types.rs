//! Shared data model: sample matrices, labels, domain pairs and configuration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{AnchorPolicy, KernelSpec};
use crate::subspace::SubspaceMethod;

/// Label sentinel for samples without a class.
pub const UNLABELED: i64 = -1;

/// Feature vectors stored one sample per column (`d × N`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    features: DMatrix<f64>,
    ids: Vec<String>,
}

impl DataMatrix {
    /// Builds a matrix with ids `0..N`.
    pub fn new(features: DMatrix<f64>) -> Self {
        let ids = (0..features.ncols()).map(|i| i.to_string()).collect();
        DataMatrix { features, ids }
    }

    pub fn with_ids(features: DMatrix<f64>, ids: Vec<String>) -> Result<Self> {
        if ids.len() != features.ncols() {
            return Err(Error::DimensionMismatch {
                context: "sample ids",
                expected: features.ncols(),
                found: ids.len(),
            });
        }
        Ok(DataMatrix { features, ids })
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Self {
        Self::new(DMatrix::from_columns(columns))
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    /// Sample count `N`.
    pub fn len(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.features.ncols() == 0
    }

    /// Subset of columns in the given order.
    pub fn select(&self, idx: &[usize]) -> DataMatrix {
        let features = self.features.select_columns(idx);
        let ids = idx.iter().map(|&i| self.ids[i].clone()).collect();
        DataMatrix { features, ids }
    }

    /// Checks `d ≥ 1`, `N ≥ 1` and finiteness of every entry.
    pub fn validate(&self, what: &'static str) -> Result<()> {
        if self.dim() == 0 || self.is_empty() {
            return Err(Error::EmptyDomain(what));
        }
        check_finite(&self.features, what)
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { what, row: i, col: j });
            }
        }
    }
    Ok(())
}

/// A data matrix with one integer label per column; [`UNLABELED`] marks missing labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub data: DataMatrix,
    pub labels: Vec<i64>,
}

impl LabeledDataset {
    pub fn new(data: DataMatrix, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != data.len() {
            return Err(Error::DimensionMismatch {
                context: "label vector length",
                expected: data.len(),
                found: labels.len(),
            });
        }
        Ok(LabeledDataset { data, labels })
    }

    pub fn unlabeled(data: DataMatrix) -> Self {
        let labels = vec![UNLABELED; data.len()];
        LabeledDataset { data, labels }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            data: self.data.select(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Same samples with every label replaced by [`UNLABELED`].
    pub fn strip_labels(&self) -> LabeledDataset {
        LabeledDataset::unlabeled(self.data.clone())
    }

    pub fn labeled_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l != UNLABELED).count()
    }
}

/// Labeled source domain and (for training purposes) unlabeled target domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainPair {
    pub source: LabeledDataset,
    pub target: LabeledDataset,
}

impl DomainPair {
    pub fn new(source: LabeledDataset, target: LabeledDataset) -> Result<Self> {
        let pair = DomainPair { source, target };
        validate_domain_pair(&pair)?;
        Ok(pair)
    }

    pub fn dim(&self) -> usize {
        self.source.data.dim()
    }

    pub fn n_source(&self) -> usize {
        self.source.len()
    }

    pub fn n_target(&self) -> usize {
        self.target.len()
    }

    /// Source columns followed by target columns (`d × (N_s + N_t)`).
    pub fn joint_features(&self) -> DMatrix<f64> {
        let xs = self.source.data.features();
        let xt = self.target.data.features();
        let (d, ns, nt) = (xs.nrows(), xs.ncols(), xt.ncols());
        let mut out = DMatrix::zeros(d, ns + nt);
        out.columns_mut(0, ns).copy_from(xs);
        out.columns_mut(ns, nt).copy_from(xt);
        out
    }

    /// Source labels followed by target labels.
    pub fn joint_labels(&self) -> Vec<i64> {
        self.source
            .labels
            .iter()
            .chain(self.target.labels.iter())
            .copied()
            .collect()
    }

    /// The pair as seen by training stages: target labels hidden.
    pub fn training_view(&self) -> DomainPair {
        DomainPair {
            source: self.source.clone(),
            target: self.target.strip_labels(),
        }
    }
}

pub fn validate_domain_pair(pair: &DomainPair) -> Result<()> {
    pair.source.data.validate("source")?;
    pair.target.data.validate("target")?;
    if pair.source.data.dim() != pair.target.data.dim() {
        return Err(Error::DimensionMismatch {
            context: "source vs target feature dimension",
            expected: pair.source.data.dim(),
            found: pair.target.data.dim(),
        });
    }
    for ds in [&pair.source, &pair.target] {
        if ds.labels.len() != ds.data.len() {
            return Err(Error::DimensionMismatch {
                context: "label vector length",
                expected: ds.data.len(),
                found: ds.labels.len(),
            });
        }
    }
    Ok(())
}

/// Unlabeled samples `{x_1, …, x_H}` parameterizing the anchor feature map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    anchors: DMatrix<f64>,
}

impl AnchorSet {
    pub fn new(anchors: DMatrix<f64>) -> Result<Self> {
        if anchors.ncols() == 0 {
            return Err(Error::ZeroCount("anchor count H"));
        }
        if anchors.nrows() == 0 {
            return Err(Error::EmptyDomain("anchors"));
        }
        check_finite(&anchors, "anchors")?;
        Ok(AnchorSet { anchors })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.anchors.nrows()
    }
}

/// How the labeled training subset is drawn from the source domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum SplitPolicy {
    /// Random fraction of all source samples.
    Fraction(f64),
    /// Fixed number of samples per class (fewer if a class is smaller).
    PerClass(usize),
}

impl std::str::FromStr for SplitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("split policy `{s}`"));
        let (kind, val) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "fraction" => {
                let f: f64 = val.trim().parse().map_err(|_| bad())?;
                if !(f > 0.0 && f <= 1.0) {
                    return Err(bad());
                }
                Ok(SplitPolicy::Fraction(f))
            }
            "per-class" => {
                let k: usize = val.trim().parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(SplitPolicy::PerClass(k))
            }
            _ => Err(bad()),
        }
    }
}

impl std::fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitPolicy::Fraction(x) => write!(f, "fraction:{x}"),
            SplitPolicy::PerClass(k) => write!(f, "per-class:{k}"),
        }
    }
}

/// Every knob of an experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: SubspaceMethod,
    pub kernel_base: KernelSpec,
    pub kernel_beta: KernelSpec,
    pub eta: f64,
    /// Regularizer of the kernel-learning objective.
    pub mu_kernel: f64,
    pub mu_sub: f64,
    pub lambda_sub: f64,
    /// Label-kernel mix for SSTCA.
    pub gamma: f64,
    pub dim: usize,
    pub tol: f64,
    pub trials: usize,
    pub seed: u64,
    pub knn_k: usize,
    pub kernel_learning: bool,
    pub anchors: AnchorPolicy,
    pub split: SplitPolicy,
    /// Neighbours per node of the SSTCA graph Laplacian.
    pub laplacian_k: usize,
    /// Cap on trust-region outer iterations.
    pub max_outer: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: SubspaceMethod::Tca,
            kernel_base: KernelSpec::Polynomial {
                a: 0.01,
                b: 0.0,
                degree: 1,
            },
            kernel_beta: KernelSpec::Rbf { sigma: 3.0 },
            eta: 1.0,
            mu_kernel: 5e4,
            mu_sub: 10.0,
            lambda_sub: 1.0,
            gamma: 0.5,
            dim: 2,
            tol: 1e-2,
            trials: 10,
            seed: 0,
            knn_k: 1,
            kernel_learning: true,
            anchors: AnchorPolicy::Union,
            split: SplitPolicy::Fraction(0.5),
            laplacian_k: 5,
            max_outer: 200,
        }
    }
}

impl ExperimentConfig {
    /// Checks the parameter invariants that do not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.eta > 0.0) {
            return bad("eta must be positive");
        }
        if !(self.mu_kernel > 0.0) {
            return bad("mu-kernel must be positive");
        }
        if !(self.mu_sub > 0.0) {
            return bad("mu must be positive");
        }
        if !(self.lambda_sub >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.dim == 0 {
            return bad("subspace dimension must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.knn_k == 0 {
            return bad("knn-k must be at least 1");
        }
        if self.laplacian_k == 0 {
            return bad("laplacian k must be at least 1");
        }
        self.kernel_base.validate()?;
        self.kernel_beta.validate()?;
        Ok(())
    }
}
