//! Joint Gram assembly over source ∪ target and the empirical MMD.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{beta_features, psd_check, GramKernel, KernelSpec, Pdqk};
use crate::types::{AnchorSet, DomainPair};

/// Block Gram `[[K_s, K_st], [K_stᵀ, K_t]]` over the source columns followed
/// by the target columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointGram {
    k: DMatrix<f64>,
    n_source: usize,
}

impl JointGram {
    /// Wraps an already assembled joint Gram. The matrix must be square,
    /// exactly symmetric, and `n_source` must leave at least one target column.
    pub fn from_matrix(k: DMatrix<f64>, n_source: usize) -> Result<Self> {
        if !k.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "joint Gram is {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        if n_source == 0 || n_source >= k.nrows() {
            return Err(Error::ZeroCount("joint Gram domain size"));
        }
        if k != k.transpose() {
            return Err(Error::ShapeMismatch("joint Gram is not symmetric".into()));
        }
        Ok(JointGram { k, n_source })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn n_target(&self) -> usize {
        self.k.nrows() - self.n_source
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    pub fn is_psd(&self, rel_tol: f64) -> bool {
        psd_check(&self.k, rel_tol)
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.k
    }
}

/// `γ = [+1/N_s …, −1/N_t …]`, so that `γᵀKγ` is the squared mean discrepancy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaVector {
    gamma: DVector<f64>,
    n_source: usize,
}

impl GammaVector {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.gamma
    }

    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

pub fn gamma_vector(n_source: usize, n_target: usize) -> Result<GammaVector> {
    if n_source == 0 {
        return Err(Error::ZeroCount("source sample count"));
    }
    if n_target == 0 {
        return Err(Error::ZeroCount("target sample count"));
    }
    let (ps, pt) = (1.0 / n_source as f64, -1.0 / n_target as f64);
    let gamma = DVector::from_fn(n_source + n_target, |i, _| if i < n_source { ps } else { pt });
    Ok(GammaVector { gamma, n_source })
}

pub fn joint_gram<K: GramKernel + ?Sized>(kernel: &K, pair: &DomainPair) -> Result<JointGram> {
    let xs = pair.source.data.features();
    let xt = pair.target.data.features();
    let ks = kernel.gram(xs, xs)?;
    let kt = kernel.gram(xt, xt)?;
    let kst = kernel.gram(xs, xt)?;
    let (ns, nt) = (xs.ncols(), xt.ncols());
    let mut k = DMatrix::zeros(ns + nt, ns + nt);
    k.view_mut((0, 0), (ns, ns)).copy_from(&ks);
    k.view_mut((ns, ns), (nt, nt)).copy_from(&kt);
    k.view_mut((0, ns), (ns, nt)).copy_from(&kst);
    k.view_mut((ns, 0), (nt, ns)).copy_from(&kst.transpose());
    Ok(JointGram { k, n_source: ns })
}

/// `γᵀKγ`.
pub fn mmd_value(k: &JointGram, gamma: &GammaVector) -> Result<f64> {
    if k.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            context: "gamma vector vs joint Gram",
            expected: k.len(),
            found: gamma.len(),
        });
    }
    if k.n_source != gamma.n_source {
        return Err(Error::DimensionMismatch {
            context: "source block size",
            expected: k.n_source,
            found: gamma.n_source,
        });
    }
    let g = gamma.as_vector();
    Ok(g.dot(&(&k.k * g)))
}

/// MMD of a composite kernel split into the base-kernel part `γᵀK_bγ`
/// and the learnable part `η (Φγ)ᵀ M (Φγ)`.
pub fn mmd_decomposed(pdqk: &Pdqk, pair: &DomainPair) -> Result<(f64, f64)> {
    let gamma = gamma_vector(pair.n_source(), pair.n_target())?;
    let base = joint_gram(pdqk.base(), pair)?;
    let base_part = mmd_value(&base, &gamma)?;
    let v = mean_feature_difference(pdqk.beta(), pdqk.anchors(), pair, &gamma)?;
    Ok((base_part, learnable_part(pdqk.m(), &v, pdqk.eta())))
}

/// `Φγ` over source ∪ target: the difference of the anchor-space means.
/// Independent of `M`, so callers evaluating many `M` compute it once.
pub fn mean_feature_difference(
    beta: &KernelSpec,
    anchors: &AnchorSet,
    pair: &DomainPair,
    gamma: &GammaVector,
) -> Result<DVector<f64>> {
    let phi = beta_features(beta, anchors, &pair.joint_features())?;
    if phi.ncols() != gamma.len() {
        return Err(Error::DimensionMismatch {
            context: "gamma vector vs sample count",
            expected: phi.ncols(),
            found: gamma.len(),
        });
    }
    Ok(phi * gamma.as_vector())
}

/// `η vᵀ M v`.
pub fn learnable_part(m: &DMatrix<f64>, v: &DVector<f64>, eta: f64) -> f64 {
    eta * v.dot(&(m * v))
}
