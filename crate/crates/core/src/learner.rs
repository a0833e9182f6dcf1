//! Kernel learning: fit the matrix `M` of the composite kernel by minimizing
//! `(Φγ)ᵀ M (Φγ) + μ‖M‖²_F` over `S⁺(H)`.
//!
//! `Φγ` is the difference between the source and target means of the
//! anchor features; it does not depend on `M`, so it is computed once per
//! [`learn`] call and each objective evaluation is an `H × H` quadratic form.
//! `η` is not part of the objective; it only weights the learned term in the
//! final kernel.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{pdqk_eval, KernelSpec, Pdqk};
use crate::mmd::{gamma_vector, learnable_part, mean_feature_difference};
use crate::spd::SpdPoint;
use crate::trust_region::{tr_minimize, TrExit, TrProblem, TrSettings, TrTrace};
use crate::types::{AnchorSet, DomainPair};

fn check_shape(m: &DMatrix<f64>, v: &DVector<f64>) -> Result<()> {
    if !m.is_square() || m.nrows() != v.len() {
        return Err(Error::ShapeMismatch(format!(
            "M is {}x{}, feature difference has length {}",
            m.nrows(),
            m.ncols(),
            v.len()
        )));
    }
    Ok(())
}

/// `vᵀMv + μ tr(MᵀM)`.
pub fn objective(m: &DMatrix<f64>, v: &DVector<f64>, mu: f64) -> Result<f64> {
    check_shape(m, v)?;
    Ok(v.dot(&(m * v)) + mu * m.norm_squared())
}

/// `vvᵀ + 2μM`.
pub fn euclidean_gradient(m: &DMatrix<f64>, v: &DVector<f64>, mu: f64) -> Result<DMatrix<f64>> {
    check_shape(m, v)?;
    Ok(v * v.transpose() + m * (2.0 * mu))
}

/// The kernel-learning objective as a trust-region problem.
#[derive(Clone, Debug)]
pub struct SdlkProblem {
    pub v: DVector<f64>,
    pub mu: f64,
}

impl TrProblem for SdlkProblem {
    fn dim(&self) -> usize {
        self.v.len()
    }

    fn objective(&self, m: &DMatrix<f64>) -> Result<f64> {
        objective(m, &self.v, self.mu)
    }

    fn euclidean_gradient(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        euclidean_gradient(m, &self.v, self.mu)
    }
}

#[derive(Clone, Debug)]
pub struct LearnerInputs {
    /// Training view: labeled source, unlabeled target.
    pub pair: DomainPair,
    pub anchors: AnchorSet,
    pub base: KernelSpec,
    pub beta: KernelSpec,
    pub eta: f64,
    pub mu: f64,
    pub tr_settings: TrSettings,
    /// Seeds the random initial point `M₀ = AAᵀ + 1e-3·I`.
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnedKernel {
    pub pdqk: Pdqk,
    pub diagnostics: TrTrace,
    /// `η vᵀM₀v`.
    pub mmd_before: f64,
    /// `η vᵀM*v`.
    pub mmd_after: f64,
    pub initial_m: DMatrix<f64>,
}

pub fn learn(inputs: &LearnerInputs) -> Result<LearnedKernel> {
    let mut rng = ChaCha8Rng::seed_from_u64(inputs.seed);
    let m0 = SpdPoint::random(inputs.anchors.len(), &mut rng);
    learn_from(inputs, m0)
}

/// Same as [`learn`] with an explicit starting point.
pub fn learn_from(inputs: &LearnerInputs, m0: SpdPoint) -> Result<LearnedKernel> {
    if inputs.anchors.dim() != inputs.pair.dim() {
        return Err(Error::AnchorDimensionMismatch {
            anchors: inputs.anchors.dim(),
            data: inputs.pair.dim(),
        });
    }
    if !(inputs.mu > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "kernel-learning mu must be positive, got {}",
            inputs.mu
        )));
    }
    let gamma = gamma_vector(inputs.pair.n_source(), inputs.pair.n_target())?;
    let v = mean_feature_difference(&inputs.beta, &inputs.anchors, &inputs.pair, &gamma)?;
    let problem = SdlkProblem { v, mu: inputs.mu };

    let (m_star, diagnostics) = tr_minimize(&problem, &m0, &inputs.tr_settings)?;
    let mmd_before = learnable_part(m0.matrix(), &problem.v, inputs.eta);
    let mmd_after = learnable_part(m_star.matrix(), &problem.v, inputs.eta);
    let pdqk = Pdqk::new(
        inputs.base,
        inputs.beta,
        inputs.anchors.clone(),
        m_star.into_matrix(),
        inputs.eta,
    )?;
    Ok(LearnedKernel {
        pdqk,
        diagnostics,
        mmd_before,
        mmd_after,
        initial_m: m0.into_matrix(),
    })
}

/// The learned kernel as a plain function of two samples.
pub fn final_kernel_closure(learned: &LearnedKernel) -> impl Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + '_ {
    move |x, y| pdqk_eval(&learned.pdqk, x, y)
}

/// Summary of the solver run stored alongside a learned kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub iterations: usize,
    pub accepted_steps: usize,
    pub exit: TrExit,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub mmd_before: f64,
    pub mmd_after: f64,
}

/// JSON document form of a [`LearnedKernel`]. Matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedKernelDoc {
    pub base: KernelSpec,
    pub beta: KernelSpec,
    pub eta: f64,
    pub anchor_dim: usize,
    pub anchor_count: usize,
    /// One inner vector per anchor.
    pub anchors: Vec<Vec<f64>>,
    pub m: Vec<Vec<f64>>,
    pub diagnostics: DiagnosticsSummary,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl LearnedKernel {
    pub fn to_doc(&self) -> LearnedKernelDoc {
        let a = self.pdqk.anchors().matrix();
        LearnedKernelDoc {
            base: *self.pdqk.base(),
            beta: *self.pdqk.beta(),
            eta: self.pdqk.eta(),
            anchor_dim: a.nrows(),
            anchor_count: a.ncols(),
            anchors: rows(&a.transpose()),
            m: rows(self.pdqk.m()),
            diagnostics: DiagnosticsSummary {
                iterations: self.diagnostics.iterations(),
                accepted_steps: self.diagnostics.accepted().count(),
                exit: self.diagnostics.exit,
                initial_objective: self.diagnostics.initial_objective,
                final_objective: self.diagnostics.final_objective,
                final_grad_norm: self.diagnostics.final_grad_norm,
                mmd_before: self.mmd_before,
                mmd_after: self.mmd_after,
            },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_doc())?)
    }
}

impl LearnedKernelDoc {
    /// Rebuilds the composite kernel described by the document.
    pub fn to_pdqk(&self) -> Result<Pdqk> {
        let flat_anchors: Vec<f64> = self.anchors.iter().flatten().copied().collect();
        if flat_anchors.len() != self.anchor_dim * self.anchor_count {
            return Err(Error::ShapeMismatch(
                "anchor rows do not match the declared shape".into(),
            ));
        }
        let anchors = AnchorSet::new(DMatrix::from_column_slice(
            self.anchor_dim,
            self.anchor_count,
            &flat_anchors,
        ))?;
        let h = self.m.len();
        let flat_m: Vec<f64> = self.m.iter().flatten().copied().collect();
        if flat_m.len() != h * h {
            return Err(Error::ShapeMismatch("M is not square".into()));
        }
        Pdqk::new(
            self.base,
            self.beta,
            anchors,
            DMatrix::from_row_slice(h, h, &flat_m),
            self.eta,
        )
    }
}
