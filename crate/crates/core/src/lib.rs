//! Sample-dependent learnable kernels for domain adaptation.
//!
//! The crate builds a composite kernel `k(x, y) = k_b(x, y) + η β̃(x)ᵀ M β̃(y)`
//! whose matrix `M` lives on the manifold of symmetric positive definite
//! matrices and is fitted by minimizing the maximum mean discrepancy between
//! a source and a target sample with a Riemannian trust-region solver. The
//! learned kernel then replaces the fixed RKHS of the subspace learners TCA,
//! SSTCA and IGLDA, and a kNN classifier scores the projected target domain.
//!
//! Module map:
//! - [`types`]: datasets, domain pairs, anchor sets, experiment configuration
//! - [`kernels`]: closed-form kernels, anchor feature map and the composite kernel
//! - [`mmd`]: joint Gram assembly and discrepancy evaluation
//! - [`spd`]: SPD manifold geometry
//! - [`trust_region`]: Riemannian trust region with truncated CG
//! - [`learner`]: the kernel-learning objective and its solver wiring
//! - [`subspace`]: TCA / SSTCA / IGLDA
//! - [`pipeline`]: ingestion, synthetic data, kNN and the experiment runner

// NaN must fail these guards, which `!(x > 0.0)` does and `x <= 0.0` does not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kernels;
pub mod learner;
pub mod linalg;
pub mod mmd;
pub mod pipeline;
pub mod spd;
pub mod subspace;
pub mod trust_region;
pub mod types;

pub use error::{Error, Result};
pub use kernels::{AnchorPolicy, GramKernel, KernelSpec, Pdqk};
pub use learner::{LearnedKernel, LearnerInputs};
pub use mmd::{GammaVector, JointGram};
pub use spd::{SpdPoint, TangentMatrix};
pub use subspace::{SubspaceMethod, SubspaceModel};
pub use trust_region::{TrSettings, TrTrace};
pub use types::{AnchorSet, DataMatrix, DomainPair, ExperimentConfig, LabeledDataset, UNLABELED};
