//! Repeated-trial experiment runner.
//!
//! Each trial: split the source into a labeled training set, build anchors,
//! learn the composite kernel (unless disabled), assemble the joint Gram over
//! training ∪ target, fit the subspace method, project, and score the target
//! with kNN. Target labels are only read by the scoring step.

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramKernel;
use crate::learner::{learn, LearnedKernel, LearnerInputs};
use crate::mmd::{gamma_vector, joint_gram, mmd_value};
use crate::pipeline::knn::knn_predict;
use crate::subspace::{
    graph_laplacian, iglda_fit, intra_class_matrix, label_kernel, project, sstca_fit, tca_fit, SubspaceMethod,
    SubspaceModel,
};
use crate::trust_region::TrSettings;
use crate::types::{DomainPair, ExperimentConfig, LabeledDataset, SplitPolicy, UNLABELED};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub accuracy: f64,
    /// `γᵀK_bγ` over training ∪ target.
    pub mmd_base: f64,
    /// `η vᵀM*v`; zero without kernel learning.
    pub mmd_learned_part: f64,
    pub solver_iterations: usize,
    pub seed: u64,
}

/// Wall-clock seconds per stage, summed over trials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub split: f64,
    pub anchors: f64,
    pub kernel_learning: f64,
    pub gram: f64,
    pub subspace: f64,
    pub projection: f64,
    pub knn: f64,
    pub total: f64,
}

impl Timings {
    pub fn stage_sum(&self) -> f64 {
        self.split + self.anchors + self.kernel_learning + self.gram + self.subspace + self.projection + self.knn
    }

    fn add(&mut self, other: &Timings) {
        self.split += other.split;
        self.anchors += other.anchors;
        self.kernel_learning += other.kernel_learning;
        self.gram += other.gram;
        self.subspace += other.subspace;
        self.projection += other.projection;
        self.knn += other.knn;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub timings: Timings,
}

impl ExperimentReport {
    /// Mean and population standard deviation of trial accuracies.
    pub fn aggregate(trials: &[TrialResult]) -> (f64, f64) {
        let n = trials.len() as f64;
        if trials.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let mean = trials.iter().map(|t| t.accuracy).sum::<f64>() / n;
        let var = trials.iter().map(|t| (t.accuracy - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    }

    /// Checks that the stored aggregates match the trial list.
    pub fn verify(&self) -> Result<()> {
        let (mean, std) = Self::aggregate(&self.trials);
        if (mean - self.mean_accuracy).abs() > 1e-12 || (std - self.std_accuracy).abs() > 1e-12 {
            return Err(Error::InvalidConfig("report aggregates do not match trials".into()));
        }
        if self.trials.iter().any(|t| !(0.0..=1.0).contains(&t.accuracy)) {
            return Err(Error::InvalidConfig("accuracy outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.verify()?;
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything a single trial produced.
#[derive(Clone, Debug)]
pub struct TrialOutput {
    pub result: TrialResult,
    pub train_indices: Vec<usize>,
    /// `m × (N_train + N_t)` representation, training columns first.
    pub projection: DMatrix<f64>,
    pub predictions: Vec<i64>,
    pub model: SubspaceModel,
    pub learned: Option<LearnedKernel>,
    pub timings: Timings,
}

/// Seed of trial `index`.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

/// Indices (ascending) of the labeled training subset of the source.
pub fn split_source<R: Rng + ?Sized>(source: &LabeledDataset, policy: SplitPolicy, rng: &mut R) -> Result<Vec<usize>> {
    if let Some(i) = source.labels.iter().position(|&l| l == UNLABELED) {
        return Err(Error::UnlabeledSource(i));
    }
    let n = source.len();
    let mut idx = match policy {
        SplitPolicy::Fraction(f) => {
            let take = ((f * n as f64).round() as usize).clamp(1, n);
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(rng);
            all.truncate(take);
            all
        }
        SplitPolicy::PerClass(k) => {
            let mut classes: Vec<i64> = source.labels.clone();
            classes.sort_unstable();
            classes.dedup();
            let mut picked = Vec::new();
            for c in classes {
                let mut members: Vec<usize> = (0..n).filter(|&i| source.labels[i] == c).collect();
                members.shuffle(rng);
                members.truncate(k);
                picked.extend(members);
            }
            picked
        }
    };
    idx.sort_unstable();
    Ok(idx)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn fit_subspace(
    config: &ExperimentConfig,
    view: &DomainPair,
    k: &crate::mmd::JointGram,
    gamma: &crate::mmd::GammaVector,
) -> Result<SubspaceModel> {
    match config.method {
        SubspaceMethod::Tca => tca_fit(k, gamma, config.mu_sub, config.dim),
        SubspaceMethod::Sstca => {
            let lap = graph_laplacian(&view.joint_features(), config.laplacian_k, None)?;
            let kyy = label_kernel(&view.joint_labels(), config.gamma);
            sstca_fit(k, gamma, &lap, &kyy, config.mu_sub, config.lambda_sub, config.dim)
        }
        SubspaceMethod::Iglda => {
            let lic = intra_class_matrix(&view.joint_labels(), view.n_source())?;
            iglda_fit(k, gamma, &lic, config.mu_sub, config.lambda_sub, config.dim)
        }
    }
}

/// Runs trial `index` of an experiment.
pub fn run_trial(config: &ExperimentConfig, pair: &DomainPair, index: usize) -> Result<TrialOutput> {
    let seed = trial_seed(config.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut timings = Timings::default();

    let t = Instant::now();
    let train_indices = split_source(&pair.source, config.split, &mut rng).map_err(|e| e.at("split"))?;
    let train = pair.source.select(&train_indices);
    let view = DomainPair::new(train, pair.target.strip_labels()).map_err(|e| e.at("split"))?;
    let (n_train, n_target) = (view.n_source(), view.n_target());
    if config.dim > n_train + n_target {
        return Err(Error::InvalidConfig(format!(
            "subspace dimension {} exceeds sample count {}",
            config.dim,
            n_train + n_target
        ))
        .at("split"));
    }
    timings.split = secs(t.elapsed());

    let learned = if config.kernel_learning {
        let t = Instant::now();
        let anchors = config.anchors.build(&view, &mut rng).map_err(|e| e.at("anchors"))?;
        timings.anchors = secs(t.elapsed());

        let t = Instant::now();
        let inputs = LearnerInputs {
            pair: view.clone(),
            anchors,
            base: config.kernel_base,
            beta: config.kernel_beta,
            eta: config.eta,
            mu: config.mu_kernel,
            tr_settings: TrSettings {
                tol: config.tol,
                max_outer: config.max_outer,
                ..Default::default()
            },
            seed: rng.random(),
        };
        let learned = learn(&inputs).map_err(|e| e.at("kernel learning"))?;
        timings.kernel_learning = secs(t.elapsed());
        Some(learned)
    } else {
        None
    };

    let t = Instant::now();
    let gamma = gamma_vector(n_train, n_target).map_err(|e| e.at("gram"))?;
    let base_gram = joint_gram(&config.kernel_base, &view).map_err(|e| e.at("gram"))?;
    let mmd_base = mmd_value(&base_gram, &gamma).map_err(|e| e.at("gram"))?;
    let k = match &learned {
        Some(l) => joint_gram(&l.pdqk as &dyn GramKernel, &view).map_err(|e| e.at("gram"))?,
        None => base_gram,
    };
    timings.gram = secs(t.elapsed());

    let t = Instant::now();
    let model = fit_subspace(config, &view, &k, &gamma).map_err(|e| e.at("subspace"))?;
    timings.subspace = secs(t.elapsed());

    let t = Instant::now();
    let projection = project(&model, k.matrix()).map_err(|e| e.at("projection"))?;
    timings.projection = secs(t.elapsed());

    let t = Instant::now();
    let train_y = projection.columns(0, n_train).into_owned();
    let test_y = projection.columns(n_train, n_target).into_owned();
    let predictions = knn_predict(&train_y, &view.source.labels, &test_y, config.knn_k).map_err(|e| e.at("knn"))?;
    if pair.target.labels.contains(&UNLABELED) {
        return Err(Error::InvalidConfig("target labels are required for scoring".into()).at("knn"));
    }
    let correct = predictions
        .iter()
        .zip(&pair.target.labels)
        .filter(|(p, t)| p == t)
        .count();
    timings.knn = secs(t.elapsed());

    let result = TrialResult {
        accuracy: correct as f64 / n_target as f64,
        mmd_base,
        mmd_learned_part: learned.as_ref().map_or(0.0, |l| l.mmd_after),
        solver_iterations: learned.as_ref().map_or(0, |l| l.diagnostics.iterations()),
        seed,
    };
    Ok(TrialOutput {
        result,
        train_indices,
        projection,
        predictions,
        model,
        learned,
        timings,
    })
}

/// Runs every trial in order, handing each full output to `on_trial`.
pub fn run_experiment_with<F>(config: &ExperimentConfig, pair: &DomainPair, mut on_trial: F) -> Result<ExperimentReport>
where
    F: FnMut(usize, &TrialOutput) -> Result<()>,
{
    let start = Instant::now();
    config.validate()?;
    crate::types::validate_domain_pair(pair)?;
    let mut timings = Timings::default();
    let mut trials = Vec::with_capacity(config.trials);
    for i in 0..config.trials {
        let out = run_trial(config, pair, i)?;
        timings.add(&out.timings);
        on_trial(i, &out)?;
        trials.push(out.result);
    }
    let (mean_accuracy, std_accuracy) = ExperimentReport::aggregate(&trials);
    timings.total = secs(start.elapsed());
    let report = ExperimentReport {
        config: config.clone(),
        trials,
        mean_accuracy,
        std_accuracy,
        timings,
    };
    report.verify()?;
    Ok(report)
}

pub fn run_experiment(config: &ExperimentConfig, pair: &DomainPair) -> Result<ExperimentReport> {
    run_experiment_with(config, pair, |_, _| Ok(()))
}
