//! Riemannian trust-region minimization on `S⁺(H)` with a Steihaug–Toint
//! truncated conjugate-gradient inner solver.
//!
//! Hessian actions are finite differences of the Riemannian gradient along
//! retractions (see [`crate::spd::directional_rgrad_diff`]). The outer loop
//! stops when an accepted step changes the objective by less than `tol`,
//! when the Riemannian gradient norm falls below `1e-9·(1 + |f|)`, or after
//! `max_outer` iterations.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spd::{
    default_fd_step, egrad_to_rgrad, fd_hessian_action, metric_inner, metric_norm, retract_with, Retraction, SpdPoint,
    TangentMatrix,
};

/// A smooth objective on `S⁺(H)` with its Euclidean gradient.
///
/// Both methods may be called many times per iteration and must be pure.
pub trait TrProblem {
    fn dim(&self) -> usize;
    fn objective(&self, m: &DMatrix<f64>) -> Result<f64>;
    fn euclidean_gradient(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Adapter turning a pair of closures into a [`TrProblem`].
pub struct FnProblem<F, G> {
    pub dim: usize,
    pub objective: F,
    pub gradient: G,
}

impl<F, G> TrProblem for FnProblem<F, G>
where
    F: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn objective(&self, m: &DMatrix<f64>) -> Result<f64> {
        Ok((self.objective)(m))
    }

    fn euclidean_gradient(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok((self.gradient)(m))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrSettings {
    /// Stop once an accepted step changes the objective by less than this.
    pub tol: f64,
    pub max_outer: usize,
    /// Defaults to `0.1·‖M₀‖_F`.
    pub initial_radius: Option<f64>,
    /// Defaults to `1000 × initial radius`.
    pub max_radius: Option<f64>,
    pub rho_accept: f64,
    /// Defaults to `H(H+1)/2`, the tangent-space dimension.
    pub cg_max: Option<usize>,
    /// Inner CG stops when `‖r‖ ≤ cg_tol·‖r₀‖`.
    pub cg_tol: f64,
    /// Defaults to `1e-6·(1 + ‖M‖_F)` at each iterate.
    pub fd_step: Option<f64>,
    /// Relative Riemannian-gradient threshold, scaled by `1 + |f|`.
    pub grad_tol: f64,
    pub retraction: Retraction,
}

impl Default for TrSettings {
    fn default() -> Self {
        TrSettings {
            tol: 1e-2,
            max_outer: 200,
            initial_radius: None,
            max_radius: None,
            rho_accept: 0.1,
            cg_max: None,
            cg_tol: 1e-8,
            fd_step: None,
            grad_tol: 1e-9,
            retraction: Retraction::SecondOrder,
        }
    }
}

impl TrSettings {
    pub fn with_tol(tol: f64) -> Self {
        TrSettings {
            tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("trust region: tol must be positive");
        }
        if self.max_outer == 0 {
            return bad("trust region: max_outer must be positive");
        }
        if !(self.rho_accept > 0.0 && self.rho_accept < 1.0) {
            return bad("trust region: rho_accept must lie in (0, 1)");
        }
        if !(self.cg_tol > 0.0) || !(self.grad_tol > 0.0) {
            return bad("trust region: tolerances must be positive");
        }
        for r in [self.initial_radius, self.max_radius, self.fd_step]
            .into_iter()
            .flatten()
        {
            if !(r > 0.0) {
                return bad("trust region: radii and steps must be positive");
            }
        }
        if self.cg_max == Some(0) {
            return bad("trust region: cg_max must be positive");
        }
        Ok(())
    }
}

/// Why the truncated CG returned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TcgStop {
    ZeroGradient,
    NegativeCurvature,
    BoundaryHit,
    ResidualConverged,
    MaxIterations,
    /// The CG iterate did worse than the Cauchy point, which was returned instead.
    CauchyFallback,
}

#[derive(Clone, Debug)]
pub struct TcgResult {
    pub step: TangentMatrix,
    /// `⟨g, ξ⟩ + ½⟨Hξ, ξ⟩` at the returned step (model value minus `f`).
    pub model_change: f64,
    /// Same quantity at the Cauchy point.
    pub cauchy_change: f64,
    pub iterations: usize,
    pub stop: TcgStop,
    pub on_boundary: bool,
}

/// Steihaug–Toint truncated CG on `m(ξ) = f + ⟨g, ξ⟩_M + ½⟨H ξ, ξ⟩_M`
/// subject to `‖ξ‖_M ≤ Δ`.
pub fn tcg_subproblem<H>(
    grad: &TangentMatrix,
    hvp: H,
    radius: f64,
    m: &SpdPoint,
    cg_max: usize,
    cg_tol: f64,
) -> Result<TcgResult>
where
    H: Fn(&TangentMatrix) -> Result<TangentMatrix>,
{
    let h = m.dim();
    let zero = || TcgResult {
        step: TangentMatrix::zeros(h),
        model_change: 0.0,
        cauchy_change: 0.0,
        iterations: 0,
        stop: TcgStop::ZeroGradient,
        on_boundary: false,
    };
    let inner = |a: &TangentMatrix, b: &TangentMatrix| metric_inner(m, a, b);

    let r0_sq = inner(grad, grad)?;
    if !(radius > 0.0) || !(r0_sq > 0.0) || !r0_sq.is_finite() {
        return Ok(zero());
    }
    let r0 = r0_sq.sqrt();
    let delta_sq = radius * radius;

    let mut eta = TangentMatrix::zeros(h);
    let mut h_eta = TangentMatrix::zeros(h);
    let mut r = grad.clone();
    let mut r_r = r0_sq;
    let mut d = grad.scale(-1.0);
    // ‖η‖², ⟨η, δ⟩, ‖δ‖² in the metric.
    let (mut e_e, mut e_d, mut d_d) = (0.0, 0.0, r0_sq);

    let mut cauchy: Option<(TangentMatrix, TangentMatrix, f64)> = None;
    let mut stop = TcgStop::MaxIterations;
    let mut on_boundary = false;
    let mut iterations = 0;

    for j in 0..cg_max.max(1) {
        iterations = j + 1;
        let hd = hvp(&d)?;
        let kappa = inner(&d, &hd)?;

        if j == 0 {
            // Cauchy point along −g (δ₀ = −g, ‖δ₀‖ = ‖g‖).
            let tau = if kappa <= 0.0 {
                radius / r0
            } else {
                (r0_sq / kappa).min(radius / r0)
            };
            let change = -tau * r0_sq + 0.5 * tau * tau * kappa;
            cauchy = Some((d.scale(tau), hd.scale(tau), change));
        }

        let alpha = r_r / kappa;
        let e_e_new = e_e + 2.0 * alpha * e_d + alpha * alpha * d_d;
        if kappa <= 0.0 || !kappa.is_finite() || e_e_new >= delta_sq {
            let disc = (e_d * e_d + d_d * (delta_sq - e_e)).max(0.0);
            let tau = (-e_d + disc.sqrt()) / d_d;
            eta = eta.axpy(tau, &d);
            h_eta = h_eta.axpy(tau, &hd);
            stop = if kappa <= 0.0 || !kappa.is_finite() {
                TcgStop::NegativeCurvature
            } else {
                TcgStop::BoundaryHit
            };
            on_boundary = true;
            break;
        }

        eta = eta.axpy(alpha, &d);
        h_eta = h_eta.axpy(alpha, &hd);
        e_e = e_e_new;
        r = r.axpy(alpha, &hd);
        let r_r_new = metric_norm(m, &r)?.powi(2);
        if r_r_new.sqrt() <= cg_tol * r0 {
            stop = TcgStop::ResidualConverged;
            break;
        }
        let beta = r_r_new / r_r;
        d = r.scale(-1.0).axpy(beta, &d);
        e_d = beta * (e_d + alpha * d_d);
        d_d = r_r_new + beta * beta * d_d;
        r_r = r_r_new;
    }

    let model = |x: &TangentMatrix, hx: &TangentMatrix| -> Result<f64> { Ok(inner(grad, x)? + 0.5 * inner(hx, x)?) };
    let mut model_change = model(&eta, &h_eta)?;
    let (c_step, c_h, cauchy_change) = cauchy.expect("at least one CG iteration");
    let slack = 1e-12 * (1.0 + cauchy_change.abs());
    if !(model_change <= cauchy_change + slack) {
        // The finite-difference Hessian is not exactly self-adjoint, so CG
        // can overshoot; the Cauchy point still guarantees decrease.
        let c_norm_sq = inner(&c_step, &c_step)?;
        on_boundary = c_norm_sq >= delta_sq * (1.0 - 1e-12);
        model_change = model(&c_step, &c_h)?;
        eta = c_step;
        stop = TcgStop::CauchyFallback;
    }

    Ok(TcgResult {
        step: eta,
        model_change,
        cauchy_change,
        iterations,
        stop,
        on_boundary,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrExit {
    /// An accepted step changed the objective by less than `tol`.
    ObjectiveStall,
    /// The Riemannian gradient norm fell below `grad_tol·(1 + |f|)`.
    GradientNorm,
    MaxOuter,
}

/// One outer iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrRecord {
    pub iteration: usize,
    /// Objective at the iterate held after this iteration.
    pub objective: f64,
    /// Riemannian gradient norm at the start of the iteration.
    pub grad_norm: f64,
    /// Radius used for this iteration's subproblem.
    pub radius: f64,
    pub accepted: bool,
    pub inner_iterations: usize,
    pub rho: Option<f64>,
    /// `m(0) − m(ξ)`.
    pub model_decrease: f64,
    /// `m(0) − m(ξ_Cauchy)`.
    pub cauchy_decrease: f64,
    pub tcg_stop: TcgStop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrTrace {
    pub initial_objective: f64,
    pub records: Vec<TrRecord>,
    pub exit: TrExit,
    pub final_objective: f64,
    pub final_grad_norm: f64,
}

impl TrTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn accepted(&self) -> impl Iterator<Item = &TrRecord> {
        self.records.iter().filter(|r| r.accepted)
    }

    /// Objective at `M₀` followed by the objective after every accepted step.
    pub fn accepted_objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective)
            .chain(self.accepted().map(|r| r.objective))
            .collect()
    }

    /// One JSON object per outer iteration.
    pub fn write_json_lines<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn riemannian_gradient<P: TrProblem + ?Sized>(problem: &P, m: &SpdPoint) -> Result<TangentMatrix> {
    egrad_to_rgrad(m, &problem.euclidean_gradient(m.matrix())?)
}

/// Minimizes `problem` over `S⁺(H)` starting from `m0`.
pub fn tr_minimize<P: TrProblem + ?Sized>(
    problem: &P,
    m0: &SpdPoint,
    settings: &TrSettings,
) -> Result<(SpdPoint, TrTrace)> {
    settings.validate()?;
    let h = problem.dim();
    if m0.dim() != h {
        return Err(Error::ShapeMismatch(format!(
            "initial point is {0}x{0}, problem is {h}x{h}",
            m0.dim()
        )));
    }
    let cg_max = settings.cg_max.unwrap_or(h * (h + 1) / 2);
    let delta0 = settings.initial_radius.unwrap_or(0.1 * m0.matrix().norm());
    let delta_max = settings.max_radius.unwrap_or(1000.0 * delta0).max(delta0);

    let mut x = m0.clone();
    let mut fx = problem.objective(x.matrix())?;
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective(fx));
    }
    let initial_objective = fx;
    let mut radius = delta0;
    let mut records = Vec::new();
    let mut exit = TrExit::MaxOuter;
    let rgrad = |p: &SpdPoint| riemannian_gradient(problem, p);
    let mut grad = rgrad(&x)?;
    let mut grad_norm = metric_norm(&x, &grad)?;

    for iteration in 0..settings.max_outer {
        if grad_norm < settings.grad_tol * (1.0 + fx.abs()) {
            exit = TrExit::GradientNorm;
            break;
        }
        let fd_step = settings.fd_step.unwrap_or_else(|| default_fd_step(&x));
        let egrad = |p: &DMatrix<f64>| problem.euclidean_gradient(p);
        let hvp = |xi: &TangentMatrix| fd_hessian_action(&egrad, &x, &grad, xi, fd_step, settings.retraction);
        let sub = tcg_subproblem(&grad, hvp, radius, &x, cg_max, settings.cg_tol)?;
        let model_decrease = -sub.model_change;

        let mut record = TrRecord {
            iteration,
            objective: fx,
            grad_norm,
            radius,
            accepted: false,
            inner_iterations: sub.iterations,
            rho: None,
            model_decrease,
            cauchy_decrease: -sub.cauchy_change,
            tcg_stop: sub.stop,
        };

        if !(model_decrease > 1e-15 * (1.0 + fx.abs())) {
            radius *= 0.25;
            records.push(record);
            continue;
        }

        let candidate = match retract_with(&x, &sub.step, settings.retraction) {
            Ok(p) => Some(p),
            Err(Error::StepTooLarge { .. }) => None,
            Err(e) => return Err(e),
        };
        let trial = match candidate {
            Some(p) => {
                let f = problem.objective(p.matrix())?;
                f.is_finite().then_some((p, f))
            }
            None => None,
        };
        let Some((x_new, f_new)) = trial else {
            radius *= 0.25;
            records.push(record);
            continue;
        };

        let rho = (fx - f_new) / model_decrease;
        record.rho = Some(rho);
        if rho < 0.25 {
            radius *= 0.25;
        } else if rho > 0.75 && sub.on_boundary {
            radius = (2.0 * radius).min(delta_max);
        }

        if rho > settings.rho_accept && f_new < fx {
            let change = (fx - f_new).abs();
            x = x_new;
            fx = f_new;
            grad = rgrad(&x)?;
            grad_norm = metric_norm(&x, &grad)?;
            record.accepted = true;
            record.objective = fx;
            records.push(record);
            if change < settings.tol {
                exit = TrExit::ObjectiveStall;
                break;
            }
        } else {
            records.push(record);
        }
    }

    let trace = TrTrace {
        initial_objective,
        records,
        exit,
        final_objective: fx,
        final_grad_norm: grad_norm,
    };
    Ok((x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[allow(clippy::type_complexity)]
    fn distance_problem(
        a: DMatrix<f64>,
    ) -> FnProblem<impl Fn(&DMatrix<f64>) -> f64, impl Fn(&DMatrix<f64>) -> DMatrix<f64>> {
        let a2 = a.clone();
        FnProblem {
            dim: a.nrows(),
            objective: move |m: &DMatrix<f64>| (m - &a).norm_squared(),
            gradient: move |m: &DMatrix<f64>| (m - &a2) * 2.0,
        }
    }

    #[test]
    fn recovers_spd_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for h in 1..=5 {
            // Well-conditioned target: the finite-difference Hessian omits the
            // connection term, whose size scales with ‖M⁻¹‖.
            let a = SpdPoint::random(h, &mut rng).into_matrix() + DMatrix::identity(h, h);
            let problem = distance_problem(a.clone());
            let settings = TrSettings {
                tol: 1e-14,
                max_outer: 50,
                ..Default::default()
            };
            let (m, trace) = tr_minimize(&problem, &SpdPoint::identity(h), &settings).unwrap();
            assert!((m.matrix() - &a).norm() <= 1e-4, "h={h}: {:?}", trace.exit);
            assert!(trace.iterations() <= 50);
        }
    }

    #[test]
    fn constant_objective_stops_at_once() {
        let problem = FnProblem {
            dim: 3,
            objective: |_: &DMatrix<f64>| 4.0,
            gradient: |_: &DMatrix<f64>| DMatrix::zeros(3, 3),
        };
        let m0 = SpdPoint::identity(3);
        let (m, trace) = tr_minimize(&problem, &m0, &TrSettings::default()).unwrap();
        assert!(trace.iterations() <= 1);
        assert_eq!(m, m0);
    }

    #[test]
    fn stationary_start_is_returned_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = SpdPoint::random(4, &mut rng);
        let problem = distance_problem(a.matrix().clone());
        let (m, trace) = tr_minimize(&problem, &a, &TrSettings::default()).unwrap();
        assert_eq!(trace.exit, TrExit::GradientNorm);
        assert_eq!(trace.iterations(), 0);
        assert_eq!(m, a);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let problem = FnProblem {
            dim: 2,
            objective: |_: &DMatrix<f64>| f64::NAN,
            gradient: |_: &DMatrix<f64>| DMatrix::zeros(2, 2),
        };
        let r = tr_minimize(&problem, &SpdPoint::identity(2), &TrSettings::default());
        assert!(matches!(r, Err(Error::NonFiniteObjective(_))));
    }

    #[test]
    fn tcg_identity_hessian_gives_newton_step() {
        let m = SpdPoint::identity(2);
        let g = TangentMatrix::new(DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.2])).unwrap();
        let res = tcg_subproblem(&g, |x| Ok(x.clone()), 10.0, &m, 3, 1e-12).unwrap();
        assert!((res.step.matrix() + g.matrix()).norm() < 1e-14);
        assert!(!res.on_boundary);
    }

    #[test]
    fn tcg_zero_gradient_gives_zero_step() {
        let m = SpdPoint::identity(3);
        let res = tcg_subproblem(&TangentMatrix::zeros(3), |x| Ok(x.clone()), 1.0, &m, 6, 1e-8).unwrap();
        assert!(res.step.is_zero());
        assert_eq!(res.stop, TcgStop::ZeroGradient);
    }

    #[test]
    fn tcg_negative_curvature_hits_boundary() {
        // H = diag(1, −1) acting on diagonal 2×2 tangents, at M = I.
        let m = SpdPoint::identity(2);
        let hess = |x: &TangentMatrix| {
            let a = x.matrix();
            Ok(TangentMatrix::sym_part(&DMatrix::from_row_slice(
                2,
                2,
                &[a[(0, 0)], 0.0, 0.0, -a[(1, 1)]],
            )))
        };
        let g = TangentMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let radius = 0.7;
        let res = tcg_subproblem(&g, hess, radius, &m, 3, 1e-12).unwrap();
        let norm = metric_norm(&m, &res.step).unwrap();
        assert!((norm - radius).abs() <= 1e-10, "norm {norm}");
        assert!(res.model_change < 0.0);
        assert!(res.model_change <= res.cauchy_change + 1e-12);
    }

    #[test]
    fn trace_is_monotone_and_json_lines_parse() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = SpdPoint::random(3, &mut rng).into_matrix();
        let problem = distance_problem(a);
        let m0 = SpdPoint::random(3, &mut rng);
        let (_, trace) = tr_minimize(&problem, &m0, &TrSettings::with_tol(1e-10)).unwrap();
        let objs = trace.accepted_objectives();
        assert!(objs.windows(2).all(|w| w[1] <= w[0]));
        for r in trace.accepted() {
            assert!(r.model_decrease >= r.cauchy_decrease - 1e-12 * (1.0 + r.cauchy_decrease.abs()));
        }
        let mut buf = Vec::new();
        trace.write_json_lines(&mut buf).unwrap();
        let lines: Vec<_> = std::str::from_utf8(&buf).unwrap().lines().collect();
        assert_eq!(lines.len(), trace.iterations());
        for l in lines {
            let _: TrRecord = serde_json::from_str(l).unwrap();
        }
    }
}
