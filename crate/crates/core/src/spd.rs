//! Geometry of the manifold `S⁺(H)` of symmetric positive definite
//! matrices under the affine-invariant metric `⟨ξ, ζ⟩_M = tr(M⁻¹ξM⁻¹ζ)`.
//!
//! Under this metric the Riemannian gradient of a function with Euclidean
//! gradient `G` is `½ M (G + Gᵀ) M`. Points are moved with the second-order
//! retraction `M + ξ + ½ ξ M⁻¹ ξ`; the exponential map is available through
//! [`Retraction::Exponential`] for cross-checking.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_inner, symmetrize};

/// Relative eigenvalue floor below which a point counts as singular.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// A symmetric positive definite matrix, stored with its inverse.
#[derive(Clone, Debug)]
pub struct SpdPoint {
    m: DMatrix<f64>,
    inv: DMatrix<f64>,
    min_eig: f64,
}

impl PartialEq for SpdPoint {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m
    }
}

impl Serialize for SpdPoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.m.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpdPoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = DMatrix::<f64>::deserialize(d)?;
        SpdPoint::new(m).map_err(serde::de::Error::custom)
    }
}

impl SpdPoint {
    /// Validates symmetry (to `1e-12·‖M‖_F`) and positive definiteness.
    /// The stored matrix is the exact symmetric part of the input.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "SPD point must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularPoint("non-finite entry".into()));
        }
        let asym = (&m - m.transpose()).norm();
        if asym > 1e-12 * m.norm() {
            return Err(Error::SingularPoint(format!("asymmetry {asym:e}")));
        }
        let m = symmetrize(&m);
        let eig = SymmetricEigen::new(m.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 0.0) || min <= EIGEN_FLOOR * max {
            return Err(Error::SingularPoint(format!("eigenvalues in [{min:e}, {max:e}]")));
        }
        let inv = spectral_map(&eig, |l| 1.0 / l);
        Ok(SpdPoint { m, inv, min_eig: min })
    }

    /// `A Aᵀ + 1e-3·I` with i.i.d. standard normal `A`.
    pub fn random<R: Rng + ?Sized>(h: usize, rng: &mut R) -> Self {
        let a = DMatrix::<f64>::from_fn(h, h, |_, _| rng.sample(StandardNormal));
        let m = &a * a.transpose() + DMatrix::identity(h, h) * 1e-3;
        SpdPoint::new(symmetrize(&m)).expect("A Aᵀ + εI is SPD")
    }

    pub fn identity(h: usize) -> Self {
        SpdPoint::new(DMatrix::identity(h, h)).expect("identity is SPD")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eig
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }
}

fn spectral_map(eig: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f(l));
    }
    symmetrize(&(scaled * v.transpose()))
}

/// A symmetric matrix in the tangent space of `S⁺(H)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentMatrix {
    xi: DMatrix<f64>,
}

impl TangentMatrix {
    /// Validates symmetry to `1e-12·‖ξ‖_F`.
    pub fn new(xi: DMatrix<f64>) -> Result<Self> {
        if !xi.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "tangent must be square, got {}x{}",
                xi.nrows(),
                xi.ncols()
            )));
        }
        let asym = (&xi - xi.transpose()).norm();
        if asym > 1e-12 * xi.norm() {
            return Err(Error::ShapeMismatch(format!(
                "tangent is not symmetric (asymmetry {asym:e})"
            )));
        }
        Ok(TangentMatrix { xi: symmetrize(&xi) })
    }

    /// `½(A + Aᵀ)`.
    pub fn sym_part(a: &DMatrix<f64>) -> Self {
        TangentMatrix { xi: symmetrize(a) }
    }

    pub fn zeros(h: usize) -> Self {
        TangentMatrix {
            xi: DMatrix::zeros(h, h),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.xi
    }

    pub fn dim(&self) -> usize {
        self.xi.nrows()
    }

    pub fn scale(&self, s: f64) -> TangentMatrix {
        TangentMatrix { xi: &self.xi * s }
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &TangentMatrix) -> TangentMatrix {
        TangentMatrix {
            xi: &self.xi + &other.xi * s,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.xi.iter().all(|&v| v == 0.0)
    }
}

/// Which map takes tangent vectors back to the manifold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Retraction {
    /// `M + ξ + ½ ξ M⁻¹ ξ`.
    #[default]
    SecondOrder,
    /// `M^{½} exp(M^{-½} ξ M^{-½}) M^{½}`.
    Exponential,
}

fn check_shape(m: &SpdPoint, n: usize) -> Result<()> {
    if m.dim() != n {
        return Err(Error::ShapeMismatch(format!("expected {0}x{0}, got {n}x{n}", m.dim())));
    }
    Ok(())
}

/// `½ M (G + Gᵀ) M`, exactly symmetric.
pub fn egrad_to_rgrad(m: &SpdPoint, g: &DMatrix<f64>) -> Result<TangentMatrix> {
    if !g.is_square() {
        return Err(Error::ShapeMismatch(format!("gradient is {}x{}", g.nrows(), g.ncols())));
    }
    check_shape(m, g.nrows())?;
    Ok(rgrad_at(&m.m, g))
}

fn rgrad_at(m: &DMatrix<f64>, g: &DMatrix<f64>) -> TangentMatrix {
    let sym = (g + g.transpose()) * 0.5;
    TangentMatrix::sym_part(&(m * sym * m))
}

/// `tr(M⁻¹ ξ M⁻¹ ζ)`.
pub fn metric_inner(m: &SpdPoint, xi: &TangentMatrix, zeta: &TangentMatrix) -> Result<f64> {
    check_shape(m, xi.dim())?;
    check_shape(m, zeta.dim())?;
    let a = &m.inv * &xi.xi;
    let b = &m.inv * &zeta.xi;
    // tr(AB) = Σ_ij A_ij B_ji
    Ok(frobenius_inner(&a, &b.transpose()))
}

pub fn metric_norm(m: &SpdPoint, xi: &TangentMatrix) -> Result<f64> {
    check_shape(m, xi.dim())?;
    Ok(norm_from_whitened(&(&m.inv * &xi.xi)))
}

/// `‖ξ‖_M` from `X = M⁻¹ξ`, using `tr(X²) = Σ_ij X_ij X_ji`.
fn norm_from_whitened(x: &DMatrix<f64>) -> f64 {
    frobenius_inner(x, &x.transpose()).max(0.0).sqrt()
}

/// Second-order retraction.
pub fn retract(m: &SpdPoint, xi: &TangentMatrix) -> Result<SpdPoint> {
    retract_with(m, xi, Retraction::SecondOrder)
}

pub fn retract_with(m: &SpdPoint, xi: &TangentMatrix, kind: Retraction) -> Result<SpdPoint> {
    check_shape(m, xi.dim())?;
    if xi.is_zero() {
        return Ok(m.clone());
    }
    let candidate = retraction_matrix(m, xi, kind);
    if candidate.iter().any(|v| !v.is_finite()) {
        return Err(Error::StepTooLarge {
            min_eig: f64::NAN,
            floor: 0.0,
        });
    }
    let eig = SymmetricEigen::new(candidate.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let floor = EIGEN_FLOOR * max.abs();
    if !(min > floor) {
        return Err(Error::StepTooLarge { min_eig: min, floor });
    }
    let inv = spectral_map(&eig, |l| 1.0 / l);
    Ok(SpdPoint {
        m: candidate,
        inv,
        min_eig: min,
    })
}

fn retraction_matrix(m: &SpdPoint, xi: &TangentMatrix, kind: Retraction) -> DMatrix<f64> {
    match kind {
        Retraction::SecondOrder => {
            let half = &xi.xi * (&m.inv * &xi.xi) * 0.5;
            symmetrize(&(&m.m + &xi.xi + half))
        }
        Retraction::Exponential => {
            let eig = SymmetricEigen::new(m.m.clone());
            let sqrt = spectral_map(&eig, f64::sqrt);
            let isqrt = spectral_map(&eig, |l| 1.0 / l.sqrt());
            let inner = symmetrize(&(&isqrt * &xi.xi * &isqrt));
            let expd = spectral_map(&SymmetricEigen::new(inner), f64::exp);
            symmetrize(&(&sqrt * expd * &sqrt))
        }
    }
}

/// Default finite-difference step `1e-6·(1 + ‖M‖_F)`.
pub fn default_fd_step(m: &SpdPoint) -> f64 {
    1e-6 * (1.0 + m.m.norm())
}

/// Finite-difference approximation of the Hessian action along `ξ`:
/// the Riemannian gradient (built from the Euclidean gradient `egrad`) is
/// re-evaluated at `R_M(tξ)` with `t = h/‖ξ‖_M` and the difference is
/// rescaled by `‖ξ‖_M/h`. No vector transport is applied between the two
/// tangent spaces.
pub fn directional_rgrad_diff<F>(egrad: F, m: &SpdPoint, xi: &TangentMatrix, h: f64) -> Result<TangentMatrix>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let g0 = rgrad_at(&m.m, &egrad(&m.m)?);
    fd_hessian_action(&egrad, m, &g0, xi, h, Retraction::SecondOrder)
}

pub(crate) fn fd_hessian_action<F>(
    egrad: &F,
    m: &SpdPoint,
    g0: &TangentMatrix,
    xi: &TangentMatrix,
    h: f64,
    kind: Retraction,
) -> Result<TangentMatrix>
where
    F: Fn(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    check_shape(m, xi.dim())?;
    let whitened = &m.inv * &xi.xi;
    let norm = norm_from_whitened(&whitened);
    if norm == 0.0 {
        return Ok(TangentMatrix::zeros(m.dim()));
    }
    // A step of metric length h stays well inside the cone, so the moved
    // point is used without re-validating it.
    let t = h / norm;
    let moved = match kind {
        Retraction::SecondOrder => symmetrize(&(&m.m + &xi.xi * t + &xi.xi * &whitened * (0.5 * t * t))),
        Retraction::Exponential => retraction_matrix(m, &xi.scale(t), kind),
    };
    let g1 = rgrad_at(&moved, &egrad(&moved)?);
    Ok(TangentMatrix::sym_part(&((&g1.xi - &g0.xi) * (norm / h))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn random_sym(h: usize, rng: &mut ChaCha8Rng, scale: f64) -> TangentMatrix {
        let a = DMatrix::<f64>::from_fn(h, h, |_, _| rng.sample::<f64, _>(StandardNormal));
        TangentMatrix::sym_part(&(a * scale))
    }

    #[test]
    fn rejects_non_spd() {
        assert!(SpdPoint::new(diag(&[1.0, -1.0])).is_err());
        assert!(SpdPoint::new(diag(&[1.0, 0.0])).is_err());
        assert!(SpdPoint::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])).is_err());
    }

    #[test]
    fn rgrad_at_identity_symmetrizes() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let r = egrad_to_rgrad(&SpdPoint::identity(2), &g).unwrap();
        assert_eq!(r.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 3.0]));
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 3.0]);
        assert_eq!(egrad_to_rgrad(&SpdPoint::identity(2), &s).unwrap().matrix(), &s);
    }

    #[test]
    fn rgrad_diagonal_hand_value() {
        let m = SpdPoint::new(diag(&[2.0, 3.0])).unwrap();
        let r = egrad_to_rgrad(&m, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(r.matrix(), &diag(&[4.0, 9.0]));
    }

    #[test]
    fn rgrad_shape_mismatch() {
        let r = egrad_to_rgrad(&SpdPoint::identity(2), &DMatrix::identity(3, 3));
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn metric_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, z) = (random_sym(3, &mut rng, 1.0), random_sym(3, &mut rng, 1.0));
        let id = SpdPoint::identity(3);
        let frob = (x.matrix() * z.matrix()).trace();
        assert!((metric_inner(&id, &x, &z).unwrap() - frob).abs() < 1e-12);
        let m = SpdPoint::random(3, &mut rng);
        assert!(metric_inner(&m, &x, &x).unwrap() > 0.0);
        let two = SpdPoint::new(diag(&[2.0])).unwrap();
        let one = TangentMatrix::new(diag(&[1.0])).unwrap();
        assert_eq!(metric_inner(&two, &one, &one).unwrap(), 0.25);
    }

    #[test]
    fn retraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = SpdPoint::random(4, &mut rng);
        assert_eq!(retract(&m, &TangentMatrix::zeros(4)).unwrap(), m);
        let r = retract(
            &SpdPoint::identity(3),
            &TangentMatrix::new(DMatrix::identity(3, 3)).unwrap(),
        )
        .unwrap();
        assert_eq!(r.matrix(), &(DMatrix::identity(3, 3) * 2.5));
    }

    #[test]
    fn retraction_is_second_order_close_to_linear_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = SpdPoint::random(4, &mut rng);
        let xi = random_sym(4, &mut rng, 0.5);
        let err = |t: f64| (retract(&m, &xi.scale(t)).unwrap().matrix() - (m.matrix() + xi.matrix() * t)).norm();
        let ts = [1e-2, 1e-3, 1e-4];
        for w in ts.windows(2) {
            let slope = (err(w[0]).ln() - err(w[1]).ln()) / (w[0].ln() - w[1].ln());
            assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
        }
    }

    #[test]
    fn exponential_and_second_order_agree_to_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = SpdPoint::random(3, &mut rng);
        let xi = random_sym(3, &mut rng, 1.0);
        let gap = |t: f64| {
            let a = retract_with(&m, &xi.scale(t), Retraction::SecondOrder).unwrap();
            let b = retract_with(&m, &xi.scale(t), Retraction::Exponential).unwrap();
            (a.matrix() - b.matrix()).norm()
        };
        // Both agree with the geodesic through second order: gap = O(t³).
        let slope = (gap(1e-2).ln() - gap(1e-3).ln()) / (1e-2f64.ln() - 1e-3f64.ln());
        assert!(slope > 2.8, "slope {slope}");
    }

    #[test]
    fn retraction_stays_spd_for_bounded_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = SpdPoint::random(5, &mut rng);
            let xi = random_sym(5, &mut rng, 1.0);
            let xi = xi.scale(m.matrix().norm() / xi.matrix().norm());
            let r = retract(&m, &xi).unwrap();
            assert!(r.min_eigenvalue() > 0.0);
        }
    }

    #[test]
    fn hessian_fd_on_trace_quadratic() {
        // f(M) = ½ tr(M²): G = M, rgrad = M³. Along R_I(tI) = (1 + t + t²/2) I
        // the gradient is (1 + t + t²/2)³ I, whose derivative at 0 is 3I.
        let egrad = |p: &DMatrix<f64>| Ok(p.clone());
        let id = SpdPoint::identity(3);
        let xi = TangentMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let h = 1e-6;
        let got = directional_rgrad_diff(egrad, &id, &xi, h).unwrap();
        let want = DMatrix::identity(3, 3) * 3.0;
        assert!((got.matrix() - &want).norm() / want.norm() < 10.0 * h);

        let zero = directional_rgrad_diff(egrad, &id, &TangentMatrix::zeros(3), h).unwrap();
        assert!(zero.is_zero());
    }

    #[test]
    fn hessian_fd_is_nearly_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = SpdPoint::random(3, &mut rng);
        let xi = random_sym(3, &mut rng, 1.0);
        let egrad = |p: &DMatrix<f64>| Ok(p * p);
        let h = default_fd_step(&m);
        let one = directional_rgrad_diff(egrad, &m, &xi, h).unwrap();
        let two = directional_rgrad_diff(egrad, &m, &xi.scale(2.0), h).unwrap();
        let rel = (two.matrix() - one.matrix() * 2.0).norm() / (one.matrix() * 2.0).norm();
        assert!(rel <= 5.0 * h, "relative error {rel}");
    }

    #[test]
    fn rgrad_is_metric_compatible() {
        // d/dt f(R_M(tξ)) at 0 equals ⟨rgrad f(M), ξ⟩_M.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_sym(4, &mut rng, 1.0);
        let f = |p: &DMatrix<f64>| (c.matrix() * p).trace() + 0.3 * (p * p).trace();
        let g = |p: &DMatrix<f64>| c.matrix() + p * 0.6;
        for _ in 0..10 {
            let m = SpdPoint::random(4, &mut rng);
            let xi = random_sym(4, &mut rng, 1.0);
            let t = 1e-5;
            let fp = f(retract(&m, &xi.scale(t)).unwrap().matrix());
            let fm = f(retract(&m, &xi.scale(-t)).unwrap().matrix());
            let fd = (fp - fm) / (2.0 * t);
            let analytic = metric_inner(&m, &egrad_to_rgrad(&m, &g(m.matrix())).unwrap(), &xi).unwrap();
            assert!(
                (fd - analytic).abs() <= 1e-4 * analytic.abs().max(1e-8),
                "{fd} vs {analytic}"
            );
        }
    }

    #[test]
    fn spd_point_serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = SpdPoint::random(3, &mut rng);
        let s = serde_json::to_string(&m).unwrap();
        let back: SpdPoint = serde_json::from_str(&s).unwrap();
        assert_eq!(back.matrix(), m.matrix());
    }
}
