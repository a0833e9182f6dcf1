//! Closed-form kernels, the anchor feature map `β̃` and the composite
//! positive-definite quadratic kernel `k_b(x, y) + η β̃(x)ᵀ M β̃(y)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{AnchorSet, DomainPair};

/// Parameterization of a closed-form kernel.
///
/// Canonical text forms: `poly:a=0.01,b=0,d=1`, `rbf:sigma=3`,
/// `cauchy:sigma=1000`, `exp:sigma=1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelSpec {
    /// `(a⟨x,y⟩ + b)^d`
    Polynomial { a: f64, b: f64, degree: u32 },
    /// `exp(−‖x−y‖²/σ)`
    Rbf { sigma: f64 },
    /// `1 / (1 + ‖x−y‖²/σ)`
    Cauchy { sigma: f64 },
    /// `exp(−‖x−y‖/σ)`
    Exponential { sigma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            KernelSpec::Polynomial { a, b, degree } => a > 0.0 && b.is_finite() && degree >= 1,
            KernelSpec::Rbf { sigma } | KernelSpec::Cauchy { sigma } | KernelSpec::Exponential { sigma } => {
                sigma > 0.0 && sigma.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidKernelSpec(self.to_string()))
        }
    }

    fn eval_unchecked(&self, x: DVectorView<f64>, y: DVectorView<f64>) -> f64 {
        match *self {
            KernelSpec::Polynomial { a, b, degree } => {
                let dot: f64 = x.iter().zip(y.iter()).map(|(p, q)| p * q).sum();
                (a * dot + b).powi(degree as i32)
            }
            KernelSpec::Rbf { sigma } => (-sq_dist(x, y) / sigma).exp(),
            KernelSpec::Cauchy { sigma } => 1.0 / (1.0 + sq_dist(x, y) / sigma),
            KernelSpec::Exponential { sigma } => (-sq_dist(x, y).sqrt() / sigma).exp(),
        }
    }
}

fn sq_dist(x: DVectorView<f64>, y: DVectorView<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            KernelSpec::Polynomial { a, b, degree } => write!(f, "poly:a={a},b={b},d={degree}"),
            KernelSpec::Rbf { sigma } => write!(f, "rbf:sigma={sigma}"),
            KernelSpec::Cauchy { sigma } => write!(f, "cauchy:sigma={sigma}"),
            KernelSpec::Exponential { sigma } => write!(f, "exp:sigma={sigma}"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidKernelSpec(s.to_string());
        let (name, params) = s.trim().split_once(':').ok_or_else(bad)?;
        let mut kv = Vec::new();
        for item in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(bad)?;
            let v: f64 = v.trim().parse().map_err(|_| bad())?;
            kv.push((k.trim(), v));
        }
        let get = |key: &str| kv.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let known = |keys: &[&str]| kv.iter().all(|(k, _)| keys.contains(k));
        let spec = match name.trim() {
            "poly" | "polynomial" => {
                if !known(&["a", "b", "d"]) {
                    return Err(bad());
                }
                let d = get("d").unwrap_or(1.0);
                if d.fract() != 0.0 || d < 1.0 {
                    return Err(bad());
                }
                KernelSpec::Polynomial {
                    a: get("a").unwrap_or(1.0),
                    b: get("b").unwrap_or(0.0),
                    degree: d as u32,
                }
            }
            "rbf" | "cauchy" | "exp" | "exponential" => {
                if !known(&["sigma"]) {
                    return Err(bad());
                }
                let sigma = get("sigma").ok_or_else(bad)?;
                match name.trim() {
                    "rbf" => KernelSpec::Rbf { sigma },
                    "cauchy" => KernelSpec::Cauchy { sigma },
                    _ => KernelSpec::Exponential { sigma },
                }
            }
            _ => return Err(bad()),
        };
        spec.validate().map_err(|_| bad())?;
        Ok(spec)
    }
}

impl TryFrom<String> for KernelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelSpec> for String {
    fn from(k: KernelSpec) -> String {
        k.to_string()
    }
}

fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

pub fn eval_kernel(spec: &KernelSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    check_dim("kernel arguments", x.len(), y.len())?;
    Ok(spec.eval_unchecked(x.as_view(), y.as_view()))
}

/// Copies the upper triangle onto the lower one.
fn mirror_upper(k: &mut DMatrix<f64>) {
    let n = k.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            k[(i, j)] = k[(j, i)];
        }
    }
}

/// Gram matrix `K[i, j] = k(X[:, i], Y[:, j])` for column-sample matrices.
///
/// When `X` and `Y` are the same matrix only the upper triangle is
/// evaluated and mirrored, so the result is exactly symmetric.
pub fn gram(spec: &KernelSpec, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("gram feature dimension", x.nrows(), y.nrows())?;
    let same = std::ptr::eq(x, y) || x == y;
    let (n, m) = (x.ncols(), y.ncols());
    let mut k = DMatrix::zeros(n, m);
    for j in 0..m {
        let yj = y.column(j);
        let upto = if same { j + 1 } else { n };
        for i in 0..upto {
            k[(i, j)] = spec.eval_unchecked(x.column(i), yj);
        }
    }
    if same {
        mirror_upper(&mut k);
    }
    Ok(k)
}

/// `Φ` with `Φ[h, j] = β(Z[:, j], anchor_h)`, shape `H × n`.
pub fn beta_features(beta: &KernelSpec, anchors: &AnchorSet, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if anchors.dim() != z.nrows() {
        return Err(Error::AnchorDimensionMismatch {
            anchors: anchors.dim(),
            data: z.nrows(),
        });
    }
    let a = anchors.matrix();
    Ok(DMatrix::from_fn(a.ncols(), z.ncols(), |h, j| {
        beta.eval_unchecked(z.column(j), a.column(h))
    }))
}

/// `true` iff `k` is symmetric to `rel_tol·‖K‖_F` and its smallest
/// eigenvalue is at least `−rel_tol·trace(K)`.
pub fn psd_check(k: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !k.is_square() {
        return false;
    }
    if k.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let norm = k.norm();
    if (k - k.transpose()).norm() > rel_tol * norm {
        return false;
    }
    if k.nrows() == 0 {
        return true;
    }
    linalg::min_eigenvalue(k) >= -rel_tol * k.trace().abs()
}

/// Anything that can produce Gram blocks between two column-sample matrices.
pub trait GramKernel {
    fn gram(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl GramKernel for KernelSpec {
    fn gram(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        gram(self, x, y)
    }
}

/// Learnable positive-definite quadratic kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pdqk {
    base: KernelSpec,
    beta: KernelSpec,
    anchors: AnchorSet,
    m: DMatrix<f64>,
    eta: f64,
}

impl Pdqk {
    /// `m` may sit on the PSD boundary (e.g. zero) but must be symmetric
    /// PSD within `1e-8·trace(M)`.
    pub fn new(base: KernelSpec, beta: KernelSpec, anchors: AnchorSet, m: DMatrix<f64>, eta: f64) -> Result<Self> {
        base.validate()?;
        beta.validate()?;
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be positive, got {eta}")));
        }
        let h = anchors.len();
        if m.nrows() != h || m.ncols() != h {
            return Err(Error::ShapeMismatch(format!(
                "M is {}x{}, anchor count is {h}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !psd_check(&m, 1e-8) {
            return Err(Error::SingularPoint("M is not symmetric positive semi-definite".into()));
        }
        Ok(Pdqk {
            base,
            beta,
            anchors,
            m,
            eta,
        })
    }

    pub fn base(&self) -> &KernelSpec {
        &self.base
    }

    pub fn beta(&self) -> &KernelSpec {
        &self.beta
    }

    pub fn anchors(&self) -> &AnchorSet {
        &self.anchors
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn with_m(&self, m: DMatrix<f64>) -> Result<Self> {
        Pdqk::new(self.base, self.beta, self.anchors.clone(), m, self.eta)
    }

    pub fn features(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        beta_features(&self.beta, &self.anchors, z)
    }
}

pub fn pdqk_eval(k: &Pdqk, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    check_dim("kernel arguments", x.len(), y.len())?;
    check_dim("anchor dimension", k.anchors.dim(), x.len())?;
    let a = k.anchors.matrix();
    let bx = DVector::from_fn(a.ncols(), |h, _| k.beta.eval_unchecked(x.as_view(), a.column(h)));
    let by = DVector::from_fn(a.ncols(), |h, _| k.beta.eval_unchecked(y.as_view(), a.column(h)));
    // Averaging both orders makes k(x, y) == k(y, x) bit for bit.
    let quad = 0.5 * (bx.dot(&(&k.m * &by)) + by.dot(&(&k.m * &bx)));
    Ok(k.base.eval_unchecked(x.as_view(), y.as_view()) + k.eta * quad)
}

/// `K_b + η Φ_xᵀ M Φ_y`.
pub fn pdqk_gram(k: &Pdqk, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_dim("gram feature dimension", x.nrows(), y.nrows())?;
    let same = std::ptr::eq(x, y) || x == y;
    let mut out = gram(&k.base, x, y)?;
    let phi_x = k.features(x)?;
    let m_phi_y = if same { &k.m * &phi_x } else { &k.m * k.features(y)? };
    out += (phi_x.transpose() * m_phi_y) * k.eta;
    if same {
        mirror_upper(&mut out);
    }
    Ok(out)
}

impl GramKernel for Pdqk {
    fn gram(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        pdqk_gram(self, x, y)
    }
}

/// Which samples form the anchor set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AnchorPolicy {
    Source,
    Target,
    Union,
    /// `k` distinct columns drawn uniformly from source ∪ target.
    UnionSubsample(usize),
}

impl AnchorPolicy {
    /// Builds anchors from the columns of a (training view) domain pair.
    pub fn build<R: Rng + ?Sized>(&self, pair: &DomainPair, rng: &mut R) -> Result<AnchorSet> {
        let xs = pair.source.data.features();
        let xt = pair.target.data.features();
        match *self {
            AnchorPolicy::Source => AnchorSet::new(xs.clone()),
            AnchorPolicy::Target => AnchorSet::new(xt.clone()),
            AnchorPolicy::Union => AnchorSet::new(pair.joint_features()),
            AnchorPolicy::UnionSubsample(k) => {
                let joint = pair.joint_features();
                let n = joint.ncols();
                if k == 0 || k > n {
                    return Err(Error::InvalidConfig(format!(
                        "cannot draw {k} anchors from {n} samples"
                    )));
                }
                let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
                idx.sort_unstable();
                AnchorSet::new(joint.select_columns(&idx))
            }
        }
    }
}

impl fmt::Display for AnchorPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnchorPolicy::Source => f.write_str("source"),
            AnchorPolicy::Target => f.write_str("target"),
            AnchorPolicy::Union => f.write_str("union"),
            AnchorPolicy::UnionSubsample(k) => write!(f, "union-subsample:{k}"),
        }
    }
}

impl FromStr for AnchorPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "source" => Ok(AnchorPolicy::Source),
            "target" => Ok(AnchorPolicy::Target),
            "union" => Ok(AnchorPolicy::Union),
            other => other
                .strip_prefix("union-subsample:")
                .and_then(|k| k.trim().parse::<usize>().ok())
                .filter(|&k| k > 0)
                .map(AnchorPolicy::UnionSubsample)
                .ok_or_else(|| Error::InvalidConfig(format!("anchor policy `{s}`"))),
        }
    }
}

impl TryFrom<String> for AnchorPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AnchorPolicy> for String {
    fn from(p: AnchorPolicy) -> String {
        p.to_string()
    }
}
