use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DataMatrix, DomainPair, LabeledDataset};

/// Class means of the Gaussian generator sit at `±CLASS_OFFSET·e₁`.
pub const CLASS_OFFSET: f64 = 2.5;
const MOON_NOISE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Two unit-variance Gaussian classes; the target is translated by
    /// `shift` along the diagonal direction `𝟙/√d`.
    ShiftedGaussians,
    /// Two interleaving half-moons in the first two coordinates; the target
    /// is rotated by `shift` radians about the moons' centre.
    RotatedMoons,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::ShiftedGaussians => "shifted-gaussians",
            SyntheticKind::RotatedMoons => "rotated-moons",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "shifted-gaussians" => Ok(SyntheticKind::ShiftedGaussians),
            "rotated-moons" => Ok(SyntheticKind::RotatedMoons),
            _ => Err(Error::InvalidConfig(format!("unknown synthetic kind `{s}`"))),
        }
    }
}

/// Two-class source and transformed target, both labeled `0`/`1` with
/// `n_per_class` samples per class (class 0 first). Target labels are meant
/// for scoring only.
pub fn generate_synthetic(
    kind: SyntheticKind,
    n_per_class: usize,
    shift: f64,
    dim: usize,
    seed: u64,
) -> Result<DomainPair> {
    if n_per_class < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_per_class must be at least 2, got {n_per_class}"
        )));
    }
    if !shift.is_finite() {
        return Err(Error::InvalidConfig("shift must be finite".into()));
    }
    let min_dim = match kind {
        SyntheticKind::ShiftedGaussians => 1,
        SyntheticKind::RotatedMoons => 2,
    };
    if dim < min_dim {
        return Err(Error::InvalidConfig(format!(
            "{kind} needs at least {min_dim} dimensions"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<i64> = (0..2 * n_per_class).map(|i| (i / n_per_class) as i64).collect();
    let (xs, xt) = match kind {
        SyntheticKind::ShiftedGaussians => {
            let xs = gaussians(&mut rng, &labels, dim);
            let mut xt = gaussians(&mut rng, &labels, dim);
            let step = shift / (dim as f64).sqrt();
            xt.add_scalar_mut(step);
            (xs, xt)
        }
        SyntheticKind::RotatedMoons => {
            let xs = moons(&mut rng, &labels, dim);
            let mut xt = moons(&mut rng, &labels, dim);
            let (s, c) = shift.sin_cos();
            let (cx, cy) = (0.5, 0.25);
            for mut col in xt.column_iter_mut() {
                let (x, y) = (col[0] - cx, col[1] - cy);
                col[0] = c * x - s * y + cx;
                col[1] = s * x + c * y + cy;
            }
            (xs, xt)
        }
    };
    DomainPair::new(
        LabeledDataset::new(DataMatrix::new(xs), labels.clone())?,
        LabeledDataset::new(DataMatrix::new(xt), labels)?,
    )
}

fn gaussians(rng: &mut ChaCha8Rng, labels: &[i64], dim: usize) -> DMatrix<f64> {
    let mut x = DMatrix::from_fn(dim, labels.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    for (j, &l) in labels.iter().enumerate() {
        x[(0, j)] += if l == 0 { -CLASS_OFFSET } else { CLASS_OFFSET };
    }
    x
}

fn moons(rng: &mut ChaCha8Rng, labels: &[i64], dim: usize) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(dim, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        let t: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (px, py) = if l == 0 {
            (t.cos(), t.sin())
        } else {
            (1.0 - t.cos(), 0.5 - t.sin())
        };
        x[(0, j)] = px + MOON_NOISE * rng.sample::<f64, _>(StandardNormal);
        x[(1, j)] = py + MOON_NOISE * rng.sample::<f64, _>(StandardNormal);
        for r in 2..dim {
            x[(r, j)] = MOON_NOISE * rng.sample::<f64, _>(StandardNormal);
        }
    }
    x
}
