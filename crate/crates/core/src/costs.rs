//! Transport costs `c(x, y)` with gradients in `x` and unit-diameter scaling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssim;
use crate::tensor::{sq_dist, Tensor};

/// MSE below which the PSNR cost saturates at zero.
///
/// PSNR diverges at `x = y`; flooring the MSE keeps the cost finite,
/// nonnegative and monotone in MSE, so argmins agree with the plain MSE cost.
pub const PSNR_MSE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Euclidean,
    SquaredEuclidean,
    #[serde(alias = "ssim")]
    SsimCost,
    #[serde(alias = "psnr")]
    PsnrCost,
}

impl CostKind {
    pub const ALL: [CostKind; 4] = [
        CostKind::Euclidean,
        CostKind::SquaredEuclidean,
        CostKind::SsimCost,
        CostKind::PsnrCost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Euclidean => "euclidean",
            CostKind::SquaredEuclidean => "squared_euclidean",
            CostKind::SsimCost => "ssim_cost",
            CostKind::PsnrCost => "psnr_cost",
        }
    }

    pub fn needs_image_shape(self) -> bool {
        matches!(self, CostKind::SsimCost)
    }

    /// Whether `c(x, y) = c(y, x)` for every pair.
    pub fn is_symmetric(self) -> bool {
        true
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "euclidean" => CostKind::Euclidean,
            "squared_euclidean" | "square" => CostKind::SquaredEuclidean,
            "ssim_cost" | "ssim" => CostKind::SsimCost,
            "psnr_cost" | "psnr" => CostKind::PsnrCost,
            other => return Err(Error::Invalid(format!("unknown cost kind `{other}`"))),
        })
    }
}

/// A cost function: its kind, a positive multiplier, and the image layout
/// for the windowed image costs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub kind: CostKind,
    pub scale: f64,
    pub image_shape: Option<(usize, usize)>,
}

impl CostSpec {
    pub fn new(kind: CostKind, scale: f64, image_shape: Option<(usize, usize)>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "cost scale must be positive and finite, got {scale}"
            )));
        }
        if kind.needs_image_shape() && image_shape.is_none() {
            return Err(Error::MissingImageShape(kind.name()));
        }
        Ok(Self {
            kind,
            scale,
            image_shape,
        })
    }

    pub fn euclidean() -> Self {
        Self {
            kind: CostKind::Euclidean,
            scale: 1.0,
            image_shape: None,
        }
    }

    pub fn squared_euclidean() -> Self {
        Self {
            kind: CostKind::SquaredEuclidean,
            scale: 1.0,
            image_shape: None,
        }
    }

    pub fn with_scale(self, scale: f64) -> Result<Self> {
        Self::new(self.kind, scale, self.image_shape)
    }

    /// Validates the point dimension against this cost.
    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.kind.needs_image_shape() && self.image_shape.is_none() {
            return Err(Error::MissingImageShape(self.kind.name()));
        }
        if let Some((h, w)) = self.image_shape {
            if h * w != d {
                return Err(Error::Dimension {
                    expected: h * w,
                    got: d,
                });
            }
        }
        Ok(())
    }

    fn check_pair(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != y.len() {
            return Err(Error::Dimension {
                expected: x.len(),
                got: y.len(),
            });
        }
        self.check_dim(x.len())
    }

    /// `c(x, y)`.
    pub fn cost(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_pair(x, y)?;
        Ok(self.eval(x, y))
    }

    /// `c(x, y)` without validation. Callers must have checked dimensions
    /// with [`CostSpec::check_dim`].
    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let raw = match self.kind {
            CostKind::Euclidean => sq_dist(x, y).sqrt(),
            CostKind::SquaredEuclidean => sq_dist(x, y),
            CostKind::SsimCost => {
                let shape = self.image_shape.expect("checked image shape");
                1.0 - ssim::ssim(x, y, shape).expect("checked image shape")
            }
            CostKind::PsnrCost => {
                let mse = sq_dist(x, y) / x.len() as f64;
                10.0 * (mse.max(PSNR_MSE_FLOOR) / PSNR_MSE_FLOOR).log10()
            }
        };
        self.scale * raw
    }

    /// Gradient of `c(·, y)` at `x`.
    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        self.check_pair(x, y)?;
        let s = self.scale;
        Ok(match self.kind {
            CostKind::Euclidean => {
                let r = sq_dist(x, y).sqrt();
                if r == 0.0 {
                    return Err(Error::Singular("euclidean cost at coincident points"));
                }
                x.iter().zip(y).map(|(a, b)| s * (a - b) / r).collect()
            }
            CostKind::SquaredEuclidean => x.iter().zip(y).map(|(a, b)| 2.0 * s * (a - b)).collect(),
            CostKind::SsimCost => {
                let shape = self.image_shape.expect("checked image shape");
                let (_, g) = ssim::ssim_with_grad(x, y, shape)?;
                g.into_iter().map(|v| -s * v).collect()
            }
            CostKind::PsnrCost => {
                let d = x.len() as f64;
                let mse = sq_dist(x, y) / d;
                if mse <= PSNR_MSE_FLOOR {
                    vec![0.0; x.len()]
                } else {
                    let k = s * 10.0 / (std::f64::consts::LN_10 * mse) * 2.0 / d;
                    x.iter().zip(y).map(|(a, b)| k * (a - b)).collect()
                }
            }
        })
    }

    /// Largest value of the unscaled cost over a box.
    fn unit_scale_diameter(&self, domain: &[(f64, f64)]) -> Result<f64> {
        for (i, &(lo, hi)) in domain.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::UnboundedDomain(i));
            }
            if hi < lo {
                return Err(Error::Invalid(format!(
                    "coordinate {i}: upper bound {hi} below lower bound {lo}"
                )));
            }
        }
        self.check_dim(domain.len())?;
        let sq: f64 = domain.iter().map(|(lo, hi)| (hi - lo) * (hi - lo)).sum();
        Ok(match self.kind {
            CostKind::SquaredEuclidean => sq,
            CostKind::Euclidean => sq.sqrt(),
            // SSIM ≥ −1, so 1 − SSIM never exceeds 2.
            CostKind::SsimCost => 2.0,
            CostKind::PsnrCost => {
                let mse = sq / domain.len() as f64;
                10.0 * (mse.max(PSNR_MSE_FLOOR) / PSNR_MSE_FLOOR).log10()
            }
        })
    }
}

/// Standalone cost `c(x, y)` under `spec`.
pub fn cost(spec: &CostSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    spec.cost(x, y)
}

pub fn cost_grad_x(spec: &CostSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    spec.grad_x(x, y)
}

/// `−PSNR = 10·log₁₀(MSE)` for unit-range images.
pub fn psnr_cost(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("image"));
    }
    let mse = sq_dist(x, y) / x.len() as f64;
    if mse == 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * mse.log10())
}

/// `1 − SSIM(x, y)`.
pub fn ssim_cost(x: &[f64], y: &[f64], shape: (usize, usize)) -> Result<f64> {
    Ok(1.0 - ssim::ssim(x, y, shape)?)
}

/// Scale that brings the largest cost over `domain` (per-coordinate ranges)
/// to one.
pub fn unit_diameter_scale(spec: &CostSpec, domain: &[(f64, f64)]) -> Result<f64> {
    let diameter = spec.unit_scale_diameter(domain)?;
    if diameter <= 0.0 {
        return Err(Error::Invalid("domain has zero diameter".into()));
    }
    Ok(1.0 / diameter)
}

/// Per-coordinate `(min, max)` of a point cloud.
pub fn bounding_box(points: &Tensor) -> Result<Vec<(f64, f64)>> {
    if points.rows() == 0 {
        return Err(Error::Empty("points"));
    }
    let d = points.cols();
    let mut bb = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
    for row in points.row_iter() {
        for (b, &v) in bb.iter_mut().zip(row) {
            b.0 = b.0.min(v);
            b.1 = b.1.max(v);
        }
    }
    Ok(bb)
}
