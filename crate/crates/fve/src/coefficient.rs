//! Scalar coefficient fields A(x) = a(x) I, smooth inside subdomains with
//! possible jumps across a checkerboard of square subdomains.
//!
//! Evaluation returns a full symmetric 2x2 tensor so anisotropic fields fit
//! the same interface, but the built-in fields are scalar multiples of the
//! identity. Quadrature points can sit exactly on a subdomain boundary
//! line, so assembly passes a point strictly inside the element (the
//! triangle centroid) as a region anchor; the jump multiplier is resolved
//! from the anchor, the smooth part from the quadrature point itself.

use crate::mesh::Point2;
use std::f64::consts::PI;
use std::fmt;
use thiserror::Error;

/// Symmetric 2x2 coefficient tensor, row-major.
pub type Tensor2 = [[f64; 2]; 2];

#[derive(Debug, Error)]
pub enum CoefficientError {
    #[error("checkerboard jump multiplier must be positive, got {0}")]
    NonPositiveJump(f64),
    #[error("checkerboard needs an even number of subdomains per side, got {0}")]
    OddPartition(usize),
}

enum Kind {
    Smooth {
        freq: u32,
    },
    Checkerboard {
        freq: u32,
        alpha_hat: f64,
        cells: usize,
    },
    Custom(Box<dyn Fn(Point2, Point2) -> Tensor2 + Send + Sync>),
}

/// Coefficient field of the elliptic operator.
pub struct CoefficientField {
    kind: Kind,
    descriptor: String,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientField({})", self.descriptor)
    }
}

/// A = (2 + sin(k pi x) sin(k pi y)) I.
pub fn smooth_field(k: u32) -> CoefficientField {
    CoefficientField {
        kind: Kind::Smooth { freq: k },
        descriptor: format!("2 + sin({k}*pi*x)*sin({k}*pi*y)"),
    }
}

/// A = alpha_1 (2 + sin(k pi x) sin(k pi y)) I with alpha_1 = alpha_hat on
/// the shaded cells of a `partition_side` x `partition_side` checkerboard
/// and 1 otherwise. Shaded cells are those with odd coordinate parity, so
/// the cell at the origin is unshaded.
pub fn checkerboard_field(
    k: u32,
    alpha_hat: f64,
    partition_side: usize,
) -> Result<CoefficientField, CoefficientError> {
    if !(alpha_hat > 0.0) {
        return Err(CoefficientError::NonPositiveJump(alpha_hat));
    }
    if partition_side % 2 != 0 {
        return Err(CoefficientError::OddPartition(partition_side));
    }
    Ok(CoefficientField {
        kind: Kind::Checkerboard {
            freq: k,
            alpha_hat,
            cells: partition_side,
        },
        descriptor: format!(
            "checkerboard({partition_side}x{partition_side}, alpha={alpha_hat:e}) * (2 + sin({k}*pi*x)*sin({k}*pi*y))"
        ),
    })
}

fn scalar_tensor(a: f64) -> Tensor2 {
    [[a, 0.0], [0.0, a]]
}

fn smooth_scalar(freq: u32, p: Point2) -> f64 {
    let k = freq as f64;
    2.0 + (k * PI * p.x).sin() * (k * PI * p.y).sin()
}

/// Index of the half-open cell [i/N, (i+1)/N) containing `t`, with the top
/// edge of the domain closed.
fn cell_of(t: f64, cells: usize) -> usize {
    let i = (t * cells as f64).floor() as isize;
    i.clamp(0, cells as isize - 1) as usize
}

impl CoefficientField {
    /// Field from an arbitrary `(point, region_anchor) -> tensor` rule.
    pub fn custom(
        descriptor: impl Into<String>,
        f: impl Fn(Point2, Point2) -> Tensor2 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: Kind::Custom(Box::new(f)),
            descriptor: descriptor.into(),
        }
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Evaluates at a point; boundary points resolve to the half-open cell
    /// containing them.
    pub fn eval(&self, p: Point2) -> Tensor2 {
        self.eval_region(p, p)
    }

    /// Evaluates at `p` with the subdomain membership taken from `anchor`
    /// (a point strictly inside the region of interest).
    pub fn eval_region(&self, p: Point2, anchor: Point2) -> Tensor2 {
        match &self.kind {
            Kind::Smooth { freq } => scalar_tensor(smooth_scalar(*freq, p)),
            Kind::Checkerboard {
                freq,
                alpha_hat,
                cells,
            } => {
                let i = cell_of(anchor.x, *cells);
                let j = cell_of(anchor.y, *cells);
                let mult = if (i + j) % 2 == 1 { *alpha_hat } else { 1.0 };
                scalar_tensor(mult * smooth_scalar(*freq, p))
            }
            Kind::Custom(f) => f(p, anchor),
        }
    }

    /// Checkerboard multiplier of the subdomain cell containing `anchor`
    /// (1 for fields without jumps).
    pub fn multiplier_at(&self, anchor: Point2) -> f64 {
        match &self.kind {
            Kind::Checkerboard {
                alpha_hat, cells, ..
            } => {
                let i = cell_of(anchor.x, *cells);
                let j = cell_of(anchor.y, *cells);
                if (i + j) % 2 == 1 {
                    *alpha_hat
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }

    /// Smallest eigenvalue of A sampled on a uniform grid; positive for a
    /// uniformly elliptic field.
    pub fn min_eigenvalue_sampled(&self, grid: usize) -> f64 {
        let mut min = f64::INFINITY;
        for j in 0..grid {
            for i in 0..grid {
                let p = Point2::new((i as f64 + 0.5) / grid as f64, (j as f64 + 0.5) / grid as f64);
                min = min.min(min_eigenvalue(self.eval(p)));
            }
        }
        min
    }
}

/// Smaller eigenvalue of a symmetric 2x2 tensor.
pub fn min_eigenvalue(t: Tensor2) -> f64 {
    let tr = t[0][0] + t[1][1];
    let det = t[0][0] * t[1][1] - t[0][1] * t[1][0];
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    tr / 2.0 - disc
}
