//! Operator domains for finite matrices: the upper/lower half-planes
//! `{T : Im T >= ε·1}`, balls `{T : ‖T‖ < R}`, and the contraction criterion
//! relating `‖x‖ < 1` to positivity of `2 Re (1 - x)^{-1} - 1`.
//!
//! Membership is always reported through a signed margin. Margins within
//! [`BOUNDARY_BAND`] of zero are classified as [`Membership::Boundary`]
//! since the domains are open and the criteria are strict inequalities.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, CMat, C64, I};
use crate::{Error, Result};

pub const DEFAULT_N_MAX: usize = 64;
pub const BOUNDARY_BAND: f64 = 1e-9;

/// Relative singular-value floor below which a matrix without a half-plane
/// margin is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// A square complex matrix with finite entries.
#[derive(Clone, Debug)]
pub struct OperatorPoint {
    entries: CMat,
}

impl OperatorPoint {
    pub fn new(entries: CMat) -> Result<Self> {
        Self::with_cap(entries, DEFAULT_N_MAX)
    }

    pub fn with_cap(entries: CMat, n_max: usize) -> Result<Self> {
        let (r, c) = (entries.nrows(), entries.ncols());
        if r != c || r == 0 {
            return Err(Error::DimensionMismatch {
                expected: "non-empty square matrix".into(),
                found: format!("{r}x{c}"),
            });
        }
        if r > n_max {
            return Err(Error::BadParams(format!("dimension {r} exceeds cap {n_max}")));
        }
        if !linalg::is_finite(&entries) {
            return Err(Error::BadParams("non-finite matrix entry".into()));
        }
        Ok(Self { entries })
    }

    pub fn scalar(n: usize, z: C64) -> Result<Self> {
        Self::new(linalg::scalar(n, z))
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        Self::new(linalg::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_inner(self) -> CMat {
        self.entries
    }

    pub fn neg(&self) -> Self {
        Self {
            entries: linalg::scale(&self.entries, C64::new(-1.0, 0.0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Outside,
    Boundary,
}

impl Membership {
    pub fn from_margin(margin: f64) -> Self {
        if margin.abs() <= BOUNDARY_BAND {
            Membership::Boundary
        } else if margin > 0.0 {
            Membership::Inside
        } else {
            Membership::Outside
        }
    }
}

/// Signed distances of a matrix to the upper half-plane and to the ball of
/// radius `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainMargin {
    pub halfplane_margin: f64,
    pub ball_margin: f64,
    pub radius: f64,
}

impl DomainMargin {
    pub fn upper_halfplane(&self) -> Membership {
        Membership::from_margin(self.halfplane_margin)
    }

    pub fn ball(&self) -> Membership {
        Membership::from_margin(self.ball_margin)
    }
}

pub fn im_part(t: &OperatorPoint) -> CMat {
    linalg::im_part(&t.entries)
}

/// `λ_min(Im T)`; positive iff `T` lies in the upper half-plane. The lower
/// half-plane margin is `halfplane_margin(-T)`.
pub fn halfplane_margin(t: &OperatorPoint) -> Result<f64> {
    linalg::min_eigenvalue(&im_part(t))
}

/// `R - ‖T‖`.
pub fn ball_margin(t: &OperatorPoint, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::BadParams(format!("ball radius must be positive, got {radius}")));
    }
    Ok(radius - linalg::opnorm(&t.entries)?)
}

pub fn margins(t: &OperatorPoint, radius: f64) -> Result<DomainMargin> {
    Ok(DomainMargin {
        halfplane_margin: halfplane_margin(t)?,
        ball_margin: ball_margin(t, radius)?,
        radius,
    })
}

/// Inverts `T`, enforcing that inversion swaps the two half-planes when `T`
/// lies in one of them.
pub fn invert_checked(t: &OperatorPoint) -> Result<OperatorPoint> {
    let upper = halfplane_margin(t)?;
    let lower = halfplane_margin(&t.neg())?;
    if upper > 0.0 || lower > 0.0 {
        let inv = OperatorPoint {
            entries: linalg::inverse(&t.entries),
        };
        if upper > 0.0 && halfplane_margin(&inv.neg())? <= 0.0 {
            return Err(Error::Invariant("inverse of an upper half-plane point is not in the lower half-plane".into()));
        }
        if lower > 0.0 && halfplane_margin(&inv)? <= 0.0 {
            return Err(Error::Invariant("inverse of a lower half-plane point is not in the upper half-plane".into()));
        }
        return Ok(inv);
    }
    Ok(OperatorPoint {
        entries: linalg::inverse_checked(&t.entries, SINGULAR_TOL)?,
    })
}

/// `(T - i)(T + i)^{-1}`: maps the upper half-plane into the open unit ball.
pub fn cayley(t: &OperatorPoint) -> Result<OperatorPoint> {
    let plus = linalg::shift(&t.entries, I);
    let minus = linalg::shift(&t.entries, -I);
    let inv = linalg::inverse_checked(&plus, SINGULAR_TOL)?;
    OperatorPoint::new(&minus * &inv)
}

/// `i(1 - W)^{-1}(1 + W)`, the inverse of [`cayley`].
pub fn inverse_cayley(w: &OperatorPoint) -> Result<OperatorPoint> {
    let n = w.dim();
    let one = linalg::identity(n);
    let left = &one - &w.entries;
    let right = &one + &w.entries;
    let inv = linalg::inverse_checked(&left, SINGULAR_TOL)?;
    OperatorPoint::new(linalg::scale(&(&inv * &right), I))
}

/// Margins of the two equivalent contraction conditions on `x`:
/// `norm_margin = 1 - ‖x‖` and
/// `resolvent_margin = λ_min(2 Re (1 - x)^{-1}) - 1`.
/// The second is `-∞` when `1 - x` is singular.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionMargins {
    pub norm_margin: f64,
    pub resolvent_margin: f64,
}

impl ContractionMargins {
    /// `None` inside the boundary band, otherwise whether both margins carry
    /// the same sign.
    pub fn agree(&self, band: f64) -> Option<bool> {
        if self.norm_margin.abs() <= band {
            return None;
        }
        Some((self.norm_margin > 0.0) == (self.resolvent_margin > 0.0))
    }
}

pub fn contraction_margins(x: &OperatorPoint) -> Result<ContractionMargins> {
    let norm_margin = 1.0 - linalg::opnorm(&x.entries)?;
    let one_minus = &linalg::identity(x.dim()) - &x.entries;
    let resolvent_margin = match linalg::inverse_checked(&one_minus, SINGULAR_TOL) {
        Ok(r) => {
            let two_re = &r + &linalg::adjoint(&r);
            linalg::min_eigenvalue(&two_re)? - 1.0
        }
        Err(Error::SingularMatrix { .. }) => f64::NEG_INFINITY,
        Err(e) => return Err(e),
    };
    Ok(ContractionMargins {
        norm_margin,
        resolvent_margin,
    })
}

/// Operator norm of
/// `(1-x)^{-1} + (1-x*)^{-1} - 1 - (1-x)^{-1}(1 - x x*)(1-x*)^{-1}`,
/// which vanishes identically whenever `1 - x` is invertible.
pub fn resolvent_identity_residual(x: &OperatorPoint) -> Result<f64> {
    let n = x.dim();
    let one = linalg::identity(n);
    let xs = linalg::adjoint(&x.entries);
    let r = linalg::inverse_checked(&(&one - &x.entries), SINGULAR_TOL)?;
    let rs = linalg::adjoint(&r);
    let middle = &one - &(&x.entries * &xs);
    let lhs = &(&r + &rs) - &one;
    let rhs = &(&r * &middle) * &rs;
    linalg::opnorm(&(&lhs - &rhs))
}

/// `1 - ‖a^{-1} c‖`, or `-∞` when `a` is singular. Positive exactly on the
/// set of pairs for which `a - c = a(1 - a^{-1}c)` is inverted by a
/// convergent Neumann series.
pub fn quotient_ball_margin(a: &OperatorPoint, c: &OperatorPoint) -> Result<f64> {
    if a.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}x{0}", a.dim()),
            found: format!("{0}x{0}", c.dim()),
        });
    }
    match linalg::inverse_checked(&a.entries, SINGULAR_TOL) {
        Ok(inv) => Ok(1.0 - linalg::opnorm(&(&inv * &c.entries))?),
        Err(Error::SingularMatrix { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// A random n×n complex Gaussian matrix rescaled to operator norm `norm`.
pub fn random_with_norm<R: rand::Rng + ?Sized>(rng: &mut R, n: usize, norm: f64) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    let g: CMat = Mat::from_fn(n, n, |_, _| {
        C64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    });
    let s = linalg::opnorm(&g).unwrap_or(1.0);
    if s == 0.0 {
        return g;
    }
    linalg::scale(&g, C64::new(norm / s, 0.0))
}
