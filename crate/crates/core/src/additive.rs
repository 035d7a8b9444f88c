//! Free additive convolution on the line via scalar subordination.
//!
//! For measures μ, ν the subordination functions ω₁, ω₂ satisfy
//! `G_{μ⊞ν}(z) = G_μ(ω₁(z)) = G_ν(ω₂(z))` and `ω₁ + ω₂ = z + F_{μ⊞ν}(z)`.
//! ω₁ is the attracting fixed point of the analytic self-map of the upper
//! half-plane `w ↦ z + h_ν(z + h_μ(w))`, with `h = F - id`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::{self, Inversion, LineMeasure, UniformGrid};
use crate::{Error, Result};

type C64 = Complex64;

pub const MIN_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug)]
pub struct SubordinationOptions {
    pub max_iter: usize,
    pub damping: f64,
    /// Fixed-point residual below which Picard hands over to Newton.
    pub handoff: f64,
    /// Starting point; `z + i` when unset.
    pub start: Option<C64>,
}

impl Default for SubordinationOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            damping: 0.5,
            handoff: 1e-3,
            start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubordinationEval {
    pub z: C64,
    pub omega1: C64,
    pub omega2: C64,
    pub g_conv: C64,
    pub residual: f64,
    pub iterations: usize,
    pub picard_iterations: usize,
}

impl SubordinationEval {
    /// `|ω₁ + ω₂ - z - 1/G_{μ⊞ν}(z)|`.
    pub fn sum_defect(&self) -> f64 {
        (self.omega1 + self.omega2 - self.z - self.g_conv.inv()).norm()
    }
}

/// Solves for ω₁(z), ω₂(z) with the default options.
pub fn subordination_pair(mu: &LineMeasure, nu: &LineMeasure, z: C64, tol: f64) -> Result<SubordinationEval> {
    subordination_pair_with(mu, nu, z, tol, &SubordinationOptions::default())
}

pub fn subordination_pair_with(
    mu: &LineMeasure,
    nu: &LineMeasure,
    z: C64,
    tol: f64,
    opts: &SubordinationOptions,
) -> Result<SubordinationEval> {
    subordination_pair_of(|w| mu.cauchy_unchecked(w), |w| nu.cauchy_unchecked(w), z, tol, opts)
}

/// The same solver driven by arbitrary Cauchy transforms, e.g. closed forms.
/// Both must be defined on the whole upper half-plane.
pub fn subordination_pair_of<A, B>(
    g_mu: A,
    g_nu: B,
    z: C64,
    tol: f64,
    opts: &SubordinationOptions,
) -> Result<SubordinationEval>
where
    A: Fn(C64) -> C64,
    B: Fn(C64) -> C64,
{
    let h_mu = |w: C64| g_mu(w).inv() - w;
    let h_nu = |w: C64| g_nu(w).inv() - w;
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("Im z must be positive, got z = {z}")));
    }
    if !(tol >= MIN_TOL) {
        return Err(Error::BadParams(format!("tolerance {tol} below {MIN_TOL}")));
    }
    let map = |w: C64| z + h_nu(z + h_mu(w));
    let defect = |w: C64| map(w) - w;

    let mut w = opts.start.unwrap_or(z + C64::new(0.0, 1.0));
    let mut iterations = 0;
    let mut r = defect(w);
    while r.norm() >= opts.handoff {
        if iterations >= opts.max_iter {
            return Err(Error::no_convergence(iterations, r.norm()).at(format!("z = {z}")));
        }
        w += opts.damping * r;
        r = defect(w);
        iterations += 1;
    }
    let picard_iterations = iterations;

    let target = 1e-3 * tol;
    while r.norm() > target * w.norm().max(1.0) {
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let delta = 1e-6 * w.norm().max(1.0);
        let slope = (defect(w + delta) - defect(w - delta)) / (2.0 * delta);
        if slope.norm() == 0.0 || !slope.re.is_finite() {
            break;
        }
        let mut step = -r / slope;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = w + step;
            if cand.im > 0.0 {
                let rc = defect(cand);
                if rc.norm() < r.norm() {
                    w = cand;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let omega1 = w;
    let omega2 = z + h_mu(omega1);
    let g_conv = g_mu(omega1);
    let residual = (g_conv - g_nu(omega2)).norm();
    if !(residual <= tol) {
        return Err(Error::no_convergence(iterations, residual).at(format!("z = {z}")));
    }
    Ok(SubordinationEval {
        z,
        omega1,
        omega2,
        g_conv,
        residual,
        iterations,
        picard_iterations,
    })
}

/// `G_{μ⊞ν}(z)`.
pub fn convolution_cauchy(mu: &LineMeasure, nu: &LineMeasure, z: C64, tol: f64) -> Result<C64> {
    Ok(subordination_pair(mu, nu, z, tol)?.g_conv)
}

/// Interval guaranteed to contain the support of μ ⊞ ν.
pub fn support_bound(mu: &LineMeasure, nu: &LineMeasure) -> (f64, f64) {
    let (a, b) = mu.support();
    let (c, d) = nu.support();
    (a + c, b + d)
}

#[derive(Clone, Debug)]
pub struct Convolution {
    pub inversion: Inversion,
    pub support: (f64, f64),
}

impl Convolution {
    pub fn measure(&self) -> &LineMeasure {
        &self.inversion.measure
    }
}

/// Grid covering the support bound with a margin of 10% of its width.
pub fn default_grid(mu: &LineMeasure, nu: &LineMeasure, n: usize) -> Result<UniformGrid> {
    let (lo, hi) = support_bound(mu, nu);
    let pad = 0.1 * (hi - lo).max(1.0);
    UniformGrid::new(lo - pad, hi + pad, n)
}

/// Density of μ ⊞ ν on `grid`, recovered from `z ↦ G_μ(ω₁(z))`.
///
/// Atoms of the result are not reconstructed; they come back smeared at
/// the scale of the smallest η.
pub fn free_add_convolve(
    mu: &LineMeasure,
    nu: &LineMeasure,
    grid: UniformGrid,
    etas: &[f64],
    tol: f64,
) -> Result<Convolution> {
    let inversion = spectral::stieltjes_invert(|z| convolution_cauchy(mu, nu, z, tol), grid, etas)?;
    Ok(Convolution {
        inversion,
        support: support_bound(mu, nu),
    })
}

/// Moments `m_0..=m_k_max` of μ ⊞ ν by contour integration of its Cauchy
/// transform around the support bound. Unlike the moments of a recovered
/// density these carry no η-smoothing bias.
pub fn convolution_moments(mu: &LineMeasure, nu: &LineMeasure, k_max: usize, tol: f64) -> Result<Vec<f64>> {
    let (lo, hi) = support_bound(mu, nu);
    let center = 0.5 * (lo + hi);
    let radius = 1.5 * 0.5 * (hi - lo) + 1.0;
    // the contour crosses the real axis only at its two ends, where the
    // nodes sit strictly off the axis
    spectral::contour_moments(|z| convolution_cauchy(mu, nu, z, tol), center, radius, k_max, 256)
}

/// Subordination table on a rectangular grid of points.
pub fn subordination_table(
    mu: &LineMeasure,
    nu: &LineMeasure,
    points: &[C64],
    tol: f64,
) -> Vec<Result<SubordinationEval>> {
    points.par_iter().map(|&z| subordination_pair(mu, nu, z, tol)).collect()
}
