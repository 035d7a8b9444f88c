//! Disk subordination for unitaries and free multiplicative convolution on
//! the unit circle.
//!
//! Two transforms of a circle measure ν appear here:
//!
//! * `K_ν(g) = ∫ (ζ - g)^{-1} dν(ζ)` on the unit disk, whose values are the
//!   traces of resolvents `τ((u - g)^{-1})`;
//! * the moment series `ψ_ν(w) = Σ_{k≥1} m_k w^k = ∫ ζw/(1 - ζw) dν(ζ)` and
//!   `η_ν = ψ_ν/(1 + ψ_ν)`, which maps the disk to itself with `η_ν(0) = 0`.
//!
//! For free unitaries `u ~ μ`, `v ~ ν` there are disk maps ω₁, ω₂ with
//! `η_{μ⊠ν}(z) = η_μ(ω₁(z)) = η_ν(ω₂(z))` and `ω₁ω₂ = z·η_{μ⊠ν}(z)`.
//! Writing `h(w) = η(w)/w`, ω₁ is the fixed point of `w ↦ z·h_ν(z·h_μ(w))`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spectral::{self, CircleMeasure};
use crate::{Error, Result};

type C64 = Complex64;

pub const MAX_ORDER: usize = 16;
/// Radius of the circle on which the convolution is sampled for moments.
pub const MOMENT_RADIUS: f64 = 0.7;
pub const MOMENT_NODES: usize = 256;
/// Order up to which inverse moments are inspected for Haar degeneracy.
const DEGENERACY_ORDER: i32 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskSubordinationEval {
    pub target: C64,
    pub g: C64,
    pub residual: f64,
    pub ball_margin: f64,
    pub iterations: usize,
}

/// Solves `K_ν(g) = target` for `g` in the unit disk by Newton's method,
/// from `g = 0` first and then from a fixed set of points in the disk.
///
/// An iterate that would leave the disk is pulled back along the step so it
/// lands 95% of the way from the previous radius to the boundary. When the
/// direct solve stalls (Newton can be drawn to the circle between atoms),
/// the target is approached along the segment from the image of the start
/// point with adaptive steps, each one a Newton solve started from the
/// previous root. `K_ν` need not be injective, so when several roots lie in
/// the disk the one reached first is returned.
pub fn disk_subordination_solve(nu: &CircleMeasure, target: C64, tol: f64) -> Result<DiskSubordinationEval> {
    if !(tol >= 1e-12) {
        return Err(Error::BadParams(format!("tolerance {tol} below 1e-12")));
    }
    if !(target.re.is_finite() && target.im.is_finite()) {
        return Err(Error::BadParams(format!("target {target} is not finite")));
    }
    if nu.is_haar_like(DEGENERACY_ORDER, tol.min(1e-12)) {
        return Err(Error::DegenerateTransform);
    }
    let mut iterations = 0;
    let mut first_error = None;
    let mut found = None;
    for start in start_points() {
        match continue_from(nu, start, target, tol, &mut iterations) {
            Ok(hit) => {
                found = Some(hit);
                break;
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((g, r)) = found else {
        return Err(first_error.expect("at least one start point"));
    };
    Ok(DiskSubordinationEval {
        target,
        g,
        residual: r,
        ball_margin: 1.0 - g.norm(),
        iterations,
    })
}

/// The origin, then three rings of twelve points.
fn start_points() -> impl Iterator<Item = C64> {
    std::iter::once(C64::new(0.0, 0.0)).chain(
        [0.3, 0.6, 0.85]
            .into_iter()
            .flat_map(|r| (0..12).map(move |k| C64::from_polar(r, TAU * k as f64 / 12.0))),
    )
}

/// Newton from `start` straight at `target`; if that fails, along the
/// segment from `K_ν(start)` to `target` with adaptive steps.
fn continue_from(nu: &CircleMeasure, start: C64, target: C64, tol: f64, iterations: &mut usize) -> Result<(C64, f64)> {
    let direct = match newton_in_disk(nu, start, target, tol, iterations) {
        Ok(found) => return Ok(found),
        Err(e) => e,
    };
    let origin_value = nu.cauchy_unchecked(start);
    let (mut g, mut s, mut ds) = (start, 0.0f64, 0.25f64);
    loop {
        let next = (s + ds).min(1.0);
        let stage_target = origin_value + (target - origin_value) * next;
        let stage_tol = if next < 1.0 { tol.max(1e-10) } else { tol };
        match newton_in_disk(nu, g, stage_target, stage_tol, iterations) {
            Ok((found, r)) => {
                if next == 1.0 {
                    return Ok((found, r));
                }
                g = found;
                s = next;
                ds *= 2.0;
            }
            Err(_) => {
                ds *= 0.5;
                if ds < 1e-6 {
                    return Err(direct);
                }
            }
        }
    }
}

fn newton_in_disk(nu: &CircleMeasure, start: C64, target: C64, tol: f64, iterations: &mut usize) -> Result<(C64, f64)> {
    const MAX_ITER: usize = 100;
    let mut g = start;
    let mut r = nu.cauchy_unchecked(g) - target;
    let mut local = 0;
    while r.norm() > tol {
        if local >= MAX_ITER || g.norm() > 1.0 - 1e-9 {
            return Err(Error::no_convergence(local, r.norm()).at(format!("target = {target}")));
        }
        local += 1;
        *iterations += 1;
        let slope = nu.derivative_unchecked(g);
        if slope.norm() == 0.0 {
            return Err(Error::no_convergence(local, r.norm()).at("vanishing derivative".to_string()));
        }
        let mut step = -r / slope;
        let cap = g.norm() + 0.95 * (1.0 - g.norm());
        if (g + step).norm() >= cap {
            // largest t with |g + t·step| = cap
            let (a, b, c) = (step.norm_sqr(), 2.0 * (g.conj() * step).re, g.norm_sqr() - cap * cap);
            let t = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
            step *= t;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let cand = g + step;
            let rc = nu.cauchy_unchecked(cand) - target;
            if rc.norm() < r.norm() {
                g = cand;
                r = rc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::no_convergence(local, r.norm()).at(format!("target = {target}")));
        }
    }
    Ok((g, r.norm()))
}

/// `ψ_ν(w) = ∫ ζw/(1 - ζw) dν(ζ)` for `|w| < 1`.
pub fn psi_unchecked(nu: &CircleMeasure, w: C64) -> C64 {
    nu.quadrature().map(|(z, wt)| wt * z * w / (1.0 - z * w)).sum()
}

pub fn psi_transform(nu: &CircleMeasure, w: C64) -> Result<C64> {
    if !(w.norm() < 1.0) {
        return Err(Error::Domain(format!("|w| must be below 1, got {}", w.norm())));
    }
    Ok(psi_unchecked(nu, w))
}

pub fn eta_transform(nu: &CircleMeasure, w: C64) -> Result<C64> {
    let p = psi_transform(nu, w)?;
    Ok(p / (1.0 + p))
}

/// `η_ν(w)/w`, continued by the first moment at the origin.
fn eta_over_w(nu: &CircleMeasure, w: C64) -> C64 {
    if w.norm() < 1e-10 {
        return nu.moment(1);
    }
    let p = psi_unchecked(nu, w);
    p / ((1.0 + p) * w)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultSubordinationEval {
    pub z: C64,
    pub omega1: C64,
    pub omega2: C64,
    /// `ψ_{μ⊠ν}(z)`.
    pub psi_conv: C64,
    pub residual: f64,
    pub iterations: usize,
}

/// Fixed point ω₁(z) by Picard iteration from 0; the map sends the disk
/// into the disk of radius `|z|`, so it is a strict contraction there.
pub fn mult_subordination(mu: &CircleMeasure, nu: &CircleMeasure, z: C64, tol: f64) -> Result<MultSubordinationEval> {
    if !(z.norm() < 1.0) {
        return Err(Error::Domain(format!("|z| must be below 1, got {}", z.norm())));
    }
    let max_iter = 20_000;
    let map = |w: C64| z * eta_over_w(nu, z * eta_over_w(mu, w));
    let mut w = C64::new(0.0, 0.0);
    let mut iterations = 0;
    let mut prev = f64::INFINITY;
    loop {
        let next = map(w);
        let r = (next - w).norm();
        w = next;
        iterations += 1;
        // stop well inside tol, or once roundoff stops the contraction
        if r <= 1e-3 * tol || (r <= tol && r >= prev) {
            break;
        }
        prev = r;
        if iterations >= max_iter {
            return Err(Error::no_convergence(iterations, r).at(format!("z = {z}")));
        }
    }
    let omega2 = z * eta_over_w(mu, w);
    let residual = (map(w) - w).norm();
    if !(residual <= tol) {
        return Err(Error::no_convergence(iterations, residual).at(format!("z = {z}")));
    }
    Ok(MultSubordinationEval {
        z,
        omega1: w,
        omega2,
        psi_conv: psi_unchecked(mu, w),
        residual,
        iterations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultConvolution {
    /// `m_0..=m_order` of μ ⊠ ν.
    pub moments: Vec<C64>,
    /// Largest fixed-point residual over the sampling circle.
    pub residual: f64,
}

/// Moments of μ ⊠ ν from `ψ_{μ⊠ν}` sampled on `|z| = 0.7` (discrete
/// Fourier coefficients; the aliasing error is of order `0.7^256`).
pub fn free_mult_convolve_unitary(
    mu: &CircleMeasure,
    nu: &CircleMeasure,
    order: usize,
    tol: f64,
) -> Result<MultConvolution> {
    if order > MAX_ORDER {
        return Err(Error::BadParams(format!("order {order} exceeds {MAX_ORDER}")));
    }
    let evals: Vec<MultSubordinationEval> = (0..MOMENT_NODES)
        .into_par_iter()
        .map(|j| mult_subordination(mu, nu, C64::from_polar(MOMENT_RADIUS, TAU * j as f64 / MOMENT_NODES as f64), tol))
        .collect::<Result<_>>()?;
    let mut moments = vec![C64::new(1.0, 0.0)];
    for k in 1..=order {
        let s: C64 = evals
            .iter()
            .enumerate()
            .map(|(j, e)| e.psi_conv * C64::from_polar(1.0, -TAU * (k * j) as f64 / MOMENT_NODES as f64))
            .sum();
        moments.push(s / (MOMENT_NODES as f64 * MOMENT_RADIUS.powi(k as i32)));
    }
    let residual = evals.iter().map(|e| e.residual).fold(0.0, f64::max);
    Ok(MultConvolution { moments, residual })
}

/// Density of μ ⊠ ν on `n` equally spaced angles, from the Poisson-smoothed
/// boundary values `(1/2π)·Re(1 + 2ψ(r e^{-iφ}))`, renormalised.
pub fn free_mult_convolve_density(
    mu: &CircleMeasure,
    nu: &CircleMeasure,
    n: usize,
    radius: f64,
    tol: f64,
) -> Result<CircleMeasure> {
    if !(radius > 0.0 && radius < 1.0) {
        return Err(Error::BadParams(format!("smoothing radius {radius} outside (0, 1)")));
    }
    let samples: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let phi = TAU * j as f64 / n as f64;
            let e = mult_subordination(mu, nu, C64::from_polar(radius, -phi), tol)?;
            let v = (1.0 + 2.0 * e.psi_conv).re / TAU;
            if v < -1e-3 {
                return Err(Error::NonPositiveDensity { at: phi, value: v });
            }
            Ok(v.max(0.0))
        })
        .collect::<Result<_>>()?;
    CircleMeasure::normalized(vec![], Some(samples))
}

/// `K_ν` evaluated through the spectral layer, re-exported for symmetry with
/// the solver.
pub fn circle_transform(nu: &CircleMeasure, g: C64) -> Result<C64> {
    spectral::circle_cauchy(nu, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn atoms() -> CircleMeasure {
        CircleMeasure::new(vec![(0.4, 0.5), (2.5, 0.3), (4.0, 0.2)], None).unwrap()
    }

    #[test]
    fn round_trip_solve() {
        let nu = atoms();
        for g0 in [c(0.2, 0.0), c(-0.3, 0.4), c(0.0, 0.0), c(0.6, -0.5)] {
            let t = circle_transform(&nu, g0).unwrap();
            let e = disk_subordination_solve(&nu, t, 1e-12).unwrap();
            assert!((e.g - g0).norm() < 1e-10, "{g0}: {}", e.g);
            assert!(e.ball_margin > 0.0);
        }
    }

    #[test]
    fn dirac_closed_form() {
        let nu = CircleMeasure::new(vec![(0.0, 1.0)], None).unwrap();
        let e = disk_subordination_solve(&nu, c(2.0, 0.0), 1e-12).unwrap();
        assert!((e.g - 0.5).norm() < 1e-12);
    }

    #[test]
    fn symmetric_pair_by_bisection() {
        let nu = CircleMeasure::new(vec![(0.0, 0.5), (PI, 0.5)], None).unwrap();
        let target = 0.5 * (1.0 / 0.7 - 1.0 / 1.3);
        // K(g) = g/(1 - g²) is increasing on (-1, 1)
        let (mut lo, mut hi) = (-0.999f64, 0.999f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid / (1.0 - mid * mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let e = disk_subordination_solve(&nu, c(target, 0.0), 1e-12).unwrap();
        assert!((e.g - lo).norm() < 1e-10);
        assert!((e.g - 0.3).norm() < 1e-10);
    }

    #[test]
    fn haar_is_degenerate() {
        let h = CircleMeasure::haar(512).unwrap();
        assert!(matches!(disk_subordination_solve(&h, c(0.0, 0.0), 1e-10), Err(Error::DegenerateTransform)));
    }

    #[test]
    fn origin_target_gives_origin() {
        let nu = atoms();
        let e = disk_subordination_solve(&nu, nu.moment(-1), 1e-12).unwrap();
        assert!(e.g.norm() < 1e-10);
    }

    #[test]
    fn unreachable_target_fails() {
        let nu = CircleMeasure::new(vec![(0.0, 1.0)], None).unwrap();
        // 1/(1 - g) never has real part below 1/2 on the disk
        assert!(disk_subordination_solve(&nu, c(0.1, 0.0), 1e-12).is_err());
    }

    #[test]
    fn psi_matches_conjugate_cauchy() {
        let nu = atoms();
        let conj = nu.conjugate();
        for w in [c(0.3, 0.1), c(-0.5, 0.5), c(0.0, -0.8)] {
            let lhs = psi_transform(&nu, w).unwrap();
            let series: C64 = (1..200).map(|k| nu.moment(k) * w.powi(k)).sum();
            assert!((lhs - series).norm() < 1e-12);
            assert!((w * spectral::circle_cauchy(&conj, w).unwrap() - lhs).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation() {
        let mu = atoms();
        let theta = 0.9;
        let rot = CircleMeasure::new(vec![(theta, 1.0)], None).unwrap();
        let conv = free_mult_convolve_unitary(&mu, &rot, 8, 1e-12).unwrap();
        for k in 1..=8 {
            let want = C64::from_polar(1.0, k as f64 * theta) * mu.moment(k as i32);
            assert!((conv.moments[k] - want).norm() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn haar_absorbs() {
        let h = CircleMeasure::haar(256).unwrap();
        let conv = free_mult_convolve_unitary(&h, &atoms(), 10, 1e-12).unwrap();
        for k in 1..=10 {
            assert!(conv.moments[k].norm() < 1e-10);
        }
    }

    #[test]
    fn first_moment_factorizes() {
        let mu = atoms();
        let nu = CircleMeasure::new(vec![(1.0, 0.25), (3.0, 0.75)], None).unwrap();
        let conv = free_mult_convolve_unitary(&mu, &nu, 3, 1e-12).unwrap();
        assert!((conv.moments[1] - mu.moment(1) * nu.moment(1)).norm() < 1e-12);
        // second moment of a product of free elements:
        // m2(uv) = m2(u) m1(v)² + m1(u)² m2(v) - m1(u)² m1(v)²
        let (a1, a2, b1, b2) = (mu.moment(1), mu.moment(2), nu.moment(1), nu.moment(2));
        let want = a2 * b1 * b1 + a1 * a1 * b2 - a1 * a1 * b1 * b1;
        assert!((conv.moments[2] - want).norm() < 1e-12);
    }

    #[test]
    fn density_of_rotated_smooth_law() {
        let mu = CircleMeasure::from_density_fn(256, |a| (1.0 + 0.6 * a.cos()) / TAU).unwrap();
        let h = CircleMeasure::haar(256).unwrap();
        let d = free_mult_convolve_density(&mu, &h, 128, 0.9, 1e-12).unwrap();
        for s in d.density().unwrap() {
            assert!((s - 1.0 / TAU).abs() < 1e-9);
        }
    }
}
