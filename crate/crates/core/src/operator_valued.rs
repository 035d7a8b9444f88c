//! Matrix-valued Cauchy transforms of operator-valued semicircular elements
//! and the subordination map between them.
//!
//! Over `B = M_n(ℂ)` a semicircular element with covariance
//! `η(b) = Σ_j k_j b k_j*` has transform `𝒢(b) = E_B((b - X)^{-1})`, the
//! unique solution in the lower half-plane of `𝒢 = (b - η(𝒢))^{-1}`.
//! Sums of free semicirculars are semicircular with the summed covariance,
//! which gives `𝒢_{X+Y}` without going through any subordination map.

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{self, OperatorPoint};
use crate::linalg::{self, CMat};
use crate::{Error, Result};

type C64 = Complex64;

pub const DEFAULT_N_MAX: usize = 8;
const MAX_ITER: usize = 2000;

/// Completely positive map `b ↦ Σ_j k_j b k_j*` given by Kraus operators.
#[derive(Clone, Debug)]
pub struct CovarianceMap {
    n: usize,
    kraus: Vec<CMat>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CovarianceRecord {
    n: usize,
    kraus: Vec<Vec<Vec<[f64; 2]>>>,
}

impl CovarianceMap {
    pub fn new(n: usize, kraus: Vec<CMat>) -> Result<Self> {
        Self::with_cap(n, kraus, DEFAULT_N_MAX)
    }

    pub fn with_cap(n: usize, kraus: Vec<CMat>, cap: usize) -> Result<Self> {
        if n == 0 || n > cap {
            return Err(Error::BadParams(format!("dimension {n} outside 1..={cap}")));
        }
        for k in &kraus {
            if k.nrows() != n || k.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: format!("{n}×{n} Kraus operators"),
                    found: format!("{}×{}", k.nrows(), k.ncols()),
                });
            }
            if !linalg::is_finite(k) {
                return Err(Error::BadParams("Kraus operator has non-finite entries".into()));
            }
        }
        Ok(Self { n, kraus })
    }

    pub fn zero(n: usize) -> Self {
        Self { n, kraus: vec![] }
    }

    /// `η(b) = σ·b`, i.e. the scalar semicircle of variance σ when n = 1.
    pub fn scalar(n: usize, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::BadParams(format!("variance {variance} is negative")));
        }
        Self::new(n, vec![linalg::scalar(n, C64::new(variance.sqrt(), 0.0))])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    pub fn apply(&self, b: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for k in &self.kraus {
            out += k * b * k.adjoint();
        }
        out
    }

    /// Trace dual `b ↦ Σ_j k_j* b k_j`.
    pub fn apply_dual(&self, b: &CMat) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for k in &self.kraus {
            out += k.adjoint() * b * k;
        }
        out
    }

    /// Covariance of the sum of free semicirculars: Kraus concatenation.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: format!("dimension {}", self.n),
                found: other.n.to_string(),
            });
        }
        let mut kraus = self.kraus.clone();
        kraus.extend(other.kraus.iter().cloned());
        Ok(Self { n: self.n, kraus })
    }

    /// `½(η + η^dual)`, the covariance realised by a block model whose
    /// conditional expectation preserves the normalised trace.
    pub fn symmetrized(&self) -> Self {
        let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut kraus: Vec<CMat> = self.kraus.iter().map(|k| linalg::scale(k, s)).collect();
        kraus.extend(self.kraus.iter().map(|k| linalg::scale(&linalg::adjoint(k), s)));
        Self { n: self.n, kraus }
    }

    /// Largest deviation between `η` and its trace dual on the matrix units.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let e = Mat::from_fn(self.n, self.n, |r, c| {
                    if (r, c) == (i, j) {
                        C64::new(1.0, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                });
                worst = worst.max(linalg::max_abs_diff(&self.apply(&e), &self.apply_dual(&e)));
            }
        }
        worst
    }

    pub fn to_json(&self) -> Result<String> {
        let record = CovarianceRecord {
            n: self.n,
            kraus: self
                .kraus
                .iter()
                .map(|k| {
                    linalg::to_rows(k)
                        .into_iter()
                        .map(|row| row.into_iter().map(|z| [z.re, z.im]).collect())
                        .collect()
                })
                .collect(),
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: CovarianceRecord = serde_json::from_str(s)?;
        Self::from_record(record)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        Self::from_record(serde_json::from_value(v)?)
    }

    fn from_record(record: CovarianceRecord) -> Result<Self> {
        let kraus = record
            .kraus
            .iter()
            .map(|m| {
                let rows: Vec<Vec<C64>> = m
                    .iter()
                    .map(|row| row.iter().map(|p| C64::new(p[0], p[1])).collect())
                    .collect();
                linalg::from_rows(&rows)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(record.n, kraus)
    }
}

#[derive(Clone, Debug)]
pub struct OpCauchyEval {
    pub b: CMat,
    pub g: CMat,
    /// `‖g - (b - η(g))^{-1}‖` in operator norm.
    pub residual: f64,
    pub iterations: usize,
}

fn check_upper(b: &CMat, n: usize) -> Result<()> {
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}×{n} argument"),
            found: format!("{}×{}", b.nrows(), b.ncols()),
        });
    }
    let p = OperatorPoint::new(b.clone())?;
    if !(domain::halfplane_margin(&p)? > 0.0) {
        return Err(Error::Domain("argument is not in the upper half-plane".into()));
    }
    Ok(())
}

/// `𝒢(b) = E_B((b - X)^{-1})` for the semicircular element with covariance
/// `eta`. Sign convention: resolvents are `(b - X)^{-1}`, so values lie in
/// the lower half-plane.
///
/// Averaged fixed-point iteration `g ← ½(g + (b - η(g))^{-1})` from `b^{-1}`
/// until the residual drops below 1e-3, then Newton with the exact
/// derivative `δ ↦ δ - Q η(δ) Q`, `Q = (b - η(g))^{-1}`.
pub fn op_semicircular_cauchy(eta: &CovarianceMap, b: &CMat, tol: f64) -> Result<OpCauchyEval> {
    let n = eta.dim();
    check_upper(b, n)?;
    if !(tol > 0.0) {
        return Err(Error::BadParams(format!("tolerance {tol} must be positive")));
    }
    let resolvent = |g: &CMat| linalg::inverse(&(b - eta.apply(g)));
    let mut g = linalg::inverse(b);
    let mut q = resolvent(&g);
    let mut iterations = 0;
    let mut r = linalg::frobenius(&(&g - &q));
    while r >= 1e-3 {
        if iterations >= MAX_ITER {
            return Err(Error::no_convergence(iterations, r).at("operator-valued fixed point"));
        }
        g = linalg::scale(&(&g + &q), C64::new(0.5, 0.0));
        q = resolvent(&g);
        r = linalg::frobenius(&(&g - &q));
        iterations += 1;
    }

    let target = 1e-3 * tol;
    let mut stalls = 0;
    while r > target && iterations < MAX_ITER {
        iterations += 1;
        // J = I - Σ_j (k_j* Q)^T ⊗ (Q k_j), acting on column-major vec
        let m = n * n;
        let mut jac = linalg::identity(m);
        for k in eta.kraus() {
            let left = (k.adjoint() * &q).transpose().to_owned();
            let right = &q * k;
            jac -= linalg::kron(&left, &right);
        }
        let phi = &g - &q;
        let rhs: Vec<C64> = linalg::vectorize(&phi).into_iter().map(|v| -v).collect();
        let step = linalg::unvectorize(&linalg::solve(&jac, &rhs), n);
        let cand = &g + &step;
        let q_cand = resolvent(&cand);
        let r_cand = linalg::frobenius(&(&cand - &q_cand));
        if !(r_cand < r) {
            stalls += 1;
            if stalls > 2 {
                break;
            }
            continue;
        }
        g = cand;
        q = q_cand;
        r = r_cand;
    }
    let residual = linalg::opnorm(&(&g - &q))?;
    if !(residual <= tol) {
        return Err(Error::no_convergence(iterations, residual).at("operator-valued fixed point"));
    }
    let neg = OperatorPoint::new(linalg::scale(&g, C64::new(-1.0, 0.0)))?;
    if !(domain::halfplane_margin(&neg)? > 0.0) {
        return Err(Error::Invariant("transform value left the lower half-plane".into()));
    }
    Ok(OpCauchyEval {
        b: b.clone(),
        g,
        residual,
        iterations,
    })
}

/// `𝒢_{X+Y}(b)` for free semicirculars, through the summed covariance.
pub fn op_add_cauchy(eta_x: &CovarianceMap, eta_y: &CovarianceMap, b: &CMat, tol: f64) -> Result<OpCauchyEval> {
    op_semicircular_cauchy(&eta_x.concat(eta_y)?, b, tol)
}

#[derive(Clone, Debug)]
pub struct SubordinationMapEval {
    /// The solved point `F(b)`.
    pub value: CMat,
    /// `‖𝒢_X(F(b)) - g_target‖` in operator norm.
    pub residual: f64,
    pub iterations: usize,
    /// Smallest eigenvalue of `Im F(b)`.
    pub halfplane_margin: f64,
}

fn to_real(a: &CMat) -> Vec<f64> {
    let v = linalg::vectorize(a);
    v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect()
}

fn from_real(x: &[f64], n: usize) -> CMat {
    let m = n * n;
    let v: Vec<C64> = (0..m).map(|i| C64::new(x[i], x[m + i])).collect();
    linalg::unvectorize(&v, n)
}

fn real_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Finds `F` in the upper half-plane with `𝒢_X(F) = g_target`, by Newton's
/// method from `b_start` on the `2n²` real coordinates with a forward
/// difference Jacobian (step `1e-6·max(1, max |F_ij|)`).
///
/// Steps are halved until the iterate stays in the upper half-plane and the
/// residual decreases.
pub fn solve_subordination_map<G>(transform: G, g_target: &CMat, b_start: &CMat, tol: f64) -> Result<SubordinationMapEval>
where
    G: Fn(&CMat) -> Result<CMat>,
{
    let n = g_target.nrows();
    check_upper(b_start, n)?;
    let neg = OperatorPoint::new(linalg::scale(g_target, C64::new(-1.0, 0.0)))?;
    if !(domain::halfplane_margin(&neg)? > 0.0) {
        return Err(Error::Domain("target is not in the lower half-plane".into()));
    }
    let in_upper = |f: &CMat| -> bool {
        OperatorPoint::new(f.clone())
            .and_then(|p| domain::halfplane_margin(&p))
            .map_or(false, |m| m > 0.0)
    };
    let residual_of = |f: &CMat| -> Result<Vec<f64>> { Ok(to_real(&(transform(f)? - g_target))) };

    let dim = 2 * n * n;
    let mut x = to_real(b_start);
    let mut res = residual_of(b_start)?;
    let mut iterations = 0;
    let target = 1e-2 * tol;
    while real_norm(&res) > target {
        if iterations >= 100 {
            break;
        }
        iterations += 1;
        let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let h = 1e-6 * scale;
        let mut jac = Mat::<f64>::zeros(dim, dim);
        for col in 0..dim {
            let mut xp = x.clone();
            xp[col] += h;
            let rp = residual_of(&from_real(&xp, n))?;
            for row in 0..dim {
                jac[(row, col)] = (rp[row] - res[row]) / h;
            }
        }
        let sv = linalg::real_singular_values(&jac)?;
        let rcond = sv.last().unwrap() / sv[0];
        if !(rcond >= 1e-12) {
            return Err(Error::JacobianSingular { rcond });
        }
        let rhs: Vec<f64> = res.iter().map(|v| -v).collect();
        let mut step = linalg::solve_real(&jac, &rhs);
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + s).collect();
            let f = from_real(&cand, n);
            if in_upper(&f) {
                if let Ok(rc) = residual_of(&f) {
                    if real_norm(&rc) < real_norm(&res) {
                        x = cand;
                        res = rc;
                        accepted = true;
                        break;
                    }
                }
            }
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
        if !accepted {
            break;
        }
    }
    let value = from_real(&x, n);
    let residual = linalg::opnorm(&from_real(&res, n))?;
    if !(residual <= tol) {
        return Err(Error::no_convergence(iterations, residual).at("subordination map"));
    }
    let halfplane_margin = domain::halfplane_margin(&OperatorPoint::new(value.clone())?)?;
    if !(halfplane_margin > 0.0) {
        return Err(Error::Invariant(format!(
            "subordination value left the upper half-plane (margin {halfplane_margin:e})"
        )));
    }
    Ok(SubordinationMapEval {
        value,
        residual,
        iterations,
        halfplane_margin,
    })
}

/// Subordination point for free semicirculars: inverts `𝒢_X` at the value
/// `𝒢_{X+Y}(b)` obtained from the summed covariance, starting from `b`.
pub fn semicircular_subordination(
    eta_x: &CovarianceMap,
    eta_y: &CovarianceMap,
    b: &CMat,
    tol: f64,
) -> Result<SubordinationMapEval> {
    let inner = (1e-3 * tol).max(1e-14);
    let g_sum = op_add_cauchy(eta_x, eta_y, b, inner)?.g;
    solve_subordination_map(|f| Ok(op_semicircular_cauchy(eta_x, f, inner)?.g), &g_sum, b, tol)
}

/// For a semicircular `Y` the subordination point is explicit:
/// `F(b) = b - η_Y(𝒢_{X+Y}(b))`.
pub fn semicircular_subordination_closed_form(
    eta_x: &CovarianceMap,
    eta_y: &CovarianceMap,
    b: &CMat,
    tol: f64,
) -> Result<CMat> {
    let g_sum = op_add_cauchy(eta_x, eta_y, b, tol)?.g;
    Ok(b - eta_y.apply(&g_sum))
}

/// `λ_min(Im F) - λ_min(Im b)`; nonnegative in the scalar case.
pub fn imaginary_gain(f: &CMat, b: &CMat) -> Result<f64> {
    Ok(linalg::min_eigenvalue(&linalg::im_part(f))? - linalg::min_eigenvalue(&linalg::im_part(b))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_rows, max_abs_diff, I};
    use crate::spectral::semicircle_cauchy_closed_form;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_map(seed: u64, n: usize, terms: usize) -> CovarianceMap {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let kraus = (0..terms)
            .map(|_| Mat::from_fn(n, n, |_, _| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5))))
            .collect();
        CovarianceMap::new(n, kraus).unwrap()
    }

    #[test]
    fn zero_covariance_is_inverse() {
        let b = from_rows(&[vec![c(0.3, 1.0), c(0.1, 0.0)], vec![c(0.1, 0.0), c(-0.5, 2.0)]]).unwrap();
        let e = op_semicircular_cauchy(&CovarianceMap::zero(2), &b, 1e-12).unwrap();
        assert!(max_abs_diff(&e.g, &linalg::inverse(&b)) < 1e-14);
    }

    #[test]
    fn scalar_semicircle() {
        let eta = CovarianceMap::scalar(1, 1.0).unwrap();
        let e = op_semicircular_cauchy(&eta, &linalg::scalar(1, I), 1e-13).unwrap();
        assert!((e.g[(0, 0)] - c(0.0, (1.0 - 5f64.sqrt()) / 2.0)).norm() < 1e-12);
    }

    #[test]
    fn diagonal_decouples() {
        let (s1, s2) = (0.5f64, 2.0f64);
        let eta = CovarianceMap::new(
            2,
            vec![
                linalg::diag(&[c(s1.sqrt(), 0.0), c(0.0, 0.0)]),
                linalg::diag(&[c(0.0, 0.0), c(s2.sqrt(), 0.0)]),
            ],
        )
        .unwrap();
        let (z1, z2) = (c(0.4, 1.0), c(-1.0, 0.5));
        let e = op_semicircular_cauchy(&eta, &linalg::diag(&[z1, z2]), 1e-13).unwrap();
        assert!((e.g[(0, 0)] - semicircle_cauchy_closed_form(0.0, s1, z1)).norm() < 1e-12);
        assert!((e.g[(1, 1)] - semicircle_cauchy_closed_form(0.0, s2, z2)).norm() < 1e-12);
        assert!(e.g[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn variances_add() {
        let x = CovarianceMap::scalar(1, 0.7).unwrap();
        let y = CovarianceMap::scalar(1, 1.8).unwrap();
        let z = c(0.3, 0.8);
        let e = op_add_cauchy(&x, &y, &linalg::scalar(1, z), 1e-13).unwrap();
        assert!((e.g[(0, 0)] - semicircle_cauchy_closed_form(0.0, 2.5, z)).norm() < 1e-12);
        let swapped = op_add_cauchy(&y, &x, &linalg::scalar(1, z), 1e-13).unwrap();
        assert!(max_abs_diff(&e.g, &swapped.g) <= 1e-12);
    }

    #[test]
    fn large_argument_normalization() {
        let eta = sample_map(3, 3, 2);
        for t in [16.0, 32.0, 64.0] {
            let b = linalg::scalar(3, c(0.0, t));
            let e = op_semicircular_cauchy(&eta, &b, 1e-13).unwrap();
            let dev = linalg::opnorm(&linalg::shift(&(&b * &e.g), c(-1.0, 0.0))).unwrap();
            let eta_norm = linalg::opnorm(&eta.apply(&linalg::identity(3))).unwrap();
            assert!(dev <= 2.0 * eta_norm / (t * t), "t={t}: {dev}");
        }
    }

    #[test]
    fn trivial_second_summand_gives_identity_map() {
        let x = sample_map(5, 2, 2);
        let b = from_rows(&[vec![c(0.2, 1.0), c(0.3, 0.1)], vec![c(0.3, -0.1), c(-0.4, 1.5)]]).unwrap();
        let f = semicircular_subordination(&x, &CovarianceMap::zero(2), &b, 1e-10).unwrap();
        assert!(max_abs_diff(&f.value, &b) <= 1e-10);
    }

    #[test]
    fn semicircular_second_summand_closed_form() {
        let x = sample_map(7, 3, 2);
        let y = sample_map(8, 3, 1);
        let b = linalg::shift(&sample_map(9, 3, 1).kraus()[0], c(0.0, 0.8));
        let f = semicircular_subordination(&x, &y, &b, 1e-10).unwrap();
        let closed = semicircular_subordination_closed_form(&x, &y, &b, 1e-14).unwrap();
        assert!(max_abs_diff(&f.value, &closed) <= 1e-8);
        assert!(imaginary_gain(&closed, &b).unwrap() >= -1e-12);
    }

    #[test]
    fn json_round_trip() {
        let m = sample_map(11, 2, 3);
        let back = CovarianceMap::from_json(&m.to_json().unwrap()).unwrap();
        for (a, b) in m.kraus().iter().zip(back.kraus()) {
            assert_eq!(max_abs_diff(a, b), 0.0);
        }
        assert!(CovarianceMap::from_json(r#"{"n":2,"kraus":[],"extra":0}"#).is_err());
        assert!(CovarianceMap::from_json(r#"{"n":2,"kraus":[[[[1,0]]]]}"#).is_err());
    }

    #[test]
    fn symmetrization_is_self_dual() {
        let m = sample_map(12, 3, 2);
        assert!(m.asymmetry() > 1e-3);
        assert!(m.symmetrized().asymmetry() < 1e-14);
    }

    #[test]
    fn rejects_lower_half_plane() {
        let eta = CovarianceMap::scalar(1, 1.0).unwrap();
        assert!(matches!(
            op_semicircular_cauchy(&eta, &linalg::scalar(1, c(0.0, -1.0)), 1e-10),
            Err(Error::Domain(_))
        ));
    }
}
