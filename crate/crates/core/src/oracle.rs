//! Seeded random-matrix models in which freeness holds asymptotically, and
//! the Monte Carlo experiments built on them.
//!
//! Every trial draws from its own ChaCha stream `(seed, trial)`. Trials are
//! reduced in fixed chunks of eight (pairwise within a chunk, sequentially
//! across chunks), so reports are bit-identical for a given seed whatever
//! the thread count.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{self, OperatorPoint};
use crate::linalg::{self, CMat};
use crate::multiplicative;
use crate::operator_valued::{self, CovarianceMap};
use crate::spectral::{self, CircleMeasure, Measure, StandardMeasure};
use crate::{Error, Result};

type C64 = Complex64;

const CHUNK: usize = 8;
/// Stream reserved for draws shared by all trials (e.g. a fixed centre).
const SHARED_STREAM: u64 = u64::MAX;
/// Residuals this close to their tolerance are reported as boundary cases.
pub const VERDICT_BAND: f64 = 1e-9;

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    C64::new(x, y) * FRAC_1_SQRT_2
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the
/// phases of `diag(R)` moved into `Q`.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g: CMat = Mat::from_fn(n, n, |_, _| complex_normal(rng));
    let qr = g.qr();
    let mut q = qr.compute_Q();
    let r = qr.R();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// GUE with `E|H_ij|² = 1/N`; spectral law tends to the standard semicircle.
pub fn gue<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    let mut h = CMat::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let z = complex_normal(rng) * s;
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
        let d: f64 = StandardNormal.sample(rng);
        h[(j, j)] = C64::new(d * s, 0.0);
    }
    h
}

/// Ginibre matrix with `E|Z_ij|² = 1/N`.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let s = 1.0 / (n as f64).sqrt();
    Mat::from_fn(n, n, |_, _| complex_normal(rng) * s)
}

/// `U·diag(d)·U*`.
pub fn conjugate_diagonal(u: &CMat, d: &[C64]) -> CMat {
    let n = u.nrows();
    let scaled = Mat::from_fn(n, n, |i, j| u[(i, j)] * d[j]);
    scaled * u.adjoint()
}

pub enum EnsembleKind {
    Gue,
    HaarUnitary,
    /// `U·diag(eigenvalues)·U*` with `U` Haar.
    RotatedDeterministic(Vec<f64>),
    /// `V·diag(e^{iθ_j})·V*` with `V` Haar and `θ_j` drawn from the law.
    PhaseUnitary(CircleMeasure),
}

pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n: usize,
    pub seed: u64,
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn draw<R: Rng + ?Sized>(kind: &EnsembleKind, n: usize, rng: &mut R) -> Result<CMat> {
    Ok(match kind {
        EnsembleKind::Gue => gue(rng, n),
        EnsembleKind::HaarUnitary => haar_unitary(rng, n),
        EnsembleKind::RotatedDeterministic(eig) => {
            if eig.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: format!("{n} eigenvalues"),
                    found: eig.len().to_string(),
                });
            }
            let u = haar_unitary(rng, n);
            let d: Vec<C64> = eig.iter().map(|&e| C64::new(e, 0.0)).collect();
            conjugate_diagonal(&u, &d)
        }
        EnsembleKind::PhaseUnitary(law) => phase_unitary(rng, law, n),
    })
}

fn phase_unitary<R: Rng + ?Sized>(rng: &mut R, law: &CircleMeasure, n: usize) -> CMat {
    let v = haar_unitary(rng, n);
    let d: Vec<C64> = (0..n).map(|_| C64::from_polar(1.0, law.sample_angle(rng))).collect();
    conjugate_diagonal(&v, &d)
}

/// One draw, deterministic in `(kind, n, seed)`.
pub fn sample(spec: &EnsembleSpec) -> Result<CMat> {
    if spec.n < 2 {
        return Err(Error::BadParams(format!("matrix size {} below 2", spec.n)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    draw(&spec.kind, spec.n, &mut rng)
}

/// `(id_n ⊗ N^{-1}Tr_N)(Z)` for `Z` of size nN with the `n` index slow.
pub fn partial_trace(z: &CMat, n: usize, big_n: usize) -> Result<CMat> {
    if n == 0 || big_n == 0 || z.nrows() != n * big_n || z.ncols() != n * big_n {
        return Err(Error::DimensionMismatch {
            expected: format!("{0}×{0} matrix", n * big_n),
            found: format!("{}×{}", z.nrows(), z.ncols()),
        });
    }
    let inv = 1.0 / big_n as f64;
    Ok(Mat::from_fn(n, n, |i, j| {
        let s: C64 = (0..big_n).map(|k| z[(i * big_n + k, j * big_n + k)]).sum();
        s * inv
    }))
}

fn add_all(acc: &mut [CMat], other: &[CMat]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

fn pairwise_sum(mut items: Vec<Vec<CMat>>) -> Vec<CMat> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                add_all(&mut a, &b);
            }
            next.push(a);
        }
        items = next;
    }
    items.pop().unwrap_or_default()
}

/// Averages the matrices returned by `trial` over `trials` independent
/// streams of `seed`.
pub fn monte_carlo_mean<F>(seed: u64, trials: usize, trial: F) -> Result<Vec<CMat>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<CMat>> + Sync,
{
    if trials == 0 {
        return Err(Error::BadParams("at least one trial is required".into()));
    }
    let mut total: Option<Vec<CMat>> = None;
    for start in (0..trials).step_by(CHUNK) {
        let end = (start + CHUNK).min(trials);
        let results: Vec<Vec<CMat>> = (start..end)
            .into_par_iter()
            .map(|t| trial(&mut trial_rng(seed, t as u64)))
            .collect::<Result<_>>()?;
        let chunk = pairwise_sum(results);
        match &mut total {
            None => total = Some(chunk),
            Some(acc) => add_all(acc, &chunk),
        }
    }
    let scale = C64::new(1.0 / trials as f64, 0.0);
    Ok(total.unwrap().iter().map(|m| linalg::scale(m, scale)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Identity {
    /// Haar-averaged resolvent relative to a deterministic matrix.
    #[serde(rename = "prop32")]
    ConditionalResolvent,
    /// Scalar correction of a resolvent conditioned on one summand.
    #[serde(rename = "prop33")]
    MarkovianResolvent,
    /// Disk subordination for a free unitary.
    #[serde(rename = "thm36")]
    UnitarySubordination,
    /// Norm versus resolvent criterion for contractions.
    #[serde(rename = "lemma34")]
    ContractionCriterion,
    /// Operator-valued subordination in a block model.
    #[serde(rename = "thm31_block")]
    BlockAdditiveSubordination,
}

impl Identity {
    pub const ALL: [Identity; 5] = [
        Identity::ConditionalResolvent,
        Identity::MarkovianResolvent,
        Identity::UnitarySubordination,
        Identity::ContractionCriterion,
        Identity::BlockAdditiveSubordination,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            Identity::ConditionalResolvent => "prop32",
            Identity::MarkovianResolvent => "prop33",
            Identity::UnitarySubordination => "thm36",
            Identity::ContractionCriterion => "lemma34",
            Identity::BlockAdditiveSubordination => "thm31_block",
        }
    }

    /// Residual used for convergence-trend comparisons.
    pub fn primary_residual(self) -> &'static str {
        match self {
            Identity::ConditionalResolvent => "fit",
            Identity::MarkovianResolvent => "scalar_dev",
            Identity::UnitarySubordination => "haar_mean",
            Identity::ContractionCriterion => "violations",
            Identity::BlockAdditiveSubordination => "subordination",
        }
    }
}

impl fmt::Display for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

impl FromStr for Identity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Identity::ALL
            .into_iter()
            .find(|i| i.wire_name() == key)
            .ok_or_else(|| Error::BadParams(format!("unknown experiment `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Boundary,
}

impl Verdict {
    /// Fail if any residual exceeds its tolerance (or is NaN); boundary if
    /// none fails but one sits within the band of its tolerance. The band is
    /// relative for positive tolerances and absolute for zero ones; a count
    /// or shortfall that is exactly zero against a zero tolerance is a pass.
    pub fn evaluate(residuals: &BTreeMap<String, f64>, tolerances: &BTreeMap<String, f64>) -> Self {
        let mut boundary = false;
        for (name, r) in residuals {
            let tol = tolerances.get(name).copied().unwrap_or(0.0);
            let band = if tol > 0.0 { VERDICT_BAND * tol } else { VERDICT_BAND };
            if !(*r <= tol + band) {
                return Verdict::Fail;
            }
            if (r - tol).abs() <= band && !(*r == 0.0 && tol == 0.0) {
                boundary = true;
            }
        }
        if boundary {
            Verdict::Boundary
        } else {
            Verdict::Pass
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Boundary => "boundary",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Estimate {
    Real(f64),
    Complex { re: f64, im: f64 },
}

impl From<f64> for Estimate {
    fn from(v: f64) -> Self {
        Estimate::Real(v)
    }
}

impl From<C64> for Estimate {
    fn from(z: C64) -> Self {
        Estimate::Complex { re: z.re, im: z.im }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub identity: Identity,
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub estimates: BTreeMap<String, Estimate>,
    pub residuals: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    /// Auxiliary quantities that do not enter the verdict.
    pub diagnostics: BTreeMap<String, f64>,
    pub verdict: Verdict,
}

struct ReportBuilder {
    report: ExperimentReport,
}

impl ReportBuilder {
    fn new(identity: Identity, n: usize, trials: usize, seed: u64) -> Self {
        Self {
            report: ExperimentReport {
                identity,
                n,
                trials,
                seed,
                estimates: BTreeMap::new(),
                residuals: BTreeMap::new(),
                tolerances: BTreeMap::new(),
                diagnostics: BTreeMap::new(),
                verdict: Verdict::Pass,
            },
        }
    }

    fn estimate(&mut self, name: &str, v: impl Into<Estimate>) -> &mut Self {
        self.report.estimates.insert(name.into(), v.into());
        self
    }

    fn residual(&mut self, name: &str, value: f64, tol: f64) -> &mut Self {
        self.report.residuals.insert(name.into(), value);
        self.report.tolerances.insert(name.into(), tol);
        self
    }

    fn diagnostic(&mut self, name: &str, value: f64) -> &mut Self {
        self.report.diagnostics.insert(name.into(), value);
        self
    }

    fn finish(mut self) -> ExperimentReport {
        self.report.verdict = Verdict::evaluate(&self.report.residuals, &self.report.tolerances);
        self.report
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["identity".to_string(), "N".into(), "trials".into(), "seed".into()];
        cols.extend(self.residuals.keys().map(|k| format!("residual_{k}")));
        cols.push("verdict".into());
        cols.join(",")
    }

    /// One CSV row; numbers carry 17 significant digits.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![
            self.identity.to_string(),
            self.n.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
        ];
        cols.extend(self.residuals.values().map(|v| fmt_num(*v)));
        cols.push(self.verdict.to_string());
        cols.join(",")
    }

    pub fn residual(&self, name: &str) -> Option<f64> {
        self.residuals.get(name).copied()
    }

    pub fn primary_residual(&self) -> Option<f64> {
        self.residual(self.identity.primary_residual())
    }
}

fn balanced_signs(n: usize) -> Vec<f64> {
    (0..n).map(|i| if i < n / 2 { 1.0 } else { -1.0 }).collect()
}

fn check_len(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} entries for {name}"),
            found: v.len().to_string(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::BadParams(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn check_size(n: usize, trials: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::BadParams(format!("matrix size {n} below 2")));
    }
    if trials == 0 {
        return Err(Error::BadParams("at least one trial is required".into()));
    }
    Ok(())
}

fn offdiag(m: &CMat) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { C64::new(0.0, 0.0) } else { m[(i, j)] })
}

/// Haar-averaged resolvent relative to a fixed diagonal matrix Λ.
///
/// The average of `(U(a0 + iε)U* - Λ)^{-1}` over Haar `U` should be a
/// function of Λ, namely `(f - Λ)^{-1}` for a scalar `f` in the upper
/// half-plane. Diagonal `a0` is no restriction: the model is invariant
/// under conjugating `a0` by a fixed unitary.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionalResolventConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    /// Diagonal of Λ; balanced ±1 when absent.
    pub lambda: Option<Vec<f64>>,
    /// Eigenvalues of `a0`; balanced ±1 when absent.
    pub a0: Option<Vec<f64>>,
    pub tolerance: f64,
    pub im_floor: f64,
}

impl Default for ConditionalResolventConfig {
    fn default() -> Self {
        Self {
            n: 600,
            trials: 200,
            seed: 1,
            eps: 1.0,
            lambda: None,
            a0: None,
            tolerance: 0.05,
            im_floor: 0.5,
        }
    }
}

/// Least-squares fit of `d_k ≈ (f - λ_k)^{-1}` by Gauss-Newton in `f`.
fn fit_scalar_resolvent(d: &[C64], lambda: &[f64]) -> C64 {
    let mut f: C64 = d.iter().zip(lambda).map(|(dk, l)| l + dk.inv()).sum::<C64>() / d.len() as f64;
    for _ in 0..100 {
        let mut num = C64::new(0.0, 0.0);
        let mut den = 0.0;
        for (dk, l) in d.iter().zip(lambda) {
            let q = (f - l).inv();
            let r = dk - q;
            // ∂r/∂f = (f - λ)^{-2}
            let j = q * q;
            num += j.conj() * r;
            den += j.norm_sqr();
        }
        let step = -num / den;
        f += step;
        if step.norm() <= 1e-15 * f.norm().max(1.0) {
            break;
        }
    }
    f
}

pub fn experiment_conditional_resolvent(cfg: &ConditionalResolventConfig) -> Result<ExperimentReport> {
    let n = cfg.n;
    check_size(n, cfg.trials)?;
    let lambda = cfg.lambda.clone().unwrap_or_else(|| balanced_signs(n));
    let a0 = cfg.a0.clone().unwrap_or_else(|| balanced_signs(n));
    check_len("lambda", &lambda, n)?;
    check_len("a0", &a0, n)?;
    let a: Vec<C64> = a0.iter().map(|&v| C64::new(v, cfg.eps)).collect();
    let mean = monte_carlo_mean(cfg.seed, cfg.trials, |rng| {
        let u = haar_unitary(rng, n);
        let mut m = conjugate_diagonal(&u, &a);
        for k in 0..n {
            m[(k, k)] -= lambda[k];
        }
        Ok(vec![linalg::inverse(&m)])
    })?
    .remove(0);

    let norm = linalg::opnorm(&mean)?;
    let off = offdiag(&mean);
    let off_diag = linalg::opnorm(&off)? / norm;
    let off_diag_tau = linalg::tau_norm(&off) / linalg::tau_norm(&mean);
    let d: Vec<C64> = (0..n).map(|k| mean[(k, k)]).collect();
    let f = fit_scalar_resolvent(&d, &lambda);
    let fit = d
        .iter()
        .zip(&lambda)
        .map(|(dk, l)| (dk - (f - l).inv()).norm())
        .fold(0.0, f64::max)
        / norm;

    let mut b = ReportBuilder::new(Identity::ConditionalResolvent, n, cfg.trials, cfg.seed);
    b.estimate("f", f)
        .estimate("off_diag", off_diag)
        .residual("off_diag", off_diag, cfg.tolerance)
        .residual("fit", fit, cfg.tolerance)
        .residual("im_f_shortfall", cfg.im_floor - f.im, 0.0)
        .diagnostic("off_diag_tau", off_diag_tau)
        .diagnostic("mean_norm", norm);
    Ok(b.finish())
}

/// `a = A0 + iε` fixed, `c = U(C0 + iε)U*` Haar rotated. The conditional
/// expectation onto the algebra of `a` is estimated by the Haar average
/// followed by the trace-preserving projection onto the functions of `A0`
/// (averaging over each eigenspace). `D = (E(a + c)^{-1})^{-1} - a` should
/// then be a scalar.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovianResolventConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    /// Eigenvalues of `A0`; balanced ±1 when absent.
    pub a0: Option<Vec<f64>>,
    /// Eigenvalues of `C0`; balanced ±1 when absent.
    pub c0: Option<Vec<f64>>,
    pub tolerance: f64,
    pub im_floor: f64,
}

impl Default for MarkovianResolventConfig {
    fn default() -> Self {
        Self {
            n: 600,
            trials: 200,
            seed: 1,
            eps: 1.0,
            a0: None,
            c0: None,
            tolerance: 0.05,
            im_floor: 0.4,
        }
    }
}

/// Index classes of equal entries (within `tol`) of a real vector.
fn eigenvalue_classes(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut classes: Vec<Vec<usize>> = vec![];
    for i in order {
        match classes.last_mut() {
            Some(c) if (values[i] - values[c[0]]).abs() <= tol => c.push(i),
            _ => classes.push(vec![i]),
        }
    }
    classes
}

/// Trace-preserving projection onto diagonal matrices constant on each
/// class.
fn project_onto_classes(m: &CMat, classes: &[Vec<usize>]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m.nrows()];
    for class in classes {
        let avg: C64 = class.iter().map(|&k| m[(k, k)]).sum::<C64>() / class.len() as f64;
        for &k in class {
            out[k] = avg;
        }
    }
    out
}

pub fn experiment_markovian_resolvent(cfg: &MarkovianResolventConfig) -> Result<ExperimentReport> {
    let n = cfg.n;
    check_size(n, cfg.trials)?;
    let a0 = cfg.a0.clone().unwrap_or_else(|| balanced_signs(n));
    let c0 = cfg.c0.clone().unwrap_or_else(|| balanced_signs(n));
    check_len("a0", &a0, n)?;
    check_len("c0", &c0, n)?;
    let a: Vec<C64> = a0.iter().map(|&v| C64::new(v, cfg.eps)).collect();
    let c: Vec<C64> = c0.iter().map(|&v| C64::new(v, cfg.eps)).collect();
    let mean = monte_carlo_mean(cfg.seed, cfg.trials, |rng| {
        let u = haar_unitary(rng, n);
        let mut m = conjugate_diagonal(&u, &c);
        for k in 0..n {
            m[(k, k)] += a[k];
        }
        Ok(vec![linalg::inverse(&m)])
    })?
    .remove(0);

    let classes = eigenvalue_classes(&a0, 1e-9);
    let projected = project_onto_classes(&mean, &classes);
    let d: Vec<C64> = projected.iter().zip(&a).map(|(p, ak)| p.inv() - ak).collect();
    let scalar = d.iter().sum::<C64>() / n as f64;
    let dev = d.iter().map(|dk| (dk - scalar).norm()).fold(0.0, f64::max);
    let d_norm = d.iter().map(|dk| dk.norm()).fold(0.0, f64::max);
    let scalar_dev = if d_norm > 0.0 { dev / d_norm } else { 0.0 };

    // the same statistic without the projection, for comparison
    let raw = linalg::inverse_checked(&mean, domain::SINGULAR_TOL)?;
    let raw_d = Mat::from_fn(n, n, |i, j| if i == j { raw[(i, j)] - a[i] } else { raw[(i, j)] });
    let raw_scalar = linalg::trace(&raw_d) / n as f64;
    let raw_dev = linalg::opnorm(&linalg::shift(&raw_d, -raw_scalar))? / linalg::opnorm(&raw_d)?;

    let mut b = ReportBuilder::new(Identity::MarkovianResolvent, n, cfg.trials, cfg.seed);
    b.estimate("scalar", scalar)
        .estimate("scalar_dev", scalar_dev)
        .residual("scalar_dev", scalar_dev, cfg.tolerance)
        .residual("im_scalar_shortfall", cfg.im_floor - scalar.im, 0.0)
        .diagnostic("unprojected_scalar_dev", raw_dev)
        .diagnostic("classes", classes.len() as f64);
    Ok(b.finish())
}

/// Centre `c0` of the resolvent `(u - c0)^{-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterSpec {
    Zero,
    /// `ρ·I`.
    Scalar { rho: C64 },
    /// `r·W` with `W` one Haar unitary drawn from the shared stream.
    ScaledHaar { radius: f64 },
}

impl CenterSpec {
    /// Subordination value forced in the large-N limit, when known: a
    /// central `c0` gives itself, and a Haar `c0` free from `u` gives 0
    /// (every alternating term of the Neumann series has zero trace).
    pub fn predicted_value(&self) -> Option<C64> {
        match self {
            CenterSpec::Zero | CenterSpec::ScaledHaar { .. } => Some(C64::new(0.0, 0.0)),
            CenterSpec::Scalar { rho } => Some(*rho),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitarySubordinationConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    /// Law of the eigenvalue angles of `u`.
    pub law: StandardMeasure,
    pub center: CenterSpec,
    /// Bound on `|m̂|` in the Haar case.
    pub haar_tolerance: f64,
    /// Bound on `|K(g) - m̂|` and on the distance to the predicted value.
    pub residual_tolerance: f64,
    /// Largest admissible `|g|`.
    pub radius_cap: f64,
    /// Grid size for a Haar law.
    pub grid_n: usize,
}

impl Default for UnitarySubordinationConfig {
    fn default() -> Self {
        Self {
            n: 600,
            trials: 100,
            seed: 1,
            law: StandardMeasure::HaarCircle,
            center: CenterSpec::ScaledHaar { radius: 0.7 },
            haar_tolerance: 0.05,
            residual_tolerance: 0.02,
            radius_cap: 0.99,
            grid_n: spectral::DEFAULT_GRID_N,
        }
    }
}

pub fn experiment_unitary_subordination(cfg: &UnitarySubordinationConfig) -> Result<ExperimentReport> {
    let n = cfg.n;
    check_size(n, cfg.trials)?;
    let law = match spectral::make_standard(&cfg.law, cfg.grid_n)? {
        Measure::Circle(m) => m,
        Measure::Line(_) => return Err(Error::BadParams("the angle law must live on the circle".into())),
    };
    let c0 = match &cfg.center {
        CenterSpec::Zero => CMat::zeros(n, n),
        CenterSpec::Scalar { rho } => linalg::scalar(n, *rho),
        CenterSpec::ScaledHaar { radius } => {
            let w = haar_unitary(&mut trial_rng(cfg.seed, SHARED_STREAM), n);
            linalg::scale(&w, C64::new(*radius, 0.0))
        }
    };
    let c_norm = linalg::opnorm(&c0)?;
    if !(c_norm <= 0.9 + 1e-12) {
        return Err(Error::BadParams(format!("centre norm {c_norm} exceeds 0.9")));
    }
    let inv_n = C64::new(1.0 / n as f64, 0.0);
    let mean = monte_carlo_mean(cfg.seed, cfg.trials, |rng| {
        let u = phase_unitary(rng, &law, n);
        let r = linalg::inverse(&(&u - &c0));
        Ok(vec![linalg::scalar(1, linalg::trace(&r) * inv_n)])
    })?;
    let m_hat = mean[0][(0, 0)];

    // the pair (u, c0) lies in the set where u - c0 is inverted by a
    // Neumann series; checked on one draw
    let u0 = phase_unitary(&mut trial_rng(cfg.seed, 0), &law, n);
    let omega = domain::quotient_ball_margin(&OperatorPoint::with_cap(u0, n)?, &OperatorPoint::with_cap(c0, n)?)?;

    let mut b = ReportBuilder::new(Identity::UnitarySubordination, n, cfg.trials, cfg.seed);
    b.estimate("m_hat", m_hat).diagnostic("omega_margin", omega);
    if law.is_haar_like(64, 1e-12) {
        b.residual("haar_mean", m_hat.norm(), cfg.haar_tolerance);
    } else {
        let e = multiplicative::disk_subordination_solve(&law, m_hat, 1e-12)?;
        b.estimate("g", e.g)
            .estimate("ball_margin", e.ball_margin)
            .residual("subordination_residual", (law.cauchy_unchecked(e.g) - m_hat).norm(), cfg.residual_tolerance)
            .residual("radius_excess", e.g.norm() - cfg.radius_cap, 0.0);
        if let Some(p) = cfg.center.predicted_value() {
            b.residual("prediction", (e.g - p).norm(), cfg.residual_tolerance);
        }
    }
    Ok(b.finish())
}

/// Lemma-style sweep over random matrices comparing the two contraction
/// criteria.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContractionCriterionConfig {
    pub dims: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Samples with `|1 - ‖x‖|` inside this band are not classified.
    pub band: f64,
    /// The resolvent identity is checked where `σ_min(1 - x)` exceeds this.
    pub conditioning_floor: f64,
    pub identity_tolerance: f64,
}

impl Default for ContractionCriterionConfig {
    fn default() -> Self {
        Self {
            dims: (1..=6).collect(),
            samples: 10_000,
            seed: 1,
            band: 1e-6,
            conditioning_floor: 0.25,
            identity_tolerance: 1e-11,
        }
    }
}

pub fn experiment_contraction_criterion(cfg: &ContractionCriterionConfig) -> Result<ExperimentReport> {
    if cfg.dims.is_empty() || cfg.dims.contains(&0) || cfg.samples == 0 {
        return Err(Error::BadParams("need positive dimensions and at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations = 0usize;
    let mut excluded = 0usize;
    let mut checked_identity = 0usize;
    let mut worst_identity = 0.0f64;
    let mut zero_ok = false;
    let mut unitary_ok = false;
    for s in 0..cfg.samples {
        let n = cfg.dims[s % cfg.dims.len()];
        let x = match s {
            0 => CMat::zeros(n, n),
            1 => linalg::scale(&haar_unitary(&mut rng, n), C64::new(1.5, 0.0)),
            _ => {
                let norm = rng.random_range(0.0..2.0);
                domain::random_with_norm(&mut rng, n, norm)
            }
        };
        let p = OperatorPoint::new(x.clone())?;
        let m = domain::contraction_margins(&p)?;
        match m.agree(cfg.band) {
            None => excluded += 1,
            Some(false) => violations += 1,
            Some(true) => {}
        }
        if s == 0 {
            zero_ok = m.norm_margin > 0.0 && m.resolvent_margin > 0.0;
        }
        if s == 1 {
            unitary_ok = m.norm_margin < 0.0 && m.resolvent_margin < 0.0;
        }
        let one_minus = linalg::shift(&linalg::scale(&x, C64::new(-1.0, 0.0)), C64::new(1.0, 0.0));
        if linalg::min_singular_value(&one_minus)? >= cfg.conditioning_floor {
            checked_identity += 1;
            worst_identity = worst_identity.max(domain::resolvent_identity_residual(&p)?);
        }
    }
    let mut b = ReportBuilder::new(Identity::ContractionCriterion, *cfg.dims.iter().max().unwrap(), cfg.samples, cfg.seed);
    b.estimate("violations", violations as f64)
        .estimate("excluded", excluded as f64)
        .estimate("identity_samples", checked_identity as f64)
        .residual("violations", violations as f64, 0.0)
        .residual("identity", worst_identity, cfg.identity_tolerance)
        .residual("anchor_failures", (!zero_ok) as u8 as f64 + (!unitary_ok) as u8 as f64, 0.0);
    Ok(b.finish())
}

/// Matrix rows as `[re, im]` pairs for configuration files.
pub type MatrixRows = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_pairs(rows: &MatrixRows) -> Result<CMat> {
    let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|p| C64::new(p[0], p[1])).collect()).collect();
    linalg::from_rows(&rows)
}

pub fn matrix_to_pairs(m: &CMat) -> MatrixRows {
    linalg::to_rows(m)
        .into_iter()
        .map(|r| r.into_iter().map(|z| [z.re, z.im]).collect())
        .collect()
}

/// Block model over `M_n`: `X = Σ_j (k_j ⊗ Z_j + k_j* ⊗ Z_j*)/√2` with
/// independent Ginibre `Z_j`, and `Y` likewise from fresh matrices. Its
/// conditional expectation onto `M_n ⊗ 1` is the normalised partial trace,
/// and it realises the semicircular element with the symmetrised
/// covariance `½Σ(k b k* + k* b k)`; the solver side uses the same map.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockAdditiveConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
    pub eta_x: serde_json::Value,
    pub eta_y: serde_json::Value,
    pub b: MatrixRows,
    pub tolerance: f64,
}

impl Default for BlockAdditiveConfig {
    fn default() -> Self {
        // rank-one Hermitian Kraus operators w w*
        let outer = |w: [C64; 2]| -> CMat { Mat::from_fn(2, 2, |i, j| w[i] * w[j].conj()) };
        let kx = outer([C64::new(1.0, 0.0), C64::new(0.5, 0.0)]);
        let ky = outer([C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        let map = |k: CMat| -> serde_json::Value {
            let json = CovarianceMap::new(2, vec![k]).unwrap().to_json().unwrap();
            serde_json::from_str(&json).unwrap()
        };
        Self {
            n: 512,
            trials: 100,
            seed: 1,
            eta_x: map(kx),
            eta_y: map(ky),
            b: matrix_to_pairs(&linalg::scalar(2, linalg::I)),
            tolerance: 0.05,
        }
    }
}

fn block_sample<R: Rng + ?Sized>(rng: &mut R, eta: &CovarianceMap, big_n: usize) -> CMat {
    let n = eta.dim();
    let mut x = CMat::zeros(n * big_n, n * big_n);
    let s = C64::new(FRAC_1_SQRT_2, 0.0);
    for k in eta.kraus() {
        let z = ginibre(rng, big_n);
        let term = linalg::kron(k, &z);
        x += &term;
        x += term.adjoint();
    }
    linalg::scale(&x, s)
}

pub fn experiment_block_additive(cfg: &BlockAdditiveConfig) -> Result<ExperimentReport> {
    let big_n = cfg.n;
    check_size(big_n, cfg.trials)?;
    let eta_x_in = CovarianceMap::from_json_value(cfg.eta_x.clone())?;
    let eta_y_in = CovarianceMap::from_json_value(cfg.eta_y.clone())?;
    let b = matrix_from_pairs(&cfg.b)?;
    let n = eta_x_in.dim();
    if eta_y_in.dim() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("dimension {n} throughout"),
            found: format!("{} and {}×{}", eta_y_in.dim(), b.nrows(), b.ncols()),
        });
    }
    if n * big_n > 4096 {
        return Err(Error::BadParams(format!("block size {} exceeds 4096", n * big_n)));
    }
    let margin = domain::halfplane_margin(&OperatorPoint::new(b.clone())?)?;
    if !(margin >= 0.5) {
        return Err(Error::BadParams(format!("Im b must be at least 0.5 (margin {margin})")));
    }
    let eta_x = eta_x_in.symmetrized();
    let eta_y = eta_y_in.symmetrized();
    let sub = operator_valued::semicircular_subordination(&eta_x, &eta_y, &b, 1e-10)?;
    let f = sub.value.clone();

    let one = linalg::identity(big_n);
    let b_big = linalg::kron(&b, &one);
    let f_big = linalg::kron(&f, &one);
    let means = monte_carlo_mean(cfg.seed, cfg.trials, |rng| {
        let x = block_sample(rng, &eta_x, big_n);
        let y = block_sample(rng, &eta_y, big_n);
        let sum = linalg::inverse(&(&(&b_big - &x) - &y));
        let single = linalg::inverse(&(&f_big - &x));
        Ok(vec![partial_trace(&sum, n, big_n)?, partial_trace(&single, n, big_n)?])
    })?;
    let (g_sum_mc, g_x_mc) = (&means[0], &means[1]);
    let g_sum = operator_valued::op_add_cauchy(&eta_x, &eta_y, &b, 1e-13)?.g;
    let g_x = operator_valued::op_semicircular_cauchy(&eta_x, &f, 1e-13)?.g;

    let mut r = ReportBuilder::new(Identity::BlockAdditiveSubordination, big_n, cfg.trials, cfg.seed);
    r.estimate("g_sum_00", g_sum_mc[(0, 0)])
        .estimate("f_00", f[(0, 0)])
        .residual("subordination", linalg::opnorm(&(g_sum_mc - g_x_mc))?, cfg.tolerance)
        .residual("model_sum", linalg::opnorm(&(g_sum_mc - &g_sum))?, cfg.tolerance)
        .residual("model_x", linalg::opnorm(&(g_x_mc - &g_x))?, cfg.tolerance)
        .diagnostic("f_halfplane_margin", sub.halfplane_margin)
        .diagnostic("im_gain", operator_valued::imaginary_gain(&f, &b)?)
        .diagnostic("solver_residual", sub.residual)
        .diagnostic("input_asymmetry", eta_x_in.asymmetry().max(eta_y_in.asymmetry()));
    Ok(r.finish())
}

/// Default configuration of an experiment as a JSON object.
pub fn default_config(identity: Identity) -> serde_json::Value {
    let v = match identity {
        Identity::ConditionalResolvent => serde_json::to_value(ConditionalResolventConfig::default()),
        Identity::MarkovianResolvent => serde_json::to_value(MarkovianResolventConfig::default()),
        Identity::UnitarySubordination => serde_json::to_value(UnitarySubordinationConfig::default()),
        Identity::ContractionCriterion => serde_json::to_value(ContractionCriterionConfig::default()),
        Identity::BlockAdditiveSubordination => serde_json::to_value(BlockAdditiveConfig::default()),
    };
    v.expect("default configurations serialise")
}

/// Runs the experiment for `identity` with a JSON configuration; absent
/// fields take their defaults, unknown ones are rejected.
pub fn run_experiment(identity: Identity, config: serde_json::Value) -> Result<ExperimentReport> {
    match identity {
        Identity::ConditionalResolvent => experiment_conditional_resolvent(&serde_json::from_value(config)?),
        Identity::MarkovianResolvent => experiment_markovian_resolvent(&serde_json::from_value(config)?),
        Identity::UnitarySubordination => experiment_unitary_subordination(&serde_json::from_value(config)?),
        Identity::ContractionCriterion => experiment_contraction_criterion(&serde_json::from_value(config)?),
        Identity::BlockAdditiveSubordination => experiment_block_additive(&serde_json::from_value(config)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_is_unitary_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = haar_unitary(&mut rng, 512);
        let prod = u.adjoint() * &u;
        assert!(linalg::max_abs_diff(&prod, &linalg::identity(512)) <= 1e-12);
        assert!((linalg::trace(&u) / 512.0).norm() <= 0.15);
    }

    #[test]
    fn gue_second_moment() {
        let h = sample(&EnsembleSpec {
            kind: EnsembleKind::Gue,
            n: 512,
            seed: 4,
        })
        .unwrap();
        let m2 = linalg::trace(&(&h * &h)).re / 512.0;
        assert!((m2 - 1.0).abs() <= 0.1);
        assert!(linalg::max_abs_diff(&h, &linalg::adjoint(&h)) == 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = |seed| EnsembleSpec {
            kind: EnsembleKind::RotatedDeterministic(vec![1.0, 2.0, 3.0, 4.0]),
            n: 4,
            seed,
        };
        let a = sample(&spec(9)).unwrap();
        let b = sample(&spec(9)).unwrap();
        assert_eq!(linalg::max_abs_diff(&a, &b), 0.0);
        assert!(linalg::max_abs_diff(&a, &sample(&spec(10)).unwrap()) > 0.0);
        assert!(sample(&EnsembleSpec {
            kind: EnsembleKind::Gue,
            n: 1,
            seed: 0
        })
        .is_err());
    }

    #[test]
    fn partial_trace_examples() {
        let b = linalg::from_rows(&[
            vec![C64::new(1.0, 0.0), C64::new(2.0, 1.0)],
            vec![C64::new(0.0, -1.0), C64::new(3.0, 0.0)],
        ])
        .unwrap();
        let z = linalg::kron(&b, &linalg::identity(5));
        assert!(linalg::max_abs_diff(&partial_trace(&z, 2, 5).unwrap(), &b) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = ginibre(&mut rng, 5);
        let z = linalg::kron(&linalg::identity(2), &w);
        let want = linalg::scalar(2, linalg::trace(&w) / 5.0);
        assert!(linalg::max_abs_diff(&partial_trace(&z, 2, 5).unwrap(), &want) < 1e-15);

        let z = ginibre(&mut rng, 12);
        let pt = partial_trace(&z, 3, 4).unwrap();
        assert!((linalg::trace(&pt) / 3.0 - linalg::trace(&z) / 12.0).norm() <= 1e-12);
        assert!(matches!(partial_trace(&z, 5, 2), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn chunked_mean_is_order_independent() {
        let run = || {
            monte_carlo_mean(7, 21, |rng| Ok(vec![ginibre(rng, 3)]))
                .unwrap()
                .remove(0)
        };
        let a = run();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        assert_eq!(linalg::max_abs_diff(&a, &b), 0.0);
    }

    #[test]
    fn verdict_rules() {
        let mut r = BTreeMap::new();
        let mut t = BTreeMap::new();
        r.insert("a".to_string(), 0.01);
        t.insert("a".to_string(), 0.05);
        assert_eq!(Verdict::evaluate(&r, &t), Verdict::Pass);
        r.insert("b".to_string(), 0.05);
        t.insert("b".to_string(), 0.05);
        assert_eq!(Verdict::evaluate(&r, &t), Verdict::Boundary);
        r.insert("c".to_string(), f64::NAN);
        t.insert("c".to_string(), 1.0);
        assert_eq!(Verdict::evaluate(&r, &t), Verdict::Fail);
    }

    #[test]
    fn identity_names() {
        assert_eq!("thm31-block".parse::<Identity>().unwrap(), Identity::BlockAdditiveSubordination);
        assert_eq!("prop32".parse::<Identity>().unwrap(), Identity::ConditionalResolvent);
        assert!("prop34".parse::<Identity>().is_err());
        assert_eq!(serde_json::to_string(&Identity::MarkovianResolvent).unwrap(), "\"prop33\"");
    }

    #[test]
    fn central_a_gives_exact_scalar() {
        // a0 = s·I commutes with every rotation: f = s + iε exactly
        let cfg = ConditionalResolventConfig {
            n: 40,
            trials: 4,
            a0: Some(vec![0.3; 40]),
            ..Default::default()
        };
        let rep = experiment_conditional_resolvent(&cfg).unwrap();
        match rep.estimates["f"] {
            Estimate::Complex { re, im } => {
                assert!((re - 0.3).abs() < 1e-10 && (im - 1.0).abs() < 1e-10);
            }
            _ => panic!(),
        }
        assert!(rep.residual("off_diag").unwrap() < 1e-10);
    }

    #[test]
    fn trivial_deterministic_part() {
        // Λ = 0: the fit must return 1/τ(a^{-1})
        let n = 200;
        let cfg = ConditionalResolventConfig {
            n,
            trials: 20,
            lambda: Some(vec![0.0; n]),
            ..Default::default()
        };
        let rep = experiment_conditional_resolvent(&cfg).unwrap();
        // τ(a^{-1}) for a = ±1 + i: ½(1/(1+i) + 1/(-1+i)) = -i/2
        let Estimate::Complex { re, im } = rep.estimates["f"] else { panic!() };
        assert!((C64::new(re, im) - C64::new(0.0, 2.0)).norm() < 0.1);
    }

    #[test]
    fn central_c_gives_exact_scalar() {
        let n = 30;
        let cfg = MarkovianResolventConfig {
            n,
            trials: 3,
            c0: Some(vec![0.0; n]),
            ..Default::default()
        };
        let rep = experiment_markovian_resolvent(&cfg).unwrap();
        assert!(rep.residual("scalar_dev").unwrap() < 1e-12);
        let Estimate::Complex { re, im } = rep.estimates["scalar"] else { panic!() };
        assert!(re.abs() < 1e-12 && (im - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_center_is_recovered() {
        let cfg = UnitarySubordinationConfig {
            n: 60,
            trials: 4,
            law: StandardMeasure::CircleAtoms {
                atoms: vec![[0.4, 0.5], [2.5, 0.3], [4.0, 0.2]],
            },
            center: CenterSpec::Scalar { rho: C64::new(0.3, -0.2) },
            ..Default::default()
        };
        let rep = experiment_unitary_subordination(&cfg).unwrap();
        let Estimate::Complex { re, im } = rep.estimates["g"] else { panic!() };
        // the empirical angle law differs from the atoms at finite N
        assert!((C64::new(re, im) - C64::new(0.3, -0.2)).norm() < 0.2);
    }

    #[test]
    fn contraction_sweep_small() {
        let rep = experiment_contraction_criterion(&ContractionCriterionConfig {
            samples: 500,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
    }

    #[test]
    fn report_serialization() {
        let rep = experiment_contraction_criterion(&ContractionCriterionConfig {
            samples: 20,
            ..Default::default()
        })
        .unwrap();
        let back = ExperimentReport::from_json(&rep.to_json().unwrap()).unwrap();
        assert_eq!(back, rep);
        let header = rep.csv_header();
        assert!(header.starts_with("identity,N,trials,seed,residual_"));
        assert!(header.ends_with(",verdict"));
        assert_eq!(header.split(',').count(), rep.csv_row().split(',').count());
    }
}
