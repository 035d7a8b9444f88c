//! Compactly supported probability measures on the real line and on the
//! unit circle, stored as a finite list of atoms plus a density sampled on
//! a uniform grid, and the analytic transforms built on them.
//!
//! All integrals against the density use the trapezoid rule on the stored
//! grid (periodic trapezoid on the circle). A measure therefore behaves
//! exactly like a finite weighted sum of point masses, which is what the
//! subordination solvers rely on: every transform evaluated here is the
//! transform of one fixed discrete measure.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

type C64 = Complex64;

pub const DEFAULT_GRID_N: usize = 2048;
pub const NORMALIZATION_TOL: f64 = 1e-9;
pub const MAX_MOMENT_ORDER: usize = 32;

/// `|G|` below this is treated as a vanished transform.
const ZERO_TRANSFORM_TOL: f64 = 1e-280;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) || n < 2 {
            return Err(Error::BadParams(format!("invalid grid [{lo}, {hi}] with {n} points")));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.step()
        } else {
            self.step()
        }
    }

    pub fn integrate(&self, samples: &[f64]) -> f64 {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| s * self.trapezoid_weight(i))
            .sum()
    }
}

fn check_atoms(atoms: &[(f64, f64)]) -> Result<()> {
    for &(t, w) in atoms {
        if !t.is_finite() {
            return Err(Error::BadParams(format!("atom position {t} is not finite")));
        }
        if !(w > 0.0 && w <= 1.0 + NORMALIZATION_TOL) {
            return Err(Error::BadParams(format!("atom weight {w} outside (0, 1]")));
        }
    }
    Ok(())
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::BadParams(format!("density sample {s} is negative or not finite")));
    }
    Ok(())
}

fn check_total(total: f64) -> Result<()> {
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Invariant(format!("total mass {total} differs from 1")));
    }
    Ok(())
}

/// A probability measure on the real line: atoms plus a gridded density.
#[derive(Clone, Debug)]
pub struct LineMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<(UniformGrid, Vec<f64>)>,
    // (position, weight) of every atom and every trapezoid node
    quadrature: Vec<(f64, f64)>,
}

impl LineMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, density: Option<(UniformGrid, Vec<f64>)>) -> Result<Self> {
        check_atoms(&atoms)?;
        if let Some((grid, samples)) = &density {
            UniformGrid::new(grid.lo, grid.hi, grid.n)?;
            if samples.len() != grid.n {
                return Err(Error::DimensionMismatch {
                    expected: format!("{} density samples", grid.n),
                    found: samples.len().to_string(),
                });
            }
            check_samples(samples)?;
        }
        let mut quadrature = atoms.clone();
        if let Some((grid, samples)) = &density {
            quadrature.extend(
                samples
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s > 0.0)
                    .map(|(i, s)| (grid.node(i), s * grid.trapezoid_weight(i))),
            );
        }
        if quadrature.is_empty() {
            return Err(Error::BadParams("measure has neither atoms nor density".into()));
        }
        check_total(quadrature.iter().map(|q| q.1).sum())?;
        Ok(Self {
            atoms,
            density,
            quadrature,
        })
    }

    /// Rescales atoms and density jointly to unit mass before validating.
    pub fn normalized(mut atoms: Vec<(f64, f64)>, mut density: Option<(UniformGrid, Vec<f64>)>) -> Result<Self> {
        let mut total: f64 = atoms.iter().map(|a| a.1).sum();
        if let Some((grid, samples)) = &density {
            total += grid.integrate(samples);
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::BadParams(format!("cannot normalise a measure of mass {total}")));
        }
        atoms.iter_mut().for_each(|a| a.1 /= total);
        if let Some((_, samples)) = &mut density {
            samples.iter_mut().for_each(|s| *s /= total);
        }
        Self::new(atoms, density)
    }

    pub fn dirac(t: f64) -> Self {
        Self::new(vec![(t, 1.0)], None).expect("a single unit atom is a probability measure")
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<(&UniformGrid, &[f64])> {
        self.density.as_ref().map(|(g, s)| (g, s.as_slice()))
    }

    /// Point masses equivalent to the measure under the trapezoid rule.
    pub fn quadrature(&self) -> &[(f64, f64)] {
        &self.quadrature
    }

    /// Smallest interval containing every atom and the density grid.
    pub fn support(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(t, _) in &self.atoms {
            lo = lo.min(t);
            hi = hi.max(t);
        }
        if let Some((grid, _)) = &self.density {
            lo = lo.min(grid.lo);
            hi = hi.max(grid.hi);
        }
        (lo, hi)
    }

    /// Cauchy transform at any `z` off the quadrature nodes; no domain check.
    pub fn cauchy_unchecked(&self, z: C64) -> C64 {
        self.quadrature.iter().map(|&(t, w)| w / (z - t)).sum()
    }

    pub fn moment(&self, k: usize) -> f64 {
        self.quadrature.iter().map(|&(t, w)| w * t.powi(k as i32)).sum()
    }

    pub fn density_at(&self, t: f64) -> f64 {
        let Some((grid, samples)) = &self.density else {
            return 0.0;
        };
        if t < grid.lo || t > grid.hi {
            return 0.0;
        }
        let x = (t - grid.lo) / grid.step();
        let i = (x.floor() as usize).min(grid.n - 2);
        let frac = x - i as f64;
        samples[i] * (1.0 - frac) + samples[i + 1] * frac
    }

    /// Builds a measure from a density function on `[lo, hi]`.
    ///
    /// Sample `i` is the hat-function average `∫ρ φ_i / ∫φ_i`, so the
    /// trapezoid rule over the samples integrates piecewise-linear
    /// interpolants exactly against `ρ` and the total mass is right even
    /// with inverse square-root edges. Cell integrals use `t = edge + u²`
    /// from the nearer endpoint, which removes such singularities.
    pub fn from_density_fn(
        lo: f64,
        hi: f64,
        n: usize,
        density: impl Fn(f64) -> f64,
        atoms: Vec<(f64, f64)>,
    ) -> Result<Self> {
        let grid = UniformGrid::new(lo, hi, n)?;
        let h = grid.step();
        let mut hat_mass = vec![0.0; n];
        for i in 0..n - 1 {
            let (a, b) = (grid.node(i), grid.node(i + 1));
            let (left, right) = cell_hat_masses(&density, a, b, lo, hi);
            hat_mass[i] += left;
            hat_mass[i + 1] += right;
        }
        let mut samples: Vec<f64> = hat_mass
            .iter()
            .enumerate()
            .map(|(i, m)| m / (if i == 0 || i + 1 == n { 0.5 * h } else { h }))
            .collect();
        let atom_mass: f64 = atoms.iter().map(|a| a.1).sum();
        let cont = grid.integrate(&samples);
        if cont > 0.0 {
            let target = 1.0 - atom_mass;
            samples.iter_mut().for_each(|s| *s *= target / cont);
        }
        Self::normalized(atoms, Some((grid, samples)))
    }
}

/// `(∫ρ·(b−t)/(b−a), ∫ρ·(t−a)/(b−a))` over `[a, b]`, substituting
/// `t = edge ± u²` about whichever of `lo`, `hi` is closer.
fn cell_hat_masses(density: &impl Fn(f64) -> f64, a: f64, b: f64, lo: f64, hi: f64) -> (f64, f64) {
    const PANELS: usize = 48;
    let width = b - a;
    let from_left = a - lo <= hi - b;
    let (edge, dir, p, q) = if from_left { (lo, 1.0, a - lo, b - lo) } else { (hi, -1.0, hi - b, hi - a) };
    let (u0, u1) = (p.max(0.0).sqrt(), q.max(0.0).sqrt());
    let du = (u1 - u0) / PANELS as f64;
    let (mut left, mut right) = (0.0, 0.0);
    for k in 0..PANELS {
        let u = u0 + (k as f64 + 0.5) * du;
        let t = edge + dir * u * u;
        let m = density(t).max(0.0) * 2.0 * u * du;
        let frac = ((t - a) / width).clamp(0.0, 1.0);
        left += m * (1.0 - frac);
        right += m * frac;
    }
    (left, right)
}

/// A probability measure on the unit circle; angles in `[0, 2π)`.
#[derive(Clone, Debug)]
pub struct CircleMeasure {
    atoms: Vec<(f64, f64)>,
    density: Option<Vec<f64>>,
    // (point on the circle, weight, angle)
    quadrature: Vec<(C64, f64, f64)>,
}

impl CircleMeasure {
    pub fn new(atoms: Vec<(f64, f64)>, density: Option<Vec<f64>>) -> Result<Self> {
        let atoms: Vec<(f64, f64)> = atoms.into_iter().map(|(a, w)| (a.rem_euclid(TAU), w)).collect();
        check_atoms(&atoms)?;
        if let Some(samples) = &density {
            if samples.len() < 2 {
                return Err(Error::BadParams("circle density needs at least 2 samples".into()));
            }
            check_samples(samples)?;
        }
        let mut quadrature: Vec<(C64, f64, f64)> =
            atoms.iter().map(|&(a, w)| (C64::from_polar(1.0, a), w, a)).collect();
        if let Some(samples) = &density {
            let n = samples.len();
            let dtheta = TAU / n as f64;
            quadrature.extend(samples.iter().enumerate().filter(|(_, s)| **s > 0.0).map(|(j, s)| {
                let a = j as f64 * dtheta;
                (C64::from_polar(1.0, a), s * dtheta, a)
            }));
        }
        if quadrature.is_empty() {
            return Err(Error::BadParams("measure has neither atoms nor density".into()));
        }
        check_total(quadrature.iter().map(|q| q.1).sum())?;
        Ok(Self {
            atoms,
            density,
            quadrature,
        })
    }

    pub fn normalized(mut atoms: Vec<(f64, f64)>, mut density: Option<Vec<f64>>) -> Result<Self> {
        let mut total: f64 = atoms.iter().map(|a| a.1).sum();
        if let Some(samples) = &density {
            total += samples.iter().sum::<f64>() * TAU / samples.len() as f64;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::BadParams(format!("cannot normalise a measure of mass {total}")));
        }
        atoms.iter_mut().for_each(|a| a.1 /= total);
        if let Some(samples) = &mut density {
            samples.iter_mut().for_each(|s| *s /= total);
        }
        Self::new(atoms, density)
    }

    pub fn haar(n: usize) -> Result<Self> {
        Self::new(vec![], Some(vec![1.0 / TAU; n]))
    }

    /// Density given as a function of the angle, sampled on `n` points and
    /// normalised.
    pub fn from_density_fn(n: usize, density: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..n).map(|j| density(j as f64 * TAU / n as f64).max(0.0)).collect();
        Self::normalized(vec![], Some(samples))
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn density(&self) -> Option<&[f64]> {
        self.density.as_deref()
    }

    pub fn quadrature(&self) -> impl Iterator<Item = (C64, f64)> + '_ {
        self.quadrature.iter().map(|q| (q.0, q.1))
    }

    /// `∫ ζ^k dν(ζ)`; negative `k` gives the conjugate moments.
    pub fn moment(&self, k: i32) -> C64 {
        self.quadrature.iter().map(|&(z, w, _)| w * z.powi(k)).sum()
    }

    pub fn cauchy_unchecked(&self, g: C64) -> C64 {
        self.quadrature.iter().map(|&(z, w, _)| w / (z - g)).sum()
    }

    pub fn derivative_unchecked(&self, g: C64) -> C64 {
        self.quadrature
            .iter()
            .map(|&(z, w, _)| {
                let d = z - g;
                w / (d * d)
            })
            .sum()
    }

    /// Image under complex conjugation `ζ ↦ ζ̄`.
    pub fn conjugate(&self) -> Self {
        let atoms = self.atoms.iter().map(|&(a, w)| ((TAU - a).rem_euclid(TAU), w)).collect();
        let density = self.density.as_ref().map(|s| {
            let n = s.len();
            (0..n).map(|j| s[(n - j) % n]).collect()
        });
        Self::new(atoms, density).expect("conjugation preserves normalisation")
    }

    /// Draws an angle. Density samples are treated as piecewise constant on
    /// cells centred at the grid angles.
    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let cell = self.density.as_ref().map_or(0.0, |s| TAU / s.len() as f64);
        let n_atoms = self.atoms.len();
        for (idx, &(_, w, a)) in self.quadrature.iter().enumerate() {
            acc += w;
            if u < acc {
                if idx < n_atoms {
                    return a;
                }
                let jitter: f64 = rng.random::<f64>() - 0.5;
                return (a + jitter * cell).rem_euclid(TAU);
            }
        }
        self.quadrature.last().map_or(0.0, |q| q.2)
    }

    /// True when the first `order` inverse moments vanish to `tol`, i.e. the
    /// circle transform is constant to that order.
    pub fn is_haar_like(&self, order: i32, tol: f64) -> bool {
        (1..=order).all(|k| self.moment(-k).norm() <= tol)
    }
}

/// Either kind of measure, with the shared JSON wire format.
#[derive(Clone, Debug)]
pub enum Measure {
    Line(LineMeasure),
    Circle(CircleMeasure),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureRecord {
    #[serde(rename = "type")]
    kind: String,
    atoms: Vec<[f64; 2]>,
    grid: Option<UniformGrid>,
    density: Vec<f64>,
}

impl Measure {
    fn to_record(&self) -> MeasureRecord {
        match self {
            Measure::Line(m) => MeasureRecord {
                kind: "line".into(),
                atoms: m.atoms.iter().map(|&(t, w)| [t, w]).collect(),
                grid: m.density.as_ref().map(|d| d.0),
                density: m.density.as_ref().map(|d| d.1.clone()).unwrap_or_default(),
            },
            Measure::Circle(m) => MeasureRecord {
                kind: "circle".into(),
                atoms: m.atoms.iter().map(|&(t, w)| [t, w]).collect(),
                grid: m.density.as_ref().map(|s| UniformGrid {
                    lo: 0.0,
                    hi: TAU,
                    n: s.len(),
                }),
                density: m.density.clone().unwrap_or_default(),
            },
        }
    }

    fn from_record(r: MeasureRecord) -> Result<Self> {
        let atoms: Vec<(f64, f64)> = r.atoms.iter().map(|a| (a[0], a[1])).collect();
        match r.kind.as_str() {
            "line" => {
                let density = match r.grid {
                    Some(g) => Some((g, r.density)),
                    None if r.density.is_empty() => None,
                    None => return Err(Error::BadParams("density samples without a grid".into())),
                };
                Ok(Measure::Line(LineMeasure::new(atoms, density)?))
            }
            "circle" => {
                let density = match r.grid {
                    Some(g) if g.n == r.density.len() => Some(r.density),
                    Some(g) => {
                        return Err(Error::DimensionMismatch {
                            expected: format!("{} density samples", g.n),
                            found: r.density.len().to_string(),
                        })
                    }
                    None if r.density.is_empty() => None,
                    None => return Err(Error::BadParams("density samples without a grid".into())),
                };
                Ok(Measure::Circle(CircleMeasure::new(atoms, density)?))
            }
            other => Err(Error::BadParams(format!("unknown measure type `{other}`"))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(s)?)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        Self::from_record(serde_json::from_value(v)?)
    }

    pub fn as_line(&self) -> Result<&LineMeasure> {
        match self {
            Measure::Line(m) => Ok(m),
            Measure::Circle(_) => Err(Error::BadParams("expected a measure on the line".into())),
        }
    }

    pub fn as_circle(&self) -> Result<&CircleMeasure> {
        match self {
            Measure::Circle(m) => Ok(m),
            Measure::Line(_) => Err(Error::BadParams("expected a measure on the circle".into())),
        }
    }
}

/// Named families with closed-form densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StandardMeasure {
    Semicircle { center: f64, variance: f64 },
    BernoulliPm1,
    Arcsine { scale: f64 },
    MarchenkoPastur { ratio: f64 },
    Atomic { atoms: Vec<[f64; 2]> },
    HaarCircle,
    CircleAtoms { atoms: Vec<[f64; 2]> },
}

impl StandardMeasure {
    /// Parses a family name with positional parameters, e.g.
    /// `("semicircle", [0, 1])` or `("atomic", [t0, w0, t1, w1])`.
    pub fn parse(name: &str, params: &[f64]) -> Result<Self> {
        let want = |k: usize| -> Result<()> {
            if params.len() != k {
                return Err(Error::BadParams(format!("`{name}` takes {k} parameters, got {}", params.len())));
            }
            Ok(())
        };
        let pairs = || -> Result<Vec<[f64; 2]>> {
            if params.is_empty() || params.len() % 2 != 0 {
                return Err(Error::BadParams(format!("`{name}` takes (position, weight) pairs")));
            }
            Ok(params.chunks(2).map(|c| [c[0], c[1]]).collect())
        };
        Ok(match name {
            "semicircle" => match params.len() {
                0 => StandardMeasure::Semicircle { center: 0.0, variance: 1.0 },
                _ => {
                    want(2)?;
                    StandardMeasure::Semicircle {
                        center: params[0],
                        variance: params[1],
                    }
                }
            },
            "bernoulli_pm1" => {
                want(0)?;
                StandardMeasure::BernoulliPm1
            }
            "arcsine" => match params.len() {
                0 => StandardMeasure::Arcsine { scale: 2.0 },
                _ => {
                    want(1)?;
                    StandardMeasure::Arcsine { scale: params[0] }
                }
            },
            "marchenko_pastur" => match params.len() {
                0 => StandardMeasure::MarchenkoPastur { ratio: 1.0 },
                _ => {
                    want(1)?;
                    StandardMeasure::MarchenkoPastur { ratio: params[0] }
                }
            },
            "atomic" => StandardMeasure::Atomic { atoms: pairs()? },
            "haar_circle" => {
                want(0)?;
                StandardMeasure::HaarCircle
            }
            "circle_atoms" => StandardMeasure::CircleAtoms { atoms: pairs()? },
            other => return Err(Error::UnknownFamily(other.to_string())),
        })
    }
}

pub fn make_standard(spec: &StandardMeasure, grid_n: usize) -> Result<Measure> {
    let positive = |name: &str, v: f64| -> Result<()> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::BadParams(format!("{name} must be positive, got {v}")));
        }
        Ok(())
    };
    Ok(match spec {
        StandardMeasure::Semicircle { center, variance } => {
            positive("variance", *variance)?;
            let r = 2.0 * variance.sqrt();
            let c = *center;
            Measure::Line(LineMeasure::from_density_fn(
                c - r,
                c + r,
                grid_n,
                move |t| 2.0 / (PI * r * r) * (r * r - (t - c).powi(2)).max(0.0).sqrt(),
                vec![],
            )?)
        }
        StandardMeasure::BernoulliPm1 => Measure::Line(LineMeasure::new(vec![(-1.0, 0.5), (1.0, 0.5)], None)?),
        StandardMeasure::Arcsine { scale } => {
            positive("scale", *scale)?;
            let s = *scale;
            Measure::Line(LineMeasure::from_density_fn(
                -s,
                s,
                grid_n,
                move |t| {
                    let q = s * s - t * t;
                    if q > 0.0 {
                        1.0 / (PI * q.sqrt())
                    } else {
                        0.0
                    }
                },
                vec![],
            )?)
        }
        StandardMeasure::MarchenkoPastur { ratio } => {
            positive("ratio", *ratio)?;
            let l = *ratio;
            let a = (1.0 - l.sqrt()).powi(2);
            let b = (1.0 + l.sqrt()).powi(2);
            let atoms = if l > 1.0 { vec![(0.0, 1.0 - 1.0 / l)] } else { vec![] };
            Measure::Line(LineMeasure::from_density_fn(
                a,
                b,
                grid_n,
                move |t| {
                    let q = (b - t) * (t - a);
                    if q > 0.0 && t > 0.0 {
                        q.sqrt() / (2.0 * PI * l * t)
                    } else {
                        0.0
                    }
                },
                atoms,
            )?)
        }
        StandardMeasure::Atomic { atoms } => {
            Measure::Line(LineMeasure::new(atoms.iter().map(|a| (a[0], a[1])).collect(), None)?)
        }
        StandardMeasure::HaarCircle => Measure::Circle(CircleMeasure::haar(grid_n)?),
        StandardMeasure::CircleAtoms { atoms } => {
            Measure::Circle(CircleMeasure::new(atoms.iter().map(|a| (a[0], a[1])).collect(), None)?)
        }
    })
}

fn require_upper(z: C64) -> Result<()> {
    if !(z.im > 0.0) || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("Im z must be positive, got z = {z}")));
    }
    Ok(())
}

/// `G_μ(z) = ∫ (z - t)^{-1} dμ(t)` for `Im z > 0`.
pub fn cauchy_transform(mu: &LineMeasure, z: C64) -> Result<C64> {
    require_upper(z)?;
    Ok(mu.cauchy_unchecked(z))
}

/// `F_μ(z) = 1 / G_μ(z)`.
pub fn f_transform(mu: &LineMeasure, z: C64) -> Result<C64> {
    let g = cauchy_transform(mu, z)?;
    if g.norm() < ZERO_TRANSFORM_TOL {
        return Err(Error::ZeroTransform(g.norm()));
    }
    Ok(g.inv())
}

/// `h_μ(z) = F_μ(z) - z`.
pub fn h_transform(mu: &LineMeasure, z: C64) -> Result<C64> {
    Ok(f_transform(mu, z)? - z)
}

/// `K_ν(g) = ∫ (ζ - g)^{-1} dν(ζ)` for `|g| < 1`.
pub fn circle_cauchy(nu: &CircleMeasure, g: C64) -> Result<C64> {
    if !(g.norm() < 1.0) {
        return Err(Error::Domain(format!("|g| must be below 1, got |g| = {}", g.norm())));
    }
    Ok(nu.cauchy_unchecked(g))
}

/// `∫ t^k dμ` on the line or `∫ ζ^k dν` on the circle (negative `k` allowed
/// there), for `|k| <= 32`.
pub fn moments(measure: &Measure, k: i32) -> Result<C64> {
    if k.unsigned_abs() as usize > MAX_MOMENT_ORDER {
        return Err(Error::BadParams(format!("moment order {k} exceeds {MAX_MOMENT_ORDER}")));
    }
    match measure {
        Measure::Line(m) => {
            if k < 0 {
                return Err(Error::BadParams("negative moments are only defined on the circle".into()));
            }
            Ok(C64::new(m.moment(k as usize), 0.0))
        }
        Measure::Circle(m) => Ok(m.moment(k)),
    }
}

/// Density recovered from a Cauchy transform.
#[derive(Clone, Debug)]
pub struct Inversion {
    pub measure: LineMeasure,
    /// Factor applied to the raw recovered density to reach unit mass.
    pub renormalization: f64,
    /// Grid points where the extrapolation was rejected in favour of the
    /// smallest-η Poisson estimate (typically next to atoms).
    pub fallback_points: usize,
}

/// Value of the interpolating polynomial through `(x_i, y_i)` at 0.
fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let mut p = ys.to_vec();
    let n = xs.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (xs[i + m] * p[i] - xs[i] * p[i + 1]) / (xs[i + m] - xs[i]);
        }
    }
    p[0]
}

/// Recovers a density from its Cauchy transform by `-(1/π) Im G(t + iη)`,
/// Richardson-extrapolated to `η → 0` across `etas`.
///
/// Where the extrapolation correction exceeds the whole variation seen along
/// the η ladder, the smoothed values are not in the asymptotic regime and the
/// smallest-η estimate is kept instead. Negative extrapolated values are
/// clipped to zero; a negative smoothed value beyond `-1e-3` means `G` is
/// not a Cauchy transform and is an error.
pub fn stieltjes_invert<G>(transform: G, grid: UniformGrid, etas: &[f64]) -> Result<Inversion>
where
    G: Fn(C64) -> Result<C64> + Sync,
{
    UniformGrid::new(grid.lo, grid.hi, grid.n)?;
    if etas.is_empty() {
        return Err(Error::BadParams("empty η sequence".into()));
    }
    if etas.iter().any(|&e| !(e >= 1e-4) || !e.is_finite()) || etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::BadParams(format!("η sequence must be decreasing and >= 1e-4, got {etas:?}")));
    }
    let nodes = grid.nodes();
    let rows: Vec<(f64, bool)> = nodes
        .par_iter()
        .map(|&t| -> Result<(f64, bool)> {
            let mut raw = Vec::with_capacity(etas.len());
            for &eta in etas {
                let v = -transform(C64::new(t, eta))?.im / PI;
                if !(v >= -1e-3) {
                    return Err(Error::NonPositiveDensity { at: t, value: v });
                }
                raw.push(v);
            }
            let last = *raw.last().unwrap();
            if raw.len() == 1 {
                return Ok((last, false));
            }
            let extrapolated = extrapolate_to_zero(etas, &raw);
            if (extrapolated - last).abs() <= (raw[0] - last).abs() {
                Ok((extrapolated, false))
            } else {
                Ok((last, true))
            }
        })
        .collect::<Result<_>>()?;
    let mut samples: Vec<f64> = rows.iter().map(|r| r.0.max(0.0)).collect();
    let fallback_points = rows.iter().filter(|r| r.1).count();
    let mass = grid.integrate(&samples);
    if !(mass > 0.0) {
        return Err(Error::NonPositiveDensity { at: grid.lo, value: mass });
    }
    samples.iter_mut().for_each(|s| *s /= mass);
    Ok(Inversion {
        measure: LineMeasure::new(vec![], Some((grid, samples)))?,
        renormalization: 1.0 / mass,
        fallback_points,
    })
}

/// Moments `∫ t^k dμ`, `k = 0..=k_max`, of a measure supported inside the
/// disk `|t - center| < radius`, from its Cauchy transform on the circle
/// `|z - center| = radius`:
/// `m_k = (1/2πi) ∮ z^k G(z) dz`, trapezoid rule with `nodes` points.
///
/// Only upper half-plane points are evaluated; the lower half follows from
/// `G(z̄) = conj G(z)`.
pub fn contour_moments<G>(transform: G, center: f64, radius: f64, k_max: usize, nodes: usize) -> Result<Vec<f64>>
where
    G: Fn(C64) -> Result<C64> + Sync,
{
    if nodes < 8 || nodes % 2 != 0 || !(radius > 0.0) {
        return Err(Error::BadParams("contour needs an even number (>= 8) of nodes and a positive radius".into()));
    }
    let half = nodes / 2;
    let upper: Vec<(C64, C64)> = (0..half)
        .into_par_iter()
        .map(|j| {
            let theta = TAU * (j as f64 + 0.5) / nodes as f64;
            let dz = C64::from_polar(radius, theta);
            let z = center + dz;
            transform(z).map(|g| (z, g * dz))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; k_max + 1];
    for &(z, gdz) in &upper {
        let mut zk = C64::new(1.0, 0.0);
        for m in out.iter_mut() {
            // the conjugate node contributes the complex conjugate term
            *m += 2.0 * (zk * gdz).re;
            zk *= z;
        }
    }
    out.iter_mut().for_each(|m| *m /= nodes as f64);
    Ok(out)
}

/// Closed-form semicircle Cauchy transform `(z - c - sqrt((z-c)² - R²))·2/R²`
/// on the branch with `G(z) ~ 1/z` at infinity (`R² = 4·variance`).
pub fn semicircle_cauchy_closed_form(center: f64, variance: f64, z: C64) -> C64 {
    let w = z - center;
    let r2 = 4.0 * variance;
    // sqrt(w - R) sqrt(w + R) is analytic off [-R, R] and behaves like w
    let r = r2.sqrt();
    let root = (w - r).sqrt() * (w + r).sqrt();
    (w - root) * 2.0 / r2
}


/// Default η ladder for density recovery.
pub const DEFAULT_INVERSION_ETAS: [f64; 3] = [1e-1, 3e-2, 1e-2];
