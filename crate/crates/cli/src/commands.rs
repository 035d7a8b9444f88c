use std::path::PathBuf;
use std::time::SystemTime;

use serde::Serialize;
use serde_json::Value;
use subord_core::additive::{self, SubordinationEval};
use subord_core::multiplicative;
use subord_core::oracle::{self, Identity, Verdict};
use subord_core::spectral::{self, CircleMeasure, LineMeasure, Measure, UniformGrid, DEFAULT_GRID_N, DEFAULT_INVERSION_ETAS};
use subord_core::Complex64;

use crate::config::{self, CommandKind, CommonArgs, Format, Resolved, RunConfig, DEFAULT_OUT_DIR};
use crate::exit::{CliError, CONFIG_ERROR, NUMERICAL_FAILURE, PASS, RESIDUAL_EXCEEDED};
use crate::output::{csv, num, Artifacts};

pub const DEFAULT_TABLE_N: usize = 401;
pub const DEFAULT_MULT_ORDER: usize = 8;
pub const DEFAULT_ANGLES: usize = 512;
pub const DEFAULT_SMOOTHING_RADIUS: f64 = 0.95;

pub struct Outcome {
    pub code: i32,
    /// Printed to stdout.
    pub text: String,
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn out_dir(res: &Resolved) -> PathBuf {
    res.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn measures(positional: &[String], cfg: &RunConfig, grid_n: usize) -> Result<Vec<Measure>, CliError> {
    let inputs: Vec<Value> = if positional.is_empty() {
        cfg.measures.clone()
    } else {
        positional.iter().cloned().map(Value::String).collect()
    };
    inputs.iter().map(|v| config::parse_measure(v, grid_n)).collect()
}

fn expect_count<T>(items: Vec<T>, n: usize, what: &str) -> Result<Vec<T>, CliError> {
    if items.len() != n {
        return Err(CliError::config(format!("expected {n} {what}, got {}", items.len())));
    }
    Ok(items)
}

fn line(m: &Measure) -> Result<&LineMeasure, CliError> {
    m.as_line().map_err(|e| CliError::config(e.to_string()))
}

fn circle(m: &Measure) -> Result<&CircleMeasure, CliError> {
    m.as_circle().map_err(|e| CliError::config(e.to_string()))
}

#[derive(Serialize)]
struct TableRow {
    z: [f64; 2],
    omega1: [f64; 2],
    omega2: [f64; 2],
    g: [f64; 2],
    residual: f64,
    sum_defect: f64,
    iterations: usize,
}

impl TableRow {
    fn new(e: &SubordinationEval) -> Self {
        Self {
            z: pair(e.z),
            omega1: pair(e.omega1),
            omega2: pair(e.omega2),
            g: pair(e.g_conv),
            residual: e.residual,
            sum_defect: e.sum_defect(),
            iterations: e.iterations,
        }
    }

    fn cells(&self) -> Vec<String> {
        let mut out = vec![];
        for p in [self.z, self.omega1, self.omega2, self.g] {
            out.push(num(p[0]));
            out.push(num(p[1]));
        }
        out.push(num(self.residual));
        out.push(num(self.sum_defect));
        out.push(self.iterations.to_string());
        out
    }
}

const TABLE_HEADER: [&str; 11] = [
    "z_re", "z_im", "omega1_re", "omega1_im", "omega2_re", "omega2_im", "g_re", "g_im", "residual", "sum_defect",
    "iterations",
];

#[derive(Serialize)]
struct FailedPoint {
    z: [f64; 2],
    error: String,
}

#[derive(Serialize)]
struct AddSummary {
    command: &'static str,
    tol: f64,
    etas: Vec<f64>,
    grid: UniformGrid,
    im_parts: Vec<f64>,
    points: usize,
    failed: Vec<FailedPoint>,
    max_residual: f64,
    max_sum_defect: f64,
    renormalization: Option<f64>,
    fallback_points: Option<usize>,
    convolution_error: Option<String>,
    pass: bool,
}

pub fn convolve_add(common: &CommonArgs, positional: &[String]) -> Result<Outcome, CliError> {
    let started = SystemTime::now();
    let cfg = RunConfig::load(common.config.as_deref())?;
    cfg.expect_command(CommandKind::ConvolveAdd)?;
    let res = config::resolve_common(common, &cfg)?;
    let grid_n = cfg.measure_grid_n.unwrap_or(DEFAULT_GRID_N);
    let ms = expect_count(measures(positional, &cfg, grid_n)?, 2, "measures")?;
    let (mu, nu) = (line(&ms[0])?, line(&ms[1])?);
    let etas = cfg.etas.clone().unwrap_or_else(|| DEFAULT_INVERSION_ETAS.to_vec());
    if etas.is_empty() || etas.iter().any(|e| !(*e >= 1e-4)) || etas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(CliError::config(format!("etas must be decreasing and >= 1e-4, got {etas:?}")));
    }
    let grid = match res.grid {
        Some((lo, hi, n)) => UniformGrid::new(lo, hi, n)?,
        None => additive::default_grid(mu, nu, DEFAULT_TABLE_N)?,
    };
    if res.tol < additive::MIN_TOL {
        return Err(CliError::config(format!("tolerance below {:e}", additive::MIN_TOL)));
    }
    let mut art = Artifacts::create(&out_dir(&res))?;

    let points: Vec<Complex64> = res
        .im_parts
        .iter()
        .flat_map(|&im| grid.nodes().into_iter().map(move |t| Complex64::new(t, im)))
        .collect();
    let evals = additive::subordination_table(mu, nu, &points, res.tol);
    let mut rows = vec![];
    let mut failed = vec![];
    for (z, e) in points.iter().zip(&evals) {
        match e {
            Ok(e) => rows.push(TableRow::new(e)),
            Err(err) => failed.push(FailedPoint {
                z: pair(*z),
                error: err.to_string(),
            }),
        }
    }
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    let max_sum_defect = rows.iter().map(|r| r.sum_defect).fold(0.0, f64::max);
    match res.format {
        Format::Json => art.write_json("table.json", &rows)?,
        Format::Csv => art.write("table.csv", &csv(&TABLE_HEADER, &rows.iter().map(TableRow::cells).collect::<Vec<_>>()))?,
    };

    let conv = additive::free_add_convolve(mu, nu, grid, &etas, res.tol);
    let (renormalization, fallback_points, convolution_error) = match &conv {
        Ok(c) => {
            let mut text = Measure::Line(c.measure().clone()).to_json()?;
            text.push('\n');
            art.write("measure.json", &text)?;
            (Some(c.inversion.renormalization), Some(c.inversion.fallback_points), None)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };

    let numerically_ok = failed.is_empty() && convolution_error.is_none();
    let within = max_residual <= res.tol && max_sum_defect <= 10.0 * res.tol;
    let summary = AddSummary {
        command: "convolve-add",
        tol: res.tol,
        etas,
        grid,
        im_parts: res.im_parts.clone(),
        points: points.len(),
        failed,
        max_residual,
        max_sum_defect,
        renormalization,
        fallback_points,
        convolution_error,
        pass: numerically_ok && within,
    };
    art.write_json("summary.json", &summary)?;
    art.write_meta("convolve-add", started)?;

    let code = if !numerically_ok {
        NUMERICAL_FAILURE
    } else if within {
        PASS
    } else {
        RESIDUAL_EXCEEDED
    };
    let mut text = format!(
        "convolve-add: {} points, max residual {:e}, max sum defect {:e}",
        summary.points, max_residual, max_sum_defect
    );
    for f in &summary.failed {
        text.push_str(&format!("\nfailed at z = {}{:+}i: {}", f.z[0], f.z[1], f.error));
    }
    if let Some(e) = &summary.convolution_error {
        text.push_str(&format!("\ndensity recovery failed: {e}"));
    }
    Ok(Outcome { code, text })
}

#[derive(Serialize)]
struct MomentRow {
    k: usize,
    re: f64,
    im: f64,
}

#[derive(Serialize)]
struct MultSummary {
    command: &'static str,
    tol: f64,
    order: usize,
    angles: usize,
    smoothing_radius: f64,
    residual: f64,
    pass: bool,
}

pub fn convolve_mult(common: &CommonArgs, positional: &[String], order: Option<usize>) -> Result<Outcome, CliError> {
    let started = SystemTime::now();
    let cfg = RunConfig::load(common.config.as_deref())?;
    cfg.expect_command(CommandKind::ConvolveMult)?;
    let res = config::resolve_common(common, &cfg)?;
    let grid_n = cfg.measure_grid_n.unwrap_or(DEFAULT_GRID_N);
    let ms = expect_count(measures(positional, &cfg, grid_n)?, 2, "measures")?;
    let (mu, nu) = (circle(&ms[0])?, circle(&ms[1])?);
    let order = order.or(cfg.order).unwrap_or(DEFAULT_MULT_ORDER);
    if order > multiplicative::MAX_ORDER {
        return Err(CliError::config(format!("order {order} exceeds {}", multiplicative::MAX_ORDER)));
    }
    let angles = cfg.angles.unwrap_or(DEFAULT_ANGLES);
    let radius = cfg.smoothing_radius.unwrap_or(DEFAULT_SMOOTHING_RADIUS);
    if angles < 2 || !(radius > 0.0 && radius < 1.0) {
        return Err(CliError::config("need at least 2 angles and a smoothing radius in (0, 1)"));
    }
    let mut art = Artifacts::create(&out_dir(&res))?;

    let conv = multiplicative::free_mult_convolve_unitary(mu, nu, order, res.tol)?;
    let density = multiplicative::free_mult_convolve_density(mu, nu, angles, radius, res.tol)?;
    let rows: Vec<MomentRow> = conv
        .moments
        .iter()
        .enumerate()
        .map(|(k, m)| MomentRow { k, re: m.re, im: m.im })
        .collect();
    match res.format {
        Format::Json => art.write_json("moments.json", &rows)?,
        Format::Csv => {
            let cells: Vec<Vec<String>> = rows.iter().map(|r| vec![r.k.to_string(), num(r.re), num(r.im)]).collect();
            art.write("moments.csv", &csv(&["k", "re", "im"], &cells))?
        }
    };
    let mut text = Measure::Circle(density).to_json()?;
    text.push('\n');
    art.write("measure.json", &text)?;
    let pass = conv.residual <= res.tol;
    art.write_json(
        "summary.json",
        &MultSummary {
            command: "convolve-mult",
            tol: res.tol,
            order,
            angles,
            smoothing_radius: radius,
            residual: conv.residual,
            pass,
        },
    )?;
    art.write_meta("convolve-mult", started)?;
    let moments: Vec<String> = conv.moments.iter().map(|m| format!("{m:.6}")).collect();
    Ok(Outcome {
        code: if pass { PASS } else { RESIDUAL_EXCEEDED },
        text: format!("convolve-mult: residual {:e}\nmoments {}", conv.residual, moments.join(" ")),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Transform {
    Cauchy,
    F,
    H,
    CircleCauchy,
    Psi,
    Eta,
    Subordination,
}

impl Transform {
    fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s.replace('_', "-").as_str() {
            "cauchy" => Transform::Cauchy,
            "f" => Transform::F,
            "h" => Transform::H,
            "circle-cauchy" => Transform::CircleCauchy,
            "psi" => Transform::Psi,
            "eta" => Transform::Eta,
            "subordination" => Transform::Subordination,
            other => {
                return Err(CliError::config(format!(
                    "unknown transform `{other}` (cauchy, f, h, circle-cauchy, psi, eta, subordination)"
                )))
            }
        })
    }

    fn on_circle(self) -> bool {
        matches!(self, Transform::CircleCauchy | Transform::Psi | Transform::Eta)
    }
}

#[derive(Serialize)]
struct EvalRow {
    z: [f64; 2],
    value: [f64; 2],
    /// `Im z` on the line, `1 - |z|` on the disk.
    input_margin: f64,
    /// Non-negative for a valid transform: `-Im G`, `Im F - Im z`, `Im h`,
    /// `Re(1 + 2zK)`, `Re(1 + 2ψ)`, `|z| - |η|`, `Im ω₁ - Im z`.
    value_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega1: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    omega2: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
}

fn eval_point(t: Transform, ms: &[Measure], z: Complex64, tol: f64) -> Result<EvalRow, CliError> {
    let mut row = EvalRow {
        z: pair(z),
        value: [0.0; 2],
        input_margin: if t.on_circle() { 1.0 - z.norm() } else { z.im },
        value_margin: 0.0,
        omega1: None,
        omega2: None,
        residual: None,
    };
    let (value, margin) = match t {
        Transform::Cauchy => {
            let g = spectral::cauchy_transform(line(&ms[0])?, z)?;
            (g, -g.im)
        }
        Transform::F => {
            let f = spectral::f_transform(line(&ms[0])?, z)?;
            (f, f.im - z.im)
        }
        Transform::H => {
            let h = spectral::h_transform(line(&ms[0])?, z)?;
            (h, h.im)
        }
        Transform::CircleCauchy => {
            let k = spectral::circle_cauchy(circle(&ms[0])?, z)?;
            (k, (1.0 + 2.0 * z * k).re)
        }
        Transform::Psi => {
            let p = multiplicative::psi_transform(circle(&ms[0])?, z)?;
            (p, (1.0 + 2.0 * p).re)
        }
        Transform::Eta => {
            let e = multiplicative::eta_transform(circle(&ms[0])?, z)?;
            (e, z.norm() - e.norm())
        }
        Transform::Subordination => {
            let e = additive::subordination_pair(line(&ms[0])?, line(&ms[1])?, z, tol)?;
            row.omega1 = Some(pair(e.omega1));
            row.omega2 = Some(pair(e.omega2));
            row.residual = Some(e.residual);
            (e.g_conv, e.omega1.im - z.im)
        }
    };
    row.value = pair(value);
    row.value_margin = margin;
    Ok(row)
}

pub fn eval(
    common: &CommonArgs,
    transform: Option<&str>,
    positional: &[String],
    at: &[String],
) -> Result<Outcome, CliError> {
    let started = SystemTime::now();
    let cfg = RunConfig::load(common.config.as_deref())?;
    cfg.expect_command(CommandKind::Eval)?;
    let res = config::resolve_common(common, &cfg)?;
    let name = transform
        .map(str::to_string)
        .or_else(|| cfg.transform.clone())
        .ok_or_else(|| CliError::config("no transform given"))?;
    let t = Transform::parse(&name)?;
    let grid_n = cfg.measure_grid_n.unwrap_or(DEFAULT_GRID_N);
    let want = if t == Transform::Subordination { 2 } else { 1 };
    let ms = expect_count(measures(positional, &cfg, grid_n)?, want, "measures")?;

    let points: Vec<Complex64> = if !at.is_empty() {
        at.iter().map(|s| config::parse_complex(s)).collect::<Result<_, _>>()?
    } else if let Some(p) = &cfg.points {
        p.iter().map(|p| Complex64::new(p[0], p[1])).collect()
    } else if let Some((lo, hi, n)) = res.grid {
        let grid = UniformGrid::new(lo, hi, n)?;
        res.im_parts
            .iter()
            .flat_map(|&im| grid.nodes().into_iter().map(move |x| Complex64::new(x, im)))
            .collect()
    } else {
        return Err(CliError::config("no evaluation points (use --at, points, or --grid)"));
    };
    // domain check for every point before evaluating any
    for z in &points {
        let inside = if t.on_circle() { z.norm() < 1.0 } else { z.im > 0.0 };
        if !inside {
            let want = if t.on_circle() { "|z| < 1" } else { "Im z > 0" };
            return Err(CliError {
                code: CONFIG_ERROR,
                message: format!("point {z} violates {want}"),
            });
        }
    }
    let rows = points
        .iter()
        .map(|&z| eval_point(t, &ms, z, res.tol))
        .collect::<Result<Vec<_>, _>>()?;

    let text = match res.format {
        Format::Json => serde_json::to_string_pretty(&rows).map_err(|e| CliError::numerical(e.to_string()))?,
        Format::Csv => {
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        num(r.z[0]),
                        num(r.z[1]),
                        num(r.value[0]),
                        num(r.value[1]),
                        num(r.input_margin),
                        num(r.value_margin),
                    ]
                })
                .collect();
            csv(&["z_re", "z_im", "value_re", "value_im", "input_margin", "value_margin"], &cells)
                .trim_end()
                .to_string()
        }
    };
    if let Some(dir) = &res.out_dir {
        let mut art = Artifacts::create(dir)?;
        art.write(&format!("eval.{}", res.format.extension()), &format!("{text}\n"))?;
        art.write_meta("eval", started)?;
    }
    Ok(Outcome { code: PASS, text })
}

pub struct VerifyArgs<'a> {
    pub identity: Option<&'a str>,
    pub n: Option<usize>,
    pub trials: Option<usize>,
    pub samples: Option<usize>,
}

fn tolerance_key(identity: Identity) -> &'static str {
    match identity {
        Identity::ConditionalResolvent | Identity::MarkovianResolvent | Identity::BlockAdditiveSubordination => {
            "tolerance"
        }
        Identity::UnitarySubordination => "residual_tolerance",
        Identity::ContractionCriterion => "identity_tolerance",
    }
}

/// Defaults, then the `experiment` object of the config file, then flags.
fn experiment_config(identity: Identity, cfg: &RunConfig, common: &CommonArgs, v: &VerifyArgs) -> Result<Value, CliError> {
    let Value::Object(mut map) = oracle::default_config(identity) else {
        unreachable!("experiment configurations are objects")
    };
    match &cfg.experiment {
        None => {}
        Some(Value::Object(over)) => map.extend(over.clone()),
        Some(_) => return Err(CliError::config("`experiment` must be a JSON object")),
    }
    let lemma = identity == Identity::ContractionCriterion;
    let mut set = |key: &str, value: Value, applies: bool, flag: &str| -> Result<(), CliError> {
        if !applies {
            return Err(CliError::config(format!("{flag} does not apply to {identity}")));
        }
        map.insert(key.to_string(), value);
        Ok(())
    };
    if let Some(seed) = common.seed.or(cfg.seed) {
        set("seed", seed.into(), true, "--seed")?;
    }
    if let Some(n) = v.n {
        set("N", n.into(), !lemma, "--N")?;
    }
    if let Some(t) = v.trials {
        set("trials", t.into(), !lemma, "--trials")?;
    }
    if let Some(s) = v.samples {
        set("samples", s.into(), lemma, "--samples")?;
    }
    if let Some(tol) = common.tol.or(cfg.tol) {
        set(tolerance_key(identity), tol.into(), true, "--tol")?;
    }
    Ok(Value::Object(map))
}

pub fn verify(common: &CommonArgs, v: &VerifyArgs) -> Result<Outcome, CliError> {
    let started = SystemTime::now();
    let cfg = RunConfig::load(common.config.as_deref())?;
    cfg.expect_command(CommandKind::Verify)?;
    let res = config::resolve_common(common, &cfg)?;
    let name = v
        .identity
        .map(str::to_string)
        .or_else(|| cfg.identity.clone())
        .ok_or_else(|| CliError::config("no experiment named"))?;
    let identity: Identity = name.parse()?;
    let exp = experiment_config(identity, &cfg, common, v)?;
    let report = oracle::run_experiment(identity, exp)?;

    let mut art = Artifacts::create(&out_dir(&res))?;
    let wire = identity.wire_name();
    let mut json = report.to_json()?;
    json.push('\n');
    art.write(&format!("{wire}.json"), &json)?;
    let row = format!("{}\n{}\n", report.csv_header(), report.csv_row());
    art.write(&format!("{wire}.csv"), &row)?;
    art.write_meta("verify", started)?;

    let text = match res.format {
        Format::Json => json.trim_end().to_string(),
        Format::Csv => row.trim_end().to_string(),
    };
    let code = if report.verdict == Verdict::Pass {
        PASS
    } else {
        RESIDUAL_EXCEEDED
    };
    Ok(Outcome { code, text })
}
