//! Run configuration: a JSON file merged with command-line flags, validated
//! before anything is computed.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use serde_json::Value;
use subord_core::spectral::{self, Measure, StandardMeasure, UniformGrid};
use subord_core::Complex64;

use crate::exit::CliError;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_IM_PARTS: [f64; 3] = [0.5, 1.0, 2.0];
pub const OUT_DIR_ENV: &str = "SUBORD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "subord-out";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    ConvolveAdd,
    ConvolveMult,
    Eval,
    Verify,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub n: Option<usize>,
    pub im_parts: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

/// Contents of a `--config` file. Every field is optional; flags win.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<CommandKind>,
    /// Each entry is a family object (`{"family": ...}`), a serialised
    /// measure (`{"type": ...}`), a file path or a shorthand string.
    #[serde(default)]
    pub measures: Vec<Value>,
    pub grid: Option<GridConfig>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<OutputConfig>,
    /// Smoothing heights for density recovery, decreasing.
    pub etas: Option<Vec<f64>>,
    /// Grid size used to discretise named families.
    pub measure_grid_n: Option<usize>,
    /// Moment order for `convolve-mult`.
    pub order: Option<usize>,
    /// Number of angles and Poisson radius for the `convolve-mult` density.
    pub angles: Option<usize>,
    pub smoothing_radius: Option<f64>,
    /// `eval` transform and evaluation points as `[re, im]`.
    pub transform: Option<String>,
    pub points: Option<Vec<[f64; 2]>>,
    /// `verify` experiment name and its settings.
    pub identity: Option<String>,
    pub experiment: Option<Value>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn expect_command(&self, kind: CommandKind) -> Result<(), CliError> {
        match self.command {
            Some(c) if c != kind => Err(CliError::config(format!(
                "config is for `{c:?}` but `{kind:?}` was requested"
            ))),
            _ => Ok(()),
        }
    }
}

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub tol: Option<f64>,
    /// Real grid as `lo:hi:n`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<String>,
    /// Imaginary parts of the evaluation rows, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub im: Option<Vec<f64>>,
}

/// Settings common to all commands after merging flags over the file.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub tol: f64,
    pub format: Format,
    pub out_dir: Option<PathBuf>,
    pub grid: Option<(f64, f64, usize)>,
    pub im_parts: Vec<f64>,
}

pub fn resolve_common(args: &CommonArgs, cfg: &RunConfig) -> Result<Resolved, CliError> {
    let tol = args.tol.or(cfg.tol).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::config(format!("tolerance must be positive, got {tol}")));
    }
    let output = cfg.output.clone().unwrap_or_default();
    let format = args.format.or(output.format).unwrap_or(Format::Json);
    let out_dir = args
        .out
        .clone()
        .or(output.path)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));

    let file_grid = cfg.grid.clone().unwrap_or_default();
    let grid = match &args.grid {
        Some(text) => Some(parse_grid(text)?),
        None => match (file_grid.lo, file_grid.hi, file_grid.n) {
            (Some(lo), Some(hi), Some(n)) => Some((lo, hi, n)),
            (None, None, None) => None,
            _ => return Err(CliError::config("grid needs all of lo, hi and n")),
        },
    };
    if let Some((lo, hi, n)) = grid {
        UniformGrid::new(lo, hi, n).map_err(|e| CliError::config(e.to_string()))?;
    }
    let im_parts = args
        .im
        .clone()
        .or(file_grid.im_parts)
        .unwrap_or_else(|| DEFAULT_IM_PARTS.to_vec());
    if im_parts.is_empty() || im_parts.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(CliError::config(format!("imaginary parts must be positive, got {im_parts:?}")));
    }
    Ok(Resolved {
        tol,
        format,
        out_dir,
        grid,
        im_parts,
    })
}

pub fn parse_grid(text: &str) -> Result<(f64, f64, usize), CliError> {
    let bad = || CliError::config(format!("grid must look like lo:hi:n, got `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo = parts[0].trim().parse::<f64>().map_err(|_| bad())?;
    let hi = parts[1].trim().parse::<f64>().map_err(|_| bad())?;
    let n = parts[2].trim().parse::<usize>().map_err(|_| bad())?;
    Ok((lo, hi, n))
}

/// Parses `1+2i`, `-0.5i`, `i`, `3`.
pub fn parse_complex(text: &str) -> Result<Complex64, CliError> {
    let cleaned: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    Complex64::from_str(&cleaned)
        .ok()
        .filter(|z| z.re.is_finite() && z.im.is_finite())
        .ok_or_else(|| CliError::config(format!("cannot parse complex number `{text}`")))
}

/// Reads one measure description.
pub fn parse_measure(input: &Value, grid_n: usize) -> Result<Measure, CliError> {
    match input {
        Value::String(s) => parse_measure_str(s, grid_n),
        Value::Object(map) if map.contains_key("family") => {
            let spec: StandardMeasure =
                serde_json::from_value(input.clone()).map_err(|e| CliError::config(e.to_string()))?;
            spectral::make_standard(&spec, grid_n).map_err(|e| CliError::config(e.to_string()))
        }
        Value::Object(_) => Measure::from_json_value(input.clone()).map_err(|e| CliError::config(e.to_string())),
        other => Err(CliError::config(format!("cannot read a measure from {other}"))),
    }
}

fn parse_measure_str(s: &str, grid_n: usize) -> Result<Measure, CliError> {
    let trimmed = s.trim();
    if trimmed.starts_with('{') {
        let v: Value = serde_json::from_str(trimmed).map_err(|e| CliError::config(format!("inline measure: {e}")))?;
        return parse_measure(&v, grid_n);
    }
    let path = Path::new(trimmed);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        return parse_measure(&v, grid_n);
    }
    let spec = parse_shorthand(trimmed)?;
    spectral::make_standard(&spec, grid_n).map_err(|e| CliError::config(e.to_string()))
}

/// `name`, `name:p1,p2` or `name(p1,p2)`; `dirac:t` is a unit atom.
fn parse_shorthand(s: &str) -> Result<StandardMeasure, CliError> {
    let (name, params) = match s.find([':', '(']) {
        Some(i) => (&s[..i], s[i + 1..].trim_end_matches(')')),
        None => (s, ""),
    };
    let values = params
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| CliError::config(format!("bad parameters in measure `{s}`")))?;
    let name = name.trim().replace('-', "_");
    if name == "dirac" {
        if values.len() != 1 {
            return Err(CliError::config("`dirac` takes one position"));
        }
        return Ok(StandardMeasure::Atomic {
            atoms: vec![[values[0], 1.0]],
        });
    }
    StandardMeasure::parse(&name, &values).map_err(|e| CliError::config(e.to_string()))
}
