//! `subord`: batch driver for free convolutions, transform evaluation and
//! the random-matrix verification experiments.

mod commands;
mod config;
mod exit;
mod output;

use std::io::Write;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Parser)]
#[command(name = "subord", version, about = "Free convolution through analytic subordination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Free additive convolution of two measures on the line.
    ConvolveAdd {
        /// Measures: shorthand (`semicircle:0,1`), inline JSON or a file.
        measures: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Free multiplicative convolution of two measures on the circle.
    ConvolveMult {
        measures: Vec<String>,
        #[arg(long)]
        order: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Pointwise transform values with domain margins.
    Eval {
        /// cauchy, f, h, circle-cauchy, psi, eta or subordination.
        transform: Option<String>,
        measures: Vec<String>,
        /// Evaluation points such as `i` or `0.3+0.2i`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<String>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Runs a random-matrix experiment and writes its report.
    Verify {
        /// prop32, prop33, thm36, lemma34 or thm31-block.
        identity: Option<String>,
        #[arg(long = "N")]
        n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::ConvolveAdd { measures, common } => commands::convolve_add(common, measures),
        Command::ConvolveMult { measures, order, common } => commands::convolve_mult(common, measures, *order),
        Command::Eval {
            transform,
            measures,
            at,
            common,
        } => commands::eval(common, transform.as_deref(), measures, at),
        Command::Verify {
            identity,
            n,
            trials,
            samples,
            common,
        } => commands::verify(
            common,
            &commands::VerifyArgs {
                identity: identity.as_deref(),
                n: *n,
                trials: *trials,
                samples: *samples,
            },
        ),
    };
    match result {
        Ok(outcome) => {
            // a closed pipe downstream is not an error of the run
            let _ = writeln!(std::io::stdout(), "{}", outcome.text);
            std::process::exit(outcome.code);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.code);
        }
    }
}
