//! `disclab`: partition functions, moments and volume bounds for positive
//! even-degree forms.
//!
//! Exit codes: 0 success, 1 a reported check failed, 2 invalid input
//! (usage, parse, dimension), 3 the action is not positive definite or has
//! odd degree, 4 numerical failure.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use disclab::polyform::parse_form;
use disclab::sdp::Domain;
use disclab::spherequad::SphereQuadrature;
use disclab::Error;

use commands::{Config, VolumeMode};
use report::OutputFormat;

#[derive(Parser)]
#[command(name = "disclab", version, about = "Integral discriminants of positive even-degree forms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Z(g) by direct quadrature and by both fixed-point identities.
    Partition(Common),
    /// Moments of exp(-g) dx and of the sublevel set {g <= 1}.
    Moments {
        #[command(flatten)]
        common: Common,
        /// Largest total degree (defaults to deg g).
        #[arg(long)]
        max_deg: Option<u32>,
    },
    /// Recover g from the moments of exp(-g) dx.
    Recover(Common),
    /// Run the identity suite and print PASS/FAIL per item.
    Verify(Common),
    /// Moment hierarchy bounds on vol{g <= 1}.
    Volume {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        t_max: u32,
        /// Add the Stokes equalities (default).
        #[arg(long, overrides_with = "no_stokes")]
        stokes: bool,
        /// Solve the plain relaxation only.
        #[arg(long, overrides_with = "stokes")]
        no_stokes: bool,
        /// Solve both relaxations and compare them.
        #[arg(long)]
        compare: bool,
    },
    /// Maximum-entropy values and the duality gap.
    Entropy(Common),
}

#[derive(Args)]
struct Common {
    /// Number of variables d.
    #[arg(long)]
    dim: usize,
    /// The action, e.g. "x1^4 + x2^4".
    #[arg(long, conflicts_with = "action_file", required_unless_present = "action_file")]
    action: Option<String>,
    /// Read the action from a file.
    #[arg(long)]
    action_file: Option<PathBuf>,
    /// Starting exactness of the sphere quadrature.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(4..=64))]
    quad_exactness: u64,
    /// Solver tolerance, within [1e-9, 1e-2].
    #[arg(long, default_value_t = 1e-6, value_parser = parse_tol)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    output: OutputFormat,
    #[arg(long, value_enum, default_value_t = DomainArg::Box)]
    domain: DomainArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Box,
    Ball,
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (1e-9..=1e-2).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [1e-9, 1e-2]"))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Syntax { .. }
        | Error::MixedDegree { .. }
        | Error::DimensionMismatch { .. }
        | Error::InvalidInput(_)
        | Error::Dump { .. } => 2,
        Error::AssumptionViolation { .. } | Error::OddDegree { .. } => 3,
        Error::QuadratureNonConvergence { .. }
        | Error::NonFinite { .. }
        | Error::IllConditioned { .. }
        | Error::Factorization { .. }
        | Error::PsdViolation { .. }
        | Error::UnsupportedDimension(_) => 4,
    }
}

fn config(c: &Common) -> disclab::Result<Config> {
    let text = match (&c.action, &c.action_file) {
        (Some(a), _) => a.clone(),
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?,
        (None, None) => unreachable!("clap requires one of --action/--action-file"),
    };
    if c.dim == 0 {
        return Err(Error::InvalidInput("--dim must be at least 1".into()));
    }
    let action = parse_form(text.trim(), c.dim)?;
    Ok(Config {
        action,
        quad: SphereQuadrature::new(c.dim, c.quad_exactness as usize)?,
        tol: c.tol,
        seed: c.seed,
        domain: match c.domain {
            DomainArg::Box => Domain::Box,
            DomainArg::Ball => Domain::Ball,
        },
    })
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DISCLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().map_err(|_| format!("DISCLAB_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err("DISCLAB_THREADS must be a positive integer".into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let common = match &cli.command {
        Command::Partition(c) | Command::Recover(c) | Command::Verify(c) | Command::Entropy(c) => c,
        Command::Moments { common, .. } | Command::Volume { common, .. } => common,
    };
    let result = config(common).and_then(|cfg| match &cli.command {
        Command::Partition(_) => commands::partition(&cfg),
        Command::Moments { max_deg, .. } => commands::moments(&cfg, *max_deg),
        Command::Recover(_) => commands::recover(&cfg),
        Command::Verify(_) => commands::verify(&cfg),
        Command::Entropy(_) => commands::entropy(&cfg),
        Command::Volume { t_max, no_stokes, compare, .. } => {
            let mode = if *compare {
                VolumeMode::Compare
            } else if *no_stokes {
                VolumeMode::Plain
            } else {
                VolumeMode::Stokes
            };
            commands::volume(&cfg, *t_max, mode)
        }
    });
    match result {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.render(common.output));
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
