use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rjls::cli::{self, Format, Options, Oracle};
use rjls::config::InstanceDocument;
use rjls::error::Error;

/// Second-moment analysis, control and filtering for Markov jump linear
/// systems driven by a time-reversed chain.
#[derive(Debug, Parser)]
#[command(name = "rjls", version)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral radius of the second-moment operator and MS-stability verdict.
    Stability { config: PathBuf },
    /// Optimal finite-horizon control: gains, Riccati trajectory, optimal cost.
    Control {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Linear minimum mean-square estimator: gains and error covariances.
    Filter {
        config: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Solve the control problem and its dual filter and compare them.
    Duality { config: PathBuf },
    /// Check the analytic recursions against an independent oracle.
    Simulate {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = OracleArg::Exact)]
        oracle: OracleArg,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for a JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, clap::Args)]
struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "rjls-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OracleArg {
    Exact,
    Montecarlo,
}

fn output_options(o: OutputArgs) -> Options {
    Options {
        out: Some(o.out),
        format: match o.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
        ..Options::default()
    }
}

fn run(args: Args) -> Result<bool, Error> {
    match args.command {
        Command::Stability { config } => {
            let r = cli::cmd_stability(&InstanceDocument::load(&config)?)?;
            println!("{r}");
            Ok(r.passed())
        }
        Command::Control { config, output } => {
            let r = cli::cmd_control(&InstanceDocument::load(&config)?, &output_options(output))?;
            println!("{r}");
            Ok(r.passed())
        }
        Command::Filter { config, output } => {
            let r = cli::cmd_filter(&InstanceDocument::load(&config)?, &output_options(output))?;
            println!("{r}");
            Ok(r.passed())
        }
        Command::Duality { config } => {
            let r = cli::cmd_duality(&InstanceDocument::load(&config)?)?;
            println!("{r}");
            Ok(r.passed())
        }
        Command::Simulate {
            config,
            oracle,
            samples,
            seed,
            out,
        } => {
            let opts = Options {
                out,
                samples,
                seed,
                oracle: match oracle {
                    OracleArg::Exact => Oracle::Exact,
                    OracleArg::Montecarlo => Oracle::MonteCarlo,
                },
                format: Format::Json,
            };
            let r = cli::cmd_simulate(&InstanceDocument::load(&config)?, &opts)?;
            println!("{r}");
            Ok(r.passed())
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
