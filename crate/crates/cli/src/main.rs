use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freecir_cli::{
    run_derive, run_simulate, run_verify, CliError, DeriveMode, DeriveOptions, Suite, VerifyOptions,
};

#[derive(Parser)]
#[command(
    name = "freecir",
    version,
    about = "Free CIR processes: simulation, checks and Ito calculus"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble from a JSON config and write trajectory.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a verification suite and write verify_<suite>.json.
    Verify(VerifyArgs),
    /// Symbolic rewriting: reduce, d-square or compare.
    Derive(DeriveArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// semicircle, freeness, isometry, trace-ode or feller.
    #[arg(long)]
    suite: String,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// isometry: separate config for the classical side.
    #[arg(long)]
    vbar_config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DeriveArgs {
    /// reduce, d-square or compare.
    mode: String,
    #[arg(long)]
    expr: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
    /// d-square: polynomial in the process (default: its square).
    #[arg(long)]
    poly: Option<String>,
    /// d-square: process symbol (inferred when omitted).
    #[arg(long)]
    process: Option<String>,
    /// compare: right-hand side.
    #[arg(long)]
    against: Option<String>,
    /// Treat every symbol as commuting and phi as the identity.
    #[arg(long)]
    commutative: bool,
    /// Comma-separated symbols that commute with each other.
    #[arg(long, value_delimiter = ',')]
    commute: Vec<String>,
    /// Comma-separated central scalar symbols.
    #[arg(long = "scalar", value_delimiter = ',')]
    scalars: Vec<String>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out } => {
            let b = run_simulate(&config, out.as_deref())?;
            println!(
                "{} of {} runs completed; wrote {} and {}",
                b.summary.runs_completed,
                b.summary.runs_requested,
                b.trajectory_path.display(),
                b.summary_path.display()
            );
            Ok(())
        }
        Command::Verify(a) => {
            let suite: Suite = a.suite.parse()?;
            let opts = VerifyOptions {
                dim: a.dim,
                runs: a.runs,
                seed: a.seed,
                config: a.config,
                vbar_config: a.vbar_config,
                out_dir: a.out,
            };
            let r = run_verify(suite, &opts)?;
            for c in &r.checks {
                let se = c.std_err.map_or(String::new(), |s| format!(" se={s:.3e}"));
                println!(
                    "{} {}: estimate={:.6e} target={:.6e}{se} rule={} tol={:.3e}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.estimate,
                    c.target,
                    c.rule,
                    c.tolerance
                );
            }
            for n in &r.notes {
                println!("note {}: {:.6e} ({})", n.name, n.value, n.remark);
            }
            if r.pass {
                Ok(())
            } else {
                let failed = r.checks.iter().filter(|c| !c.pass).count();
                Err(CliError::CheckFailed(format!(
                    "{failed} of {} checks failed in suite {suite}",
                    r.checks.len()
                )))
            }
        }
        Command::Derive(a) => {
            let mode: DeriveMode = a.mode.parse()?;
            let opts = DeriveOptions {
                expr: a.expr,
                file: a.file,
                poly: a.poly,
                process: a.process,
                against: a.against,
                commutative: a.commutative,
                commute: a.commute,
                scalars: a.scalars,
            };
            let out = run_derive(mode, &opts)?;
            println!("{}", out.text);
            match out.equal {
                Some(false) => Err(CliError::CheckFailed("expressions differ".into())),
                _ => Ok(()),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads;
    let result = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli)),
            Err(e) => Err(CliError::Input(format!(
                "cannot build a pool of {n} threads: {e}"
            ))),
        },
        None => run(cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(&e)
        }
    }
}
