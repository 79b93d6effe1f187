use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hartree_lab::LabError;
use hartree_lab_cli::acceptance::{self, Scale};
use hartree_lab_cli::commands::{self, RunContext};
use hartree_lab_cli::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "hartree-lab", version, about = "Boosted Hartree solitary waves: ground states, spectra, dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// experiment configuration (`section.key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides `run.out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads for independent family columns and scaling runs
    #[arg(long, global = true, env = "HARTREE_LAB_THREADS", default_value_t = 1)]
    workers: usize,
    /// random seed (overrides `run.seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// checkpoint to resume `evolve` from
    #[arg(long, global = true)]
    resume: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the family table and write the node states
    Groundstate,
    /// Kernel verdict, boosted spectrum and coercivity estimate
    Spectrum,
    /// Symplectic-form reports at every family node
    Omega,
    /// Evolve the initial soliton
    Evolve,
    /// Evolve and track the soliton parameters
    Track,
    /// Integrate the effective point-particle equations only
    Effective,
    /// Tracked runs over the epsilon ladder with exponent fits
    Scaling,
    /// Run the acceptance suite; exit 0 iff every criterion passes
    Verify,
}

fn load(cli: &Cli) -> Result<RunContext, LabError> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let cfg = ExperimentConfig::parse(&text)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.out.clone());
    if let Some(r) = &cli.resume {
        if !r.exists() {
            return Err(LabError::Config {
                line: 0,
                key: "--resume".into(),
                message: format!("checkpoint {} does not exist", r.display()),
            });
        }
    }
    std::fs::create_dir_all(&out)?;
    Ok(RunContext {
        seed: cli.seed.unwrap_or(cfg.seed),
        cfg,
        config_text: text,
        out,
        workers: cli.workers.max(1),
        resume: cli.resume.clone(),
    })
}

fn run(cli: &Cli, ctx: &RunContext) -> Result<bool, LabError> {
    match cli.command {
        Command::Groundstate => commands::groundstate(ctx).map(|_| true),
        Command::Spectrum => commands::spectrum(ctx),
        Command::Omega => commands::omega(ctx).map(|_| true),
        Command::Evolve => commands::evolve(ctx).map(|_| true),
        Command::Track => commands::track(ctx).map(|_| true),
        Command::Effective => commands::effective(ctx).map(|_| true),
        Command::Scaling => commands::scaling(ctx),
        Command::Verify => {
            let results = acceptance::run_all(Scale::from_env(), Some(&ctx.out));
            println!("{}", acceptance::summary_line(&results));
            Ok(results.iter().all(|r| r.pass))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let ctx = match load(&cli) {
        Ok(c) => c,
        Err(e @ LabError::Config { .. }) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &ctx) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
