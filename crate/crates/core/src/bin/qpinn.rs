use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qpinn::cli::{cmd_infer, cmd_reference, cmd_sweep, cmd_train, SweepAxis};
use qpinn::config::RunConfig;
use qpinn::{Error, Result};

#[derive(Parser)]
#[command(name = "qpinn", version, about = "Hybrid quantum PINN for two-species reaction-diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to QPINN_OUT, then output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; falls back to QPINN_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reference problem on the configured grid.
    Reference(Common),
    /// Train one run per replicate seed.
    Train(Common),
    /// Evaluate a checkpoint on the reference grid.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Keep every n-th grid node along each axis.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Skip the reference solve and error report.
        #[arg(long)]
        no_reference: bool,
    },
    /// Train every configured variant across values of one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// qubits, layers or epochs.
        #[arg(long)]
        axis: SweepAxis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<usize>,
    },
}

fn setup(c: &Common) -> Result<(Option<RunConfig>, RunConfig, PathBuf)> {
    let threads = match c.threads {
        Some(n) => Some(n),
        None => match std::env::var("QPINN_THREADS") {
            Ok(s) => Some(
                s.parse()
                    .map_err(|_| Error::Config(format!("QPINN_THREADS = {s:?} is not a count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let explicit = c.config.as_deref().map(RunConfig::load).transpose()?;
    let mut cfg = match &explicit {
        Some(cfg) => cfg.clone(),
        None => RunConfig::default_for(1)?,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| std::env::var_os("QPINN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone());
    cfg.output.dir = out.clone();
    let explicit = explicit.map(|_| cfg.clone());
    Ok((explicit, cfg, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reference(c) => {
            let (_, cfg, out) = setup(&c)?;
            let g = cmd_reference(&cfg, &out)?;
            println!("wrote {} snapshots to {}", g.times.len(), out.display());
        }
        Command::Train(c) => {
            let (_, cfg, out) = setup(&c)?;
            for r in cmd_train(&cfg, &out)? {
                println!("{} best_loss={:.6e} epochs={}", r.run_id, r.best_loss, r.history.len());
            }
        }
        Command::Infer {
            common,
            checkpoint,
            stride,
            no_reference,
        } => {
            let (explicit, _, out) = setup(&common)?;
            let o = cmd_infer(&checkpoint, explicit.as_ref(), stride, !no_reference, &out)?;
            if let Some(rep) = o.report {
                println!("mse_A={:.6e} mse_S={:.6e}", rep.activator.mse, rep.substrate.mse);
            }
        }
        Command::Sweep { common, axis, values } => {
            let (_, cfg, out) = setup(&common)?;
            for r in cmd_sweep(&cfg, axis, &values, &out)? {
                let status = r.failure.as_deref().unwrap_or("ok");
                println!("{} {} {} {}", r.value, r.variant.name(), r.run_id, status);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
