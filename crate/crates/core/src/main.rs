use clap::{Args, Parser, Subcommand};
use impactlab::experiments::*;
use serde::{de::DeserializeOwned, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

/// Experiments for a transient price-impact model.
#[derive(Parser)]
#[command(name = "impactlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON or TOML config; defaults reproduce the acceptance settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    /// Results root; each run writes to <out>/<experiment>/<timestamp>/.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Metric ordering, axioms and certificates on random paths.
    Metric(Common),
    /// Proceeds of one strategy on one market path, in several forms.
    Proceeds(Common),
    /// Approximating sequences of a strategy and their distances.
    Approx(Common),
    /// Optimal liquidation (impact-fixing or finite-horizon monotone).
    Liquidate(Common),
    /// Distances between proceeds of approximations along refinement levels.
    Converge(Common),
    /// Post-trade pricing of split blocks against the consistent value.
    Pitfall(Common),
    /// Martingale test of the liquidation value under drift adjustment.
    Noarb(Common),
    /// Monte Carlo liquidation times against their closed-form mean.
    Hittime(Common),
    /// Agreement of all proceeds forms on random step strategies.
    Oracle(Common),
    /// Unit block sales against their closed form.
    Blocks(Common),
    /// Constant strategies across the market matrix.
    Zero(Common),
}

fn run<C: Serialize + DeserializeOwned + Default>(
    common: &Common,
    f: fn(&C, u64) -> impactlab::Result<Report>,
) -> impactlab::Result<bool> {
    let cfg: C = load_config(common.config.as_deref())?;
    let report = f(&cfg, common.seed)?;
    for line in report.lines() {
        println!("{line}");
    }
    let dir = write_run(&common.out, &cfg, &report)?;
    println!("wrote {}", dir.display());
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Metric(c) => run(c, run_metric_suite),
        Command::Proceeds(c) => run(c, run_proceeds),
        Command::Approx(c) => run(c, run_approx),
        Command::Liquidate(c) => run(c, run_liquidation),
        Command::Converge(c) => run(c, run_convergence_study),
        Command::Pitfall(c) => run(c, run_adhoc_pitfall),
        Command::Noarb(c) => run(c, run_noarbitrage_mc),
        Command::Hittime(c) => run(c, run_hitting_time_mc),
        Command::Oracle(c) => run(c, run_oracle_equivalence),
        Command::Blocks(c) => run(c, run_block_closed_form),
        Command::Zero(c) => run(c, run_zero_strategy),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
