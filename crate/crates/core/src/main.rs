use clap::{Parser, Subcommand};
use slo_vmc::oracle::{ed_correlators, ed_ground_state};
use slo_vmc::runner::{
    emit_report, load_config, load_fixtures, persist_outcome, read_traces_csv, run_trials,
    save_fixture, EdFixture, FixtureCorrelators,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "slo-vmc",
    about = "RBM ground-state search for tilted Ising models with stochastic \
             reconfiguration and sequential local (block-sweep) optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the seeded multi-trial optimization and write traces, the best
    /// checkpoint, correlators and report tables.
    Run {
        /// Config file (key = value lines, dotted section names)
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides run.out from the config)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override run.trials
        #[arg(long)]
        trials: Option<usize>,
        /// Override run.seed
        #[arg(long)]
        seed: Option<u64>,
        /// ED fixture table to look up the reference energy
        #[arg(long)]
        fixtures: Option<PathBuf>,
        /// Compute the ED reference on the fly (small systems only)
        #[arg(long)]
        ed: bool,
    },
    /// Compute an exact-diagonalization reference and store it in a fixture
    /// table keyed by (lattice, J, h_x, h_z).
    Ed {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fixtures: PathBuf,
    },
    /// Regenerate report tables from a stored trace file.
    Report {
        /// traces.csv produced by `run`
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Config file, used with --fixtures to find the reference energy
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> slo_vmc::Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            trials,
            seed,
            fixtures,
            ed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = out {
                cfg.out_dir = dir;
            }
            let reference = if ed {
                Some(ed_ground_state(&cfg.hamiltonian()?)?.ground_energy)
            } else if let Some(path) = fixtures {
                load_fixtures(&path)?
                    .get(&cfg.fixture_key())
                    .map(|f| f.ground_energy)
            } else {
                None
            };
            let outcome = run_trials(&cfg)?;
            let out_dir = cfg.out_dir.clone();
            persist_outcome(&cfg, &outcome, &out_dir)?;
            emit_report(&outcome.traces, reference, &outcome.failures, &out_dir)?;
            let best = outcome
                .traces
                .iter()
                .find(|t| t.trial == outcome.best_trial)
                .and_then(|t| t.trace.final_energy())
                .unwrap_or(f64::NAN);
            println!(
                "best trial {} final energy {best}{}",
                outcome.best_trial,
                reference
                    .map(|r| format!(" (eps = {:.3e})", (best - r).abs() / r.abs()))
                    .unwrap_or_default()
            );
            println!("outputs written to {}", out_dir.display());
            Ok(())
        }
        Command::Ed { config, fixtures } => {
            let cfg = load_config(&config)?;
            let h = cfg.hamiltonian()?;
            let result = ed_ground_state(&h)?;
            let correlators = if cfg.dimensionality == 1 {
                let rep = ed_correlators(&result, &h.lattice)?;
                Some(FixtureCorrelators {
                    distances: rep.distances,
                    ferro: rep.ferro,
                    antiferro: rep.antiferro,
                })
            } else {
                None
            };
            let key = cfg.fixture_key();
            save_fixture(
                &fixtures,
                &key,
                EdFixture {
                    ground_energy: result.ground_energy,
                    gap: result.gap,
                    correlators,
                },
            )?;
            println!(
                "{key}: E_gs = {}, gap = {} -> {}",
                result.ground_energy,
                result.gap,
                fixtures.display()
            );
            Ok(())
        }
        Command::Report {
            traces,
            out,
            config,
            fixtures,
        } => {
            let trial_traces = read_traces_csv(&traces)?;
            let reference = match (config, fixtures) {
                (Some(cfg_path), Some(fix_path)) => {
                    let cfg = load_config(&cfg_path)?;
                    load_fixtures(&fix_path)?
                        .get(&cfg.fixture_key())
                        .map(|f| f.ground_energy)
                }
                _ => None,
            };
            emit_report(&trial_traces, reference, &[], &out)?;
            println!("report written to {}", out.display());
            Ok(())
        }
    }
}
