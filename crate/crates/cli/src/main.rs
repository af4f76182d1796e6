use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mchom::error::{Error, Result};
use mchom::experiment::runner::{self, cells_table, prepare, read_fine, run_coarse_stage, run_fine_stage, write_coarse, write_fine};
use mchom::experiment::{list_presets, load_preset, run_to_dir, ExperimentConfig};
use mchom::par::Exec;

#[derive(Parser)]
#[command(name = "mchom", version, about = "Multicontinuum upscaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the fine reference simulation and store every snapshot.
    RunFine(Common),
    /// Run the coarse models on snapshots stored by `run-fine`.
    RunCoarse {
        #[command(flatten)]
        common: Common,
        /// Directory holding the fine snapshots (defaults to --out).
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Solve the cell problems of every coarse block for the initial field.
    CellsSolve(Common),
    /// Full pipeline: fine run, coarse runs and error report.
    Compare(Common),
    /// Print the names of the bundled presets.
    ListPresets,
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Bundled preset name.
    #[arg(long)]
    preset: Option<String>,
    /// Override a configuration value, e.g. `--set fine.steps=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_toml_with(&text, &self.overrides)
            }
            (None, Some(name)) => load_preset(name, &self.overrides),
            (None, None) => Err(Error::Config("either --config or --preset is required".into())),
        }
    }

    fn exec(&self) -> Exec {
        if self.sequential {
            Exec::Sequential
        } else {
            Exec::default()
        }
    }
}

fn print_errors(dir: &Path) -> Result<()> {
    print!("{}", fs::read_to_string(dir.join("errors.csv"))?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ListPresets => {
            for name in list_presets() {
                println!("{name}");
            }
        }
        Command::Compare(common) => {
            let cfg = common.load()?;
            run_to_dir(&cfg, &common.out, common.exec())?;
            print_errors(&common.out)?;
        }
        Command::RunFine(common) => {
            let cfg = common.load()?;
            let p = prepare(&cfg, common.exec())?;
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("config.toml"), cfg.to_toml())?;
            let stage = run_fine_stage(&p)?;
            write_fine(&common.out, &p, &stage.snapshots, true)?;
            fs::write(common.out.join("manifest.txt"), runner::manifest(&cfg, "fine-complete"))?;
            info!("max CFL {:.4}, max conservation residual {:.3e}", stage.max_cfl, stage.max_conservation_residual);
            println!("{} snapshots written to {}", stage.snapshots.len(), common.out.join("fine").display());
        }
        Command::RunCoarse { common, from } => {
            let cfg = common.load()?;
            let p = prepare(&cfg, common.exec())?;
            let snapshots = read_fine(from.as_deref().unwrap_or(&common.out), &p)?;
            let stage = run_coarse_stage(&p, &snapshots)?;
            write_coarse(&common.out, &p, &stage)?;
            fs::write(common.out.join("manifest.txt"), runner::manifest(&cfg, "complete"))?;
            print_errors(&common.out)?;
        }
        Command::CellsSolve(common) => {
            let cfg = common.load()?;
            let p = prepare(&cfg, common.exec())?;
            let (table, residual) = cells_table(&p)?;
            fs::create_dir_all(&common.out)?;
            fs::write(common.out.join("cells.csv"), table)?;
            println!("max constraint residual {residual:.3e}");
            if residual > cfg.solver.constraint_tol {
                return Err(Error::Invariant(format!(
                    "constraint residual {residual:.3e} exceeds {:.1e}",
                    cfg.solver.constraint_tol
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
