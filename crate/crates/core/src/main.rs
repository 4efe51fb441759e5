use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lsenkf::config::RunConfig;
use lsenkf::experiment::{
    invert, read_data, resolve_output_dir, run_experiment, write_data_outputs,
    write_inversion_outputs, Setup,
};
use lsenkf::field::read_nodal_csv;
use lsenkf::metrics::compute_metrics;
use lsenkf::{Error, Result};

/// Level-set ensemble Kalman reconstruction of acoustic sources.
#[derive(Debug, Parser)]
#[command(name = "lsenkf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArg {
    /// Run configuration (`key = value` lines); defaults are used when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the data and inversion meshes and write them out.
    Mesh(ConfigArg),
    /// Generate synthetic data for the configured phantom.
    Forward(ConfigArg),
    /// Invert a data file on the inversion mesh.
    Invert {
        #[command(flatten)]
        config: ConfigArg,
        /// Data CSV; defaults to `data.csv` in the output directory.
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
    },
    /// Generate data and invert it.
    Run(ConfigArg),
    /// Compare a nodal source estimate on the inversion mesh with the truth.
    Metrics {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "PATH")]
        estimate: PathBuf,
        /// Nodal truth CSV; the configured phantom is used when omitted.
        #[arg(long, value_name = "PATH")]
        truth: Option<PathBuf>,
    },
}

fn load(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(p) => RunConfig::read(p),
        None => Ok(RunConfig::default()),
    }
}

fn write_config_echo(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Mesh(arg) => {
            let cfg = load(&arg)?;
            let setup = Setup::build(&cfg)?;
            let dir = resolve_output_dir(&cfg);
            write_config_echo(&cfg, &dir)?;
            setup.fine_mesh.write(&dir.join("mesh_fine.txt"))?;
            setup.coarse_mesh.write(&dir.join("mesh_coarse.txt"))?;
            println!(
                "fine mesh: {} nodes, {} elements; coarse mesh: {} nodes, {} elements",
                setup.fine_mesh.node_count(),
                setup.fine_mesh.element_count(),
                setup.coarse_mesh.node_count(),
                setup.coarse_mesh.element_count()
            );
        }
        Command::Forward(arg) => {
            let cfg = load(&arg)?;
            let setup = Setup::build(&cfg)?;
            let data = setup.generate_data(&cfg)?;
            let dir = resolve_output_dir(&cfg);
            write_config_echo(&cfg, &dir)?;
            for p in write_data_outputs(&cfg, &setup, &data, &dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Invert { config, data } => {
            let cfg = load(&config)?;
            let setup = Setup::build(&cfg)?;
            let dir = resolve_output_dir(&cfg);
            let data_path = data.unwrap_or_else(|| dir.join("data.csv"));
            let data = read_data(&data_path, &setup)?;
            let outcome = invert(&cfg, &setup, &data)?;
            for p in write_inversion_outputs(&cfg, &setup, &outcome, &dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Run(arg) => {
            let cfg = load(&arg)?;
            let (outcome, files) = run_experiment(&cfg)?;
            for p in files {
                println!("wrote {}", p.display());
            }
            for (v, m) in &outcome.metrics {
                println!(
                    "{}: relative L2 error {:.4}, Jaccard {:.4}",
                    v.name(),
                    m.relative_l2_error,
                    m.jaccard
                );
            }
        }
        Command::Metrics {
            config,
            estimate,
            truth,
        } => {
            let cfg = load(&config)?;
            let setup = Setup::build(&cfg)?;
            let est = read_nodal_csv(&estimate)?;
            let truth = match truth {
                Some(p) => read_nodal_csv(&p)?,
                None => setup.truth_coarse()?.into_inner(),
            };
            let mesh = &setup.coarse_mesh;
            if est.len() != mesh.node_count() || truth.len() != mesh.node_count() {
                return Err(Error::Config(format!(
                    "fields have {} and {} values but the inversion mesh has {} nodes",
                    est.len(),
                    truth.len(),
                    mesh.node_count()
                )));
            }
            let m = compute_metrics(&est, &truth, &mesh.lumped_areas(), &setup.threshold)?;
            println!("relative_l2_error = {:?}", m.relative_l2_error);
            println!("jaccard = {:?}", m.jaccard);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
