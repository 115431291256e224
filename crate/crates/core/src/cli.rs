//! Command-line front end. Every subcommand is a thin wrapper over a library call.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{dump_config, load_config};
use crate::error::{Error, Result};
use crate::gpc::Normalization;
use crate::output::{compare_dirs, kernels_report, run_to_dir, COMPARE_TOLERANCE};
use crate::simulate::{RunMode, SimulationConfig};

#[derive(Debug, Parser)]
#[command(
    name = "sdgbp",
    version,
    about = "Stochastic Galerkin DG Boltzmann-Poisson solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    StochasticRecombination,
    NoRecombination,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    Paper,
    Orthonormal,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation and write a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: ./run_<mode>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Override the final time [ps].
        #[arg(long)]
        final_time: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the kernel matrices and constants as JSON.
    Kernels {
        #[arg(long = "N", default_value_t = 30.0)]
        n: f64,
        #[arg(long, value_enum, default_value_t = BasisArg::Paper)]
        basis: BasisArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the moment series of two run directories.
    Compare {
        run_a: PathBuf,
        run_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = COMPARE_TOLERANCE)]
        tolerance: f64,
    },
    /// Print the default configuration.
    DumpConfig {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            out,
            mode,
            final_time,
            threads,
        } => {
            let mut cfg: SimulationConfig = load_config(&config)?;
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::StochasticRecombination => RunMode::StochasticRecombination,
                    ModeArg::NoRecombination => RunMode::NoRecombination,
                };
            }
            if let Some(t) = final_time {
                cfg.final_time = t;
            }
            if let Some(n) = threads {
                cfg.threads = n;
            }
            cfg.validate()?;
            let dir = out.unwrap_or_else(|| {
                PathBuf::from(match cfg.mode {
                    RunMode::StochasticRecombination => "run_stochastic_recombination",
                    RunMode::NoRecombination => "run_no_recombination",
                })
            });
            log::info!(
                "running {:?} to {} ps into {}",
                cfg.mode,
                cfg.final_time,
                dir.display()
            );
            let s = run_to_dir(cfg, &dir)?;
            log::info!(
                "done: {} steps, {} files in {}",
                s.manifest.steps,
                s.manifest.files.len(),
                s.dir.display()
            );
            Ok(())
        }
        Command::Kernels { n, basis, out } => {
            let norm = match basis {
                BasisArg::Paper => Normalization::PaperUnnormalized,
                BasisArg::Orthonormal => Normalization::Orthonormal,
            };
            let v = kernels_report(n, norm)?;
            emit(&serde_json::to_string_pretty(&v).expect("json"), out.as_ref())
        }
        Command::Compare {
            run_a,
            run_b,
            out,
            tolerance,
        } => {
            let dir = out.unwrap_or_else(|| PathBuf::from("compare"));
            let rep = compare_dirs(&run_a, &run_b, tolerance, Some(&dir))?;
            print!("{}", rep.summary());
            Ok(())
        }
        Command::DumpConfig { out } => emit(&dump_config(&SimulationConfig::default()), out.as_ref()),
    }
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["sdgbp", "frobnicate"]), 2);
        assert_eq!(
            main_with_args(["sdgbp", "run", "--config", "/no/such/file.toml"]),
            2
        );
        assert_eq!(main_with_args(["sdgbp", "--help"]), 0);
    }

    #[test]
    fn kernels_and_dump_config_write_files() {
        let dir = tempfile::tempdir().unwrap();
        let k = dir.path().join("k.json");
        assert_eq!(
            main_with_args(["sdgbp", "kernels", "--N", "3000", "--out", k.to_str().unwrap()]),
            0
        );
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&k).unwrap()).unwrap();
        assert_eq!(v["constants"]["N"].as_f64().unwrap(), 3000.0);
        let c = dir.path().join("c.toml");
        assert_eq!(
            main_with_args(["sdgbp", "dump-config", "--out", c.to_str().unwrap()]),
            0
        );
        assert_eq!(load_config(&c).unwrap(), SimulationConfig::default());
    }
}
