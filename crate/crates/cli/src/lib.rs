//! Configuration-driven front end for the tree tensor network engine.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Context;
pub use config::RunConfig;
pub use error::{CliError, CliResult};

use config::MethodName;

#[derive(Debug, Parser)]
#[command(name = "treetn", version, about = "Tree tensor network operators and time evolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Also build the operator by sequential SVDs of the dense matrix and
    /// compare bond dimensions.
    #[arg(long, global = true)]
    pub compare_svd: bool,

    /// Overrides the method of the configuration.
    #[arg(long, global = true, value_enum)]
    pub method: Option<MethodName>,

    #[arg(long, global = true)]
    pub quiet: bool,

    /// Worker threads for scans.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Compile the Hamiltonian into a tree operator and report its size.
    BuildTtno,
    /// Time-evolve the initial state and record the measured quantities.
    Evolve,
    /// Evolve and compare with the state-vector reference.
    CompareExact,
    /// Splitting error against step size for a random two-qubit model.
    TrotterScan,
}

impl Cli {
    pub fn execute(&self) -> CliResult<()> {
        let cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None if self.command == Command::TrotterScan => RunConfig::default(),
            None => return Err(CliError::Config("--config is required".into())),
        };
        std::fs::create_dir_all(&self.out)?;
        let ctx = Context {
            out_dir: self.out.clone(),
            seed: self.seed,
            method: self.method,
            compare_svd: self.compare_svd,
            quiet: self.quiet,
            jobs: self.jobs,
        };
        match self.command {
            Command::BuildTtno => commands::build_ttno(&cfg, &ctx).map(|_| ()),
            Command::Evolve => commands::evolve(&cfg, &ctx).map(|_| ()),
            Command::CompareExact => commands::compare_exact(&cfg, &ctx).map(|_| ()),
            Command::TrotterScan => commands::trotter_scan(&cfg, &ctx).map(|_| ()),
        }
    }
}
