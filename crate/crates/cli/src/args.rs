use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Simulation and classification of coordinated particle systems.
#[derive(Debug, Parser, Serialize)]
#[command(name = "coordsim", version)]
pub struct Cli {
    /// Base seed; replicate `r` uses stream `r` of this seed.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Number of replicates (defaults per subcommand).
    #[arg(long, global = true)]
    pub reps: Option<u64>,
    /// Primary output file; the manifest and summary go next to it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Particle count substituted for `infinity` initial counts.
    #[arg(long, global = true, default_value_t = 2000)]
    pub trunc: u64,
    /// Worker threads for replicate parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct SystemArg {
    /// System configuration (TOML, or JSON by extension).
    #[arg(long)]
    pub system: PathBuf,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Tabulate block rates, total rates and speeds of every measure.
    Rates {
        #[command(flatten)]
        system: SystemArg,
        /// Largest block count to tabulate.
        #[arg(long, default_value_t = 20)]
        max_n: u64,
    },
    /// Coming-down, strength and stays-infinite verdicts.
    Criteria {
        #[command(flatten)]
        system: SystemArg,
        /// Margin around the critical exponent for regression verdicts.
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        /// Skip analytic shortcuts and classify from numerics only.
        #[arg(long)]
        numeric_only: bool,
    },
    /// Simulate trajectories and write every event.
    Simulate {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 10_000_000)]
        max_events: u64,
    },
    /// Run monotonically coupled copies and check their order.
    Couple {
        #[command(flatten)]
        system: SystemArg,
        /// Comma-separated initial counts, one flag per copy, in increasing order.
        /// Defaults to half the system's initial counts and the counts themselves.
        #[arg(long = "initial", value_delimiter = ';')]
        initial: Vec<String>,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 10_000_000)]
        max_events: u64,
    },
    /// Probability that the block count visits given levels.
    Hitprob {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 2000)]
        n: u64,
        /// Lowest level.
        #[arg(long)]
        k: u64,
        /// Highest level; each level in `k..=k_max` is estimated.
        #[arg(long)]
        k_max: Option<u64>,
        /// Also compute the exact visit probabilities.
        #[arg(long)]
        exact: bool,
    },
    /// Migration event counts over a sweep of starting sizes.
    Migration {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 0.5)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
        ns: Vec<u64>,
    },
    /// Mean block count on a time grid.
    Speed {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 5000)]
        n: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1,1")]
        times: Vec<f64>,
    },
    /// Mean total count against the comparison ODE.
    Meantotal {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.25,0.5,1")]
        times: Vec<f64>,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
    },
    /// Empirical one-step loss law against the exact one.
    Zeta {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 30)]
        n: u64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// Solve the comparison ODE `w' = -Ω(w)`.
    Bound {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 1000)]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
        /// Report every this many steps.
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// Sensitivity of counts at time `t` to the truncation of infinite sites.
    TruncSweep {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, value_delimiter = ',', default_value = "250,500,1000,2000,4000")]
        truncs: Vec<u64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Rates { .. } => "rates",
            Command::Criteria { .. } => "criteria",
            Command::Simulate { .. } => "simulate",
            Command::Couple { .. } => "couple",
            Command::Hitprob { .. } => "hitprob",
            Command::Migration { .. } => "migration",
            Command::Speed { .. } => "speed",
            Command::Meantotal { .. } => "meantotal",
            Command::Zeta { .. } => "zeta",
            Command::Bound { .. } => "bound",
            Command::TruncSweep { .. } => "trunc-sweep",
        }
    }

    pub fn system(&self) -> &SystemArg {
        match self {
            Command::Rates { system, .. }
            | Command::Criteria { system, .. }
            | Command::Simulate { system, .. }
            | Command::Couple { system, .. }
            | Command::Hitprob { system, .. }
            | Command::Migration { system, .. }
            | Command::Speed { system, .. }
            | Command::Meantotal { system, .. }
            | Command::Zeta { system, .. }
            | Command::Bound { system, .. }
            | Command::TruncSweep { system, .. } => system,
        }
    }

    /// Replicates when `--reps` is absent: 10⁴ for probabilities, 10³ for means.
    pub fn default_reps(&self) -> u64 {
        match self {
            Command::Hitprob { .. } => 10_000,
            Command::Simulate { .. } | Command::Couple { .. } => 1,
            _ => 1000,
        }
    }

    /// Extension of the primary output.
    pub fn extension(&self) -> &'static str {
        match self {
            Command::Criteria { .. } => "json",
            _ => "csv",
        }
    }
}
