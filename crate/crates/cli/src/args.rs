use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "incompat", version, about = "Layered measurement incompatibility analyses")]
pub struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Table, global = true)]
    pub format: Format,

    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Seed for randomized fixtures.
    #[arg(long, default_value_t = 7, global = true)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a POVM file.
    Validate { file: PathBuf },

    /// Joint measurability of all measurements in a file.
    Jm {
        file: PathBuf,
        /// Mix every effect with white noise at this visibility first.
        #[arg(long)]
        nu: Option<f64>,
        /// Bisect the white-noise visibility above which the set is incompatible.
        #[arg(long)]
        bisect: bool,
        #[command(flatten)]
        bisection: BisectArgs,
    },

    /// Layered classification under an operation.
    Classify {
        #[command(subcommand)]
        op: ClassifyOp,
    },

    /// Critical visibilities for the noisy MUB families.
    Robustness {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        table: u8,
        #[command(flatten)]
        bisection: BisectArgs,
        /// Coarse-grainings admitted for table 1.
        #[arg(long, value_enum, default_value_t = CgFamilyArg::All)]
        cg_family: CgFamilyArg,
        /// Grid search over mixture weights for table 2 instead of the joint SDP.
        #[arg(long)]
        grid: Option<usize>,
    },

    /// Operational witnesses.
    Witness {
        #[command(subcommand)]
        kind: WitnessCmd,
    },

    /// Write a built-in measurement family as a POVM file.
    Export {
        #[command(subcommand)]
        family: ExportCmd,
    },

    /// Randomized oracle cross-checks.
    Selfcheck {
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct BisectArgs {
    /// Bisection half-width.
    #[arg(long, default_value_t = incompat_core::robustness::BISECT_TOL)]
    pub tol: f64,
    /// Skip the monotonicity probe of the discarded half.
    #[arg(long)]
    pub no_guard: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CgFamilyArg {
    All,
    SingletonsPlusRest,
}

#[derive(Debug, Subcommand)]
pub enum ClassifyOp {
    /// Coarse-graining layers.
    Cg {
        file: PathBuf,
        /// Single layer; all layers 2..=outcomes when omitted.
        #[arg(long)]
        k: Option<usize>,
        /// Solve every plan instead of the exactly-k plans.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long, value_enum, default_value_t = CgFamilyArg::All)]
        cg_family: CgFamilyArg,
    },
    /// Disjoint convex mixing layers.
    Dcm {
        file: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Mix members with their given outcome labels only.
        #[arg(long)]
        no_perms: bool,
        /// Grid search with this many points per weight instead of the joint SDP.
        #[arg(long)]
        grid: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum WitnessCmd {
    /// 2-to-1 random access code with two measurements.
    Rac {
        file: PathBuf,
        /// Scan every binary coarse-graining of two qutrit bases.
        #[arg(long)]
        all_cg: bool,
        /// Measurement indices to use.
        #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1])]
        pair: Vec<usize>,
    },
    /// RAC scan over mixtures of three binary qubit measurements.
    DcmRac {
        file: PathBuf,
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// RAC scan over mixtures of the qutrit X, Y, Z bases.
    Trine {
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// CH violations with Alice's outcomes clubbed.
    Bell {
        /// All nine clubbings.
        #[arg(long, conflicts_with = "row", required_unless_present = "row")]
        table3: bool,
        /// Clubbed outcome pairs for both settings, e.g. `01,12`.
        #[arg(long)]
        row: Option<String>,
    },
    /// Largest CHSH value reachable with two binary qubit measurements.
    Chsh { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BasisArg {
    Computational,
    Fourier,
    Third,
}

#[derive(Debug, Subcommand)]
pub enum ExportCmd {
    /// Noisy mutually unbiased bases.
    Mub {
        #[arg(long)]
        d: usize,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [BasisArg::Computational, BasisArg::Fourier])]
        bases: Vec<BasisArg>,
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
    },
    /// Noisy Pauli X, Y, Z.
    Pauli {
        #[arg(long, value_delimiter = ',', num_args = 1..=3, default_values_t = [1.0f64])]
        nu: Vec<f64>,
    },
    /// Qutrit X, Y, Z bases.
    Trine,
    /// Alice's and Bob's CGLMP measurements on one qutrit.
    Cglmp,
}
