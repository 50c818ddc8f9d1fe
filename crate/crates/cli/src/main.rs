//! `convext`: feasibility scans, construction, verification and export of
//! smooth convex bodies interpolating tangency data.
//!
//! Exit codes: 0 success, 1 input error, 2 mathematical failure
//! (infeasible data or a failed property), 3 numerical backend failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "convext", version, about = "Smooth convex extensions of tangency data")]
pub struct Cli {
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "CONVEXT_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Class {
    C11,
    C1omega,
    C1alpha,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Backend {
    Direct,
    Grid,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Polyline,
    Obj,
    Csv,
}

/// Regularity class and its constants.
#[derive(Args, Debug, Clone)]
pub struct ClassArgs {
    #[arg(long, value_enum, default_value = "c11")]
    pub class: Class,
    /// Rolling radius for c11.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Constant delta for c1omega / c1alpha.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Exponent of the power modulus omega(t) = K t^alpha.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Coefficient of the power modulus omega(t) = K t^alpha.
    #[arg(long = "K")]
    pub k: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pairwise feasibility scan; reports r_max or delta_max.
    ///
    /// The tested constant is --radius / --delta, else the problem file's
    /// construction block, else r = tol * max(diam, 1) for c11 and
    /// delta = tol otherwise.
    Feasibility {
        problem: PathBuf,
        #[command(flatten)]
        class: ClassArgs,
        /// Default tested constant relative to the data scale.
        #[arg(long, default_value_t = 1e-2)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Construct a body and write its body file.
    ///
    /// --auto picks r = 1/2 r_max or delta = 1/2 delta_max.
    Build {
        problem: PathBuf,
        #[command(flatten)]
        class: ClassArgs,
        #[arg(long)]
        auto: bool,
        #[arg(long, value_enum, default_value = "direct")]
        backend: Backend,
        /// Lattice nodes per axis for the grid backend; default by dimension.
        #[arg(long)]
        resolution: Option<usize>,
        /// Random points at which the grid and direct envelopes are compared.
        #[arg(long, default_value_t = 0)]
        cross_check: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the characterization suites against a body file.
    Verify {
        body: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Width parameter of the tube U_eps for the signed-distance suite.
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// Rolling radius to check c11 bodies against; defaults to the body's.
        #[arg(long)]
        radius: Option<f64>,
        /// Exponent of the modulus used when fitting constants.
        #[arg(long)]
        alpha: Option<f64>,
        /// Coefficient of the modulus used when fitting constants.
        #[arg(long = "K")]
        k: Option<f64>,
        /// Also run at 2x, 4x, ... the sample count, this many times.
        #[arg(long, default_value_t = 0)]
        refine: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export boundary geometry.
    Export {
        body: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long, default_value_t = 360)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sampling box `lo1,lo2,..:hi1,hi2,..` (csv only).
        #[arg(long)]
        clip_box: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seeded boundary samples with their normals, as JSON.
    Sample {
        body: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        clip_box: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a problem file from a built-in generator.
    Fixture {
        #[command(subcommand)]
        kind: FixtureKind,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum FixtureKind {
    Sphere {
        #[arg(long, default_value_t = 16)]
        points: usize,
        #[arg(long, default_value_t = 2)]
        dimension: usize,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    Cusp {
        #[arg(long, default_value_t = 1e-3)]
        h_min: f64,
        #[arg(long, default_value_t = 1.0)]
        h_max: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    Ellipse {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[arg(long, default_value_t = 40)]
        points: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Stadium {
        #[arg(long, default_value_t = 40)]
        points: usize,
        #[arg(long, default_value_t = 2.0)]
        length: f64,
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
