//! `matchillum`: solve and evaluate matched illumination from the command
//! line. Each run writes its outputs and a copy of the effective config into
//! one directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use matched_illum::spectral::SpectralGrid;
use matched_illum::Error;

use config::{ModeArg, RunConfig};
use output::OutDir;

#[derive(Parser)]
#[command(
    name = "matchillum",
    version,
    about = "Matched illumination for camera color measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or validate) an illuminator characterization and report peak
    /// and chromaticity drift.
    Characterize {
        #[command(flatten)]
        common: Common,
        /// Use the synthetic Gaussian-LED generator (the default).
        #[arg(long, conflicts_with = "measured")]
        synthetic: bool,
        /// Validate a measured characterization manifest instead.
        #[arg(long)]
        measured: Option<PathBuf>,
        /// Largest peak shift (nm) of the synthetic channels, scaled
        /// proportionally across channels.
        #[arg(long, conflicts_with = "measured")]
        shift: Option<f64>,
    },
    /// Metamer of the target light within the illuminator's reach.
    Metamer {
        #[command(flatten)]
        common: Common,
    },
    /// Matched illumination for the camera.
    Match {
        #[command(flatten)]
        common: Common,
    },
    /// Color-correction error under the metamer and the matched lights.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Reflectance CSV; repeat for several sets.
        #[arg(long)]
        reflectances: Vec<PathBuf>,
        /// Divide camera RGBs by the white diffuser's RGB before correcting.
        #[arg(long)]
        white_balance: bool,
        /// Fit on all but every n-th sample and report on those.
        #[arg(long)]
        holdout_every: Option<usize>,
    },
    /// Fit reflectances as combinations of at most four chart patches.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Target reflectances (default: the 1995-spectrum surrogate).
        #[arg(long)]
        targets: Option<PathBuf>,
        /// Candidate patches (default: 18 chromatic ColorChecker patches
        /// plus one neutral).
        #[arg(long)]
        candidates: Option<PathBuf>,
        /// Measured candidate RGBs, CSV with header `id,r,g,b`.
        #[arg(long)]
        rgb: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Wavelength grid; only 400:10:700 is supported.
    #[arg(long, default_value = "400:10:700")]
    grid: String,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Relative stopping tolerance of the alternating solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Seed for generated data sets.
    #[arg(long)]
    seed: Option<u64>,
    /// Camera sensitivities CSV.
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Illuminator characterization manifest.
    #[arg(long)]
    illuminator: Option<PathBuf>,
    /// Target light: D65, A, or a spectral CSV.
    #[arg(long)]
    target: Option<String>,
    /// Observer CSV overriding CIE 1931.
    #[arg(long)]
    cmf: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, default_out: &str) -> Result<(RunConfig, OutDir), Failure> {
        let grid = SpectralGrid::parse(&self.grid).map_err(|e| Failure::Usage(e.to_string()))?;
        if grid != SpectralGrid::VISIBLE {
            return Err(Failure::Usage(format!(
                "unsupported grid {}; use 400:10:700",
                self.grid
            )));
        }
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.mode = self.mode.or(cfg.mode);
        cfg.tol = self.tol.or(cfg.tol);
        cfg.seed = self.seed.or(cfg.seed);
        for (flag, field) in [
            (&self.camera, &mut cfg.camera),
            (&self.illuminator, &mut cfg.illuminator),
            (&self.cmf, &mut cfg.cmf),
        ] {
            if flag.is_some() {
                *field = flag.clone();
            }
        }
        if self.target.is_some() {
            cfg.target = self.target.clone();
        }
        let out = cfg
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(default_out));
        cfg.out = Some(out.clone());
        Ok((cfg, OutDir::create(&out)?))
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Characterize {
            common,
            synthetic: _,
            measured,
            shift,
        } => {
            let (mut cfg, out) = common.resolve("out/characterize")?;
            if let Some(m) = measured {
                cfg.illuminator = Some(m);
            }
            cfg.validate()?;
            commands::characterize(&mut cfg, shift, &out)
        }
        Command::Metamer { common } => {
            let (cfg, out) = common.resolve("out/metamer")?;
            cfg.validate()?;
            commands::metamer(&cfg, &out)
        }
        Command::Match { common } => {
            let (cfg, out) = common.resolve("out/match")?;
            cfg.validate()?;
            commands::match_lights(&cfg, &out)
        }
        Command::Evaluate {
            common,
            reflectances,
            white_balance,
            holdout_every,
        } => {
            let (mut cfg, out) = common.resolve("out/evaluate")?;
            if !reflectances.is_empty() {
                cfg.reflectances = reflectances;
            }
            cfg.white_balance |= white_balance;
            cfg.holdout_every = holdout_every.or(cfg.holdout_every);
            cfg.validate()?;
            commands::evaluate(&cfg, &out)
        }
        Command::Synth {
            common,
            targets,
            candidates,
            rgb,
        } => {
            let (cfg, out) = common.resolve("out/synth")?;
            cfg.validate()?;
            for p in [&targets, &candidates, &rgb].into_iter().flatten() {
                if !p.is_file() {
                    return Err(Failure::Usage(format!(
                        "missing input file: {}",
                        p.display()
                    )));
                }
            }
            commands::synth(
                &cfg,
                targets.as_deref(),
                candidates.as_deref(),
                rgb.as_deref(),
                &out,
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e @ Error::Infeasible(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
