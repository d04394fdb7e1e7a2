//! Command-line experiment runner.
//!
//! Every command reads one [`RunConfig`], validates it completely, and writes
//! into a fresh `<root>/<command>-<timestamp>/` directory together with a
//! `manifest.json` (config hash, version, seed, file checksums, timings).
//! On failure the directory is removed.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! non-convergence, 4 I/O.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use commands::fidelity;
pub use config::{RunConfig, StateSource};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cascata", version, about = "Cascade entanglement experiments on synthetic data")]
pub struct Cli {
    /// JSON run configuration (defaults when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long, global = true, env = "CASCATA_OUT")]
    pub out: Option<PathBuf>,
    /// Base seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Override a config leaf, e.g. `--set qd.tau_xx=81`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Concurrence versus pulse duration, tomography per point, closed-form fit.
    SweepDuration,
    /// Concurrence, XX splitting and sideband fraction versus pulse area.
    SweepPower,
    /// Polarization-resolved spectra and their metrics over a duration grid.
    Spectra,
    /// Simulated tomography of a chosen source state.
    Tomography {
        /// phi_plus, werner or cascade (default from the config).
        #[arg(long)]
        source: Option<StateSource>,
        /// Werner weight p.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Load and validate the configuration, then exit.
    ValidateConfig,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SweepDuration => "sweep-duration",
            Command::SweepPower => "sweep-power",
            Command::Spectra => "spectra",
            Command::Tomography { .. } => "tomography",
            Command::ValidateConfig => "validate-config",
        }
    }
}

impl std::str::FromStr for StateSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        config::parse_source(s)
    }
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seed: u64,
    pub seed_derivation: &'static str,
    pub files: Vec<FileEntry>,
    pub started_utc: String,
    pub wall_seconds: f64,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoConvergence { .. } => EXIT_NUMERICAL,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Resolves the configuration from the parsed flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Command::Tomography { source, p } = &cli.command {
        if let Some(s) = source {
            overrides.push(format!("tomography.source={}", serde_json::to_string(s)?));
        }
        if let Some(p) = p {
            overrides.push(format!("tomography.werner_p={p}"));
        }
    }
    RunConfig::load(cli.config.as_deref(), &overrides)
}

/// Creates a fresh, never-reused run directory below `root`.
fn create_run_dir(root: &Path, command: &str, stamp: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(root)?;
    for k in 0.. {
        let name = if k == 0 {
            format!("{command}-{stamp}")
        } else {
            format!("{command}-{stamp}-{k}")
        };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

/// Runs `command` with `cfg`, writing below `root`. Returns the run directory.
pub fn execute(command: &Command, cfg: &RunConfig, root: &Path) -> Result<PathBuf> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let dir = create_run_dir(root, command.name(), &started.format("%Y%m%dT%H%M%S%.3fZ").to_string())?;
    let result = (|| {
        let mut out = commands::Output::new(&dir);
        match command {
            Command::SweepDuration => commands::sweep_duration_cmd(cfg, &mut out)?,
            Command::SweepPower => commands::sweep_power_cmd(cfg, &mut out)?,
            Command::Spectra => commands::spectra_cmd(cfg, &mut out)?,
            Command::Tomography { .. } => commands::tomography_cmd(cfg, &mut out)?,
            Command::ValidateConfig => {}
        }
        let files = out
            .files
            .iter()
            .map(|name| {
                let bytes = std::fs::read(dir.join(name))?;
                Ok(FileEntry {
                    name: name.clone(),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.name().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(&serde_json::to_vec(cfg)?),
            config: cfg.clone(),
            seed: cfg.seed,
            seed_derivation: "per-item seed = splitmix64(seed + (stream + index + 1) * 0x9E3779B97F4A7C15)",
            files,
            started_utc: started.to_rfc3339(),
            wall_seconds: clock.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(dir),
        Err(e) => {
            let _ = std::fs::remove_dir_all(&dir);
            Err(e)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    if let Command::ValidateConfig = cli.command {
        println!("config ok (sha256 {})", sha256_hex(&serde_json::to_vec(&cfg)?));
        return Ok(());
    }
    let root = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::config("--jobs", "must be >= 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::config("--jobs", e.to_string()))?;
    let dir = pool.install(|| execute(&cli.command, &cfg, &root))?;
    println!("{}", dir.display());
    Ok(())
}

/// Entry point of the `cascata` binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
