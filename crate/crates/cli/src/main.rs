//! `fracflow`: runs kernel, scaling, convolution, velocity and MBO experiments.

mod config;
mod kernels;
mod run;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracflow::error::Error;
use fracflow::geometry::ShapeDescriptor;
use fracflow::kernels::KernelFamily;
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{ExperimentConfig, GridConfig};
use kernels::{KernelStore, TableRecord};
use run::{Criterion, RunReport};

#[derive(Parser)]
#[command(name = "fracflow", version, about = "Fractional threshold dynamics experiments")]
struct Cli {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory for tabulated kernels; falls back to FRACFLOW_CACHE.
    #[arg(long, global = true)]
    kernel_cache: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel bounds, mass and far-field limit.
    KernelCheck,
    /// The time scale sigma(t) and its inverse.
    Scaling(ScalingArgs),
    /// Expansion constants and curvatures.
    Constants,
    /// u = K * tau_E by direct quadrature and optionally on a grid.
    Diffuse(DiffuseArgs),
    /// Level-set velocity against the predicted law.
    Velocity,
    /// Threshold dynamics from a single initial set.
    Mbo(MboArgs),
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long)]
    s: Option<f64>,
    /// With --s, print sigma(t) for this t.
    #[arg(long)]
    t: Option<f64>,
}

#[derive(Args)]
struct DiffuseArgs {
    /// Shape descriptor as JSON.
    #[arg(long)]
    shape: Option<String>,
    #[arg(long)]
    s: Option<f64>,
    /// Kernel family tag.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Also evaluate on a periodic grid with this many points per axis.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct MboArgs {
    /// Write the field every k steps.
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    kind: &'a str,
    config_sha256: String,
    config: &'a ExperimentConfig,
    output: String,
    kernel_cache: Option<String>,
    kernel_tables: &'a [TableRecord],
    outputs: &'a [String],
    record_failures: usize,
    criteria: &'a [Criterion],
    status: &'static str,
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse(_) | Error::Domain(_) => Failure::Config(e.to_string()),
            Error::Io(_) | Error::NonConvergence { .. } => Failure::Numerical(e.to_string()),
        }
    }
}

fn kind_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::KernelCheck => "kernel-check",
        Command::Scaling(_) => "scaling",
        Command::Constants => "constants",
        Command::Diffuse(_) => "diffuse",
        Command::Velocity => "velocity",
        Command::Mbo(_) => "mbo",
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let kind = kind_of(&cli.command);
    let mut cfg = match &cli.config {
        Some(path) => {
            let src = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&src).map_err(|e| Failure::Config(e.to_string()))?
        }
        None => ExperimentConfig::of_kind(kind),
    };
    if cfg.kind != kind {
        return Err(Failure::Config(format!("config kind `{}` does not match subcommand `{kind}`", cfg.kind)));
    }
    match &cli.command {
        Command::Diffuse(a) => {
            if let Some(shape) = &a.shape {
                let d: ShapeDescriptor =
                    serde_json::from_str(shape).map_err(|e| Failure::Config(format!("--shape: {e}")))?;
                cfg.dim = match &d {
                    ShapeDescriptor::HalfSpace { dim, .. }
                    | ShapeDescriptor::Ball { dim, .. }
                    | ShapeDescriptor::Ellipse { dim, .. }
                    | ShapeDescriptor::Graph { dim, .. } => *dim,
                };
                cfg.shapes = vec![d];
            }
            if let Some(s) = a.s {
                cfg.s = vec![s];
            }
            if let Some(tag) = &a.family {
                let f = KernelFamily::from_tag(tag)
                    .ok_or_else(|| Failure::Config(format!("--family: unknown kernel family `{tag}`")))?;
                cfg.families = vec![f];
            }
            if let Some(v) = a.sigma {
                cfg.sigma = vec![v];
            }
            if let Some(n) = a.grid {
                cfg.grid = Some(GridConfig { n, ..cfg.grid.clone().unwrap_or_default() });
            }
        }
        Command::Scaling(a) => {
            if let Some(s) = a.s {
                cfg.s = vec![s];
            }
            if let Some(t) = a.t {
                cfg.t = vec![t];
            }
        }
        Command::Mbo(a) => {
            if a.snapshot_every.is_some() {
                cfg.snapshot_every = a.snapshot_every;
            }
        }
        _ => {}
    }
    if let Some(out) = &cli.out {
        cfg.output = Some(out.clone());
    }
    if let Some(dir) = cli.kernel_cache.clone().or_else(|| std::env::var_os("FRACFLOW_CACHE").map(PathBuf::from)) {
        cfg.cache = Some(dir);
    }
    if cfg.output.is_none() {
        cfg.output = Some(PathBuf::from("fracflow-out"));
    }
    cfg.validate().map_err(|(key, msg)| Failure::Config(format!("{key}: {msg}")))?;
    run::resolve(&mut cfg)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<bool, Failure> {
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let cfg = load_config(cli)?;
    if let Command::Scaling(ScalingArgs { s: Some(s), t: Some(t) }) = &cli.command {
        let sigma = fracflow::scaling::ScalingLaw::new(*s)?.sigma(*t)?;
        println!("{sigma:.17e}");
    }
    let out = cfg.output.clone().expect("output filled in");
    fs::create_dir_all(&out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", out.display())))?;
    // the hash covers the experiment, not where its files go
    let mut hashed = cfg.clone();
    hashed.output = None;
    hashed.cache = None;
    let canonical = serde_json::to_string(&hashed).expect("config serializes");
    let mut store = KernelStore::new(cfg.cache.clone());
    let report: RunReport = match cfg.kind.as_str() {
        "kernel-check" => run::kernel_check(&cfg, &mut store, &out)?,
        "scaling" => run::scaling(&cfg, &out)?,
        "constants" => run::constants(&cfg, &mut store, &out)?,
        "diffuse" => run::diffuse(&cfg, &mut store, &out)?,
        "velocity" => run::velocity(&cfg, &mut store, &out)?,
        "mbo" => run::mbo(&cfg, &mut store, &out)?,
        other => return Err(Failure::Config(format!("unknown experiment kind `{other}`"))),
    };
    let pass = report.failures == 0 && report.criteria.iter().all(|c| c.pass);
    let manifest = Manifest {
        tool: "fracflow",
        version: env!("CARGO_PKG_VERSION"),
        kind: &cfg.kind,
        config_sha256: hex::encode(Sha256::digest(canonical.as_bytes())),
        config: &cfg,
        output: out.display().to_string(),
        kernel_cache: cfg.cache.as_ref().map(|p| p.display().to_string()),
        kernel_tables: store.tables(),
        outputs: &report.outputs,
        record_failures: report.failures,
        criteria: &report.criteria,
        status: if pass { "pass" } else { "fail" },
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.join("manifest.json"), json + "\n").map_err(|e| Failure::Numerical(e.to_string()))?;
    for c in &report.criteria {
        println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if report.failures > 0 {
        println!("{} record(s) failed; see the output files", report.failures);
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
