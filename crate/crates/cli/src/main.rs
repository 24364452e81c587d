//! `meshlabel`: generate synthetic scenes, label meshes, evaluate and sweep.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use meshlabel::config::PipelineConfig;
use meshlabel::pipeline::PipelineError;
use meshlabel::solver::SolverError;

#[derive(Parser, Debug)]
#[command(
    name = "meshlabel",
    version,
    about = "Semantic labeling of triangle-mesh facets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic scene: mesh, cameras, likelihoods and ground truth.
    Generate(GenerateArgs),
    /// Label every facet of a mesh from per-view class likelihoods.
    Label(LabelArgs),
    /// Score labeled meshes against ground-truth label images.
    Eval(EvalArgs),
    /// Label and evaluate once per value of one parameter.
    Sweep(SweepArgs),
}

/// Pipeline settings; flags override the config file, which overrides the
/// defaults.
#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// `key=value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    mu3: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    bins_azim: Option<usize>,
    #[arg(long)]
    bins_incl: Option<usize>,
    /// `normalized` or `raw`.
    #[arg(long)]
    data_norm: Option<String>,
    /// `local` or `global`.
    #[arg(long)]
    prior: Option<String>,
    /// Comma-separated class names.
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        let overrides: [(&str, Option<String>); 11] = [
            ("mu1", self.mu1.map(|v| v.to_string())),
            ("mu2", self.mu2.map(|v| v.to_string())),
            ("mu3", self.mu3.map(|v| v.to_string())),
            ("cell_size", self.cell_size.map(|v| v.to_string())),
            ("bins_azim", self.bins_azim.map(|v| v.to_string())),
            ("bins_incl", self.bins_incl.map(|v| v.to_string())),
            ("data_norm", self.data_norm.clone()),
            ("prior", self.prior.clone()),
            ("classes", self.classes.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("jobs", self.jobs.map(|v| v.to_string())),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// box-on-plane, step-pyramid or fig2-toy.
    #[arg(long, default_value = "box-on-plane")]
    scene: String,
    #[arg(long)]
    out: PathBuf,
    /// 2 or 4.
    #[arg(long)]
    classes: Option<usize>,
    /// Quads per scene unit.
    #[arg(long)]
    resolution: Option<u32>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    p_flip: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    patch_fraction: Option<f64>,
    #[arg(long)]
    patch_confidence: Option<f64>,
}

#[derive(Args, Debug)]
struct LabelArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of `view{ID}_class{K}.pgm` likelihood planes.
    #[arg(long)]
    likelihoods: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Labeled PLY; repeat to compare several labelings in one table.
    #[arg(long, required = true)]
    mesh: Vec<PathBuf>,
    /// Per-facet labels, one per line, instead of the PLY `label` property.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    cameras: PathBuf,
    /// Directory of `view{ID}.pgm` ground-truth label images.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    likelihoods: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// cell_size, mu1, mu2, mu3, B_a or B_i.
    #[arg(long)]
    param: String,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Append a row computed with one histogram pair for the whole mesh.
    #[arg(long)]
    with_global: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// Marks a broken internal invariant (exit code 2).
#[derive(Debug)]
struct Internal(String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "internal invariant violated: {}", self.0)
    }
}

impl std::error::Error for Internal {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Internal>() || cause.is::<SolverError>() {
            return 2;
        }
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return if p.is_input_error() { 1 } else { 2 };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Label(a) => commands::label(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
