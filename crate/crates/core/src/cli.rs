//! Command-line front end.
//!
//! Every command accepts `--config <file.json>`. The file holds flag values
//! keyed by flag name (`{"degree": 2, "eps": 0.01}`), either at the top level
//! or under a key named after the command; flags given on the command line
//! take precedence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

use crate::basis::{BasisKind, DesignBasis};
use crate::conversions::{
    apd_to_theta, coeffs_to_basis, pd_to_theta, psd_repair, theta_to_apd, theta_to_pd,
};
use crate::error::{Error, Result};
use crate::geometry::{generate_apd, generate_pd, hard_assign, make_grid};
use crate::io::{self, PhysicalRecord, ReportRecord};
use crate::metrics::reconstruction;
use crate::objective::Reduction;
use crate::optimizer::{fit, FitConfig, Init};
use crate::synthetic::{random_apd, random_pd, LOW_ANISOTROPY};

#[derive(Debug, Parser)]
#[command(name = "polydiagram", version, about = "Fit polynomial minimisation diagrams to grain maps")]
#[command(args_override_self = true)]
struct Cli {
    /// JSON file supplying default flag values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random power or anisotropic power diagram.
    Generate(GenerateArgs),
    /// Fit coefficients to a grain map.
    Fit(FitArgs),
    /// Draw a grain map or a misassignment map as a binary PPM.
    Render(RenderArgs),
    /// Change basis, recover physical parameters or repair positive definiteness.
    Convert(ConvertArgs),
    /// Tabulate degree, feature count, objective, accuracy and compression of fit reports.
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DiagramKind {
    Pd,
    Apd,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: DiagramKind,
    /// Number of grains.
    #[arg(long)]
    n: usize,
    /// Grid resolution; the grid has (2M)² pixels.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Log-stretch level of the anisotropy matrices (apd only).
    #[arg(long, default_value_t = LOW_ANISOTROPY)]
    anisotropy: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Grain-map CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    degree: usize,
    #[arg(long, default_value = "legendre")]
    basis: BasisKind,
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// `zero`, `heuristic`, or a coefficient CSV to start from.
    #[arg(long, default_value = "zero")]
    init: String,
    #[arg(long, default_value_t = 10)]
    memory: usize,
    /// Record every k-th iterate in the report trajectory.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// 1 runs the reduction sequentially; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RenderMode {
    Labels,
    Misassignment,
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Grain-map CSV (labels) or misassignment CSV written by `fit`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "labels")]
    mode: RenderMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum Direction {
    ToPhysical,
    ToMonomial,
    ToLegendre,
    PsdRepair,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Coefficient CSV.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    direction: Direction,
    #[arg(long)]
    out: PathBuf,
    /// Repair margin; defaults to 1e-3·(1 + max‖A_i‖).
    #[arg(long)]
    margin: Option<f64>,
    /// Resolution of the grid on which the repair is checked to keep labels.
    #[arg(long, default_value_t = 50)]
    check_m: usize,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    /// Report JSON files written by `fit`.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Finds `--config` before clap runs so that the file can feed the parser.
fn config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn config_tokens(path: &Path, command: &str) -> Result<Vec<String>> {
    let root: Value = io::read_json(path)?;
    let Value::Object(root) = root else {
        return Err(Error::invalid(format!("{}: config must be a JSON object", path.display())));
    };
    let mut entries: Vec<(String, Value)> = Vec::new();
    for (k, v) in root {
        match v {
            Value::Object(section) if k == command => entries.extend(section),
            Value::Object(_) => {}
            v => entries.push((k, v)),
        }
    }
    let mut tokens = Vec::new();
    for (k, v) in entries {
        if k == "config" {
            continue;
        }
        let flag = format!("--{}", k.replace('_', "-"));
        let mut push = |v: &Value| -> Result<()> {
            let s = match v {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => return Err(Error::invalid(format!("config key '{k}' has an unsupported value"))),
            };
            tokens.push(flag.clone());
            tokens.push(s);
            Ok(())
        };
        match &v {
            Value::Array(items) => {
                tokens.push(flag.clone());
                for item in items {
                    match item {
                        Value::String(s) => tokens.push(s.clone()),
                        Value::Number(n) => tokens.push(n.to_string()),
                        _ => return Err(Error::invalid(format!("config key '{k}' has an unsupported value"))),
                    }
                }
            }
            v => push(v)?,
        }
    }
    Ok(tokens)
}

/// Parses `args` (program name first) and runs the command.
///
/// Usage errors print clap's message and exit the process with status 2.
pub fn run(args: Vec<String>) -> Result<()> {
    let cli = if config_path(&args).is_some() {
        parse_with_config(args)?
    } else {
        Cli::try_parse_from(args).unwrap_or_else(|e| e.exit())
    };
    match cli.command {
        Command::Generate(a) => generate(&a),
        Command::Fit(a) => fit_cmd(&a),
        Command::Render(a) => render(&a),
        Command::Convert(a) => convert(&a),
        Command::Metrics(a) => metrics(&a),
    }
}

fn parse_with_config(args: Vec<String>) -> Result<Cli> {
    let path = config_path(&args).expect("checked by caller");
    const COMMANDS: [&str; 5] = ["generate", "fit", "render", "convert", "metrics"];
    let pos = args
        .iter()
        .enumerate()
        .skip(1)
        .find(|(i, a)| COMMANDS.contains(&a.as_str()) && args[i - 1] != "--config")
        .map(|(i, _)| i)
        .ok_or_else(|| Error::invalid("no command given"))?;
    let command = args[pos].as_str();
    let mut merged: Vec<String> = args[..=pos].to_vec();
    merged.extend(config_tokens(&path, command)?);
    merged.extend_from_slice(&args[pos + 1..]);
    Ok(Cli::try_parse_from(merged).unwrap_or_else(|e| e.exit()))
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let grid = make_grid(a.m)?;
    let (map, record, theta) = match a.kind {
        DiagramKind::Pd => {
            let pd = random_pd(a.n, a.seed)?;
            (generate_pd(&pd, &grid)?, PhysicalRecord::from(&pd), pd_to_theta(&pd)?)
        }
        DiagramKind::Apd => {
            let apd = random_apd(a.n, a.seed, a.anisotropy)?;
            (generate_apd(&apd, &grid)?, PhysicalRecord::from(&apd), apd_to_theta(&apd)?)
        }
    };
    let present = map.grain_sizes().iter().filter(|&&s| s > 0).count();
    io::write_grain_map(&a.out_dir.join("grainmap.csv"), &map)?;
    io::write_json(&a.out_dir.join("physical.json"), &record)?;
    io::write_theta(&a.out_dir.join("theta_true.csv"), &theta)?;
    println!(
        "generated {} grains ({} visible) on {} pixels in {}",
        a.n,
        present,
        map.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn fit_cmd(a: &FitArgs) -> Result<()> {
    let map = io::read_grain_map(&a.input)?;
    let init = match a.init.as_str() {
        "zero" => Init::Zero,
        "heuristic" => Init::Heuristic,
        path => Init::Explicit(io::read_theta(Path::new(path))?),
    };
    let config = FitConfig {
        eps: a.eps,
        max_iters: a.iters,
        memory: a.memory,
        init,
        degree: a.degree,
        basis: a.basis,
        record_every: a.record_every,
        reduction: if a.threads == 1 {
            Reduction::Sequential
        } else {
            Reduction::Parallel
        },
    };
    let report = if a.threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(a.threads)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start {} threads: {e}", a.threads)))?
            .install(|| fit(&map, &config))?
    } else {
        fit(&map, &config)?
    };
    let (labels, _) = reconstruction(&report.theta, &map)?;
    io::write_theta(&a.out_dir.join("theta.csv"), &report.theta)?;
    io::write_json(&a.out_dir.join("report.json"), &ReportRecord::new(&report, &config, None))?;
    io::write_labels(&a.out_dir.join("labels.csv"), map.grid(), &labels)?;
    io::write_misassignment(&a.out_dir.join("misassignment.csv"), &map, &labels)?;
    println!(
        "d={} iterations={} stop={:?} phi={:.6e} err={:.6}",
        a.degree, report.iterations, report.stop, report.phi_final, report.err_final
    );
    Ok(())
}

fn render(a: &RenderArgs) -> Result<()> {
    let image = match a.mode {
        RenderMode::Labels => io::render_labels(&io::read_grain_map(&a.input)?)?,
        RenderMode::Misassignment => {
            let (grid, correct) = io::read_misassignment(&a.input)?;
            io::render_misassignment(&grid, &correct)?
        }
    };
    io::write_bytes(&a.out, &image)
}

fn convert(a: &ConvertArgs) -> Result<()> {
    let theta = io::read_theta(&a.input)?;
    match a.direction {
        Direction::ToMonomial => io::write_theta(&a.out, &coeffs_to_basis(&theta, BasisKind::Monomial)?),
        Direction::ToLegendre => io::write_theta(&a.out, &coeffs_to_basis(&theta, BasisKind::Legendre)?),
        Direction::ToPhysical => {
            let mono = coeffs_to_basis(&theta, BasisKind::Monomial)?;
            match mono.degree() {
                1 => io::write_json(&a.out, &PhysicalRecord::from(&theta_to_pd(&mono)?)),
                2 => {
                    // Singular or indefinite blocks have no physical form; the
                    // common shift fixes them without moving any boundary.
                    let repaired = psd_repair(&mono, a.margin, true)?;
                    if repaired.lambda > 0.0 {
                        eprintln!("shifted quadratic blocks by {:e} to make them positive definite", repaired.lambda);
                    }
                    let recovered = theta_to_apd(&repaired.theta)?;
                    io::write_json(&a.out, &PhysicalRecord::from(&recovered))
                }
                d => Err(Error::invalid(format!(
                    "physical parameters exist only for degree 1 or 2, got degree {d}"
                ))),
            }
        }
        Direction::PsdRepair => {
            let repaired = psd_repair(&theta, a.margin, false)?;
            let grid = make_grid(a.check_m)?;
            let basis = DesignBasis::new(theta.kind(), theta.degree())?;
            if hard_assign(&theta, &basis, &grid)? != hard_assign(&repaired.theta, &basis, &grid)? {
                return Err(Error::Numerical("repair changed the hard assignment".into()));
            }
            println!(
                "lambda={:e} margin={:e} min_eigenvalue={:e}",
                repaired.lambda, repaired.margin, repaired.min_eigenvalue
            );
            io::write_theta(&a.out, &repaired.theta)
        }
    }
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let rows = a
        .inputs
        .iter()
        .map(|p| io::read_json::<ReportRecord>(p).map(|r| r.sweep_row()))
        .collect::<Result<Vec<_>>>()?;
    let table = io::sweep_csv(&rows);
    io::write_bytes(&a.out, table.as_bytes())?;
    print!("{table}");
    Ok(())
}
