//! Command-line front end for the rdfem experiments.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a run fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rdfem::harness::{
    self, output, picard_contraction_probe, run_eoc_with, run_imex_comparison, run_simulation,
    EocOptions, InitialTransfer, RunConfig, StopReason,
};
use rdfem::kinetics::{turing_analysis_with_cap, SchnakenbergParams, DEFAULT_MODE_CAP};
use rdfem::mesh::{
    load_mesh, mesh_spacing, save_mesh, unit_cube_mesh, unit_square_mesh, unit_square_quad_mesh,
    CellKind,
};
use rdfem::stepping::{NonlinearMethod, NonlinearPolicy, SchemeKind};
use rdfem::Error;

#[derive(Parser)]
#[command(
    name = "rd",
    version,
    about = "Finite-element Schnakenberg reaction-diffusion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a pattern simulation until steady state or t_end.
    Simulate(RunArgs),
    /// Convergence-order study against the manufactured solution.
    Eoc(EocArgs),
    /// Linear stability analysis of the homogeneous equilibrium.
    Turing(TuringArgs),
    /// Compare IMEX and single-Newton variants with adaptive baselines.
    CompareImex(RunArgs),
    /// Picard contraction ratios for a list of timesteps.
    Contraction(ContractionArgs),
    /// Generate or check mesh files.
    #[command(subcommand)]
    Mesh(MeshCommand),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    mesh: Option<String>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("mesh", &self.mesh),
            ("scheme", &self.scheme),
            ("tau", &self.tau),
            ("method", &self.method),
            ("t_end", &self.t_end),
            ("seed", &self.seed),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("--set expects KEY=VALUE, got `{kv}`"))
            })?;
            cfg.set(k, v)?;
        }
        if let Some(dir) = &self.output {
            cfg.output_dir = Some(dir.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Picard,
    Newton,
}

#[derive(Clone, Copy, ValueEnum)]
enum ElementArg {
    Q1,
    P1,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    Projection,
    Interpolant,
}

#[derive(Args)]
struct EocArgs {
    /// be, cn, cnb<k> or fsts.
    #[arg(long)]
    scheme: String,
    /// Level range such as `1..5`, `1..=5` or `2-9`.
    #[arg(long, default_value = "1..5")]
    levels: String,
    #[arg(long, value_enum, default_value = "newton")]
    method: MethodArg,
    /// Bilinear squares (q1) or triangles (p1).
    #[arg(long, value_enum, default_value = "q1")]
    element: ElementArg,
    /// Transfer of the initial data to the mesh.
    #[arg(long, value_enum, default_value = "projection")]
    initial: InitialArg,
    /// Output directory for eoc.csv.
    #[arg(long, short, default_value = ".")]
    output: PathBuf,
}

#[derive(Args)]
struct TuringArgs {
    #[arg(long, default_value_t = 0.1)]
    a: f64,
    #[arg(long, default_value_t = 0.9)]
    b: f64,
    #[arg(long, default_value_t = 10.0)]
    d: f64,
    #[arg(long, default_value_t = 29.0)]
    gamma: f64,
    /// Largest n and m enumerated.
    #[arg(long, default_value_t = DEFAULT_MODE_CAP)]
    cap: u32,
    /// Also write the report to this file.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ContractionArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated timesteps.
    #[arg(long, default_value = "1e-2,1e-3,1e-4")]
    taus: String,
}

#[derive(Subcommand)]
enum MeshCommand {
    /// Write a generated mesh.
    Gen {
        #[arg(long, value_enum)]
        kind: MeshKind,
        #[arg(long)]
        n: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Load a mesh file, validate it and print its statistics.
    Check { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Square,
    Quad,
    Cube,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::StepFailure { .. }
        | Error::NonlinearDivergence { .. }
        | Error::NumericBreakdown { .. } => 2,
        _ => 1,
    }
}

fn parse_levels(s: &str) -> Result<std::ops::RangeInclusive<u32>, Error> {
    let bad = || Error::InvalidArgument(format!("cannot parse level range `{s}`"));
    let (a, b) = if let Some((a, b)) = s.split_once("..=") {
        (a, b)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b)
    } else if let Some((a, b)) = s.split_once('-') {
        (a, b)
    } else {
        (s, s)
    };
    let a: u32 = a.trim().parse().map_err(|_| bad())?;
    let b: u32 = b.trim().parse().map_err(|_| bad())?;
    Ok(a..=b)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<serde_json::Value, Error> {
    serde_json::to_value(value).map_err(|e| Error::Evaluation(e.to_string()))
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).unwrap_or_else(|_| value.to_string())
    );
}

fn simulate(args: &RunArgs) -> Result<u8, Error> {
    let cfg = args.config()?;
    let (trace, _) = run_simulation(&cfg)?;
    print_json(&harness::run_summary(&cfg, &trace));
    Ok(if trace.stopped_by == StopReason::Failure {
        2
    } else {
        0
    })
}

fn eoc(args: &EocArgs) -> Result<u8, Error> {
    let kind = SchemeKind::parse(&args.scheme)?;
    let levels = parse_levels(&args.levels)?;
    let method = match args.method {
        MethodArg::Picard => NonlinearMethod::Picard,
        MethodArg::Newton => NonlinearMethod::Newton,
    };
    let opts = EocOptions {
        cells: match args.element {
            ElementArg::Q1 => CellKind::Quadrilateral,
            ElementArg::P1 => CellKind::Simplex,
        },
        initial: match args.initial {
            InitialArg::Projection => InitialTransfer::L2Projection,
            InitialArg::Interpolant => InitialTransfer::Interpolant,
        },
        ..EocOptions::default()
    };
    let report = run_eoc_with(kind, levels, &NonlinearPolicy::adaptive(method), &opts)?;
    let path = args.output.join("eoc.csv");
    output::write_eoc_csv(&report, &path)?;
    print!("{}", output::eoc_csv(&report));
    if let Some(f) = &report.failure {
        eprintln!("incomplete: {f}");
        return Ok(2);
    }
    Ok(0)
}

fn turing(args: &TuringArgs) -> Result<u8, Error> {
    let p = SchnakenbergParams::new(args.a, args.b, args.d, args.gamma)?;
    let report = turing_analysis_with_cap(&p, args.cap);
    let json = harness::turing_json(&report);
    if let Some(path) = &args.output {
        output::write_json(&json, path)?;
    }
    print_json(&json);
    Ok(0)
}

fn compare_imex(args: &RunArgs) -> Result<u8, Error> {
    let cfg = args.config()?;
    let cmp = run_imex_comparison(&cfg)?;
    let json = to_json(&cmp)?;
    if let Some(dir) = &cfg.output_dir {
        output::write_json(&json, dir.join("comparison.json"))?;
    }
    println!("label,end_time,stopped_by,steps,iterations,max_abs_u,wall_ms");
    for v in &cmp.variants {
        println!(
            "{},{},{:?},{},{},{:e},{:.1}",
            v.label, v.end_time, v.stopped_by, v.steps, v.total_iterations, v.max_abs_u, v.wall_ms
        );
    }
    Ok(0)
}

fn contraction(args: &ContractionArgs) -> Result<u8, Error> {
    let cfg = args.run.config()?;
    let taus = args
        .taus
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bad timestep `{t}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows = picard_contraction_probe(&cfg, &taus)?;
    print_json(&to_json(&rows)?);
    Ok(0)
}

fn mesh_cmd(cmd: &MeshCommand) -> Result<u8, Error> {
    match cmd {
        MeshCommand::Gen { kind, n, output } => {
            let mesh = match kind {
                MeshKind::Square => unit_square_mesh(*n)?,
                MeshKind::Quad => unit_square_quad_mesh(*n)?,
                MeshKind::Cube => unit_cube_mesh(*n)?,
            };
            save_mesh(&mesh, output)?;
            Ok(0)
        }
        MeshCommand::Check { path } => {
            let mesh = load_mesh(Path::new(path))?;
            let s = mesh_spacing(&mesh);
            print_json(&serde_json::json!({
                "dim": mesh.dim(),
                "n_vertices": mesh.n_vertices(),
                "n_cells": mesh.n_cells(),
                "volume": mesh.total_volume(),
                "h_max": s.h_max,
            }));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Eoc(a) => eoc(a),
        Command::Turing(a) => turing(a),
        Command::CompareImex(a) => compare_imex(a),
        Command::Contraction(a) => contraction(a),
        Command::Mesh(c) => mesh_cmd(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
