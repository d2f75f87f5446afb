//! Run configuration and its `key = value` text format.
//!
//! ```text
//! # pattern run on a 32×32 grid
//! mesh = square:32
//! scheme = fsts
//! tau = 0.01
//! method = newton
//! t_end = 30
//! seed = 7
//! ```
//!
//! Unknown keys are rejected. Command-line flags are applied on top of a file
//! through [`RunConfig::set`], using the same key names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::NormKind;
use crate::error::{Error, Result};
use crate::kinetics::SchnakenbergParams;
use crate::linsolve::{LinearSolveConfig, Preconditioner};
use crate::mesh::{load_mesh, unit_cube_mesh, unit_square_mesh, unit_square_quad_mesh, Mesh};
use crate::stepping::{
    IterationMode, NonlinearMethod, NonlinearPolicy, SchemeConfig, SchemeKind,
    DEFAULT_NONLINEAR_MAX_ITERS, DEFAULT_NONLINEAR_TOL,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum MeshSpec {
    /// `n × n` squares, each split into two triangles.
    Square(usize),
    /// `n × n` squares with bilinear elements.
    Quad(usize),
    Cube(usize),
    File(PathBuf),
}

impl MeshSpec {
    /// Parse `square:N`, `quad:N`, `cube:N` or `file:PATH`.
    pub fn parse(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| {
            Error::InvalidArgument(format!(
                "mesh must be square:N, quad:N, cube:N or file:PATH, got `{s}`"
            ))
        })?;
        let n = || {
            arg.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("bad mesh size in `{s}`")))
        };
        match kind.trim() {
            "square" => Ok(MeshSpec::Square(n()?)),
            "quad" => Ok(MeshSpec::Quad(n()?)),
            "cube" => Ok(MeshSpec::Cube(n()?)),
            "file" => Ok(MeshSpec::File(PathBuf::from(arg.trim()))),
            other => Err(Error::InvalidArgument(format!(
                "unknown mesh kind `{other}`"
            ))),
        }
    }

    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSpec::Square(n) => unit_square_mesh(*n),
            MeshSpec::Quad(n) => unit_square_quad_mesh(*n),
            MeshSpec::Cube(n) => unit_cube_mesh(*n),
            MeshSpec::File(p) => load_mesh(p),
        }
    }
}

impl std::fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshSpec::Square(n) => write!(f, "square:{n}"),
            MeshSpec::Quad(n) => write!(f, "quad:{n}"),
            MeshSpec::Cube(n) => write!(f, "cube:{n}"),
            MeshSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Equilibrium plus independent uniform noise in `[-amplitude, amplitude]`
    /// on every vertex and species.
    EquilibriumPerturbation { amplitude: f64, seed: u64 },
    /// `u = v = Ξ(·, 0)` on the unit square.
    Manufactured,
    /// One `u v` pair per vertex.
    NodalFile(PathBuf),
}

/// Default perturbation amplitude.
pub const DEFAULT_AMPLITUDE: f64 = 1e-2;
/// Default steady-state threshold on `||Δu||/τ` and `||Δv||/τ`.
pub const DEFAULT_STOP_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    pub params: SchnakenbergParams,
    pub scheme: SchemeConfig,
    pub policy: NonlinearPolicy,
    pub linear: LinearSolveConfig,
    pub t_end: f64,
    pub stop_tol: f64,
    pub ic: InitialCondition,
    /// Add the manufactured-solution sources.
    pub sources: bool,
    /// Directory for `trace.csv`, `summary.json`, `growth.csv` and `final.vtk`.
    pub output_dir: Option<PathBuf>,
    pub write_vtk: bool,
    /// Record wall-clock times; when off the `wall_ms` column is zero and
    /// outputs are byte-for-byte reproducible.
    pub timing: bool,
    /// Keep a copy of the fields every this many steps.
    pub snapshot_every: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSpec::Square(32),
            params: SchnakenbergParams::standard(),
            scheme: SchemeConfig {
                kind: SchemeKind::fractional_step(),
                tau: 0.01,
            },
            policy: NonlinearPolicy::adaptive(NonlinearMethod::Newton),
            linear: LinearSolveConfig::default(),
            t_end: 30.0,
            stop_tol: DEFAULT_STOP_TOL,
            ic: InitialCondition::EquilibriumPerturbation {
                amplitude: DEFAULT_AMPLITUDE,
                seed: 0,
            },
            sources: false,
            output_dir: None,
            write_vtk: true,
            timing: true,
            snapshot_every: None,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("`{key}` expects a number, got `{value}`")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value.trim().parse().map_err(|_| {
        Error::InvalidArgument(format!(
            "`{key}` expects a non-negative integer, got `{value}`"
        ))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!(
            "`{key}` expects on/off, got `{value}`"
        ))),
    }
}

impl RunConfig {
    /// Keys accepted by [`RunConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "mesh",
        "a",
        "b",
        "d",
        "gamma",
        "scheme",
        "theta",
        "tau",
        "method",
        "mode",
        "tol",
        "max_iters",
        "count",
        "norm",
        "linear_rel_tol",
        "linear_max_iters",
        "restart",
        "preconditioner",
        "t_end",
        "stop_tol",
        "ic",
        "amplitude",
        "seed",
        "sources",
        "output_dir",
        "vtk",
        "timing",
        "snapshot_every",
    ];

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "mesh" => self.mesh = MeshSpec::parse(value)?,
            "a" => self.params.a = parse_f64(key, value)?,
            "b" => self.params.b = parse_f64(key, value)?,
            "d" => self.params.d = parse_f64(key, value)?,
            "gamma" => self.params.gamma = parse_f64(key, value)?,
            "scheme" => {
                let theta = match self.scheme.kind {
                    SchemeKind::FractionalStep { theta } => Some(theta),
                    _ => None,
                };
                self.scheme.kind = match (SchemeKind::parse(value)?, theta) {
                    (SchemeKind::FractionalStep { .. }, Some(theta)) => {
                        SchemeKind::FractionalStep { theta }
                    }
                    (k, _) => k,
                };
            }
            "theta" => {
                let theta = parse_f64(key, value)?;
                match &mut self.scheme.kind {
                    SchemeKind::FractionalStep { theta: t } => *t = theta,
                    _ => {
                        return Err(Error::InvalidArgument(
                            "`theta` only applies to scheme = fsts".into(),
                        ))
                    }
                }
            }
            "tau" => self.scheme.tau = parse_f64(key, value)?,
            "method" => {
                self.policy.method = match value {
                    "picard" => NonlinearMethod::Picard,
                    "newton" => NonlinearMethod::Newton,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "method must be picard or newton, got `{value}`"
                        )))
                    }
                }
            }
            "mode" => {
                self.policy.mode = match value {
                    "adaptive" => IterationMode::Adaptive {
                        tol: DEFAULT_NONLINEAR_TOL,
                        max_iters: DEFAULT_NONLINEAR_MAX_ITERS,
                    },
                    "fixed" => IterationMode::Fixed { count: 1 },
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "mode must be adaptive or fixed, got `{value}`"
                        )))
                    }
                }
            }
            "tol" => match &mut self.policy.mode {
                IterationMode::Adaptive { tol, .. } => *tol = parse_f64(key, value)?,
                IterationMode::Fixed { .. } => {
                    return Err(Error::InvalidArgument("`tol` needs mode = adaptive".into()))
                }
            },
            "max_iters" => match &mut self.policy.mode {
                IterationMode::Adaptive { max_iters, .. } => *max_iters = parse_usize(key, value)?,
                IterationMode::Fixed { .. } => {
                    return Err(Error::InvalidArgument(
                        "`max_iters` needs mode = adaptive".into(),
                    ))
                }
            },
            "count" => {
                self.policy.mode = IterationMode::Fixed {
                    count: parse_usize(key, value)?,
                }
            }
            "norm" => {
                self.policy.norm = match value {
                    "mass" => NormKind::Mass,
                    "euclidean" => NormKind::Euclidean,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "norm must be mass or euclidean, got `{value}`"
                        )))
                    }
                }
            }
            "linear_rel_tol" => self.linear.rel_tol = parse_f64(key, value)?,
            "linear_max_iters" => self.linear.max_iters = Some(parse_usize(key, value)?),
            "restart" => self.linear.restart = parse_usize(key, value)?,
            "preconditioner" => {
                self.linear.preconditioner = match value {
                    "none" => Preconditioner::None,
                    "jacobi" => Preconditioner::Jacobi,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "preconditioner must be none or jacobi, got `{value}`"
                        )))
                    }
                }
            }
            "t_end" => self.t_end = parse_f64(key, value)?,
            "stop_tol" => self.stop_tol = parse_f64(key, value)?,
            "ic" => {
                self.ic = if value == "equilibrium" {
                    match self.ic {
                        InitialCondition::EquilibriumPerturbation { .. } => self.ic.clone(),
                        _ => InitialCondition::EquilibriumPerturbation {
                            amplitude: DEFAULT_AMPLITUDE,
                            seed: 0,
                        },
                    }
                } else if value == "manufactured" {
                    InitialCondition::Manufactured
                } else if let Some(path) = value.strip_prefix("file:") {
                    InitialCondition::NodalFile(PathBuf::from(path.trim()))
                } else {
                    return Err(Error::InvalidArgument(format!(
                        "ic must be equilibrium, manufactured or file:PATH, got `{value}`"
                    )));
                }
            }
            "amplitude" | "seed" => {
                let (mut amplitude, mut seed) = match self.ic {
                    InitialCondition::EquilibriumPerturbation { amplitude, seed } => {
                        (amplitude, seed)
                    }
                    _ => (DEFAULT_AMPLITUDE, 0),
                };
                if key.trim() == "amplitude" {
                    amplitude = parse_f64(key, value)?;
                } else {
                    seed = value.parse().map_err(|_| {
                        Error::InvalidArgument(format!("`seed` expects an integer, got `{value}`"))
                    })?;
                }
                self.ic = InitialCondition::EquilibriumPerturbation { amplitude, seed };
            }
            "sources" => self.sources = parse_bool(key, value)?,
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "vtk" => self.write_vtk = parse_bool(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "snapshot_every" => {
                let k = parse_usize(key, value)?;
                self.snapshot_every = (k > 0).then_some(k);
            }
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Parse `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply `key = value` lines to this configuration. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| match e {
                Error::InvalidArgument(message) => Error::Parse {
                    line: i + 1,
                    message,
                },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Render as `key = value` lines that [`RunConfig::parse`] reads back.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("mesh = {}", self.mesh),
            format!("a = {:?}", self.params.a),
            format!("b = {:?}", self.params.b),
            format!("d = {:?}", self.params.d),
            format!("gamma = {:?}", self.params.gamma),
            format!("scheme = {}", self.scheme.kind),
        ];
        if let SchemeKind::FractionalStep { theta } = self.scheme.kind {
            lines.push(format!("theta = {theta:?}"));
        }
        lines.push(format!("tau = {:?}", self.scheme.tau));
        lines.push(format!(
            "method = {}",
            match self.policy.method {
                NonlinearMethod::Picard => "picard",
                NonlinearMethod::Newton => "newton",
            }
        ));
        match self.policy.mode {
            IterationMode::Adaptive { tol, max_iters } => {
                lines.push("mode = adaptive".into());
                lines.push(format!("tol = {tol:?}"));
                lines.push(format!("max_iters = {max_iters}"));
            }
            IterationMode::Fixed { count } => lines.push(format!("count = {count}")),
        }
        lines.push(format!(
            "norm = {}",
            match self.policy.norm {
                NormKind::Mass => "mass",
                NormKind::Euclidean => "euclidean",
            }
        ));
        lines.push(format!("linear_rel_tol = {:?}", self.linear.rel_tol));
        if let Some(m) = self.linear.max_iters {
            lines.push(format!("linear_max_iters = {m}"));
        }
        lines.push(format!("restart = {}", self.linear.restart));
        lines.push(format!(
            "preconditioner = {}",
            match self.linear.preconditioner {
                Preconditioner::None => "none",
                Preconditioner::Jacobi => "jacobi",
            }
        ));
        lines.push(format!("t_end = {:?}", self.t_end));
        lines.push(format!("stop_tol = {:?}", self.stop_tol));
        match &self.ic {
            InitialCondition::EquilibriumPerturbation { amplitude, seed } => {
                lines.push("ic = equilibrium".into());
                lines.push(format!("amplitude = {amplitude:?}"));
                lines.push(format!("seed = {seed}"));
            }
            InitialCondition::Manufactured => lines.push("ic = manufactured".into()),
            InitialCondition::NodalFile(p) => lines.push(format!("ic = file:{}", p.display())),
        }
        let onoff = |b: bool| if b { "on" } else { "off" };
        lines.push(format!("sources = {}", onoff(self.sources)));
        if let Some(dir) = &self.output_dir {
            lines.push(format!("output_dir = {}", dir.display()));
        }
        lines.push(format!("vtk = {}", onoff(self.write_vtk)));
        lines.push(format!("timing = {}", onoff(self.timing)));
        if let Some(k) = self.snapshot_every {
            lines.push(format!("snapshot_every = {k}"));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.scheme.validate()?;
        self.policy.validate()?;
        self.linear.validate()?;
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stop_tol must be non-negative, got {}",
                self.stop_tol
            )));
        }
        if let InitialCondition::EquilibriumPerturbation { amplitude, .. } = self.ic {
            if !(amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "amplitude must be non-negative, got {amplitude}"
                )));
            }
        }
        Ok(())
    }

    /// Seed of the random initial condition, if any.
    pub fn seed(&self) -> Option<u64> {
        match self.ic {
            InitialCondition::EquilibriumPerturbation { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let text = "# comment\nmesh = square:8\nscheme = cnb5\ntau = 0.05\nmethod = picard\n\nseed = 42 # trailing\n";
        let mut cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.mesh, MeshSpec::Square(8));
        assert_eq!(cfg.scheme.kind, SchemeKind::CnWarmStart { warmup_steps: 5 });
        assert_eq!(cfg.scheme.tau, 0.05);
        assert_eq!(cfg.policy.method, NonlinearMethod::Picard);
        assert_eq!(cfg.seed(), Some(42));
        cfg.set("count", "1").unwrap();
        assert_eq!(cfg.policy.mode, IterationMode::Fixed { count: 1 });
        cfg.validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("mesh", "cube:3").unwrap();
        cfg.set("theta", "0.25").unwrap();
        cfg.set("snapshot_every", "10").unwrap();
        cfg.set("output_dir", "out/run").unwrap();
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match RunConfig::parse("tau = 0.1\nbogus = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            RunConfig::parse("no equals sign"),
            Err(Error::Parse { line: 1, .. })
        ));
        let mut cfg = RunConfig::default();
        cfg.set("tau", "-1").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn mesh_specs() {
        assert_eq!(MeshSpec::parse("cube:2").unwrap(), MeshSpec::Cube(2));
        assert_eq!(MeshSpec::parse("quad:3").unwrap().to_string(), "quad:3");
        assert_eq!(MeshSpec::Quad(3).build().unwrap().n_cells(), 9);
        assert!(MeshSpec::parse("disc:3").is_err());
        assert!(MeshSpec::parse("square").is_err());
        assert_eq!(MeshSpec::Square(4).build().unwrap().n_vertices(), 25);
    }
}
