//! Experiment drivers: pattern simulations with a steady-state stop,
//! convergence-order studies against a manufactured solution, growth-rate
//! diagnostics, IMEX/single-Newton comparisons and a Picard contraction probe.

mod comparison;
pub mod config;
mod contraction;
mod eoc;
mod growth;
pub mod output;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assembly::interpolate;
use crate::error::{Error, Result};
use crate::kinetics::{equilibrium, turing_analysis};
use crate::mesh::Mesh;
use crate::stepping::{
    manufactured_solution, manufactured_sources, FemSystem, FieldPair, SourceTerms, Stepper,
};

pub use comparison::{run_imex_comparison, variant_label, ImexComparison, VariantOutcome};
pub use config::{InitialCondition, MeshSpec, RunConfig};
pub use contraction::{picard_contraction_probe, ContractionRow};
pub use eoc::{
    eoc_mesh_size, manufactured_run, run_eoc, run_eoc_with, EocLevel, EocOptions, EocReport,
    InitialTransfer, ManufacturedRun, MeshCoupling, EOC_FINAL_TIME,
};
pub use growth::{exponential_window, growth_ratio_series, GrowthPoint, GrowthSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Both increment rates fell to `stop_tol`.
    Steady,
    /// Reached `t_end`.
    TEnd,
    /// A step failed; the trace holds the steps before it.
    Failure,
}

/// Diagnostics for one completed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    /// `||uⁿ⁺¹ - uⁿ|| / τ`.
    pub du_rate: f64,
    /// `||vⁿ⁺¹ - vⁿ|| / τ`.
    pub dv_rate: f64,
    pub nonlin_iters: usize,
    pub inner_iters: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub records: Vec<TraceRecord>,
    pub tau: f64,
    pub end_time: f64,
    pub stopped_by: StopReason,
    pub failure: Option<String>,
    /// Largest `||u||_∞` over the initial state and all completed steps.
    pub max_abs_u: f64,
    pub seed: Option<u64>,
    /// Field copies taken every `snapshot_every` steps, starting with the
    /// initial state.
    #[serde(skip)]
    pub snapshots: Vec<FieldPair>,
}

impl SimulationTrace {
    pub fn total_nonlinear_iterations(&self) -> usize {
        self.records.iter().map(|r| r.nonlin_iters).sum()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iters).sum()
    }

    pub fn wall_ms(&self) -> f64 {
        self.records.iter().map(|r| r.wall_ms).sum()
    }

    pub fn steps(&self) -> usize {
        self.records.len()
    }
}

/// Build the initial state described by `cfg.ic` on `mesh`.
pub fn initial_condition(cfg: &RunConfig, mesh: &Mesh) -> Result<FieldPair> {
    let n = mesh.n_vertices();
    match &cfg.ic {
        InitialCondition::EquilibriumPerturbation { amplitude, seed } => {
            let eq = equilibrium(&cfg.params);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut noise = || amplitude * (2.0 * rng.gen::<f64>() - 1.0);
            let u = (0..n).map(|_| eq.u_eq + noise()).collect();
            let v = (0..n).map(|_| eq.v_eq + noise()).collect();
            FieldPair::new(u, v, 0.0)
        }
        InitialCondition::Manufactured => {
            let w = interpolate(mesh, manufactured_solution, 0.0)?;
            FieldPair::new(w.clone(), w, 0.0)
        }
        InitialCondition::NodalFile(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            output::parse_nodal(&text, n)
        }
    }
}

fn sources_for(cfg: &RunConfig) -> SourceTerms {
    if cfg.sources {
        manufactured_sources(&cfg.params)
    } else {
        SourceTerms::none()
    }
}

/// Run `cfg` to a steady state or `t_end`, writing outputs when
/// `cfg.output_dir` is set. Step failures end the run with
/// [`StopReason::Failure`] rather than an error.
pub fn run_simulation(cfg: &RunConfig) -> Result<(SimulationTrace, FieldPair)> {
    cfg.validate()?;
    let mesh = cfg.mesh.build()?;
    let system = FemSystem::new(&mesh, cfg.params, cfg.linear)?;
    let initial = initial_condition(cfg, &mesh)?;
    let (trace, last) = simulate(&system, cfg, initial)?;
    if let Some(dir) = &cfg.output_dir {
        write_run_outputs(dir, cfg, &mesh, &trace, &last)?;
    }
    Ok((trace, last))
}

/// The time loop of [`run_simulation`] on an already assembled system.
pub fn simulate(
    system: &FemSystem,
    cfg: &RunConfig,
    initial: FieldPair,
) -> Result<(SimulationTrace, FieldPair)> {
    let tau = cfg.scheme.tau;
    let mut stepper = Stepper::new(system, cfg.scheme, cfg.policy, sources_for(cfg))?;
    let n_steps = ((cfg.t_end / tau).round() as usize).max(1);
    let mut trace = SimulationTrace {
        records: Vec::new(),
        tau,
        end_time: initial.t,
        stopped_by: StopReason::TEnd,
        failure: None,
        max_abs_u: initial.max_abs_u(),
        seed: cfg.seed(),
        snapshots: Vec::new(),
    };
    if cfg.snapshot_every.is_some() {
        trace.snapshots.push(initial.clone());
    }
    let mut state = initial;
    for step in 1..=n_steps {
        let clock = Instant::now();
        let (next, report) = match stepper.step(&state) {
            Ok(out) => out,
            Err(e) => {
                trace.stopped_by = StopReason::Failure;
                trace.failure = Some(e.to_string());
                break;
            }
        };
        let wall_ms = if cfg.timing {
            clock.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        state = next;
        let rec = TraceRecord {
            step,
            t: state.t,
            du_rate: report.du_norm / tau,
            dv_rate: report.dv_norm / tau,
            nonlin_iters: report.nonlinear_iterations,
            inner_iters: report.inner_iterations(),
            wall_ms,
        };
        trace.max_abs_u = trace.max_abs_u.max(state.max_abs_u());
        trace.end_time = state.t;
        let steady = rec.du_rate <= cfg.stop_tol && rec.dv_rate <= cfg.stop_tol;
        trace.records.push(rec);
        if let Some(k) = cfg.snapshot_every {
            if step % k == 0 {
                trace.snapshots.push(state.clone());
            }
        }
        if steady {
            trace.stopped_by = StopReason::Steady;
            break;
        }
    }
    Ok((trace, state))
}

/// JSON summary of a run.
pub fn run_summary(cfg: &RunConfig, trace: &SimulationTrace) -> serde_json::Value {
    let turing = turing_analysis(&cfg.params);
    json!({
        "mesh": cfg.mesh.to_string(),
        "params": cfg.params,
        "scheme": cfg.scheme.kind.to_string(),
        "tau": cfg.scheme.tau,
        "policy": cfg.policy,
        "seed": trace.seed,
        "steps": trace.steps(),
        "end_time": trace.end_time,
        "stopped_by": trace.stopped_by,
        "failure": trace.failure,
        "max_abs_u": trace.max_abs_u,
        "total_nonlinear_iterations": trace.total_nonlinear_iterations(),
        "total_inner_iterations": trace.total_inner_iterations(),
        "wall_ms": trace.wall_ms(),
        "turing": turing_json(&turing),
    })
}

/// The Turing report in its JSON form.
pub fn turing_json(report: &crate::kinetics::TuringReport) -> serde_json::Value {
    let finite = |x: f64| x.is_finite().then_some(x);
    let modes = |ms: &[crate::kinetics::Mode]| -> Vec<serde_json::Value> {
        ms.iter()
            .map(|m| {
                json!({
                    "n": m.n,
                    "m": m.m,
                    "k2": m.k2,
                    "growth_rate": m.growth_rate,
                    "near_band_edge": m.near_band_edge,
                })
            })
            .collect()
    };
    json!({
        "stable_without_diffusion": report.stable_without_diffusion,
        "diffusion_driven_unstable": report.diffusion_driven_unstable,
        "k2_minus": finite(report.k2_minus),
        "k2_plus": finite(report.k2_plus),
        "unstable_modes": modes(&report.unstable_modes),
        "near_edge_modes": modes(&report.near_edge_modes),
        "growth_rate": report.growth_rate,
    })
}

/// Write `trace.csv`, `summary.json`, `growth.csv` (when an unstable mode
/// exists) and `final.vtk` into `dir`.
pub fn write_run_outputs(
    dir: &Path,
    cfg: &RunConfig,
    mesh: &Mesh,
    trace: &SimulationTrace,
    last: &FieldPair,
) -> Result<()> {
    output::write_trace_csv(trace, dir.join("trace.csv"))?;
    output::write_json(&run_summary(cfg, trace), dir.join("summary.json"))?;
    let turing = turing_analysis(&cfg.params);
    if let Some(fastest) = turing
        .unstable_modes
        .iter()
        .max_by(|a, b| a.growth_rate.total_cmp(&b.growth_rate))
    {
        if trace.records.len() >= 3 {
            let series = growth_ratio_series(trace, &cfg.params, fastest.k2)?;
            output::write_growth_csv(&series, dir.join("growth.csv"))?;
        }
    }
    if cfg.write_vtk {
        output::write_vtk(mesh, last, dir.join("final.vtk"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepping::NonlinearPolicy;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.mesh = MeshSpec::Square(4);
        cfg.t_end = 0.05;
        cfg.timing = false;
        cfg
    }

    #[test]
    fn exact_equilibrium_stops_immediately() {
        let mut cfg = small_config();
        cfg.set("amplitude", "0").unwrap();
        let (trace, last) = run_simulation(&cfg).unwrap();
        assert_eq!(trace.stopped_by, StopReason::Steady);
        assert_eq!(trace.steps(), 1);
        assert!((last.u[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn random_ic_is_seeded() {
        let cfg = small_config();
        let mesh = cfg.mesh.build().unwrap();
        let a = initial_condition(&cfg, &mesh).unwrap();
        let b = initial_condition(&cfg, &mesh).unwrap();
        assert_eq!(a, b);
        assert!(a.u.iter().all(|x| (x - 1.0).abs() <= 1e-2));
        assert!(a.v.iter().all(|x| (x - 0.9).abs() <= 1e-2));
        let mut other = cfg.clone();
        other.set("seed", "1").unwrap();
        assert_ne!(initial_condition(&other, &mesh).unwrap(), a);
    }

    #[test]
    fn runs_to_t_end_and_snapshots() {
        let mut cfg = small_config();
        cfg.policy = NonlinearPolicy::single_newton();
        cfg.snapshot_every = Some(2);
        let (trace, _) = run_simulation(&cfg).unwrap();
        assert_eq!(trace.stopped_by, StopReason::TEnd);
        assert_eq!(trace.steps(), 5);
        assert!((trace.end_time - 0.05).abs() < 1e-12);
        assert_eq!(trace.snapshots.len(), 3);
    }
}
