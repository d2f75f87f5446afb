//! Experimental order of convergence against the manufactured solution.
//!
//! Level `i` uses `τ_i = 2^{-i}` on an `n × n` grid of squares, with bilinear
//! elements by default or split into P1 triangles. Second-order schemes use
//! `n = 2^i` so that `h = τ`; backward Euler uses the `n` whose `1/n` is
//! closest to `√τ_i`, so that `h² ≈ τ`. Initial data is the L2 projection
//! of `Ξ(0)` unless the nodal interpolant is requested. The error of a level is
//! `E = ||w_h(T) - Ξ(T)||` at `T = 10`, and for consecutive levels
//! `α_i = (ln E_i - ln E_{i-1}) / (ln τ_i - ln τ_{i-1})`.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{interpolate, ERROR_QUADRATURE_DEGREE};
use crate::error::{Error, Result};
use crate::kinetics::SchnakenbergParams;
use crate::linsolve::LinearSolveConfig;
use crate::mesh::{unit_square_mesh, unit_square_quad_mesh, CellKind};
use crate::quadrature::QuadratureRule;
use crate::stepping::{
    manufactured_solution, manufactured_sources, FemSystem, FieldPair, NonlinearPolicy,
    SchemeConfig, SchemeKind, Stepper,
};

/// Final time of every level.
pub const EOC_FINAL_TIME: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshCoupling {
    /// `h = τ`: `n = 2^i`.
    Linear,
    /// `h ≈ √τ`: `1/n` closest to `√τ`.
    SquareRoot,
}

impl MeshCoupling {
    pub fn for_scheme(kind: SchemeKind) -> Self {
        match kind {
            SchemeKind::BackwardEuler => MeshCoupling::SquareRoot,
            _ => MeshCoupling::Linear,
        }
    }
}

/// Grid size `n` for level `i` under `coupling`.
pub fn eoc_mesh_size(level: u32, coupling: MeshCoupling) -> usize {
    match coupling {
        MeshCoupling::Linear => 1usize << level,
        MeshCoupling::SquareRoot => {
            let target = 2f64.powf(-f64::from(level) / 2.0);
            let guess = 1.0 / target;
            let (lo, hi) = ((guess.floor() as usize).max(1), guess.ceil() as usize);
            if (1.0 / lo as f64 - target).abs() <= (1.0 / hi as f64 - target).abs() {
                lo
            } else {
                hi
            }
        }
    }
}

/// How `Ξ(0)` is transferred to the mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialTransfer {
    Interpolant,
    /// Leaves no high-frequency residue for Crank–Nicolson to carry along.
    L2Projection,
}

#[derive(Clone, Debug)]
pub struct EocOptions {
    pub params: SchnakenbergParams,
    pub linear: LinearSolveConfig,
    pub final_time: f64,
    /// Overrides [`MeshCoupling::for_scheme`].
    pub coupling: Option<MeshCoupling>,
    /// Record `e_u(t)`, `e_v(t)` after every step.
    pub record_history: bool,
    /// Element shape on the grid.
    pub cells: CellKind,
    pub initial: InitialTransfer,
}

impl Default for EocOptions {
    fn default() -> Self {
        EocOptions {
            params: SchnakenbergParams::standard(),
            linear: LinearSolveConfig::default(),
            final_time: EOC_FINAL_TIME,
            coupling: None,
            record_history: false,
            cells: CellKind::Quadrilateral,
            initial: InitialTransfer::L2Projection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EocLevel {
    pub level: u32,
    pub tau: f64,
    pub n: usize,
    pub e_u: f64,
    pub e_v: f64,
    pub alpha_u: Option<f64>,
    pub alpha_v: Option<f64>,
    pub nonlinear_iterations: usize,
    /// Largest `e_u(t)` over all steps; only with `record_history`.
    pub peak_e_u: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EocReport {
    pub scheme: String,
    pub levels: Vec<EocLevel>,
    /// False when some level failed; `failure` says which.
    pub complete: bool,
    pub failure: Option<String>,
}

impl EocReport {
    pub fn alpha_u(&self, level: u32) -> Option<f64> {
        self.levels
            .iter()
            .find(|l| l.level == level)
            .and_then(|l| l.alpha_u)
    }
}

/// Result of one manufactured-solution run.
#[derive(Clone, Debug, PartialEq)]
pub struct ManufacturedRun {
    pub e_u: f64,
    pub e_v: f64,
    pub nonlinear_iterations: usize,
    /// `(t, e_u, e_v)` after each step, when requested.
    pub history: Vec<(f64, f64, f64)>,
    pub last: FieldPair,
}

/// Solve the sourced problem on an `n × n` grid up to `opts.final_time`.
pub fn manufactured_run(
    kind: SchemeKind,
    tau: f64,
    n: usize,
    policy: &NonlinearPolicy,
    opts: &EocOptions,
) -> Result<ManufacturedRun> {
    let mesh = match opts.cells {
        CellKind::Quadrilateral => unit_square_quad_mesh(n)?,
        CellKind::Simplex => unit_square_mesh(n)?,
    };
    let system = FemSystem::new(&mesh, opts.params, opts.linear)?;
    let rule = QuadratureRule::collapsed(2, ERROR_QUADRATURE_DEGREE);
    let scheme = SchemeConfig::new(kind, tau)?;
    let mut stepper = Stepper::new(&system, scheme, *policy, manufactured_sources(&opts.params))?;
    let w0 = match opts.initial {
        InitialTransfer::Interpolant => interpolate(&mesh, manufactured_solution, 0.0)?,
        InitialTransfer::L2Projection => system.project(&rule, manufactured_solution, 0.0)?,
    };
    let mut state = FieldPair::new(w0.clone(), w0, 0.0)?;
    let n_steps = (opts.final_time / tau).round() as usize;
    let errors = |w: &FieldPair, t: f64| -> Result<(f64, f64)> {
        let exact = |x: &[f64; 3]| manufactured_solution(x, t);
        Ok((
            system.assembler().l2_error(&rule, &w.u, exact)?,
            system.assembler().l2_error(&rule, &w.v, exact)?,
        ))
    };
    let mut history = Vec::new();
    let mut iterations = 0;
    for k in 1..=n_steps {
        let (next, rep) = stepper.step(&state)?;
        iterations += rep.nonlinear_iterations;
        // Use the exact grid time so accumulated rounding does not enter Ξ.
        state = FieldPair {
            t: k as f64 * tau,
            ..next
        };
        if opts.record_history {
            let (eu, ev) = errors(&state, state.t)?;
            history.push((state.t, eu, ev));
        }
    }
    let (e_u, e_v) = errors(&state, state.t)?;
    Ok(ManufacturedRun {
        e_u,
        e_v,
        nonlinear_iterations: iterations,
        history,
        last: state,
    })
}

/// EOC study with default options.
pub fn run_eoc(
    kind: SchemeKind,
    levels: RangeInclusive<u32>,
    policy: &NonlinearPolicy,
) -> Result<EocReport> {
    run_eoc_with(kind, levels, policy, &EocOptions::default())
}

/// EOC study; levels run concurrently.
pub fn run_eoc_with(
    kind: SchemeKind,
    levels: RangeInclusive<u32>,
    policy: &NonlinearPolicy,
    opts: &EocOptions,
) -> Result<EocReport> {
    if levels.is_empty() || *levels.start() == 0 || *levels.end() > 20 {
        return Err(Error::InvalidArgument(format!(
            "levels must be a non-empty range within 1..=20, got {levels:?}"
        )));
    }
    policy.validate()?;
    let coupling = opts.coupling.unwrap_or(MeshCoupling::for_scheme(kind));
    let runs: Vec<(u32, f64, usize, Result<ManufacturedRun>)> = levels
        .clone()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|i| {
            let tau = 2f64.powi(-(i as i32));
            let n = eoc_mesh_size(i, coupling);
            (i, tau, n, manufactured_run(kind, tau, n, policy, opts))
        })
        .collect();

    let mut report = EocReport {
        scheme: kind.to_string(),
        levels: Vec::new(),
        complete: true,
        failure: None,
    };
    let mut prev: Option<(f64, f64, f64)> = None;
    for (level, tau, n, run) in runs {
        let run = match run {
            Ok(r) => r,
            Err(e) => {
                report.complete = false;
                report.failure = Some(format!("level {level}: {e}"));
                break;
            }
        };
        let rate = |e: f64, e0: f64, t0: f64| (e.ln() - e0.ln()) / (tau.ln() - t0.ln());
        let (alpha_u, alpha_v) = match prev {
            Some((t0, eu0, ev0)) => (Some(rate(run.e_u, eu0, t0)), Some(rate(run.e_v, ev0, t0))),
            None => (None, None),
        };
        prev = Some((tau, run.e_u, run.e_v));
        report.levels.push(EocLevel {
            level,
            tau,
            n,
            e_u: run.e_u,
            e_v: run.e_v,
            alpha_u,
            alpha_v,
            nonlinear_iterations: run.nonlinear_iterations,
            peak_e_u: opts
                .record_history
                .then(|| run.history.iter().map(|h| h.1).fold(0.0, f64::max)),
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_root_coupling_sizes() {
        let ns: Vec<usize> = (1..=10)
            .map(|i| eoc_mesh_size(i, MeshCoupling::SquareRoot))
            .collect();
        assert_eq!(ns, vec![2, 2, 3, 4, 6, 8, 11, 16, 23, 32]);
        assert_eq!(eoc_mesh_size(5, MeshCoupling::Linear), 32);
    }

    #[test]
    fn bad_levels_are_rejected() {
        let p = NonlinearPolicy::single_newton();
        assert!(run_eoc(SchemeKind::CrankNicolson, 0..=2, &p).is_err());
        #[allow(clippy::reversed_empty_ranges)]
        let empty = 3..=2;
        assert!(run_eoc(SchemeKind::CrankNicolson, empty, &p).is_err());
    }
}
