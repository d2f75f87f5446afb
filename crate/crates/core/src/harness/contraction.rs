//! Geometric convergence of the backward Euler Picard iteration.
//!
//! For each timestep the iteration is run from the current state until it
//! stalls at round-off, giving a reference fixed point `ξ*`. The probe then
//! reports the ratios `||ξ_{k+1} - ξ*|| / ||ξ_k - ξ*||` while the error is
//! above a round-off floor.

use serde::{Deserialize, Serialize};

use crate::assembly::mass_norm;
use crate::error::{Error, Result};
use crate::stepping::{FemSystem, FieldPair, SourceTerms};

use super::{initial_condition, RunConfig};

/// Iteration cap per timestep.
pub const PROBE_MAX_ITERS: usize = 200;
/// Inner solver tolerance used by the probe.
pub const PROBE_LINEAR_TOL: f64 = 1e-13;
/// Errors below this fraction of `||ξ*||` are treated as converged.
pub const PROBE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub tau: f64,
    pub ratios: Vec<f64>,
    /// Largest ratio; at least 1 when the iteration did not settle and
    /// absent when it broke down.
    pub max_ratio: Option<f64>,
    /// First `k` with `||ξ_k - ξ*||` below the floor.
    pub iterations_to_converge: usize,
    pub converged: bool,
}

/// Run the probe for each `τ` in `taus` from the initial state of `cfg`.
pub fn picard_contraction_probe(cfg: &RunConfig, taus: &[f64]) -> Result<Vec<ContractionRow>> {
    cfg.validate()?;
    if taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidArgument(
            "probe timesteps must be positive".into(),
        ));
    }
    let mesh = cfg.mesh.build()?;
    let mut linear = cfg.linear;
    linear.rel_tol = linear.rel_tol.min(PROBE_LINEAR_TOL);
    let system = FemSystem::new(&mesh, cfg.params, linear)?;
    let state = initial_condition(cfg, &mesh)?;
    let sources = SourceTerms::none();
    let mass = system.mass();
    let pair_norm = |a: &FieldPair, b: &FieldPair| -> f64 {
        let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
        let dv: Vec<f64> = a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect();
        mass_norm(mass, &du).hypot(mass_norm(mass, &dv))
    };
    let zero = FieldPair::constant(state.len(), 0.0, 0.0, 0.0);

    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut iterates = vec![state.clone()];
        let mut converged = false;
        let mut broke_down = false;
        let mut prev_step = f64::INFINITY;
        for _ in 0..PROBE_MAX_ITERS {
            let last = iterates.last().expect("non-empty");
            // A diverging iteration can make the u-block indefinite; that
            // ends the probe for this timestep.
            let next = match system.picard_update(&state, last, tau, &sources) {
                Ok((next, _)) if next.is_finite() => next,
                Ok(_) | Err(Error::NumericBreakdown { .. }) | Err(Error::StepFailure { .. }) => {
                    broke_down = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let step = pair_norm(&next, last);
            let floor = PROBE_FLOOR * pair_norm(&next, &zero);
            iterates.push(next);
            // Stop once the increments are far below the floor or have
            // stalled at round-off underneath it.
            if step <= 1e-2 * floor || (step < floor && step >= prev_step) {
                converged = true;
                break;
            }
            prev_step = step;
        }
        if broke_down {
            rows.push(ContractionRow {
                tau,
                ratios: Vec::new(),
                max_ratio: None,
                iterations_to_converge: iterates.len() - 1,
                converged: false,
            });
            continue;
        }
        let star = iterates.last().expect("non-empty").clone();
        let floor = PROBE_FLOOR * pair_norm(&star, &zero);
        let errors: Vec<f64> = iterates.iter().map(|w| pair_norm(w, &star)).collect();
        let ratios: Vec<f64> = errors
            .windows(2)
            .take_while(|e| e[0] > floor)
            .map(|e| e[1] / e[0])
            .collect();
        let iterations_to_converge = errors
            .iter()
            .position(|&e| e <= floor)
            .unwrap_or(errors.len());
        let mut max_ratio = ratios.iter().copied().fold(0.0, f64::max);
        if !converged {
            max_ratio = max_ratio.max(1.0);
        }
        rows.push(ContractionRow {
            tau,
            ratios,
            max_ratio: Some(max_ratio),
            iterations_to_converge,
            converged,
        });
    }
    Ok(rows)
}
