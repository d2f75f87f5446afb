//! Fixed-iteration variants against adaptive baselines.
//!
//! For each of BE, CN, CNB5 and FSTS this runs adaptive Picard, one Picard
//! iteration per step (IMEX), adaptive Newton and one Newton iteration per
//! step. Divergent runs are recorded, not raised.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::stepping::{IterationMode, NonlinearMethod, NonlinearPolicy, SchemeKind};

use super::{run_simulation, RunConfig, StopReason};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub label: String,
    pub scheme: String,
    pub policy: NonlinearPolicy,
    pub tau: f64,
    pub end_time: f64,
    pub stopped_by: StopReason,
    pub steps: usize,
    pub total_iterations: usize,
    pub max_abs_u: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImexComparison {
    pub variants: Vec<VariantOutcome>,
}

impl ImexComparison {
    pub fn get(&self, label: &str) -> Option<&VariantOutcome> {
        self.variants.iter().find(|v| v.label == label)
    }
}

/// Short name of a scheme/policy pair: `BIMEX`, `C5IMEX`, `FSN` (single
/// Newton), `CP` (adaptive Picard), `BN` (adaptive Newton) and so on.
pub fn variant_label(kind: SchemeKind, policy: &NonlinearPolicy) -> String {
    let scheme = match kind {
        SchemeKind::BackwardEuler => "B".to_string(),
        SchemeKind::CrankNicolson => "C".to_string(),
        SchemeKind::CnWarmStart { warmup_steps } => format!("C{warmup_steps}"),
        SchemeKind::FractionalStep { .. } => "F".to_string(),
    };
    let suffix = match (policy.method, policy.mode) {
        (NonlinearMethod::Picard, IterationMode::Fixed { count: 1 }) => "IMEX".to_string(),
        (NonlinearMethod::Newton, IterationMode::Fixed { count: 1 }) => "SN".to_string(),
        (NonlinearMethod::Picard, IterationMode::Fixed { count }) => format!("P{count}"),
        (NonlinearMethod::Newton, IterationMode::Fixed { count }) => format!("N{count}"),
        (NonlinearMethod::Picard, IterationMode::Adaptive { .. }) => "P".to_string(),
        (NonlinearMethod::Newton, IterationMode::Adaptive { .. }) => "N".to_string(),
    };
    scheme + &suffix
}

/// Run all sixteen variants of `base` concurrently. Outputs go to
/// `base.output_dir/<label>` when an output directory is set.
pub fn run_imex_comparison(base: &RunConfig) -> Result<ImexComparison> {
    base.validate()?;
    let schemes = [
        SchemeKind::BackwardEuler,
        SchemeKind::CrankNicolson,
        SchemeKind::CnWarmStart { warmup_steps: 5 },
        SchemeKind::fractional_step(),
    ];
    let mut configs = Vec::new();
    for kind in schemes {
        for policy in [
            NonlinearPolicy::adaptive(NonlinearMethod::Picard),
            NonlinearPolicy::imex(),
            NonlinearPolicy::adaptive(NonlinearMethod::Newton),
            NonlinearPolicy::single_newton(),
        ] {
            let mut cfg = base.clone();
            cfg.scheme.kind = kind;
            cfg.policy = policy.with_norm(base.policy.norm);
            let label = variant_label(kind, &cfg.policy);
            cfg.output_dir = base
                .output_dir
                .as_ref()
                .map(|d| PathBuf::from(d).join(&label));
            cfg.snapshot_every = None;
            configs.push((label, cfg));
        }
    }
    let variants = configs
        .into_par_iter()
        .map(|(label, cfg)| {
            let (trace, _) = run_simulation(&cfg)?;
            Ok(VariantOutcome {
                label,
                scheme: cfg.scheme.kind.to_string(),
                policy: cfg.policy,
                tau: cfg.scheme.tau,
                end_time: trace.end_time,
                stopped_by: trace.stopped_by,
                steps: trace.steps(),
                total_iterations: trace.total_nonlinear_iterations(),
                max_abs_u: trace.max_abs_u,
                wall_ms: trace.wall_ms(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImexComparison { variants })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        let imex = NonlinearPolicy::imex();
        assert_eq!(variant_label(SchemeKind::BackwardEuler, &imex), "BIMEX");
        assert_eq!(variant_label(SchemeKind::CrankNicolson, &imex), "CIMEX");
        assert_eq!(
            variant_label(SchemeKind::CnWarmStart { warmup_steps: 5 }, &imex),
            "C5IMEX"
        );
        assert_eq!(variant_label(SchemeKind::fractional_step(), &imex), "FIMEX");
        assert_eq!(
            variant_label(
                SchemeKind::fractional_step(),
                &NonlinearPolicy::single_newton()
            ),
            "FSN"
        );
        assert_eq!(
            variant_label(
                SchemeKind::BackwardEuler,
                &NonlinearPolicy::adaptive(NonlinearMethod::Newton)
            ),
            "BN"
        );
    }
}
