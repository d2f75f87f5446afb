//! Step-to-step growth ratios of the `u` increment.
//!
//! While a single mode with growth rate `λ` dominates, consecutive increments
//! satisfy `||uⁿ⁺¹ - uⁿ|| / ||uⁿ - uⁿ⁻¹|| ≈ e^{λτ}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::{dispersion_growth_rate, SchnakenbergParams};

use super::SimulationTrace;

/// Largest relative spread `(max - min) / min` of ratios inside a window.
pub const WINDOW_SPREAD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub step: usize,
    pub t: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub points: Vec<GrowthPoint>,
    pub lambda: f64,
    /// `e^{λτ}`.
    pub theory: f64,
    /// Index range `[start, end)` into `points` of the exponential phase.
    pub window: Option<(usize, usize)>,
}

impl GrowthSeries {
    /// Mean ratio over the detected window.
    pub fn window_mean(&self) -> Option<f64> {
        let (s, e) = self.window?;
        let w = &self.points[s..e];
        Some(w.iter().map(|p| p.ratio).sum::<f64>() / w.len() as f64)
    }
}

/// Ratios of successive `u` increments from `trace`, with the theoretical
/// value for mode `k2` under `p`.
pub fn growth_ratio_series(
    trace: &SimulationTrace,
    p: &SchnakenbergParams,
    k2: f64,
) -> Result<GrowthSeries> {
    if trace.records.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "growth ratios need at least 3 steps, trace has {}",
            trace.records.len()
        )));
    }
    let points: Vec<GrowthPoint> = trace
        .records
        .windows(2)
        .filter(|w| w[0].du_rate > 0.0 && w[1].step == w[0].step + 1)
        .map(|w| GrowthPoint {
            step: w[1].step,
            t: w[1].t,
            ratio: w[1].du_rate / w[0].du_rate,
        })
        .collect();
    let lambda = dispersion_growth_rate(p, k2);
    let window = exponential_window(&points);
    Ok(GrowthSeries {
        points,
        lambda,
        theory: (lambda * trace.tau).exp(),
        window,
    })
}

/// Longest run of consecutive steps whose ratios all exceed 1 and spread by
/// less than [`WINDOW_SPREAD`]. Returns `[start, end)` indices.
pub fn exponential_window(points: &[GrowthPoint]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = 0;
    while start < points.len() {
        if !(points[start].ratio > 1.0) {
            start += 1;
            continue;
        }
        let (mut lo, mut hi) = (points[start].ratio, points[start].ratio);
        let mut end = start + 1;
        while end < points.len() {
            let r = points[end].ratio;
            let contiguous = points[end].step == points[end - 1].step + 1;
            let (nlo, nhi) = (lo.min(r), hi.max(r));
            if !(r > 1.0) || !contiguous || (nhi - nlo) / nlo >= WINDOW_SPREAD {
                break;
            }
            lo = nlo;
            hi = nhi;
            end += 1;
        }
        if best.map_or(true, |(s, e)| end - start > e - s) {
            best = Some((start, end));
        }
        start += 1;
    }
    best.filter(|(s, e)| e - s >= 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{StopReason, TraceRecord};

    fn trace_from_rates(rates: &[f64], tau: f64) -> SimulationTrace {
        SimulationTrace {
            records: rates
                .iter()
                .enumerate()
                .map(|(i, &r)| TraceRecord {
                    step: i + 1,
                    t: (i + 1) as f64 * tau,
                    du_rate: r,
                    dv_rate: r,
                    nonlin_iters: 1,
                    inner_iters: 1,
                    wall_ms: 0.0,
                })
                .collect(),
            tau,
            end_time: rates.len() as f64 * tau,
            stopped_by: StopReason::TEnd,
            failure: None,
            max_abs_u: 1.0,
            seed: None,
            snapshots: Vec::new(),
        }
    }

    #[test]
    fn theory_matches_exponential_identity() {
        let p = SchnakenbergParams::standard();
        let k2 = std::f64::consts::PI.powi(2);
        let lam = dispersion_growth_rate(&p, k2);
        let tr = trace_from_rates(&[1.0, 1.0, 1.0], 0.01);
        let g = growth_ratio_series(&tr, &p, k2).unwrap();
        let x = lam * 0.01;
        assert!((g.theory - (x.exp() - 1.0) / (1.0 - (-x).exp())).abs() < 1e-12);
        assert!((g.theory - 1.01638).abs() < 1e-4);
    }

    #[test]
    fn window_picks_longest_flat_growth() {
        let mut rates = vec![1.0, 0.9, 0.8];
        let mut r = 0.8;
        for _ in 0..20 {
            r *= 1.05;
            rates.push(r);
        }
        for _ in 0..5 {
            r *= 0.7;
            rates.push(r);
        }
        let g = growth_ratio_series(
            &trace_from_rates(&rates, 0.1),
            &SchnakenbergParams::standard(),
            1.0,
        )
        .unwrap();
        let (s, e) = g.window.unwrap();
        assert_eq!(e - s, 20);
        assert!((g.window_mean().unwrap() - 1.05).abs() < 1e-12);
    }

    #[test]
    fn zero_increments_are_skipped() {
        let g = growth_ratio_series(
            &trace_from_rates(&[0.0, 1.0, 2.0, 4.0], 0.1),
            &SchnakenbergParams::standard(),
            1.0,
        )
        .unwrap();
        assert_eq!(g.points.len(), 2);
        assert_eq!(g.points[0].step, 3);
    }
}
