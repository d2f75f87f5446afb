//! Schnakenberg kinetics and linear (Turing) stability analysis.
//!
//! The reaction terms are `f(u, v) = a - u + u²v` and `g(u, v) = b - u²v`,
//! scaled by `γ` in the PDE. The homogeneous equilibrium is
//! `(a + b, b / (a + b)²)`. Perturbations proportional to a Neumann
//! eigenmode of `-∇²` with eigenvalue `k²` grow at the largest real part of
//! the eigenvalues of `γ J - k² diag(1, d)`, where `J` is the kinetic
//! Jacobian at equilibrium.
//!
//! On the unit square the eigenmodes are `cos(nπx) cos(mπy)` with
//! `k² = π² (n² + m²)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchnakenbergParams {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub gamma: f64,
}

impl SchnakenbergParams {
    pub fn new(a: f64, b: f64, d: f64, gamma: f64) -> Result<Self> {
        let p = SchnakenbergParams { a, b, d, gamma };
        p.validate()?;
        Ok(p)
    }

    /// `a = 0.1, b = 0.9, d = 10, γ = 29`: the (1,0)/(0,1) modes are the
    /// only unstable modes on the unit square.
    pub fn standard() -> Self {
        SchnakenbergParams {
            a: 0.1,
            b: 0.9,
            d: 10.0,
            gamma: 29.0,
        }
    }

    /// Parameter set isolating the (2,1)/(1,2) modes.
    pub fn mode_2_1() -> Self {
        SchnakenbergParams {
            a: 0.1,
            b: 0.9,
            d: 9.1676,
            gamma: 176.72,
        }
    }

    /// Parameter set isolating the (3,3) mode.
    pub fn mode_3_3() -> Self {
        SchnakenbergParams {
            a: 0.1,
            b: 0.9,
            d: 8.6076,
            gamma: 535.09,
        }
    }

    /// Same kinetics with `γ` replaced.
    pub fn with_gamma(self, gamma: f64) -> Self {
        SchnakenbergParams { gamma, ..self }
    }

    /// `a`, `b` may be zero individually (`γ = 0` is also admitted so that the
    /// linear heat problem can be run through the same code path); `d` must
    /// be positive.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.b, self.d, self.gamma]
            .iter()
            .all(|x| x.is_finite());
        if !finite || self.a < 0.0 || self.b < 0.0 || self.gamma < 0.0 || self.d <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "kinetic parameters must be non-negative with d > 0: {self:?}"
            )));
        }
        if self.a + self.b <= 0.0 {
            return Err(Error::InvalidArgument("a + b must be positive".into()));
        }
        Ok(())
    }
}

/// Unscaled reaction terms `(f(u, v), g(u, v))`.
pub fn reaction_eval(p: &SchnakenbergParams, u: f64, v: f64) -> (f64, f64) {
    let u2v = u * u * v;
    (p.a - u + u2v, p.b - u2v)
}

/// Jacobian `[[f_u, f_v], [g_u, g_v]]` of the unscaled reaction terms.
pub fn reaction_jacobian(u: f64, v: f64) -> [[f64; 2]; 2] {
    [[-1.0 + 2.0 * u * v, u * u], [-2.0 * u * v, -u * u]]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub u_eq: f64,
    pub v_eq: f64,
    /// `[[f_u, f_v], [g_u, g_v]]` at equilibrium.
    pub jac: [[f64; 2]; 2],
}

impl EquilibriumState {
    pub fn trace(&self) -> f64 {
        self.jac[0][0] + self.jac[1][1]
    }

    pub fn det(&self) -> f64 {
        self.jac[0][0] * self.jac[1][1] - self.jac[0][1] * self.jac[1][0]
    }
}

pub fn equilibrium(p: &SchnakenbergParams) -> EquilibriumState {
    let u = p.a + p.b;
    let v = p.b / (u * u);
    EquilibriumState {
        u_eq: u,
        v_eq: v,
        jac: reaction_jacobian(u, v),
    }
}

/// A Neumann eigenmode `cos(nπx) cos(mπy)` of the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub n: u32,
    pub m: u32,
    pub k2: f64,
    pub growth_rate: f64,
    /// Within [`BAND_EDGE_PROXIMITY`] (relative) of a band endpoint.
    pub near_band_edge: bool,
}

/// Relative distance to a band endpoint below which a mode is flagged.
pub const BAND_EDGE_PROXIMITY: f64 = 5e-3;

/// Default cap on `n` and `m` when enumerating modes.
pub const DEFAULT_MODE_CAP: u32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuringReport {
    pub stable_without_diffusion: bool,
    pub diffusion_driven_unstable: bool,
    /// Band endpoints in squared wavenumber; `NaN` when the band is empty.
    pub k2_minus: f64,
    pub k2_plus: f64,
    /// Modes with `k2_minus < k² < k2_plus`.
    pub unstable_modes: Vec<Mode>,
    /// Modes outside the band that sit close to one of its endpoints.
    pub near_edge_modes: Vec<Mode>,
    /// Growth rate of the fastest unstable mode, if any.
    pub growth_rate: Option<f64>,
}

impl TuringReport {
    pub fn contains(&self, k2: f64) -> bool {
        self.diffusion_driven_unstable && self.k2_minus < k2 && k2 < self.k2_plus
    }
}

pub fn mode_k2(n: u32, m: u32) -> f64 {
    PI * PI * f64::from(n * n + m * m)
}

/// Turing analysis with the default mode cap.
pub fn turing_analysis(p: &SchnakenbergParams) -> TuringReport {
    turing_analysis_with_cap(p, DEFAULT_MODE_CAP)
}

pub fn turing_analysis_with_cap(p: &SchnakenbergParams, cap: u32) -> TuringReport {
    let eq = equilibrium(p);
    let [[fu, fv], [gu, gv]] = eq.jac;
    let det = fu * gv - fv * gu;
    let stable_without_diffusion = fu + gv < 0.0 && det > 0.0;
    let s = p.d * fu + gv;
    let disc = s * s - 4.0 * p.d * det;
    let diffusion_driven_unstable = stable_without_diffusion && s > 0.0 && disc > 0.0;
    let (k2_minus, k2_plus) = if s > 0.0 && disc > 0.0 {
        let r = disc.sqrt();
        (
            p.gamma * (s - r) / (2.0 * p.d),
            p.gamma * (s + r) / (2.0 * p.d),
        )
    } else {
        (f64::NAN, f64::NAN)
    };

    let mut unstable_modes = Vec::new();
    let mut near_edge_modes = Vec::new();
    if diffusion_driven_unstable {
        for n in 0..=cap {
            for m in 0..=cap {
                let k2 = mode_k2(n, m);
                let near = [k2_minus, k2_plus]
                    .iter()
                    .any(|e| ((k2 - e) / e).abs() < BAND_EDGE_PROXIMITY);
                let mode = Mode {
                    n,
                    m,
                    k2,
                    growth_rate: dispersion_growth_rate(p, k2),
                    near_band_edge: near,
                };
                if k2_minus < k2 && k2 < k2_plus {
                    unstable_modes.push(mode);
                } else if near {
                    near_edge_modes.push(mode);
                }
            }
        }
    }
    let growth_rate = unstable_modes
        .iter()
        .map(|m| m.growth_rate)
        .fold(None, |acc: Option<f64>, g| {
            Some(acc.map_or(g, |a| a.max(g)))
        });
    TuringReport {
        stable_without_diffusion,
        diffusion_driven_unstable,
        k2_minus,
        k2_plus,
        unstable_modes,
        near_edge_modes,
        growth_rate,
    }
}

/// Largest real part of the eigenvalues of `γ J - k² diag(1, d)`.
pub fn dispersion_growth_rate(p: &SchnakenbergParams, k2: f64) -> f64 {
    let [[fu, fv], [gu, gv]] = equilibrium(p).jac;
    let m11 = p.gamma * fu - k2;
    let m22 = p.gamma * gv - p.d * k2;
    let m12 = p.gamma * fv;
    let m21 = p.gamma * gu;
    let tr = m11 + m22;
    let det = m11 * m22 - m12 * m21;
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        0.5 * (tr + disc.sqrt())
    } else {
        0.5 * tr
    }
}

/// `h(k²) = d k⁴ - γ (d f_u + g_v) k² + γ² det J`; negative exactly inside the band.
pub fn dispersion_determinant(p: &SchnakenbergParams, k2: f64) -> f64 {
    let eq = equilibrium(p);
    let [[fu, _], [_, gv]] = eq.jac;
    p.d * k2 * k2 - p.gamma * (p.d * fu + gv) * k2 + p.gamma * p.gamma * eq.det()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_equilibrium() {
        let eq = equilibrium(&SchnakenbergParams::standard());
        assert!((eq.u_eq - 1.0).abs() < 1e-15);
        assert!((eq.v_eq - 0.9).abs() < 1e-15);
        let j = eq.jac;
        let expect = [[0.8, 1.0], [-1.8, -1.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[r][c] - expect[r][c]).abs() < 1e-14);
            }
        }
        let (f, g) = reaction_eval(&SchnakenbergParams::standard(), eq.u_eq, eq.v_eq);
        assert!(f.abs() < 1e-14 && g.abs() < 1e-14);
    }

    #[test]
    fn b_zero_limit() {
        let p = SchnakenbergParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        let eq = equilibrium(&p);
        assert_eq!((eq.u_eq, eq.v_eq), (1.0, 0.0));
        assert_eq!(eq.jac, [[-1.0, 1.0], [0.0, -1.0]]);
    }

    #[test]
    fn reaction_examples() {
        let p = SchnakenbergParams::standard();
        let (f, g) = reaction_eval(&p, 1.0, 0.0);
        assert!((f + 0.9).abs() < 1e-15 && (g - 0.9).abs() < 1e-15);
        assert_eq!(reaction_eval(&p, 0.0, 3.7), (p.a, p.b));
    }

    #[test]
    fn standard_band() {
        let r = turing_analysis(&SchnakenbergParams::standard());
        assert!(r.stable_without_diffusion && r.diffusion_driven_unstable);
        assert!((r.k2_minus - 5.8).abs() < 1e-9 * 5.8);
        assert!((r.k2_plus - 14.5).abs() < 1e-9 * 14.5);
        let mut nm: Vec<_> = r.unstable_modes.iter().map(|m| (m.n, m.m)).collect();
        nm.sort();
        assert_eq!(nm, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn equal_diffusion_is_not_turing_unstable() {
        let p = SchnakenbergParams {
            d: 1.0,
            ..SchnakenbergParams::standard()
        };
        let r = turing_analysis(&p);
        assert!(!r.diffusion_driven_unstable);
        assert!(r.unstable_modes.is_empty());
    }

    #[test]
    fn growth_rate_examples() {
        let p = SchnakenbergParams::standard();
        let lam = dispersion_growth_rate(&p, PI * PI);
        assert!((lam - 1.6246).abs() < 1e-3, "{lam}");
        assert!((dispersion_growth_rate(&p, 0.0) + 2.9).abs() < 1e-12);
        let big1 = dispersion_growth_rate(&p, 1e4);
        let big2 = dispersion_growth_rate(&p, 1e5);
        assert!(big1 < 0.0 && big2 < big1);
    }

    #[test]
    fn mode_2_1_band() {
        let r = turing_analysis(&SchnakenbergParams::mode_2_1());
        assert!(r.contains(5.0 * PI * PI));
        assert!(!r.contains(4.0 * PI * PI));
    }
}
