//! One-step advancement of the semidiscrete Schnakenberg system.
//!
//! With `L(w) = (A u + γ M u, d A v)` collecting the linear terms,
//! `N(w) = (-γ B(u, v) u, γ B(u, u) v)` the nonlinear ones and
//! `c = (γ a 1_φ + s_u, γ b 1_φ + s_v)` the loads, the system reads
//! `M w' + L(w) + N(w) = c`.
//!
//! Every implicit nonlinear stage used here has the form
//!
//! ```text
//! F(w) = M (w - w_base) / Δ + α_L L(w) + α_N N(w) + E = 0
//! ```
//!
//! with `E` holding everything that does not depend on `w`:
//!
//! | stage            | Δ          | α_L | α_N | E                              |
//! |------------------|------------|-----|-----|--------------------------------|
//! | backward Euler   | τ          | 1   | 1   | `-c(tⁿ⁺¹)`                     |
//! | Crank–Nicolson   | τ          | ½   | ½   | `½(L + N)(wⁿ) - c̄`             |
//! | θ-scheme, middle | (1 - 2θ)τ  | 0   | 1   | `L(w^{n+θ}) - c(t + θτ)`       |
//!
//! where `c̄` averages the loads at both ends of the step. Picard lags the
//! `B` matrices and solves two symmetric systems with CG; Newton solves the
//! coupled Jacobian system with GMRES.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{norm_with, Assembler, NodalVector, NormKind};
use crate::error::{Error, Result};
use crate::kinetics::SchnakenbergParams;
use crate::linsolve::{solve, BlockOperator2x2, KrylovMethod, LinearSolveConfig, SolveReport};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::sparse::CsrMatrix;

/// Nodal values of both species at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub u: NodalVector,
    pub v: NodalVector,
    pub t: f64,
}

impl FieldPair {
    pub fn new(u: NodalVector, v: NodalVector, t: f64) -> Result<Self> {
        let p = FieldPair { u, v, t };
        p.validate()?;
        Ok(p)
    }

    /// Spatially constant state.
    pub fn constant(n: usize, u: f64, v: f64, t: f64) -> Self {
        FieldPair {
            u: vec![u; n],
            v: vec![v; n],
            t,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u.len() != self.v.len() {
            return Err(Error::InvalidArgument(format!(
                "u has {} entries but v has {}",
                self.u.len(),
                self.v.len()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Validation(
                "field pair has non-finite entries".into(),
            ));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Largest `|u_i|`.
    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Default θ for the fractional-step scheme, `1 - 1/√2`.
pub fn default_theta() -> f64 {
    1.0 - std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeKind {
    BackwardEuler,
    CrankNicolson,
    /// Crank–Nicolson after `warmup_steps` backward Euler steps.
    CnWarmStart {
        warmup_steps: usize,
    },
    FractionalStep {
        theta: f64,
    },
}

impl SchemeKind {
    pub fn fractional_step() -> Self {
        SchemeKind::FractionalStep {
            theta: default_theta(),
        }
    }

    /// Parse `be`, `cn`, `cnb<k>` or `fsts`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "be" => Ok(SchemeKind::BackwardEuler),
            "cn" => Ok(SchemeKind::CrankNicolson),
            "fsts" => Ok(SchemeKind::fractional_step()),
            _ => {
                if let Some(k) = lower.strip_prefix("cnb") {
                    let warmup_steps = if k.is_empty() {
                        1
                    } else {
                        k.parse().map_err(|_| {
                            Error::InvalidArgument(format!("bad warm-up count in scheme `{s}`"))
                        })?
                    };
                    Ok(SchemeKind::CnWarmStart { warmup_steps })
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown scheme `{s}` (expected be, cn, cnb<k> or fsts)"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::BackwardEuler => write!(f, "be"),
            SchemeKind::CrankNicolson => write!(f, "cn"),
            SchemeKind::CnWarmStart { warmup_steps } => write!(f, "cnb{warmup_steps}"),
            SchemeKind::FractionalStep { .. } => write!(f, "fsts"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub tau: f64,
}

impl SchemeConfig {
    pub fn new(kind: SchemeKind, tau: f64) -> Result<Self> {
        let s = SchemeConfig { kind, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "timestep must be positive, got {}",
                self.tau
            )));
        }
        if let SchemeKind::FractionalStep { theta } = self.kind {
            if !(theta > 0.0 && theta < 0.5) {
                return Err(Error::InvalidArgument(format!(
                    "theta must lie in (0, 1/2), got {theta}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearMethod {
    Picard,
    Newton,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum IterationMode {
    /// Iterate until both increments drop below `tol`.
    Adaptive { tol: f64, max_iters: usize },
    /// Exactly `count` iterations, no convergence test.
    Fixed { count: usize },
}

/// Default adaptive tolerance on the increment norms.
pub const DEFAULT_NONLINEAR_TOL: f64 = 1e-5;
/// Default cap on adaptive iterations.
pub const DEFAULT_NONLINEAR_MAX_ITERS: usize = 50;
/// Consecutive growing increments that abort an adaptive solve.
pub const DIVERGENCE_STREAK: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearPolicy {
    pub method: NonlinearMethod,
    pub mode: IterationMode,
    /// Norm for increments and the steady-state test.
    pub norm: NormKind,
}

impl NonlinearPolicy {
    pub fn adaptive(method: NonlinearMethod) -> Self {
        NonlinearPolicy {
            method,
            mode: IterationMode::Adaptive {
                tol: DEFAULT_NONLINEAR_TOL,
                max_iters: DEFAULT_NONLINEAR_MAX_ITERS,
            },
            norm: NormKind::Mass,
        }
    }

    pub fn fixed(method: NonlinearMethod, count: usize) -> Self {
        NonlinearPolicy {
            method,
            mode: IterationMode::Fixed { count },
            norm: NormKind::Mass,
        }
    }

    /// One Picard iteration per step: the IMEX scheme.
    pub fn imex() -> Self {
        Self::fixed(NonlinearMethod::Picard, 1)
    }

    /// One Newton iteration per step.
    pub fn single_newton() -> Self {
        Self::fixed(NonlinearMethod::Newton, 1)
    }

    pub fn with_norm(self, norm: NormKind) -> Self {
        NonlinearPolicy { norm, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            IterationMode::Adaptive { tol, max_iters } => {
                if !(tol > 0.0) || max_iters == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "adaptive policy needs tol > 0 and max_iters >= 1, got {tol}, {max_iters}"
                    )));
                }
            }
            IterationMode::Fixed { count } => {
                if count == 0 {
                    return Err(Error::InvalidArgument(
                        "fixed iteration count must be at least 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// A scalar field of position and time.
pub type SourceFn = Arc<dyn Fn(&[f64; 3], f64) -> f64 + Send + Sync>;

/// Optional right-hand sides added to the `u` and `v` equations.
#[derive(Clone, Default)]
pub struct SourceTerms {
    pub s_u: Option<SourceFn>,
    pub s_v: Option<SourceFn>,
}

impl SourceTerms {
    pub fn none() -> Self {
        SourceTerms::default()
    }

    pub fn is_empty(&self) -> bool {
        self.s_u.is_none() && self.s_v.is_none()
    }
}

impl fmt::Debug for SourceTerms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceTerms")
            .field("s_u", &self.s_u.is_some())
            .field("s_v", &self.s_v.is_some())
            .finish()
    }
}

/// `X(x) = x³/3 - x²/2`.
fn xi_factor(x: f64) -> f64 {
    x * x * x / 3.0 - x * x / 2.0
}

/// `Ξ(x, y, t) = X(x) X(y) (1 + e^{-t})`, the manufactured solution.
pub fn manufactured_solution(x: &[f64; 3], t: f64) -> f64 {
    xi_factor(x[0]) * xi_factor(x[1]) * (1.0 + (-t).exp())
}

/// `∂Ξ/∂t`.
pub fn manufactured_time_derivative(x: &[f64; 3], t: f64) -> f64 {
    -(-t).exp() * xi_factor(x[0]) * xi_factor(x[1])
}

/// `∇²Ξ`.
pub fn manufactured_laplacian(x: &[f64; 3], t: f64) -> f64 {
    let (cx, cy) = (xi_factor(x[0]), xi_factor(x[1]));
    (1.0 + (-t).exp()) * ((2.0 * x[0] - 1.0) * cy + cx * (2.0 * x[1] - 1.0))
}

/// Sources making `u = v = Ξ` an exact solution on the unit square.
pub fn manufactured_sources(p: &SchnakenbergParams) -> SourceTerms {
    let p = *p;
    let s_u: SourceFn = Arc::new(move |x, t| {
        let xi = manufactured_solution(x, t);
        manufactured_time_derivative(x, t)
            - manufactured_laplacian(x, t)
            - p.gamma * (p.a - xi + xi * xi * xi)
    });
    let s_v: SourceFn = Arc::new(move |x, t| {
        let xi = manufactured_solution(x, t);
        manufactured_time_derivative(x, t)
            - p.d * manufactured_laplacian(x, t)
            - p.gamma * (p.b - xi * xi * xi)
    });
    SourceTerms {
        s_u: Some(s_u),
        s_v: Some(s_v),
    }
}

/// Diagnostics for one timestep.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    /// Nonlinear iterations; the θ-scheme adds one for each linear substep.
    pub nonlinear_iterations: usize,
    pub inner_solves: Vec<SolveReport>,
    /// `||uⁿ⁺¹ - uⁿ||` in the policy norm.
    pub du_norm: f64,
    /// `||vⁿ⁺¹ - vⁿ||` in the policy norm.
    pub dv_norm: f64,
    /// Per-iteration increment norms `(||Δu||, ||Δv||)` of the nonlinear stage.
    pub nonlinear_increments: Vec<(f64, f64)>,
    /// Adaptive: the last increment met the tolerance. Fixed: always true.
    pub converged: bool,
}

impl StepReport {
    pub fn inner_iterations(&self) -> usize {
        self.inner_solves.iter().map(|r| r.iterations).sum()
    }

    /// `||uⁿ⁺¹ - uⁿ||`, the increment of the species `u`.
    pub fn increment_norm(&self) -> f64 {
        self.du_norm
    }
}

/// Mesh operators and parameters shared by all steps of a run.
pub struct FemSystem {
    assembler: Assembler,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    unit_load: NodalVector,
    params: SchnakenbergParams,
    linear: LinearSolveConfig,
    source_rule: QuadratureRule,
}

/// Polynomial degree of the rule used for source load vectors.
pub const SOURCE_QUADRATURE_DEGREE: usize = 8;

/// Relative residual of the mass solve in [`FemSystem::project`].
pub const PROJECTION_TOL: f64 = 1e-13;

impl FemSystem {
    pub fn new(mesh: &Mesh, params: SchnakenbergParams, linear: LinearSolveConfig) -> Result<Self> {
        params.validate()?;
        linear.validate()?;
        let assembler = Assembler::new(mesh);
        let mass = assembler.mass();
        let stiffness = assembler.stiffness();
        let unit_load = assembler.unit_load();
        let source_rule = QuadratureRule::collapsed(mesh.dim(), SOURCE_QUADRATURE_DEGREE);
        Ok(FemSystem {
            assembler,
            mass,
            stiffness,
            unit_load,
            params,
            linear,
            source_rule,
        })
    }

    pub fn params(&self) -> &SchnakenbergParams {
        &self.params
    }

    pub fn linear_config(&self) -> &LinearSolveConfig {
        &self.linear
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn unit_load(&self) -> &[f64] {
        &self.unit_load
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    pub fn n_vertices(&self) -> usize {
        self.assembler.n_vertices()
    }

    pub fn norm(&self, kind: NormKind, w: &[f64]) -> f64 {
        norm_with(kind, &self.mass, w)
    }

    /// L2 projection of `f(·, t)`: solves `M w = (∫ f φ_j)` with the load
    /// integrated by `rule`.
    pub fn project(
        &self,
        rule: &QuadratureRule,
        f: impl Fn(&[f64; 3], f64) -> f64,
        t: f64,
    ) -> Result<NodalVector> {
        let rhs = self.assembler.load_vector(rule, |x| f(x, t));
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("non-finite load in L2 projection".into()));
        }
        let cfg = LinearSolveConfig {
            method: KrylovMethod::Cg,
            rel_tol: PROJECTION_TOL,
            ..self.linear
        };
        let x0 = vec![0.0; rhs.len()];
        checked_solve(
            &self.mass,
            &rhs,
            &x0,
            &cfg,
            "L2 projection",
            &mut Vec::new(),
        )
    }

    fn check_state(&self, w: &FieldPair) -> Result<()> {
        let n = self.n_vertices();
        if w.u.len() != n || w.v.len() != n {
            return Err(Error::InvalidArgument(format!(
                "field pair of length {}/{} on a mesh with {n} vertices",
                w.u.len(),
                w.v.len()
            )));
        }
        Ok(())
    }

    /// Loads `c(t) = (γ a 1_φ + S_u(t), γ b 1_φ + S_v(t))`.
    fn loads(&self, sources: &SourceTerms, t: f64) -> (Vec<f64>, Vec<f64>) {
        let g = self.params.gamma;
        let mut cu: Vec<f64> = self
            .unit_load
            .iter()
            .map(|x| g * self.params.a * x)
            .collect();
        let mut cv: Vec<f64> = self
            .unit_load
            .iter()
            .map(|x| g * self.params.b * x)
            .collect();
        if let Some(s) = &sources.s_u {
            let l = self.assembler.load_vector(&self.source_rule, |x| s(x, t));
            axpy(1.0, &l, &mut cu);
        }
        if let Some(s) = &sources.s_v {
            let l = self.assembler.load_vector(&self.source_rule, |x| s(x, t));
            axpy(1.0, &l, &mut cv);
        }
        (cu, cv)
    }

    /// `L(w) = (A u + γ M u, d A v)`.
    fn linear_terms(&self, w: &FieldPair) -> (Vec<f64>, Vec<f64>) {
        let mut lu = self.stiffness.mul_vec(&w.u);
        self.mass.mul_vec_add(self.params.gamma, &w.u, &mut lu);
        let mut lv = self.stiffness.mul_vec(&w.v);
        lv.iter_mut().for_each(|x| *x *= self.params.d);
        (lu, lv)
    }

    /// `N(w) = (-γ B(u, v) u, γ B(u, u) v)`.
    fn nonlinear_terms(&self, w: &FieldPair) -> Result<(Vec<f64>, Vec<f64>)> {
        let g = self.params.gamma;
        let buv = self.assembler.nonlinear_b(&w.u, &w.v)?;
        let buu = self.assembler.nonlinear_b(&w.u, &w.u)?;
        let mut nu = buv.mul_vec(&w.u);
        nu.iter_mut().for_each(|x| *x *= -g);
        let mut nv = buu.mul_vec(&w.v);
        nv.iter_mut().for_each(|x| *x *= g);
        Ok((nu, nv))
    }

    fn be_stage(&self, prev: &FieldPair, tau: f64, sources: &SourceTerms) -> Stage {
        let (cu, cv) = self.loads(sources, prev.t + tau);
        Stage {
            name: "be",
            delta: tau,
            alpha_l: 1.0,
            alpha_n: 1.0,
            base: prev.clone(),
            e_u: neg(cu),
            e_v: neg(cv),
            t_end: prev.t + tau,
        }
    }

    fn cn_stage(&self, prev: &FieldPair, tau: f64, sources: &SourceTerms) -> Result<Stage> {
        let (cu0, cv0) = self.loads(sources, prev.t);
        let (cu1, cv1) = self.loads(sources, prev.t + tau);
        let (lu, lv) = self.linear_terms(prev);
        let (nu, nv) = self.nonlinear_terms(prev)?;
        let e_u = (0..lu.len())
            .map(|i| 0.5 * (lu[i] + nu[i]) - 0.5 * (cu0[i] + cu1[i]))
            .collect();
        let e_v = (0..lv.len())
            .map(|i| 0.5 * (lv[i] + nv[i]) - 0.5 * (cv0[i] + cv1[i]))
            .collect();
        Ok(Stage {
            name: "cn",
            delta: tau,
            alpha_l: 0.5,
            alpha_n: 0.5,
            base: prev.clone(),
            e_u,
            e_v,
            t_end: prev.t + tau,
        })
    }

    /// Middle substep of the θ-scheme, starting from `start` and lasting `len`.
    fn fsts_middle_stage(&self, start: &FieldPair, len: f64, sources: &SourceTerms) -> Stage {
        let (cu, cv) = self.loads(sources, start.t);
        let (lu, lv) = self.linear_terms(start);
        Stage {
            name: "fsts-nonlinear",
            delta: len,
            alpha_l: 0.0,
            alpha_n: 1.0,
            base: start.clone(),
            e_u: sub(&lu, &cu),
            e_v: sub(&lv, &cv),
            t_end: start.t + len,
        }
    }

    /// `F(w)` of a stage.
    fn stage_residual(&self, st: &Stage, w: &FieldPair) -> Result<(Vec<f64>, Vec<f64>)> {
        let inv = 1.0 / st.delta;
        let du = sub(&w.u, &st.base.u);
        let dv = sub(&w.v, &st.base.v);
        let mut fu = self.mass.mul_vec(&du);
        let mut fv = self.mass.mul_vec(&dv);
        fu.iter_mut().for_each(|x| *x *= inv);
        fv.iter_mut().for_each(|x| *x *= inv);
        if st.alpha_l != 0.0 {
            let (lu, lv) = self.linear_terms(w);
            axpy(st.alpha_l, &lu, &mut fu);
            axpy(st.alpha_l, &lv, &mut fv);
        }
        if st.alpha_n != 0.0 {
            let (nu, nv) = self.nonlinear_terms(w)?;
            axpy(st.alpha_n, &nu, &mut fu);
            axpy(st.alpha_n, &nv, &mut fv);
        }
        axpy(1.0, &st.e_u, &mut fu);
        axpy(1.0, &st.e_v, &mut fv);
        Ok((fu, fv))
    }

    /// `M/Δ + α_L (A + γ M)` and `M/Δ + α_L d A`.
    fn stage_base_blocks(&self, st: &Stage) -> Result<(CsrMatrix, CsrMatrix)> {
        let inv = 1.0 / st.delta;
        let g = self.params.gamma;
        let bu = CsrMatrix::linear_combination(&[
            (inv + st.alpha_l * g, &self.mass),
            (st.alpha_l, &self.stiffness),
        ])?;
        let bv = CsrMatrix::linear_combination(&[
            (inv, &self.mass),
            (st.alpha_l * self.params.d, &self.stiffness),
        ])?;
        Ok((bu, bv))
    }

    fn stage_picard(
        &self,
        st: &Stage,
        w: &FieldPair,
        reports: &mut Vec<SolveReport>,
    ) -> Result<FieldPair> {
        let g = self.params.gamma;
        let (mut ku, mut kv) = self.stage_base_blocks(st)?;
        if st.alpha_n != 0.0 && g != 0.0 {
            let buv = self.assembler.nonlinear_b(&w.u, &w.v)?;
            let buu = self.assembler.nonlinear_b(&w.u, &w.u)?;
            ku.add_scaled(-st.alpha_n * g, &buv)?;
            kv.add_scaled(st.alpha_n * g, &buu)?;
        }
        let inv = 1.0 / st.delta;
        let mut ru = self.mass.mul_vec(&st.base.u);
        let mut rv = self.mass.mul_vec(&st.base.v);
        ru.iter_mut()
            .zip(&st.e_u)
            .for_each(|(r, e)| *r = inv * *r - e);
        rv.iter_mut()
            .zip(&st.e_v)
            .for_each(|(r, e)| *r = inv * *r - e);
        let cfg = self.linear.with_method(KrylovMethod::Cg);
        let u = checked_solve(&ku, &ru, &w.u, &cfg, "picard u-block", reports)?;
        let v = checked_solve(&kv, &rv, &w.v, &cfg, "picard v-block", reports)?;
        Ok(FieldPair { u, v, t: st.t_end })
    }

    /// Jacobian `J_F(w)` of a stage residual as a 2×2 block operator.
    fn stage_jacobian(&self, st: &Stage, w: &FieldPair) -> Result<BlockOperator2x2> {
        let g = self.params.gamma;
        let (mut j11, mut j22) = self.stage_base_blocks(st)?;
        let buv = self.assembler.nonlinear_b(&w.u, &w.v)?;
        let buu = self.assembler.nonlinear_b(&w.u, &w.u)?;
        let an = st.alpha_n * g;
        j11.add_scaled(-2.0 * an, &buv)?;
        j22.add_scaled(an, &buu)?;
        let mut j12 = buu;
        j12.scale(-an);
        let mut j21 = buv;
        j21.scale(2.0 * an);
        BlockOperator2x2::new(j11, j12, j21, j22)
    }

    fn stage_newton(
        &self,
        st: &Stage,
        w: &FieldPair,
        reports: &mut Vec<SolveReport>,
    ) -> Result<FieldPair> {
        let (fu, fv) = self.stage_residual(st, w)?;
        let jac = self.stage_jacobian(st, w)?;
        let n = fu.len();
        let rhs: Vec<f64> = fu.iter().chain(&fv).map(|x| -x).collect();
        let cfg = self.linear.with_method(KrylovMethod::Gmres);
        let delta = checked_solve(
            &jac,
            &rhs,
            &vec![0.0; 2 * n],
            &cfg,
            "newton system",
            reports,
        )?;
        let u = w.u.iter().zip(&delta[..n]).map(|(a, b)| a + b).collect();
        let v = w.v.iter().zip(&delta[n..]).map(|(a, b)| a + b).collect();
        Ok(FieldPair { u, v, t: st.t_end })
    }

    /// Resolve a nonlinear stage according to `policy`, starting from its base state.
    fn solve_stage(
        &self,
        st: &Stage,
        policy: &NonlinearPolicy,
        report: &mut StepReport,
    ) -> Result<FieldPair> {
        let mut w = st.base.clone();
        w.t = st.t_end;
        let (count, tol) = match policy.mode {
            IterationMode::Adaptive { tol, max_iters } => (max_iters, Some(tol)),
            IterationMode::Fixed { count } => (count, None),
        };
        let mut prev_size = f64::INFINITY;
        let mut streak = 0;
        for k in 1..=count {
            let next = match policy.method {
                NonlinearMethod::Picard => self.stage_picard(st, &w, &mut report.inner_solves),
                NonlinearMethod::Newton => self.stage_newton(st, &w, &mut report.inner_solves),
            }
            .map_err(|e| e.in_context(st.name))?;
            let du = self.norm(policy.norm, &sub(&next.u, &w.u));
            let dv = self.norm(policy.norm, &sub(&next.v, &w.v));
            report.nonlinear_increments.push((du, dv));
            report.nonlinear_iterations += 1;
            w = next;
            let Some(tol) = tol else { continue };
            if du < tol && dv < tol {
                report.converged = true;
                return Ok(w);
            }
            if !(du.is_finite() && dv.is_finite()) {
                return Err(Error::NonlinearDivergence {
                    iterations: k,
                    message: format!("{}: non-finite increment", st.name),
                });
            }
            let size = du.hypot(dv);
            streak = if size > prev_size { streak + 1 } else { 0 };
            prev_size = size;
            if streak >= DIVERGENCE_STREAK {
                return Err(Error::NonlinearDivergence {
                    iterations: k,
                    message: format!("{}: increment grew {streak} times in a row", st.name),
                });
            }
        }
        if tol.is_some() {
            return Err(Error::NonlinearDivergence {
                iterations: count,
                message: format!("{}: no convergence within {count} iterations", st.name),
            });
        }
        report.converged = true;
        Ok(w)
    }

    /// Linear θ-scheme substep: `(M/Δ + L) w = M w_start/Δ - N(w_start) + c(t_start + Δ)`.
    fn fsts_linear_substep(
        &self,
        start: &FieldPair,
        len: f64,
        sources: &SourceTerms,
        reports: &mut Vec<SolveReport>,
    ) -> Result<FieldPair> {
        let t_end = start.t + len;
        let (cu, cv) = self.loads(sources, t_end);
        let (nu, nv) = self.nonlinear_terms(start)?;
        let st = Stage {
            name: "fsts-linear",
            delta: len,
            alpha_l: 1.0,
            alpha_n: 0.0,
            base: start.clone(),
            e_u: sub(&nu, &cu),
            e_v: sub(&nv, &cv),
            t_end,
        };
        let w = FieldPair {
            u: start.u.clone(),
            v: start.v.clone(),
            t: t_end,
        };
        self.stage_picard(&st, &w, reports)
            .map_err(|e| e.in_context(st.name))
    }

    /// Backward Euler residual `(F₁, F₂)` of `iterate` relative to `prev`.
    pub fn residual_be(
        &self,
        prev: &FieldPair,
        iterate: &FieldPair,
        tau: f64,
        sources: &SourceTerms,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_state(prev)?;
        self.check_state(iterate)?;
        let st = self.be_stage(prev, tau, sources);
        self.stage_residual(&st, iterate)
    }

    /// One Picard iterate of the backward Euler system.
    pub fn picard_update(
        &self,
        prev: &FieldPair,
        iterate: &FieldPair,
        tau: f64,
        sources: &SourceTerms,
    ) -> Result<(FieldPair, Vec<SolveReport>)> {
        self.check_state(prev)?;
        self.check_state(iterate)?;
        let st = self.be_stage(prev, tau, sources);
        let mut reports = Vec::new();
        let w = self.stage_picard(&st, iterate, &mut reports)?;
        Ok((w, reports))
    }

    /// One Newton iterate of the backward Euler system.
    pub fn newton_update(
        &self,
        prev: &FieldPair,
        iterate: &FieldPair,
        tau: f64,
        sources: &SourceTerms,
    ) -> Result<(FieldPair, Vec<SolveReport>)> {
        self.check_state(prev)?;
        self.check_state(iterate)?;
        let st = self.be_stage(prev, tau, sources);
        let mut reports = Vec::new();
        let w = self.stage_newton(&st, iterate, &mut reports)?;
        Ok((w, reports))
    }

    /// Backward Euler Jacobian at `iterate`, for inspection and testing.
    pub fn jacobian_be(
        &self,
        prev: &FieldPair,
        iterate: &FieldPair,
        tau: f64,
    ) -> Result<BlockOperator2x2> {
        self.check_state(prev)?;
        self.check_state(iterate)?;
        let st = self.be_stage(prev, tau, &SourceTerms::none());
        self.stage_jacobian(&st, iterate)
    }

    /// Crank–Nicolson residual and Jacobian, for testing the derived blocks.
    pub fn residual_cn(
        &self,
        prev: &FieldPair,
        iterate: &FieldPair,
        tau: f64,
        sources: &SourceTerms,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let st = self.cn_stage(prev, tau, sources)?;
        self.stage_residual(&st, iterate)
    }

    pub fn jacobian_cn(
        &self,
        prev: &FieldPair,
        iterate: &FieldPair,
        tau: f64,
    ) -> Result<BlockOperator2x2> {
        let st = self.cn_stage(prev, tau, &SourceTerms::none())?;
        self.stage_jacobian(&st, iterate)
    }

    /// Residual of the nonlinear θ-scheme substep of length `len` from `start`.
    pub fn residual_fsts_middle(
        &self,
        start: &FieldPair,
        iterate: &FieldPair,
        len: f64,
        sources: &SourceTerms,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let st = self.fsts_middle_stage(start, len, sources);
        self.stage_residual(&st, iterate)
    }

    pub fn jacobian_fsts_middle(
        &self,
        start: &FieldPair,
        iterate: &FieldPair,
        len: f64,
    ) -> Result<BlockOperator2x2> {
        let st = self.fsts_middle_stage(start, len, &SourceTerms::none());
        self.stage_jacobian(&st, iterate)
    }

    /// Advance `state` by one step of `kind`. `step_index` counts completed
    /// steps and selects backward Euler during a warm start.
    pub fn step(
        &self,
        state: &FieldPair,
        kind: SchemeKind,
        tau: f64,
        step_index: usize,
        policy: &NonlinearPolicy,
        sources: &SourceTerms,
    ) -> Result<(FieldPair, StepReport)> {
        self.check_state(state)?;
        SchemeConfig { kind, tau }.validate()?;
        policy.validate()?;
        let mut report = StepReport::default();
        let next = match kind {
            SchemeKind::BackwardEuler => {
                let st = self.be_stage(state, tau, sources);
                self.solve_stage(&st, policy, &mut report)?
            }
            SchemeKind::CnWarmStart { warmup_steps } if step_index < warmup_steps => {
                let st = self.be_stage(state, tau, sources);
                self.solve_stage(&st, policy, &mut report)?
            }
            SchemeKind::CrankNicolson | SchemeKind::CnWarmStart { .. } => {
                let st = self.cn_stage(state, tau, sources)?;
                self.solve_stage(&st, policy, &mut report)?
            }
            SchemeKind::FractionalStep { theta } => {
                let w1 = self.fsts_linear_substep(
                    state,
                    theta * tau,
                    sources,
                    &mut report.inner_solves,
                )?;
                let st = self.fsts_middle_stage(&w1, (1.0 - 2.0 * theta) * tau, sources);
                let w2 = self.solve_stage(&st, policy, &mut report)?;
                let mut w3 =
                    self.fsts_linear_substep(&w2, theta * tau, sources, &mut report.inner_solves)?;
                w3.t = state.t + tau;
                report.nonlinear_iterations += 2;
                w3
            }
        };
        if !next.is_finite() {
            return Err(Error::StepFailure {
                context: kind.to_string(),
                message: format!("non-finite values after the step from t = {}", state.t),
            });
        }
        report.du_norm = self.norm(policy.norm, &sub(&next.u, &state.u));
        report.dv_norm = self.norm(policy.norm, &sub(&next.v, &state.v));
        Ok((next, report))
    }
}

/// An implicit stage `F(w) = M (w - base)/Δ + α_L L(w) + α_N N(w) + E`.
struct Stage {
    name: &'static str,
    delta: f64,
    alpha_l: f64,
    alpha_n: f64,
    base: FieldPair,
    e_u: Vec<f64>,
    e_v: Vec<f64>,
    t_end: f64,
}

fn checked_solve(
    op: &dyn crate::linsolve::LinearOperator,
    rhs: &[f64],
    x0: &[f64],
    cfg: &LinearSolveConfig,
    what: &str,
    reports: &mut Vec<SolveReport>,
) -> Result<Vec<f64>> {
    let (x, rep) = solve(op, rhs, x0, cfg)?;
    reports.push(rep);
    if !rep.converged {
        return Err(Error::StepFailure {
            context: what.to_string(),
            message: format!(
                "inner solve stopped after {} iterations at residual {:e}",
                rep.iterations, rep.final_residual
            ),
        });
    }
    Ok(x)
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn neg(mut a: Vec<f64>) -> Vec<f64> {
    a.iter_mut().for_each(|x| *x = -*x);
    a
}

/// A scheme and policy bound to one system, tracking the step count.
pub struct Stepper<'a> {
    system: &'a FemSystem,
    scheme: SchemeConfig,
    policy: NonlinearPolicy,
    sources: SourceTerms,
    steps_taken: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(
        system: &'a FemSystem,
        scheme: SchemeConfig,
        policy: NonlinearPolicy,
        sources: SourceTerms,
    ) -> Result<Self> {
        scheme.validate()?;
        policy.validate()?;
        Ok(Stepper {
            system,
            scheme,
            policy,
            sources,
            steps_taken: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn scheme(&self) -> &SchemeConfig {
        &self.scheme
    }

    pub fn policy(&self) -> &NonlinearPolicy {
        &self.policy
    }

    pub fn step(&mut self, state: &FieldPair) -> Result<(FieldPair, StepReport)> {
        let out = self.system.step(
            state,
            self.scheme.kind,
            self.scheme.tau,
            self.steps_taken,
            &self.policy,
            &self.sources,
        )?;
        self.steps_taken += 1;
        Ok(out)
    }
}
