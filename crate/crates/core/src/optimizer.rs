//! Globalized Newton iteration with a nonmonotone backtracking line search
//! (Zhang-Hager history average) and an outer log-barrier loop that reverts
//! and penalizes whenever a step inverts the parametrization.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::disparity::{check_validity, Problem};
use crate::error::{Error, Result};
use crate::geometry::Curve;
use crate::mesh::{
    interpolate_meshes, uniform_partition, LayoutKind, NodeFamily, ParametricMesh, PhysicalMesh,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Stop when the Euclidean norm of the free-dof gradient drops below this.
    pub tol: f64,
    /// Newton iterations allowed per barrier pass.
    pub max_inner: usize,
    /// Outer barrier passes.
    pub outer_passes: usize,
    /// Factor applied to `mu` on entering each outer pass.
    pub mu_shrink: f64,
    /// Sufficient-decrease constant of the line-search test.
    pub sigma1: f64,
    /// Curvature constant; measured and reported, not enforced (pure
    /// backtracking cannot guarantee it).
    pub sigma2: f64,
    /// Line-search memory: 0 gives the monotone Armijo rule, 1 the running
    /// average of the objective history.
    pub eta: f64,
    pub max_halvings: usize,
    /// Validity samples per element; `None` means `10 * (q + 1)`.
    pub oversample: Option<usize>,
    /// Disable to reproduce the tangling failure mode diagnostically.
    pub barrier: bool,
    /// Quadrature points per element; `None` means `max(20, 2(p+q)+2)`.
    pub quad_points: Option<usize>,
    pub node_family: NodeFamily,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tol: 1e-12,
            max_inner: 200,
            outer_passes: 6,
            mu_shrink: 1e-2,
            sigma1: 1e-4,
            sigma2: 0.9,
            eta: 1.0,
            max_halvings: 50,
            oversample: None,
            barrier: true,
            quad_points: None,
            node_family: NodeFamily::GaussLobatto,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1 > 0.0 && self.sigma1 < self.sigma2 && self.sigma2 < 1.0) {
            return Err(Error::Spec("need 0 < sigma1 < sigma2 < 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Spec("eta must lie in [0, 1]".into()));
        }
        if !(self.mu_shrink > 0.0 && self.mu_shrink < 1.0) {
            return Err(Error::Spec("mu_shrink must lie in (0, 1)".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::Spec("tol must be positive".into()));
        }
        Ok(())
    }

    pub fn oversample_for(&self, q: usize) -> usize {
        self.oversample.unwrap_or(10 * (q + 1))
    }
}

/// Running state of the nonmonotone acceptance threshold, `C_0 = E_0, Q_0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchState {
    pub c: f64,
    pub q: f64,
}

impl LineSearchState {
    pub fn new(e0: f64) -> Self {
        LineSearchState { c: e0, q: 1.0 }
    }
}

/// `Q' = eta Q + 1,  C' = (eta Q C + E_new) / Q'`.
///
/// With `eta = 1` this keeps `C` equal to the mean of the objective history;
/// with `eta = 0` it degenerates to `C = E_new` (monotone Armijo).
pub fn zh_update(state: LineSearchState, eta: f64, e_new: f64) -> LineSearchState {
    let q_next = eta * state.q + 1.0;
    LineSearchState { c: (eta * state.q * state.c + e_new) / q_next, q: q_next }
}

/// Newton step with descent safeguards: solve `H d = -g`; if that is not a
/// descent direction (or the solve fails), scale the gradient by the clamped
/// inverse diagonal; fall back to steepest descent as a last resort.
pub fn descent_direction(grad: &DVector<f64>, hess: &DMatrix<f64>) -> DVector<f64> {
    if grad.is_empty() {
        return DVector::zeros(0);
    }
    let rhs = -grad;
    if let Some(delta) = hess.clone().lu().solve(&rhs) {
        if delta.dot(grad) < 0.0 {
            return delta;
        }
    }
    let mut fallback = DVector::zeros(grad.len());
    for i in 0..grad.len() {
        fallback[i] = -grad[i] / hess[(i, i)].abs().max(1e-12);
    }
    if fallback.dot(grad) < 0.0 {
        return fallback;
    }
    rhs
}

#[derive(Debug, Clone)]
pub struct LineSearchAccept {
    pub alpha: f64,
    pub point: DVector<f64>,
    pub value: f64,
    pub halvings: usize,
    /// Objective evaluations spent, `halvings + 1`.
    pub trials: usize,
}

/// Backtracks from `alpha = 1`, halving until the nonmonotone sufficient-
/// decrease test `f(z + alpha d) <= C + sigma1 alpha g.d` holds.
///
/// The objective returns `None` wherever it is undefined (invalid or
/// degenerate trial point); such trials are rejected like any other failed
/// test. The iterate is left unchanged if `max_halvings` is exhausted.
pub fn line_search<F>(
    mut objective: F,
    z: &DVector<f64>,
    dir: &DVector<f64>,
    g_dot_d: f64,
    state: &LineSearchState,
    cfg: &Config,
    iteration: usize,
) -> Result<LineSearchAccept>
where
    F: FnMut(&DVector<f64>) -> Option<f64>,
{
    debug_assert!(g_dot_d < 0.0, "line search requires a descent direction");
    let mut alpha = 1.0;
    for halvings in 0..=cfg.max_halvings {
        let point = z + dir * alpha;
        if let Some(value) = objective(&point) {
            if value.is_finite() && value <= state.c + cfg.sigma1 * alpha * g_dot_d {
                return Ok(LineSearchAccept { alpha, point, value, halvings, trials: halvings + 1 });
            }
        }
        alpha *= 0.5;
    }
    Err(Error::LineSearchFailure { iteration, halvings: cfg.max_halvings })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub converged: bool,
    /// Accepted Newton steps across all barrier passes.
    pub iterations: usize,
    /// Total line-search trial evaluations.
    pub line_search_count: usize,
    pub barrier_activations: usize,
    pub e_initial: f64,
    pub e_final: f64,
    /// Gradient norm of the last objective minimized, recomputed at the
    /// output meshes (equals the plain disparity gradient for runs that never
    /// activated the barrier).
    pub grad_norm_final: f64,
    pub wall_time: f64,
    /// Accepted steps whose follow-up gradient met the curvature test.
    pub curvature_satisfied: usize,
    pub failure: Option<String>,
}

impl OptimizeReport {
    fn starting(e_initial: f64) -> Self {
        OptimizeReport {
            converged: false,
            iterations: 0,
            line_search_count: 0,
            barrier_activations: 0,
            e_initial,
            e_final: e_initial,
            grad_norm_final: 0.0,
            wall_time: 0.0,
            curvature_satisfied: 0,
            failure: None,
        }
    }
}

/// Minimizes the (penalized) disparity from the given initial meshes.
///
/// The outer loop shrinks `mu` on entry; `mu` stays zero until a sign flip of
/// `s'` is detected at an accepted step, at which point the step is reverted,
/// `mu` is seeded with the current disparity and the remaining passes solve
/// the penalized problem. Fixed degrees of freedom are never touched.
pub fn optimize(
    curve: &Curve,
    x: &PhysicalMesh,
    s: &ParametricMesh,
    kind: LayoutKind,
    cfg: &Config,
) -> Result<(PhysicalMesh, ParametricMesh, OptimizeReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut problem = Problem::for_meshes(curve, x, s, kind, cfg.quad_points)?;
    let oversample = cfg.oversample_for(s.degree());
    if !check_validity(s, oversample, problem.quad()) {
        return Err(Error::InvalidParametrization { element: 0 });
    }

    let layout = problem.layout().clone();
    let mut xc = x.clone();
    let mut sc = s.clone();
    let mut z = layout.pack(&xc, &sc);
    let mut trial_x = xc.clone();
    let mut trial_s = sc.clone();

    let e_initial = problem.energy(&xc, &sc)?;
    let mut report = OptimizeReport::starting(e_initial);
    let mut mu = 0.0f64;
    let mut barrier_latched = false;

    'outer: for _pass in 0..cfg.outer_passes {
        mu *= cfg.mu_shrink;
        problem.set_mu(mu);
        // the objective changed with mu, so the acceptance history restarts
        let mut state: Option<LineSearchState> = None;
        let mut prev_step: Option<(DVector<f64>, f64)> = None;
        let mut inner_converged = false;

        for _ in 0..cfg.max_inner {
            let eval = match problem.evaluate(&xc, &sc) {
                Ok(eval) => eval,
                Err(err) => {
                    report.failure = Some(err.to_string());
                    break 'outer;
                }
            };
            if let Some((dir, gd)) = prev_step.take() {
                if eval.grad.dot(&dir) >= cfg.sigma2 * gd {
                    report.curvature_satisfied += 1;
                }
            }
            if eval.grad_norm < cfg.tol {
                inner_converged = true;
                break;
            }

            let dir = descent_direction(&eval.grad, &eval.hess);
            let g_dot_d = eval.grad.dot(&dir);
            let current = eval.penalized(mu);
            let st = state.get_or_insert_with(|| LineSearchState::new(current));

            let outcome = line_search(
                |zt: &DVector<f64>| {
                    layout.unpack(zt, &mut trial_x, &mut trial_s);
                    problem.penalized(&trial_x, &trial_s).ok()
                },
                &z,
                &dir,
                g_dot_d,
                st,
                cfg,
                report.iterations,
            );
            let accept = match outcome {
                Ok(accept) => accept,
                Err(err) => {
                    report.failure = Some(err.to_string());
                    break 'outer;
                }
            };
            report.line_search_count += accept.trials;
            report.iterations += 1;
            *st = zh_update(*st, cfg.eta, accept.value);
            prev_step = Some((dir, g_dot_d));

            layout.unpack(&accept.point, &mut trial_x, &mut trial_s);
            if !check_validity(&trial_s, oversample, problem.quad()) {
                if cfg.barrier {
                    // revert to the previous valid pair and escalate: the next
                    // pass minimizes P(x, s; mu) with mu seeded by the current
                    // disparity (shrunk on pass entry)
                    mu = eval.energy;
                    report.barrier_activations += 1;
                    barrier_latched = true;
                    continue 'outer;
                }
                // diagnostic mode: keep the tangled step
            }
            z = accept.point;
            layout.unpack(&z, &mut xc, &mut sc);
        }

        if !barrier_latched {
            report.converged = inner_converged;
            if !inner_converged && report.failure.is_none() {
                report.failure = Some("iteration limit reached".into());
            }
            break 'outer;
        }
    }

    if barrier_latched && report.failure.is_none() {
        report.failure = Some("log barrier active through the final pass".into());
    }
    report.converged = report.converged && report.failure.is_none();
    report.e_final = problem.energy(&xc, &sc)?;
    report.grad_norm_final = problem.evaluate(&xc, &sc).map(|e| e.grad_norm).unwrap_or(f64::NAN);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((xc, sc, report))
}

/// Extracts one element and optimizes it with fixed interfaces; the shared
/// kernel behind the serial and the distributed per-element drivers.
pub fn optimize_element(
    curve: &Curve,
    x: &PhysicalMesh,
    s: &ParametricMesh,
    element: usize,
    cfg: &Config,
) -> Result<(PhysicalMesh, ParametricMesh, OptimizeReport)> {
    let sub_x = x.extract_element(element);
    let sub_s = s.extract_element(element);
    optimize(curve, &sub_x, &sub_s, LayoutKind::Constrained, cfg)
}

/// Runs the constrained optimization element by element.
///
/// With fixed interfaces the Hessian is block-diagonal, so the concatenated
/// per-element result matches running [`optimize`] on the whole constrained
/// problem. A failing element leaves its nodes untouched and reports the
/// failure; other elements are unaffected.
pub fn optimize_constrained_per_element(
    curve: &Curve,
    x: &PhysicalMesh,
    s: &ParametricMesh,
    cfg: &Config,
) -> Result<(PhysicalMesh, ParametricMesh, Vec<OptimizeReport>)> {
    let mut x_out = x.clone();
    let mut s_out = s.clone();
    let mut reports = Vec::with_capacity(x.elem_count());
    for e in 0..x.elem_count() {
        match optimize_element(curve, x, s, e, cfg) {
            Ok((sub_x, sub_s, report)) => {
                x_out.write_element(e, &sub_x);
                s_out.write_element(e, &sub_s);
                reports.push(report);
            }
            Err(err) => {
                let mut report = OptimizeReport::starting(0.0);
                report.failure = Some(err.to_string());
                reports.push(report);
            }
        }
    }
    Ok((x_out, s_out, reports))
}

/// Pre-optimization of the element distribution: optimize the unconstrained
/// disparity with linear meshes and return the resulting parameter
/// breakpoints, to be used as the initial partition for the high-order run.
pub fn preoptimize_linear(curve: &Curve, elems: usize, cfg: &Config) -> Result<Vec<f64>> {
    let partition = uniform_partition(curve, elems);
    if elems == 1 {
        return Ok(partition);
    }
    let (x, s) = interpolate_meshes(curve, elems, 1, 1, &partition, cfg.node_family)?;
    let (_, s_opt, _) = optimize(curve, &x, &s, LayoutKind::Unconstrained, cfg)?;
    Ok(s_opt.values().to_vec())
}
