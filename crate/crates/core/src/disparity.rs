//! The disparity energy `E(x,s) = integral of |x - a(s)|^2 |dx/dxi|`, its
//! log-barrier penalization `P = E - mu * integral of log(dir * s')`, and
//! their exact gradients and Hessians over the free degrees of freedom.
//!
//! Derivatives are taken of the quadrature-discretized functional, including
//! the term from differentiating the speed weight with respect to physical
//! nodes, so finite differences of the discrete energy reproduce them to
//! rounding.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Curve;
use crate::mesh::{
    default_points, gauss_legendre, make_basis, DofLayout, LagrangeBasis, LayoutKind, NodeFamily,
    ParametricMesh, PhysicalMesh, QuadratureRule,
};

/// A physical element whose speed drops below this is treated as collapsed
/// and evaluation aborts; a degenerate element is a modeling error, not a
/// solver state.
pub const SPEED_FLOOR: f64 = 1e-14;

/// Value, barrier, gradient and Hessian of the penalized disparity at one
/// iterate, over the free degrees of freedom.
#[derive(Debug, Clone)]
pub struct DisparityEval {
    pub energy: f64,
    /// `integral of log(dir * s')`; zero when evaluated with `mu = 0`.
    pub barrier: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub grad_norm: f64,
}

impl DisparityEval {
    /// `P = E - mu * barrier`.
    pub fn penalized(&self, mu: f64) -> f64 {
        self.energy - mu * self.barrier
    }
}

/// Disparity evaluator for one curve/mesh configuration: layout, bases and
/// quadrature are fixed; the meshes are passed to each call so the optimizer
/// can step them freely.
#[derive(Debug, Clone)]
pub struct Problem<'c> {
    curve: &'c Curve,
    layout: DofLayout,
    quad: QuadratureRule,
    phys_basis: LagrangeBasis,
    param_basis: LagrangeBasis,
    // basis tables at the quadrature points, [point][node]
    np: Vec<Vec<f64>>,
    npd: Vec<Vec<f64>>,
    nq: Vec<Vec<f64>>,
    nqd: Vec<Vec<f64>>,
    mu: f64,
    dim: usize,
    p: usize,
    q: usize,
    elems: usize,
}

impl<'c> Problem<'c> {
    pub fn new(
        curve: &'c Curve,
        p: usize,
        q: usize,
        elems: usize,
        kind: LayoutKind,
        family: NodeFamily,
        quad_points: Option<usize>,
    ) -> Result<Self> {
        let dim = curve.dim();
        let phys_basis = make_basis(p, family)?;
        let param_basis = make_basis(q, family)?;
        let quad = gauss_legendre(quad_points.unwrap_or_else(|| default_points(p, q)))?;
        let tab = |basis: &LagrangeBasis| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let mut values = Vec::with_capacity(quad.len());
            let mut derivs = Vec::with_capacity(quad.len());
            for &xi in quad.points() {
                let (v, d) = basis.eval(xi);
                values.push(v);
                derivs.push(d);
            }
            (values, derivs)
        };
        let (np, npd) = tab(&phys_basis);
        let (nq, nqd) = tab(&param_basis);
        Ok(Problem {
            curve,
            layout: DofLayout::new(kind, dim, p, q, elems),
            quad,
            phys_basis,
            param_basis,
            np,
            npd,
            nq,
            nqd,
            mu: 0.0,
            dim,
            p,
            q,
            elems,
        })
    }

    /// Builds an evaluator matching the meshes' degrees and node family.
    pub fn for_meshes(
        curve: &'c Curve,
        x: &PhysicalMesh,
        s: &ParametricMesh,
        kind: LayoutKind,
        quad_points: Option<usize>,
    ) -> Result<Self> {
        if x.elem_count() != s.elem_count() {
            return Err(Error::Spec(format!(
                "meshes disagree on element count: {} vs {}",
                x.elem_count(),
                s.elem_count()
            )));
        }
        Problem::new(curve, x.degree(), s.degree(), x.elem_count(), kind, x.family(), quad_points)
    }

    pub fn layout(&self) -> &DofLayout {
        &self.layout
    }

    pub fn quad(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn curve(&self) -> &Curve {
        self.curve
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn set_mu(&mut self, mu: f64) {
        self.mu = mu;
    }

    pub fn phys_basis(&self) -> &LagrangeBasis {
        &self.phys_basis
    }

    pub fn param_basis(&self) -> &LagrangeBasis {
        &self.param_basis
    }

    fn point_state(
        &self,
        x: &PhysicalMesh,
        s: &ParametricMesh,
        e: usize,
        g: usize,
    ) -> Result<PointState> {
        let mut pos = Vector3::zeros();
        let mut vel = Vector3::zeros();
        for i in 0..=self.p {
            let node = x.node(x.global_node(e, i));
            pos += node * self.np[g][i];
            vel += node * self.npd[g][i];
        }
        let speed = vel.norm();
        if speed < SPEED_FLOOR {
            return Err(Error::DegenerateElement { element: e });
        }
        let mut s_val = 0.0;
        let mut s_der = 0.0;
        for j in 0..=self.q {
            let v = s.value(s.global_node(e, j));
            s_val += v * self.nq[g][j];
            s_der += v * self.nqd[g][j];
        }
        Ok(PointState { pos, vel, speed, s_val, s_der })
    }

    /// The disparity energy; its square root is the sigma-norm.
    pub fn energy(&self, x: &PhysicalMesh, s: &ParametricMesh) -> Result<f64> {
        let mut total = 0.0;
        for e in 0..self.elems {
            for (g, w) in self.quad.weights().iter().enumerate() {
                let st = self.point_state(x, s, e, g)?;
                let a = self.curve.eval(st.s_val)?;
                total += w * (st.pos - a).norm_squared() * st.speed;
            }
        }
        Ok(total)
    }

    /// `integral of log(dir * s')` by the attached quadrature; errors if the
    /// parametrization is inverted at any quadrature point.
    pub fn barrier_value(&self, s: &ParametricMesh) -> Result<f64> {
        let dir = s.direction();
        let mut total = 0.0;
        for e in 0..self.elems {
            for (g, w) in self.quad.weights().iter().enumerate() {
                let mut s_der = 0.0;
                for j in 0..=self.q {
                    s_der += s.value(s.global_node(e, j)) * self.nqd[g][j];
                }
                let oriented = dir * s_der;
                if oriented <= 0.0 {
                    return Err(Error::InvalidParametrization { element: e });
                }
                total += w * oriented.ln();
            }
        }
        Ok(total)
    }

    /// `P(x, s; mu) = E - mu * barrier` (plain `E` when `mu = 0`).
    pub fn penalized(&self, x: &PhysicalMesh, s: &ParametricMesh) -> Result<f64> {
        let e = self.energy(x, s)?;
        if self.mu == 0.0 {
            Ok(e)
        } else {
            Ok(e - self.mu * self.barrier_value(s)?)
        }
    }

    pub fn gradient(&self, x: &PhysicalMesh, s: &ParametricMesh) -> Result<DVector<f64>> {
        Ok(self.evaluate(x, s)?.grad)
    }

    pub fn hessian(&self, x: &PhysicalMesh, s: &ParametricMesh) -> Result<DMatrix<f64>> {
        Ok(self.evaluate(x, s)?.hess)
    }

    /// Assembles value, gradient and Hessian of the penalized objective in a
    /// single pass over the quadrature points.
    pub fn evaluate(&self, x: &PhysicalMesh, s: &ParametricMesh) -> Result<DisparityEval> {
        let nfree = self.layout.free_len();
        let mut grad = DVector::zeros(nfree);
        let mut hess = DMatrix::zeros(nfree, nfree);
        let mut energy = 0.0;
        let mut barrier = 0.0;

        let dim = self.dim;
        let nx = (self.p + 1) * dim; // local physical dofs
        let nl = nx + self.q + 1; // + local parametric dofs
        let mut local_grad = vec![0.0; nl];
        let mut local_hess = vec![0.0; nl * nl]; // upper triangle used
        let mut local_map: Vec<Option<usize>> = vec![None; nl];
        let dir = s.direction();

        for e in 0..self.elems {
            local_grad.fill(0.0);
            local_hess.fill(0.0);
            for i in 0..=self.p {
                let base = self.layout.phys_dof(x.global_node(e, i));
                for c in 0..dim {
                    local_map[i * dim + c] = base.map(|b| b + c);
                }
            }
            for j in 0..=self.q {
                local_map[nx + j] = self.layout.param_dof(s.global_node(e, j));
            }

            for (g, w) in self.quad.weights().iter().enumerate() {
                let st = self.point_state(x, s, e, g)?;
                let (a, a1, a2) = self.curve.eval_with_derivs(st.s_val)?;
                let d = st.pos - a;
                let dd = d.norm_squared();
                let uv = st.vel / st.speed;
                let da1 = d.dot(&a1);
                let np = &self.np[g];
                let npd = &self.npd[g];
                let nq = &self.nq[g];
                let nqd = &self.nqd[g];

                energy += w * dd * st.speed;

                // gradient: physical then parametric
                for i in 0..=self.p {
                    for c in 0..dim {
                        local_grad[i * dim + c] +=
                            w * (2.0 * d[c] * np[i] * st.speed + dd * uv[c] * npd[i]);
                    }
                }
                for j in 0..=self.q {
                    local_grad[nx + j] += w * (-2.0 * da1 * nq[j] * st.speed);
                }

                if self.mu != 0.0 {
                    let oriented = dir * st.s_der;
                    if oriented <= 0.0 {
                        return Err(Error::InvalidParametrization { element: e });
                    }
                    barrier += w * oriented.ln();
                    for j in 0..=self.q {
                        local_grad[nx + j] -= self.mu * w * nqd[j] / st.s_der;
                    }
                }

                // Hessian, upper triangle of the local block
                for i in 0..=self.p {
                    for c in 0..dim {
                        let row = i * dim + c;
                        // physical-physical
                        for k in i..=self.p {
                            let c0 = if k == i { c } else { 0 };
                            for c2 in c0..dim {
                                let col = k * dim + c2;
                                let delta = if c == c2 { 1.0 } else { 0.0 };
                                let v = 2.0 * delta * np[i] * np[k] * st.speed
                                    + 2.0 * d[c] * uv[c2] * np[i] * npd[k]
                                    + 2.0 * d[c2] * uv[c] * np[k] * npd[i]
                                    + dd * npd[i] * npd[k] * (delta - uv[c] * uv[c2]) / st.speed;
                                local_hess[row * nl + col] += w * v;
                            }
                        }
                        // physical-parametric
                        for j in 0..=self.q {
                            let col = nx + j;
                            let v = -2.0 * a1[c] * nq[j] * np[i] * st.speed
                                - 2.0 * da1 * nq[j] * uv[c] * npd[i];
                            local_hess[row * nl + col] += w * v;
                        }
                    }
                }
                let gauss = a1.norm_squared() - d.dot(&a2);
                for j in 0..=self.q {
                    for l in j..=self.q {
                        let mut v = 2.0 * st.speed * nq[j] * nq[l] * gauss;
                        if self.mu != 0.0 {
                            v += self.mu * nqd[j] * nqd[l] / (st.s_der * st.s_der);
                        }
                        local_hess[(nx + j) * nl + (nx + l)] += w * v;
                    }
                }
            }

            // scatter into the free-dof gradient and (symmetric) Hessian
            for row in 0..nl {
                let Some(gr) = local_map[row] else { continue };
                grad[gr] += local_grad[row];
                for col in row..nl {
                    let Some(gc) = local_map[col] else { continue };
                    let v = local_hess[row * nl + col];
                    hess[(gr, gc)] += v;
                    if gr != gc {
                        hess[(gc, gr)] += v;
                    }
                }
            }
        }

        let grad_norm = grad.norm();
        Ok(DisparityEval { energy, barrier, grad, hess, grad_norm })
    }
}

#[derive(Debug, Clone, Copy)]
struct PointState {
    pos: Vector3<f64>,
    vel: Vector3<f64>,
    speed: f64,
    s_val: f64,
    s_der: f64,
}

/// True iff `sign(s') = dir` at `oversample` equispaced points per element
/// together with all quadrature points of `quad`.
pub fn check_validity(s: &ParametricMesh, oversample: usize, quad: &QuadratureRule) -> bool {
    debug_assert!(oversample >= 2);
    let basis = s.basis();
    let dir = s.direction();
    let q = s.degree();
    let mut xis: Vec<f64> = (0..oversample)
        .map(|k| -1.0 + 2.0 * k as f64 / (oversample - 1) as f64)
        .collect();
    xis.extend_from_slice(quad.points());
    let mut derivs = vec![0.0; q + 1];
    let mut values = vec![0.0; q + 1];
    let tables: Vec<Vec<f64>> = xis
        .iter()
        .map(|&xi| {
            basis.eval_into(xi, &mut values, &mut derivs);
            derivs.clone()
        })
        .collect();
    for e in 0..s.elem_count() {
        for table in &tables {
            let mut s_der = 0.0;
            for j in 0..=q {
                s_der += s.value(s.global_node(e, j)) * table[j];
            }
            if dir * s_der <= 0.0 {
                return false;
            }
        }
    }
    true
}

/// Point-wise error `e(xi) = x(xi) - a(s(xi))` decomposed on the Frenet frame
/// at `a(s(xi))`, sampled on an equispaced grid per element.
#[derive(Debug, Clone)]
pub struct ErrorDecomposition {
    /// Global sample coordinate: element index plus `(xi + 1) / 2`.
    pub xi: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub tangent: Vec<f64>,
    pub normal: Vec<f64>,
    /// Present for 3D curves only.
    pub binormal: Option<Vec<f64>>,
}

pub fn decompose_error(
    curve: &Curve,
    x: &PhysicalMesh,
    s: &ParametricMesh,
    samples_per_element: usize,
) -> Result<ErrorDecomposition> {
    debug_assert!(samples_per_element >= 2);
    let phys_basis = x.basis();
    let param_basis = s.basis();
    let three_d = curve.dim() == 3;
    let total = x.elem_count() * samples_per_element;
    let mut out = ErrorDecomposition {
        xi: Vec::with_capacity(total),
        magnitude: Vec::with_capacity(total),
        tangent: Vec::with_capacity(total),
        normal: Vec::with_capacity(total),
        binormal: three_d.then(|| Vec::with_capacity(total)),
    };
    for e in 0..x.elem_count() {
        for k in 0..samples_per_element {
            let xi = -1.0 + 2.0 * k as f64 / (samples_per_element - 1) as f64;
            let (pos, _) = x.eval_element(e, xi, &phys_basis);
            let (s_val, _) = s.eval_element(e, xi, &param_basis);
            let frame = curve.frenet(s_val)?;
            let err = pos - curve.eval(s_val)?;
            out.xi.push(e as f64 + 0.5 * (xi + 1.0));
            out.magnitude.push(err.norm());
            out.tangent.push(err.dot(&frame.tangent));
            out.normal.push(err.dot(&frame.normal));
            if let (Some(b), Some(binormal)) = (out.binormal.as_mut(), frame.binormal) {
                b.push(err.dot(&binormal));
            }
        }
    }
    Ok(out)
}

/// Fraction of the peak magnitude below which a sample counts as zero when
/// counting roots.
pub const ZERO_BAND_FRACTION: f64 = 1e-3;

/// Counts sign changes between consecutive significant samples (both
/// magnitudes above `zero_band`), plus one root for each endpoint whose
/// magnitude is within the band.
pub fn count_roots(samples: &[f64], zero_band: f64) -> usize {
    debug_assert!(samples.len() >= 2);
    let mut roots = 0;
    if samples.first().is_some_and(|v| v.abs() <= zero_band) {
        roots += 1;
    }
    if samples.last().is_some_and(|v| v.abs() <= zero_band) {
        roots += 1;
    }
    let mut prev_sign: Option<bool> = None;
    for &v in samples {
        if v.abs() <= zero_band {
            continue;
        }
        let sign = v > 0.0;
        if let Some(p) = prev_sign {
            if p != sign {
                roots += 1;
            }
        }
        prev_sign = Some(sign);
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{interpolate_meshes, uniform_partition};
    use std::f64::consts::PI;

    fn problem<'c>(
        curve: &'c Curve,
        p: usize,
        q: usize,
        r: usize,
        kind: LayoutKind,
    ) -> (Problem<'c>, PhysicalMesh, ParametricMesh) {
        let partition = uniform_partition(curve, r);
        let (x, s) =
            interpolate_meshes(curve, r, p, q, &partition, NodeFamily::GaussLobatto).unwrap();
        let prob = Problem::new(curve, p, q, r, kind, NodeFamily::GaussLobatto, None).unwrap();
        (prob, x, s)
    }

    /// Neville polynomial evaluation through (nodes, values); an evaluator
    /// independent of the barycentric basis code.
    fn neville(nodes: &[f64], values: &[f64], xi: f64) -> f64 {
        let mut v = values.to_vec();
        let n = nodes.len();
        for level in 1..n {
            for i in 0..n - level {
                v[i] = ((xi - nodes[i + level]) * v[i] + (nodes[i] - xi) * v[i + 1])
                    / (nodes[i] - nodes[i + level]);
            }
        }
        v[0]
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
        let n = panels * 2;
        let h = (b - a) / n as f64;
        let mut sum = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + k as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn representable_line_has_zero_energy() {
        let curve = Curve::line([0.0, 0.0, 0.0], [3.0, 4.0, 0.0], 2);
        let (prob, x, s) = problem(&curve, 1, 1, 1, LayoutKind::Unconstrained);
        assert!(prob.energy(&x, &s).unwrap() < 1e-24);
    }

    #[test]
    fn chord_energy_matches_simpson_oracle() {
        // one linear element across half the unit circle
        let curve = Curve::circle(1.0);
        let (x, s) = interpolate_meshes(&curve, 1, 1, 1, &[0.0, PI], NodeFamily::GaussLobatto)
            .unwrap();
        let prob =
            Problem::new(&curve, 1, 1, 1, LayoutKind::Constrained, NodeFamily::GaussLobatto, None)
                .unwrap();
        let energy = prob.energy(&x, &s).unwrap();

        let integrand = |xi: f64| {
            // chord (1,0) -> (-1,0): x(xi) = (-xi, 0); s affine; speed = 1
            let t = 0.5 * (xi + 1.0) * PI;
            let dx = -xi - t.cos();
            let dy = -t.sin();
            (dx * dx + dy * dy) * 1.0
        };
        let oracle = simpson(integrand, -1.0, 1.0, 50_000);
        assert!(
            (energy - oracle).abs() < 1e-9 * oracle,
            "energy {energy} vs oracle {oracle}"
        );
    }

    #[test]
    fn initial_circle_disparity_matches_neville_simpson_oracle() {
        let curve = Curve::circle(1.0);
        let (prob, x, s) = problem(&curve, 2, 2, 2, LayoutKind::Constrained);
        let energy = prob.energy(&x, &s).unwrap();

        let phys_nodes = x.basis().nodes().to_vec();
        let param_nodes = s.basis().nodes().to_vec();
        let mut oracle = 0.0;
        for e in 0..2 {
            let xs: Vec<f64> = (0..=2).map(|i| x.coord(x.global_node(e, i), 0)).collect();
            let ys: Vec<f64> = (0..=2).map(|i| x.coord(x.global_node(e, i), 1)).collect();
            let ss: Vec<f64> = (0..=2).map(|j| s.value(s.global_node(e, j))).collect();
            let integrand = |xi: f64| {
                let px = neville(&phys_nodes, &xs, xi);
                let py = neville(&phys_nodes, &ys, xi);
                let h = 1e-6;
                let vx = (neville(&phys_nodes, &xs, xi + h) - neville(&phys_nodes, &xs, xi - h))
                    / (2.0 * h);
                let vy = (neville(&phys_nodes, &ys, xi + h) - neville(&phys_nodes, &ys, xi - h))
                    / (2.0 * h);
                let t = neville(&param_nodes, &ss, xi);
                let dx = px - t.cos();
                let dy = py - t.sin();
                (dx * dx + dy * dy) * (vx * vx + vy * vy).sqrt()
            };
            oracle += simpson(integrand, -1.0, 1.0, 50_000);
        }
        assert!(
            (energy - oracle).abs() < 1e-10,
            "energy {energy} vs oracle {oracle}"
        );
    }

    #[test]
    fn energy_scales_cubically_with_coordinates() {
        let unit = Curve::circle(1.0);
        let scaled = Curve::circle(2.0);
        let (prob1, x1, s1) = problem(&unit, 2, 3, 2, LayoutKind::Constrained);
        let e1 = prob1.energy(&x1, &s1).unwrap();

        let (prob2, mut x2, s2) = problem(&scaled, 2, 3, 2, LayoutKind::Constrained);
        // same mesh, coordinates scaled by 2
        for g in 0..x2.node_count() {
            x2.set_node(g, x1.node(g) * 2.0);
        }
        let e2 = prob2.energy(&x2, &s2).unwrap();
        assert!((e2 - 8.0 * e1).abs() < 1e-12 * e2.abs());
    }

    #[test]
    fn gradient_vanishes_at_representable_minimum() {
        let curve = Curve::line([0.0, 0.0, 0.0], [1.0, 2.0, 0.0], 2);
        let (prob, x, s) = problem(&curve, 2, 2, 2, LayoutKind::Unconstrained);
        let eval = prob.evaluate(&x, &s).unwrap();
        assert!(eval.grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn gradient_length_matches_layout() {
        let curve = Curve::circle(1.0);
        for kind in [LayoutKind::Constrained, LayoutKind::Unconstrained] {
            let (prob, x, s) = problem(&curve, 2, 3, 2, kind);
            let eval = prob.evaluate(&x, &s).unwrap();
            assert_eq!(eval.grad.len(), prob.layout().free_len());
            assert_eq!(eval.hess.nrows(), prob.layout().free_len());
        }
    }

    fn perturbed_config(
        curve: &Curve,
        kind: LayoutKind,
        mu: f64,
    ) -> (Problem<'_>, PhysicalMesh, ParametricMesh) {
        let (mut prob, mut x, mut s) = problem(curve, 2, 3, 2, kind);
        prob.set_mu(mu);
        let layout = prob.layout().clone();
        let mut z = layout.pack(&x, &s);
        for (k, v) in z.iter_mut().enumerate() {
            *v += 0.02 * ((3 * k + 1) as f64).sin();
        }
        layout.unpack(&z, &mut x, &mut s);
        assert!(check_validity(&s, 20, prob.quad()));
        (prob, x, s)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let curve = Curve::circle(1.0);
        for (kind, mu) in [
            (LayoutKind::Constrained, 0.0),
            (LayoutKind::Unconstrained, 0.0),
            (LayoutKind::Constrained, 1e-3),
            (LayoutKind::Unconstrained, 1e-3),
        ] {
            let (prob, mut x, mut s) = perturbed_config(&curve, kind, mu);
            let layout = prob.layout().clone();
            let eval = prob.evaluate(&x, &s).unwrap();
            let z0 = layout.pack(&x, &s);
            let h = 1e-6;
            for k in 0..z0.len() {
                let mut zp = z0.clone();
                zp[k] += h;
                layout.unpack(&zp, &mut x, &mut s);
                let fp = prob.penalized(&x, &s).unwrap();
                let mut zm = z0.clone();
                zm[k] -= h;
                layout.unpack(&zm, &mut x, &mut s);
                let fm = prob.penalized(&x, &s).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let scale = eval.grad[k].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (eval.grad[k] - fd).abs() <= 1e-6 * scale,
                    "{kind:?} mu={mu} dof {k}: analytic {} vs fd {fd}",
                    eval.grad[k]
                );
            }
            layout.unpack(&z0, &mut x, &mut s);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let curve = Curve::circle(1.0);
        let (prob, mut x, mut s) = perturbed_config(&curve, LayoutKind::Constrained, 1e-3);
        let layout = prob.layout().clone();
        let eval = prob.evaluate(&x, &s).unwrap();
        let z0 = layout.pack(&x, &s);
        let h = 1e-5;
        for k in 0..z0.len() {
            let mut zp = z0.clone();
            zp[k] += h;
            layout.unpack(&zp, &mut x, &mut s);
            let gp = prob.gradient(&x, &s).unwrap();
            let mut zm = z0.clone();
            zm[k] -= h;
            layout.unpack(&zm, &mut x, &mut s);
            let gm = prob.gradient(&x, &s).unwrap();
            for r in 0..z0.len() {
                let fd = (gp[r] - gm[r]) / (2.0 * h);
                let scale = eval.hess[(r, k)].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (eval.hess[(r, k)] - fd).abs() <= 1e-4 * scale,
                    "entry ({r},{k}): analytic {} vs fd {fd}",
                    eval.hess[(r, k)]
                );
            }
        }
    }

    #[test]
    fn hessian_is_symmetric_and_block_diagonal_when_constrained() {
        let curve = Curve::circle(1.0);
        let (prob, x, s) = perturbed_config(&curve, LayoutKind::Constrained, 0.0);
        let eval = prob.evaluate(&x, &s).unwrap();
        let n = eval.hess.nrows();
        for r in 0..n {
            for c in 0..n {
                assert_eq!(eval.hess[(r, c)], eval.hess[(c, r)], "symmetry ({r},{c})");
            }
        }
        // constrained layout: 2 elements, block width (p-1)*dim + (q-1) = 4
        let block = 4;
        for r in 0..block {
            for c in block..n {
                assert_eq!(eval.hess[(r, c)], 0.0, "cross-element entry ({r},{c})");
            }
        }
    }

    #[test]
    fn barrier_of_affine_parametrization() {
        // two elements with s' = 2 everywhere: integral = 2 elements * 2 * ln 2
        let curve = Curve::circle(1.0); // the barrier never evaluates the curve
        let prob =
            Problem::new(&curve, 1, 1, 2, LayoutKind::Constrained, NodeFamily::GaussLobatto, None)
                .unwrap();
        let s = ParametricMesh::new(1, 2, NodeFamily::GaussLobatto, vec![0.0, 4.0, 8.0], 1.0);
        let b = prob.barrier_value(&s).unwrap();
        assert!((b - 4.0 * 2f64.ln()).abs() < 1e-13, "barrier {b}");

        // unit slope: log 1 = 0
        let s1 = ParametricMesh::new(1, 2, NodeFamily::GaussLobatto, vec![0.0, 2.0, 4.0], 1.0);
        assert!(prob.barrier_value(&s1).unwrap().abs() < 1e-14);

        // reversed direction with |s'| = 2
        let rev = ParametricMesh::new(1, 2, NodeFamily::GaussLobatto, vec![8.0, 4.0, 0.0], -1.0);
        let br = prob.barrier_value(&rev).unwrap();
        assert!((br - 4.0 * 2f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn barrier_matches_simpson_on_a_cubic() {
        // s(xi) = 1 + xi + 0.3 xi^2 + 0.1 xi^3, s' = 1 + 0.6 xi + 0.3 xi^2 > 0
        let curve = Curve::circle(1.0);
        let basis = make_basis(3, NodeFamily::GaussLobatto).unwrap();
        let poly = |xi: f64| 1.0 + xi + 0.3 * xi * xi + 0.1 * xi * xi * xi;
        let values: Vec<f64> = basis.nodes().iter().map(|&n| poly(n)).collect();
        let s = ParametricMesh::new(3, 1, NodeFamily::GaussLobatto, values, 1.0);
        let prob =
            Problem::new(&curve, 1, 3, 1, LayoutKind::Constrained, NodeFamily::GaussLobatto, None)
                .unwrap();
        let b = prob.barrier_value(&s).unwrap();
        let oracle = simpson(|xi| (1.0 + 0.6 * xi + 0.3 * xi * xi).ln(), -1.0, 1.0, 50_000);
        assert!((b - oracle).abs() < 1e-8, "barrier {b} vs oracle {oracle}");
    }

    #[test]
    fn inverted_parametrization_is_rejected() {
        let curve = Curve::circle(1.0);
        let quad = gauss_legendre(20).unwrap();
        // q = 2 with the middle node pulled past the right endpoint
        let s = ParametricMesh::new(2, 1, NodeFamily::GaussLobatto, vec![0.0, 2.0, 1.0], 1.0);
        assert!(!check_validity(&s, 10, &quad));
        let (x, _) = interpolate_meshes(&curve, 1, 2, 2, &[0.0, 1.0], NodeFamily::GaussLobatto)
            .unwrap();
        let mut prob = Problem::for_meshes(&curve, &x, &s, LayoutKind::Constrained, None).unwrap();
        prob.set_mu(1e-3);
        assert!(matches!(
            prob.barrier_value(&s),
            Err(Error::InvalidParametrization { .. })
        ));
        assert!(prob.evaluate(&x, &s).is_err());

        let affine = ParametricMesh::new(2, 1, NodeFamily::GaussLobatto, vec![0.0, 0.5, 1.0], 1.0);
        assert!(check_validity(&affine, 10, &quad));
    }

    #[test]
    fn penalized_value_is_linear_in_mu() {
        let curve = Curve::circle(1.0);
        let (mut prob, x, s) = problem(&curve, 2, 3, 2, LayoutKind::Constrained);
        let e = prob.energy(&x, &s).unwrap();
        let b = prob.barrier_value(&s).unwrap();
        for mu in [1e-2, 1e-4, 1e-6] {
            prob.set_mu(mu);
            let p = prob.penalized(&x, &s).unwrap();
            let diff = (p - e) + mu * b;
            assert!(
                diff.abs() <= 4.0 * f64::EPSILON * (e.abs() + (mu * b).abs()),
                "mu = {mu}: residual {diff}"
            );
        }
    }

    #[test]
    fn straight_line_decomposition_is_zero() {
        let curve = Curve::line([0.0; 3], [2.0, 1.0, 0.0], 2);
        let (_, x, s) = problem(&curve, 2, 2, 2, LayoutKind::Constrained);
        let dec = decompose_error(&curve, &x, &s, 50).unwrap();
        assert!(dec.magnitude.iter().all(|&m| m < 1e-13));
        assert!(dec.tangent.iter().all(|&v| v.abs() < 1e-13));
        assert!(dec.normal.iter().all(|&v| v.abs() < 1e-13));
        assert!(dec.binormal.is_none());
    }

    #[test]
    fn decomposition_satisfies_pythagoras() {
        let curve = Curve::sphere_arc();
        let (_, x, s) = problem(&curve, 3, 4, 2, LayoutKind::Constrained);
        let dec = decompose_error(&curve, &x, &s, 100).unwrap();
        let b = dec.binormal.as_ref().unwrap();
        for k in 0..dec.xi.len() {
            let sum = dec.tangent[k] * dec.tangent[k]
                + dec.normal[k] * dec.normal[k]
                + b[k] * b[k];
            let mag2 = dec.magnitude[k] * dec.magnitude[k];
            assert!((sum - mag2).abs() < 1e-10 * mag2.max(1e-30), "sample {k}");
        }
    }

    #[test]
    fn initial_interpolation_error_vanishes_at_the_nodes() {
        let curve = Curve::semicircle(1.0);
        let (_, x, s) = problem(&curve, 2, 2, 1, LayoutKind::Constrained);
        let dec = decompose_error(&curve, &x, &s, 2001).unwrap();
        // |e| dips to zero in exactly p + 1 = 3 places (the basis-node images)
        let band = 1e-3 * dec.magnitude.iter().cloned().fold(0.0f64, f64::max);
        let mut dips = 0;
        let mut inside = false;
        for &m in &dec.magnitude {
            if m <= band && !inside {
                dips += 1;
                inside = true;
            } else if m > band {
                inside = false;
            }
        }
        assert_eq!(dips, 3);
        // the normal error only touches zero at the middle node (the arc
        // stays on one side of the parabola); the tangent component crosses
        assert_eq!(count_roots(&dec.normal, band), 2);
        assert_eq!(count_roots(&dec.tangent, band), 3);
    }

    #[test]
    fn count_roots_on_a_sine_wave() {
        let samples: Vec<f64> =
            (0..1000).map(|k| (2.0 * PI * k as f64 / 999.0).sin()).collect();
        assert_eq!(count_roots(&samples, 1e-9), 3);
    }

    #[test]
    fn count_roots_all_positive() {
        let samples = vec![0.5, 1.0, 2.0, 0.7];
        assert_eq!(count_roots(&samples, 1e-9), 0);
    }

    #[test]
    fn energy_is_stable_under_quadrature_doubling() {
        let curve = Curve::circle(1.0);
        let (x, s) = interpolate_meshes(
            &curve,
            4,
            2,
            3,
            &uniform_partition(&curve, 4),
            NodeFamily::GaussLobatto,
        )
        .unwrap();
        let base = Problem::for_meshes(&curve, &x, &s, LayoutKind::Constrained, None).unwrap();
        let doubled = Problem::for_meshes(
            &curve,
            &x,
            &s,
            LayoutKind::Constrained,
            Some(2 * base.quad().len()),
        )
        .unwrap();
        let e1 = base.energy(&x, &s).unwrap();
        let e2 = doubled.energy(&x, &s).unwrap();
        assert!((e1 - e2).abs() < 1e-10 * e1.abs());
    }
}
