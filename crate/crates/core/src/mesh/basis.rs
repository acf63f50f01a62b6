//! Nodal Lagrange bases on [-1, 1], evaluated barycentrically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFamily {
    /// Endpoints plus the extrema of the Legendre polynomial; the default
    /// (better conditioned at higher degree).
    GaussLobatto,
    Equispaced,
}

/// Lagrange basis `{N_i}` of a given degree on nodes in [-1, 1] with the
/// endpoints included.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    degree: usize,
    nodes: Vec<f64>,
    bary: Vec<f64>,
}

pub fn make_basis(degree: usize, family: NodeFamily) -> Result<LagrangeBasis> {
    LagrangeBasis::new(degree, family)
}

impl LagrangeBasis {
    pub fn new(degree: usize, family: NodeFamily) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Spec("basis degree must be at least 1".into()));
        }
        let nodes = match family {
            NodeFamily::Equispaced => (0..=degree)
                .map(|i| -1.0 + 2.0 * i as f64 / degree as f64)
                .collect(),
            NodeFamily::GaussLobatto => gauss_lobatto_nodes(degree),
        };
        let bary = barycentric_weights(&nodes);
        Ok(LagrangeBasis { degree, nodes, bary })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn node_count(&self) -> usize {
        self.degree + 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Values and first derivatives of every basis function at `xi`.
    pub fn eval(&self, xi: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.nodes.len();
        let mut values = vec![0.0; n];
        let mut derivs = vec![0.0; n];
        self.eval_into(xi, &mut values, &mut derivs);
        (values, derivs)
    }

    pub fn eval_into(&self, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
        let n = self.nodes.len();
        // at a node the barycentric formula degenerates; use the cardinal
        // property and the differentiation matrix row instead
        if let Some(k) = self.nodes.iter().position(|&x| (xi - x).abs() < 1e-14) {
            values.fill(0.0);
            values[k] = 1.0;
            let mut row_sum = 0.0;
            for j in 0..n {
                if j != k {
                    let d = (self.bary[j] / self.bary[k]) / (self.nodes[k] - self.nodes[j]);
                    derivs[j] = d;
                    row_sum += d;
                }
            }
            derivs[k] = -row_sum;
            return;
        }
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for j in 0..n {
            let r = self.bary[j] / (xi - self.nodes[j]);
            s0 += r;
            s1 += r / (xi - self.nodes[j]);
        }
        for i in 0..n {
            let di = xi - self.nodes[i];
            let ni = (self.bary[i] / di) / s0;
            values[i] = ni;
            derivs[i] = ni * (s1 / s0 - 1.0 / di);
        }
    }
}

fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![1.0; n];
    for i in 0..n {
        for j in 0..n {
            if j != i {
                w[i] /= nodes[i] - nodes[j];
            }
        }
    }
    // normalize to tame the dynamic range at higher degrees
    let max = w.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    w.iter_mut().for_each(|v| *v /= max);
    w
}

/// Endpoints plus the roots of `P'_degree`, i.e. the Gauss-Lobatto nodes.
fn gauss_lobatto_nodes(degree: usize) -> Vec<f64> {
    let mut nodes = vec![0.0; degree + 1];
    nodes[0] = -1.0;
    nodes[degree] = 1.0;
    let n = degree;
    for i in 1..degree {
        // Chebyshev-Lobatto initial guess, refined by Newton on P'_n
        let mut x = -(std::f64::consts::PI * i as f64 / degree as f64).cos();
        for _ in 0..100 {
            let (p, dp, ddp) = legendre_with_derivs(n, x);
            let _ = p;
            let step = dp / ddp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
    }
    // symmetrize about the midpoint
    for i in 1..=(degree - 1) / 2 {
        let avg = 0.5 * (nodes[i].abs() + nodes[degree - i].abs());
        nodes[i] = -avg;
        nodes[degree - i] = avg;
    }
    if degree % 2 == 0 {
        nodes[degree / 2] = 0.0;
    }
    nodes
}

/// `(P_n, P'_n, P''_n)` via the recurrence and the Legendre ODE.
fn legendre_with_derivs(n: usize, x: f64) -> (f64, f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    let ddp = (2.0 * x * dp - nf * (nf + 1.0) * p1) / (1.0 - x * x);
    (p1, dp, ddp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_basis_at_midpoint() {
        for family in [NodeFamily::GaussLobatto, NodeFamily::Equispaced] {
            let basis = make_basis(1, family).unwrap();
            let (values, _) = basis.eval(0.0);
            assert_eq!(values, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn cardinal_property_at_left_end() {
        let basis = make_basis(2, NodeFamily::Equispaced).unwrap();
        let (values, _) = basis.eval(-1.0);
        assert_eq!(values, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn degree_four_lobatto_interior_nodes() {
        // roots of (1 - xi^2) P_4'(xi): +-sqrt(3/7) and 0
        let basis = make_basis(4, NodeFamily::GaussLobatto).unwrap();
        let expect = (3.0f64 / 7.0).sqrt();
        let nodes = basis.nodes();
        assert!((nodes[1] + expect).abs() < 1e-14);
        assert!((nodes[2]).abs() < 1e-14);
        assert!((nodes[3] - expect).abs() < 1e-14);
        for i in 0..nodes.len() {
            assert!((nodes[i] + nodes[nodes.len() - 1 - i]).abs() < 1e-15, "symmetry");
        }
    }

    #[test]
    fn degree_zero_is_rejected() {
        assert!(make_basis(0, NodeFamily::GaussLobatto).is_err());
    }

    #[test]
    fn partition_of_unity_on_grid() {
        for degree in [1, 2, 3, 4, 6, 8, 10] {
            for family in [NodeFamily::GaussLobatto, NodeFamily::Equispaced] {
                let basis = make_basis(degree, family).unwrap();
                for g in 0..=100 {
                    let xi = -1.0 + 2.0 * g as f64 / 100.0;
                    let (values, derivs) = basis.eval(xi);
                    let vsum: f64 = values.iter().sum();
                    let dsum: f64 = derivs.iter().sum();
                    assert!((vsum - 1.0).abs() < 1e-12, "deg {degree} xi {xi}: {vsum}");
                    assert!(dsum.abs() < 1e-10, "deg {degree} xi {xi}: {dsum}");
                }
            }
        }
    }

    #[test]
    fn nodes_are_increasing_and_span_the_interval() {
        for degree in 1..=10 {
            for family in [NodeFamily::GaussLobatto, NodeFamily::Equispaced] {
                let basis = make_basis(degree, family).unwrap();
                let nodes = basis.nodes();
                assert_eq!(nodes[0], -1.0);
                assert_eq!(nodes[degree], 1.0);
                assert!(nodes.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let basis = make_basis(5, NodeFamily::GaussLobatto).unwrap();
        let h = 1e-7;
        for &xi in &[-0.83, -0.21, 0.4, 0.77] {
            let (_, derivs) = basis.eval(xi);
            let (vp, _) = basis.eval(xi + h);
            let (vm, _) = basis.eval(xi - h);
            for i in 0..basis.node_count() {
                let fd = (vp[i] - vm[i]) / (2.0 * h);
                assert!((fd - derivs[i]).abs() < 1e-6, "i = {i}, xi = {xi}");
            }
        }
    }
}
