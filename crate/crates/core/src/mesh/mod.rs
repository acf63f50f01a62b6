//! Physical and parametric meshes over a chain of reference elements, plus
//! the free/fixed degree-of-freedom bookkeeping used by the optimizer.
//!
//! Interface nodes are stored once and shared by the adjacent elements, so an
//! optimizer that moves interfaces cannot tear the mesh.

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Curve;

mod basis;
mod quadrature;

pub use basis::{make_basis, LagrangeBasis, NodeFamily};
pub use quadrature::{default_points, gauss_legendre, QuadratureRule};

/// Piecewise-polynomial map from the reference elements into `R^n`:
/// `R` elements of degree `p`, nodal coordinates with shared interfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalMesh {
    dim: usize,
    degree: usize,
    elems: usize,
    family: NodeFamily,
    /// `(R*p + 1) * dim` coordinates, node-major, coordinates interleaved.
    coords: Vec<f64>,
}

impl PhysicalMesh {
    pub fn zeros(dim: usize, degree: usize, elems: usize, family: NodeFamily) -> Self {
        PhysicalMesh { dim, degree, elems, family, coords: vec![0.0; (elems * degree + 1) * dim] }
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    /// The Lagrange basis this mesh's nodal values refer to.
    pub fn basis(&self) -> LagrangeBasis {
        make_basis(self.degree, self.family).expect("mesh degree is validated at construction")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elem_count(&self) -> usize {
        self.elems
    }

    pub fn node_count(&self) -> usize {
        self.elems * self.degree + 1
    }

    /// Global index of local node `i` of element `e`; interface nodes coincide.
    pub fn global_node(&self, e: usize, i: usize) -> usize {
        e * self.degree + i
    }

    pub fn node(&self, g: usize) -> Vector3<f64> {
        let base = g * self.dim;
        Vector3::new(
            self.coords[base],
            self.coords[base + 1],
            if self.dim == 3 { self.coords[base + 2] } else { 0.0 },
        )
    }

    pub fn set_node(&mut self, g: usize, value: Vector3<f64>) {
        let base = g * self.dim;
        for c in 0..self.dim {
            self.coords[base + c] = value[c];
        }
    }

    pub fn coord(&self, g: usize, c: usize) -> f64 {
        self.coords[g * self.dim + c]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Position and velocity `(x(xi), dx/dxi)` on element `e`.
    pub fn eval_element(&self, e: usize, xi: f64, basis: &LagrangeBasis) -> (Vector3<f64>, Vector3<f64>) {
        debug_assert_eq!(basis.degree(), self.degree);
        let (values, derivs) = basis.eval(xi);
        let mut pos = Vector3::zeros();
        let mut vel = Vector3::zeros();
        for i in 0..=self.degree {
            let node = self.node(self.global_node(e, i));
            pos += node * values[i];
            vel += node * derivs[i];
        }
        (pos, vel)
    }

    /// Copies element `e` into a standalone single-element mesh.
    pub fn extract_element(&self, e: usize) -> PhysicalMesh {
        let mut sub = PhysicalMesh::zeros(self.dim, self.degree, 1, self.family);
        for i in 0..=self.degree {
            sub.set_node(i, self.node(self.global_node(e, i)));
        }
        sub
    }

    /// Writes a single-element mesh back over element `e`.
    pub fn write_element(&mut self, e: usize, sub: &PhysicalMesh) {
        debug_assert_eq!(sub.elems, 1);
        for i in 0..=self.degree {
            let g = self.global_node(e, i);
            let base = g * self.dim;
            for c in 0..self.dim {
                self.coords[base + c] = sub.coords[i * self.dim + c];
            }
        }
    }
}

/// Scalar mesh into the curve-parameter interval: `R` elements of degree `q`
/// with shared interfaces, plus the travel direction fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricMesh {
    degree: usize,
    elems: usize,
    family: NodeFamily,
    values: Vec<f64>,
    /// +1 if `s` increases along the reference coordinate, -1 if it decreases.
    dir: f64,
}

impl ParametricMesh {
    pub fn new(degree: usize, elems: usize, family: NodeFamily, values: Vec<f64>, dir: f64) -> Self {
        debug_assert_eq!(values.len(), elems * degree + 1);
        ParametricMesh { degree, elems, family, values, dir }
    }

    pub fn family(&self) -> NodeFamily {
        self.family
    }

    pub fn basis(&self) -> LagrangeBasis {
        make_basis(self.degree, self.family).expect("mesh degree is validated at construction")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn elem_count(&self) -> usize {
        self.elems
    }

    pub fn node_count(&self) -> usize {
        self.elems * self.degree + 1
    }

    pub fn direction(&self) -> f64 {
        self.dir
    }

    pub fn global_node(&self, e: usize, j: usize) -> usize {
        e * self.degree + j
    }

    pub fn value(&self, g: usize) -> f64 {
        self.values[g]
    }

    pub fn set_value(&mut self, g: usize, v: f64) {
        self.values[g] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(s(xi), ds/dxi)` on element `e`.
    pub fn eval_element(&self, e: usize, xi: f64, basis: &LagrangeBasis) -> (f64, f64) {
        debug_assert_eq!(basis.degree(), self.degree);
        let (values, derivs) = basis.eval(xi);
        let mut s = 0.0;
        let mut ds = 0.0;
        for j in 0..=self.degree {
            let v = self.values[self.global_node(e, j)];
            s += v * values[j];
            ds += v * derivs[j];
        }
        (s, ds)
    }

    pub fn extract_element(&self, e: usize) -> ParametricMesh {
        let lo = self.global_node(e, 0);
        ParametricMesh {
            degree: self.degree,
            elems: 1,
            family: self.family,
            values: self.values[lo..=lo + self.degree].to_vec(),
            dir: self.dir,
        }
    }

    pub fn write_element(&mut self, e: usize, sub: &ParametricMesh) {
        debug_assert_eq!(sub.elems, 1);
        let lo = self.global_node(e, 0);
        self.values[lo..=lo + self.degree].copy_from_slice(&sub.values);
    }
}

/// Which interface nodes stay frozen during optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Every element-interface node is fixed; elements decouple.
    Constrained,
    /// Only the two global curve endpoints are fixed.
    Unconstrained,
}

/// Free/fixed masks over the mesh nodes together with the packing order of
/// the free degrees of freedom.
///
/// Free-vector ordering is element-major: for each element, the physical
/// nodes it owns (coordinates interleaved per node) followed by its
/// parametric nodes. A shared interface node is owned by the element on its
/// left.
#[derive(Debug, Clone, PartialEq)]
pub struct DofLayout {
    kind: LayoutKind,
    dim: usize,
    p: usize,
    q: usize,
    elems: usize,
    phys_free: Vec<bool>,
    param_free: Vec<bool>,
    phys_index: Vec<Option<usize>>,
    param_index: Vec<Option<usize>>,
    free_len: usize,
}

impl DofLayout {
    pub fn new(kind: LayoutKind, dim: usize, p: usize, q: usize, elems: usize) -> Self {
        let phys_nodes = elems * p + 1;
        let param_nodes = elems * q + 1;
        let phys_free: Vec<bool> = (0..phys_nodes)
            .map(|g| match kind {
                LayoutKind::Constrained => g % p != 0,
                LayoutKind::Unconstrained => g != 0 && g != phys_nodes - 1,
            })
            .collect();
        let param_free: Vec<bool> = (0..param_nodes)
            .map(|g| match kind {
                LayoutKind::Constrained => g % q != 0,
                LayoutKind::Unconstrained => g != 0 && g != param_nodes - 1,
            })
            .collect();

        let mut phys_index = vec![None; phys_nodes];
        let mut param_index = vec![None; param_nodes];
        let mut next = 0;
        for e in 0..elems {
            let i0 = if e == 0 { 0 } else { 1 };
            for i in i0..=p {
                let g = e * p + i;
                if phys_free[g] {
                    phys_index[g] = Some(next);
                    next += dim;
                }
            }
            let j0 = if e == 0 { 0 } else { 1 };
            for j in j0..=q {
                let g = e * q + j;
                if param_free[g] {
                    param_index[g] = Some(next);
                    next += 1;
                }
            }
        }
        DofLayout {
            kind,
            dim,
            p,
            q,
            elems,
            phys_free,
            param_free,
            phys_index,
            param_index,
            free_len: next,
        }
    }

    pub fn kind(&self) -> LayoutKind {
        self.kind
    }

    pub fn free_len(&self) -> usize {
        self.free_len
    }

    pub fn phys_free(&self, g: usize) -> bool {
        self.phys_free[g]
    }

    pub fn param_free(&self, g: usize) -> bool {
        self.param_free[g]
    }

    /// Base index of the physical node's coordinates in the free vector.
    pub fn phys_dof(&self, g: usize) -> Option<usize> {
        self.phys_index[g]
    }

    pub fn param_dof(&self, g: usize) -> Option<usize> {
        self.param_index[g]
    }

    pub fn pack(&self, x: &PhysicalMesh, s: &ParametricMesh) -> DVector<f64> {
        let mut z = DVector::zeros(self.free_len);
        for g in 0..x.node_count() {
            if let Some(base) = self.phys_index[g] {
                for c in 0..self.dim {
                    z[base + c] = x.coord(g, c);
                }
            }
        }
        for g in 0..s.node_count() {
            if let Some(idx) = self.param_index[g] {
                z[idx] = s.value(g);
            }
        }
        z
    }

    /// Scatters a free vector into the meshes; fixed entries are untouched.
    pub fn unpack(&self, z: &DVector<f64>, x: &mut PhysicalMesh, s: &mut ParametricMesh) {
        debug_assert_eq!(z.len(), self.free_len);
        for g in 0..x.node_count() {
            if let Some(base) = self.phys_index[g] {
                let off = g * self.dim;
                for c in 0..self.dim {
                    x.coords[off + c] = z[base + c];
                }
            }
        }
        for g in 0..s.node_count() {
            if let Some(idx) = self.param_index[g] {
                s.values[g] = z[idx];
            }
        }
    }
}

/// Equal parameter steps across the curve domain.
pub fn uniform_partition(curve: &Curve, elems: usize) -> Vec<f64> {
    let (lo, hi) = curve.domain();
    let mut breakpoints = Vec::with_capacity(elems + 1);
    breakpoints.push(lo);
    for k in 1..elems {
        breakpoints.push(lo + (hi - lo) * k as f64 / elems as f64);
    }
    breakpoints.push(hi);
    breakpoints
}

/// Breakpoints equalizing arc length between consecutive breakpoints,
/// located by bisection.
pub fn arclength_partition(curve: &Curve, elems: usize) -> Result<Vec<f64>> {
    let (lo, hi) = curve.domain();
    if elems == 1 {
        return Ok(vec![lo, hi]);
    }
    let total = curve.arc_length(lo, hi)?;
    let target = total / elems as f64;
    let mut breakpoints = Vec::with_capacity(elems + 1);
    breakpoints.push(lo);
    let mut prev = lo;
    for _ in 1..elems {
        let (mut a, mut b) = (prev, hi);
        // invariant: arc(prev, a) < target <= arc(prev, b)
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if curve.arc_length(prev, mid)? < target {
                a = mid;
            } else {
                b = mid;
            }
            if b - a <= 1e-10 * (hi - lo).abs() {
                break;
            }
        }
        prev = 0.5 * (a + b);
        breakpoints.push(prev);
    }
    breakpoints.push(hi);
    Ok(breakpoints)
}

/// Interpolative initial meshes: `s` maps the basis nodes affinely into each
/// parameter subinterval and `x_i = a(s_i)`, so the physical mesh
/// interpolates the curve exactly at its nodes.
pub fn interpolate_meshes(
    curve: &Curve,
    elems: usize,
    p: usize,
    q: usize,
    partition: &[f64],
    family: NodeFamily,
) -> Result<(PhysicalMesh, ParametricMesh)> {
    if elems < 1 || p < 1 || q < 1 {
        return Err(Error::Spec("interpolate_meshes needs R >= 1, p >= 1, q >= 1".into()));
    }
    if partition.len() != elems + 1 {
        return Err(Error::Spec(format!(
            "partition has {} breakpoints, expected {}",
            partition.len(),
            elems + 1
        )));
    }
    let increasing = partition.windows(2).all(|w| w[1] > w[0]);
    let decreasing = partition.windows(2).all(|w| w[1] < w[0]);
    if !increasing && !decreasing {
        return Err(Error::Spec("partition must be strictly monotone".into()));
    }
    let dir = if increasing { 1.0 } else { -1.0 };

    let phys_basis = make_basis(p, family)?;
    let param_basis = make_basis(q, family)?;
    // interfaces take the breakpoint values exactly; interiors map affinely
    let place = |lo: f64, hi: f64, xi: f64| 0.5 * (lo + hi) + 0.5 * xi * (hi - lo);

    let mut s = ParametricMesh::new(q, elems, family, vec![0.0; elems * q + 1], dir);
    for e in 0..elems {
        let (lo, hi) = (partition[e], partition[e + 1]);
        for (j, &xi) in param_basis.nodes().iter().enumerate() {
            let g = s.global_node(e, j);
            s.values[g] = if j == 0 {
                lo
            } else if j == q {
                hi
            } else {
                place(lo, hi, xi)
            };
        }
    }

    let mut x = PhysicalMesh::zeros(curve.dim(), p, elems, family);
    for e in 0..elems {
        let (lo, hi) = (partition[e], partition[e + 1]);
        for (i, &xi) in phys_basis.nodes().iter().enumerate() {
            let t = if i == 0 {
                lo
            } else if i == p {
                hi
            } else {
                place(lo, hi, xi)
            };
            let g = x.global_node(e, i);
            x.set_node(g, curve.eval(t)?);
        }
    }
    Ok((x, s))
}
