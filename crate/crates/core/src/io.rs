//! CSV emission for meshes, error decompositions and studies.
//!
//! Floats are written in Rust's shortest round-trip form: locale-independent,
//! '.' decimal separator, bit-exact to re-parse, so identical runs produce
//! byte-identical files.

use std::io::{self, Write};

use crate::analysis::ConvergenceStudy;
use crate::disparity::ErrorDecomposition;
use crate::mesh::{LayoutKind, ParametricMesh, PhysicalMesh};

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn layout_name(layout: LayoutKind) -> &'static str {
    match layout {
        LayoutKind::Constrained => "constrained",
        LayoutKind::Unconstrained => "unconstrained",
    }
}

/// Rows `(curve, element, node_index, s, x, y[, z])`: the physical nodes of
/// each element together with the parameter value at the same reference node.
pub fn write_mesh_csv<W: Write>(
    w: &mut W,
    curve_name: &str,
    x: &PhysicalMesh,
    s: &ParametricMesh,
) -> io::Result<()> {
    let header = if x.dim() == 3 {
        "curve,element,node_index,s,x,y,z"
    } else {
        "curve,element,node_index,s,x,y"
    };
    writeln!(w, "{header}")?;
    let phys_basis = x.basis();
    let param_basis = s.basis();
    for e in 0..x.elem_count() {
        for (i, &xi) in phys_basis.nodes().iter().enumerate() {
            let (s_val, _) = s.eval_element(e, xi, &param_basis);
            let node = x.node(x.global_node(e, i));
            let mut row = format!(
                "{curve_name},{e},{i},{},{},{}",
                fmt_f64(s_val),
                fmt_f64(node.x),
                fmt_f64(node.y)
            );
            if x.dim() == 3 {
                row.push(',');
                row.push_str(&fmt_f64(node.z));
            }
            writeln!(w, "{row}")?;
        }
    }
    Ok(())
}

/// Rows `(xi_global, |e|, e_t, e_n[, e_b])` matching the point-wise error
/// plots.
pub fn write_decomposition_csv<W: Write>(w: &mut W, dec: &ErrorDecomposition) -> io::Result<()> {
    let header = if dec.binormal.is_some() {
        "xi_global,magnitude,e_t,e_n,e_b"
    } else {
        "xi_global,magnitude,e_t,e_n"
    };
    writeln!(w, "{header}")?;
    for k in 0..dec.xi.len() {
        let mut row = format!(
            "{},{},{},{}",
            fmt_f64(dec.xi[k]),
            fmt_f64(dec.magnitude[k]),
            fmt_f64(dec.tangent[k]),
            fmt_f64(dec.normal[k])
        );
        if let Some(b) = &dec.binormal {
            row.push(',');
            row.push_str(&fmt_f64(b[k]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Rows `(curve, p, q, layout, elements, disparity_initial, disparity_opt)`.
pub fn write_study_csv<W: Write>(w: &mut W, study: &ConvergenceStudy) -> io::Result<()> {
    writeln!(w, "curve,p,q,layout,elements,disparity_initial,disparity_opt")?;
    for cell in &study.cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            study.curve_name,
            cell.p,
            cell.q,
            layout_name(study.layout),
            cell.elements,
            fmt_f64(cell.initial),
            fmt_f64(cell.optimized)
        )?;
    }
    Ok(())
}
