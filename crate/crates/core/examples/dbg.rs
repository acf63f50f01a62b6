// scratch probe: optimizer behavior on the headline experiments
use curvemesh::*;

fn study_orders(curve: &Curve, name: &str, layout: LayoutKind, degrees: &[usize], rs: &[usize]) {
    let cfg = Config::default();
    let study = run_study(curve, name, degrees, rs, |p| 2 * p - 1, layout, PartitionStrategy::ArcLength, &cfg, 1).unwrap();
    for (k, &p) in degrees.iter().enumerate() {
        println!("  {name} {layout:?} p={p}: init order {:?} opt order {:?}", study.initial_orders[k], study.optimized_orders[k]);
        for c in study.cells.iter().filter(|c| c.p == p) {
            println!("    R={:2} init {:.3e} opt {:.3e} conv {} iters {}", c.elements, c.initial, c.optimized, c.converged, c.iterations);
        }
    }
}

fn main() {
    let t0 = std::time::Instant::now();
    let circle = Curve::circle(1.0);
    study_orders(&circle, "circle", LayoutKind::Constrained, &[2], &[2, 4, 8, 16, 32]);
    study_orders(&circle, "circle", LayoutKind::Unconstrained, &[2], &[2, 4, 8, 16, 32]);
    println!("circle p2 took {:?}", t0.elapsed());

    // per-element vs whole-problem constrained
    let cfg = Config::default();
    let partition = uniform_partition(&circle, 4);
    let (x, s) = interpolate_meshes(&circle, 4, 2, 3, &partition, NodeFamily::GaussLobatto).unwrap();
    let (xw, sw, rw) = optimize(&circle, &x, &s, LayoutKind::Constrained, &cfg).unwrap();
    let (xe, se, _re) = optimize_constrained_per_element(&circle, &x, &s, &cfg).unwrap();
    let mut max_diff = 0.0f64;
    for g in 0..xw.node_count() {
        max_diff = max_diff.max((xw.node(g) - xe.node(g)).norm());
    }
    for g in 0..sw.node_count() {
        max_diff = max_diff.max((sw.value(g) - se.value(g)).abs());
    }
    println!("per-element vs whole max dof diff = {max_diff:.3e} (whole iters {} conv {})", rw.iterations, rw.converged);

    // NACA untangle probe
    let naca = Curve::naca4(0.12);
    let part = uniform_partition(&naca, 4);
    let (nx, ns) = interpolate_meshes(&naca, 4, 2, 3, &part, NodeFamily::GaussLobatto).unwrap();
    match optimize(&naca, &nx, &ns, LayoutKind::Unconstrained, &cfg) {
        Ok((_, s_out, rep)) => {
            let quad = gauss_legendre(20).unwrap();
            println!("naca unconstrained: activations {} conv {} E {:.2e}->{:.2e} valid {} iters {} failure {:?}",
                rep.barrier_activations, rep.converged, rep.e_initial, rep.e_final,
                check_validity(&s_out, 40, &quad), rep.iterations, rep.failure);
        }
        Err(e) => println!("naca unconstrained errored: {e}"),
    }
    let mut cfg_nb = cfg.clone();
    cfg_nb.barrier = false;
    match optimize(&naca, &nx, &ns, LayoutKind::Unconstrained, &cfg_nb) {
        Ok((_, s_out, rep)) => {
            let quad = gauss_legendre(20).unwrap();
            println!("naca no-barrier: conv {} E {:.2e}->{:.2e} valid {} iters {} failure {:?}",
                rep.converged, rep.e_initial, rep.e_final, check_validity(&s_out, 40, &quad), rep.iterations, rep.failure);
        }
        Err(e) => println!("naca no-barrier errored: {e}"),
    }

    // root counts
    for (p, q) in [(2usize, 3usize), (3, 5)] {
        let rc = run_root_study(&Curve::semicircle(1.0), p, q, &cfg).unwrap();
        println!("semicircle p={p} q={q}: tangent {} normal {}", rc.tangent, rc.normal);
    }
    let rc = run_root_study(&Curve::sphere_arc(), 3, 10, &cfg).unwrap();
    println!("sphere p=3 q=10: tangent {} normal {} binormal {:?}", rc.tangent, rc.normal, rc.binormal);
    println!("total {:?}", t0.elapsed());
}
