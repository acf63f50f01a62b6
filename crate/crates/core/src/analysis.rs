//! Convergence-rate studies, error-root counting and the synthetic curve
//! suite used by the comparison runs.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disparity::{count_roots, decompose_error, ZERO_BAND_FRACTION};
use crate::error::{Error, Result};
use crate::geometry::{Curve, CurveKind, CurveSpec};
use crate::mesh::{interpolate_meshes, uniform_partition, LayoutKind};
use crate::optimizer::{optimize, Config};
use crate::parallel::{run_by_curves, CurveJob, MeshParams, PartitionStrategy};

/// One (degree, refinement) cell of a convergence study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyCell {
    pub p: usize,
    pub q: usize,
    pub elements: usize,
    /// Sigma-norm (square root of the disparity) of the interpolative mesh.
    pub initial: f64,
    /// Sigma-norm after optimization.
    pub optimized: f64,
    pub converged: bool,
    pub iterations: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub curve_name: String,
    pub layout: LayoutKind,
    pub degrees: Vec<usize>,
    pub refinements: Vec<usize>,
    /// Cells in (degree-major, refinement-minor) order.
    pub cells: Vec<StudyCell>,
    /// Fitted order of the interpolative sigma-norm per degree.
    pub initial_orders: Vec<Option<f64>>,
    /// Fitted order of the optimized sigma-norm per degree.
    pub optimized_orders: Vec<Option<f64>>,
}

/// Trailing refinements used for slope fits; earlier cells are usually
/// pre-asymptotic.
const FIT_WINDOW: usize = 4;
/// Sigma-norms below this are floating-point floor artifacts and are
/// excluded from slope fits.
const FIT_FLOOR: f64 = 1e-13;

/// Least-squares slope of `log_errors` against `log_sizes`.
pub fn fit_slope(log_sizes: &[f64], log_errors: &[f64]) -> Result<f64> {
    if log_sizes.len() != log_errors.len() {
        return Err(Error::Study("slope fit needs paired samples".into()));
    }
    let pairs: Vec<(f64, f64)> = log_sizes
        .iter()
        .zip(log_errors)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Study(format!(
            "slope fit needs at least 2 finite points, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in pairs {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::Study("slope fit needs distinct sizes".into()));
    }
    Ok(sxy / sxx)
}

/// Order = negated fitted slope of `log(sigma-norm)` vs `log(R)` over the
/// last `FIT_WINDOW` surviving refinements; `None` with fewer than 3 usable
/// cells.
fn fit_order(cells: &[&StudyCell], value: impl Fn(&StudyCell) -> f64) -> Option<f64> {
    let usable: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| !c.failed && value(c) >= FIT_FLOOR)
        .map(|c| ((c.elements as f64).ln(), value(c).ln()))
        .collect();
    let tail = usable.len().saturating_sub(FIT_WINDOW);
    let window = &usable[tail..];
    if window.len() < 3 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = window.iter().copied().unzip();
    fit_slope(&xs, &ys).ok().map(|s| -s)
}

/// Runs the refinement matrix for one curve: per (p, R) cell, partition,
/// interpolate, record the initial sigma-norm, optimize, record the final
/// one, then fit orders per degree. Cells are independent and delegated to
/// the by-curve parallel driver.
#[allow(clippy::too_many_arguments)]
pub fn run_study(
    curve: &Curve,
    curve_name: &str,
    degrees: &[usize],
    refinements: &[usize],
    q_for: impl Fn(usize) -> usize,
    layout: LayoutKind,
    partition: PartitionStrategy,
    cfg: &Config,
    workers: usize,
) -> Result<ConvergenceStudy> {
    if refinements.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Study("refinements must be strictly increasing".into()));
    }
    let mut jobs = Vec::new();
    for &p in degrees {
        for &r in refinements {
            jobs.push(CurveJob {
                name: format!("{curve_name}/p{p}/r{r}"),
                curve: curve.clone(),
                params: MeshParams {
                    elements: r,
                    degree_phys: p,
                    degree_param: q_for(p),
                    layout,
                    partition,
                },
            });
        }
    }
    let (_, report) = run_by_curves(&jobs, cfg, workers);

    let mut cells = Vec::with_capacity(jobs.len());
    for (job, task) in jobs.iter().zip(&report.task_reports) {
        let cell = match &task.report {
            Some(r) => StudyCell {
                p: job.params.degree_phys,
                q: job.params.degree_param,
                elements: job.params.elements,
                initial: r.e_initial.max(0.0).sqrt(),
                optimized: r.e_final.max(0.0).sqrt(),
                converged: r.converged,
                iterations: r.iterations,
                failed: false,
            },
            None => StudyCell {
                p: job.params.degree_phys,
                q: job.params.degree_param,
                elements: job.params.elements,
                initial: f64::NAN,
                optimized: f64::NAN,
                converged: false,
                iterations: 0,
                failed: true,
            },
        };
        cells.push(cell);
    }

    let mut initial_orders = Vec::new();
    let mut optimized_orders = Vec::new();
    for &p in degrees {
        let row: Vec<&StudyCell> = cells.iter().filter(|c| c.p == p).collect();
        initial_orders.push(fit_order(&row, |c| c.initial));
        optimized_orders.push(fit_order(&row, |c| c.optimized));
    }

    Ok(ConvergenceStudy {
        curve_name: curve_name.to_string(),
        layout,
        degrees: degrees.to_vec(),
        refinements: refinements.to_vec(),
        cells,
        initial_orders,
        optimized_orders,
    })
}

/// Root counts of the point-wise error components for a single optimized
/// element.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RootCounts {
    pub p: usize,
    pub q: usize,
    pub tangent: usize,
    pub normal: usize,
    pub binormal: Option<usize>,
}

const ROOT_SAMPLES: usize = 2000;

/// Optimizes a single constrained element (so only the internal nodes move)
/// and counts the sign-change roots of each error component on a dense grid.
pub fn run_root_study(curve: &Curve, p: usize, q: usize, cfg: &Config) -> Result<RootCounts> {
    let partition = uniform_partition(curve, 1);
    let (x, s) = interpolate_meshes(curve, 1, p, q, &partition, cfg.node_family)?;
    let (x_opt, s_opt, _) = optimize(curve, &x, &s, LayoutKind::Constrained, cfg)?;
    let dec = decompose_error(curve, &x_opt, &s_opt, ROOT_SAMPLES)?;
    let band = |samples: &[f64]| {
        ZERO_BAND_FRACTION * samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    Ok(RootCounts {
        p,
        q,
        tangent: count_roots(&dec.tangent, band(&dec.tangent)),
        normal: count_roots(&dec.normal, band(&dec.normal)),
        binormal: dec.binormal.as_ref().map(|b| count_roots(b, band(b))),
    })
}

/// Deterministic mixed suite of circles, spirals, airfoils and b-splines for
/// the comparison studies.
pub fn synthetic_suite(count: usize, seed: u64) -> Vec<(String, CurveSpec)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(count);
    for i in 0..count {
        let (name, spec) = match i % 4 {
            0 => {
                let radius = rng.random_range(0.5..2.0);
                (
                    format!("circle_{i:02}"),
                    CurveSpec {
                        kind: CurveKind::Circle,
                        params: vec![radius],
                        domain: [0.0, 2.0 * std::f64::consts::PI],
                        control_points: None,
                        knots: None,
                        degree: None,
                    },
                )
            }
            1 => {
                let outer = rng.random_range(0.6..1.5);
                let turns = rng.random_range(1.5..3.0);
                (
                    format!("spiral_{i:02}"),
                    CurveSpec {
                        kind: CurveKind::Spiral,
                        params: vec![outer],
                        domain: [0.0, turns * 2.0 * std::f64::consts::PI],
                        control_points: None,
                        knots: None,
                        degree: None,
                    },
                )
            }
            2 => {
                let thickness = *[8.0, 10.0, 12.0, 15.0, 18.0, 21.0].choose(&mut rng).unwrap();
                (
                    format!("naca_{i:02}"),
                    CurveSpec {
                        kind: CurveKind::Naca4,
                        params: vec![0.0, 0.0, thickness],
                        domain: [-1.0, 1.0],
                        control_points: None,
                        knots: None,
                        degree: None,
                    },
                )
            }
            _ => {
                // wavy open polygon: monotone in x with random vertical swings
                let n_ctrl = 8;
                let degree = 3;
                let points: Vec<Vec<f64>> = (0..n_ctrl)
                    .map(|j| {
                        let x = j as f64 + rng.random_range(-0.25..0.25);
                        let y = (j as f64 * 0.9).sin() + rng.random_range(-0.4..0.4);
                        vec![x, y]
                    })
                    .collect();
                let interior = n_ctrl - degree - 1;
                let mut knots = vec![0.0; degree + 1];
                for k in 1..=interior {
                    knots.push(k as f64 / (interior + 1) as f64);
                }
                knots.extend(std::iter::repeat(1.0).take(degree + 1));
                (
                    format!("bspline_{i:02}"),
                    CurveSpec {
                        kind: CurveKind::Bspline,
                        params: vec![],
                        domain: [0.0, 1.0],
                        control_points: Some(points),
                        knots: Some(knots),
                        degree: Some(degree),
                    },
                )
            }
        };
        suite.push((name, spec));
    }
    suite
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_halving_errors_is_minus_one() {
        let sizes: Vec<f64> = [2.0f64, 4.0, 8.0, 16.0].iter().map(|r| r.ln()).collect();
        let errors: Vec<f64> = [1.0f64, 0.5, 0.25, 0.125].iter().map(|e| e.ln()).collect();
        let slope = fit_slope(&sizes, &errors).unwrap();
        assert!((slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_power_law_recovers_order_six() {
        let refinements = [2.0f64, 4.0, 8.0, 16.0, 32.0];
        let sizes: Vec<f64> = refinements.iter().map(|r| r.ln()).collect();
        let errors: Vec<f64> = refinements.iter().map(|r| (3.7 * r.powi(-6)).ln()).collect();
        let slope = fit_slope(&sizes, &errors).unwrap();
        assert!((-slope - 6.0).abs() < 1e-10);
    }

    #[test]
    fn slope_fit_rejects_degenerate_input() {
        assert!(fit_slope(&[1.0], &[2.0]).is_err());
        assert!(fit_slope(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(fit_slope(&[1.0, f64::NAN, 2.0], &[0.0, 0.0, f64::NAN]).is_err());
    }

    #[test]
    fn suite_is_deterministic_and_mixed() {
        let a = synthetic_suite(20, 7);
        let b = synthetic_suite(20, 7);
        assert_eq!(a.len(), 20);
        for ((na, sa), (nb, sb)) in a.iter().zip(&b) {
            assert_eq!(na, nb);
            assert_eq!(sa, sb);
        }
        assert!(a.iter().any(|(n, _)| n.starts_with("circle")));
        assert!(a.iter().any(|(n, _)| n.starts_with("spiral")));
        assert!(a.iter().any(|(n, _)| n.starts_with("naca")));
        assert!(a.iter().any(|(n, _)| n.starts_with("bspline")));
        // every entry builds
        for (name, spec) in &a {
            assert!(Curve::from_spec(spec).is_ok(), "{name}");
        }
    }
}
