//! Target curves: analytic families and B-splines with exact first and second
//! derivatives, Frenet frames, and arc length.
//!
//! All evaluators are closed-form (or de Boor for splines); nothing is
//! finite-differenced internally, since Newton quality depends on derivative
//! accuracy.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod bspline;
pub use bspline::BSpline;

/// Below this `|a'(t)|` the tangent is considered undefined.
pub const TANGENT_EPS: f64 = 1e-12;
/// Curvature threshold below which a 3D normal is considered undefined.
pub const CURVATURE_EPS: f64 = 1e-12;
const DOMAIN_SLACK: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Circle,
    Semicircle,
    Spiral,
    SphereArc,
    Naca4,
    Bspline,
}

/// Serializable curve description, the unit of the curve-spec file format.
///
/// `params` by kind:
/// - `circle` / `semicircle`: `[radius]` (default 1)
/// - `spiral`: `[outer_radius]` (default 1); Archimedean `r = c*t` with `c`
///   chosen so the radius at the end of the domain equals `outer_radius`
/// - `sphere_arc`: none
/// - `naca4`: `[camber%, camber_pos_tenths, thickness%, chord]`
///   (defaults `[0, 0, 12, 1]`, i.e. a unit-chord 0012 profile)
/// - `bspline`: none; uses `control_points`, `knots`, `degree`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    pub kind: CurveKind,
    #[serde(default)]
    pub params: Vec<f64>,
    pub domain: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
}

/// Entry of a curve-spec file: `{name, kind, params, domain, ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveEntry {
    pub name: String,
    #[serde(flatten)]
    pub spec: CurveSpec,
}

/// Parses a curve-spec file (a JSON list of [`CurveEntry`]).
pub fn load_curve_file(path: &std::path::Path) -> Result<Vec<CurveEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_curve_file(&text)
}

pub fn parse_curve_file(text: &str) -> Result<Vec<CurveEntry>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone)]
enum Form {
    Circle { radius: f64 },
    Spiral { pitch: f64 },
    SphereArc,
    Naca4 { camber: f64, camber_pos: f64, thickness: f64, chord: f64 },
    Bspline(BSpline),
}

/// A validated, evaluable curve `a: [t_lo, t_hi] -> R^n`.
///
/// Evaluation is pure and stateless after construction, so a `Curve` may be
/// shared across worker threads freely.
#[derive(Debug, Clone)]
pub struct Curve {
    form: Form,
    domain: (f64, f64),
    dim: usize,
}

/// Orthonormal frame along a curve; `binormal` is `None` for planar curves.
#[derive(Debug, Clone, PartialEq)]
pub struct FrenetFrame {
    pub tangent: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub binormal: Option<Vector3<f64>>,
}

// NACA 4-digit half-thickness polynomial, closed-trailing-edge variant
// (the x^4 coefficient -0.1036 makes y_t(1) = 0 exactly).
const NACA_A0: f64 = 0.2969;
const NACA_A1: f64 = -0.1260;
const NACA_A2: f64 = -0.3516;
const NACA_A3: f64 = 0.2843;
const NACA_A4: f64 = -0.1036;
// Chord map u(t) = t^2 (1+BIAS) / (1 + BIAS t^2): mimics CAD-style
// parametrizations that spend little parameter time in the leading-edge
// curvature zone, which is what makes coarse uniform partitions tangle.
const NACA_CHORD_BIAS: f64 = 9.0;

impl Curve {
    pub fn from_spec(spec: &CurveSpec) -> Result<Curve> {
        let [lo, hi] = spec.domain;
        if !(lo < hi) {
            return Err(Error::Spec(format!("domain [{lo}, {hi}] is not an increasing interval")));
        }
        let p0 = |default: f64| spec.params.first().copied().unwrap_or(default);
        match spec.kind {
            CurveKind::Circle | CurveKind::Semicircle => {
                let radius = p0(1.0);
                if radius <= 0.0 {
                    return Err(Error::Spec(format!("circle radius {radius} must be positive")));
                }
                Ok(Curve { form: Form::Circle { radius }, domain: (lo, hi), dim: 2 })
            }
            CurveKind::Spiral => {
                let outer = p0(1.0);
                if outer <= 0.0 || hi <= 0.0 {
                    return Err(Error::Spec("spiral needs a positive outer radius and end angle".into()));
                }
                Ok(Curve { form: Form::Spiral { pitch: outer / hi }, domain: (lo, hi), dim: 2 })
            }
            CurveKind::SphereArc => Ok(Curve { form: Form::SphereArc, domain: (lo, hi), dim: 3 }),
            CurveKind::Naca4 => {
                let camber = spec.params.first().copied().unwrap_or(0.0) / 100.0;
                let camber_pos = spec.params.get(1).copied().unwrap_or(0.0) / 10.0;
                let thickness = spec.params.get(2).copied().unwrap_or(12.0) / 100.0;
                let chord = spec.params.get(3).copied().unwrap_or(1.0);
                if thickness <= 0.0 || chord <= 0.0 {
                    return Err(Error::Spec("naca4 thickness and chord must be positive".into()));
                }
                if camber > 0.0 && !(camber_pos > 0.0 && camber_pos < 1.0) {
                    return Err(Error::Spec("cambered naca4 needs camber position in (0,1)".into()));
                }
                if lo < -1.0 - 1e-12 || hi > 1.0 + 1e-12 {
                    return Err(Error::Spec("naca4 domain must lie within [-1, 1]".into()));
                }
                Ok(Curve {
                    form: Form::Naca4 { camber, camber_pos, thickness, chord },
                    domain: (lo, hi),
                    dim: 2,
                })
            }
            CurveKind::Bspline => {
                let pts = spec
                    .control_points
                    .as_ref()
                    .ok_or_else(|| Error::Spec("bspline requires control_points".into()))?;
                let knots = spec
                    .knots
                    .as_ref()
                    .ok_or_else(|| Error::Spec("bspline requires knots".into()))?;
                let degree =
                    spec.degree.ok_or_else(|| Error::Spec("bspline requires degree".into()))?;
                let dim = pts.first().map(Vec::len).unwrap_or(0);
                if !(2..=3).contains(&dim) || pts.iter().any(|p| p.len() != dim) {
                    return Err(Error::Spec("control points must all be 2D or all be 3D".into()));
                }
                let ctrl: Vec<Vector3<f64>> = pts
                    .iter()
                    .map(|p| Vector3::new(p[0], p[1], if dim == 3 { p[2] } else { 0.0 }))
                    .collect();
                let spline = BSpline::new(ctrl, knots.clone(), degree, dim)?;
                let (vlo, vhi) = spline.valid_span();
                if lo < vlo - 1e-12 || hi > vhi + 1e-12 {
                    return Err(Error::Spec(format!(
                        "domain [{lo}, {hi}] exceeds the spline's valid span [{vlo}, {vhi}]"
                    )));
                }
                Ok(Curve { form: Form::Bspline(spline), domain: (lo, hi), dim })
            }
        }
    }

    pub fn circle(radius: f64) -> Curve {
        Curve { form: Form::Circle { radius }, domain: (0.0, 2.0 * std::f64::consts::PI), dim: 2 }
    }

    pub fn semicircle(radius: f64) -> Curve {
        Curve { form: Form::Circle { radius }, domain: (0.0, std::f64::consts::PI), dim: 2 }
    }

    /// Archimedean spiral with unit outer radius over `[0, 6*pi]`.
    pub fn spiral() -> Curve {
        let hi = 6.0 * std::f64::consts::PI;
        Curve { form: Form::Spiral { pitch: 1.0 / hi }, domain: (0.0, hi), dim: 2 }
    }

    /// Non-planar unit-sphere curve `(cos t cos(t/4), sin t cos(t/4), sin(t/4))`
    /// over `[0, pi]`.
    pub fn sphere_arc() -> Curve {
        Curve { form: Form::SphereArc, domain: (0.0, std::f64::consts::PI), dim: 3 }
    }

    /// Symmetric 4-digit profile, e.g. `naca4(0.12)` for a unit-chord 0012.
    pub fn naca4(thickness: f64) -> Curve {
        Curve {
            form: Form::Naca4 { camber: 0.0, camber_pos: 0.0, thickness, chord: 1.0 },
            domain: (-1.0, 1.0),
            dim: 2,
        }
    }

    /// Straight segment as a degree-1 b-spline over `[0, 1]`.
    pub fn line(from: [f64; 3], to: [f64; 3], dim: usize) -> Curve {
        let ctrl = vec![Vector3::from(from), Vector3::from(to)];
        let spline = BSpline::new(ctrl, vec![0.0, 0.0, 1.0, 1.0], 1, dim)
            .expect("two points always form a valid segment");
        Curve { form: Form::Bspline(spline), domain: (0.0, 1.0), dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn clamp_param(&self, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain;
        let slack = DOMAIN_SLACK * lo.abs().max(hi.abs()).max(1.0);
        if t < lo - slack || t > hi + slack {
            return Err(Error::Domain { t, lo, hi });
        }
        Ok(t.clamp(lo, hi))
    }

    pub fn eval(&self, t: f64) -> Result<Vector3<f64>> {
        let t = self.clamp_param(t)?;
        Ok(match &self.form {
            Form::Circle { radius } => Vector3::new(radius * t.cos(), radius * t.sin(), 0.0),
            Form::Spiral { pitch } => Vector3::new(pitch * t * t.cos(), pitch * t * t.sin(), 0.0),
            Form::SphereArc => {
                let c4 = (t / 4.0).cos();
                Vector3::new(t.cos() * c4, t.sin() * c4, (t / 4.0).sin())
            }
            Form::Naca4 { .. } => self.naca_point(t).0,
            Form::Bspline(s) => s.eval(t),
        })
    }

    pub fn eval_d1(&self, t: f64) -> Result<Vector3<f64>> {
        let t = self.clamp_param(t)?;
        Ok(match &self.form {
            Form::Circle { radius } => Vector3::new(-radius * t.sin(), radius * t.cos(), 0.0),
            Form::Spiral { pitch } => Vector3::new(
                pitch * (t.cos() - t * t.sin()),
                pitch * (t.sin() + t * t.cos()),
                0.0,
            ),
            Form::SphereArc => {
                let (s4, c4) = (t / 4.0).sin_cos();
                Vector3::new(
                    -t.sin() * c4 - 0.25 * t.cos() * s4,
                    t.cos() * c4 - 0.25 * t.sin() * s4,
                    0.25 * c4,
                )
            }
            Form::Naca4 { .. } => self.naca_point(t).1,
            Form::Bspline(s) => s.eval_d1(t),
        })
    }

    pub fn eval_d2(&self, t: f64) -> Result<Vector3<f64>> {
        Ok(self.eval_with_derivs(t)?.2)
    }

    /// `(a, a', a'')` in one call; the assembly hot path.
    pub fn eval_with_derivs(&self, t: f64) -> Result<(Vector3<f64>, Vector3<f64>, Vector3<f64>)> {
        let t = self.clamp_param(t)?;
        Ok(match &self.form {
            Form::Circle { radius } => {
                let (s, c) = t.sin_cos();
                let pos = Vector3::new(radius * c, radius * s, 0.0);
                (pos, Vector3::new(-radius * s, radius * c, 0.0), -pos)
            }
            Form::Spiral { pitch } => {
                let (s, c) = t.sin_cos();
                (
                    Vector3::new(pitch * t * c, pitch * t * s, 0.0),
                    Vector3::new(pitch * (c - t * s), pitch * (s + t * c), 0.0),
                    Vector3::new(pitch * (-2.0 * s - t * c), pitch * (2.0 * c - t * s), 0.0),
                )
            }
            Form::SphereArc => {
                let (s, c) = t.sin_cos();
                let (s4, c4) = (t / 4.0).sin_cos();
                (
                    Vector3::new(c * c4, s * c4, s4),
                    Vector3::new(-s * c4 - 0.25 * c * s4, c * c4 - 0.25 * s * s4, 0.25 * c4),
                    Vector3::new(
                        -17.0 / 16.0 * c * c4 + 0.5 * s * s4,
                        -17.0 / 16.0 * s * c4 - 0.5 * c * s4,
                        -s4 / 16.0,
                    ),
                )
            }
            Form::Naca4 { .. } => self.naca_point(t),
            Form::Bspline(s) => s.eval_with_derivs(t),
        })
    }

    /// Airfoil point and derivatives at `t in [-1, 1]`; `x = chord*t^2` so one
    /// parameter traverses the lower surface (t < 0) and then the upper.
    /// Camber is applied as a vertical offset (thin-airfoil form).
    fn naca_point(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let Form::Naca4 { camber, camber_pos, thickness, chord } = self.form else {
            unreachable!()
        };
        let side = if t > 0.0 {
            1.0
        } else if t < 0.0 {
            -1.0
        } else {
            0.0
        };
        let t2 = t * t;
        let scale = 5.0 * thickness;
        // signed thickness: side * y_t(t^2), written so the sqrt term is smooth in t
        let even = NACA_A1 * t2 + NACA_A2 * t2 * t2 + NACA_A3 * t2 * t2 * t2
            + NACA_A4 * t2 * t2 * t2 * t2;
        let even_d = t * (2.0 * NACA_A1 + 4.0 * NACA_A2 * t2 + 6.0 * NACA_A3 * t2 * t2
            + 8.0 * NACA_A4 * t2 * t2 * t2);
        let even_dd = 2.0 * NACA_A1 + 12.0 * NACA_A2 * t2 + 30.0 * NACA_A3 * t2 * t2
            + 56.0 * NACA_A4 * t2 * t2 * t2;
        let mut y = scale * (NACA_A0 * t + side * even);
        let mut y_d = scale * (NACA_A0 + side * even_d);
        let mut y_dd = scale * side * even_dd;

        if camber > 0.0 {
            let x = t2;
            let (yc, yc1, yc2) = if x < camber_pos {
                let k = camber / (camber_pos * camber_pos);
                (k * (2.0 * camber_pos * x - x * x), k * (2.0 * camber_pos - 2.0 * x), -2.0 * k)
            } else {
                let k = camber / ((1.0 - camber_pos) * (1.0 - camber_pos));
                (
                    k * ((1.0 - 2.0 * camber_pos) + 2.0 * camber_pos * x - x * x),
                    k * (2.0 * camber_pos - 2.0 * x),
                    -2.0 * k,
                )
            };
            y += yc;
            y_d += yc1 * 2.0 * t;
            y_dd += yc2 * 4.0 * t2 + 2.0 * yc1;
        }

        (
            Vector3::new(chord * t2, chord * y, 0.0),
            Vector3::new(2.0 * chord * t, chord * y_d, 0.0),
            Vector3::new(2.0 * chord, chord * y_dd, 0.0),
        )
    }

    /// Frenet frame at `a(t)`: unit tangent, normal (90-degree rotation of the
    /// tangent in 2D, normalized curvature direction in 3D) and, in 3D, the
    /// binormal `t x n`.
    pub fn frenet(&self, t: f64) -> Result<FrenetFrame> {
        let v = self.eval_d1(t)?;
        let speed = v.norm();
        if speed <= TANGENT_EPS {
            return Err(Error::DegenerateTangent { t });
        }
        let tangent = v / speed;
        if self.dim == 2 {
            return Ok(FrenetFrame {
                tangent,
                normal: Vector3::new(-tangent.y, tangent.x, 0.0),
                binormal: None,
            });
        }
        let acc = self.eval_d2(t)?;
        let perp = acc - tangent * acc.dot(&tangent);
        let curvature = perp.norm() / (speed * speed);
        if curvature <= CURVATURE_EPS {
            return Err(Error::DegenerateNormal { t });
        }
        let normal = perp / perp.norm();
        Ok(FrenetFrame { tangent, normal, binormal: Some(tangent.cross(&normal)) })
    }

    /// `integral of |a'|` over `[t0, t1]` by adaptive Gauss quadrature,
    /// relative tolerance 1e-10.
    pub fn arc_length(&self, t0: f64, t1: f64) -> Result<f64> {
        let t0 = self.clamp_param(t0)?;
        let t1 = self.clamp_param(t1)?;
        if t1 < t0 {
            return Err(Error::Spec(format!("arc_length needs t0 <= t1, got [{t0}, {t1}]")));
        }
        if t0 == t1 {
            return Ok(0.0);
        }
        let speed = |t: f64| self.eval_d1(t).map(|v| v.norm());
        let rough = gauss15(&speed, t0, t1)?;
        adaptive_quad(&speed, t0, t1, rough, 1e-10 * rough.abs().max(1e-300), 0)
    }

    /// True when the sampled curve is a straight segment (or a single point);
    /// such curves are excluded from optimization since linear meshes already
    /// represent them exactly.
    pub fn is_line(&self) -> bool {
        const SAMPLES: usize = 65;
        let (lo, hi) = self.domain;
        let pts: Vec<Vector3<f64>> = (0..SAMPLES)
            .map(|i| {
                let t = lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64;
                self.eval(t).expect("interior samples are in-domain")
            })
            .collect();
        let far_from = |origin: &Vector3<f64>| {
            pts.iter()
                .enumerate()
                .max_by(|a, b| {
                    let da = (a.1 - origin).norm_squared();
                    let db = (b.1 - origin).norm_squared();
                    da.total_cmp(&db)
                })
                .map(|(i, _)| i)
                .unwrap()
        };
        let i = far_from(&pts[0]);
        let j = far_from(&pts[i]);
        let diameter = (pts[i] - pts[j]).norm();
        if diameter < 1e-13 * (1.0 + pts[0].norm()) {
            return true; // degenerate point
        }
        let axis = (pts[j] - pts[i]) / diameter;
        pts.iter().all(|p| {
            let rel = p - pts[i];
            (rel - axis * rel.dot(&axis)).norm() <= 1e-10 * diameter
        })
    }
}

fn gauss15<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<f64> {
    // 15-point Gauss-Legendre nodes/weights on [-1, 1]
    const X: [f64; 8] = [
        0.0,
        0.2011940939974345,
        0.3941513470775634,
        0.5709721726085388,
        0.7244177313601701,
        0.8482065834104272,
        0.9372733924007060,
        0.9879925180204854,
    ];
    const W: [f64; 8] = [
        0.2025782419255613,
        0.1984314853271116,
        0.1861610000155622,
        0.1662692058169939,
        0.1395706779261543,
        0.1071592204671719,
        0.0703660474881081,
        0.0307532419961173,
    ];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = W[0] * f(mid)?;
    for k in 1..8 {
        sum += W[k] * (f(mid - half * X[k])? + f(mid + half * X[k])?);
    }
    Ok(sum * half)
}

fn adaptive_quad<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> Result<f64> {
    let mid = 0.5 * (a + b);
    let left = gauss15(f, a, mid)?;
    let right = gauss15(f, mid, b)?;
    let refined = left + right;
    if (refined - whole).abs() <= tol || depth >= 30 {
        return Ok(refined);
    }
    Ok(adaptive_quad(f, a, mid, left, 0.5 * tol, depth + 1)?
        + adaptive_quad(f, mid, b, right, 0.5 * tol, depth + 1)?)
}
