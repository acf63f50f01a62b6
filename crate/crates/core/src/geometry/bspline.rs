//! B-spline curves evaluated by the de Boor recursion, with first and second
//! derivatives obtained from the derivative control nets.

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BSpline {
    degree: usize,
    knots: Vec<f64>,
    ctrl: Vec<Vector3<f64>>,
    dim: usize,
    deriv: Option<Box<BSpline>>,
}

impl BSpline {
    /// Builds a spline and its first two derivative nets.
    ///
    /// Requires at least `degree + 1` control points and a nondecreasing knot
    /// vector of length `ctrl.len() + degree + 1`.
    pub fn new(ctrl: Vec<Vector3<f64>>, knots: Vec<f64>, degree: usize, dim: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::Spec("b-spline degree must be at least 1".into()));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::Spec(format!("b-spline dimension must be 2 or 3, got {dim}")));
        }
        if ctrl.len() < degree + 1 {
            return Err(Error::Spec(format!(
                "b-spline of degree {degree} needs at least {} control points, got {}",
                degree + 1,
                ctrl.len()
            )));
        }
        if knots.len() != ctrl.len() + degree + 1 {
            return Err(Error::Spec(format!(
                "knot vector length {} does not match {} control points + degree {} + 1",
                knots.len(),
                ctrl.len(),
                degree
            )));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Spec("knot vector must be nondecreasing".into()));
        }
        let mut spline = BSpline { degree, knots, ctrl, dim, deriv: None };
        spline.deriv = Some(Box::new(spline.derivative()));
        if let Some(d1) = spline.deriv.as_mut() {
            d1.deriv = Some(Box::new(d1.derivative()));
        }
        Ok(spline)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parameter interval on which the spline has a full basis.
    pub fn valid_span(&self) -> (f64, f64) {
        (self.knots[self.degree], self.knots[self.ctrl.len()])
    }

    fn derivative(&self) -> BSpline {
        if self.degree == 0 {
            // derivative of a piecewise constant: identically zero
            return BSpline {
                degree: 0,
                knots: self.knots.clone(),
                ctrl: vec![Vector3::zeros(); self.ctrl.len()],
                dim: self.dim,
                deriv: None,
            };
        }
        let p = self.degree as f64;
        let mut ctrl = Vec::with_capacity(self.ctrl.len() - 1);
        for i in 0..self.ctrl.len() - 1 {
            let span = self.knots[i + self.degree + 1] - self.knots[i + 1];
            if span > 0.0 {
                ctrl.push((self.ctrl[i + 1] - self.ctrl[i]) * (p / span));
            } else {
                // repeated knots: the associated basis function is zero there
                ctrl.push(Vector3::zeros());
            }
        }
        let knots = self.knots[1..self.knots.len() - 1].to_vec();
        BSpline { degree: self.degree - 1, knots, ctrl, dim: self.dim, deriv: None }
    }

    /// Knot span index `j` with `knots[j] <= t < knots[j+1]`, clamped so the
    /// right endpoint lands in the last nonempty span.
    fn find_span(&self, t: f64) -> usize {
        let lo = self.degree;
        let hi = self.ctrl.len(); // valid spans live in [knots[lo], knots[hi]]
        if t >= self.knots[hi] {
            let mut j = hi - 1;
            while j > lo && self.knots[j] == self.knots[j + 1] {
                j -= 1;
            }
            return j;
        }
        if t <= self.knots[lo] {
            let mut j = lo;
            while j + 1 < hi && self.knots[j] == self.knots[j + 1] {
                j += 1;
            }
            return j;
        }
        // binary search over [lo, hi)
        let (mut a, mut b) = (lo, hi);
        while b - a > 1 {
            let mid = (a + b) / 2;
            if t < self.knots[mid] {
                b = mid;
            } else {
                a = mid;
            }
        }
        a
    }

    pub fn eval(&self, t: f64) -> Vector3<f64> {
        let p = self.degree;
        let j = self.find_span(t);
        if p == 0 {
            return self.ctrl[j];
        }
        let mut d: Vec<Vector3<f64>> = (0..=p).map(|r| self.ctrl[j - p + r]).collect();
        for r in 1..=p {
            for i in (r..=p).rev() {
                let gi = j - p + i;
                let den = self.knots[gi + p - r + 1] - self.knots[gi];
                let alpha = if den > 0.0 { (t - self.knots[gi]) / den } else { 0.0 };
                d[i] = d[i - 1] * (1.0 - alpha) + d[i] * alpha;
            }
        }
        d[p]
    }

    pub fn eval_with_derivs(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let pos = self.eval(t);
        let d1 = self.deriv.as_ref().map(|s| s.eval(t)).unwrap_or_else(Vector3::zeros);
        let d2 = self
            .deriv
            .as_ref()
            .and_then(|s| s.deriv.as_ref())
            .map(|s| s.eval(t))
            .unwrap_or_else(Vector3::zeros);
        (pos, d1, d2)
    }

    pub fn eval_d1(&self, t: f64) -> Vector3<f64> {
        self.deriv.as_ref().map(|s| s.eval(t)).unwrap_or_else(Vector3::zeros)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clamped_knots(n_ctrl: usize, degree: usize) -> Vec<f64> {
        let interior = n_ctrl - degree - 1;
        let mut knots = vec![0.0; degree + 1];
        for i in 1..=interior {
            knots.push(i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        knots
    }

    #[test]
    fn interpolates_clamped_endpoints() {
        let ctrl = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 2.0, 0.0),
            Vector3::new(2.0, -1.0, 0.0),
            Vector3::new(3.0, 0.5, 0.0),
        ];
        let spline = BSpline::new(ctrl.clone(), clamped_knots(4, 3), 3, 2).unwrap();
        assert!((spline.eval(0.0) - ctrl[0]).norm() < 1e-14);
        assert!((spline.eval(1.0) - ctrl[3]).norm() < 1e-14);
    }

    #[test]
    fn rejects_short_control_polygon() {
        let ctrl = vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)];
        let err = BSpline::new(ctrl, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2, 2).unwrap_err();
        assert!(matches!(err, Error::Spec(_)));
    }

    #[test]
    fn rejects_bad_knot_vector() {
        let ctrl = vec![
            Vector3::zeros(),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(2.0, 0.0, 0.0),
        ];
        assert!(BSpline::new(ctrl.clone(), vec![0.0; 5], 2, 2).is_err());
        let decreasing = vec![0.0, 0.0, 0.0, 1.0, 0.5, 1.0];
        assert!(BSpline::new(ctrl, decreasing, 2, 2).is_err());
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let ctrl = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 2.0, 0.3),
            Vector3::new(2.0, -1.0, -0.2),
            Vector3::new(3.0, 0.5, 0.4),
            Vector3::new(4.0, 1.5, 0.0),
        ];
        let spline = BSpline::new(ctrl, clamped_knots(5, 3), 3, 3).unwrap();
        let h = 1e-6;
        for &t in &[0.11, 0.37, 0.53, 0.82] {
            let fd = (spline.eval(t + h) - spline.eval(t - h)) / (2.0 * h);
            let (_, d1, _) = spline.eval_with_derivs(t);
            assert!((fd - d1).norm() < 1e-7 * (1.0 + d1.norm()), "t = {t}");
        }
    }
}
