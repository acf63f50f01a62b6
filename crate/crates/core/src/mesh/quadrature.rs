//! Gauss-Legendre quadrature on the reference interval [-1, 1].

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Default point count per element for the disparity integrals.
///
/// The integrand contains the non-polynomial composition `a(s(xi))` and the
/// weight `|dx/dxi|`, so polynomial-exactness arguments do not apply; this
/// order is validated by the point-doubling invariant in the tests.
pub fn default_points(p: usize, q: usize) -> usize {
    (2 * (p + q) + 2).max(20)
}

/// Standard Gauss-Legendre rule with `n` points, `1 <= n <= 128`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    if n == 0 || n > 128 {
        return Err(Error::Spec(format!("gauss_legendre supports 1..=128 points, got {n}")));
    }
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    // Newton iteration on P_n from Chebyshev initial guesses; one half of the
    // rule is computed and mirrored so symmetry is exact.
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p_n, p_nm1) = legendre_pair(n, x);
            let dp = n as f64 * (x * p_n - p_nm1) / (x * x - 1.0);
            let step = p_n / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let (p_n, p_nm1) = legendre_pair(n, x);
        let dp = n as f64 * (x * p_n - p_nm1) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // guesses start near +1 and walk toward the middle
        points[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        points[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = 0.0;
    }
    Ok(QuadratureRule { points, weights })
}

/// `(P_n(x), P_{n-1}(x))` by the three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule_is_midpoint() {
        let rule = gauss_legendre(1).unwrap();
        assert_eq!(rule.points(), &[0.0]);
        assert_eq!(rule.weights(), &[2.0]);
    }

    #[test]
    fn two_point_rule_classical_values() {
        let rule = gauss_legendre(2).unwrap();
        let x = 1.0 / 3f64.sqrt();
        assert!((rule.points()[0] + x).abs() < 1e-15);
        assert!((rule.points()[1] - x).abs() < 1e-15);
        assert!((rule.weights()[0] - 1.0).abs() < 1e-15);
        assert!((rule.weights()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn twenty_points_integrate_degree_38_exactly() {
        let rule = gauss_legendre(20).unwrap();
        let value: f64 = rule.iter().map(|(x, w)| w * x.powi(38)).sum();
        assert!((value - 2.0 / 39.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 3, 5, 8, 16, 33, 64, 128] {
            let rule = gauss_legendre(n).unwrap();
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-13, "n = {n}: sum = {sum}");
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert!(rule.points().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn out_of_range_is_an_error() {
        assert!(gauss_legendre(0).is_err());
        assert!(gauss_legendre(129).is_err());
    }
}
