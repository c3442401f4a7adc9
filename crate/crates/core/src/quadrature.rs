//! Fixed-order Gauss-Legendre rules.

use alloc::vec::Vec;
use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};

/// An `n`-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre rule needs at least one node");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            // Tricomi's initial guess, then Newton on P_n.
            let k = i as f64 + 1.0;
            let mut x = (PI * (k - 0.25) / (nf + 0.5)).cos()
                * (1.0 - (nf - 1.0) / (8.0 * nf * nf * nf));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.on(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Node counts for the region integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub nodes_radial: usize,
    pub nodes_angular: usize,
    pub nodes_phase: usize,
    /// Re-evaluate with every node count doubled and fail if results move by more than
    /// `tolerance` (relative).
    pub check_convergence: bool,
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_radial: 32,
            nodes_angular: 32,
            nodes_phase: 32,
            check_convergence: true,
            tolerance: 1e-6,
        }
    }
}

impl QuadratureSpec {
    pub fn uniform(nodes: usize) -> Self {
        Self {
            nodes_radial: nodes,
            nodes_angular: nodes,
            nodes_phase: nodes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_radial < 4 || self.nodes_angular < 4 || self.nodes_phase < 4 {
            return Err(invalid("quadrature", "every axis needs at least 4 nodes"));
        }
        if !(self.tolerance > 0.0) {
            return Err(invalid("quadrature.tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn doubled(&self) -> Self {
        Self {
            nodes_radial: 2 * self.nodes_radial,
            nodes_angular: 2 * self.nodes_angular,
            nodes_phase: 2 * self.nodes_phase,
            check_convergence: false,
            tolerance: self.tolerance,
        }
    }

    pub fn unchecked(mut self) -> Self {
        self.check_convergence = false;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_two() {
        for n in [1, 2, 3, 7, 32, 64, 128] {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.on(-1.0, 1.0).map(|(_, w)| w).sum();
            assert_relative_eq!(s, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(5);
        for d in 0..10 {
            let got = gl.integrate(0.0, 2.0, |x| x.powi(d));
            let want = 2f64.powi(d + 1) / (d as f64 + 1.0);
            assert_relative_eq!(got, want, max_relative = 1e-13);
        }
    }

    #[test]
    fn three_point_rule_matches_closed_form() {
        let gl = GaussLegendre::new(3);
        let pts: Vec<_> = gl.on(-1.0, 1.0).collect();
        assert_relative_eq!(pts[0].0, -(0.6f64).sqrt(), epsilon = 1e-15);
        assert_relative_eq!(pts[1].0, 0.0, epsilon = 1e-15);
        assert_relative_eq!(pts[0].1, 5.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(pts[1].1, 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn smooth_integrand_converges() {
        let gl = GaussLegendre::new(32);
        let got = gl.integrate(0.0, 1.5, |x| x.exp() * x.cos());
        let anti = |x: f64| x.exp() * (x.cos() + x.sin()) / 2.0;
        assert_relative_eq!(got, anti(1.5) - anti(0.0), max_relative = 1e-14);
    }

    #[test]
    fn spec_rejects_tiny_rules() {
        assert!(QuadratureSpec::uniform(3).validate().is_err());
        assert!(QuadratureSpec::default().validate().is_ok());
    }
}
