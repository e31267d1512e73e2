//! Positive-weight quadrature on triangles and edges.
//!
//! Triangle rules are collapsed (Duffy) tensor products of Gauss-Legendre
//! rules: the square `[0,1]²` is mapped onto the reference triangle by
//! `(s, t) ↦ (s, (1 - s) t)`, whose Jacobian `1 - s` raises the degree in `s`
//! by one. An `m`-point Gauss-Legendre rule is exact to degree `2m - 1`, so
//! `m = ⌈(p + 2) / 2⌉` points per direction integrate total degree `p`.

use crate::{Error, Result};

/// Highest triangle rule degree on offer.
pub const MAX_DEGREE: usize = 10;

/// A rule on the reference triangle in barycentric coordinates.
///
/// Weights sum to one, so `∫_T g ≈ |T| Σ_q w_q g(x_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; 3], f64)> + '_ {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

/// Returns a positive-weight triangle rule exact for polynomials of total
/// degree at least `min_degree`.
pub fn quadrature_rule(min_degree: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_DEGREE).contains(&min_degree) {
        return Err(Error::UnsupportedQuadrature(min_degree));
    }
    let m = (min_degree + 3) / 2;
    let (nodes, weights) = gauss_legendre_unit(m);
    let mut points = Vec::with_capacity(m * m);
    let mut rule_weights = Vec::with_capacity(m * m);
    for (&s, &ws) in nodes.iter().zip(&weights) {
        for (&t, &wt) in nodes.iter().zip(&weights) {
            let xi = s;
            let eta = (1.0 - s) * t;
            points.push([1.0 - xi - eta, xi, eta]);
            // reference area 1/2 folded in so the weights sum to one
            rule_weights.push(2.0 * ws * wt * (1.0 - s));
        }
    }
    Ok(QuadratureRule {
        points,
        weights: rule_weights,
        exactness_degree: 2 * m - 2,
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`, weights summing to one.
pub fn gauss_legendre_unit(m: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(m);
    (
        x.iter().map(|&xi| 0.5 * (xi + 1.0)).collect(),
        w.iter().map(|&wi| 0.5 * wi).collect(),
    )
}

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]` by Newton
/// iteration on the Legendre polynomial.
fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(m, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    if m % 2 == 1 {
        nodes[m / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(m: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = m as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
