//! Brute-force reference computations shared by the integration tests.
//!
//! Nothing here goes through the crate's quadrature, basis or geometry code:
//! points come from a hard-coded 5-point Gauss-Legendre rule collapsed onto
//! each triangle, and basis gradients are rebuilt from vertex coordinates.

#![allow(dead_code)]

pub mod checks;

use ddfem::mesh::{Diagonal, Mesh};
use ddfem::spaces::FieldCoefficients;
use ddfem::Point;
use rand::Rng;

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

pub fn area(v: &[Point; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

pub fn diameter(v: &[Point; 3]) -> f64 {
    let d = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    d(v[0], v[1]).max(d(v[1], v[2])).max(d(v[2], v[0]))
}

/// Points and absolute weights of a collapsed 5×5 Gauss rule on the triangle
/// (exact for total degree 8).
pub fn points(v: &[Point; 3]) -> Vec<(Point, f64)> {
    let a = area(v);
    let mut out = Vec::with_capacity(25);
    for (xs, ws) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
        let s = 0.5 * (xs + 1.0);
        for (xt, wt) in GL5_NODES.iter().zip(GL5_WEIGHTS) {
            let t = 0.5 * (xt + 1.0);
            let (a1, a2) = (s, (1.0 - s) * t);
            let p = [
                v[0][0] + a1 * (v[1][0] - v[0][0]) + a2 * (v[2][0] - v[0][0]),
                v[0][1] + a1 * (v[1][1] - v[0][1]) + a2 * (v[2][1] - v[0][1]),
            ];
            out.push((p, 2.0 * a * 0.25 * ws * wt * (1.0 - s)));
        }
    }
    out
}

/// Barycentric coordinates by Cramer's rule.
pub fn barycentric(v: &[Point; 3], p: Point) -> [f64; 3] {
    let a = area(v);
    let sub = |q0: Point, q1: Point, q2: Point| area(&[q0, q1, q2]);
    [sub(p, v[1], v[2]) / a, sub(v[0], p, v[2]) / a, sub(v[0], v[1], p) / a]
}

/// Gradients of the barycentric coordinates.
pub fn grad_lambda(v: &[Point; 3]) -> [Point; 3] {
    let a2 = 2.0 * area(v);
    [0, 1, 2].map(|i| {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        [(v[j][1] - v[k][1]) / a2, (v[k][0] - v[j][0]) / a2]
    })
}

/// Value and gradient of `w1 λ1 + w2 λ2 + w3 λ3 + c · 27 λ1 λ2 λ3` at `p`.
pub fn eval(v: &[Point; 3], w: [f64; 4], p: Point) -> (f64, Point) {
    let l = barycentric(v, p);
    let g = grad_lambda(v);
    let mut value = w[0] * l[0] + w[1] * l[1] + w[2] * l[2] + w[3] * 27.0 * l[0] * l[1] * l[2];
    let mut grad = [0.0; 2];
    for d in 0..2 {
        grad[d] = w[0] * g[0][d]
            + w[1] * g[1][d]
            + w[2] * g[2][d]
            + w[3] * 27.0 * (g[0][d] * l[1] * l[2] + l[0] * g[1][d] * l[2] + l[0] * l[1] * g[2][d]);
    }
    if value.abs() < 1e-300 {
        value = 0.0;
    }
    (value, grad)
}

/// Constant-coefficient problem data for the ξ oracle.
pub struct XiCase<'a> {
    pub epsilon: f64,
    pub beta: Point,
    pub sigma: f64,
    pub source: &'a dyn Fn(Point) -> f64,
}

/// ξ_T for constant β and σ, computed from scratch.
pub fn xi_oracle(case: &XiCase, v: &[Point; 3], w: [f64; 3]) -> f64 {
    let a = area(v);
    let h = diameter(v);
    let beta_norm = case.beta[0].hypot(case.beta[1]);
    let peclet = beta_norm * a.sqrt() * h / (2.0 * case.epsilon);
    if peclet <= 1.0 {
        return 0.0;
    }
    let (mut r2, mut w2, mut f2, mut g2) = (0.0, 0.0, 0.0, 0.0);
    for (p, wt) in points(v) {
        let (value, grad) = eval(v, [w[0], w[1], w[2], 0.0], p);
        let f = (case.source)(p);
        let r = case.beta[0] * grad[0] + case.beta[1] * grad[1] + case.sigma * value - f;
        r2 += wt * r * r;
        w2 += wt * value * value;
        f2 += wt * f * f;
        g2 += wt * (grad[0] * grad[0] + grad[1] * grad[1]);
    }
    let a_t = beta_norm * g2.sqrt() + case.sigma.abs() * w2.sqrt();
    let tau = if f2.sqrt() > 0.0 { f2.sqrt() } else { 1.0 };
    h * r2.sqrt() / (a_t + tau)
}

/// `Σ_T ξ_T ∫_T |∇v_hb|²` by brute-force quadrature.
pub fn dd_form_oracle(mesh: &Mesh, xi: &[f64], u: &FieldCoefficients) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = tri.map(|i| mesh.vertices()[i]);
        let w = [u.nodal[tri[0]], u.nodal[tri[1]], u.nodal[tri[2]], u.bubble[t]];
        let mut e = 0.0;
        for (p, wt) in points(&v) {
            let (_, g) = eval(&v, w, p);
            e += wt * (g[0] * g[0] + g[1] * g[1]);
        }
        total += xi[t] * e;
    }
    total
}

/// `(‖v‖₀², |v|₁²)` by brute-force quadrature.
pub fn norms_oracle(mesh: &Mesh, u: &FieldCoefficients) -> (f64, f64) {
    let (mut l2, mut h1) = (0.0, 0.0);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let v = tri.map(|i| mesh.vertices()[i]);
        let w = [u.nodal[tri[0]], u.nodal[tri[1]], u.nodal[tri[2]], u.bubble[t]];
        for (p, wt) in points(&v) {
            let (value, g) = eval(&v, w, p);
            l2 += wt * value * value;
            h1 += wt * (g[0] * g[0] + g[1] * g[1]);
        }
    }
    (l2, h1)
}

/// Unit-square mesh with a random size and diagonal, interior vertices jiggled.
pub fn random_mesh<R: Rng>(rng: &mut R) -> Mesh {
    let n = rng.gen_range(1..=6);
    let diagonal = if rng.gen_bool(0.5) {
        Diagonal::SouthWestNorthEast
    } else {
        Diagonal::NorthWestSouthEast
    };
    let base = Mesh::unit_square(n, diagonal).unwrap();
    let h = 1.0 / n as f64;
    let vertices = base
        .vertices()
        .iter()
        .map(|&[x, y]| {
            let interior = x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0;
            if interior {
                [x + rng.gen_range(-0.2..0.2) * h, y + rng.gen_range(-0.2..0.2) * h]
            } else {
                [x, y]
            }
        })
        .collect();
    Mesh::from_parts(vertices, base.triangles().to_vec()).unwrap()
}

/// Random nodal and bubble coefficients, zero on the boundary.
pub fn random_field<R: Rng>(rng: &mut R, mesh: &Mesh) -> FieldCoefficients {
    let dirichlet = mesh.dirichlet_vertices();
    FieldCoefficients {
        nodal: dirichlet
            .iter()
            .map(|&d| if d { 0.0 } else { rng.gen_range(-1.0..1.0) })
            .collect(),
        bubble: (0..mesh.num_elements()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
