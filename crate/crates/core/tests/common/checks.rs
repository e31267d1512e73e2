//! Seeded invariant and oracle checks, shared by the proptest suite and the
//! acceptance runner. Each returns a description of the first violation.

use ddfem::assembly::{apply_dirichlet, assemble_b, assemble_dd_matrix, element_stiffness, ProblemSpec, ScalarField, VelocityField};
use ddfem::analysis::{compute_errors, find_case};
use ddfem::dd::{compute_xi, DdContext};
use ddfem::mesh::Mesh;
use ddfem::spaces::{quadrature_rule, DofMap, FieldCoefficients, QuadratureRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dd_form_oracle, norms_oracle, random_field, random_mesh, rel_close, xi_oracle, XiCase};

pub type Check = Result<(), String>;

fn rule() -> QuadratureRule {
    quadrature_rule(6).unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn random_problem(rng: &mut ChaCha8Rng) -> ProblemSpec {
    let eps = 10f64.powf(rng.gen_range(-6.0..1.0));
    let beta = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
    let sigma = rng.gen_range(0.0..2.0);
    let (c0, c1, c2) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    ProblemSpec::new(
        eps,
        VelocityField::Constant(beta),
        ScalarField::Constant(sigma),
        ScalarField::function(move |p| c0 + c1 * p[0] + c2 * p[1] * p[1]),
    )
    .unwrap()
}

/// Extended-space vector (free nodal, bubbles, constrained nodal) of `u`.
pub fn extended(mesh: &Mesh, dofs: &DofMap, u: &FieldCoefficients) -> Vec<f64> {
    let mut x = vec![0.0; dofs.extended_dofs()];
    for v in 0..mesh.num_vertices() {
        x[dofs.extended_nodal(v)] = u.nodal[v];
    }
    for t in 0..mesh.num_elements() {
        x[dofs.bubble_dof(t)] = u.bubble[t];
    }
    x
}

pub fn xi_bounds(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_mesh(&mut rng);
    let problem = random_problem(&mut rng);
    let mut w = random_field(&mut rng, &mesh);
    for v in w.nodal.iter_mut() {
        *v *= 10f64.powf(rng.gen_range(-3.0..3.0));
    }
    let ctx = DdContext::new(&problem, &mesh, &rule()).unwrap();
    let coeffs = ctx.evaluate(&mesh, &w);
    for t in 0..mesh.num_elements() {
        let h = mesh.element_geometry(t).unwrap().diameter;
        let xi = coeffs.xi[t];
        ensure(xi >= 0.0 && xi <= h, || format!("ξ={xi} outside [0, {h}]"))?;
        ensure(coeffs.peclet[t] > 1.0 || xi == 0.0, || format!("ξ={xi} with Pe={}", coeffs.peclet[t]))?;
    }
    Ok(())
}

pub fn bubble_invariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_mesh(&mut rng);
    let problem = random_problem(&mut rng);
    let w = random_field(&mut rng, &mesh);
    let t = rng.gen_range(0..mesh.num_elements());
    let with = compute_xi(&problem, &mesh, t, &w, &rule()).unwrap();
    let without = compute_xi(&problem, &mesh, t, &w.coarse(), &rule()).unwrap();
    ensure(with == without, || format!("{with:?} != {without:?}"))
}

pub fn dd_positive_semidefinite(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_mesh(&mut rng);
    let dofs = DofMap::new(&mesh);
    let xi: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.gen_range(0.0..0.5)).collect();
    let a = assemble_dd_matrix(&xi, &mesh, &dofs, &rule()).unwrap();
    let v: Vec<f64> = (0..a.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let q = a.quadratic_form(&v);
    let scale = a.values().iter().map(|x| x.abs()).sum::<f64>() * v.iter().map(|x| x * x).sum::<f64>();
    ensure(q >= -1e-13 * scale.max(1.0), || format!("vᵀAv = {q}"))
}

/// a(w; v, v) ≥ ε|v|₁² + γ‖v‖₀² + Σ_T ξ_T |v|²_{1,T} for v vanishing on ∂Ω.
pub fn coercivity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_mesh(&mut rng);
    let problem = random_problem(&mut rng);
    let dofs = DofMap::new(&mesh);
    let xi: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.gen_range(0.0..0.3)).collect();
    let base = assemble_b(&problem, &mesh, &dofs, &rule()).unwrap();
    let dd = assemble_dd_matrix(&xi, &mesh, &dofs, &rule()).unwrap();
    let lift = vec![0.0; dofs.constrained_vertices().len()];
    let reduced = apply_dirichlet(&base.with_added(&dd).unwrap(), &lift).unwrap();
    let v = random_field(&mut rng, &mesh);
    let q = reduced.matrix.quadratic_form(&v.to_reduced(&dofs));
    let (l2, h1) = norms_oracle(&mesh, &v);
    let gamma = problem.gamma_value(&mesh, &rule()).unwrap();
    let lower = problem.epsilon * h1 + gamma * l2 + dd_form_oracle(&mesh, &xi, &v);
    ensure(q >= lower * (1.0 - 1e-10) - 1e-14, || format!("{q} < {lower}"))
}

pub fn bubble_orthogonality(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_mesh(&mut rng);
    for t in 0..mesh.num_elements() {
        let k = element_stiffness(&mesh.element_geometry(t).unwrap(), &rule());
        for i in 0..3 {
            ensure(k[i][3].abs() <= 1e-13 && k[3][i].abs() <= 1e-13, || format!("element {t}: {}", k[i][3]))?;
        }
    }
    Ok(())
}

pub fn star_identity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mesh = random_mesh(&mut rng);
    let eps = rng.gen_range(1e-3..2.0);
    let sigma = rng.gen_range(0.0..2.0);
    let problem = find_case("example1").unwrap().problem(eps, sigma).unwrap();
    let u = random_field(&mut rng, &mesh);
    let xi: Vec<f64> = (0..mesh.num_elements()).map(|_| rng.gen_range(0.0..0.3)).collect();
    let e = compute_errors(&problem, &mesh, &u, &xi).unwrap();
    let energy_sq = eps * e.h1_semi.powi(2) + sigma * e.l2.powi(2);
    ensure(rel_close(e.energy.powi(2), energy_sq, 1e-12), || format!("energy² {} vs {energy_sq}", e.energy.powi(2)))?;
    ensure(rel_close(e.star.powi(2), e.energy.powi(2) + e.dissipation, 1e-12), || "star² ≠ energy² + dissipation".into())?;
    let oracle = dd_form_oracle(&mesh, &xi, &u);
    ensure(rel_close(e.dissipation, oracle, 1e-12), || format!("dissipation {} vs {oracle}", e.dissipation))
}

/// Relative discrepancies (ξ, DD form) of one random triple against the
/// brute-force oracles.
pub fn oracle_triple(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let rule = rule();
    let mesh = random_mesh(rng);
    let eps = 10f64.powf(rng.gen_range(-6.0..0.0));
    let beta = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
    let sigma = rng.gen_range(0.0..2.0);
    let c: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
    let f = move |p: [f64; 2]| c[0] + c[1] * p[0] + c[2] * p[1] + c[3] * p[0] * p[1];
    let problem = ProblemSpec::new(eps, VelocityField::Constant(beta), ScalarField::Constant(sigma), ScalarField::function(f)).unwrap();
    let u = random_field(rng, &mesh);
    let t = rng.gen_range(0..mesh.num_elements());
    let verts = mesh.triangles()[t].map(|i| mesh.vertices()[i]);
    let w = mesh.triangles()[t].map(|i| u.nodal[i]);
    let case = XiCase {
        epsilon: eps,
        beta,
        sigma,
        source: &f,
    };
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };

    let xi_err = rel(compute_xi(&problem, &mesh, t, &u, &rule).unwrap().xi, xi_oracle(&case, &verts, w));

    let xi = DdContext::new(&problem, &mesh, &rule).unwrap().evaluate(&mesh, &u).xi;
    let dofs = DofMap::new(&mesh);
    let a = assemble_dd_matrix(&xi, &mesh, &dofs, &rule).unwrap();
    let form_err = rel(a.quadratic_form(&extended(&mesh, &dofs, &u)), dd_form_oracle(&mesh, &xi, &u));
    (xi_err, form_err)
}
