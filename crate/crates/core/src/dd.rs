//! The dynamic-diffusion nonlinearity and its fixed-point solver.
//!
//! On every element with Péclet number above one the artificial diffusivity is
//!
//! ```text
//! ξ_T(w_h) = h_T ‖R(w_h)‖_{0,T} / (A_T(w_h) + τ)
//! R(w_h)   = β·∇w_h + σ w_h − f
//! A_T(w_h) = ‖β‖_{0,∞,T} |w_h|_{1,T} + ‖σ‖_{0,∞,T} ‖w_h‖_{0,T}
//! τ        = ‖f‖_{0,T}, or 1 where f vanishes on T
//! ```
//!
//! and zero elsewhere, so `0 ≤ ξ_T ≤ h_T`. Only the coarse (P1) part of the
//! argument enters. The fixed point starts from SUPG and damps the update of
//! ξ element by element, freezing elements whose residual has settled.

use std::io::Write;

use serde::Serialize;

use crate::assembly::{self, assemble_b, assemble_dd_matrix, element_stiffness, sample, AssembledSystem, PointData, ProblemSpec};
use crate::linalg::{solve_with_residual, TripletBuffer};
use crate::mesh::{ElementGeometry, Mesh};
use crate::spaces::{quadrature_rule, DofMap, FieldCoefficients, LocalBasis, QuadratureRule, LOCAL_DOFS};
use crate::{Error, Result};

/// Relative threshold (against `1 + ‖f‖₀`) below which `f` counts as zero on an element.
pub const SOURCE_ZERO_THRESHOLD: f64 = 1e-14;

/// Relative change in the element residual norm under which ξ is frozen.
pub const FREEZING_THRESHOLD: f64 = 0.2;

/// Damping factor applied to elements that are not frozen.
pub const DAMPING: f64 = 0.5;

/// Pe_T = ‖β‖_{0,T} h_T / (2ε), with the L2 norm of β over T (area included).
pub fn compute_peclet(problem: &ProblemSpec, geometry: &ElementGeometry, rule: &QuadratureRule) -> f64 {
    let beta_sq: f64 = rule
        .iter()
        .map(|(b, w)| {
            let v = problem.beta.eval(geometry.point(*b));
            w * (v[0] * v[0] + v[1] * v[1])
        })
        .sum();
    (beta_sq * geometry.area).sqrt() * geometry.diameter / (2.0 * problem.epsilon)
}

/// ξ_T and the quantities it is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiParts {
    pub xi: f64,
    pub residual_norm: f64,
    pub a_t: f64,
    pub tau: f64,
    pub peclet: f64,
}

/// Data of one element that does not depend on the field.
#[derive(Debug, Clone)]
struct ElementData {
    geometry: ElementGeometry,
    points: Vec<PointData>,
    peclet: f64,
    beta_max: f64,
    sigma_max: f64,
    tau: f64,
}

/// Per-element coefficient samples for repeated ξ evaluation on one mesh.
#[derive(Debug, Clone)]
pub struct DdContext {
    rule: QuadratureRule,
    elements: Vec<ElementData>,
}

impl DdContext {
    pub fn new(problem: &ProblemSpec, mesh: &Mesh, rule: &QuadratureRule) -> Result<Self> {
        let mut elements = Vec::with_capacity(mesh.num_elements());
        let mut source_norms = Vec::with_capacity(mesh.num_elements());
        for geometry in mesh.geometries()? {
            let points = rule
                .points
                .iter()
                .map(|b| sample(problem, geometry.point(*b)))
                .collect::<Result<Vec<_>>>()?;
            let source_sq: f64 = points.iter().zip(&rule.weights).map(|(d, w)| w * d.source * d.source).sum();
            source_norms.push((source_sq * geometry.area).sqrt());
            let beta_max = points.iter().map(|d| d.beta[0].hypot(d.beta[1])).fold(0.0, f64::max);
            let sigma_max = points.iter().map(|d| d.sigma.abs()).fold(0.0, f64::max);
            let peclet = compute_peclet(problem, &geometry, rule);
            elements.push(ElementData {
                geometry,
                points,
                peclet,
                beta_max,
                sigma_max,
                tau: 0.0,
            });
        }
        let global_norm = source_norms.iter().map(|n| n * n).sum::<f64>().sqrt();
        let zero = SOURCE_ZERO_THRESHOLD * (1.0 + global_norm);
        for (e, norm) in elements.iter_mut().zip(source_norms) {
            e.tau = if norm > zero { norm } else { 1.0 };
        }
        Ok(Self {
            rule: rule.clone(),
            elements,
        })
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn peclet(&self, element: usize) -> f64 {
        self.elements[element].peclet
    }

    pub fn geometry(&self, element: usize) -> &ElementGeometry {
        &self.elements[element].geometry
    }

    /// ξ_T for the P1 field with vertex values `w` on `element`.
    pub fn xi(&self, element: usize, w: [f64; 3]) -> XiParts {
        let e = &self.elements[element];
        let g = &e.geometry;
        let grad = [
            w[0] * g.barycentric_gradients[0][0] + w[1] * g.barycentric_gradients[1][0] + w[2] * g.barycentric_gradients[2][0],
            w[0] * g.barycentric_gradients[0][1] + w[1] * g.barycentric_gradients[1][1] + w[2] * g.barycentric_gradients[2][1],
        ];
        let mut residual_sq = 0.0;
        let mut value_sq = 0.0;
        for ((b, weight), d) in self.rule.iter().zip(&e.points) {
            let value = w[0] * b[0] + w[1] * b[1] + w[2] * b[2];
            let r = d.beta[0] * grad[0] + d.beta[1] * grad[1] + d.sigma * value - d.source;
            residual_sq += weight * r * r;
            value_sq += weight * value * value;
        }
        let residual_norm = (residual_sq * g.area).sqrt();
        let h1_semi = grad[0].hypot(grad[1]) * g.area.sqrt();
        let a_t = e.beta_max * h1_semi + e.sigma_max * (value_sq * g.area).sqrt();
        let xi = if e.peclet > 1.0 {
            let raw = g.diameter * residual_norm / (a_t + e.tau);
            debug_assert!(raw <= g.diameter * (1.0 + 1e-10), "ξ = {raw} exceeds h_T = {}", g.diameter);
            raw.min(g.diameter)
        } else {
            0.0
        };
        XiParts {
            xi,
            residual_norm,
            a_t,
            tau: e.tau,
            peclet: e.peclet,
        }
    }

    /// ξ_T(κ_h w) on every element.
    pub fn evaluate(&self, mesh: &Mesh, w: &FieldCoefficients) -> DdCoefficients {
        let mut out = DdCoefficients::with_capacity(self.elements.len());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            out.push(self.xi(t, tri.map(|v| w.nodal[v])));
        }
        out
    }
}

/// ξ_T of `w` on a single element. The bubble part of `w` is ignored.
pub fn compute_xi(
    problem: &ProblemSpec,
    mesh: &Mesh,
    element: usize,
    w: &FieldCoefficients,
    rule: &QuadratureRule,
) -> Result<XiParts> {
    let ctx = DdContext::new(problem, mesh, rule)?;
    if element >= ctx.num_elements() {
        return Err(Error::ElementOutOfRange {
            index: element,
            count: ctx.num_elements(),
        });
    }
    Ok(ctx.xi(element, mesh.triangles()[element].map(|v| w.nodal[v])))
}

/// Per-element diffusivity data, stored column-wise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DdCoefficients {
    pub xi: Vec<f64>,
    pub residual_norm: Vec<f64>,
    pub a_t: Vec<f64>,
    pub tau: Vec<f64>,
    pub peclet: Vec<f64>,
}

impl DdCoefficients {
    fn with_capacity(n: usize) -> Self {
        Self {
            xi: Vec::with_capacity(n),
            residual_norm: Vec::with_capacity(n),
            a_t: Vec::with_capacity(n),
            tau: Vec::with_capacity(n),
            peclet: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, p: XiParts) {
        self.xi.push(p.xi);
        self.residual_norm.push(p.residual_norm);
        self.a_t.push(p.a_t);
        self.tau.push(p.tau);
        self.peclet.push(p.peclet);
    }

    /// All zero ξ, as used before the first iteration.
    pub fn zeros(n: usize) -> Self {
        Self {
            xi: vec![0.0; n],
            residual_norm: vec![0.0; n],
            a_t: vec![0.0; n],
            tau: vec![0.0; n],
            peclet: vec![0.0; n],
        }
    }
}

/// `Σ_T ξ_T ‖∇u_hb‖²_{0,T}`.
pub fn dissipation(xi: &[f64], mesh: &Mesh, u: &FieldCoefficients, rule: &QuadratureRule) -> Result<f64> {
    let mut total = 0.0;
    for (t, &x) in xi.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        let k = element_stiffness(&mesh.element_geometry(t)?, rule);
        let c = u.local(mesh, t);
        let mut energy = 0.0;
        for i in 0..LOCAL_DOFS {
            for j in 0..LOCAL_DOFS {
                energy += c[i] * k[i][j] * c[j];
            }
        }
        total += x * energy;
    }
    Ok(total)
}

/// (coth x − 1/x), with the series near zero.
fn langevin(x: f64) -> f64 {
    if x < 1e-4 {
        x / 3.0 - x * x * x / 45.0
    } else {
        1.0 / x.tanh() - 1.0 / x
    }
}

/// Streamline diffusion parameter `h_T / (2‖β‖_{0,∞,T}) · (coth Pe_T − 1/Pe_T)`,
/// zero where β vanishes.
pub fn supg_parameter(beta_max: f64, diameter: f64, peclet: f64) -> f64 {
    if beta_max == 0.0 || peclet == 0.0 {
        0.0
    } else {
        diameter / (2.0 * beta_max) * langevin(peclet)
    }
}

/// Solves the P1 SUPG problem; the bubble block of the result is zero.
pub fn supg_initialize(
    problem: &ProblemSpec,
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &QuadratureRule,
    lift: &[f64],
) -> Result<FieldCoefficients> {
    Ok(supg_solve(problem, mesh, dofs, rule, lift)?.0)
}

fn supg_solve(
    problem: &ProblemSpec,
    mesh: &Mesh,
    dofs: &DofMap,
    rule: &QuadratureRule,
    lift: &[f64],
) -> Result<(FieldCoefficients, f64)> {
    let n = dofs.extended_dofs();
    let mut buf = TripletBuffer::with_capacity(9 * mesh.num_elements());
    let mut rhs = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geometry = mesh.element_geometry(t)?;
        let (k, load) = assembly::element_system(problem, &geometry, rule)?;
        let beta_max = rule
            .points
            .iter()
            .map(|b| {
                let v = problem.beta.eval(geometry.point(*b));
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max);
        let tau = supg_parameter(beta_max, geometry.diameter, compute_peclet(problem, &geometry, rule));
        let mut local = [[0.0; 3]; 3];
        let mut local_load = [0.0; 3];
        for i in 0..3 {
            local_load[i] = load[i];
            for j in 0..3 {
                local[i][j] = k[i][j];
            }
        }
        if tau > 0.0 {
            for (b, w) in rule.iter() {
                let basis = LocalBasis::at(&geometry, *b);
                let d = sample(problem, geometry.point(*b))?;
                let jw = w * geometry.area * tau;
                let streamline = |k: usize| d.beta[0] * basis.gradients[k][0] + d.beta[1] * basis.gradients[k][1];
                for i in 0..3 {
                    let test = streamline(i);
                    for j in 0..3 {
                        local[i][j] += jw * (streamline(j) + d.sigma * basis.values[j]) * test;
                    }
                    local_load[i] += jw * d.source * test;
                }
            }
        }
        let idx = dofs.element_dofs(t, *tri);
        for i in 0..3 {
            rhs[idx[i]] += local_load[i];
            for j in 0..3 {
                buf.push(idx[i], idx[j], local[i][j]);
            }
        }
    }
    // SUPG is not applied to the Neumann term; its load is the Galerkin one.
    let neumann_only = AssembledSystem {
        matrix: TripletBuffer::new().compress(n)?,
        rhs: neumann_load(problem, mesh, dofs)?,
        dofs: dofs.clone(),
    };
    for (r, g) in rhs.iter_mut().zip(&neumann_only.rhs) {
        *r += g;
    }
    let matrix = buf.compress(n)?;
    let reduced = assembly::reduce(&matrix, &rhs, dofs, dofs.num_free_nodal(), lift)?;
    let sol = solve_with_residual(&reduced.matrix, &reduced.rhs)?;
    Ok((
        FieldCoefficients::from_reduced(mesh, dofs, &sol.x, lift)?,
        sol.relative_residual,
    ))
}

/// Neumann contribution alone, on the extended index space.
fn neumann_load(problem: &ProblemSpec, mesh: &Mesh, dofs: &DofMap) -> Result<Vec<f64>> {
    // Assembling B with zero interior data leaves only the boundary term.
    let boundary_only = ProblemSpec {
        source: assembly::ScalarField::Constant(0.0),
        ..problem.clone()
    };
    let rule = quadrature_rule(1)?;
    Ok(assemble_b(&boundary_only, mesh, dofs, &rule)?.rhs)
}

/// ω for one element: 0 when the residual norm moved by at most 20% since the
/// previous iterate (k ≥ 1), 0.5 otherwise.
pub fn damping_factor(k: usize, previous: f64, current: f64) -> f64 {
    if k >= 1 && (previous - current).abs() <= FREEZING_THRESHOLD * previous {
        0.0
    } else {
        DAMPING
    }
}

/// Whether the freezing test runs per element or on the aggregated residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FreezingMode {
    #[default]
    PerElement,
    /// One test on `(Σ_T ‖R‖²_{0,T})^{1/2}`, applied to all elements.
    Global,
    /// Always damp with ω = 0.5. The iteration then stops only near a true
    /// fixed point of the scheme, which may take far more than 30 steps.
    Never,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointConfig {
    /// Maximum number of nonlinear iterations (linear solves).
    pub max_iterations: usize,
    /// Tolerance on the relative max-norm increment of the nodal values.
    pub tolerance: f64,
    pub freezing: FreezingMode,
    pub assembly_degree: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            tolerance: 1e-6,
            freezing: FreezingMode::PerElement,
            assembly_degree: assembly::ASSEMBLY_DEGREE,
        }
    }
}

/// State carried between iterations.
#[derive(Debug, Clone)]
pub struct IterationState {
    pub k: usize,
    pub u: FieldCoefficients,
    /// ξ used for the most recent solve.
    pub xi: Vec<f64>,
    /// Element residual norms of the previous and the current iterate.
    pub residual_history: [Vec<f64>; 2],
}

/// One row of the iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub max_increment: f64,
    pub dissipation: f64,
    pub frozen_elements: usize,
    pub active_elements: usize,
    pub max_xi_over_h: f64,
    pub linear_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub final_increment: f64,
    pub records: Vec<IterationRecord>,
    /// Relative residual of the SUPG start.
    pub initial_linear_residual: f64,
}

impl SolveReport {
    pub fn max_linear_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.linear_residual)
            .fold(self.initial_linear_residual, f64::max)
    }

    /// Writes the trace as CSV: `k, max_increment, dissipation, frozen_elements, …`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        for r in &self.records {
            writer.serialize(r)?;
        }
        writer.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub u: FieldCoefficients,
    /// ξ of the last solve, with the residual data of the iterate it came from.
    pub coefficients: DdCoefficients,
    pub report: SolveReport,
}

/// Solves `B(u,v) + Σ_T ξ_T(∇u,∇v)_T = (f,v) + (g,v)_{Γ_N}` for fixed ξ.
pub fn solve_linearized(
    base: &AssembledSystem,
    xi: &[f64],
    mesh: &Mesh,
    rule: &QuadratureRule,
    lift: &[f64],
) -> Result<(FieldCoefficients, f64)> {
    let dd = assemble_dd_matrix(xi, mesh, &base.dofs, rule)?;
    let system = base.with_added(&dd)?;
    let reduced = assembly::apply_dirichlet(&system, lift)?;
    let sol = solve_with_residual(&reduced.matrix, &reduced.rhs)?;
    Ok((
        FieldCoefficients::from_reduced(mesh, &base.dofs, &sol.x, lift)?,
        sol.relative_residual,
    ))
}

/// Damped fixed-point iteration for homogeneous Dirichlet data.
pub fn fixed_point_solve(problem: &ProblemSpec, mesh: &Mesh, config: &FixedPointConfig) -> Result<FixedPointSolution> {
    let dofs = DofMap::new(mesh);
    let lift = vec![0.0; dofs.constrained_vertices().len()];
    fixed_point_solve_lifted(problem, mesh, &dofs, &lift, config)
}

/// Damped fixed-point iteration with Dirichlet values `lift`.
pub fn fixed_point_solve_lifted(
    problem: &ProblemSpec,
    mesh: &Mesh,
    dofs: &DofMap,
    lift: &[f64],
    config: &FixedPointConfig,
) -> Result<FixedPointSolution> {
    problem.validate()?;
    if config.max_iterations == 0 {
        return Err(Error::InvalidProblem("at least one iteration is required".into()));
    }
    let rule = quadrature_rule(config.assembly_degree)?;
    let ctx = DdContext::new(problem, mesh, &rule)?;
    let base = assemble_b(problem, mesh, dofs, &rule)?;
    let n_el = mesh.num_elements();

    let (u0, initial_linear_residual) = supg_solve(problem, mesh, dofs, &rule, lift)?;
    let mut state = IterationState {
        k: 0,
        u: u0,
        xi: vec![0.0; n_el],
        residual_history: [vec![0.0; n_el], vec![0.0; n_el]],
    };
    let mut records = Vec::new();
    let mut converged = false;
    let mut final_increment = f64::INFINITY;
    let mut coefficients = DdCoefficients::zeros(n_el);

    while state.k < config.max_iterations {
        let k = state.k;
        // ξ^{k+1} from u^k
        let fresh = ctx.evaluate(mesh, &state.u);
        state.residual_history.swap(0, 1);
        state.residual_history[1].clone_from(&fresh.residual_norm);
        let omegas = damping_factors(k, &state.residual_history, config.freezing);
        let mut xi_next = Vec::with_capacity(n_el);
        for t in 0..n_el {
            let value = omegas[t] * fresh.xi[t] + (1.0 - omegas[t]) * state.xi[t];
            let h = ctx.geometry(t).diameter;
            if !(value >= 0.0 && value <= h) {
                return Err(Error::InvalidDiffusivity { element: t, value });
            }
            xi_next.push(value);
        }

        let (u_next, linear_residual) = solve_linearized(&base, &xi_next, mesh, &rule, lift)?;

        let scale = state.u.nodal_max_abs();
        let diff = u_next
            .nodal
            .iter()
            .zip(&state.u.nodal)
            .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
        let increment = if scale > 0.0 { diff / scale } else { diff };
        records.push(IterationRecord {
            k,
            max_increment: increment,
            dissipation: dissipation(&xi_next, mesh, &u_next, &rule)?,
            frozen_elements: omegas.iter().filter(|&&w| w == 0.0).count(),
            active_elements: xi_next.iter().filter(|&&x| x > 0.0).count(),
            max_xi_over_h: xi_next
                .iter()
                .enumerate()
                .map(|(t, x)| x / ctx.geometry(t).diameter)
                .fold(0.0, f64::max),
            linear_residual,
        });

        coefficients = DdCoefficients {
            xi: xi_next.clone(),
            ..fresh
        };
        state.u = u_next;
        state.xi = xi_next;
        state.k += 1;
        final_increment = increment;
        if increment < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(FixedPointSolution {
        u: state.u,
        coefficients,
        report: SolveReport {
            iterations: state.k,
            converged,
            final_increment,
            records,
            initial_linear_residual,
        },
    })
}

fn damping_factors(k: usize, history: &[Vec<f64>; 2], mode: FreezingMode) -> Vec<f64> {
    let [previous, current] = history;
    match mode {
        FreezingMode::PerElement => previous
            .iter()
            .zip(current)
            .map(|(&p, &c)| damping_factor(k, p, c))
            .collect(),
        FreezingMode::Global => {
            let agg = |v: &[f64]| v.iter().map(|r| r * r).sum::<f64>().sqrt();
            vec![damping_factor(k, agg(previous), agg(current)); current.len()]
        }
        FreezingMode::Never => vec![DAMPING; current.len()],
    }
}
