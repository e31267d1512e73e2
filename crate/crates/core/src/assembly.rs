//! Problem description and global assembly over the P1 + bubble space.
//!
//! All matrices are assembled on the extended index space of
//! [`DofMap`](crate::spaces::DofMap) (free dofs followed by constrained
//! vertices); [`apply_dirichlet`] splits off the constrained block and moves
//! the lifted boundary values to the right-hand side.

use std::fmt;
use std::sync::Arc;

use crate::linalg::{CsrMatrix, TripletBuffer};
use crate::mesh::{BoundaryTag, ElementGeometry, Mesh};
use crate::spaces::{gauss_legendre_unit, DofMap, LocalBasis, QuadratureRule, LOCAL_DOFS};
use crate::{Error, Point, Result};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Default quadrature degree for system assembly.
pub const ASSEMBLY_DEGREE: usize = 6;

/// Points per boundary edge for Neumann integrals.
const EDGE_POINTS: usize = 3;

#[derive(Clone)]
pub enum ScalarField {
    Constant(f64),
    Function(ScalarFn),
}

impl ScalarField {
    pub fn function(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self::Function(Arc::new(f))
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Function(f) => f(p),
        }
    }
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Function(_) => write!(f, "Function(..)"),
        }
    }
}

/// The velocity β. Variable fields carry their divergence, which enters γ.
#[derive(Clone)]
pub enum VelocityField {
    Constant(Point),
    Function { value: VectorFn, divergence: ScalarFn },
}

impl VelocityField {
    pub fn eval(&self, p: Point) -> Point {
        match self {
            Self::Constant(b) => *b,
            Self::Function { value, .. } => value(p),
        }
    }

    pub fn divergence(&self, p: Point) -> f64 {
        match self {
            Self::Constant(_) => 0.0,
            Self::Function { divergence, .. } => divergence(p),
        }
    }
}

impl fmt::Debug for VelocityField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(b) => write!(f, "Constant({b:?})"),
            Self::Function { .. } => write!(f, "Function(..)"),
        }
    }
}

/// The constant γ in `σ − ½∇·β ≥ γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// Analytic for constant data, otherwise the infimum of `σ − ½∇·β` over
    /// the assembly quadrature points, clamped at zero.
    Auto,
    Fixed(f64),
}

#[derive(Clone)]
pub struct ExactSolution {
    pub value: ScalarFn,
    pub gradient: VectorFn,
}

impl fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ExactSolution(..)")
    }
}

/// `−ε Δu + β·∇u + σu = f` with `u = 0` (or a lift) on Γ_D and
/// `ε ∇u·n = g` on Γ_N. The Dirichlet/Neumann partition lives on the mesh's
/// boundary tags.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub epsilon: f64,
    pub beta: VelocityField,
    pub sigma: ScalarField,
    pub source: ScalarField,
    pub neumann: ScalarField,
    pub gamma: Gamma,
    pub exact: Option<ExactSolution>,
}

impl ProblemSpec {
    pub fn new(epsilon: f64, beta: VelocityField, sigma: ScalarField, source: ScalarField) -> Result<Self> {
        let spec = Self {
            epsilon,
            beta,
            sigma,
            source,
            neumann: ScalarField::Constant(0.0),
            gamma: Gamma::Auto,
            exact: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_neumann(mut self, g: ScalarField) -> Self {
        self.neumann = g;
        self
    }

    pub fn with_gamma(mut self, gamma: Gamma) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_exact(mut self, exact: ExactSolution) -> Self {
        self.exact = Some(exact);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "diffusivity must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if let Gamma::Fixed(g) = self.gamma {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::InvalidProblem(format!("gamma must be nonnegative, got {g}")));
            }
        }
        if let ScalarField::Constant(s) = self.sigma {
            if !(s >= 0.0) {
                return Err(Error::InvalidProblem(format!("reaction must be nonnegative, got {s}")));
            }
        }
        Ok(())
    }

    /// Resolves γ for this mesh.
    pub fn gamma_value(&self, mesh: &Mesh, rule: &QuadratureRule) -> Result<f64> {
        match (self.gamma, &self.beta, &self.sigma) {
            (Gamma::Fixed(g), _, _) => Ok(g),
            (Gamma::Auto, VelocityField::Constant(_), ScalarField::Constant(s)) => Ok(s.max(0.0)),
            (Gamma::Auto, _, _) => {
                let mut inf = f64::INFINITY;
                for geom in mesh.geometries()? {
                    for (b, _) in rule.iter() {
                        let p = geom.point(*b);
                        let v = self.sigma.eval(p) - 0.5 * self.beta.divergence(p);
                        check_finite("sigma - div(beta)/2", v, p)?;
                        inf = inf.min(v);
                    }
                }
                Ok(inf.max(0.0))
            }
        }
    }
}

fn check_finite(name: &'static str, v: f64, p: Point) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteCoefficient { name, x: p[0], y: p[1] })
    }
}

/// Coefficient values at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointData {
    pub beta: Point,
    pub sigma: f64,
    pub source: f64,
}

pub(crate) fn sample(problem: &ProblemSpec, p: Point) -> Result<PointData> {
    let beta = problem.beta.eval(p);
    let sigma = problem.sigma.eval(p);
    let source = problem.source.eval(p);
    check_finite("beta", beta[0] + beta[1], p)?;
    check_finite("sigma", sigma, p)?;
    check_finite("f", source, p)?;
    Ok(PointData { beta, sigma, source })
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `∫_T ∇φ_j·∇φ_i` for the four local basis functions.
pub fn element_stiffness(geometry: &ElementGeometry, rule: &QuadratureRule) -> [[f64; LOCAL_DOFS]; LOCAL_DOFS] {
    let mut k = [[0.0; LOCAL_DOFS]; LOCAL_DOFS];
    for (b, w) in rule.iter() {
        let basis = LocalBasis::at(geometry, *b);
        let jw = w * geometry.area;
        for i in 0..LOCAL_DOFS {
            for j in 0..LOCAL_DOFS {
                k[i][j] += jw * dot(basis.gradients[j], basis.gradients[i]);
            }
        }
    }
    k
}

/// Local matrix of `B(φ_j, φ_i)` (row = test function) and load `(f, φ_i)`.
pub fn element_system(
    problem: &ProblemSpec,
    geometry: &ElementGeometry,
    rule: &QuadratureRule,
) -> Result<([[f64; LOCAL_DOFS]; LOCAL_DOFS], [f64; LOCAL_DOFS])> {
    let mut k = [[0.0; LOCAL_DOFS]; LOCAL_DOFS];
    let mut load = [0.0; LOCAL_DOFS];
    for (b, w) in rule.iter() {
        let basis = LocalBasis::at(geometry, *b);
        let data = sample(problem, geometry.point(*b))?;
        let jw = w * geometry.area;
        for i in 0..LOCAL_DOFS {
            let phi_i = basis.values[i];
            for j in 0..LOCAL_DOFS {
                let grad_j = basis.gradients[j];
                k[i][j] += jw
                    * (problem.epsilon * dot(grad_j, basis.gradients[i])
                        + dot(data.beta, grad_j) * phi_i
                        + data.sigma * basis.values[j] * phi_i);
            }
            load[i] += jw * data.source * phi_i;
        }
    }
    Ok((k, load))
}

/// `B` and the load vector on the extended index space.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
}

impl AssembledSystem {
    /// Adds another extended-space matrix (the dynamic-diffusion term).
    pub fn with_added(&self, other: &CsrMatrix) -> Result<AssembledSystem> {
        Ok(AssembledSystem {
            matrix: self.matrix.add_scaled(other, 1.0)?,
            rhs: self.rhs.clone(),
            dofs: self.dofs.clone(),
        })
    }
}

/// The system restricted to unknown dofs.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// Assembles `ε(∇u,∇v) + (β·∇u, v) + (σu, v)` and `(f, v) + (g, v)_{Γ_N}`.
pub fn assemble_b(problem: &ProblemSpec, mesh: &Mesh, dofs: &DofMap, rule: &QuadratureRule) -> Result<AssembledSystem> {
    let n = dofs.extended_dofs();
    let mut buf = TripletBuffer::with_capacity(mesh.num_elements() * LOCAL_DOFS * LOCAL_DOFS);
    let mut rhs = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geometry = mesh.element_geometry(t)?;
        let (k, load) = element_system(problem, &geometry, rule)?;
        let idx = dofs.element_dofs(t, *tri);
        for i in 0..LOCAL_DOFS {
            rhs[idx[i]] += load[i];
            for j in 0..LOCAL_DOFS {
                buf.push(idx[i], idx[j], k[i][j]);
            }
        }
    }
    add_neumann_load(problem, mesh, dofs, &mut rhs)?;
    Ok(AssembledSystem {
        matrix: buf.compress(n)?,
        rhs,
        dofs: dofs.clone(),
    })
}

fn add_neumann_load(problem: &ProblemSpec, mesh: &Mesh, dofs: &DofMap, rhs: &mut [f64]) -> Result<()> {
    let (nodes, weights) = gauss_legendre_unit(EDGE_POINTS);
    for edge in mesh.boundary_edges().iter().filter(|e| e.tag == BoundaryTag::Neumann) {
        let [a, b] = edge.vertices.map(|v| mesh.vertices()[v]);
        let length = (b[0] - a[0]).hypot(b[1] - a[1]);
        for (&s, &w) in nodes.iter().zip(&weights) {
            let p = [(1.0 - s) * a[0] + s * b[0], (1.0 - s) * a[1] + s * b[1]];
            let g = problem.neumann.eval(p);
            check_finite("g", g, p)?;
            rhs[dofs.extended_nodal(edge.vertices[0])] += length * w * g * (1.0 - s);
            rhs[dofs.extended_nodal(edge.vertices[1])] += length * w * g * s;
        }
    }
    Ok(())
}

/// Assembles `Σ_T ξ_T ∫_T ∇u·∇v` on the extended index space.
pub fn assemble_dd_matrix(xi: &[f64], mesh: &Mesh, dofs: &DofMap, rule: &QuadratureRule) -> Result<CsrMatrix> {
    if xi.len() != mesh.num_elements() {
        return Err(Error::DimensionMismatch {
            expected: mesh.num_elements(),
            got: xi.len(),
        });
    }
    if let Some((element, &value)) = xi.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidDiffusivity { element, value });
    }
    let mut buf = TripletBuffer::with_capacity(mesh.num_elements() * LOCAL_DOFS * LOCAL_DOFS);
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if xi[t] == 0.0 {
            continue;
        }
        let k = element_stiffness(&mesh.element_geometry(t)?, rule);
        let idx = dofs.element_dofs(t, *tri);
        for i in 0..LOCAL_DOFS {
            for j in 0..LOCAL_DOFS {
                buf.push(idx[i], idx[j], xi[t] * k[i][j]);
            }
        }
    }
    buf.compress(dofs.extended_dofs())
}

/// Eliminates the constrained vertices: keeps the free block and subtracts
/// the lifted columns from the right-hand side. `lift` lists the boundary
/// values in [`DofMap::constrained_vertices`] order.
pub fn apply_dirichlet(system: &AssembledSystem, lift: &[f64]) -> Result<ReducedSystem> {
    reduce(&system.matrix, &system.rhs, &system.dofs, system.dofs.total_dofs(), lift)
}

/// Restricts an extended system to the first `keep` dofs, moving the lifted
/// constrained columns to the right-hand side.
pub(crate) fn reduce(matrix: &CsrMatrix, rhs: &[f64], dofs: &DofMap, keep: usize, lift: &[f64]) -> Result<ReducedSystem> {
    let constrained = dofs.constrained_vertices().len();
    if lift.len() != constrained {
        return Err(Error::MissingBoundaryValue {
            expected: constrained,
            got: lift.len(),
        });
    }
    let total = dofs.total_dofs();
    let mut reduced_rhs = rhs[..keep].to_vec();
    if lift.iter().any(|&v| v != 0.0) {
        let coupling = matrix.block(0..keep, total..total + constrained);
        for (r, c) in reduced_rhs.iter_mut().zip(coupling.mul_vec(lift)) {
            *r -= c;
        }
    }
    Ok(ReducedSystem {
        matrix: matrix.block(0..keep, 0..keep).into_square()?,
        rhs: reduced_rhs,
    })
}
