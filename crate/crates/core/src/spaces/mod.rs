//! The two-scale discrete space: continuous P1 functions vanishing on the
//! Dirichlet boundary, plus one cubic bubble per element.
//!
//! On each triangle the local basis is `λ1, λ2, λ3, ψ` with the bubble
//! `ψ = 27 λ1 λ2 λ3`, normalized to one at the barycenter.

pub mod quadrature;

pub use quadrature::{gauss_legendre_unit, quadrature_rule, QuadratureRule};

use crate::mesh::{ElementGeometry, Mesh};
use crate::{Error, Point, Result};

/// Number of local basis functions per element (three hats and the bubble).
pub const LOCAL_DOFS: usize = 4;

pub fn bubble_eval(barycentric: [f64; 3]) -> f64 {
    27.0 * barycentric[0] * barycentric[1] * barycentric[2]
}

pub fn bubble_gradient(geometry: &ElementGeometry, barycentric: [f64; 3]) -> Point {
    let [l1, l2, l3] = barycentric;
    let g = &geometry.barycentric_gradients;
    let c = [l2 * l3, l1 * l3, l1 * l2];
    let mut out = [0.0; 2];
    for k in 0..3 {
        out[0] += 27.0 * c[k] * g[k][0];
        out[1] += 27.0 * c[k] * g[k][1];
    }
    out
}

/// Values and gradients of the four local basis functions at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalBasis {
    pub values: [f64; LOCAL_DOFS],
    pub gradients: [Point; LOCAL_DOFS],
}

impl LocalBasis {
    pub fn at(geometry: &ElementGeometry, barycentric: [f64; 3]) -> Self {
        let g = geometry.barycentric_gradients;
        Self {
            values: [
                barycentric[0],
                barycentric[1],
                barycentric[2],
                bubble_eval(barycentric),
            ],
            gradients: [g[0], g[1], g[2], bubble_gradient(geometry, barycentric)],
        }
    }
}

/// Where a vertex's nodal value lives in the linear system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodalDof {
    Free(usize),
    /// Index into the list of Dirichlet vertices.
    Constrained(usize),
}

/// Global numbering of the degrees of freedom.
///
/// Free nodal dofs come first, then one bubble dof per element. Assembly works
/// on an extended index space that appends the constrained vertices after the
/// free dofs, so that Dirichlet reduction is a block split.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    nodal: Vec<NodalDof>,
    constrained_vertices: Vec<usize>,
    num_free_nodal: usize,
    num_elements: usize,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let dirichlet = mesh.dirichlet_vertices();
        let mut nodal = Vec::with_capacity(dirichlet.len());
        let mut constrained_vertices = Vec::new();
        let mut free = 0;
        for (v, &is_dirichlet) in dirichlet.iter().enumerate() {
            if is_dirichlet {
                nodal.push(NodalDof::Constrained(constrained_vertices.len()));
                constrained_vertices.push(v);
            } else {
                nodal.push(NodalDof::Free(free));
                free += 1;
            }
        }
        Self {
            nodal,
            constrained_vertices,
            num_free_nodal: free,
            num_elements: mesh.num_elements(),
        }
    }

    pub fn nodal_dof(&self, vertex: usize) -> NodalDof {
        self.nodal[vertex]
    }

    pub fn bubble_dof(&self, element: usize) -> usize {
        self.num_free_nodal + element
    }

    pub fn num_free_nodal(&self) -> usize {
        self.num_free_nodal
    }

    /// Unknowns of the reduced system: free vertices plus bubbles.
    pub fn total_dofs(&self) -> usize {
        self.num_free_nodal + self.num_elements
    }

    pub fn constrained_vertices(&self) -> &[usize] {
        &self.constrained_vertices
    }

    /// Size of the extended index space used during assembly.
    pub fn extended_dofs(&self) -> usize {
        self.total_dofs() + self.constrained_vertices.len()
    }

    /// Extended index of a vertex's nodal value.
    pub fn extended_nodal(&self, vertex: usize) -> usize {
        match self.nodal[vertex] {
            NodalDof::Free(i) => i,
            NodalDof::Constrained(c) => self.total_dofs() + c,
        }
    }

    /// Extended indices of the four local basis functions of `triangle`.
    pub fn element_dofs(&self, element: usize, triangle: [usize; 3]) -> [usize; LOCAL_DOFS] {
        [
            self.extended_nodal(triangle[0]),
            self.extended_nodal(triangle[1]),
            self.extended_nodal(triangle[2]),
            self.bubble_dof(element),
        ]
    }

    /// Samples `g` at the constrained vertices, in constrained order.
    pub fn boundary_values(&self, mesh: &Mesh, mut g: impl FnMut(Point) -> f64) -> Vec<f64> {
        self.constrained_vertices
            .iter()
            .map(|&v| g(mesh.vertices()[v]))
            .collect()
    }
}

/// Coefficients of `w_hb = w_h + w_b`.
///
/// `nodal` holds one value per mesh vertex; constrained vertices carry their
/// boundary value (zero for homogeneous data). `bubble` holds one value per
/// element.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCoefficients {
    pub nodal: Vec<f64>,
    pub bubble: Vec<f64>,
}

impl FieldCoefficients {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            nodal: vec![0.0; mesh.num_vertices()],
            bubble: vec![0.0; mesh.num_elements()],
        }
    }

    /// The coarse-scale part `κ_h(w_hb) = w_h`: same nodal values, bubbles dropped.
    pub fn coarse(&self) -> Self {
        Self {
            nodal: self.nodal.clone(),
            bubble: vec![0.0; self.bubble.len()],
        }
    }

    /// Scatters a reduced solution vector back into coefficients, filling
    /// constrained vertices from `lift` (constrained order).
    pub fn from_reduced(mesh: &Mesh, dofs: &DofMap, x: &[f64], lift: &[f64]) -> Result<Self> {
        if x.len() != dofs.total_dofs() && x.len() != dofs.num_free_nodal() {
            return Err(Error::DimensionMismatch {
                expected: dofs.total_dofs(),
                got: x.len(),
            });
        }
        if lift.len() != dofs.constrained_vertices().len() {
            return Err(Error::MissingBoundaryValue {
                expected: dofs.constrained_vertices().len(),
                got: lift.len(),
            });
        }
        let nodal = (0..mesh.num_vertices())
            .map(|v| match dofs.nodal_dof(v) {
                NodalDof::Free(i) => x[i],
                NodalDof::Constrained(c) => lift[c],
            })
            .collect();
        let bubble = (0..mesh.num_elements())
            .map(|t| x.get(dofs.bubble_dof(t)).copied().unwrap_or(0.0))
            .collect();
        Ok(Self { nodal, bubble })
    }

    /// Gathers the free coefficients into a reduced vector.
    pub fn to_reduced(&self, dofs: &DofMap) -> Vec<f64> {
        let mut x = vec![0.0; dofs.total_dofs()];
        for (v, &value) in self.nodal.iter().enumerate() {
            if let NodalDof::Free(i) = dofs.nodal_dof(v) {
                x[i] = value;
            }
        }
        for (t, &value) in self.bubble.iter().enumerate() {
            x[dofs.bubble_dof(t)] = value;
        }
        x
    }

    /// Local coefficients `[u1, u2, u3, u_bubble]` on `element`.
    pub fn local(&self, mesh: &Mesh, element: usize) -> [f64; LOCAL_DOFS] {
        let tri = mesh.triangles()[element];
        [
            self.nodal[tri[0]],
            self.nodal[tri[1]],
            self.nodal[tri[2]],
            self.bubble[element],
        ]
    }

    /// Value and gradient of `w_h + w_b` at a point of `element`.
    pub fn evaluate(
        &self,
        mesh: &Mesh,
        geometry: &ElementGeometry,
        element: usize,
        barycentric: [f64; 3],
    ) -> (f64, Point) {
        evaluate_local(&self.local(mesh, element), &LocalBasis::at(geometry, barycentric))
    }

    /// Largest absolute nodal value.
    pub fn nodal_max_abs(&self) -> f64 {
        self.nodal.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Combines local coefficients with basis values at one point.
pub fn evaluate_local(coeffs: &[f64; LOCAL_DOFS], basis: &LocalBasis) -> (f64, Point) {
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for k in 0..LOCAL_DOFS {
        value += coeffs[k] * basis.values[k];
        grad[0] += coeffs[k] * basis.gradients[k][0];
        grad[1] += coeffs[k] * basis.gradients[k][1];
    }
    (value, grad)
}

/// Lagrange interpolant of `u`: nodal values sampled at the vertices
/// (constrained ones included), bubbles zero.
pub fn interpolate_nodal(mesh: &Mesh, mut u: impl FnMut(Point) -> f64) -> FieldCoefficients {
    FieldCoefficients {
        nodal: mesh.vertices().iter().map(|&p| u(p)).collect(),
        bubble: vec![0.0; mesh.num_elements()],
    }
}
