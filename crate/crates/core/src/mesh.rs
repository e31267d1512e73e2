//! Uniform triangulations of the unit square.
//!
//! Vertices are numbered lexicographically by (row, column), so vertex
//! `j * (n + 1) + i` sits at `(i / n, j / n)`. Each square cell is split into
//! two counterclockwise triangles along one of its diagonals.

use std::collections::HashMap;
use std::io::Write;

use crate::{Error, Point, Result};

/// Which diagonal splits each square cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Diagonal {
    /// Bottom-left to top-right in every cell.
    #[default]
    SouthWestNorthEast,
    /// Top-left to bottom-right in every cell.
    NorthWestSouthEast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
    /// The single triangle this edge belongs to.
    pub element: usize,
}

/// Per-triangle geometric quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Longest edge length, h_T.
    pub diameter: f64,
    /// Constant gradients of the three barycentric coordinates.
    pub barycentric_gradients: [Point; 3],
}

impl ElementGeometry {
    /// Computes the geometry of the triangle with the given corners.
    ///
    /// Clockwise triangles yield a negative signed area and are rejected along
    /// with degenerate ones; `index` only labels the error.
    pub fn from_vertices(index: usize, vertices: [Point; 3]) -> Result<Self> {
        let [p0, p1, p2] = vertices;
        let twice_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let scale = edge_length(p0, p1).max(edge_length(p1, p2)).max(edge_length(p2, p0));
        if !(twice_area > 1e-14 * scale * scale) {
            return Err(Error::DegenerateElement {
                triangle: index,
                area: 0.5 * twice_area,
            });
        }
        // ∇λ_i is the inward normal of the opposite edge scaled by 1/(2|T|).
        let grad = |a: Point, b: Point| [(a[1] - b[1]) / twice_area, (b[0] - a[0]) / twice_area];
        Ok(Self {
            vertices,
            area: 0.5 * twice_area,
            diameter: scale,
            barycentric_gradients: [grad(p1, p2), grad(p2, p0), grad(p0, p1)],
        })
    }

    /// Maps barycentric coordinates to the physical point.
    pub fn point(&self, barycentric: [f64; 3]) -> Point {
        let mut p = [0.0; 2];
        for (l, v) in barycentric.iter().zip(&self.vertices) {
            p[0] += l * v[0];
            p[1] += l * v[1];
        }
        p
    }
}

fn edge_length(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

/// A conforming triangulation with tagged boundary edges. Immutable once built
/// except for boundary retagging.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

impl Mesh {
    /// The `n`×`n` uniform triangulation of the unit square, all boundary
    /// edges tagged Dirichlet.
    pub fn unit_square(n: usize, diagonal: Diagonal) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSubdivision(n));
        }
        let h = 1.0 / n as f64;
        let stride = n + 1;
        let mut vertices = Vec::with_capacity(stride * stride);
        for j in 0..=n {
            for i in 0..=n {
                // Exact endpoints regardless of rounding in i * h.
                let coord = |k: usize| if k == n { 1.0 } else { k as f64 * h };
                vertices.push([coord(i), coord(j)]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let sw = j * stride + i;
                let se = sw + 1;
                let nw = sw + stride;
                let ne = nw + 1;
                match diagonal {
                    Diagonal::SouthWestNorthEast => {
                        triangles.push([sw, se, ne]);
                        triangles.push([sw, ne, nw]);
                    }
                    Diagonal::NorthWestSouthEast => {
                        triangles.push([sw, se, nw]);
                        triangles.push([se, ne, nw]);
                    }
                }
            }
        }
        Self::from_parts(vertices, triangles)
    }

    /// Builds a mesh from raw connectivity, deriving the boundary edges
    /// (tagged Dirichlet) and validating orientation and conformity.
    pub fn from_parts(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a vertex outside 0..{}",
                    vertices.len()
                )));
            }
            ElementGeometry::from_vertices(t, tri.map(|v| vertices[v]))?;
        }
        let mut incidence: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                incidence.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut boundary_edges = Vec::new();
        for (&(a, b), owners) in &incidence {
            match owners.len() {
                1 => boundary_edges.push(BoundaryEdge {
                    vertices: [a, b],
                    tag: BoundaryTag::Dirichlet,
                    element: owners[0],
                }),
                2 => {}
                k => {
                    return Err(Error::InvalidMesh(format!(
                        "edge ({a}, {b}) is shared by {k} triangles"
                    )))
                }
            }
        }
        boundary_edges.sort_by_key(|e| e.vertices);
        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry> {
        let tri = self.triangles.get(t).ok_or(Error::ElementOutOfRange {
            index: t,
            count: self.triangles.len(),
        })?;
        ElementGeometry::from_vertices(t, tri.map(|v| self.vertices[v]))
    }

    /// Geometry of every element, in element order.
    pub fn geometries(&self) -> Result<Vec<ElementGeometry>> {
        (0..self.num_elements()).map(|t| self.element_geometry(t)).collect()
    }

    /// Retags boundary edges by the midpoint predicate.
    pub fn tag_boundary(&mut self, mut tag_of: impl FnMut(Point) -> BoundaryTag) {
        for edge in &mut self.boundary_edges {
            let [a, b] = edge.vertices.map(|v| self.vertices[v]);
            edge.tag = tag_of([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
    }

    /// Vertices lying on at least one Dirichlet edge.
    pub fn dirichlet_vertices(&self) -> Vec<bool> {
        let mut flags = vec![false; self.vertices.len()];
        for edge in &self.boundary_edges {
            if edge.tag == BoundaryTag::Dirichlet {
                flags[edge.vertices[0]] = true;
                flags[edge.vertices[1]] = true;
            }
        }
        flags
    }

    /// Writes the plain-text listing: a `vertices` header and one `x y` line
    /// per vertex, then a `triangles` header and one `i j k` line (0-based) per
    /// triangle.
    pub fn write_listing<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "vertices {}", self.vertices.len())?;
        for v in &self.vertices {
            writeln!(out, "{} {}", v[0], v[1])?;
        }
        writeln!(out, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn counts_match_the_grid() {
        for n in [1, 2, 3, 8] {
            let mesh = Mesh::unit_square(n, Diagonal::default()).unwrap();
            assert_eq!(mesh.num_vertices(), (n + 1) * (n + 1));
            assert_eq!(mesh.num_elements(), 2 * n * n);
            assert_eq!(mesh.boundary_edges().len(), 4 * n);
        }
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            Mesh::unit_square(0, Diagonal::default()),
            Err(Error::InvalidSubdivision(0))
        ));
    }

    #[test]
    fn unit_right_triangle_geometry() {
        let g = ElementGeometry::from_vertices(0, [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_relative_eq!(g.area, 0.5);
        assert_relative_eq!(g.diameter, 2f64.sqrt());
        assert_eq!(g.barycentric_gradients[0], [-1.0, -1.0]);
        assert_eq!(g.barycentric_gradients[1], [1.0, 0.0]);
        assert_eq!(g.barycentric_gradients[2], [0.0, 1.0]);
    }

    #[test]
    fn degenerate_and_clockwise_triangles_rejected() {
        let flat = ElementGeometry::from_vertices(3, [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        assert!(matches!(flat, Err(Error::DegenerateElement { triangle: 3, .. })));
        let cw = ElementGeometry::from_vertices(0, [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]);
        assert!(cw.is_err());
    }

    #[test]
    fn uniform_cells_have_equal_diameter() {
        for diagonal in [Diagonal::SouthWestNorthEast, Diagonal::NorthWestSouthEast] {
            let mesh = Mesh::unit_square(4, diagonal).unwrap();
            for g in mesh.geometries().unwrap() {
                assert_relative_eq!(g.diameter, 2f64.sqrt() / 4.0, epsilon = 1e-15);
                assert_relative_eq!(g.area, 1.0 / 32.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn areas_sum_to_one_and_gradients_cancel() {
        let mesh = Mesh::unit_square(8, Diagonal::NorthWestSouthEast).unwrap();
        let total: f64 = mesh.geometries().unwrap().iter().map(|g| g.area).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for g in mesh.geometries().unwrap() {
            let s = g.barycentric_gradients;
            assert!((s[0][0] + s[1][0] + s[2][0]).abs() < 1e-14);
            assert!((s[0][1] + s[1][1] + s[2][1]).abs() < 1e-14);
        }
    }

    #[test]
    fn boundary_edges_lie_on_the_square_boundary() {
        let mesh = Mesh::unit_square(5, Diagonal::default()).unwrap();
        for e in mesh.boundary_edges() {
            let [a, b] = e.vertices.map(|v| mesh.vertices()[v]);
            let on_side = (0..2).any(|c| {
                (a[c] == 0.0 && b[c] == 0.0) || (a[c] == 1.0 && b[c] == 1.0)
            });
            assert!(on_side, "{a:?}-{b:?}");
            assert!(mesh.triangles()[e.element].contains(&e.vertices[0]));
            assert!(mesh.triangles()[e.element].contains(&e.vertices[1]));
        }
        let dirichlet = mesh.dirichlet_vertices();
        assert_eq!(dirichlet.iter().filter(|&&d| d).count(), 4 * 5);
    }

    #[test]
    fn retagging_splits_the_boundary() {
        let mut mesh = Mesh::unit_square(4, Diagonal::default()).unwrap();
        mesh.tag_boundary(|m| {
            if m[0] == 1.0 {
                BoundaryTag::Neumann
            } else {
                BoundaryTag::Dirichlet
            }
        });
        let neumann = mesh
            .boundary_edges()
            .iter()
            .filter(|e| e.tag == BoundaryTag::Neumann)
            .count();
        assert_eq!(neumann, 4);
        // the corners (1,0) and (1,1) stay constrained through their Dirichlet neighbours
        assert_eq!(mesh.dirichlet_vertices().iter().filter(|&&d| d).count(), 16 - 3);
    }

    #[test]
    fn non_conforming_connectivity_rejected() {
        let vertices = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-1.0, 0.5]];
        let triangles = vec![[0, 1, 2], [1, 3, 2], [0, 2, 4], [0, 3, 2]];
        assert!(Mesh::from_parts(vertices, triangles).is_err());
    }

    #[test]
    fn listing_format() {
        let mesh = Mesh::unit_square(1, Diagonal::default()).unwrap();
        let mut buf = Vec::new();
        mesh.write_listing(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "vertices 4\n0 0\n1 0\n0 1\n1 1\ntriangles 2\n0 1 3\n0 3 2\n"
        );
    }
}
