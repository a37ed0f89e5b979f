//! Bulk + surface P1 assembly.
//!
//! Every nodal basis function lives on the triangulated disk and, through
//! its trace, on the boundary polygon. The mass matrix therefore collects
//! triangle contributions plus segment contributions along boundary edges,
//! and likewise for the stiffness matrix, where the surface part is the
//! tangential (along-edge) gradient of the trace.

use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::sparse::SparseMatrix;
use crate::NodalVector;

/// Exact P1 mass matrix of a triangle with the given area.
pub fn triangle_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

/// Exact P1 stiffness matrix of a counterclockwise triangle.
pub fn triangle_stiffness(p: [[f64; 2]; 3]) -> [[f64; 3]; 3] {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    // grad phi_i = (y_j - y_k, x_k - x_j) / (2 area) for (i, j, k) cyclic
    let grad = |i: usize| {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)]
    };
    let g = [grad(0), grad(1), grad(2)];
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            k[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
        }
    }
    k
}

/// Exact P1 mass matrix of a segment of length `len`.
pub fn segment_mass(len: f64) -> [[f64; 2]; 2] {
    [[len / 3.0, len / 6.0], [len / 6.0, len / 3.0]]
}

/// P1 stiffness of a segment: the tangential gradient is the difference quotient.
pub fn segment_stiffness(len: f64) -> [[f64; 2]; 2] {
    [[1.0 / len, -1.0 / len], [-1.0 / len, 1.0 / len]]
}

fn bulk_mass_triplets(mesh: &Mesh2D, out: &mut Vec<(usize, usize, f64)>) {
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let local = triangle_mass(mesh.triangle_area(t));
        scatter3(tri, &local, out);
    }
}

fn surface_mass_triplets(mesh: &Mesh2D, out: &mut Vec<(usize, usize, f64)>) {
    for &[i, j] in mesh.boundary_edges() {
        scatter2(&[i, j], &segment_mass(mesh.edge_length(i, j)), out);
    }
}

fn scatter3(idx: &[usize; 3], local: &[[f64; 3]; 3], out: &mut Vec<(usize, usize, f64)>) {
    for a in 0..3 {
        for b in 0..3 {
            out.push((idx[a], idx[b], local[a][b]));
        }
    }
}

fn scatter2(idx: &[usize; 2], local: &[[f64; 2]; 2], out: &mut Vec<(usize, usize, f64)>) {
    for a in 0..2 {
        for b in 0..2 {
            out.push((idx[a], idx[b], local[a][b]));
        }
    }
}

/// Bulk part of the mass matrix, `∫_Ω φ_i φ_j`.
pub fn assemble_bulk_mass(mesh: &Mesh2D) -> Result<SparseMatrix> {
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len());
    bulk_mass_triplets(mesh, &mut triplets);
    SparseMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// Surface part of the mass matrix, `∫_Γ φ_i φ_j` over the boundary polygon.
pub fn assemble_surface_mass(mesh: &Mesh2D) -> Result<SparseMatrix> {
    let mut triplets = Vec::with_capacity(4 * mesh.boundary_edges().len());
    surface_mass_triplets(mesh, &mut triplets);
    SparseMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// Combined mass matrix `M = M_Ω + M_Γ`.
pub fn assemble_mass(mesh: &Mesh2D) -> Result<SparseMatrix> {
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len() + 4 * mesh.boundary_edges().len());
    bulk_mass_triplets(mesh, &mut triplets);
    surface_mass_triplets(mesh, &mut triplets);
    SparseMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// Combined stiffness matrix: bulk Laplacian plus Laplace-Beltrami on the boundary.
pub fn assemble_stiffness(mesh: &Mesh2D) -> Result<SparseMatrix> {
    let nodes = mesh.nodes();
    let mut triplets = Vec::with_capacity(9 * mesh.triangles().len() + 4 * mesh.boundary_edges().len());
    for tri in mesh.triangles() {
        let local = triangle_stiffness(tri.map(|i| nodes[i]));
        scatter3(tri, &local, &mut triplets);
    }
    for &[i, j] in mesh.boundary_edges() {
        scatter2(&[i, j], &segment_stiffness(mesh.edge_length(i, j)), &mut triplets);
    }
    SparseMatrix::from_triplets(mesh.num_nodes(), &triplets)
}

/// All matrices of the semidiscrete system for one mesh.
///
/// The mass matrix is kept split as well, because bulk and surface forcing
/// terms are distinct functions sharing the boundary nodes.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mass: SparseMatrix,
    pub bulk_mass: SparseMatrix,
    pub surface_mass: SparseMatrix,
    pub stiffness: SparseMatrix,
}

impl Discretization {
    pub fn assemble(mesh: &Mesh2D) -> Result<Self> {
        Ok(Self {
            mass: assemble_mass(mesh)?,
            bulk_mass: assemble_bulk_mass(mesh)?,
            surface_mass: assemble_surface_mass(mesh)?,
            stiffness: assemble_stiffness(mesh)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    /// `b_i = m_h(I_h f, φ_i)` for a forcing with separate bulk and surface parts.
    pub fn coupled_load(&self, bulk: &[f64], surface: &[f64]) -> Result<NodalVector> {
        let b = load_vector(&self.bulk_mass, bulk)?;
        let s = load_vector(&self.surface_mass, surface)?;
        Ok(b.iter().zip(&s).map(|(x, y)| x + y).collect())
    }
}

/// Samples `f(x, y, t)` at every node.
pub fn nodal_interpolate<F>(f: F, mesh: &Mesh2D, t: f64) -> Result<NodalVector>
where
    F: Fn(f64, f64, f64) -> f64,
{
    mesh.nodes()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let v = f(p[0], p[1], t);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    what: "interpolated field",
                    index: i,
                })
            }
        })
        .collect()
}

/// `M f`, the load vector of the nodal interpolant of `f`.
pub fn load_vector(mass: &SparseMatrix, f_nodes: &[f64]) -> Result<NodalVector> {
    mass.mul_vec(f_nodes)
}

/// `M F(u)` with `F` applied node by node.
pub fn nonlinearity_vector<F>(mass: &SparseMatrix, f: F, u_nodes: &[f64]) -> Result<NodalVector>
where
    F: Fn(f64) -> f64,
{
    Error::check_len(mass.dim(), u_nodes.len())?;
    let values = u_nodes
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let v = f(u);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    what: "nonlinearity",
                    index: i,
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    mass.mul_vec(&values)
}
