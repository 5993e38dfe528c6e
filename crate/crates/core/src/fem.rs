//! P1 stiffness and consistent mass assembly.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::BoundaryTag;
use crate::mesh::Mesh;
use crate::sparse::{norm, CsrMatrix};

/// Generalized eigenproblem `K v = λ M v` on the free (non-Dirichlet) vertices.
#[derive(Clone, Debug)]
pub struct Pencil {
    pub k: CsrMatrix,
    pub m: CsrMatrix,
    /// DOF index of each mesh vertex; `None` for Dirichlet vertices.
    pub dof_of_vertex: Vec<Option<usize>>,
    pub vertex_of_dof: Vec<usize>,
    pub n_dof: usize,
}

impl Pencil {
    pub fn n_vertices(&self) -> usize {
        self.dof_of_vertex.len()
    }

    /// Expand a DOF vector to one value per vertex (zero on Dirichlet vertices).
    pub fn to_nodal(&self, dof: &[f64]) -> Vec<f64> {
        self.dof_of_vertex
            .iter()
            .map(|d| d.map_or(0.0, |i| dof[i]))
            .collect()
    }

    /// Restrict nodal values to the DOFs.
    pub fn to_dof(&self, nodal: &[f64]) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| nodal[v]).collect()
    }

    /// `row col value` triplets of K and M.
    pub fn export_triplets(&self) -> (String, String) {
        let dump = |a: &CsrMatrix| {
            let mut s = String::new();
            for i in 0..a.n {
                for (j, v) in a.row(i) {
                    let _ = writeln!(s, "{i} {j} {v:.16e}");
                }
            }
            s
        };
        (dump(&self.k), dump(&self.m))
    }
}

/// Element stiffness and mass of one triangle.
pub fn element_matrices(p: [[f64; 2]; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    // Gradients of the barycentric coordinates, times 2·area.
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        g[i] = [p[j][1] - p[k][1], p[k][0] - p[j][0]];
    }
    let mut ke = [[0.0; 3]; 3];
    let mut me = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let kij = (g[i][0] * g[j][0] + g[i][1] * g[j][1]) / (4.0 * area);
            let mij = area / 12.0 * if i == j { 2.0 } else { 1.0 };
            ke[i][j] = kij;
            ke[j][i] = kij;
            me[i][j] = mij;
            me[j][i] = mij;
        }
    }
    (ke, me, area)
}

pub fn assemble(mesh: &Mesh) -> Result<Pencil> {
    assemble_with_mask(mesh, &mesh.tagged_vertices(BoundaryTag::Dirichlet))
}

/// Assembly with an explicit per-vertex Dirichlet mask.
pub fn assemble_with_mask(mesh: &Mesh, dirichlet: &[bool]) -> Result<Pencil> {
    if dirichlet.len() != mesh.vertices.len() {
        return Err(Error::Argument("Dirichlet mask length differs from vertex count".into()));
    }
    let mut dof_of_vertex = vec![None; mesh.vertices.len()];
    let mut vertex_of_dof = Vec::new();
    for (v, &d) in dirichlet.iter().enumerate() {
        if !d {
            dof_of_vertex[v] = Some(vertex_of_dof.len());
            vertex_of_dof.push(v);
        }
    }
    let n_dof = vertex_of_dof.len();
    let mut kt = Vec::with_capacity(9 * mesh.triangles.len());
    let mut mt = Vec::with_capacity(9 * mesh.triangles.len());
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| [mesh.vertices[v].x, mesh.vertices[v].y]);
        let (ke, me, area) = element_matrices(p);
        if !(area > 0.0) {
            return Err(Error::Assembly(format!("triangle {t} has non-positive area {area:e}")));
        }
        for i in 0..3 {
            let Some(di) = dof_of_vertex[tri[i]] else { continue };
            for j in 0..3 {
                let Some(dj) = dof_of_vertex[tri[j]] else { continue };
                kt.push((di, dj, ke[i][j]));
                mt.push((di, dj, me[i][j]));
            }
        }
    }
    Ok(Pencil {
        k: CsrMatrix::from_triplets(n_dof, &kt),
        m: CsrMatrix::from_triplets(n_dof, &mt),
        dof_of_vertex,
        vertex_of_dof,
        n_dof,
    })
}

/// `‖K v − λ M v‖ / (‖M v‖ · max(λ, 1))`.
pub fn residual(pencil: &Pencil, vec: &[f64], lambda: f64) -> Result<f64> {
    if vec.len() != pencil.n_dof {
        return Err(Error::Argument(format!(
            "vector has {} entries for {} DOFs",
            vec.len(),
            pencil.n_dof
        )));
    }
    if vec.iter().all(|&x| x == 0.0) {
        return Err(Error::Argument("residual of the zero vector".into()));
    }
    let kv = pencil.k.mul(vec);
    let mv = pencil.m.mul(vec);
    let r: Vec<f64> = kv.iter().zip(&mv).map(|(a, b)| a - lambda * b).collect();
    Ok(norm(&r) / (norm(&mv) * lambda.max(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PlanePoint;
    use crate::mesh::{BoundaryEdge, Provenance};

    fn unit_triangle() -> Mesh {
        let n = |a, b| BoundaryEdge { v: [a, b], tag: BoundaryTag::Neumann };
        Mesh {
            vertices: vec![PlanePoint::new(0.0, 0.0), PlanePoint::new(1.0, 0.0), PlanePoint::new(0.0, 1.0)],
            triangles: vec![[0, 1, 2]],
            boundary_edges: vec![n(0, 1), n(1, 2), n(2, 0)],
            provenance: Provenance::Direct { t: 0.0 },
            h_target: 1.0,
        }
    }

    #[test]
    fn right_triangle_matrices() {
        let p = assemble(&unit_triangle()).unwrap();
        let k = p.k.to_dense();
        let want = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - want[i][j]).abs() < 1e-15);
                let m = if i == j { 2.0 } else { 1.0 } / 24.0;
                assert!((p.m.get(i, j) - m).abs() < 1e-15);
            }
        }
        let ones = vec![1.0; 3];
        assert!(residual(&p, &ones, 0.0).unwrap() < 1e-13);
    }

    #[test]
    fn elimination_gives_principal_submatrix() {
        let full = assemble(&unit_triangle()).unwrap();
        let p = assemble_with_mask(&unit_triangle(), &[false, true, false]).unwrap();
        assert_eq!(p.n_dof, 2);
        assert_eq!(p.vertex_of_dof, vec![0, 2]);
        for (i, &vi) in [0, 2].iter().enumerate() {
            for (j, &vj) in [0, 2].iter().enumerate() {
                assert_eq!(p.k.get(i, j), full.k.get(vi, vj));
                assert_eq!(p.m.get(i, j), full.m.get(vi, vj));
            }
        }
        assert_eq!(p.to_nodal(&[3.0, 4.0]), vec![3.0, 0.0, 4.0]);
    }

    #[test]
    fn zero_vector_rejected() {
        let p = assemble(&unit_triangle()).unwrap();
        assert!(residual(&p, &[0.0; 3], 1.0).is_err());
        assert!(residual(&p, &[1.0, 0.0, 0.3], 1.0).unwrap() > 0.0);
    }

    #[test]
    fn zero_area_triangle_named() {
        let mut m = unit_triangle();
        m.vertices[2] = PlanePoint::new(2.0, 0.0);
        let err = assemble(&m).unwrap_err().to_string();
        assert!(err.contains("triangle 0"), "{err}");
    }
}
