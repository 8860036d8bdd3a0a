//! Galerkin assembly of the P1 bilinear, trilinear and boundary forms.
//!
//! Volume forms use closed-form element integrals of products of barycentric
//! coordinates; boundary forms use the 3-point Gauss rule on each edge.
//! Triplets are generated in element order, so assembled matrices are
//! bit-reproducible.

use std::sync::Arc;

use super::field::{BoundaryField, FeField, ScalarFn};
use super::quadrature::quadrature;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, Point};
use crate::sparse::SparseMatrix;

/// Area and barycentric-coordinate gradients of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct ElementGeometry {
    pub area: f64,
    pub grads: [[f64; 2]; 3],
}

impl ElementGeometry {
    pub fn new(p: [Point; 3]) -> Self {
        let two_area = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let grads = [
            [(p[1][1] - p[2][1]) / two_area, (p[2][0] - p[1][0]) / two_area],
            [(p[2][1] - p[0][1]) / two_area, (p[0][0] - p[2][0]) / two_area],
            [(p[0][1] - p[1][1]) / two_area, (p[1][0] - p[0][0]) / two_area],
        ];
        Self {
            area: 0.5 * two_area,
            grads,
        }
    }

    pub fn of(mesh: &Mesh, t: usize) -> Self {
        Self::new(mesh.triangle_points(t))
    }

    /// `int phi_i phi_j` on the element.
    pub fn mass(&self) -> [[f64; 3]; 3] {
        let d = self.area / 6.0;
        let o = self.area / 12.0;
        [[d, o, o], [o, d, o], [o, o, d]]
    }

    pub fn stiffness(&self) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (gi, gj) = (self.grads[i], self.grads[j]);
                k[i][j] = self.area * (gi[0] * gj[0] + gi[1] * gj[1]);
            }
        }
        k
    }

    /// `grad phi_j . (1, 1)` for each local basis function.
    pub fn directional(&self) -> [f64; 3] {
        self.grads.map(|g| g[0] + g[1])
    }
}

fn assemble_elementwise(mesh: &Mesh, mut element: impl FnMut(usize, &ElementGeometry) -> [[f64; 3]; 3]) -> SparseMatrix {
    let n = mesh.num_vertices();
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let geom = ElementGeometry::of(mesh, t);
        let local = element(t, &geom);
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], local[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets).expect("element indices are valid vertices")
}

/// `(phi_j, phi_i)`.
pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix {
    assemble_elementwise(mesh, |_, g| g.mass())
}

/// `(grad phi_j, grad phi_i)`.
pub fn assemble_stiffness(mesh: &Mesh) -> SparseMatrix {
    assemble_elementwise(mesh, |_, g| g.stiffness())
}

/// Matrix of `w -> (v (grad w . 1), phi_i)`.
pub fn assemble_convection_by_transport(v: &FeField) -> SparseMatrix {
    let mesh = v.mesh();
    assemble_elementwise(mesh, |t, g| {
        let tri = mesh.triangles()[t];
        let m = g.mass();
        let dir = g.directional();
        // (M_e v)_i = int v phi_i
        let mv: [f64; 3] = std::array::from_fn(|i| (0..3).map(|k| m[i][k] * v.values()[tri[k]]).sum());
        std::array::from_fn(|i| std::array::from_fn(|j| dir[j] * mv[i]))
    })
}

/// Matrix of `w -> (w (grad v . 1), phi_i)`.
pub fn assemble_convection_by_gradient(v: &FeField) -> SparseMatrix {
    let mesh = v.mesh();
    assemble_elementwise(mesh, |t, g| {
        let tri = mesh.triangles()[t];
        let dir = g.directional();
        let slope: f64 = (0..3).map(|k| dir[k] * v.values()[tri[k]]).sum();
        g.mass().map(|row| row.map(|m| slope * m))
    })
}

/// Load vector `(f, phi_i)` by the degree-4 interior rule.
pub fn load_vector(mesh: &Mesh, f: &ScalarFn) -> Vec<f64> {
    let rule = &quadrature().interior;
    let mut b = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let two_area = 2.0 * mesh.triangle_area(t);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let fx = f(x) * w * two_area;
            for i in 0..3 {
                b[tri[i]] += fx * bary[i];
            }
        }
    }
    b
}

fn check_boundary_mesh(field: &BoundaryField, mesh: &Mesh) -> Result<()> {
    if field.mesh().same_geometry(mesh) {
        Ok(())
    } else {
        Err(Error::MeshMismatch)
    }
}

/// `<g phi_j, phi_i>` over edges tagged with one of `tags`.
pub fn assemble_boundary_mass(mesh: &Arc<Mesh>, g: &BoundaryField, tags: &[BoundaryTag]) -> Result<SparseMatrix> {
    check_boundary_mesh(g, mesh)?;
    let rule = &quadrature().edge;
    let n = mesh.num_vertices();
    let mut triplets = Vec::new();
    for (e, gq) in mesh.boundary_edges().iter().zip(g.values()) {
        if !tags.contains(&e.tag) {
            continue;
        }
        let len = e.length(mesh);
        let mut local = [[0.0; 2]; 2];
        for q in 0..3 {
            let s = rule.points[q];
            let phi = [1.0 - s, s];
            let wq = rule.weights[q] * len * gq[q];
            for i in 0..2 {
                for j in 0..2 {
                    local[i][j] += wq * phi[i] * phi[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                triplets.push((e.vertices[i], e.vertices[j], local[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, &triplets)
}

/// `<flux, phi_i>` over edges tagged with one of `tags`.
pub fn boundary_load(mesh: &Arc<Mesh>, flux: &BoundaryField, tags: &[BoundaryTag]) -> Result<Vec<f64>> {
    check_boundary_mesh(flux, mesh)?;
    let rule = &quadrature().edge;
    let mut b = vec![0.0; mesh.num_vertices()];
    for (e, fq) in mesh.boundary_edges().iter().zip(flux.values()) {
        if !tags.contains(&e.tag) {
            continue;
        }
        let len = e.length(mesh);
        for q in 0..3 {
            let s = rule.points[q];
            let wq = rule.weights[q] * len * fq[q];
            b[e.vertices[0]] += wq * (1.0 - s);
            b[e.vertices[1]] += wq * s;
        }
    }
    Ok(b)
}

/// `<w^3, phi_i>` over the tagged boundary part.
pub fn boundary_cubic_residual(w: &FeField, tags: &[BoundaryTag]) -> Vec<f64> {
    let cube = BoundaryField::trace(w, tags).map(|v| v * v * v);
    boundary_load(w.mesh(), &cube, tags).expect("trace lives on the field's mesh")
}

/// Jacobian of [`boundary_cubic_residual`]: `<3 w^2 phi_j, phi_i>`.
pub fn boundary_cubic_jacobian(w: &FeField, tags: &[BoundaryTag]) -> SparseMatrix {
    let weight = BoundaryField::trace(w, tags).map(|v| 3.0 * v * v);
    assemble_boundary_mass(w.mesh(), &weight, tags).expect("trace lives on the field's mesh")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::field::interpolate;
    use crate::mesh::{build_square_mesh, build_unit_square_mesh, Mesh};

    const ALL: &[BoundaryTag] = &[BoundaryTag::NeumannControl, BoundaryTag::DirichletZero];

    fn reference_triangle() -> Arc<Mesh> {
        Arc::new(Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap())
    }

    fn assert_matrix(a: &SparseMatrix, expected: &[[f64; 3]; 3], tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - expected[i][j]).abs() < tol, "({i},{j}) {} vs {}", a.get(i, j), expected[i][j]);
            }
        }
    }

    #[test]
    fn reference_mass() {
        let m = assemble_mass(&reference_triangle());
        let e = [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]].map(|r| r.map(|v| v / 24.0));
        assert_matrix(&m, &e, 1e-16);
    }

    #[test]
    fn reference_stiffness() {
        let k = assemble_stiffness(&reference_triangle());
        let e = [[2.0, -1.0, -1.0], [-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]].map(|r| r.map(|v| v / 2.0));
        assert_matrix(&k, &e, 1e-16);
    }

    #[test]
    fn mass_partition_of_unity() {
        let mesh = build_unit_square_mesh(5).unwrap();
        let m = assemble_mass(&mesh);
        assert!((m.sum() - 1.0).abs() < 1e-13);
        let ones = vec![1.0; mesh.num_vertices()];
        let m1 = m.spmv(&ones).unwrap();
        assert!((m1.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn stiffness_kernel_and_energy() {
        let mesh = Arc::new(build_unit_square_mesh(6).unwrap());
        let k = assemble_stiffness(&mesh);
        let k1 = k.spmv(&vec![1.0; mesh.num_vertices()]).unwrap();
        assert!(k1.iter().all(|v| v.abs() <= 1e-13));
        let w = interpolate(|x| x[0], &mesh).unwrap();
        let kw = k.spmv(w.values()).unwrap();
        let energy: f64 = kw.iter().zip(w.values()).map(|(a, b)| a * b).sum();
        assert!((energy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transport_with_unit_coefficient() {
        let mesh = Arc::new(build_unit_square_mesh(4).unwrap());
        assert!(assemble_convection_by_transport(&FeField::zeros(&mesh)).values().iter().all(|&v| v == 0.0));
        let a = assemble_convection_by_transport(&FeField::constant(&mesh, 1.0));
        let w = interpolate(|x| x[0], &mesh).unwrap();
        let aw = a.spmv(w.values()).unwrap();
        assert!((aw.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_convection() {
        let mesh = Arc::new(build_unit_square_mesh(4).unwrap());
        let zero = assemble_convection_by_gradient(&FeField::constant(&mesh, 3.0));
        assert!(zero.values().iter().all(|v| v.abs() < 1e-14));
        let m = assemble_mass(&mesh);
        let g = assemble_convection_by_gradient(&interpolate(|x| x[0], &mesh).unwrap());
        let diff = g.add(-1.0, &m).unwrap();
        assert!(diff.values().iter().all(|v| v.abs() < 1e-13));
        let g = assemble_convection_by_gradient(&interpolate(|x| -0.2 * x[0], &mesh).unwrap());
        let diff = g.add(0.2, &m).unwrap();
        assert!(diff.values().iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn boundary_mass_perimeter() {
        let mesh = Arc::new(build_unit_square_mesh(4).unwrap());
        let one = BoundaryField::from_fn(&mesh, ALL, |_, _| 1.0);
        let b = assemble_boundary_mass(&mesh, &one, ALL).unwrap();
        assert!((b.sum() - 4.0).abs() < 1e-13);
        let none = assemble_boundary_mass(&mesh, &one, &[BoundaryTag::DirichletZero]).unwrap();
        assert_eq!(none.nnz(), 0);
    }

    #[test]
    fn boundary_mass_single_edge_block() {
        // The bottom-left edge of the n = 4 mesh runs from vertex 0 to vertex 1.
        let mesh = Arc::new(build_unit_square_mesh(4).unwrap());
        let one = BoundaryField::from_fn(&mesh, ALL, |_, _| 1.0);
        let edge = mesh.boundary_edges().iter().position(|e| {
            let mut v = e.vertices;
            v.sort();
            v == [0, 1]
        });
        assert!(edge.is_some());
        let b = assemble_boundary_mass(&mesh, &one, ALL).unwrap();
        // Vertex 1 is shared by two bottom edges, vertex 0 by the bottom and left edges;
        // the off-diagonal entry belongs to this edge alone.
        assert!((b.get(0, 1) - 0.25 / 6.0).abs() < 1e-16);
        assert!((b.get(1, 0) - 0.25 / 6.0).abs() < 1e-16);
        assert!((b.get(1, 1) - 2.0 * 0.25 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn cubic_residual_values() {
        let mesh = Arc::new(build_unit_square_mesh(4).unwrap());
        assert!(boundary_cubic_residual(&FeField::zeros(&mesh), ALL).iter().all(|&v| v == 0.0));
        let r = boundary_cubic_residual(&FeField::constant(&mesh, 1.0), ALL);
        assert!((r.iter().sum::<f64>() - 4.0).abs() < 1e-13);

        // Restrict to the bottom edge by tagging it alone.
        use crate::mesh::{DirichletRegion, Segment};
        let bottom = Arc::new(
            mesh.tag_boundary(&DirichletRegion::Segments(vec![Segment::new(1, 0.0, 0.0, 1.0)]))
                .unwrap(),
        );
        let w = interpolate(|x| x[0], &bottom).unwrap();
        let r = boundary_cubic_residual(&w, &[BoundaryTag::DirichletZero]);
        assert!((r.iter().sum::<f64>() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cubic_jacobian_special_cases() {
        let mesh = Arc::new(build_square_mesh([0.0, 0.0], 1.0, 3).unwrap());
        assert_eq!(boundary_cubic_jacobian(&FeField::zeros(&mesh), ALL).sum(), 0.0);
        let j = boundary_cubic_jacobian(&FeField::constant(&mesh, 1.0), ALL);
        let one = BoundaryField::from_fn(&mesh, ALL, |_, _| 1.0);
        let b = assemble_boundary_mass(&mesh, &one, ALL).unwrap();
        let diff = j.add(-3.0, &b).unwrap();
        assert!(diff.values().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn load_of_linear_function() {
        let mesh = build_unit_square_mesh(3).unwrap();
        let f: ScalarFn = Arc::new(|x| 0.04 * x[0]);
        let b = load_vector(&mesh, &f);
        assert!((b.iter().sum::<f64>() - 0.02).abs() < 1e-15);
    }
}
