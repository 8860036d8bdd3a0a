use std::sync::Arc;

use super::assembly::{assemble_mass, assemble_stiffness, boundary_load, ElementGeometry};
use super::field::{BoundaryField, FeField, SmoothField};
use super::quadrature::quadrature;
use crate::error::Result;
use crate::mesh::{BoundaryTag, Mesh};
use crate::sparse::solve_spd;

pub const ALL_TAGS: &[BoundaryTag] = &[BoundaryTag::NeumannControl, BoundaryTag::DirichletZero];

/// Mass-matrix solves behind the discrete Laplacian and projections.
const MASS_SOLVE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub boundary_l2: f64,
    pub boundary_l4: f64,
}

/// `sqrt(w^T M w)`, accumulated element by element.
pub fn l2_norm(w: &FeField) -> f64 {
    elementwise_quadratic(w, |g| g.mass()).sqrt()
}

/// `sqrt(w^T K w)`.
pub fn h1_seminorm(w: &FeField) -> f64 {
    elementwise_quadratic(w, |g| g.stiffness()).max(0.0).sqrt()
}

fn elementwise_quadratic(w: &FeField, local: impl Fn(&ElementGeometry) -> [[f64; 3]; 3]) -> f64 {
    let mesh = w.mesh();
    let mut acc = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = local(&ElementGeometry::of(mesh, t));
        let v = tri.map(|i| w.values()[i]);
        for i in 0..3 {
            for j in 0..3 {
                acc += v[i] * a[i][j] * v[j];
            }
        }
    }
    acc
}

pub fn norms(w: &FeField, tags: &[BoundaryTag]) -> Norms {
    let trace = BoundaryField::trace(w, tags);
    Norms {
        l2: l2_norm(w),
        h1_semi: h1_seminorm(w),
        boundary_l2: trace.integrate(tags, |v| v * v).sqrt(),
        boundary_l4: trace.integrate(tags, |v| v.powi(4)).powf(0.25),
    }
}

/// `B(v; w, z) = int v (grad w . 1) z dx`, evaluated by the interior rule.
#[allow(non_snake_case)]
pub fn trilinear_B(v: &FeField, w: &FeField, z: &FeField) -> Result<f64> {
    v.check_mesh(w)?;
    v.check_mesh(z)?;
    let mesh = v.mesh();
    let rule = &quadrature().interior;
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = ElementGeometry::of(mesh, t);
        let dir = g.directional();
        let slope: f64 = (0..3).map(|k| dir[k] * w.values()[tri[k]]).sum();
        let mut local = 0.0;
        for (bary, wq) in rule.points.iter().zip(&rule.weights) {
            local += wq * v.eval_in(t, *bary) * z.eval_in(t, *bary);
        }
        total += 2.0 * g.area * slope * local;
    }
    Ok(total)
}

/// Discrete Laplacian `d` defined through Green's formula,
/// `(d, chi) = -(grad w, grad chi) + <flux, chi>` for all P1 `chi`,
/// with `flux` the prescribed normal derivative on the whole boundary.
pub fn discrete_laplacian(mesh: &Arc<Mesh>, w: &FeField, flux: &BoundaryField) -> Result<FeField> {
    w.check_on(mesh)?;
    let m = assemble_mass(mesh);
    let k = assemble_stiffness(mesh);
    let kw = k.spmv(w.values())?;
    let b = boundary_load(mesh, flux, ALL_TAGS)?;
    let rhs: Vec<f64> = b.iter().zip(&kw).map(|(bi, ki)| bi - ki).collect();
    let d = solve_spd(&m, &rhs, MASS_SOLVE_TOL)?;
    FeField::new(Arc::clone(mesh), d)
}

/// Shifted elliptic projection: `(grad P u, grad chi) + lambda (P u, chi)
/// = (grad u, grad chi) + lambda (u, chi)`, `lambda > 0`.
pub fn elliptic_projection(mesh: &Arc<Mesh>, u: &SmoothField, lambda: f64) -> Result<FeField> {
    let a = assemble_stiffness(mesh).add(lambda, &assemble_mass(mesh))?;
    let rule = &quadrature().interior;
    let mut rhs = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let g = ElementGeometry::of(mesh, t);
        let p = mesh.triangle_points(t);
        for (bary, wq) in rule.points.iter().zip(&rule.weights) {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let (ux, gx) = (u.eval(x), (u.gradient)(x));
            let scale = 2.0 * g.area * wq;
            for i in 0..3 {
                let gi = g.grads[i];
                rhs[tri[i]] += scale * (gx[0] * gi[0] + gx[1] * gi[1] + lambda * ux * bary[i]);
            }
        }
    }
    FeField::new(Arc::clone(mesh), solve_spd(&a, &rhs, MASS_SOLVE_TOL)?)
}
