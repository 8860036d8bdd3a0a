use std::fmt;
use std::sync::Arc;

use super::quadrature::quadrature;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh, Point, VertexOrigin};

/// Closed-form scalar function of position.
pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Closed-form function of a boundary point and its outward normal.
pub type BoundaryFn = Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>;

/// A twice differentiable closed-form field together with its gradient and
/// Laplacian, supplied by the caller.
#[derive(Clone)]
pub struct SmoothField {
    pub value: ScalarFn,
    pub gradient: Arc<dyn Fn(Point) -> [f64; 2] + Send + Sync>,
    pub laplacian: ScalarFn,
}

impl fmt::Debug for SmoothField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SmoothField")
    }
}

impl SmoothField {
    pub fn new(
        value: impl Fn(Point) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(Point) -> [f64; 2] + Send + Sync + 'static,
        laplacian: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            laplacian: Arc::new(laplacian),
        }
    }

    /// `a + b x1 + c x2`.
    pub fn affine(a: f64, b: f64, c: f64) -> Self {
        Self::new(move |x| a + b * x[0] + c * x[1], move |_| [b, c], |_| 0.0)
    }

    pub fn eval(&self, x: Point) -> f64 {
        (self.value)(x)
    }

    /// Normal derivative `grad u . n` as a boundary function.
    pub fn normal_derivative(&self) -> BoundaryFn {
        let grad = Arc::clone(&self.gradient);
        Arc::new(move |x, n| {
            let g = grad(x);
            g[0] * n[0] + g[1] * n[1]
        })
    }
}

/// Continuous piecewise-linear field given by its nodal values.
#[derive(Clone, Debug)]
pub struct FeField {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl FeField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.num_vertices(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("nodal value {} at vertex {i}", values[i])));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self::constant(mesh, 0.0)
    }

    pub fn constant(mesh: &Arc<Mesh>, c: f64) -> Self {
        Self {
            values: vec![c; mesh.num_vertices()],
            mesh: Arc::clone(mesh),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_mesh(&self, other: &FeField) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || self.mesh.same_geometry(&other.mesh)
    }

    pub(crate) fn check_mesh(&self, other: &FeField) -> Result<()> {
        if self.same_mesh(other) {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    pub(crate) fn check_on(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh.same_geometry(mesh) {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    /// Value at barycentric coordinates `bary` inside triangle `t`.
    pub fn eval_in(&self, t: usize, bary: [f64; 3]) -> f64 {
        let tri = self.mesh.triangles()[t];
        bary[0] * self.values[tri[0]] + bary[1] * self.values[tri[1]] + bary[2] * self.values[tri[2]]
    }

    pub fn scaled(&self, alpha: f64) -> FeField {
        FeField {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &FeField) -> Result<FeField> {
        self.check_mesh(other)?;
        Ok(FeField {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }
}

/// Values at the three Gauss nodes of every boundary edge (zero on edges
/// outside the selected tag set).
#[derive(Clone, Debug)]
pub struct BoundaryField {
    mesh: Arc<Mesh>,
    values: Vec<[f64; 3]>,
}

impl BoundaryField {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self {
            values: vec![[0.0; 3]; mesh.boundary_edges().len()],
            mesh: Arc::clone(mesh),
        }
    }

    /// Samples `f(x, n)` at the Gauss nodes of edges whose tag is in `tags`.
    pub fn from_fn(mesh: &Arc<Mesh>, tags: &[BoundaryTag], f: impl Fn(Point, Point) -> f64) -> Self {
        let rule = &quadrature().edge;
        let values = mesh
            .boundary_edges()
            .iter()
            .map(|e| {
                if !tags.contains(&e.tag) {
                    return [0.0; 3];
                }
                let [a, b] = e.vertices;
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                rule.points.map(|s| f(lerp(pa, pb, s), e.normal))
            })
            .collect();
        Self {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    /// Trace of a P1 field at the Gauss nodes.
    pub fn trace(w: &FeField, tags: &[BoundaryTag]) -> Self {
        let rule = &quadrature().edge;
        let mesh = w.mesh();
        let values = mesh
            .boundary_edges()
            .iter()
            .map(|e| {
                if !tags.contains(&e.tag) {
                    return [0.0; 3];
                }
                let (wa, wb) = (w.values()[e.vertices[0]], w.values()[e.vertices[1]]);
                rule.points.map(|s| (1.0 - s) * wa + s * wb)
            })
            .collect();
        Self {
            mesh: Arc::clone(mesh),
            values,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> BoundaryField {
        BoundaryField {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|v| v.map(&f)).collect(),
        }
    }

    pub fn zip_map(&self, other: &BoundaryField, f: impl Fn(f64, f64) -> f64) -> Result<BoundaryField> {
        if !self.mesh.same_geometry(&other.mesh) {
            return Err(Error::MeshMismatch);
        }
        Ok(BoundaryField {
            mesh: Arc::clone(&self.mesh),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])])
                .collect(),
        })
    }

    /// `int f(values) dGamma` over edges with a tag in `tags`.
    pub fn integrate(&self, tags: &[BoundaryTag], f: impl Fn(f64) -> f64) -> f64 {
        let rule = &quadrature().edge;
        self.mesh
            .boundary_edges()
            .iter()
            .zip(&self.values)
            .filter(|(e, _)| tags.contains(&e.tag))
            .map(|(e, vals)| {
                let len = e.length(&self.mesh);
                len * (0..3).map(|q| rule.weights[q] * f(vals[q])).sum::<f64>()
            })
            .sum()
    }

    /// L2 norm over the tagged boundary part.
    pub fn l2_norm(&self, tags: &[BoundaryTag]) -> f64 {
        self.integrate(tags, |v| v * v).sqrt()
    }
}

pub(crate) fn lerp(a: Point, b: Point, s: f64) -> Point {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// Nodal interpolant.
pub fn interpolate(f: impl Fn(Point) -> f64, mesh: &Arc<Mesh>) -> Result<FeField> {
    let values: Vec<f64> = mesh.vertices().iter().map(|&x| f(x)).collect();
    FeField::new(Arc::clone(mesh), values)
}

/// Exact embedding of a P1 field into a nested refinement of its mesh.
pub fn prolong(coarse: &FeField, fine: &Arc<Mesh>) -> Result<FeField> {
    // Refinement chain from `fine` back to the coarse mesh.
    let mut chain: Vec<&Arc<Mesh>> = Vec::new();
    let mut cursor = fine;
    while !cursor.same_geometry(coarse.mesh()) {
        chain.push(cursor);
        cursor = match cursor.refinement() {
            Some(r) => &r.parent,
            None => {
                return Err(Error::NonNested(
                    "target mesh is not a refinement descendant of the field's mesh".into(),
                ))
            }
        };
    }
    let mut values = coarse.values().to_vec();
    for level in chain.iter().rev() {
        let origins = &level.refinement().expect("chain members are refined meshes").origins;
        values = origins
            .iter()
            .map(|o| match *o {
                VertexOrigin::Vertex(i) => values[i],
                VertexOrigin::Midpoint(a, b) => 0.5 * (values[a] + values[b]),
            })
            .collect();
    }
    FeField::new(Arc::clone(fine), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_unit_square_mesh, refine_uniform};
    use std::f64::consts::PI;

    #[test]
    fn interpolation() {
        let mesh = Arc::new(build_unit_square_mesh(2).unwrap());
        assert!(interpolate(|_| 0.0, &mesh).unwrap().values().iter().all(|&v| v == 0.0));
        let lin = interpolate(|x| -0.2 * x[0], &mesh).unwrap();
        for (v, p) in lin.values().iter().zip(mesh.vertices()) {
            assert_eq!(*v, -0.2 * p[0]);
        }
        let s = interpolate(|x| (PI * x[0]).sin() * (PI * x[1]).sin(), &mesh).unwrap();
        assert!((s.values()[4] - 1.0).abs() < 1e-15);
        for (i, v) in s.values().iter().enumerate() {
            if i != 4 {
                assert!(v.abs() < 1e-15);
            }
        }
        assert!(matches!(interpolate(|_| f64::NAN, &mesh), Err(Error::NonFinite(_))));
    }

    #[test]
    fn prolongation_reproduces_linears() {
        let m2 = Arc::new(build_unit_square_mesh(2).unwrap());
        let m4 = Arc::new(refine_uniform(&m2).unwrap());
        let m8 = Arc::new(refine_uniform(&m4).unwrap());
        let f = |x: Point| 0.3 - 1.7 * x[0] + 0.25 * x[1];
        let fine = prolong(&interpolate(f, &m2).unwrap(), &m8).unwrap();
        for (v, p) in fine.values().iter().zip(m8.vertices()) {
            assert!((v - f(*p)).abs() < 1e-15);
        }
        let c = prolong(&FeField::constant(&m2, 2.5), &m4).unwrap();
        assert!(c.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn prolongation_rejects_unrelated_mesh() {
        let m2 = Arc::new(build_unit_square_mesh(2).unwrap());
        let other = Arc::new(build_unit_square_mesh(4).unwrap());
        let w = FeField::zeros(&m2);
        assert!(matches!(prolong(&w, &other), Err(Error::NonNested(_))));
    }
}
