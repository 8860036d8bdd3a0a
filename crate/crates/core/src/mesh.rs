//! Conforming triangulations of polygonal domains with tagged boundary edges.
//!
//! Meshes are immutable once built. Structured squares use row-major vertex
//! numbering and split every cell along the lower-left to upper-right
//! diagonal. Uniform (red) refinement renumbers the fine vertices row-major
//! as well, so refined structured meshes coincide with directly built ones and
//! keep a narrow matrix bandwidth.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Boundary condition carried by a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Feedback (or homogeneous Neumann, when uncontrolled) boundary part.
    NeumannControl,
    /// Homogeneous Dirichlet boundary part.
    DirichletZero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints, ordered counterclockwise with respect to `triangle`.
    pub vertices: [usize; 2],
    pub triangle: usize,
    /// Outward unit normal.
    pub normal: Point,
    pub tag: BoundaryTag,
}

impl BoundaryEdge {
    pub fn length(&self, mesh: &Mesh) -> f64 {
        let [a, b] = self.vertices;
        dist(mesh.vertices[a], mesh.vertices[b])
    }
}

/// Where a vertex of a refined mesh comes from in its parent mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VertexOrigin {
    Vertex(usize),
    Midpoint(usize, usize),
}

#[derive(Clone, Debug)]
pub struct Refinement {
    pub parent: Arc<Mesh>,
    pub origins: Vec<VertexOrigin>,
}

/// An axis-aligned straight segment, `{coord_axis = value} x [from, to]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    /// 0 fixes x1, 1 fixes x2.
    pub axis: usize,
    pub value: f64,
    pub from: f64,
    pub to: f64,
}

impl Segment {
    pub fn new(axis: usize, value: f64, from: f64, to: f64) -> Self {
        Self {
            axis,
            value,
            from: from.min(to),
            to: from.max(to),
        }
    }

    fn contains(&self, p: Point) -> bool {
        const EPS: f64 = 1e-12;
        let free = 1 - self.axis;
        (p[self.axis] - self.value).abs() <= EPS
            && p[free] >= self.from - EPS
            && p[free] <= self.to + EPS
    }
}

/// The part of the boundary carrying homogeneous Dirichlet data.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum DirichletRegion {
    #[default]
    Empty,
    Segments(Vec<Segment>),
    All,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    h: f64,
    refinement: Option<Refinement>,
}

impl Mesh {
    /// Builds a mesh from raw connectivity, validating orientation and
    /// conformity. Every boundary edge is tagged `NeumannControl`.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if !(area > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has nonpositive area {area}")));
            }
        }

        let mut edge_owners: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for local in 0..3 {
                let (a, b) = (tri[local], tri[(local + 1) % 3]);
                edge_owners.entry((a.min(b), a.max(b))).or_default().push((t, local));
            }
        }
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for owners in edge_owners.values() {
            match owners.len() {
                1 => boundary.push(owners[0]),
                2 => {}
                k => return Err(Error::InvalidMesh(format!("edge shared by {k} triangles"))),
            }
        }
        boundary.sort_unstable();

        let boundary_edges = boundary
            .into_iter()
            .map(|(t, local)| {
                let tri = triangles[t];
                let (a, b) = (tri[local], tri[(local + 1) % 3]);
                let (pa, pb) = (vertices[a], vertices[b]);
                let len = dist(pa, pb);
                BoundaryEdge {
                    vertices: [a, b],
                    triangle: t,
                    normal: [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len],
                    tag: BoundaryTag::NeumannControl,
                }
            })
            .collect();

        let h = triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |i| (tri[i], tri[(i + 1) % 3])))
            .map(|(a, b)| dist(vertices[a], vertices[b]))
            .fold(0.0, f64::max);

        Ok(Self {
            vertices,
            triangles,
            boundary_edges,
            h,
            refinement: None,
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

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Mesh size. For structured squares this is the cell width `1/n`,
    /// otherwise the longest edge.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn refinement(&self) -> Option<&Refinement> {
        self.refinement.as_ref()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Same vertices and connectivity (tags and refinement history ignored).
    pub fn same_geometry(&self, other: &Mesh) -> bool {
        std::ptr::eq(self, other)
            || (self.vertices == other.vertices && self.triangles == other.triangles)
    }

    /// Tags edges lying in `region` as `DirichletZero` and every other
    /// boundary edge as `NeumannControl`.
    pub fn tag_boundary(&self, region: &DirichletRegion) -> Result<Mesh> {
        let mut out = self.clone();
        match region {
            DirichletRegion::Empty => {
                for e in &mut out.boundary_edges {
                    e.tag = BoundaryTag::NeumannControl;
                }
            }
            DirichletRegion::All => {
                for e in &mut out.boundary_edges {
                    e.tag = BoundaryTag::DirichletZero;
                }
            }
            DirichletRegion::Segments(segments) => {
                let mut hits = vec![0usize; segments.len()];
                for e in &mut out.boundary_edges {
                    let [a, b] = e.vertices;
                    let (pa, pb) = (self.vertices[a], self.vertices[b]);
                    let hit = segments
                        .iter()
                        .position(|s| s.contains(pa) && s.contains(pb));
                    e.tag = match hit {
                        Some(i) => {
                            hits[i] += 1;
                            BoundaryTag::DirichletZero
                        }
                        None => BoundaryTag::NeumannControl,
                    };
                }
                if let Some(i) = hits.iter().position(|&h| h == 0) {
                    return Err(Error::InvalidRegion(format!(
                        "segment {:?} does not cover any boundary edge",
                        segments[i]
                    )));
                }
            }
        }
        Ok(out)
    }

    pub fn count_tag(&self, tag: BoundaryTag) -> usize {
        self.boundary_edges.iter().filter(|e| e.tag == tag).count()
    }

    /// Vertices touched by a `DirichletZero` edge.
    pub fn dirichlet_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.vertices.len()];
        for e in self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == BoundaryTag::DirichletZero)
        {
            mask[e.vertices[0]] = true;
            mask[e.vertices[1]] = true;
        }
        mask
    }

    /// `max(sup |x|^2, sup |x|)` over the boundary. For polygons the suprema
    /// are attained at boundary vertices.
    pub fn friedrichs_constant(&self) -> f64 {
        self.boundary_edges
            .iter()
            .flat_map(|e| e.vertices)
            .map(|v| {
                let r2 = self.vertices[v][0].powi(2) + self.vertices[v][1].powi(2);
                r2.max(r2.sqrt())
            })
            .fold(0.0, f64::max)
    }

    /// Plain-text dump: `vertices N` / `triangles M` / `boundary_edges B`
    /// headers, each followed by whitespace-separated rows.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "vertices {}", self.vertices.len())?;
        for p in &self.vertices {
            writeln!(out, "{:.17e} {:.17e}", p[0], p[1])?;
        }
        writeln!(out, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(out, "boundary_edges {}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            let tag = match e.tag {
                BoundaryTag::NeumannControl => "neumann",
                BoundaryTag::DirichletZero => "dirichlet",
            };
            writeln!(
                out,
                "{} {} {} {:.17e} {:.17e} {}",
                e.vertices[0], e.vertices[1], e.triangle, e.normal[0], e.normal[1], tag
            )?;
        }
        Ok(())
    }
}

/// Structured mesh of the square `[x0, x0 + side] x [y0, y0 + side]`.
pub fn build_square_mesh(origin: Point, side: f64, n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidParameter("subdivisions per side must be >= 1".into()));
    }
    if !(side > 0.0) {
        return Err(Error::InvalidParameter(format!("side length {side} must be positive")));
    }
    let step = side / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([origin[0] + i as f64 * step, origin[1] + j as f64 * step]);
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    let mut mesh = Mesh::new(vertices, triangles)?;
    mesh.h = step;
    Ok(mesh)
}

pub fn build_unit_square_mesh(n: usize) -> Result<Mesh> {
    build_square_mesh([0.0, 0.0], 1.0, n)
}

/// Red refinement: every triangle is split into four through its edge
/// midpoints. Boundary tags are inherited from the parent edges.
pub fn refine_uniform(mesh: &Arc<Mesh>) -> Result<Mesh> {
    let nv = mesh.num_vertices();
    let mut origins: Vec<VertexOrigin> = (0..nv).map(VertexOrigin::Vertex).collect();
    let mut points = mesh.vertices.clone();
    let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, points: &mut Vec<Point>, origins: &mut Vec<VertexOrigin>| {
        let key = (a.min(b), a.max(b));
        *midpoint_of.entry(key).or_insert_with(|| {
            let (pa, pb) = (mesh.vertices[key.0], mesh.vertices[key.1]);
            points.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            origins.push(VertexOrigin::Midpoint(key.0, key.1));
            points.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.num_triangles());
    for &[a, b, c] in &mesh.triangles {
        let ab = midpoint(a, b, &mut points, &mut origins);
        let bc = midpoint(b, c, &mut points, &mut origins);
        let ca = midpoint(c, a, &mut points, &mut origins);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    // Row-major renumbering: sort by (x2, x1).
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i][1]
            .total_cmp(&points[j][1])
            .then(points[i][0].total_cmp(&points[j][0]))
    });
    let mut new_index = vec![0; points.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    let vertices: Vec<Point> = order.iter().map(|&old| points[old]).collect();
    let origins: Vec<VertexOrigin> = order.iter().map(|&old| origins[old]).collect();
    for tri in &mut triangles {
        for v in tri.iter_mut() {
            *v = new_index[*v];
        }
    }

    let mut fine = Mesh::new(vertices, triangles)?;
    fine.h = 0.5 * mesh.h;

    let parent_tags: HashMap<(usize, usize), BoundaryTag> = mesh
        .boundary_edges
        .iter()
        .map(|e| {
            let [a, b] = e.vertices;
            ((a.min(b), a.max(b)), e.tag)
        })
        .collect();
    for e in &mut fine.boundary_edges {
        let parent_edge = e.vertices.iter().find_map(|&v| match origins[v] {
            VertexOrigin::Midpoint(a, b) => Some((a, b)),
            VertexOrigin::Vertex(_) => None,
        });
        let tag = parent_edge.and_then(|key| parent_tags.get(&key).copied());
        e.tag = tag.ok_or_else(|| Error::InvalidMesh("refined boundary edge without parent edge".into()))?;
    }

    fine.refinement = Some(Refinement {
        parent: Arc::clone(mesh),
        origins,
    });
    Ok(fine)
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}
