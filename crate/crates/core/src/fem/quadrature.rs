//! Fixed quadrature rules: a 6-point rule on triangles (exact to degree 4)
//! and 3-point Gauss–Legendre on edges (exact to degree 5).

use std::sync::OnceLock;

/// Points in barycentric coordinates; weights sum to 1/2, the reference
/// triangle area.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// Points as edge parameter in `[0, 1]`; weights sum to 1.
#[derive(Clone, Debug)]
pub struct EdgeRule {
    pub points: [f64; 3],
    pub weights: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Quadrature {
    pub interior: TriangleRule,
    pub edge: EdgeRule,
}

impl TriangleRule {
    fn degree4() -> Self {
        let s10 = 10f64.sqrt();
        let root = (38.0 - 44.0 * (0.4f64).sqrt()).sqrt();
        let a1 = (8.0 - s10 + root) / 18.0;
        let a2 = (8.0 - s10 - root) / 18.0;
        let r = (213125.0 - 53320.0 * s10).sqrt();
        let w1 = (620.0 + r) / 3720.0 / 2.0;
        let w2 = (620.0 - r) / 3720.0 / 2.0;
        let orbit = |a: f64| {
            let b = 1.0 - 2.0 * a;
            [[a, a, b], [a, b, a], [b, a, a]]
        };
        let mut points = Vec::with_capacity(6);
        points.extend(orbit(a1));
        points.extend(orbit(a2));
        Self {
            points,
            weights: vec![w1, w1, w1, w2, w2, w2],
        }
    }
}

impl EdgeRule {
    fn gauss3() -> Self {
        let d = 0.5 * (0.6f64).sqrt();
        Self {
            points: [0.5 - d, 0.5, 0.5 + d],
            weights: [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
        }
    }
}

pub fn quadrature() -> &'static Quadrature {
    static RULES: OnceLock<Quadrature> = OnceLock::new();
    RULES.get_or_init(|| Quadrature {
        interior: TriangleRule::degree4(),
        edge: EdgeRule::gauss3(),
    })
}
