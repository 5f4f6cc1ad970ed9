//! Affine triangle geometry and reference basis functions.

use crate::mesh::Point;

/// Geometry of an affine triangle: area and P1 basis gradients.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    pub area: f64,
    pub grads: [Point; 3],
}

impl Affine {
    pub fn new(p: &[Point; 3]) -> Self {
        let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut grads = [[0.0; 2]; 3];
        for (i, g) in grads.iter_mut().enumerate() {
            let b = p[(i + 1) % 3];
            let c = p[(i + 2) % 3];
            *g = [(b[1] - c[1]) / det, (c[0] - b[0]) / det];
        }
        Affine { area: 0.5 * det, grads }
    }
}

/// P2 basis values at barycentric point `l`: vertices first, then the edge
/// opposite to each vertex.
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[1] * l[2],
        4.0 * l[0] * l[2],
        4.0 * l[0] * l[1],
    ]
}

/// Physical gradients of the P2 basis.
pub fn p2_grads(l: &[f64; 3], g: &[Point; 3]) -> [Point; 6] {
    let lin = |a: f64, ga: Point, b: f64, gb: Point| [4.0 * (a * gb[0] + b * ga[0]), 4.0 * (a * gb[1] + b * ga[1])];
    [
        [(4.0 * l[0] - 1.0) * g[0][0], (4.0 * l[0] - 1.0) * g[0][1]],
        [(4.0 * l[1] - 1.0) * g[1][0], (4.0 * l[1] - 1.0) * g[1][1]],
        [(4.0 * l[2] - 1.0) * g[2][0], (4.0 * l[2] - 1.0) * g[2][1]],
        lin(l[1], g[1], l[2], g[2]),
        lin(l[0], g[0], l[2], g[2]),
        lin(l[0], g[0], l[1], g[1]),
    ]
}

pub fn bary_to_point(p: &[Point; 3], l: &[f64; 3]) -> Point {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}
