//! Point location on a triangular mesh with a uniform bucket grid.

use std::sync::Arc;

use super::{Mesh, Point};

const INSIDE_TOL: f64 = 1e-12;

#[derive(Debug)]
pub struct PointLocator {
    mesh: Arc<Mesh>,
    origin: Point,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in mesh.coords() {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
        let target = (mesh.n_triangles() as f64 / 2.0).sqrt().max(1.0);
        let cell = span / target;
        let nx = (((hi[0] - lo[0]) / cell).floor() as usize + 1).max(1);
        let ny = (((hi[1] - lo[1]) / cell).floor() as usize + 1).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for t in 0..mesh.n_triangles() {
            let tri = mesh.triangle_coords(t);
            let (mut bl, mut bh) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
            for p in &tri {
                for k in 0..2 {
                    bl[k] = bl[k].min(p[k]);
                    bh[k] = bh[k].max(p[k]);
                }
            }
            let (i0, j0) = bucket_of(lo, cell, nx, ny, bl);
            let (i1, j1) = bucket_of(lo, cell, nx, ny, bh);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t);
                }
            }
        }
        PointLocator { mesh, origin: lo, cell, nx, ny, buckets }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    /// Triangle containing `p` with its barycentric coordinates. Points outside
    /// the mesh snap to the closest point of the nearest triangle.
    pub fn locate(&self, p: Point) -> (usize, [f64; 3]) {
        let (i, j) = bucket_of(self.origin, self.cell, self.nx, self.ny, p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.nx + i] {
            let lam = barycentric(&self.mesh.triangle_coords(t), p);
            let m = lam[0].min(lam[1]).min(lam[2]);
            if m >= -INSIDE_TOL && best.as_ref().is_none_or(|b| m > b.2) {
                best = Some((t, lam, m));
            }
        }
        if let Some((t, lam, _)) = best {
            return (t, lam);
        }
        self.nearest(p)
    }

    fn nearest(&self, p: Point) -> (usize, [f64; 3]) {
        let mut best = (0, [1.0, 0.0, 0.0], f64::INFINITY);
        for t in 0..self.mesh.n_triangles() {
            let tri = self.mesh.triangle_coords(t);
            let q = closest_point(&tri, p);
            let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            if d < best.2 {
                let mut lam = barycentric(&tri, q);
                for l in &mut lam {
                    *l = l.clamp(0.0, 1.0);
                }
                let s: f64 = lam.iter().sum();
                best = (t, lam.map(|l| l / s), d);
            }
        }
        (best.0, best.1)
    }
}

fn bucket_of(origin: Point, cell: f64, nx: usize, ny: usize, p: Point) -> (usize, usize) {
    let fi = ((p[0] - origin[0]) / cell).floor();
    let fj = ((p[1] - origin[1]) / cell).floor();
    let i = if fi.is_finite() { fi.clamp(0.0, (nx - 1) as f64) as usize } else { 0 };
    let j = if fj.is_finite() { fj.clamp(0.0, (ny - 1) as f64) as usize } else { 0 };
    (i, j)
}

pub fn barycentric(tri: &[Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = *tri;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn closest_point(tri: &[Point; 3], p: Point) -> Point {
    let lam = barycentric(tri, p);
    if lam.iter().all(|&l| l >= 0.0) {
        return p;
    }
    let mut best = tri[0];
    let mut best_d = f64::INFINITY;
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let s = (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0);
        let q = [a[0] + s * ab[0], a[1] + s * ab[1]];
        let d = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        if d < best_d {
            best_d = d;
            best = q;
        }
    }
    best
}
