//! Built-in geometries: an inclusion inside the unit square (circle or rotated
//! ellipse) and structured rectangles used by tests and benchmarks.
//!
//! The inclusion meshes are built from closed rings of nodes that are
//! star-shaped around the inclusion center. Inside the inclusion the rings
//! are scaled copies of the interface curve; outside they blend the interface
//! into the square boundary with a linearly graded spacing. Adjacent rings
//! are zipped together by angle, so the interface is always resolved by
//! mesh edges.

use std::f64::consts::PI;

use super::{Facet, Mesh, Point};
use crate::error::{Error, Result};

/// Cell marker of the inclusion.
pub const INCLUSION: i32 = 1;
/// Cell marker of the surrounding material.
pub const EXTERIOR: i32 = 2;
/// Facet marker of the square boundary.
pub const OUTER_BOUNDARY: i32 = 1;
/// Facet marker of the inclusion interface (interior edges).
pub const INTERFACE: i32 = 2;

/// Outer spacing relative to the interface spacing.
const GRADING: f64 = 4.0;
const ARC_SAMPLES: usize = 4096;

/// An ellipse with center, semi-axes and counterclockwise rotation (radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: Point,
    pub semi_major: f64,
    pub semi_minor: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn circle(center: Point, radius: f64) -> Self {
        Ellipse {
            center,
            semi_major: radius,
            semi_minor: radius,
            angle: 0.0,
        }
    }

    /// Polar radius around the center in direction `theta`.
    pub fn polar_radius(&self, theta: f64) -> f64 {
        if self.semi_major == self.semi_minor {
            return self.semi_major;
        }
        let psi = theta - self.angle;
        let (a, b) = (self.semi_major, self.semi_minor);
        a * b / ((b * psi.cos()).powi(2) + (a * psi.sin()).powi(2)).sqrt()
    }

    /// Distance from `p` to the ellipse curve (Newton on the parametric form).
    pub fn distance(&self, p: Point) -> f64 {
        let (s, c) = self.angle.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        let x = c * dx + s * dy;
        let y = -s * dx + c * dy;
        let (a, b) = (self.semi_major, self.semi_minor);
        // coarse scan then Newton refinement on the squared distance
        let mut best = 0.0;
        let mut best_d = f64::INFINITY;
        for k in 0..720 {
            let t = 2.0 * PI * k as f64 / 720.0;
            let d = (a * t.cos() - x).powi(2) + (b * t.sin() - y).powi(2);
            if d < best_d {
                best_d = d;
                best = t;
            }
        }
        let mut t = best;
        for _ in 0..30 {
            let (st, ct) = t.sin_cos();
            let ex = a * ct - x;
            let ey = b * st - y;
            let g = -ex * a * st + ey * b * ct;
            let h = a * a * st * st + b * b * ct * ct - ex * a * ct - ey * b * st;
            if h.abs() < 1e-300 {
                break;
            }
            let step = g / h;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        ((a * t.cos() - x).powi(2) + (b * t.sin() - y).powi(2)).sqrt().min(best_d.sqrt())
    }

    /// Two-sided Hausdorff distance between the ellipse and the polyline
    /// formed by the facets of `mesh` carrying `marker`; the curve side is
    /// sampled at `samples` points.
    pub fn hausdorff(&self, mesh: &Mesh, marker: i32, samples: usize) -> Result<f64> {
        let segs: Vec<[Point; 2]> = mesh.facets().iter().filter(|f| f.marker == marker).map(|f| f.nodes.map(|n| mesh.coords()[n])).collect();
        if segs.is_empty() {
            return Err(Error::UnknownMarker(marker));
        }
        // polyline side: five points per segment
        let mut d = 0.0f64;
        for s in &segs {
            for k in 0..=4 {
                let t = k as f64 / 4.0;
                d = d.max(self.distance([s[0][0] + t * (s[1][0] - s[0][0]), s[0][1] + t * (s[1][1] - s[0][1])]));
            }
        }
        for k in 0..samples {
            let p = self.point(2.0 * PI * k as f64 / samples as f64, 1.0);
            let near = segs.iter().map(|s| segment_distance(p, s)).fold(f64::INFINITY, f64::min);
            d = d.max(near);
        }
        Ok(d)
    }

    fn point(&self, theta: f64, scale: f64) -> Point {
        let r = scale * self.polar_radius(theta);
        [self.center[0] + r * theta.cos(), self.center[1] + r * theta.sin()]
    }
}

/// Disk of the given radius centered at (0.5, 0.5) inside the unit square.
/// `resolution` is the number of cells per unit length at the interface.
pub fn generate_disk_in_square(radius: f64, resolution: usize) -> Result<Mesh> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(Error::InvalidParameter(format!("disk radius {radius} must lie in (0, 0.5)")));
    }
    generate_ellipse_in_square(Ellipse::circle([0.5, 0.5], radius), resolution)
}

/// Rotated ellipse inside the unit square.
pub fn generate_ellipse_in_square(ellipse: Ellipse, resolution: usize) -> Result<Mesh> {
    if resolution < 4 {
        return Err(Error::InvalidParameter(format!("resolution {resolution} is below 4")));
    }
    let Ellipse { center, semi_major, semi_minor, .. } = ellipse;
    if !(semi_minor > 0.0 && semi_major >= semi_minor) {
        return Err(Error::InvalidParameter("ellipse axes must satisfy 0 < minor <= major".into()));
    }
    if !(center[0] > 0.0 && center[0] < 1.0 && center[1] > 0.0 && center[1] < 1.0) {
        return Err(Error::InvalidParameter("inclusion center must lie inside the unit square".into()));
    }
    let h = 1.0 / resolution as f64;
    for k in 0..ARC_SAMPLES {
        let theta = 2.0 * PI * k as f64 / ARC_SAMPLES as f64;
        if ellipse.polar_radius(theta) >= square_radius(center, theta) - 1e-9 {
            return Err(Error::InvalidParameter("inclusion does not fit inside the unit square".into()));
        }
    }

    let mut b = Builder::default();
    let center_node = b.push(center);

    // inner rings: scaled copies of the interface
    let perimeter = ring_perimeter(|t| ellipse.polar_radius(t), center);
    let mean_radius = perimeter / (2.0 * PI);
    let n_inner = ((mean_radius / h).round() as usize).max(1);
    let mut prev: Option<Vec<(f64, usize)>> = None;
    for j in 1..=n_inner {
        let scale = j as f64 / n_inner as f64;
        let n = ((scale * perimeter / h).round() as usize).max(6);
        let ring: Vec<(f64, usize)> = arc_length_angles(|t| scale * ellipse.polar_radius(t), center, n)
            .into_iter()
            .map(|t| (t, b.push(ellipse.point(t, scale))))
            .collect();
        match &prev {
            None => b.fan(center_node, &ring, INCLUSION),
            Some(inner) => b.zip(inner, &ring, INCLUSION),
        }
        prev = Some(ring);
    }
    let interface = prev.expect("at least one inner ring");
    for k in 0..interface.len() {
        let a = interface[k].1;
        let c = interface[(k + 1) % interface.len()].1;
        b.facets.push(Facet { nodes: [a, c], marker: INTERFACE });
    }

    // outer rings: blend from the interface to the square
    let h_out = GRADING * h;
    let mean_gap = (0..ARC_SAMPLES)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / ARC_SAMPLES as f64;
            square_radius(center, theta) - ellipse.polar_radius(theta)
        })
        .sum::<f64>()
        / ARC_SAMPLES as f64;
    let n_gaps = ((2.0 * mean_gap / (h + h_out)).round() as usize).max(1);
    let gaps: Vec<f64> = (0..n_gaps)
        .map(|j| h + (h_out - h) * (j as f64 + 0.5) / n_gaps as f64)
        .collect();
    let total: f64 = gaps.iter().sum();
    let mut inner = interface;
    let mut t_acc = 0.0;
    for (j, gap) in gaps.iter().enumerate() {
        t_acc += gap / total;
        let ring: Vec<(f64, usize)> = if j + 1 == n_gaps {
            let per_side = ((1.0 / h_out).round() as usize).max(2);
            square_ring(center, per_side)
                .into_iter()
                .map(|(t, p)| (t, b.push(p)))
                .collect()
        } else {
            let t = t_acc;
            let rho = |theta: f64| (1.0 - t) * ellipse.polar_radius(theta) + t * square_radius(center, theta);
            let spacing = h + (h_out - h) * t;
            let n = ((ring_perimeter(rho, center) / spacing).round() as usize).max(8);
            arc_length_angles(rho, center, n)
                .into_iter()
                .map(|theta| {
                    let r = rho(theta);
                    (theta, b.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]))
                })
                .collect()
        };
        b.zip(&inner, &ring, EXTERIOR);
        inner = ring;
    }
    for k in 0..inner.len() {
        let a = inner[k].1;
        let c = inner[(k + 1) % inner.len()].1;
        b.facets.push(Facet { nodes: [a, c], marker: OUTER_BOUNDARY });
    }
    b.finish()
}

/// Structured `n x n` right-triangle mesh of the unit square, boundary marker 1.
pub fn unit_square(n: usize) -> Result<Mesh> {
    rectangle([0.0, 0.0], [1.0, 1.0], n, n, [1, 1, 1, 1])
}

/// Structured rectangle `[lo, hi]` with `nx x ny` cells split along alternating
/// diagonals. `markers` are for the bottom, right, top and left sides.
pub fn rectangle(lo: Point, hi: Point, nx: usize, ny: usize, markers: [i32; 4]) -> Result<Mesh> {
    if nx == 0 || ny == 0 || !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::InvalidParameter("empty rectangle".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            coords.push([
                lo[0] + (hi[0] - lo[0]) * i as f64 / nx as f64,
                lo[1] + (hi[1] - lo[1]) * j as f64 / ny as f64,
            ]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let mut facets = Vec::new();
    for i in 0..nx {
        facets.push(Facet { nodes: [id(i, 0), id(i + 1, 0)], marker: markers[0] });
        facets.push(Facet { nodes: [id(i + 1, ny), id(i, ny)], marker: markers[2] });
    }
    for j in 0..ny {
        facets.push(Facet { nodes: [id(nx, j), id(nx, j + 1)], marker: markers[1] });
        facets.push(Facet { nodes: [id(0, j + 1), id(0, j)], marker: markers[3] });
    }
    let n_tri = triangles.len();
    Mesh::new(coords, triangles, vec![1; n_tri], facets)
}

#[derive(Default)]
struct Builder {
    coords: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    markers: Vec<i32>,
    facets: Vec<Facet>,
}

impl Builder {
    fn push(&mut self, p: Point) -> usize {
        self.coords.push(p);
        self.coords.len() - 1
    }

    fn tri(&mut self, mut t: [usize; 3], marker: i32) {
        if super::signed_area(&self.coords, &t) < 0.0 {
            t.swap(1, 2);
        }
        self.triangles.push(t);
        self.markers.push(marker);
    }

    fn fan(&mut self, center: usize, ring: &[(f64, usize)], marker: i32) {
        for k in 0..ring.len() {
            self.tri([center, ring[k].1, ring[(k + 1) % ring.len()].1], marker);
        }
    }

    /// Triangulates the annulus between two angle-sorted rings.
    fn zip(&mut self, inner: &[(f64, usize)], outer: &[(f64, usize)], marker: i32) {
        let (na, nb) = (inner.len(), outer.len());
        let angle = |ring: &[(f64, usize)], k: usize| ring[k % ring.len()].0 + 2.0 * PI * (k / ring.len()) as f64;
        let (mut i, mut j) = (0, 0);
        while i < na || j < nb {
            let advance_inner = if i == na {
                false
            } else if j == nb {
                true
            } else {
                angle(inner, i + 1) < angle(outer, j + 1)
            };
            if advance_inner {
                self.tri([inner[i % na].1, outer[j % nb].1, inner[(i + 1) % na].1], marker);
                i += 1;
            } else {
                self.tri([inner[i % na].1, outer[j % nb].1, outer[(j + 1) % nb].1], marker);
                j += 1;
            }
        }
    }

    fn finish(self) -> Result<Mesh> {
        Mesh::new(self.coords, self.triangles, self.markers, self.facets)
    }
}

/// Distance from `center` to the unit square boundary along direction `theta`.
fn square_radius(center: Point, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let mut r = f64::INFINITY;
    if c > 1e-15 {
        r = r.min((1.0 - center[0]) / c);
    } else if c < -1e-15 {
        r = r.min(-center[0] / c);
    }
    if s > 1e-15 {
        r = r.min((1.0 - center[1]) / s);
    } else if s < -1e-15 {
        r = r.min(-center[1] / s);
    }
    r
}

fn sample_curve(rho: impl Fn(f64) -> f64, center: Point) -> (Vec<f64>, Vec<f64>) {
    let mut thetas = Vec::with_capacity(ARC_SAMPLES + 1);
    let mut lengths = Vec::with_capacity(ARC_SAMPLES + 1);
    let mut prev: Option<Point> = None;
    let mut acc = 0.0;
    for k in 0..=ARC_SAMPLES {
        let theta = 2.0 * PI * k as f64 / ARC_SAMPLES as f64;
        let r = rho(theta);
        let p = [center[0] + r * theta.cos(), center[1] + r * theta.sin()];
        if let Some(q) = prev {
            acc += ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        }
        prev = Some(p);
        thetas.push(theta);
        lengths.push(acc);
    }
    (thetas, lengths)
}

fn ring_perimeter(rho: impl Fn(f64) -> f64, center: Point) -> f64 {
    *sample_curve(rho, center).1.last().unwrap()
}

/// `n` polar angles, starting at zero, equally spaced in arc length.
fn arc_length_angles(rho: impl Fn(f64) -> f64, center: Point, n: usize) -> Vec<f64> {
    let (thetas, lengths) = sample_curve(rho, center);
    let total = *lengths.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let target = total * i as f64 / n as f64;
        while seg + 1 < lengths.len() - 1 && lengths[seg + 1] < target {
            seg += 1;
        }
        let span = lengths[seg + 1] - lengths[seg];
        let w = if span > 0.0 { (target - lengths[seg]) / span } else { 0.0 };
        out.push(thetas[seg] + w * (thetas[seg + 1] - thetas[seg]));
    }
    out
}

/// Square boundary with `per_side` segments per side (corners included),
/// sorted by polar angle around `center`.
fn square_ring(center: Point, per_side: usize) -> Vec<(f64, Point)> {
    let corners = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut pts = Vec::with_capacity(4 * per_side);
    for s in 0..4 {
        let a: Point = corners[s];
        let b: Point = corners[(s + 1) % 4];
        for k in 0..per_side {
            let w = k as f64 / per_side as f64;
            pts.push([a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]);
        }
    }
    let mut out: Vec<(f64, Point)> = pts
        .into_iter()
        .map(|p| {
            let t = (p[1] - center[1]).atan2(p[0] - center[0]).rem_euclid(2.0 * PI);
            (t, p)
        })
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn segment_distance(p: Point, s: &[Point; 2]) -> f64 {
    let d = [s[1][0] - s[0][0], s[1][1] - s[0][1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - s[0][0]) * d[0] + (p[1] - s[0][1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - s[0][0] - t * d[0]).hypot(p[1] - s[0][1] - t * d[1])
}
