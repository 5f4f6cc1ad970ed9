//! Triangular meshes, the nodal retraction and vector transport, and quality checks.
//!
//! A [`Mesh`] is a set of node coordinates over an immutable, shared
//! [`Topology`]. Shape updates only ever replace coordinates, so every mesh
//! reached from a reference mesh by deformation shares the same topology
//! (and with it the finite-element dof layouts and sparsity patterns).

mod deformation;
pub mod generate;
pub mod locate;

use std::collections::HashMap;
use std::sync::Arc;

pub use deformation::Deformation;

use crate::error::{Error, Result};
use crate::fem::space::SpaceCache;

/// Degeneracy guard relative to the reference mesh's median triangle area.
pub const AREA_EPS_FACTOR: f64 = 1e-12;

/// Default lower bound on the minimum interior angle (0.5 degrees).
pub const QUALITY_MIN: f64 = 0.5 * std::f64::consts::PI / 180.0;

pub type Point = [f64; 2];

/// A marked edge. Boundary edges are always marked; interior edges (for
/// example a material interface) may be marked too.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    pub nodes: [usize; 2],
    pub marker: i32,
}

/// Connectivity shared by a reference mesh and all of its deformations.
#[derive(Debug)]
pub struct Topology {
    n_nodes: usize,
    triangles: Vec<[usize; 3]>,
    cell_markers: Vec<i32>,
    facets: Vec<Facet>,
    edges: Vec<[usize; 2]>,
    /// Edge opposite to each local vertex.
    triangle_edges: Vec<[usize; 3]>,
    /// Adjacent triangles of each edge; `usize::MAX` marks a missing neighbour.
    edge_cells: Vec<[usize; 2]>,
    boundary_edges: Vec<usize>,
    edge_lookup: HashMap<[usize; 2], usize>,
    reference_median_area: f64,
    pub(crate) spaces: SpaceCache,
}

impl Topology {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn cell_markers(&self) -> &[i32] {
        &self.cell_markers
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangle_edges(&self) -> &[[usize; 3]] {
        &self.triangle_edges
    }

    pub fn edge_cells(&self, edge: usize) -> [usize; 2] {
        self.edge_cells[edge]
    }

    pub fn boundary_edges(&self) -> &[usize] {
        &self.boundary_edges
    }

    /// Index of the edge joining `a` and `b`, if any.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&sorted_pair(a, b)).copied()
    }

    pub fn reference_median_area(&self) -> f64 {
        self.reference_median_area
    }

    /// Nodes lying on the topological boundary.
    pub fn boundary_node_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_nodes];
        for &e in &self.boundary_edges {
            for &n in &self.edges[e] {
                mask[n] = true;
            }
        }
        mask
    }

    /// Nodes touched by any facet carrying one of `markers`.
    pub fn marked_node_mask(&self, markers: &[i32]) -> Result<Vec<bool>> {
        for &m in markers {
            if !self.facets.iter().any(|f| f.marker == m) {
                return Err(Error::UnknownMarker(m));
            }
        }
        let mut mask = vec![false; self.n_nodes];
        for f in self.facets.iter().filter(|f| markers.contains(&f.marker)) {
            mask[f.nodes[0]] = true;
            mask[f.nodes[1]] = true;
        }
        Ok(mask)
    }

    pub fn facets_with_marker(&self, marker: i32) -> impl Iterator<Item = &Facet> {
        self.facets.iter().filter(move |f| f.marker == marker)
    }

    pub fn has_marker(&self, marker: i32) -> bool {
        self.facets.iter().any(|f| f.marker == marker)
    }

    /// The triangle on the given side of a facet: for boundary facets the unique
    /// adjacent cell.
    pub fn facet_cell(&self, facet: &Facet) -> Option<usize> {
        let e = self.edge_index(facet.nodes[0], facet.nodes[1])?;
        let [a, _] = self.edge_cells[e];
        Some(a)
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

/// Node coordinates over a shared topology.
#[derive(Debug, Clone)]
pub struct Mesh {
    topology: Arc<Topology>,
    coords: Vec<Point>,
}

impl Mesh {
    /// Builds and validates a mesh. Triangles must be counterclockwise and every
    /// boundary edge must carry a facet marker.
    pub fn new(
        coords: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        cell_markers: Vec<i32>,
        facets: Vec<Facet>,
    ) -> Result<Self> {
        let n_nodes = coords.len();
        if cell_markers.len() != triangles.len() {
            return Err(Error::InvalidMesh(format!(
                "{} cell markers for {} triangles",
                cell_markers.len(),
                triangles.len()
            )));
        }
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("mesh has no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&n| n >= n_nodes) {
                return Err(Error::InvalidMesh(format!("triangle {t} has a node index out of range")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a node")));
            }
        }
        let mut areas: Vec<f64> = triangles.iter().map(|t| signed_area(&coords, t)).collect();
        for (t, &a) in areas.iter().enumerate() {
            if !(a > 0.0) {
                return Err(Error::DegenerateMesh { triangle: t, area: a });
            }
        }
        let mid = areas.len() / 2;
        let (_, median, _) = areas.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        let reference_median_area = *median;

        let mut edge_lookup: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::new();
        let mut edge_cells: Vec<[usize; 2]> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for (i, slot) in te.iter_mut().enumerate() {
                let key = sorted_pair(tri[(i + 1) % 3], tri[(i + 2) % 3]);
                let e = *edge_lookup.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_cells.push([usize::MAX; 2]);
                    edges.len() - 1
                });
                let cells = &mut edge_cells[e];
                if cells[0] == usize::MAX {
                    cells[0] = t;
                } else if cells[1] == usize::MAX {
                    cells[1] = t;
                } else {
                    return Err(Error::InvalidMesh(format!("edge {key:?} is shared by more than two triangles")));
                }
                *slot = e;
            }
            triangle_edges.push(te);
        }
        let boundary_edges: Vec<usize> =
            (0..edges.len()).filter(|&e| edge_cells[e][1] == usize::MAX).collect();

        let mut marked = vec![false; edges.len()];
        for f in &facets {
            let key = sorted_pair(f.nodes[0], f.nodes[1]);
            match edge_lookup.get(&key) {
                Some(&e) => marked[e] = true,
                None => {
                    return Err(Error::InvalidMesh(format!("facet {:?} is not a mesh edge", f.nodes)));
                }
            }
        }
        if let Some(&e) = boundary_edges.iter().find(|&&e| !marked[e]) {
            return Err(Error::InvalidMesh(format!("boundary edge {:?} has no facet marker", edges[e])));
        }

        let topology = Topology {
            n_nodes,
            triangles,
            cell_markers,
            facets,
            edges,
            triangle_edges,
            edge_cells,
            boundary_edges,
            edge_lookup,
            reference_median_area,
            spaces: SpaceCache::default(),
        };
        Ok(Mesh {
            topology: Arc::new(topology),
            coords,
        })
    }

    /// Same topology, new coordinates. Fails if any triangle degenerates.
    pub fn with_coords(&self, coords: Vec<Point>) -> Result<Self> {
        if coords.len() != self.coords.len() {
            return Err(Error::ConnectivityMismatch(format!(
                "{} coordinates for {} nodes",
                coords.len(),
                self.coords.len()
            )));
        }
        let eps = AREA_EPS_FACTOR * self.topology.reference_median_area;
        for (t, tri) in self.topology.triangles.iter().enumerate() {
            let a = signed_area(&coords, tri);
            if !(a > eps) {
                return Err(Error::DegenerateMesh { triangle: t, area: a });
            }
        }
        Ok(Mesh {
            topology: Arc::clone(&self.topology),
            coords,
        })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topology
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.topology.triangles.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.topology.triangles
    }

    pub fn cell_markers(&self) -> &[i32] {
        &self.topology.cell_markers
    }

    pub fn facets(&self) -> &[Facet] {
        &self.topology.facets
    }

    pub fn triangle_coords(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.topology.triangles[t];
        [self.coords[a], self.coords[b], self.coords[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(&self.coords, &self.topology.triangles[t])
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    pub fn same_topology(&self, other: &Mesh) -> bool {
        Arc::ptr_eq(&self.topology, &other.topology)
    }

    /// Same topology and bit-identical coordinates.
    pub fn same_geometry(&self, other: &Mesh) -> bool {
        self.same_topology(other) && self.coords == other.coords
    }

    /// Outward unit normal and length of a boundary facet.
    pub fn facet_normal(&self, facet: &Facet) -> Option<(Point, f64)> {
        let cell = self.topology.facet_cell(facet)?;
        let [a, b] = facet.nodes;
        let (pa, pb) = (self.coords[a], self.coords[b]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let mut n = [d[1] / len, -d[0] / len];
        // orient away from the opposite vertex of the adjacent cell
        let tri = self.topology.triangles[cell];
        let opp = tri.iter().copied().find(|&v| v != a && v != b)?;
        let po = self.coords[opp];
        if (po[0] - pa[0]) * n[0] + (po[1] - pa[1]) * n[1] > 0.0 {
            n = [-n[0], -n[1]];
        }
        Some((n, len))
    }
}

pub(crate) fn signed_area(coords: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// Perturbation of identity: moves every node by its displacement.
pub fn apply_deformation(mesh: &Mesh, d: &Deformation) -> Result<Mesh> {
    if !d.host().same_topology(mesh) || d.len() != mesh.n_nodes() {
        return Err(Error::ConnectivityMismatch(
            "deformation is hosted on a different topology".into(),
        ));
    }
    let coords = mesh
        .coords
        .iter()
        .zip(d.values())
        .map(|(x, v)| [x[0] + v[0], x[1] + v[1]])
        .collect();
    mesh.with_coords(coords)
}

/// Nodal difference `deformed - reference`, hosted on `reference`.
pub fn inverse_retraction(reference: &Arc<Mesh>, deformed: &Mesh) -> Result<Deformation> {
    if !reference.same_topology(deformed) {
        return Err(Error::ConnectivityMismatch(
            "meshes do not share a topology".into(),
        ));
    }
    let values = deformed
        .coords
        .iter()
        .zip(&reference.coords)
        .map(|(y, x)| [y[0] - x[0], y[1] - x[1]])
        .collect();
    Ok(Deformation::new(Arc::clone(reference), values))
}

/// Re-hosts a deformation on `target`, keeping its nodal values.
pub fn transport(d: &Deformation, target: &Arc<Mesh>) -> Result<Deformation> {
    if !d.host().same_topology(target) {
        return Err(Error::ConnectivityMismatch(
            "transport target has a different topology".into(),
        ));
    }
    Ok(Deformation::new(Arc::clone(target), d.values().to_vec()))
}

/// Minimum interior angle over all triangles, in radians.
pub fn quality(mesh: &Mesh) -> f64 {
    (0..mesh.n_triangles())
        .map(|t| min_angle(&mesh.triangle_coords(t)))
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn min_angle(p: &[Point; 3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cross = u[0] * v[1] - u[1] * v[0];
        let dot = u[0] * v[0] + u[1] * v[1];
        best = best.min(cross.abs().atan2(dot));
    }
    best
}
