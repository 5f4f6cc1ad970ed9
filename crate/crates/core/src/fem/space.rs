//! Degree-of-freedom layouts and finite-element coefficient vectors.

use std::sync::{Arc, OnceLock};

use super::sparse::Pattern;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Continuous piecewise linear scalar, one dof per node.
    P1,
    /// Continuous piecewise linear 2-vector, dofs `2 * node + component`.
    P1Vector,
    /// Continuous piecewise quadratic 2-vector over nodes then edges,
    /// dofs `2 * scalar_index + component`.
    P2Vector,
    /// P2 velocity followed by P1 pressure.
    TaylorHood,
}

/// Dof layout and operator sparsity for one family over a topology.
#[derive(Debug)]
pub struct FunctionSpace {
    family: Family,
    n_dofs: usize,
    n_nodes: usize,
    dofs_per_cell: usize,
    cell_dofs: Vec<usize>,
    pattern: Arc<Pattern>,
}

/// Lazily built spaces attached to a topology.
#[derive(Debug, Default)]
pub struct SpaceCache {
    p1: OnceLock<Arc<FunctionSpace>>,
    p1v: OnceLock<Arc<FunctionSpace>>,
    p2v: OnceLock<Arc<FunctionSpace>>,
    th: OnceLock<Arc<FunctionSpace>>,
}

impl FunctionSpace {
    /// The (cached) space of `family` over `topology`.
    pub fn of(topology: &Topology, family: Family) -> Arc<FunctionSpace> {
        let cache = &topology.spaces;
        let slot = match family {
            Family::P1 => &cache.p1,
            Family::P1Vector => &cache.p1v,
            Family::P2Vector => &cache.p2v,
            Family::TaylorHood => &cache.th,
        };
        Arc::clone(slot.get_or_init(|| Arc::new(FunctionSpace::build(topology, family))))
    }

    fn build(topo: &Topology, family: Family) -> Self {
        let nn = topo.n_nodes();
        let ne = topo.n_edges();
        let (n_dofs, per_cell) = match family {
            Family::P1 => (nn, 3),
            Family::P1Vector => (2 * nn, 6),
            Family::P2Vector => (2 * (nn + ne), 12),
            Family::TaylorHood => (2 * (nn + ne) + nn, 15),
        };
        let mut cell_dofs = Vec::with_capacity(per_cell * topo.n_triangles());
        for (tri, edges) in topo.triangles().iter().zip(topo.triangle_edges()) {
            match family {
                Family::P1 => cell_dofs.extend_from_slice(tri),
                Family::P1Vector => {
                    for &n in tri {
                        cell_dofs.extend([2 * n, 2 * n + 1]);
                    }
                }
                Family::P2Vector | Family::TaylorHood => {
                    let scalar = [tri[0], tri[1], tri[2], nn + edges[0], nn + edges[1], nn + edges[2]];
                    for s in scalar {
                        cell_dofs.extend([2 * s, 2 * s + 1]);
                    }
                    if family == Family::TaylorHood {
                        let off = 2 * (nn + ne);
                        cell_dofs.extend(tri.iter().map(|&n| off + n));
                    }
                }
            }
        }
        let pattern = Arc::new(Pattern::from_cells(n_dofs, cell_dofs.chunks_exact(per_cell)));
        FunctionSpace {
            family,
            n_dofs,
            n_nodes: nn,
            dofs_per_cell: per_cell,
            cell_dofs,
            pattern,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn cell_dofs(&self, t: usize) -> &[usize] {
        &self.cell_dofs[t * self.dofs_per_cell..(t + 1) * self.dofs_per_cell]
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Offset of the pressure block in a Taylor-Hood vector.
    pub fn pressure_offset(&self) -> usize {
        match self.family {
            Family::TaylorHood => self.n_dofs - self.n_nodes,
            _ => self.n_dofs,
        }
    }
}

/// Coefficient vector of a finite-element function on a mesh.
#[derive(Debug, Clone)]
pub struct FeField {
    mesh: Arc<Mesh>,
    family: Family,
    values: Vec<f64>,
}

impl FeField {
    pub fn new(mesh: Arc<Mesh>, family: Family, values: Vec<f64>) -> Result<Self> {
        let n = FunctionSpace::of(mesh.topology(), family).n_dofs();
        if values.len() != n {
            return Err(Error::SpaceMismatch);
        }
        Ok(FeField { mesh, family, values })
    }

    pub fn zeros(mesh: Arc<Mesh>, family: Family) -> Self {
        let n = FunctionSpace::of(mesh.topology(), family).n_dofs();
        FeField { mesh, family, values: vec![0.0; n] }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn space(&self) -> Arc<FunctionSpace> {
        FunctionSpace::of(self.mesh.topology(), self.family)
    }

    /// Same family on the same mesh geometry.
    pub fn compatible(&self, other: &FeField) -> bool {
        self.family == other.family && self.mesh.same_geometry(&other.mesh)
    }
}
