use std::sync::Arc;

use super::{Mesh, Point};
use crate::error::{Error, Result};

/// A nodal displacement field (one 2D vector per node) hosted on a mesh.
#[derive(Debug, Clone)]
pub struct Deformation {
    host: Arc<Mesh>,
    values: Vec<Point>,
}

impl Deformation {
    pub fn new(host: Arc<Mesh>, values: Vec<Point>) -> Self {
        assert_eq!(host.n_nodes(), values.len(), "deformation length must match node count");
        Deformation { host, values }
    }

    pub fn zeros(host: Arc<Mesh>) -> Self {
        let n = host.n_nodes();
        Deformation::new(host, vec![[0.0, 0.0]; n])
    }

    /// From an interleaved coefficient vector `[x0, y0, x1, y1, ...]`.
    pub fn from_flat(host: Arc<Mesh>, flat: &[f64]) -> Self {
        let values = flat.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Deformation::new(host, values)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values.iter().flat_map(|v| [v[0], v[1]]).collect()
    }

    pub fn host(&self) -> &Arc<Mesh> {
        &self.host
    }

    pub fn values(&self) -> &[Point] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, other: &Deformation) -> Result<()> {
        if self.host.same_geometry(&other.host) {
            Ok(())
        } else {
            Err(Error::MeshMismatch)
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let values = self.values.iter().map(|v| [a * v[0], a * v[1]]).collect();
        Deformation::new(Arc::clone(&self.host), values)
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: f64, other: &Deformation) -> Result<Self> {
        self.check(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| [u[0] + a * v[0], u[1] + a * v[1]])
            .collect();
        Ok(Deformation::new(Arc::clone(&self.host), values))
    }

    pub fn sub(&self, other: &Deformation) -> Result<Self> {
        self.add_scaled(-1.0, other)
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| [v[0].abs(), v[1].abs()])
            .fold(0.0, f64::max)
    }

    /// Sets entries to zero wherever `mask` is true.
    pub fn zero_masked(&mut self, mask: &[bool]) {
        for (v, &m) in self.values.iter_mut().zip(mask) {
            if m {
                *v = [0.0, 0.0];
            }
        }
    }
}
