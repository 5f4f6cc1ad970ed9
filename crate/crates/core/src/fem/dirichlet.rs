//! Strong Dirichlet conditions by symmetric elimination.

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::mesh::{Point, Topology};

/// Prescribed values on a sorted, duplicate-free set of dofs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirichletBc {
    dofs: Vec<usize>,
    values: Vec<f64>,
}

impl DirichletBc {
    /// Later entries win on duplicate dofs.
    pub fn new(pairs: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut p: Vec<(usize, f64)> = pairs.into_iter().collect();
        p.sort_by_key(|&(d, _)| d);
        let mut dofs: Vec<usize> = Vec::with_capacity(p.len());
        let mut values: Vec<f64> = Vec::with_capacity(p.len());
        for (d, v) in p {
            if dofs.last() == Some(&d) {
                *values.last_mut().unwrap() = v;
            } else {
                dofs.push(d);
                values.push(v);
            }
        }
        DirichletBc { dofs, values }
    }

    pub fn homogeneous(dofs: impl IntoIterator<Item = usize>) -> Self {
        DirichletBc::new(dofs.into_iter().map(|d| (d, 0.0)))
    }

    pub fn dofs(&self) -> &[usize] {
        &self.dofs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn merged(&self, other: &DirichletBc) -> DirichletBc {
        DirichletBc::new(self.iter().chain(other.iter()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dofs.iter().copied().zip(self.values.iter().copied())
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &d in &self.dofs {
            m[d] = true;
        }
        m
    }

    /// Same dofs with every value set to zero.
    pub fn homogenized(&self) -> DirichletBc {
        DirichletBc { dofs: self.dofs.clone(), values: vec![0.0; self.dofs.len()] }
    }

    /// Overwrites constrained entries of `x` with the prescribed values.
    pub fn impose(&self, x: &mut [f64]) {
        for (d, v) in self.iter() {
            x[d] = v;
        }
    }

    pub fn zero(&self, x: &mut [f64]) {
        for &d in &self.dofs {
            x[d] = 0.0;
        }
    }
}

/// P1 scalar condition `value(x)` on the nodes of facets carrying `markers`.
pub fn p1_bc(topo: &Topology, coords: &[Point], markers: &[i32], value: impl Fn(Point) -> f64) -> Result<DirichletBc> {
    let mask = topo.marked_node_mask(markers)?;
    Ok(DirichletBc::new(
        mask.iter().enumerate().filter(|(_, &m)| m).map(|(n, _)| (n, value(coords[n]))),
    ))
}

/// Homogeneous P1-vector condition on the nodes of facets carrying `markers`.
pub fn p1_vector_fixed(topo: &Topology, markers: &[i32]) -> Result<DirichletBc> {
    let mask = topo.marked_node_mask(markers)?;
    Ok(DirichletBc::homogeneous(
        mask.iter().enumerate().filter(|(_, &m)| m).flat_map(|(n, _)| [2 * n, 2 * n + 1]),
    ))
}

/// Eliminates constrained rows and columns, keeping the sparsity pattern.
///
/// Free rows receive the lifting `-A[:, c] g_c`; constrained rows become
/// identity rows with right-hand side `g_c`.
pub fn apply_dirichlet(op: &CsrMatrix, rhs: &[f64], bc: &DirichletBc) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = op.n_rows();
    if rhs.len() != n || op.n_cols() != n {
        return Err(Error::InvalidParameter("operator and right-hand side sizes differ".into()));
    }
    if bc.dofs.last().is_some_and(|&d| d >= n) {
        return Err(Error::InvalidParameter("constrained dof out of range".into()));
    }
    let mut g = vec![0.0; n];
    bc.impose(&mut g);
    let mask = bc.mask(n);
    let mut a = op.clone();
    let mut b = rhs.to_vec();
    let pattern = a.pattern().clone();
    let vals = a.values_mut();
    for r in 0..n {
        let start = pattern.row_ptr()[r];
        for (k, &c) in pattern.row(r).iter().enumerate() {
            let pos = start + k;
            if mask[r] {
                vals[pos] = if r == c { 1.0 } else { 0.0 };
            } else if mask[c] {
                b[r] -= vals[pos] * g[c];
                vals[pos] = 0.0;
            }
        }
    }
    for (d, v) in bc.iter() {
        if pattern.position(d, d).is_none() {
            return Err(Error::InvalidParameter(format!("dof {d} has no diagonal entry")));
        }
        b[d] = v;
    }
    Ok((a, b))
}

/// Zeroes constrained rows and columns and puts ones on their diagonal,
/// for homogeneous corrections (Newton steps, adjoints).
pub fn eliminate_homogeneous(op: &CsrMatrix, mask: &[bool]) -> CsrMatrix {
    let mut a = op.clone();
    let pattern = a.pattern().clone();
    let vals = a.values_mut();
    for r in 0..pattern.n_rows() {
        let start = pattern.row_ptr()[r];
        for (k, &c) in pattern.row(r).iter().enumerate() {
            if mask[r] || mask[c] {
                vals[start + k] = if r == c { 1.0 } else { 0.0 };
            }
        }
    }
    a
}
