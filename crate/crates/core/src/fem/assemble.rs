//! Element loops for the P1 forms: stiffness, mass and linear elasticity.

use std::collections::BTreeMap;

use super::element::{bary_to_point, Affine};
use super::quadrature::{DEGREE_2, DEGREE_4};
use super::space::{Family, FunctionSpace};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::par::{map_indexed, Exec};

/// Moduli of `2 mu eps(V):eps(W) + lambda div V div W + delta V.W`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ElasticityParams {
    pub mu: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl Default for ElasticityParams {
    fn default() -> Self {
        ElasticityParams { mu: 1.0, lambda: 0.0, delta: 0.0 }
    }
}

impl ElasticityParams {
    pub fn validate(&self) -> Result<()> {
        if self.mu > 0.0 && self.lambda >= 0.0 && self.delta >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("elasticity moduli {self:?} out of range")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FormKind {
    /// `coeff * grad u . grad v` on P1.
    Stiffness,
    /// `coeff * u v` on P1.
    Mass,
    /// Linear elasticity on P1 vectors, scaled by `coeff`.
    Elasticity(ElasticityParams),
}

impl FormKind {
    pub fn family(&self) -> Family {
        match self {
            FormKind::Stiffness | FormKind::Mass => Family::P1,
            FormKind::Elasticity(_) => Family::P1Vector,
        }
    }
}

/// A coefficient that is constant on each cell-marker region.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstant {
    values: BTreeMap<i32, f64>,
    default: Option<f64>,
}

impl PiecewiseConstant {
    pub fn uniform(v: f64) -> Self {
        PiecewiseConstant { values: BTreeMap::new(), default: Some(v) }
    }

    pub fn by_marker(pairs: &[(i32, f64)]) -> Self {
        PiecewiseConstant { values: pairs.iter().copied().collect(), default: None }
    }

    pub fn value(&self, marker: i32) -> Result<f64> {
        self.values
            .get(&marker)
            .copied()
            .or(self.default)
            .ok_or(Error::MissingCoefficient(marker))
    }

    /// Per-cell values for a mesh, failing on the first missing marker.
    pub fn per_cell(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        mesh.cell_markers().iter().map(|&m| self.value(m)).collect()
    }
}

/// Assembles a matrix from per-cell dense blocks. Blocks are computed with
/// `exec` and scattered sequentially in cell order.
pub fn assemble_matrix<F>(space: &FunctionSpace, n_cells: usize, exec: Exec, local: F) -> CsrMatrix
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let blocks = map_indexed(exec, n_cells, local);
    let mut m = CsrMatrix::zeros(space.pattern().clone());
    for (t, block) in blocks.iter().enumerate() {
        m.add_local(space.cell_dofs(t), block);
    }
    m
}

/// Assembles a vector from per-cell dense blocks.
pub fn assemble_vector<F>(space: &FunctionSpace, n_cells: usize, exec: Exec, local: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let blocks = map_indexed(exec, n_cells, local);
    let mut v = vec![0.0; space.n_dofs()];
    for (t, block) in blocks.iter().enumerate() {
        for (&d, &x) in space.cell_dofs(t).iter().zip(block) {
            v[d] += x;
        }
    }
    v
}

pub fn assemble_bilinear(mesh: &Mesh, form: FormKind, coeff: &PiecewiseConstant, exec: Exec) -> Result<CsrMatrix> {
    let c = coeff.per_cell(mesh)?;
    if let FormKind::Elasticity(ep) = form {
        ep.validate()?;
    }
    let space = FunctionSpace::of(mesh.topology(), form.family());
    Ok(assemble_matrix(&space, mesh.n_triangles(), exec, |t| {
        let geo = Affine::new(&mesh.triangle_coords(t));
        match form {
            FormKind::Stiffness => stiffness_local(&geo, c[t]).to_vec(),
            FormKind::Mass => mass_local(&geo, c[t]).to_vec(),
            FormKind::Elasticity(ep) => elasticity_local(&geo, &ep, c[t]).to_vec(),
        }
    }))
}

pub fn stiffness_local(geo: &Affine, alpha: f64) -> [f64; 9] {
    let mut k = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            let g = geo.grads;
            k[3 * i + j] = alpha * geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    k
}

pub fn mass_local(geo: &Affine, c: f64) -> [f64; 9] {
    let mut m = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            m[3 * i + j] = c * geo.area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    m
}

pub fn elasticity_local(geo: &Affine, ep: &ElasticityParams, scale: f64) -> [f64; 36] {
    let g = geo.grads;
    let a = geo.area;
    let mut k = [0.0; 36];
    for na in 0..3 {
        for c in 0..2 {
            for nb in 0..3 {
                for d in 0..2 {
                    let gg = g[na][0] * g[nb][0] + g[na][1] * g[nb][1];
                    let mut v = ep.mu * (if c == d { gg } else { 0.0 } + g[na][d] * g[nb][c]);
                    v += ep.lambda * g[na][c] * g[nb][d];
                    if c == d {
                        v += ep.delta * if na == nb { 1.0 / 6.0 } else { 1.0 / 12.0 };
                    }
                    k[(2 * na + c) * 6 + 2 * nb + d] = scale * a * v;
                }
            }
        }
    }
    k
}

/// `int f phi_i` for a piecewise-constant source.
pub fn load_vector(mesh: &Mesh, f: &PiecewiseConstant, exec: Exec) -> Result<Vec<f64>> {
    let c = f.per_cell(mesh)?;
    let space = FunctionSpace::of(mesh.topology(), Family::P1);
    Ok(assemble_vector(&space, mesh.n_triangles(), exec, |t| {
        let a = mesh.signed_area(t);
        vec![c[t] * a / 3.0; 3]
    }))
}

/// `int f phi_i` for a source given pointwise, by the degree-4 rule.
pub fn load_vector_fn(mesh: &Mesh, f: impl Fn(Point) -> f64 + Sync, exec: Exec) -> Vec<f64> {
    let space = FunctionSpace::of(mesh.topology(), Family::P1);
    assemble_vector(&space, mesh.n_triangles(), exec, |t| {
        let p = mesh.triangle_coords(t);
        let a = mesh.signed_area(t);
        let mut out = vec![0.0; 3];
        for (q, w) in DEGREE_4.points.iter().zip(DEGREE_4.weights) {
            let fq = f(bary_to_point(&p, &[q[0], q[1], q[2]]));
            for k in 0..3 {
                out[k] += a * w * fq * q[k];
            }
        }
        out
    })
}

/// `||u - exact||_L2` for a P1 field by the degree-4 rule.
pub fn l2_error_p1(mesh: &Mesh, u: &[f64], exact: impl Fn(Point) -> f64) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_coords(t);
        let a = mesh.signed_area(t);
        for (q, w) in DEGREE_4.points.iter().zip(DEGREE_4.weights) {
            let uq: f64 = (0..3).map(|k| q[k] * u[tri[k]]).sum();
            let e = uq - exact(bary_to_point(&p, &[q[0], q[1], q[2]]));
            s += a * w * e * e;
        }
    }
    s.sqrt()
}

/// `int u v` for P1 functions given by nodal values, exact via the degree-2 rule.
pub fn l2_inner_p1(mesh: &Mesh, u: &[f64], v: &[f64]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t);
        for (p, w) in DEGREE_2.points.iter().zip(DEGREE_2.weights) {
            let uq: f64 = (0..3).map(|k| p[k] * u[tri[k]]).sum();
            let vq: f64 = (0..3).map(|k| p[k] * v[tri[k]]).sum();
            s += a * w * uq * vq;
        }
    }
    s
}
