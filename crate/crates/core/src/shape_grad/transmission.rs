//! Adjoint and volume shape derivative of the transmission tracking problem.
//!
//! A desired state held fixed in space is sampled at the quadrature points
//! of the moving mesh, so its gradient enters the derivative; a nodal target
//! moves with the mesh and contributes no gradient term.

use std::sync::Arc;

use super::{scatter_tensor, ShapeDerivative, ShapeProblem};
use crate::error::Result;
use crate::fem::dirichlet::eliminate_homogeneous;
use crate::fem::element::Affine;
use crate::fem::quadrature::{DEGREE_2, DEGREE_4};
use crate::fem::solve::Factorization;
use crate::fem::space::{FeField, Family};
use crate::mesh::{Mesh, Point};
use crate::models::target::TrackingTarget;
use crate::models::transmission::{boundary_bc, solve_transmission, transmission_tangent, TransmissionParams};
use crate::par::{map_indexed, Exec};

/// Solves `(alpha grad p, grad v) + 3 beta (u^2 p, v) = -2 (u - u_des, v)`
/// with `p = 0` on the boundary.
pub fn solve_adjoint_transmission(
    mesh: &Arc<Mesh>,
    params: &TransmissionParams,
    u: &FeField,
    u_des: &TrackingTarget,
    exec: Exec,
) -> Result<FeField> {
    let samples = u_des.at_quadrature_points(mesh)?;
    let mut rhs = vec![0.0; mesh.n_nodes()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t);
        for (k, (q, w)) in DEGREE_2.points.iter().zip(DEGREE_2.weights).enumerate() {
            let uq: f64 = (0..3).map(|i| q[i] * u.values()[tri[i]]).sum();
            let r = uq - samples[3 * t + k].0;
            for i in 0..3 {
                rhs[tri[i]] -= 2.0 * a * w * r * q[i];
            }
        }
    }
    let bc = boundary_bc(mesh);
    bc.zero(&mut rhs);
    let op = eliminate_homogeneous(&transmission_tangent(mesh, params, u.values(), exec)?, &bc.mask(mesh.n_nodes()));
    let p = Factorization::new(&op, true)?.solve(&rhs)?;
    FeField::new(Arc::clone(mesh), Family::P1, p)
}

/// Volume-form shape derivative of `int (u - u_des)^2` subject to the
/// transmission problem, given state `u` and adjoint `p`.
pub fn shape_derivative_transmission(
    mesh: &Arc<Mesh>,
    params: &TransmissionParams,
    u: &FeField,
    p: &FeField,
    u_des: &TrackingTarget,
    exec: Exec,
) -> Result<ShapeDerivative> {
    let alpha = params.alpha().per_cell(mesh)?;
    let f = params.source().per_cell(mesh)?;
    let samples = u_des.at_quadrature_points(mesh)?;
    let (uv, pv) = (u.values(), p.values());
    let per_cell: Vec<[[f64; 2]; 3]> = map_indexed(exec, mesh.n_triangles(), |t| {
        let tri = mesh.triangles()[t];
        let geo = Affine::new(&mesh.triangle_coords(t));
        let area = geo.area;
        let ul = [uv[tri[0]], uv[tri[1]], uv[tri[2]]];
        let pl = [pv[tri[0]], pv[tri[1]], pv[tri[2]]];
        let grad = |v: [f64; 3]| -> Point {
            let g = geo.grads;
            [
                v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
                v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
            ]
        };
        let (gu, gp) = (grad(ul), grad(pl));
        let mut nodal = [[0.0; 2]; 3];
        let mut s = alpha[t] * area * (gu[0] * gp[0] + gu[1] * gp[1]) - f[t] * area * (pl[0] + pl[1] + pl[2]) / 3.0;
        for (k, (q, w)) in DEGREE_2.points.iter().zip(DEGREE_2.weights).enumerate() {
            let uq = q[0] * ul[0] + q[1] * ul[1] + q[2] * ul[2];
            let (g, gg) = samples[3 * t + k];
            let r = uq - g;
            s += area * w * r * r;
            for i in 0..3 {
                for c in 0..2 {
                    nodal[i][c] -= 2.0 * area * w * r * q[i] * gg[c];
                }
            }
        }
        if params.beta != 0.0 {
            for (q, w) in DEGREE_4.points.iter().zip(DEGREE_4.weights) {
                let uq = q[0] * ul[0] + q[1] * ul[1] + q[2] * ul[2];
                let pq = q[0] * pl[0] + q[1] * pl[1] + q[2] * pl[2];
                s += params.beta * area * w * uq * uq * uq * pq;
            }
        }
        let mut a = [[0.0; 2]; 2];
        for c in 0..2 {
            for j in 0..2 {
                a[c][j] = -alpha[t] * area * (gu[c] * gp[j] + gp[c] * gu[j]);
            }
            a[c][c] += s;
        }
        let mut local = vec![0.0; 6];
        scatter_tensor(&mut local, &[0, 1, 2], &geo.grads, &a);
        for i in 0..3 {
            nodal[i][0] += local[2 * i];
            nodal[i][1] += local[2 * i + 1];
        }
        nodal
    });
    let mut values = vec![0.0; 2 * mesh.n_nodes()];
    for (tri, nodal) in mesh.triangles().iter().zip(&per_cell) {
        for i in 0..3 {
            values[2 * tri[i]] += nodal[i][0];
            values[2 * tri[i] + 1] += nodal[i][1];
        }
    }
    let fixed = mesh.topology().boundary_node_mask();
    Ok(ShapeDerivative::new(Arc::clone(mesh), values, &fixed))
}

/// Tracking of a target by the transmission state; the
/// whole outer boundary is fixed.
#[derive(Debug, Clone)]
pub struct TransmissionProblem {
    pub params: TransmissionParams,
    pub target: Arc<TrackingTarget>,
    pub exec: Exec,
}

impl TransmissionProblem {
    pub fn new(params: TransmissionParams, target: Arc<TrackingTarget>) -> Self {
        TransmissionProblem { params, target, exec: Exec::default() }
    }
}

impl ShapeProblem for TransmissionProblem {
    fn fixed_nodes(&self, mesh: &Mesh) -> Result<Vec<bool>> {
        Ok(mesh.topology().boundary_node_mask())
    }

    fn cost(&self, mesh: &Arc<Mesh>) -> Result<f64> {
        let u = solve_transmission(mesh, &self.params, self.exec)?;
        self.target.misfit(&u)
    }

    fn cost_and_derivative(&self, mesh: &Arc<Mesh>) -> Result<(f64, ShapeDerivative)> {
        let u = solve_transmission(mesh, &self.params, self.exec)?;
        let j = self.target.misfit(&u)?;
        let p = solve_adjoint_transmission(mesh, &self.params, &u, &self.target, self.exec)?;
        let dj = shape_derivative_transmission(mesh, &self.params, &u, &p, &self.target, self.exec)?;
        Ok((j, dj))
    }
}
