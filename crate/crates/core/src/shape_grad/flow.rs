//! Adjoint and volume shape derivative of the outlet-rate tracking problem.
//!
//! The derivative is the material derivative of the weak residual tested
//! with the adjoint, for fields transported with the mesh: gradients move as
//! `-Du DV`, volumes as `div V`. Inlet, outlets and fixed walls do not move,
//! so the rates and boundary data carry no shape dependence.

use std::sync::Arc;

use super::{scatter_tensor, ShapeDerivative, ShapeProblem};
use crate::error::{Error, Result};
use crate::fem::dirichlet::eliminate_homogeneous;
use crate::fem::element::Affine;
use crate::fem::solve::Factorization;
use crate::fem::space::{FeField, Family, FunctionSpace};
use crate::fem::stokes::{flow_rate_functionals, ns_jacobian, point_states};
use crate::mesh::Mesh;
use crate::models::flow::{flow_rates, rates_misfit, solve_flow, FlowParams};
use crate::par::{map_indexed, Exec};

/// Adjoint of the linearized flow system for `1/2 sum (q_i - t_i)^2`:
/// `J^T lambda = -sum (q_i - t_i) dq_i/dz`, zero at constrained dofs.
pub fn solve_adjoint_flow(
    mesh: &Arc<Mesh>,
    params: &FlowParams,
    state: &FeField,
    targets: &[f64],
    exec: Exec,
) -> Result<FeField> {
    if targets.len() != params.outlet_markers.len() {
        return Err(Error::InvalidParameter("one target rate per outlet expected".into()));
    }
    let rates = flow_rates(state, &params.outlet_markers)?;
    let functionals = flow_rate_functionals(mesh, &params.outlet_markers)?;
    let n = state.values().len();
    let mut rhs = vec![0.0; n];
    for ((q, t), w) in rates.iter().zip(targets).zip(&functionals) {
        for &(d, c) in w {
            rhs[d] -= (q - t) * c;
        }
    }
    let bc = params.bc(mesh)?;
    bc.zero(&mut rhs);
    if rhs.iter().all(|&r| r == 0.0) {
        return Ok(FeField::zeros(Arc::clone(mesh), Family::TaylorHood));
    }
    let jac = eliminate_homogeneous(&ns_jacobian(mesh, params.reynolds, state.values(), exec), &bc.mask(n));
    let lambda = Factorization::new(&jac, false)?.solve_transpose(&rhs)?;
    FeField::new(Arc::clone(mesh), Family::TaylorHood, lambda)
}

/// `int A : DV` with
/// `A = F I - Du^T Dl - Dl^T Du - Re Du^T l u^T + p Dl^T + l_p Du^T`,
/// where `F` is the weak-residual integrand tested with the adjoint `l`.
pub fn shape_derivative_flow(
    mesh: &Arc<Mesh>,
    params: &FlowParams,
    state: &FeField,
    adjoint: &FeField,
    exec: Exec,
) -> Result<ShapeDerivative> {
    let space = FunctionSpace::of(mesh.topology(), Family::TaylorHood);
    let re = params.reynolds;
    let (z, l) = (state.values(), adjoint.values());
    let per_cell: Vec<Vec<f64>> = map_indexed(exec, mesh.n_triangles(), |t| {
        let geo = Affine::new(&mesh.triangle_coords(t));
        let dofs = space.cell_dofs(t);
        let zl: Vec<f64> = dofs.iter().map(|&d| z[d]).collect();
        let ll: Vec<f64> = dofs.iter().map(|&d| l[d]).collect();
        let mut a = [[0.0; 2]; 2];
        for (s, m) in point_states(&geo, &zl).iter().zip(point_states(&geo, &ll)) {
            let (du, dl) = (s.du, m.du);
            let conv = [du[0][0] * s.u[0] + du[0][1] * s.u[1], du[1][0] * s.u[0] + du[1][1] * s.u[1]];
            let f = (0..2).map(|i| (0..2).map(|j| du[i][j] * dl[i][j]).sum::<f64>()).sum::<f64>()
                + re * (conv[0] * m.u[0] + conv[1] * m.u[1])
                - s.p * (dl[0][0] + dl[1][1])
                - m.p * (du[0][0] + du[1][1]);
            for c in 0..2 {
                let dut_l = du[0][c] * m.u[0] + du[1][c] * m.u[1];
                for j in 0..2 {
                    let mut v = -(du[0][c] * dl[0][j] + du[1][c] * dl[1][j]) - (dl[0][c] * du[0][j] + dl[1][c] * du[1][j])
                        - re * dut_l * s.u[j]
                        + s.p * dl[j][c]
                        + m.p * du[j][c];
                    if c == j {
                        v += f;
                    }
                    a[c][j] += s.weight * v;
                }
            }
        }
        let mut local = vec![0.0; 6];
        scatter_tensor(&mut local, &[0, 1, 2], &geo.grads, &a);
        local
    });
    let mut values = vec![0.0; 2 * mesh.n_nodes()];
    for (tri, local) in mesh.triangles().iter().zip(&per_cell) {
        for i in 0..3 {
            values[2 * tri[i]] += local[2 * i];
            values[2 * tri[i] + 1] += local[2 * i + 1];
        }
    }
    let fixed = mesh.topology().marked_node_mask(&params.fixed_markers())?;
    Ok(ShapeDerivative::new(Arc::clone(mesh), values, &fixed))
}

/// Matching outlet rates to per-outlet targets.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub params: FlowParams,
    pub targets: Vec<f64>,
    pub exec: Exec,
}

impl FlowProblem {
    pub fn new(params: FlowParams, targets: Vec<f64>) -> Self {
        FlowProblem { params, targets, exec: Exec::default() }
    }
}

impl ShapeProblem for FlowProblem {
    fn fixed_nodes(&self, mesh: &Mesh) -> Result<Vec<bool>> {
        mesh.topology().marked_node_mask(&self.params.fixed_markers())
    }

    fn cost(&self, mesh: &Arc<Mesh>) -> Result<f64> {
        let z = solve_flow(mesh, &self.params, self.exec)?;
        Ok(rates_misfit(&flow_rates(&z, &self.params.outlet_markers)?, &self.targets))
    }

    fn cost_and_derivative(&self, mesh: &Arc<Mesh>) -> Result<(f64, ShapeDerivative)> {
        let z = solve_flow(mesh, &self.params, self.exec)?;
        let j = rates_misfit(&flow_rates(&z, &self.params.outlet_markers)?, &self.targets);
        let lambda = solve_adjoint_flow(mesh, &self.params, &z, &self.targets, self.exec)?;
        let dj = shape_derivative_flow(mesh, &self.params, &z, &lambda, self.exec)?;
        Ok((j, dj))
    }
}
