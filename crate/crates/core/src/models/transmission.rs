//! Semilinear transmission problem with a piecewise-constant conductivity:
//! `-div(alpha grad u) + beta u^3 = f` in D, `u = 0` on the boundary of D.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::target::EulerianField;
use crate::error::{Error, Result};
use crate::fem::assemble::{
    assemble_matrix, assemble_vector, stiffness_local, PiecewiseConstant,
};
use crate::fem::dirichlet::{apply_dirichlet, eliminate_homogeneous, DirichletBc};
use crate::fem::element::Affine;
use crate::fem::newton::{newton_solve, NewtonTolerances};
use crate::fem::quadrature::{DEGREE_2, DEGREE_4};
use crate::fem::solve::solve_sparse;
use crate::fem::space::{FeField, Family, FunctionSpace};
use crate::fem::sparse::CsrMatrix;
use crate::mesh::generate::{generate_ellipse_in_square, Ellipse, EXTERIOR, INCLUSION};
use crate::mesh::Mesh;
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionParams {
    pub alpha_in: f64,
    pub alpha_out: f64,
    pub f_in: f64,
    pub f_out: f64,
    /// Zero selects the linear model.
    pub beta: f64,
}

impl Default for TransmissionParams {
    fn default() -> Self {
        TransmissionParams { alpha_in: 10.0, alpha_out: 1.0, f_in: 10.0, f_out: 1.0, beta: 100.0 }
    }
}

impl TransmissionParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha_in, self.alpha_out, self.f_in, self.f_out, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if finite && self.alpha_in > 0.0 && self.alpha_out > 0.0 && self.beta >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("transmission parameters {self:?} out of range")))
        }
    }

    /// The same parameters with the cubic term removed.
    pub fn linear(&self) -> Self {
        TransmissionParams { beta: 0.0, ..*self }
    }

    pub fn alpha(&self) -> PiecewiseConstant {
        PiecewiseConstant::by_marker(&[(INCLUSION, self.alpha_in), (EXTERIOR, self.alpha_out)])
    }

    pub fn source(&self) -> PiecewiseConstant {
        PiecewiseConstant::by_marker(&[(INCLUSION, self.f_in), (EXTERIOR, self.f_out)])
    }
}

/// Homogeneous condition on every boundary node.
pub fn boundary_bc(mesh: &Mesh) -> DirichletBc {
    let mask = mesh.topology().boundary_node_mask();
    DirichletBc::homogeneous(mask.iter().enumerate().filter(|(_, &m)| m).map(|(n, _)| n))
}

/// Element residual `alpha K u + beta int u^3 phi - f int phi`.
fn residual_local(geo: &Affine, alpha: f64, f: f64, beta: f64, u: [f64; 3]) -> [f64; 3] {
    let k = stiffness_local(geo, alpha);
    let mut r = [0.0; 3];
    for i in 0..3 {
        r[i] = (0..3).map(|j| k[3 * i + j] * u[j]).sum::<f64>() - f * geo.area / 3.0;
    }
    if beta != 0.0 {
        for (q, w) in DEGREE_4.points.iter().zip(DEGREE_4.weights) {
            let uq = q[0] * u[0] + q[1] * u[1] + q[2] * u[2];
            for i in 0..3 {
                r[i] += beta * geo.area * w * uq * uq * uq * q[i];
            }
        }
    }
    r
}

/// `alpha K + 3 beta int u^2 phi_i phi_j` on one element.
pub(crate) fn tangent_local(geo: &Affine, alpha: f64, beta: f64, u: [f64; 3]) -> [f64; 9] {
    let mut k = stiffness_local(geo, alpha);
    if beta != 0.0 {
        for (q, w) in DEGREE_4.points.iter().zip(DEGREE_4.weights) {
            let uq = q[0] * u[0] + q[1] * u[1] + q[2] * u[2];
            for i in 0..3 {
                for j in 0..3 {
                    k[3 * i + j] += 3.0 * beta * geo.area * w * uq * uq * q[i] * q[j];
                }
            }
        }
    }
    k
}

fn nodal(tri: &[usize; 3], u: &[f64]) -> [f64; 3] {
    [u[tri[0]], u[tri[1]], u[tri[2]]]
}

/// Unconstrained residual of the weak form at `u`.
pub fn transmission_residual(mesh: &Mesh, params: &TransmissionParams, u: &[f64], exec: Exec) -> Result<Vec<f64>> {
    let alpha = params.alpha().per_cell(mesh)?;
    let f = params.source().per_cell(mesh)?;
    let space = FunctionSpace::of(mesh.topology(), Family::P1);
    Ok(assemble_vector(&space, mesh.n_triangles(), exec, |t| {
        let geo = Affine::new(&mesh.triangle_coords(t));
        residual_local(&geo, alpha[t], f[t], params.beta, nodal(&mesh.triangles()[t], u)).to_vec()
    }))
}

/// Unconstrained tangent operator at `u`; the stiffness matrix when `beta = 0`.
pub fn transmission_tangent(mesh: &Mesh, params: &TransmissionParams, u: &[f64], exec: Exec) -> Result<CsrMatrix> {
    let alpha = params.alpha().per_cell(mesh)?;
    let space = FunctionSpace::of(mesh.topology(), Family::P1);
    Ok(assemble_matrix(&space, mesh.n_triangles(), exec, |t| {
        let geo = Affine::new(&mesh.triangle_coords(t));
        tangent_local(&geo, alpha[t], params.beta, nodal(&mesh.triangles()[t], u)).to_vec()
    }))
}

/// Solves the transmission problem on `mesh`.
pub fn solve_transmission(mesh: &Arc<Mesh>, params: &TransmissionParams, exec: Exec) -> Result<FeField> {
    solve_with_load(mesh, params, None, exec)
}

/// Solves the transmission problem with `extra_load`, already integrated
/// against the nodal basis, added to the right-hand side.
pub fn solve_transmission_with_load(
    mesh: &Arc<Mesh>,
    params: &TransmissionParams,
    extra_load: &[f64],
    exec: Exec,
) -> Result<FeField> {
    if extra_load.len() != mesh.n_nodes() {
        return Err(Error::SpaceMismatch);
    }
    solve_with_load(mesh, params, Some(extra_load), exec)
}

fn solve_with_load(mesh: &Arc<Mesh>, params: &TransmissionParams, extra: Option<&[f64]>, exec: Exec) -> Result<FeField> {
    params.validate()?;
    let n = mesh.n_nodes();
    let bc = boundary_bc(mesh);
    let zero = vec![0.0; n];
    let full_residual = |u: &[f64]| -> Result<Vec<f64>> {
        let mut r = transmission_residual(mesh, params, u, exec)?;
        if let Some(g) = extra {
            for (ri, gi) in r.iter_mut().zip(g) {
                *ri -= gi;
            }
        }
        Ok(r)
    };
    let values = if params.beta == 0.0 {
        let k = transmission_tangent(mesh, params, &zero, exec)?;
        let rhs: Vec<f64> = full_residual(&zero)?.iter().map(|r| -r).collect();
        let (a, b) = apply_dirichlet(&k, &rhs, &bc)?;
        solve_sparse(&a, &b, true)?
    } else {
        let mask = bc.mask(n);
        let residual = |u: &[f64]| -> Result<Vec<f64>> {
            let mut r = full_residual(u)?;
            for (d, _) in bc.iter() {
                r[d] = u[d];
            }
            Ok(r)
        };
        let jacobian =
            |u: &[f64]| -> Result<CsrMatrix> { Ok(eliminate_homogeneous(&transmission_tangent(mesh, params, u, exec)?, &mask)) };
        let out = newton_solve(residual, jacobian, zero, &NewtonTolerances::default())?;
        log::debug!("semilinear transmission: {} Newton iterations", out.iterations);
        out.solution
    };
    FeField::new(Arc::clone(mesh), Family::P1, values)
}

/// `int (u - u_des)^2` for two P1 fields on the same mesh, exact.
pub fn tracking_cost(u: &FeField, u_des: &FeField) -> Result<f64> {
    if u.family() != Family::P1 || !u.compatible(u_des) {
        return Err(Error::SpaceMismatch);
    }
    let mesh = u.mesh();
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t);
        for (q, w) in DEGREE_2.points.iter().zip(DEGREE_2.weights) {
            let d: f64 = (0..3).map(|k| q[k] * (u.values()[tri[k]] - u_des.values()[tri[k]])).sum();
            s += a * w * d * d;
        }
    }
    Ok(s)
}

/// Desired state: the model solved on a mesh whose interface is `ellipse`,
/// transferred to `reference` by P1 interpolation.
pub fn make_desired_state(
    params: &TransmissionParams,
    ellipse: Ellipse,
    resolution: usize,
    reference: &Arc<Mesh>,
    exec: Exec,
) -> Result<FeField> {
    let source = Arc::new(generate_ellipse_in_square(ellipse, resolution)?);
    let u = solve_transmission(&source, params, exec)?;
    Ok(EulerianField::new(&u)?.interpolate(reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble::{l2_error_p1, l2_inner_p1, load_vector_fn};
    use std::f64::consts::PI;
    use crate::mesh::generate::generate_disk_in_square;

    #[test]
    fn zero_source_gives_zero_field() {
        let m = Arc::new(generate_disk_in_square(0.2, 12).unwrap());
        let p = TransmissionParams { f_in: 0.0, f_out: 0.0, ..Default::default() };
        let u = solve_transmission(&m, &p, Exec::Sequential).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn semilinear_solution_approaches_linear_as_beta_vanishes() {
        let m = Arc::new(generate_disk_in_square(0.2, 14).unwrap());
        let base = TransmissionParams::default();
        let u0 = solve_transmission(&m, &base.linear(), Exec::Sequential).unwrap();
        let mut last = f64::INFINITY;
        for beta in [10.0, 1.0, 0.1] {
            let u = solve_transmission(&m, &TransmissionParams { beta, ..base }, Exec::Sequential).unwrap();
            let d: Vec<f64> = u.values().iter().zip(u0.values()).map(|(a, b)| a - b).collect();
            let err = l2_inner_p1(&m, &d, &d).sqrt();
            assert!(err < last);
            last = err;
        }
    }

    #[test]
    fn manufactured_solution_converges_at_second_order() {
        let exact = |p: [f64; 2]| (PI * p[0]).sin() * (PI * p[1]).sin();
        let p = TransmissionParams { alpha_in: 1.0, alpha_out: 1.0, f_in: 0.0, f_out: 0.0, beta: 0.0 };
        let errors: Vec<f64> = [8, 16, 32, 64]
            .iter()
            .map(|&n| {
                let m = Arc::new(crate::mesh::generate::unit_square(n).unwrap());
                let load = load_vector_fn(&m, |x| 2.0 * PI * PI * exact(x), Exec::Sequential);
                let u = solve_transmission_with_load(&m, &p, &load, Exec::Sequential).unwrap();
                l2_error_p1(&m, u.values(), exact)
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.8..=2.2).contains(&order), "{errors:?}");
        }
    }

    #[test]
    fn affine_solution_is_nodally_exact() {
        let m = Arc::new(crate::mesh::generate::unit_square(6).unwrap());
        let p = TransmissionParams { alpha_in: 1.0, alpha_out: 1.0, f_in: 0.0, f_out: 0.0, beta: 0.0 };
        let u = solve_transmission_with_load(&m, &p, &vec![0.0; m.n_nodes()], Exec::Sequential).unwrap();
        assert!(u.values().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn tracking_cost_of_unit_difference() {
        let m = Arc::new(crate::mesh::generate::unit_square(3).unwrap());
        let u = FeField::new(Arc::clone(&m), Family::P1, vec![1.0; m.n_nodes()]).unwrap();
        let z = FeField::zeros(Arc::clone(&m), Family::P1);
        assert!((tracking_cost(&u, &z).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(tracking_cost(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn circle_target_reproduces_reference_solution() {
        let reference = Arc::new(generate_disk_in_square(0.2, 32).unwrap());
        let p = TransmissionParams::default();
        let u = solve_transmission(&reference, &p, Exec::Sequential).unwrap();
        let ud = make_desired_state(&p, Ellipse::circle([0.5, 0.5], 0.2), 44, &reference, Exec::Sequential).unwrap();
        let d: Vec<f64> = u.values().iter().zip(ud.values()).map(|(a, b)| a - b).collect();
        let rel = (l2_inner_p1(&reference, &d, &d) / l2_inner_p1(&reference, u.values(), u.values())).sqrt();
        assert!(rel < 2e-2, "{rel}");
    }
}
