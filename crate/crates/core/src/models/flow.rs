//! Channel flow through a pipe network: Stokes (coarse) and stationary
//! Navier-Stokes (fine), with outlet flow rates as the model response.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::dirichlet::DirichletBc;
use crate::fem::newton::{newton_solve, NewtonTolerances};
use crate::fem::quadrature::EDGE_GAUSS_3;
use crate::fem::solve::solve_sparse;
use crate::fem::space::{FeField, Family, FunctionSpace};
use crate::fem::stokes::{assemble_ns_system, assemble_stokes, flow_bc, FlowBoundary};
use crate::mesh::{Mesh, Point};
use crate::par::Exec;

/// Reynolds increment of the continuation fallback.
pub const CONTINUATION_STEP: f64 = 25.0;

/// Parabolic inflow in the +x1 direction across `lo <= x2 <= hi`, with the
/// given peak speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InletProfile {
    pub lo: f64,
    pub hi: f64,
    pub peak: f64,
}

impl Default for InletProfile {
    /// `u = (-6 x2 (x2 + 1), 0)` on `x2 in [-1, 0]`.
    fn default() -> Self {
        InletProfile { lo: -1.0, hi: 0.0, peak: 1.5 }
    }
}

impl InletProfile {
    pub fn velocity(&self, x: Point) -> Point {
        let w = self.hi - self.lo;
        let s = 4.0 * self.peak * (x[1] - self.lo) * (self.hi - x[1]) / (w * w);
        [s.max(0.0), 0.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    /// Zero selects the Stokes model.
    pub reynolds: f64,
    pub inlet: InletProfile,
    pub inlet_markers: Vec<i32>,
    pub wall_markers: Vec<i32>,
    pub outlet_markers: Vec<i32>,
    /// Walls that are not part of the design boundary.
    pub fixed_wall_markers: Vec<i32>,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            reynolds: 100.0,
            inlet: InletProfile::default(),
            inlet_markers: vec![1],
            wall_markers: vec![2, 3],
            outlet_markers: vec![4, 5, 6],
            fixed_wall_markers: vec![3],
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reynolds >= 0.0 && self.reynolds.is_finite()) {
            return Err(Error::InvalidParameter(format!("Reynolds number {} out of range", self.reynolds)));
        }
        if self.outlet_markers.is_empty() || self.inlet_markers.is_empty() {
            return Err(Error::InvalidParameter("flow needs inlet and outlet markers".into()));
        }
        Ok(())
    }

    pub fn stokes(&self) -> Self {
        FlowParams { reynolds: 0.0, ..self.clone() }
    }

    pub fn boundary(&self) -> FlowBoundary {
        FlowBoundary {
            inlet: self.inlet_markers.clone(),
            walls: self.wall_markers.clone(),
            outlets: self.outlet_markers.clone(),
        }
    }

    /// Markers whose nodes never move: inlet, outlets and fixed walls.
    pub fn fixed_markers(&self) -> Vec<i32> {
        let mut m: Vec<i32> = self
            .inlet_markers
            .iter()
            .chain(&self.outlet_markers)
            .chain(&self.fixed_wall_markers)
            .copied()
            .collect();
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn bc(&self, mesh: &Mesh) -> Result<DirichletBc> {
        flow_bc(mesh, &self.boundary(), |x| self.inlet.velocity(x))
    }
}

/// Inflow rate through the inlet facets, by Gauss quadrature of the profile.
pub fn inflow_rate(mesh: &Mesh, params: &FlowParams) -> Result<f64> {
    let mut q = 0.0;
    for &m in &params.inlet_markers {
        if !mesh.topology().has_marker(m) {
            return Err(Error::UnknownMarker(m));
        }
        for f in mesh.topology().facets_with_marker(m) {
            let (n, len) = mesh.facet_normal(f).ok_or(Error::MeshMismatch)?;
            let (pa, pb) = (mesh.coords()[f.nodes[0]], mesh.coords()[f.nodes[1]]);
            for (s, w) in EDGE_GAUSS_3.0.iter().zip(EDGE_GAUSS_3.1) {
                let x = [pa[0] + s * (pb[0] - pa[0]), pa[1] + s * (pb[1] - pa[1])];
                let u = params.inlet.velocity(x);
                q -= len * w * (u[0] * n[0] + u[1] * n[1]);
            }
        }
    }
    Ok(q)
}

/// Target rate per outlet under a uniform split of the inflow.
pub fn desired_rate(mesh: &Mesh, params: &FlowParams) -> Result<f64> {
    Ok(inflow_rate(mesh, params)? / params.outlet_markers.len() as f64)
}

/// Solves for the Taylor-Hood state `(u, p)`.
pub fn solve_flow(mesh: &Arc<Mesh>, params: &FlowParams, exec: Exec) -> Result<FeField> {
    params.validate()?;
    let bc = params.bc(mesh)?;
    let (a, b) = assemble_stokes(mesh, &bc, exec)?;
    let stokes = solve_sparse(&a, &b, false)?;
    let z = if params.reynolds == 0.0 {
        stokes
    } else {
        match navier_stokes(mesh, params.reynolds, &bc, stokes.clone(), exec) {
            Ok(z) => z,
            Err(e) => {
                log::warn!("Newton from the Stokes state failed ({e}); continuing in Reynolds number");
                let mut z = stokes;
                let mut re = 0.0;
                while re < params.reynolds {
                    re = (re + CONTINUATION_STEP).min(params.reynolds);
                    z = navier_stokes(mesh, re, &bc, z, exec)?;
                }
                z
            }
        }
    };
    FeField::new(Arc::clone(mesh), Family::TaylorHood, z)
}

fn navier_stokes(mesh: &Mesh, re: f64, bc: &DirichletBc, mut init: Vec<f64>, exec: Exec) -> Result<Vec<f64>> {
    bc.impose(&mut init);
    let residual = |z: &[f64]| Ok(assemble_ns_system(mesh, re, z, bc, exec)?.1);
    let jacobian = |z: &[f64]| Ok(assemble_ns_system(mesh, re, z, bc, exec)?.0);
    let out = newton_solve(residual, jacobian, init, &NewtonTolerances::default())?;
    log::debug!("Navier-Stokes at Re = {re}: {} Newton iterations", out.iterations);
    Ok(out.solution)
}

/// Velocity block of a Taylor-Hood state.
pub fn velocity(state: &FeField) -> &[f64] {
    let off = FunctionSpace::of(state.mesh().topology(), Family::TaylorHood).pressure_offset();
    &state.values()[..off]
}

/// Pressure block of a Taylor-Hood state, one value per node.
pub fn pressure(state: &FeField) -> &[f64] {
    let off = FunctionSpace::of(state.mesh().topology(), Family::TaylorHood).pressure_offset();
    &state.values()[off..]
}

/// Outlet rates of a Taylor-Hood state, in marker order.
pub fn flow_rates(state: &FeField, outlets: &[i32]) -> Result<Vec<f64>> {
    if state.family() != Family::TaylorHood {
        return Err(Error::SpaceMismatch);
    }
    crate::fem::stokes::flow_rates(state.mesh(), state.values(), outlets)
}

/// `1/2 sum (q_i - q_des)^2`.
pub fn flow_cost(rates: &[f64], q_des: f64) -> f64 {
    0.5 * rates.iter().map(|q| (q - q_des).powi(2)).sum::<f64>()
}

/// `1/2 sum (q_i - t_i)^2` against per-outlet targets.
pub fn rates_misfit(rates: &[f64], targets: &[f64]) -> f64 {
    0.5 * rates.iter().zip(targets).map(|(q, t)| (q - t).powi(2)).sum::<f64>()
}
