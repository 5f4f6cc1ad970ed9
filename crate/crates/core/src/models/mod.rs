//! The two model pairs: transmission (linear coarse, semilinear fine) and
//! pipe flow (Stokes coarse, Navier-Stokes fine).

pub mod flow;
pub mod target;
pub mod transmission;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use self::flow::{flow_rates, solve_flow, FlowParams};
use self::transmission::{solve_transmission, TransmissionParams};
use crate::error::Result;
use crate::fem::space::FeField;
use crate::mesh::Mesh;
use crate::par::Exec;

/// What a model reports to the space-mapping driver.
#[derive(Debug, Clone)]
pub enum ModelResponse {
    /// Nodal P1 state over the hold-all domain.
    Field(FeField),
    /// Outlet flow rates in marker order.
    Rates(Vec<f64>),
}

impl ModelResponse {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelResponse::Field(_) => "field",
            ModelResponse::Rates(_) => "rates",
        }
    }
}

/// A model together with its parameters; this is also the `params` object
/// of external requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Transmission(TransmissionParams),
    Flow(FlowParams),
}

impl ModelParams {
    /// Response kind produced by [`ModelParams::respond`].
    pub fn kind(&self) -> &'static str {
        match self {
            ModelParams::Transmission(_) => "field",
            ModelParams::Flow(_) => "rates",
        }
    }

    /// Outlet markers reported in a rates response; empty for fields.
    pub fn outlets(&self) -> &[i32] {
        match self {
            ModelParams::Transmission(_) => &[],
            ModelParams::Flow(p) => &p.outlet_markers,
        }
    }

    pub fn respond(&self, mesh: &Arc<Mesh>, exec: Exec) -> Result<ModelResponse> {
        match self {
            ModelParams::Transmission(p) => Ok(ModelResponse::Field(solve_transmission(mesh, p, exec)?)),
            ModelParams::Flow(p) => Ok(ModelResponse::Rates(flow_rates(&solve_flow(mesh, p, exec)?, &p.outlet_markers)?)),
        }
    }
}
