//! Volume-based aggressive space mapping: misalignment, parameter
//! extraction, the space-mapping function, the limited-memory Broyden
//! recursion and the driver loop.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coarse_opt::{optimize, OptimizeResult, OptimizerConfig};
use crate::error::{Error, Result};
use crate::fem::assemble::ElasticityParams;
use crate::io::history::HistoryRecord;
use crate::io::protocol::ExternalBackend;
use crate::mesh::generate::Ellipse;
use crate::mesh::{apply_deformation, inverse_retraction, transport, Deformation, Mesh};
use crate::models::flow::{desired_rate, rates_misfit, FlowParams};
use crate::models::target::{EulerianField, TrackingTarget};
use crate::models::transmission::{make_desired_state, tracking_cost, TransmissionParams};
use crate::models::{ModelParams, ModelResponse};
use crate::par::Exec;
use crate::shape_grad::flow::FlowProblem;
use crate::shape_grad::transmission::TransmissionProblem;
use crate::shape_grad::{ElasticityOperator, ShapeProblem};

/// Guard on the Broyden denominator `a(X, nu)`, relative to `|X| |nu|`.
pub const CURVATURE_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Misalignment {
    /// `int (a - b)^2` over the hold-all domain.
    FieldL2,
    /// `1/2 |a - b|^2` over outlet rates.
    RatesHalfSq,
}

pub fn misalignment(r: Misalignment, a: &ModelResponse, b: &ModelResponse) -> Result<f64> {
    match (r, a, b) {
        (Misalignment::FieldL2, ModelResponse::Field(u), ModelResponse::Field(v)) => tracking_cost(u, v),
        (Misalignment::RatesHalfSq, ModelResponse::Rates(p), ModelResponse::Rates(q)) => {
            if p.len() != q.len() {
                return Err(Error::SpaceMismatch);
            }
            Ok(rates_misfit(p, q))
        }
        _ => Err(Error::KindMismatch(format!("{r:?} cannot compare {} with {}", a.kind(), b.kind()))),
    }
}

/// How a P1 field is compared with states on moving meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FieldComparison {
    /// Node by node on the shared connectivity: the values move with the nodes.
    #[default]
    Nodal,
    /// Point by point in space.
    Eulerian,
    /// Interpolated onto the undeformed reference mesh, then compared point
    /// by point. Every target then shares the reference's kinks.
    Reference,
}

impl FieldComparison {
    pub fn target(self, field: &crate::fem::space::FeField, reference: &Arc<Mesh>) -> Result<TrackingTarget> {
        match self {
            FieldComparison::Nodal => TrackingTarget::nodal(field),
            FieldComparison::Eulerian => TrackingTarget::eulerian(field),
            FieldComparison::Reference => {
                if field.mesh().same_geometry(reference) {
                    TrackingTarget::eulerian(field)
                } else {
                    TrackingTarget::eulerian(&EulerianField::new(field)?.interpolate(reference))
                }
            }
        }
    }
}

/// A coarse/fine model pair with the design target of the optimization.
#[derive(Debug, Clone)]
pub enum Experiment {
    Transmission {
        coarse: TransmissionParams,
        fine: TransmissionParams,
        design: Arc<TrackingTarget>,
        /// How fine fields become extraction targets.
        comparison: FieldComparison,
        reference: Arc<Mesh>,
    },
    Flow {
        coarse: FlowParams,
        fine: FlowParams,
        /// Desired rate per outlet.
        q_des: Vec<f64>,
    },
}

impl Experiment {
    /// Linear coarse and `fine` semilinear model; the desired state is the
    /// fine state of the inclusion `target`, transferred to `reference`.
    pub fn transmission(
        fine: TransmissionParams,
        reference: &Arc<Mesh>,
        target: Ellipse,
        target_resolution: usize,
        design: FieldComparison,
        comparison: FieldComparison,
        exec: Exec,
    ) -> Result<Self> {
        let u_des = make_desired_state(&fine, target, target_resolution, reference, exec)?;
        Ok(Experiment::Transmission { coarse: fine.linear(), fine, design: Arc::new(design.target(&u_des, reference)?),
            comparison,
            reference: Arc::clone(reference),
        })
    }

    /// Stokes coarse and `fine` Navier-Stokes model with a uniform split of
    /// the inflow as target.
    pub fn flow(fine: FlowParams, reference: &Mesh) -> Result<Self> {
        let q = desired_rate(reference, &fine)?;
        Ok(Experiment::Flow { coarse: fine.stokes(), q_des: vec![q; fine.outlet_markers.len()], fine })
    }

    /// The same experiment with the fine model replaced by the coarse one.
    pub fn fine_aliased_to_coarse(&self) -> Self {
        match self {
            Experiment::Transmission { coarse, design, comparison, reference, .. } => Experiment::Transmission {
                coarse: *coarse,
                fine: *coarse,
                design: Arc::clone(design),
                comparison: *comparison,
                reference: Arc::clone(reference),
            },
            Experiment::Flow { coarse, q_des, .. } => {
                Experiment::Flow { coarse: coarse.clone(), fine: coarse.clone(), q_des: q_des.clone() }
            }
        }
    }

    pub fn misalignment(&self) -> Misalignment {
        match self {
            Experiment::Transmission { .. } => Misalignment::FieldL2,
            Experiment::Flow { .. } => Misalignment::RatesHalfSq,
        }
    }

    pub fn coarse_model(&self) -> ModelParams {
        match self {
            Experiment::Transmission { coarse, .. } => ModelParams::Transmission(*coarse),
            Experiment::Flow { coarse, .. } => ModelParams::Flow(coarse.clone()),
        }
    }

    pub fn fine_model(&self) -> ModelParams {
        match self {
            Experiment::Transmission { fine, .. } => ModelParams::Transmission(*fine),
            Experiment::Flow { fine, .. } => ModelParams::Flow(fine.clone()),
        }
    }

    /// The coarse model optimization problem.
    pub fn design_problem(&self, exec: Exec) -> Box<dyn ShapeProblem> {
        match self {
            Experiment::Transmission { coarse, design, .. } => {
                Box::new(TransmissionProblem { params: *coarse, target: Arc::clone(design), exec })
            }
            Experiment::Flow { coarse, q_des, .. } => {
                Box::new(FlowProblem { params: coarse.clone(), targets: q_des.clone(), exec })
            }
        }
    }

    /// The design problem posed on the fine model. Only derivative checks
    /// use it; the space-mapping loop never differentiates the fine model.
    pub fn fine_problem(&self, exec: Exec) -> Box<dyn ShapeProblem> {
        match self {
            Experiment::Transmission { fine, design, .. } => {
                Box::new(TransmissionProblem { params: *fine, target: Arc::clone(design), exec })
            }
            Experiment::Flow { fine, q_des, .. } => Box::new(FlowProblem { params: fine.clone(), targets: q_des.clone(), exec }),
        }
    }

    /// The coarse problem with its target replaced by `response`.
    pub fn extraction_problem(&self, response: &ModelResponse, exec: Exec) -> Result<Box<dyn ShapeProblem>> {
        match (self, response) {
            (Experiment::Transmission { coarse, comparison, reference, .. }, ModelResponse::Field(u)) => {
                let target = Arc::new(comparison.target(u, reference)?);
                Ok(Box::new(TransmissionProblem { params: *coarse, target, exec }))
            }
            (Experiment::Flow { coarse, .. }, ModelResponse::Rates(q)) => {
                if q.len() != coarse.outlet_markers.len() {
                    return Err(Error::SpaceMismatch);
                }
                Ok(Box::new(FlowProblem { params: coarse.clone(), targets: q.clone(), exec }))
            }
            _ => Err(Error::KindMismatch(format!("experiment cannot extract from a {} response", response.kind()))),
        }
    }

    /// Design cost of a response: the tracking cost or the rate misfit.
    pub fn cost(&self, response: &ModelResponse) -> Result<f64> {
        match (self, response) {
            (Experiment::Transmission { design, .. }, ModelResponse::Field(u)) => design.misfit(u),
            (Experiment::Flow { q_des, .. }, ModelResponse::Rates(q)) => Ok(rates_misfit(q, q_des)),
            _ => Err(Error::KindMismatch(format!("experiment cannot price a {} response", response.kind()))),
        }
    }
}

/// Where fine responses come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum FineBackend {
    #[default]
    Internal,
    External(ExternalBackend),
}

pub fn evaluate_fine(mesh: &Arc<Mesh>, experiment: &Experiment, backend: &FineBackend, exec: Exec) -> Result<ModelResponse> {
    let model = experiment.fine_model();
    match backend {
        FineBackend::Internal => model.respond(mesh, exec),
        FineBackend::External(ext) => ext.evaluate(mesh, &model),
    }
}

/// Coarse optimization from `reference` towards `fine_response`.
pub fn parameter_extraction(
    reference: &Arc<Mesh>,
    fine_response: &ModelResponse,
    experiment: &Experiment,
    cfg: &OptimizerConfig,
    exec: Exec,
) -> Result<OptimizeResult> {
    let problem = experiment.extraction_problem(fine_response, exec)?;
    optimize(reference, problem.as_ref(), cfg, exec)
}

/// One evaluation of the space-mapping function.
#[derive(Debug, Clone)]
pub struct SpaceMapValue {
    /// `s(Omega)`, hosted on the evaluated mesh.
    pub s: Deformation,
    pub response: ModelResponse,
    pub extraction_iterations: usize,
}

pub fn space_map(
    current: &Arc<Mesh>,
    reference: &Arc<Mesh>,
    experiment: &Experiment,
    backend: &FineBackend,
    extraction: &OptimizerConfig,
    exec: Exec,
) -> Result<SpaceMapValue> {
    if !current.same_topology(reference) {
        return Err(Error::ConnectivityMismatch("space mapping needs the reference connectivity".into()));
    }
    let response = evaluate_fine(current, experiment, backend, exec)?;
    let extracted = parameter_extraction(reference, &response, experiment, extraction, exec)?;
    Ok(SpaceMapValue {
        s: transport(&extracted.total, current)?,
        response,
        extraction_iterations: extracted.iterations,
    })
}

/// Stored Broyden pairs, oldest first, each on the mesh it was created on.
#[derive(Debug, Clone, Default)]
pub struct BroydenMemory {
    memory: usize,
    pairs: VecDeque<(Deformation, Deformation)>,
}

impl BroydenMemory {
    pub fn new(memory: usize) -> Self {
        BroydenMemory { memory, pairs: VecDeque::with_capacity(memory) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(S^i, Y^i)` oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = &(Deformation, Deformation)> {
        self.pairs.iter()
    }

    /// `(B^k)^{-1} rhs`: `H = rhs`, then `H += a(H, Y^i) S^i` for every pair
    /// from oldest to newest, all re-hosted on `op`'s mesh.
    pub fn apply_inverse(&self, rhs: &Deformation, op: &ElasticityOperator) -> Result<Deformation> {
        let mesh = op.mesh();
        if !rhs.host().same_geometry(mesh) || self.pairs.iter().any(|(s, _)| !s.host().same_topology(mesh)) {
            return Err(Error::MeshMismatch);
        }
        let a = op.matrix();
        let mut h = rhs.to_flat();
        for (s, y) in &self.pairs {
            let theta = a.bilinear(&h, &y.to_flat());
            for (hi, si) in h.iter_mut().zip(s.to_flat()) {
                *hi += theta * si;
            }
        }
        Ok(Deformation::from_flat(Arc::clone(mesh), &h))
    }

    /// Stores `S = (X - nu) / a(X, nu)` and `Y = X`, evicting the oldest pair
    /// beyond the memory size.
    pub fn update(&mut self, x: &Deformation, nu: &Deformation, op: &ElasticityOperator) -> Result<()> {
        let denominator = op.inner(x, nu)?;
        if denominator.abs() <= CURVATURE_EPS * op.norm(x)? * op.norm(nu)? {
            return Err(Error::SkippedUpdate { denominator });
        }
        if self.memory == 0 {
            return Ok(());
        }
        let s = x.sub(nu)?.scaled(1.0 / denominator);
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, x.clone()));
        Ok(())
    }
}

/// `|s - V| / |V|` in the norm of `op`.
pub fn stationarity(s: &Deformation, v: &Deformation, op: &ElasticityOperator) -> Result<f64> {
    let denominator = op.norm(v)?;
    if denominator == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(op.norm(&s.sub(v)?)? / denominator)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsmConfig {
    /// Relative stopping tolerance on the stationarity measure.
    pub tau: f64,
    pub memory: usize,
    pub k_max: usize,
    /// Settings of the coarse design optimization.
    pub coarse: OptimizerConfig,
    /// Relative gradient tolerance of each parameter extraction.
    pub extraction_rtol: f64,
}

impl Default for AsmConfig {
    fn default() -> Self {
        let coarse = OptimizerConfig::default();
        AsmConfig { tau: 1e-2, memory: 5, k_max: 25, coarse, extraction_rtol: coarse.rtol }
    }
}

impl AsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) || self.k_max < 1 {
            return Err(Error::InvalidParameter(format!("tau {} or k_max {} out of range", self.tau, self.k_max)));
        }
        if !(self.extraction_rtol > 0.0 && self.extraction_rtol < 1.0) {
            return Err(Error::InvalidParameter(format!("extraction rtol {} out of range", self.extraction_rtol)));
        }
        self.coarse.validate()
    }

    pub fn extraction(&self) -> OptimizerConfig {
        OptimizerConfig { rtol: self.extraction_rtol, ..self.coarse }
    }

    pub fn elasticity(&self) -> ElasticityParams {
        self.coarse.elasticity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AsmTermination {
    Converged,
    MaxIterations,
    /// The Broyden step would invert the mesh; the history ends at the last
    /// valid iterate.
    DegenerateStep,
}

#[derive(Debug, Clone)]
pub struct AsmRecord {
    pub iter: usize,
    /// Design cost of the fine response.
    pub fine_cost: f64,
    pub sigma: f64,
    /// Iterations of this iterate's parameter extraction.
    pub coarse_iters: usize,
    /// Seconds since the start of the run.
    pub wall_s: f64,
    pub mesh: Arc<Mesh>,
    pub response: ModelResponse,
}

impl AsmRecord {
    pub fn history(&self) -> HistoryRecord {
        HistoryRecord { iter: self.iter, cost: self.fine_cost, sigma: self.sigma, coarse_iters: self.coarse_iters, wall_s: self.wall_s }
    }
}

#[derive(Debug, Clone)]
pub struct AsmRun {
    /// The coarse design optimum and how it was reached.
    pub coarse: OptimizeResult,
    pub records: Vec<AsmRecord>,
    pub termination: AsmTermination,
}

impl AsmRun {
    pub fn last(&self) -> &AsmRecord {
        self.records.last().expect("a run has at least one record")
    }

    pub fn history(&self) -> Vec<HistoryRecord> {
        self.records.iter().map(AsmRecord::history).collect()
    }
}

pub fn asm_run(cfg: &AsmConfig, experiment: &Experiment, reference: &Arc<Mesh>, backend: &FineBackend, exec: Exec) -> Result<AsmRun> {
    asm_run_with(cfg, experiment, reference, backend, exec, &mut |_| {})
}

/// The aggressive space-mapping loop; `observe` sees every record as soon
/// as it is complete.
pub fn asm_run_with(
    cfg: &AsmConfig,
    experiment: &Experiment,
    reference: &Arc<Mesh>,
    backend: &FineBackend,
    exec: Exec,
    observe: &mut dyn FnMut(&AsmRecord),
) -> Result<AsmRun> {
    cfg.validate()?;
    let start = Instant::now();
    let extraction = cfg.extraction();
    let coarse = optimize(reference, experiment.design_problem(exec).as_ref(), &cfg.coarse, exec)?;
    log::info!("coarse optimum after {} iterations, cost {:.6e}", coarse.iterations, coarse.costs.last().unwrap_or(&f64::NAN));
    let v_star = coarse.total.clone();

    let mut mesh = Arc::clone(&coarse.mesh);
    let mut current = space_map(&mesh, reference, experiment, backend, &extraction, exec)?;
    let mut memory = BroydenMemory::new(cfg.memory);
    let mut records = Vec::new();
    for k in 0..=cfg.k_max {
        let op = ElasticityOperator::new(&mesh, cfg.elasticity(), exec)?;
        let v_k = transport(&v_star, &mesh)?;
        let sigma = stationarity(&current.s, &v_k, &op)?;
        let record = AsmRecord {
            iter: k,
            fine_cost: experiment.cost(&current.response)?,
            sigma,
            coarse_iters: current.extraction_iterations,
            wall_s: start.elapsed().as_secs_f64(),
            mesh: Arc::clone(&mesh),
            response: current.response.clone(),
        };
        log::info!("space mapping iteration {k}: cost {:.6e}, sigma {sigma:.3e}", record.fine_cost);
        observe(&record);
        records.push(record);
        if sigma <= cfg.tau {
            return Ok(AsmRun { coarse, records, termination: AsmTermination::Converged });
        }
        if k == cfg.k_max {
            break;
        }
        let x = memory.apply_inverse(&current.s.sub(&v_k)?, &op)?.scaled(-1.0);
        let next_mesh = match apply_deformation(&mesh, &x) {
            Ok(m) => Arc::new(m),
            Err(Error::DegenerateMesh { triangle, area }) => {
                log::warn!("space mapping step {k} inverts triangle {triangle} (signed area {area:e})");
                return Ok(AsmRun { coarse, records, termination: AsmTermination::DegenerateStep });
            }
            Err(e) => return Err(e),
        };
        let next = space_map(&next_mesh, reference, experiment, backend, &extraction, exec)?;
        let back = transport(&next.s, &mesh)?;
        let nu = memory.apply_inverse(&back.sub(&current.s)?, &op)?;
        match memory.update(&x, &nu, &op) {
            Err(Error::SkippedUpdate { denominator }) => {
                log::warn!("Broyden update skipped, a(X, nu) = {denominator:e}");
            }
            other => other?,
        }
        mesh = next_mesh;
        current = next;
    }
    Ok(AsmRun { coarse, records, termination: AsmTermination::MaxIterations })
}

/// Total deformation of the last iterate from the reference.
pub fn final_deformation(run: &AsmRun, reference: &Arc<Mesh>) -> Result<Deformation> {
    inverse_retraction(reference, &run.last().mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::space::{FeField, Family};
    use crate::mesh::generate::{generate_disk_in_square, unit_square};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_deformation(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> Deformation {
        let mut d = Deformation::new(
            Arc::clone(mesh),
            (0..mesh.n_nodes()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
        );
        d.zero_masked(&mesh.topology().boundary_node_mask());
        d
    }

    fn op(mesh: &Arc<Mesh>) -> ElasticityOperator {
        ElasticityOperator::new(mesh, ElasticityParams::default(), Exec::Sequential).unwrap()
    }

    #[test]
    fn misalignment_examples() {
        let r = |a: Vec<f64>, b: Vec<f64>| misalignment(Misalignment::RatesHalfSq, &ModelResponse::Rates(a), &ModelResponse::Rates(b));
        assert_eq!(r(vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(r(vec![0.3, 0.2], vec![0.3, 0.2]).unwrap(), 0.0);
        let m = Arc::new(unit_square(4).unwrap());
        let two = ModelResponse::Field(FeField::new(Arc::clone(&m), Family::P1, vec![2.0; m.n_nodes()]).unwrap());
        let zero = ModelResponse::Field(FeField::zeros(Arc::clone(&m), Family::P1));
        assert!((misalignment(Misalignment::FieldL2, &two, &zero).unwrap() - 4.0).abs() < 1e-14);
        assert!(matches!(misalignment(Misalignment::FieldL2, &two, &ModelResponse::Rates(vec![1.0])), Err(Error::KindMismatch(_))));
    }

    #[test]
    fn empty_memory_is_the_identity() {
        let m = Arc::new(generate_disk_in_square(0.2, 6).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rhs = random_deformation(&m, &mut rng);
        assert_eq!(BroydenMemory::new(5).apply_inverse(&rhs, &op(&m)).unwrap().values(), rhs.values());
    }

    #[test]
    fn update_rules() {
        let m = Arc::new(generate_disk_in_square(0.2, 6).unwrap());
        let a = op(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_deformation(&m, &mut rng);
        let mut mem = BroydenMemory::new(2);
        // nu = X stores S = 0, which leaves every right-hand side unchanged
        mem.update(&x, &x, &a).unwrap();
        assert_eq!(mem.pairs().next().unwrap().0.max_abs(), 0.0);
        let rhs = random_deformation(&m, &mut rng);
        assert_eq!(mem.apply_inverse(&rhs, &a).unwrap().values(), rhs.values());
        assert!(matches!(mem.update(&x, &Deformation::zeros(Arc::clone(&m)), &a), Err(Error::SkippedUpdate { .. })));
        assert_eq!(mem.len(), 1);
        let first = random_deformation(&m, &mut rng);
        mem.update(&first, &x, &a).unwrap();
        mem.update(&rhs, &x, &a).unwrap();
        assert_eq!(mem.len(), 2);
        assert_eq!(mem.pairs().next().unwrap().1.values(), first.values());
    }

    #[test]
    fn stationarity_examples() {
        let m = Arc::new(generate_disk_in_square(0.2, 6).unwrap());
        let a = op(&m);
        let v = random_deformation(&m, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(stationarity(&v, &v, &a).unwrap(), 0.0);
        assert!((stationarity(&Deformation::zeros(Arc::clone(&m)), &v, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((stationarity(&v.scaled(2.0), &v, &a).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(stationarity(&v, &Deformation::zeros(Arc::clone(&m)), &a), Err(Error::ZeroDenominator)));
    }

    #[test]
    fn pairs_from_another_connectivity_are_rejected() {
        let m = Arc::new(generate_disk_in_square(0.2, 6).unwrap());
        let other = Arc::new(generate_disk_in_square(0.2, 7).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mem = BroydenMemory::new(2);
        let x = random_deformation(&other, &mut rng);
        let nu = random_deformation(&other, &mut rng);
        mem.update(&x, &nu, &op(&other)).unwrap();
        let rhs = random_deformation(&m, &mut rng);
        assert!(matches!(mem.apply_inverse(&rhs, &op(&m)), Err(Error::MeshMismatch)));
    }
}
