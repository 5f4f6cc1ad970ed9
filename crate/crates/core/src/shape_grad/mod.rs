//! Shape derivatives in volume form, adjoints, and the elasticity inner
//! product that turns derivatives into gradient deformations.

pub mod check;
pub mod flow;
pub mod transmission;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::assemble::{assemble_bilinear, ElasticityParams, FormKind, PiecewiseConstant};
use crate::fem::dirichlet::eliminate_homogeneous;
use crate::fem::solve::Factorization;
use crate::fem::sparse::{dot, CsrMatrix};
use crate::mesh::{Deformation, Mesh, Point};
use crate::par::Exec;

/// The linear functional `V -> dJ(Omega)[V]` on P1 vector fields, stored as
/// its coefficients against the nodal basis (interleaved by component).
#[derive(Debug, Clone)]
pub struct ShapeDerivative {
    mesh: Arc<Mesh>,
    values: Vec<f64>,
}

impl ShapeDerivative {
    /// Zeroes the rows of fixed nodes.
    pub fn new(mesh: Arc<Mesh>, mut values: Vec<f64>, fixed: &[bool]) -> Self {
        assert_eq!(values.len(), 2 * mesh.n_nodes());
        for (n, &f) in fixed.iter().enumerate() {
            if f {
                values[2 * n] = 0.0;
                values[2 * n + 1] = 0.0;
            }
        }
        ShapeDerivative { mesh, values }
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let n = 2 * mesh.n_nodes();
        ShapeDerivative { mesh, values: vec![0.0; n] }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, v: &Deformation) -> Result<f64> {
        if !v.host().same_geometry(&self.mesh) {
            return Err(Error::MeshMismatch);
        }
        Ok(dot(&self.values, &v.to_flat()))
    }
}

/// Accumulates the volume form `int A : DV` of one cell into nodal
/// coefficients: node `a`, component `c` gets `sum_j A[c][j] d_j phi_a`.
pub(crate) fn scatter_tensor(out: &mut [f64], tri: &[usize; 3], grads: &[Point; 3], a: &[[f64; 2]; 2]) {
    for (k, &n) in tri.iter().enumerate() {
        for c in 0..2 {
            out[2 * n + c] += a[c][0] * grads[k][0] + a[c][1] * grads[k][1];
        }
    }
}

/// The elasticity operator `a_Omega` assembled on one mesh.
#[derive(Debug, Clone)]
pub struct ElasticityOperator {
    mesh: Arc<Mesh>,
    params: ElasticityParams,
    matrix: CsrMatrix,
}

impl ElasticityOperator {
    pub fn new(mesh: &Arc<Mesh>, params: ElasticityParams, exec: Exec) -> Result<Self> {
        let matrix = assemble_bilinear(mesh, FormKind::Elasticity(params), &PiecewiseConstant::uniform(1.0), exec)?;
        Ok(ElasticityOperator { mesh: Arc::clone(mesh), params, matrix })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn params(&self) -> ElasticityParams {
        self.params
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn inner(&self, d1: &Deformation, d2: &Deformation) -> Result<f64> {
        if !d1.host().same_geometry(&self.mesh) || !d2.host().same_geometry(&self.mesh) {
            return Err(Error::MeshMismatch);
        }
        Ok(self.matrix.bilinear(&d1.to_flat(), &d2.to_flat()))
    }

    pub fn norm(&self, d: &Deformation) -> Result<f64> {
        Ok(self.inner(d, d)?.max(0.0).sqrt())
    }

    /// Riesz representative of `dj` under homogeneous conditions at `fixed`.
    pub fn gradient(&self, dj: &ShapeDerivative, fixed: &[bool]) -> Result<GradientDeformation> {
        if !dj.mesh().same_geometry(&self.mesh) {
            return Err(Error::MeshMismatch);
        }
        if !fixed.iter().any(|&f| f) && self.params.delta == 0.0 {
            return Err(Error::SingularSystem("no fixed nodes and no zero-order term".into()));
        }
        let mask: Vec<bool> = fixed.iter().flat_map(|&f| [f, f]).collect();
        let a = eliminate_homogeneous(&self.matrix, &mask);
        let mut rhs = dj.values().to_vec();
        for (r, &m) in rhs.iter_mut().zip(&mask) {
            if m {
                *r = 0.0;
            }
        }
        let g = Factorization::new(&a, true)?.solve(&rhs)?;
        let norm_sq = self.matrix.bilinear(&g, &g);
        Ok(GradientDeformation { deformation: Deformation::from_flat(Arc::clone(&self.mesh), &g), norm_sq })
    }
}

/// Solution of `a(G, V) = dJ[V]` for all admissible `V`.
#[derive(Debug, Clone)]
pub struct GradientDeformation {
    pub deformation: Deformation,
    pub norm_sq: f64,
}

impl GradientDeformation {
    pub fn norm(&self) -> f64 {
        self.norm_sq.max(0.0).sqrt()
    }
}

/// `a_Omega(d1, d2)` on the mesh hosting both fields.
pub fn a_inner(mesh: &Arc<Mesh>, ep: ElasticityParams, d1: &Deformation, d2: &Deformation) -> Result<f64> {
    ElasticityOperator::new(mesh, ep, Exec::default())?.inner(d1, d2)
}

pub fn gradient_deformation(
    mesh: &Arc<Mesh>,
    ep: ElasticityParams,
    dj: &ShapeDerivative,
    fixed: &[bool],
) -> Result<GradientDeformation> {
    ElasticityOperator::new(mesh, ep, Exec::default())?.gradient(dj, fixed)
}

/// A reduced cost functional of the shape with its volume derivative.
pub trait ShapeProblem: Send + Sync {
    /// Nodes that never move.
    fn fixed_nodes(&self, mesh: &Mesh) -> Result<Vec<bool>>;
    fn cost(&self, mesh: &Arc<Mesh>) -> Result<f64>;
    fn cost_and_derivative(&self, mesh: &Arc<Mesh>) -> Result<(f64, ShapeDerivative)>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::generate_disk_in_square;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> Deformation {
        let mask = mesh.topology().boundary_node_mask();
        let mut d = Deformation::new(
            Arc::clone(mesh),
            (0..mesh.n_nodes()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
        );
        d.zero_masked(&mask);
        d
    }

    #[test]
    fn inner_product_is_symmetric_and_coercive() {
        let m = Arc::new(generate_disk_in_square(0.2, 12).unwrap());
        let op = ElasticityOperator::new(&m, ElasticityParams::default(), Exec::Sequential).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let a = random_field(&m, &mut rng);
            let b = random_field(&m, &mut rng);
            let (ab, ba) = (op.inner(&a, &b).unwrap(), op.inner(&b, &a).unwrap());
            assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
            assert!(op.inner(&a, &a).unwrap() > 0.0);
        }
    }

    #[test]
    fn gradient_represents_the_functional() {
        let m = Arc::new(generate_disk_in_square(0.2, 12).unwrap());
        let fixed = m.topology().boundary_node_mask();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: Vec<f64> = (0..2 * m.n_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dj = ShapeDerivative::new(Arc::clone(&m), raw, &fixed);
        let op = ElasticityOperator::new(&m, ElasticityParams::default(), Exec::Sequential).unwrap();
        let g = op.gradient(&dj, &fixed).unwrap();
        let ag = op.matrix().matvec(&g.deformation.to_flat());
        for (k, (x, y)) in ag.iter().zip(dj.values()).enumerate() {
            if !fixed[k / 2] {
                assert!((x - y).abs() / (1.0 + y.abs()) <= 1e-9);
            }
        }
        assert!((dj.apply(&g.deformation).unwrap() - g.norm_sq).abs() <= 1e-10 * g.norm_sq);
    }

    #[test]
    fn zero_derivative_gives_zero_gradient() {
        let m = Arc::new(generate_disk_in_square(0.2, 8).unwrap());
        let fixed = m.topology().boundary_node_mask();
        let g = gradient_deformation(&m, ElasticityParams::default(), &ShapeDerivative::zeros(Arc::clone(&m)), &fixed)
            .unwrap();
        assert_eq!(g.deformation.max_abs(), 0.0);
    }

    #[test]
    fn no_fixed_nodes_is_singular() {
        let m = Arc::new(generate_disk_in_square(0.2, 8).unwrap());
        let fixed = vec![false; m.n_nodes()];
        let r = gradient_deformation(&m, ElasticityParams::default(), &ShapeDerivative::zeros(Arc::clone(&m)), &fixed);
        assert!(matches!(r, Err(Error::SingularSystem(_))));
    }
}
