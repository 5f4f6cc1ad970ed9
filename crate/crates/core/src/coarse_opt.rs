//! Limited-memory BFGS on shapes, with inner products from the elasticity
//! operator of the current mesh and nodal-identity transport of the history.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assemble::ElasticityParams;
use crate::mesh::{apply_deformation, inverse_retraction, quality, Deformation, Mesh, QUALITY_MIN};
use crate::par::Exec;
use crate::shape_grad::{ElasticityOperator, GradientDeformation, ShapeProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Stop when `||G_k|| <= rtol ||G_0||` in the elasticity norm.
    pub rtol: f64,
    pub max_iter: usize,
    pub memory: usize,
    /// Sufficient-decrease constant of the Armijo rule.
    pub c1: f64,
    pub max_halvings: usize,
    /// Minimum interior angle (radians) of accepted meshes.
    pub quality_min: f64,
    pub elasticity: ElasticityParams,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            rtol: 1e-2,
            max_iter: 100,
            memory: 5,
            c1: 1e-4,
            max_halvings: 30,
            quality_min: QUALITY_MIN,
            elasticity: ElasticityParams::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.rtol < 1.0) || !(self.c1 > 0.0 && self.c1 < 1.0) {
            return Err(Error::InvalidParameter(format!("optimizer tolerances out of range: {self:?}")));
        }
        self.elasticity.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct OptimizeResult {
    pub mesh: Arc<Mesh>,
    /// Nodal difference between the final and the start mesh.
    pub total: Deformation,
    pub iterations: usize,
    /// Cost of every accepted iterate, starting with the initial mesh.
    pub costs: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub termination: Termination,
}

/// Stored `(s, y)` pairs as flat nodal vectors; oldest first.
#[derive(Debug, Clone, Default)]
pub struct LbfgsHistory {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl LbfgsHistory {
    pub fn new(memory: usize) -> Self {
        LbfgsHistory { memory, pairs: VecDeque::with_capacity(memory) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores the pair unless its curvature `<s, y>` is not positive.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>, inner: impl Fn(&[f64], &[f64]) -> f64) -> bool {
        if self.memory == 0 || !(inner(&s, &y) > 0.0) {
            return false;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y));
        true
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|(s, y)| (s.as_slice(), y.as_slice()))
    }
}

/// Two-loop recursion: returns `-H g` for the inverse-Hessian approximation
/// built from the history under `inner`, scaled initially by
/// `<s, y> / <y, y>` of the newest pair. Pairs with non-positive curvature
/// under `inner` are skipped.
pub fn two_loop(history: &LbfgsHistory, g: &[f64], inner: impl Fn(&[f64], &[f64]) -> f64) -> Vec<f64> {
    let pairs: Vec<(&[f64], &[f64], f64)> = history
        .pairs()
        .filter_map(|(s, y)| {
            let sy = inner(s, y);
            (sy > 0.0 && sy.is_finite()).then_some((s, y, 1.0 / sy))
        })
        .collect();
    let mut q = g.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
        let a = rho * inner(s, &q);
        alphas[k] = a;
        axpy(&mut q, -a, y);
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = inner(s, y) / inner(y, y);
        q.iter_mut().for_each(|x| *x *= gamma);
    }
    for (k, (s, y, rho)) in pairs.iter().enumerate() {
        let b = rho * inner(y, &q);
        axpy(&mut q, alphas[k] - b, s);
    }
    q.iter_mut().for_each(|x| *x = -*x);
    q
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// L-BFGS direction on `op`'s mesh; the history is re-hosted there.
pub fn two_loop_direction(history: &LbfgsHistory, grad: &GradientDeformation, op: &ElasticityOperator) -> Deformation {
    let a = op.matrix();
    let d = two_loop(history, &grad.deformation.to_flat(), |u, v| a.bilinear(u, v));
    Deformation::from_flat(Arc::clone(op.mesh()), &d)
}

/// Accepted Armijo step.
#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub step: f64,
    pub mesh: Arc<Mesh>,
    pub cost: f64,
    pub trials: usize,
}

/// Backtracking from `init_step` by halving until
/// `J(new) <= J0 + c1 step dJ[d]`. Meshes that invert, fall below the
/// quality threshold, or make the model fail count as insufficient decrease.
pub fn armijo_search(
    mesh: &Mesh,
    direction: &Deformation,
    cost: impl Fn(&Arc<Mesh>) -> Result<f64>,
    j0: f64,
    slope: f64,
    init_step: f64,
    cfg: &OptimizerConfig,
) -> Result<LineSearchStep> {
    if !(slope < 0.0) {
        return Err(Error::InvalidParameter(format!("not a descent direction: slope {slope:e}")));
    }
    let mut step = init_step;
    for trial in 0..=cfg.max_halvings {
        if let Ok(candidate) = apply_deformation(mesh, &direction.scaled(step)) {
            if quality(&candidate) >= cfg.quality_min {
                let candidate = Arc::new(candidate);
                match cost(&candidate) {
                    Ok(j) if j <= j0 + cfg.c1 * step * slope => {
                        return Ok(LineSearchStep { step, mesh: candidate, cost: j, trials: trial + 1 });
                    }
                    Ok(_) => {}
                    Err(e) => log::debug!("line search trial at step {step:e} failed: {e}"),
                }
            }
        }
        step *= 0.5;
    }
    Err(Error::LineSearchFailure { halvings: cfg.max_halvings })
}

/// Minimizes `problem` starting from `start`.
pub fn optimize(start: &Arc<Mesh>, problem: &dyn ShapeProblem, cfg: &OptimizerConfig, exec: Exec) -> Result<OptimizeResult> {
    cfg.validate()?;
    let fixed = problem.fixed_nodes(start)?;
    let mut mesh = Arc::clone(start);
    let mut history = LbfgsHistory::new(cfg.memory);
    let (mut j, mut dj) = problem.cost_and_derivative(&mesh)?;
    let mut op = ElasticityOperator::new(&mesh, cfg.elasticity, exec)?;
    let mut grad = op.gradient(&dj, &fixed)?;
    let g0 = grad.norm();
    let mut costs = vec![j];
    let mut grad_norms = vec![g0];
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let termination = loop {
        let gn = grad.norm();
        if gn <= cfg.rtol * g0 || gn == 0.0 {
            break Termination::Converged;
        }
        if iterations == cfg.max_iter {
            break Termination::MaxIterations;
        }
        let mut direction = two_loop_direction(&history, &grad, &op);
        let mut slope = dj.apply(&direction)?;
        if !(slope < 0.0) {
            log::debug!("quasi-Newton direction is not descent; restarting from the gradient");
            history.clear();
            direction = grad.deformation.scaled(-1.0);
            slope = -grad.norm_sq;
        }
        let init = if iterations == 0 { 1.0 } else { (2.0 * step).min(1.0) };
        let accepted = match armijo_search(&mesh, &direction, |m| problem.cost(m), j, slope, init, cfg) {
            Ok(s) => s,
            Err(Error::LineSearchFailure { .. }) if !history.is_empty() => {
                log::debug!("line search failed along the quasi-Newton direction; retrying the gradient");
                history.clear();
                direction = grad.deformation.scaled(-1.0);
                slope = -grad.norm_sq;
                armijo_search(&mesh, &direction, |m| problem.cost(m), j, slope, 1.0, cfg)?
            }
            Err(e) => return Err(e),
        };
        step = accepted.step;
        let s = direction.scaled(step).to_flat();
        mesh = accepted.mesh;
        let (j_new, dj_new) = problem.cost_and_derivative(&mesh)?;
        op = ElasticityOperator::new(&mesh, cfg.elasticity, exec)?;
        let grad_new = op.gradient(&dj_new, &fixed)?;
        let y: Vec<f64> = grad_new.deformation.to_flat().iter().zip(grad.deformation.to_flat()).map(|(a, b)| a - b).collect();
        let a = op.matrix();
        if !history.push(s, y, |u, v| a.bilinear(u, v)) {
            log::debug!("skipped pair with non-positive curvature");
        }
        j = j_new;
        dj = dj_new;
        grad = grad_new;
        iterations += 1;
        costs.push(j);
        grad_norms.push(grad.norm());
        log::debug!("iteration {iterations}: cost {j:.6e}, |G| {:.3e}, step {step:.3e}", grad.norm());
    };
    let total = inverse_retraction(start, &mesh)?;
    Ok(OptimizeResult { mesh, total, iterations, costs, grad_norms, termination })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>() + if i == j { n as f64 } else { 0.0 }).collect())
            .collect()
    }

    fn mv(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
    }

    fn dotv(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn empty_history_returns_negative_gradient() {
        let g = vec![1.0, -2.0, 0.5];
        assert_eq!(two_loop(&LbfgsHistory::new(5), &g, dotv), vec![-1.0, 2.0, -0.5]);
    }

    #[test]
    fn matches_dense_bfgs_in_a_weighted_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 8;
        let a = spd(n, &mut rng);
        let inner = |u: &[f64], v: &[f64]| dotv(u, &mv(&a, v));
        let mut hist = LbfgsHistory::new(4);
        let mut pairs = Vec::new();
        for _ in 0..4 {
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = s.iter().map(|v| v * rng.random_range(0.5..2.0)).collect();
            assert!(hist.push(s.clone(), y.clone(), inner));
            pairs.push((s, y));
        }
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // dense H_{k+1} = (I - rho s y^T A) H (I - rho y s^T A) + rho s s^T A
        let (s_last, y_last) = pairs.last().unwrap();
        let gamma = inner(s_last, y_last) / inner(y_last, y_last);
        let mut h: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { gamma } else { 0.0 }).collect()).collect();
        for (s, y) in &pairs {
            let rho = 1.0 / inner(s, y);
            let ay = mv(&a, y);
            let as_ = mv(&a, s);
            let left: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64 - rho * s[i] * ay[j]).collect()).collect();
            let right: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64 - rho * y[i] * as_[j]).collect()).collect();
            let mul = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| p[i][k] * q[k][j]).sum()).collect()).collect()
            };
            let mut next = mul(&mul(&left, &h), &right);
            for i in 0..n {
                for j in 0..n {
                    next[i][j] += rho * s[i] * as_[j];
                }
            }
            h = next;
        }
        let dense: Vec<f64> = mv(&h, &g).iter().map(|v| -v).collect();
        let d = two_loop(&hist, &g, inner);
        let scale = dense.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (x, y) in d.iter().zip(&dense) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn single_pair_satisfies_the_secant_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 6;
        let a = spd(n, &mut rng);
        let inner = |u: &[f64], v: &[f64]| dotv(u, &mv(&a, v));
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| s[i] + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let mut hist = LbfgsHistory::new(3);
        assert!(hist.push(s.clone(), y.clone(), inner));
        // H y = s
        let hy = two_loop(&hist, &y, inner);
        for (p, q) in hy.iter().zip(&s) {
            assert!((p + q).abs() < 1e-10);
        }
    }

    #[test]
    fn nonpositive_curvature_is_skipped() {
        let mut hist = LbfgsHistory::new(2);
        assert!(!hist.push(vec![1.0, 0.0], vec![-1.0, 0.0], dotv));
        assert!(hist.is_empty());
    }
}
