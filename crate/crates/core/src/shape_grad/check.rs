//! Central finite-difference validation of shape derivatives.

use std::sync::Arc;

use rand::Rng;

use super::ShapeProblem;
use crate::error::Result;
use crate::mesh::{apply_deformation, Deformation, Mesh};

pub const DEFAULT_STEPS: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub analytic: f64,
    pub steps: Vec<f64>,
    pub differences: Vec<f64>,
    pub errors: Vec<f64>,
}

impl FdReport {
    /// Least-squares slope of `log(error)` against `log(step)`.
    pub fn order(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .steps
            .iter()
            .zip(&self.errors)
            .map(|(t, e)| (t.ln(), e.max(f64::MIN_POSITIVE).ln()))
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    /// Smallest slope between consecutive steps.
    pub fn min_pairwise_order(&self) -> f64 {
        self.steps
            .windows(2)
            .zip(self.errors.windows(2))
            .map(|(t, e)| (e[0] / e[1]).ln() / (t[0] / t[1]).ln())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Compares `dJ[V]` with `(J((I + tV)Omega) - J((I - tV)Omega)) / 2t`.
pub fn central_difference_check(
    problem: &dyn ShapeProblem,
    mesh: &Arc<Mesh>,
    v: &Deformation,
    steps: &[f64],
) -> Result<FdReport> {
    let (_, dj) = problem.cost_and_derivative(mesh)?;
    let analytic = dj.apply(v)?;
    let mut differences = Vec::with_capacity(steps.len());
    for &t in steps {
        let plus = Arc::new(apply_deformation(mesh, &v.scaled(t))?);
        let minus = Arc::new(apply_deformation(mesh, &v.scaled(-t))?);
        differences.push((problem.cost(&plus)? - problem.cost(&minus)?) / (2.0 * t));
    }
    let errors = differences.iter().map(|d| (d - analytic).abs()).collect();
    Ok(FdReport { analytic, steps: steps.to_vec(), differences, errors })
}

/// Mean edge length.
pub fn typical_edge_length(mesh: &Mesh) -> f64 {
    let edges = mesh.topology().edges();
    let total: f64 = edges
        .iter()
        .map(|&[a, b]| {
            let (p, q) = (mesh.coords()[a], mesh.coords()[b]);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        })
        .sum();
    total / edges.len() as f64
}

/// A sum of a few random low-frequency Fourier modes over the mesh bounding
/// box, set to zero on `fixed` nodes and scaled so that the largest nodal
/// magnitude equals `amplitude`.
pub fn smooth_random_field(mesh: &Arc<Mesh>, fixed: &[bool], amplitude: f64, rng: &mut impl Rng) -> Deformation {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in mesh.coords() {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    const MODES: usize = 4;
    let modes: Vec<([f64; 2], [f64; 2], f64)> = (0..MODES)
        .map(|_| {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let freq = rng.random_range(1.0..3.0) * std::f64::consts::PI / span;
            let k = [freq * angle.cos(), freq * angle.sin()];
            let c = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (k, c, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let mut d = Deformation::new(
        Arc::clone(mesh),
        mesh.coords()
            .iter()
            .map(|p| {
                let mut v = [0.0; 2];
                for (k, c, phase) in &modes {
                    let s = (k[0] * (p[0] - lo[0]) + k[1] * (p[1] - lo[1]) + phase).sin();
                    v[0] += c[0] * s;
                    v[1] += c[1] * s;
                }
                v
            })
            .collect(),
    );
    d.zero_masked(fixed);
    let peak = d.values().iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    if peak > 0.0 {
        d = d.scaled(amplitude / peak);
    }
    d
}

/// A constant vector times a smooth radial cutoff: one inside `inner`,
/// zero beyond `outer` from `center`.
pub fn cutoff_translation(mesh: &Arc<Mesh>, center: [f64; 2], inner: f64, outer: f64, v: [f64; 2]) -> Deformation {
    Deformation::new(
        Arc::clone(mesh),
        mesh.coords()
            .iter()
            .map(|p| {
                let r = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt();
                let s = ((outer - r) / (outer - inner)).clamp(0.0, 1.0);
                let w = s * s * (3.0 - 2.0 * s);
                [w * v[0], w * v[1]]
            })
            .collect(),
    )
}
