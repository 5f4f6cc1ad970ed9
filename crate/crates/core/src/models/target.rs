//! Fields that stay fixed in space while the mesh moves through them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::element::Affine;
use crate::fem::quadrature::DEGREE_2;
use crate::fem::space::{FeField, Family};
use crate::mesh::locate::PointLocator;
use crate::mesh::{Mesh, Point};

/// A P1 field on a source mesh, evaluated at arbitrary points by location.
#[derive(Debug)]
pub struct EulerianField {
    locator: PointLocator,
    values: Vec<f64>,
    grads: Vec<Point>,
}

impl EulerianField {
    pub fn new(field: &FeField) -> Result<Self> {
        if field.family() != Family::P1 {
            return Err(Error::SpaceMismatch);
        }
        let mesh = Arc::clone(field.mesh());
        let values = field.values().to_vec();
        let grads = (0..mesh.n_triangles())
            .map(|t| {
                let g = Affine::new(&mesh.triangle_coords(t)).grads;
                let tri = mesh.triangles()[t];
                let mut out = [0.0; 2];
                for k in 0..3 {
                    out[0] += g[k][0] * values[tri[k]];
                    out[1] += g[k][1] * values[tri[k]];
                }
                out
            })
            .collect();
        Ok(EulerianField { locator: PointLocator::new(mesh), values, grads })
    }

    pub fn source(&self) -> &Arc<Mesh> {
        self.locator.mesh()
    }

    pub fn nodal_values(&self) -> &[f64] {
        &self.values
    }

    fn in_cell(&self, t: usize, lam: &[f64; 3]) -> (f64, Point) {
        let tri = self.locator.mesh().triangles()[t];
        let v = (0..3).map(|k| lam[k] * self.values[tri[k]]).sum();
        (v, self.grads[t])
    }

    /// Value and elementwise gradient at `p`.
    pub fn eval(&self, p: Point) -> (f64, Point) {
        let (t, lam) = self.locator.locate(p);
        self.in_cell(t, &lam)
    }

    /// Values and gradients at the degree-2 quadrature points of every cell of
    /// `mesh`, laid out as `3 * cell + point`. When `mesh` coincides with the
    /// source the containing cell is known and no search is made.
    pub fn at_quadrature_points(&self, mesh: &Mesh) -> Vec<(f64, Point)> {
        let same = mesh.same_geometry(self.locator.mesh());
        let mut out = Vec::with_capacity(3 * mesh.n_triangles());
        for t in 0..mesh.n_triangles() {
            let p = mesh.triangle_coords(t);
            for q in DEGREE_2.points {
                let lam = [q[0], q[1], q[2]];
                if same {
                    out.push(self.in_cell(t, &lam));
                } else {
                    out.push(self.eval(crate::fem::element::bary_to_point(&p, &lam)));
                }
            }
        }
        out
    }

    /// P1 interpolant on the nodes of `mesh`.
    pub fn interpolate(&self, mesh: &Arc<Mesh>) -> FeField {
        let values = mesh.coords().iter().map(|&p| self.eval(p).0).collect();
        FeField::new(Arc::clone(mesh), Family::P1, values).expect("one value per node")
    }
}

/// `int (u - g)^2` over `u`'s mesh with `g` sampled at the degree-2 points.
/// Exact when `g` lives on the same mesh.
pub fn eulerian_misfit(u: &FeField, g: &EulerianField) -> Result<f64> {
    if u.family() != Family::P1 {
        return Err(Error::SpaceMismatch);
    }
    Ok(quadrature_misfit(u.mesh(), u.values(), &g.at_quadrature_points(u.mesh())))
}

/// A tracking target for the transmission problem.
#[derive(Debug)]
pub enum TrackingTarget {
    /// Fixed in space while the mesh moves through it.
    Eulerian(EulerianField),
    /// Nodal values carried along by the nodes of any mesh with the same
    /// connectivity; its material derivative vanishes.
    Nodal(FeField),
}

impl TrackingTarget {
    pub fn eulerian(field: &FeField) -> Result<Self> {
        Ok(TrackingTarget::Eulerian(EulerianField::new(field)?))
    }

    pub fn nodal(field: &FeField) -> Result<Self> {
        if field.family() != Family::P1 {
            return Err(Error::SpaceMismatch);
        }
        Ok(TrackingTarget::Nodal(field.clone()))
    }

    /// Values and the gradients that enter the shape derivative at the
    /// degree-2 points of `mesh`, laid out as `3 * cell + point`.
    pub fn at_quadrature_points(&self, mesh: &Mesh) -> Result<Vec<(f64, Point)>> {
        match self {
            TrackingTarget::Eulerian(g) => Ok(g.at_quadrature_points(mesh)),
            TrackingTarget::Nodal(g) => {
                if !g.mesh().same_topology(mesh) {
                    return Err(Error::ConnectivityMismatch("nodal target lives on another connectivity".into()));
                }
                let v = g.values();
                Ok(mesh
                    .triangles()
                    .iter()
                    .flat_map(|tri| DEGREE_2.points.iter().map(move |q| ((0..3).map(|k| q[k] * v[tri[k]]).sum(), [0.0; 2])))
                    .collect())
            }
        }
    }

    /// `int (u - g)^2` over `u`'s mesh.
    pub fn misfit(&self, u: &FeField) -> Result<f64> {
        if u.family() != Family::P1 {
            return Err(Error::SpaceMismatch);
        }
        let mesh = u.mesh();
        let samples = self.at_quadrature_points(mesh)?;
        Ok(quadrature_misfit(mesh, u.values(), &samples))
    }
}

fn quadrature_misfit(mesh: &Mesh, u: &[f64], samples: &[(f64, Point)]) -> f64 {
    let mut s = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.signed_area(t);
        for (k, (q, w)) in DEGREE_2.points.iter().zip(DEGREE_2.weights).enumerate() {
            let uq: f64 = (0..3).map(|i| q[i] * u[tri[i]]).sum();
            let d = uq - samples[3 * t + k].0;
            s += a * w * d * d;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{generate_disk_in_square, unit_square};

    #[test]
    fn affine_fields_transfer_exactly() {
        let src = Arc::new(generate_disk_in_square(0.2, 14).unwrap());
        let dst = Arc::new(unit_square(9).unwrap());
        let f = |p: Point| 2.0 * p[0] - 0.5 * p[1] + 0.25;
        let field = FeField::new(Arc::clone(&src), Family::P1, src.coords().iter().map(|&p| f(p)).collect()).unwrap();
        let e = EulerianField::new(&field).unwrap();
        let moved = e.interpolate(&dst);
        for (p, v) in dst.coords().iter().zip(moved.values()) {
            assert!((v - f(*p)).abs() < 1e-12);
        }
        let (_, g) = e.eval([0.31, 0.77]);
        assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn misfit_of_unit_difference_is_the_area() {
        let m = Arc::new(unit_square(4).unwrap());
        let u = FeField::new(Arc::clone(&m), Family::P1, vec![1.0; m.n_nodes()]).unwrap();
        let g = EulerianField::new(&FeField::zeros(Arc::clone(&m), Family::P1)).unwrap();
        assert!((eulerian_misfit(&u, &g).unwrap() - 1.0).abs() < 1e-14);
    }
}
