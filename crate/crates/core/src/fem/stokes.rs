//! Taylor-Hood discretization of Stokes and stationary Navier-Stokes flow.
//!
//! Weak residual for test functions `(v, q)`:
//! `int Du:Dv + Re (Du u).v - p div v - q div u`.

use super::dirichlet::{apply_dirichlet, eliminate_homogeneous, DirichletBc};
use super::element::{p2_grads, p2_values, Affine};
use super::quadrature::DEGREE_4;
use super::space::{Family, FunctionSpace};
use super::sparse::CsrMatrix;
use super::assemble::{assemble_matrix, assemble_vector};
use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::par::Exec;

/// Local dofs per Taylor-Hood cell: 12 velocity, then 3 pressure.
pub const TH_LOCAL: usize = 15;

/// Facet markers of a flow domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowBoundary {
    pub inlet: Vec<i32>,
    pub walls: Vec<i32>,
    pub outlets: Vec<i32>,
}

/// Velocity, its gradient and pressure at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct PointState {
    pub weight: f64,
    pub n: [f64; 6],
    pub g: [Point; 6],
    pub l: [f64; 3],
    pub u: Point,
    /// `du[c][d] = d u_c / d x_d`
    pub du: [[f64; 2]; 2],
    pub p: f64,
}

/// Evaluates a local Taylor-Hood vector at every point of the degree-4 rule.
/// Weights include the cell area.
pub fn point_states(geo: &Affine, z: &[f64]) -> Vec<PointState> {
    DEGREE_4
        .points
        .iter()
        .zip(DEGREE_4.weights)
        .map(|(q, &w)| {
            let l = [q[0], q[1], q[2]];
            let n = p2_values(&l);
            let g = p2_grads(&l, &geo.grads);
            let mut u = [0.0; 2];
            let mut du = [[0.0; 2]; 2];
            for i in 0..6 {
                for c in 0..2 {
                    let zc = z[2 * i + c];
                    u[c] += n[i] * zc;
                    du[c][0] += g[i][0] * zc;
                    du[c][1] += g[i][1] * zc;
                }
            }
            let p = l[0] * z[12] + l[1] * z[13] + l[2] * z[14];
            PointState { weight: w * geo.area, n, g, l, u, du, p }
        })
        .collect()
}

/// Element residual, and the Jacobian (row-major 15x15) when requested.
pub fn ns_element(geo: &Affine, re: f64, z: &[f64], jacobian: bool) -> ([f64; TH_LOCAL], Option<Vec<f64>>) {
    let mut r = [0.0; TH_LOCAL];
    let mut jac = if jacobian { Some(vec![0.0; TH_LOCAL * TH_LOCAL]) } else { None };
    for s in point_states(geo, z) {
        let w = s.weight;
        let conv = [
            s.du[0][0] * s.u[0] + s.du[0][1] * s.u[1],
            s.du[1][0] * s.u[0] + s.du[1][1] * s.u[1],
        ];
        let div = s.du[0][0] + s.du[1][1];
        for i in 0..6 {
            for c in 0..2 {
                let visc = s.du[c][0] * s.g[i][0] + s.du[c][1] * s.g[i][1];
                r[2 * i + c] += w * (visc + re * conv[c] * s.n[i] - s.p * s.g[i][c]);
            }
        }
        for k in 0..3 {
            r[12 + k] -= w * s.l[k] * div;
        }
        if let Some(j) = jac.as_mut() {
            for i in 0..6 {
                for c in 0..2 {
                    let row = 2 * i + c;
                    for jj in 0..6 {
                        let gg = s.g[i][0] * s.g[jj][0] + s.g[i][1] * s.g[jj][1];
                        let adv = s.g[jj][0] * s.u[0] + s.g[jj][1] * s.u[1];
                        for e in 0..2 {
                            let mut v = re * s.du[c][e] * s.n[jj] * s.n[i];
                            if c == e {
                                v += gg + re * adv * s.n[i];
                            }
                            j[row * TH_LOCAL + 2 * jj + e] += w * v;
                        }
                    }
                    for k in 0..3 {
                        let v = -w * s.l[k] * s.g[i][c];
                        j[row * TH_LOCAL + 12 + k] += v;
                        j[(12 + k) * TH_LOCAL + row] += v;
                    }
                }
            }
        }
    }
    (r, jac)
}

fn local_values(space: &FunctionSpace, z: &[f64], t: usize) -> Vec<f64> {
    space.cell_dofs(t).iter().map(|&d| z[d]).collect()
}

/// Unconstrained weak residual at `z`.
pub fn ns_residual(mesh: &Mesh, re: f64, z: &[f64], exec: Exec) -> Vec<f64> {
    let space = FunctionSpace::of(mesh.topology(), Family::TaylorHood);
    assemble_vector(&space, mesh.n_triangles(), exec, |t| {
        let geo = Affine::new(&mesh.triangle_coords(t));
        ns_element(&geo, re, &local_values(&space, z, t), false).0.to_vec()
    })
}

/// Unconstrained Jacobian of the weak residual at `z`.
pub fn ns_jacobian(mesh: &Mesh, re: f64, z: &[f64], exec: Exec) -> CsrMatrix {
    let space = FunctionSpace::of(mesh.topology(), Family::TaylorHood);
    assemble_matrix(&space, mesh.n_triangles(), exec, |t| {
        let geo = Affine::new(&mesh.triangle_coords(t));
        ns_element(&geo, re, &local_values(&space, z, t), true).1.unwrap()
    })
}

/// Newton system at `z`: the Jacobian with constrained rows and columns
/// replaced by identity, and the residual whose constrained entries are
/// `z - g`. Solving `J dz = R` and setting `z -= dz` enforces the condition.
pub fn assemble_ns_system(mesh: &Mesh, re: f64, z: &[f64], bc: &DirichletBc, exec: Exec) -> Result<(CsrMatrix, Vec<f64>)> {
    if re < 0.0 {
        return Err(Error::InvalidParameter(format!("Reynolds number {re} is negative")));
    }
    let space = FunctionSpace::of(mesh.topology(), Family::TaylorHood);
    if z.len() != space.n_dofs() {
        return Err(Error::SpaceMismatch);
    }
    let mask = bc.mask(z.len());
    let jac = eliminate_homogeneous(&ns_jacobian(mesh, re, z, exec), &mask);
    let mut r = ns_residual(mesh, re, z, exec);
    for (d, g) in bc.iter() {
        r[d] = z[d] - g;
    }
    Ok((jac, r))
}

/// The eliminated Stokes saddle-point system.
pub fn assemble_stokes(mesh: &Mesh, bc: &DirichletBc, exec: Exec) -> Result<(CsrMatrix, Vec<f64>)> {
    let space = FunctionSpace::of(mesh.topology(), Family::TaylorHood);
    let z = vec![0.0; space.n_dofs()];
    let k = ns_jacobian(mesh, 0.0, &z, exec);
    apply_dirichlet(&k, &z, bc)
}

/// Velocity conditions: `profile` on inlet facets, no-slip on walls, and zero
/// tangential velocity on axis-aligned outlets. Walls take precedence at
/// shared nodes.
pub fn flow_bc(mesh: &Mesh, boundary: &FlowBoundary, profile: impl Fn(Point) -> Point) -> Result<DirichletBc> {
    let topo = mesh.topology();
    let nn = topo.n_nodes();
    for &m in boundary.inlet.iter().chain(&boundary.walls).chain(&boundary.outlets) {
        if !topo.has_marker(m) {
            return Err(Error::UnknownMarker(m));
        }
    }
    let facet_scalars = |a: usize, b: usize| -> Result<[(usize, Point); 3]> {
        let e = topo
            .edge_index(a, b)
            .ok_or_else(|| Error::InvalidMesh(format!("facet ({a}, {b}) is not an edge")))?;
        let (pa, pb) = (mesh.coords()[a], mesh.coords()[b]);
        Ok([(a, pa), (b, pb), (nn + e, [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])])])
    };
    let mut pairs = Vec::new();
    for f in topo.facets().iter().filter(|f| boundary.outlets.contains(&f.marker)) {
        let (n, _) = mesh.facet_normal(f).ok_or_else(|| Error::InvalidMesh("outlet facet without cell".into()))?;
        let tangential = if n[1].abs() < 1e-12 {
            1
        } else if n[0].abs() < 1e-12 {
            0
        } else {
            return Err(Error::InvalidMesh(format!("outlet facet with normal {n:?} is not axis-aligned")));
        };
        for (s, _) in facet_scalars(f.nodes[0], f.nodes[1])? {
            pairs.push((2 * s + tangential, 0.0));
        }
    }
    for f in topo.facets().iter().filter(|f| boundary.inlet.contains(&f.marker)) {
        for (s, x) in facet_scalars(f.nodes[0], f.nodes[1])? {
            let v = profile(x);
            pairs.push((2 * s, v[0]));
            pairs.push((2 * s + 1, v[1]));
        }
    }
    for f in topo.facets().iter().filter(|f| boundary.walls.contains(&f.marker)) {
        for (s, _) in facet_scalars(f.nodes[0], f.nodes[1])? {
            pairs.push((2 * s, 0.0));
            pairs.push((2 * s + 1, 0.0));
        }
    }
    Ok(DirichletBc::new(pairs))
}

/// `int u.n ds` over the facets of each marker, exact for P2 traces.
pub fn flow_rates(mesh: &Mesh, z: &[f64], markers: &[i32]) -> Result<Vec<f64>> {
    let topo = mesh.topology();
    let nn = topo.n_nodes();
    markers
        .iter()
        .map(|&m| {
            if !topo.has_marker(m) {
                return Err(Error::UnknownMarker(m));
            }
            let mut q = 0.0;
            for f in topo.facets_with_marker(m) {
                let [a, b] = f.nodes;
                let e = topo.edge_index(a, b).ok_or(Error::MeshMismatch)?;
                let (n, len) = mesh.facet_normal(f).ok_or(Error::MeshMismatch)?;
                let un = |s: usize| z[2 * s] * n[0] + z[2 * s + 1] * n[1];
                q += len / 6.0 * (un(a) + 4.0 * un(nn + e) + un(b));
            }
            Ok(q)
        })
        .collect()
}

/// Weights `w` with `rate_i(z) = w_i . z`, the derivative of each outlet rate.
pub fn flow_rate_functionals(mesh: &Mesh, markers: &[i32]) -> Result<Vec<Vec<(usize, f64)>>> {
    let topo = mesh.topology();
    let nn = topo.n_nodes();
    markers
        .iter()
        .map(|&m| {
            if !topo.has_marker(m) {
                return Err(Error::UnknownMarker(m));
            }
            let mut w = Vec::new();
            for f in topo.facets_with_marker(m) {
                let [a, b] = f.nodes;
                let e = topo.edge_index(a, b).ok_or(Error::MeshMismatch)?;
                let (n, len) = mesh.facet_normal(f).ok_or(Error::MeshMismatch)?;
                for (s, k) in [(a, 1.0), (nn + e, 4.0), (b, 1.0)] {
                    w.push((2 * s, len / 6.0 * k * n[0]));
                    w.push((2 * s + 1, len / 6.0 * k * n[1]));
                }
            }
            Ok(w)
        })
        .collect()
}

/// Velocity of a Taylor-Hood vector at a scalar P2 index (node or `n_nodes + edge`).
pub fn velocity_at(z: &[f64], scalar: usize) -> Point {
    [z[2 * scalar], z[2 * scalar + 1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::solve::solve_sparse;
    use crate::mesh::generate::rectangle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // markers: bottom, right, top, left
    fn channel(nx: usize, ny: usize) -> Mesh {
        rectangle([0.0, -1.0], [3.0, 0.0], nx, ny, [2, 4, 2, 1]).unwrap()
    }

    fn boundary() -> FlowBoundary {
        FlowBoundary { inlet: vec![1], walls: vec![2], outlets: vec![4] }
    }

    fn poiseuille(x: Point) -> Point {
        [-6.0 * x[1] * (x[1] + 1.0), 0.0]
    }

    fn stokes(mesh: &Mesh, profile: impl Fn(Point) -> Point) -> Vec<f64> {
        let bc = flow_bc(mesh, &boundary(), profile).unwrap();
        let (a, b) = assemble_stokes(mesh, &bc, Exec::Sequential).unwrap();
        solve_sparse(&a, &b, false).unwrap()
    }

    #[test]
    fn poiseuille_is_reproduced_at_every_velocity_dof() {
        let m = channel(9, 4);
        let z = stokes(&m, poiseuille);
        let topo = m.topology();
        let nn = topo.n_nodes();
        for s in 0..nn + topo.n_edges() {
            let x = if s < nn {
                m.coords()[s]
            } else {
                let [a, b] = topo.edges()[s - nn];
                let (pa, pb) = (m.coords()[a], m.coords()[b]);
                [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
            };
            let u = velocity_at(&z, s);
            let e = poiseuille(x);
            assert!((u[0] - e[0]).abs() < 1e-10 && (u[1] - e[1]).abs() < 1e-10, "{s}: {u:?} vs {e:?}");
        }
        // p = 12 (3 - x) makes -Lap u + grad p = 0 with the do-nothing outlet
        let off = FunctionSpace::of(topo, Family::TaylorHood).pressure_offset();
        for (n, x) in m.coords().iter().enumerate() {
            assert!((z[off + n] - 12.0 * (3.0 - x[0])).abs() < 1e-8);
        }
        let q = flow_rates(&m, &z, &[1, 4]).unwrap();
        assert!((q[0] + 1.0).abs() < 1e-10);
        assert!((q[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn discrete_divergence_vanishes() {
        let m = channel(6, 5);
        let z = stokes(&m, poiseuille);
        let r = ns_residual(&m, 0.0, &z, Exec::Sequential);
        let off = FunctionSpace::of(m.topology(), Family::TaylorHood).pressure_offset();
        assert!(r[off..].iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn zero_inlet_gives_zero_solution() {
        let m = channel(4, 3);
        let z = stokes(&m, |_| [0.0, 0.0]);
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = channel(4, 3);
        let n = FunctionSpace::of(m.topology(), Family::TaylorHood).n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dz: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let re = 100.0;
        let j = ns_jacobian(&m, re, &z, Exec::Sequential);
        let jd = j.matvec(&dz);
        let h = 1e-6;
        let zp: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a - h * b).collect();
        let rp = ns_residual(&m, re, &zp, Exec::Sequential);
        let rm = ns_residual(&m, re, &zm, Exec::Sequential);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let err: f64 = fd.iter().zip(&jd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let nrm: f64 = jd.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err <= 1e-6 * nrm, "{err} vs {nrm}");
    }

    #[test]
    fn stokes_solution_has_zero_residual_at_zero_reynolds() {
        let m = channel(5, 4);
        let bc = flow_bc(&m, &boundary(), poiseuille).unwrap();
        let z = stokes(&m, poiseuille);
        let (_, r) = assemble_ns_system(&m, 0.0, &z, &bc, Exec::Sequential).unwrap();
        let scale = ns_jacobian(&m, 0.0, &z, Exec::Sequential).max_abs();
        assert!(r.iter().all(|x| x.abs() <= 1e-10 * scale));
    }
}
