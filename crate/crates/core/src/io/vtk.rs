//! Legacy VTK ASCII unstructured-grid output.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

const VTK_TRIANGLE: u8 = 5;

/// Nodal data attached to a VTK file.
#[derive(Debug, Clone, Copy)]
pub enum PointData<'a> {
    Scalar(&'a [f64]),
    /// One 2D vector per node.
    Vector(&'a [[f64; 2]]),
}

/// VTK text for `mesh` with nodal fields and cell markers as cell data.
pub fn format_vtk(mesh: &Mesh, fields: &[(&str, PointData<'_>)]) -> Result<String> {
    let n = mesh.n_nodes();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\nshapemap\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {n} double");
    for p in mesh.coords() {
        let _ = writeln!(s, "{:.17e} {:.17e} 0", p[0], p[1]);
    }
    let nt = mesh.n_triangles();
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        let _ = writeln!(s, "{VTK_TRIANGLE}");
    }
    let _ = writeln!(s, "CELL_DATA {nt}\nSCALARS cell_marker int 1\nLOOKUP_TABLE default");
    for m in mesh.cell_markers() {
        let _ = writeln!(s, "{m}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {n}");
    }
    for (name, data) in fields {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::InvalidParameter(format!("field name `{name}` must be one word")));
        }
        match data {
            PointData::Scalar(v) => {
                if v.len() != n {
                    return Err(Error::SpaceMismatch);
                }
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in *v {
                    let _ = writeln!(s, "{x:.17e}");
                }
            }
            PointData::Vector(v) => {
                if v.len() != n {
                    return Err(Error::SpaceMismatch);
                }
                let _ = writeln!(s, "VECTORS {name} double");
                for x in *v {
                    let _ = writeln!(s, "{:.17e} {:.17e} 0", x[0], x[1]);
                }
            }
        }
    }
    Ok(s)
}

pub fn write_vtk(path: impl AsRef<Path>, mesh: &Mesh, fields: &[(&str, PointData<'_>)]) -> Result<()> {
    std::fs::write(path, format_vtk(mesh, fields)?)?;
    Ok(())
}
