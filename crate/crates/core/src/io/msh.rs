//! Gmsh MSH 2.2 ASCII subset: 2-node lines (facets) and 3-node triangles.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{signed_area, Facet, Mesh, Point};

const LINE: i64 = 1;
const TRIANGLE: i64 = 2;
const POINT: i64 = 15;
const Z_TOL: f64 = 1e-14;

pub fn read_msh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_msh(&text, &path.display().to_string())
}

/// Parses MSH text; `origin` names the source in error messages.
pub fn parse_msh(text: &str, origin: &str) -> Result<Mesh> {
    let err = |line: usize, message: String| Error::ParseError { path: origin.into(), line, message };
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut pos = 0;
    let mut ids: HashMap<i64, usize> = HashMap::new();
    let mut coords: Vec<Point> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    let mut cell_markers = Vec::new();
    let mut facets = Vec::new();
    let mut saw_format = false;
    let count = |pos: usize| -> Result<(usize, usize)> {
        let (ln, l) = *lines.get(pos).ok_or_else(|| err(0, "unexpected end of file".into()))?;
        let n = l.parse::<usize>().map_err(|_| err(ln, format!("expected a count, found `{l}`")))?;
        Ok((ln, n))
    };
    while pos < lines.len() {
        let (ln, header) = lines[pos];
        pos += 1;
        match header {
            "$MeshFormat" => {
                let (fl, f) = *lines.get(pos).ok_or_else(|| err(ln, "missing format line".into()))?;
                if !f.starts_with("2.2 0") && !f.starts_with("2 0") {
                    return Err(err(fl, format!("unsupported format `{f}`, expected ASCII 2.2")));
                }
                saw_format = true;
                pos += 1;
                expect(&lines, &mut pos, "$EndMeshFormat", origin)?;
            }
            "$Nodes" => {
                let (_, n) = count(pos)?;
                pos += 1;
                for _ in 0..n {
                    let (nl, l) = *lines.get(pos).ok_or_else(|| err(ln, "truncated $Nodes".into()))?;
                    pos += 1;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(err(nl, format!("node line needs 4 fields, found {}", f.len())));
                    }
                    let id = f[0].parse::<i64>().map_err(|_| err(nl, "bad node id".into()))?;
                    let num = |s: &str| s.parse::<f64>().map_err(|_| err(nl, format!("bad coordinate `{s}`")));
                    let (x, y, z) = (num(f[1])?, num(f[2])?, num(f[3])?);
                    if z.abs() > Z_TOL {
                        return Err(err(nl, format!("node {id} has nonzero z = {z}")));
                    }
                    if ids.insert(id, coords.len()).is_some() {
                        return Err(err(nl, format!("duplicate node id {id}")));
                    }
                    coords.push([x, y]);
                }
                expect(&lines, &mut pos, "$EndNodes", origin)?;
            }
            "$Elements" => {
                let (_, n) = count(pos)?;
                pos += 1;
                for _ in 0..n {
                    let (el, l) = *lines.get(pos).ok_or_else(|| err(ln, "truncated $Elements".into()))?;
                    pos += 1;
                    let f: Vec<i64> = l
                        .split_whitespace()
                        .map(|s| s.parse::<i64>().map_err(|_| err(el, format!("bad integer `{s}`"))))
                        .collect::<Result<_>>()?;
                    if f.len() < 3 {
                        return Err(err(el, "element line too short".into()));
                    }
                    let (kind, ntags) = (f[1], f[2]);
                    if ntags < 0 || f.len() < 3 + ntags as usize {
                        return Err(err(el, "bad tag count".into()));
                    }
                    let marker = if ntags > 0 { f[3] as i32 } else { 0 };
                    let nodes = &f[3 + ntags as usize..];
                    let node = |id: i64| ids.get(&id).copied().ok_or_else(|| err(el, format!("unknown node {id}")));
                    let want = match kind {
                        LINE => 2,
                        TRIANGLE => 3,
                        POINT => 1,
                        other => return Err(Error::UnsupportedElement { element_type: other, line: el }),
                    };
                    if nodes.len() != want {
                        return Err(err(el, format!("element type {kind} needs {want} nodes")));
                    }
                    match kind {
                        LINE => facets.push(Facet { nodes: [node(nodes[0])?, node(nodes[1])?], marker }),
                        TRIANGLE => {
                            let mut t = [node(nodes[0])?, node(nodes[1])?, node(nodes[2])?];
                            if signed_area(&coords, &t) < 0.0 {
                                t.swap(1, 2);
                            }
                            triangles.push(t);
                            cell_markers.push(marker);
                        }
                        _ => {}
                    }
                }
                expect(&lines, &mut pos, "$EndElements", origin)?;
            }
            other if other.starts_with('$') && !other.starts_with("$End") => {
                // skip unknown sections such as $PhysicalNames
                let end = format!("$End{}", &other[1..]);
                while pos < lines.len() && lines[pos].1 != end {
                    pos += 1;
                }
                if pos == lines.len() {
                    return Err(err(ln, format!("section {other} is not closed")));
                }
                pos += 1;
            }
            other => return Err(err(ln, format!("unexpected line `{other}`"))),
        }
    }
    if !saw_format {
        return Err(err(1, "missing $MeshFormat".into()));
    }
    Mesh::new(coords, triangles, cell_markers, facets)
}

fn expect(lines: &[(usize, &str)], pos: &mut usize, tag: &str, origin: &str) -> Result<()> {
    match lines.get(*pos) {
        Some((_, l)) if *l == tag => {
            *pos += 1;
            Ok(())
        }
        Some((ln, l)) => Err(Error::ParseError { path: origin.into(), line: *ln, message: format!("expected {tag}, found `{l}`") }),
        None => Err(Error::ParseError { path: origin.into(), line: 0, message: format!("missing {tag}") }),
    }
}

/// MSH 2.2 text with 1-based ids in mesh order; coordinates in shortest
/// round-trip form.
pub fn format_msh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n");
    let _ = writeln!(s, "$Nodes\n{}", mesh.n_nodes());
    for (k, p) in mesh.coords().iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?} 0", k + 1, p[0], p[1]);
    }
    s.push_str("$EndNodes\n");
    let _ = writeln!(s, "$Elements\n{}", mesh.facets().len() + mesh.n_triangles());
    let mut id = 1;
    for f in mesh.facets() {
        let _ = writeln!(s, "{id} 1 2 {m} {m} {} {}", f.nodes[0] + 1, f.nodes[1] + 1, m = f.marker);
        id += 1;
    }
    for (t, m) in mesh.triangles().iter().zip(mesh.cell_markers()) {
        let _ = writeln!(s, "{id} 2 2 {m} {m} {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        id += 1;
    }
    s.push_str("$EndElements\n");
    s
}

pub fn write_msh(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    std::fs::write(path, format_msh(mesh))?;
    Ok(())
}
