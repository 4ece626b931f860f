//! Line-oriented text format for admissible meshes.
//!
//! ```text
//! fvmesh 1
//! # comment
//! cell  <id> <x> <y> <area>
//! iedge <id> <K> <L> <length> <nx> <ny> <ax> <ay> <bx> <by>
//! bedge <id> <K> <length> <nx> <ny> <ax> <ay> <bx> <by>
//! ```
//!
//! `(nx, ny)` is the unit normal (from `K` toward `L` for interior edges,
//! outward for boundary edges) and `(ax, ay)–(bx, by)` are the edge
//! endpoints. `d_KL` is not stored; it is derived from the cell centers.

use std::io::Write;
use std::path::Path;

use super::{BoundaryEdgeSpec, CellSpec, InteriorEdgeSpec, Mesh, MeshError};
use crate::geometry::Point2;

const HEADER: &str = "fvmesh 1";

/// Reads and validates a mesh file.
pub fn load_mesh(path: impl AsRef<Path>, orthogonality_tol: f64) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path)?;
    parse_mesh(&text, orthogonality_tol)
}

pub fn parse_mesh(text: &str, orthogonality_tol: f64) -> Result<Mesh, MeshError> {
    let mut cells = Vec::new();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    let mut saw_header = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| MeshError::Parse { line: line_no, message };
        if !saw_header {
            let normalized: Vec<&str> = line.split_whitespace().collect();
            if normalized != HEADER.split_whitespace().collect::<Vec<_>>() {
                return Err(err(format!("expected header `{HEADER}`, found `{line}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let f = Fields { items: &fields[1..], line: line_no };
        match fields[0] {
            "cell" => {
                f.expect_len(4)?;
                cells.push(CellSpec { id: f.int(0)?, center: Point2::new(f.real(1)?, f.real(2)?), area: f.real(3)? });
            }
            "iedge" => {
                f.expect_len(10)?;
                interior.push(InteriorEdgeSpec {
                    id: f.int(0)?,
                    cells: (f.int(1)?, f.int(2)?),
                    length: f.real(3)?,
                    normal: Point2::new(f.real(4)?, f.real(5)?),
                    endpoints: [Point2::new(f.real(6)?, f.real(7)?), Point2::new(f.real(8)?, f.real(9)?)],
                });
            }
            "bedge" => {
                f.expect_len(9)?;
                boundary.push(BoundaryEdgeSpec {
                    id: f.int(0)?,
                    cell: f.int(1)?,
                    length: f.real(2)?,
                    normal: Point2::new(f.real(3)?, f.real(4)?),
                    endpoints: [Point2::new(f.real(5)?, f.real(6)?), Point2::new(f.real(7)?, f.real(8)?)],
                });
            }
            other => return Err(err(format!("unknown record `{other}`"))),
        }
    }
    if !saw_header {
        return Err(MeshError::Parse { line: 0, message: format!("missing header `{HEADER}`") });
    }
    Mesh::from_parts(cells, interior, boundary, orthogonality_tol)
}

struct Fields<'a> {
    items: &'a [&'a str],
    line: usize,
}

impl Fields<'_> {
    fn expect_len(&self, n: usize) -> Result<(), MeshError> {
        if self.items.len() != n {
            return Err(MeshError::Parse { line: self.line, message: format!("expected {n} fields, found {}", self.items.len()) });
        }
        Ok(())
    }

    fn int(&self, i: usize) -> Result<usize, MeshError> {
        self.items[i]
            .parse()
            .map_err(|_| MeshError::Parse { line: self.line, message: format!("`{}` is not a non-negative integer", self.items[i]) })
    }

    fn real(&self, i: usize) -> Result<f64, MeshError> {
        let v: f64 = self.items[i]
            .parse()
            .map_err(|_| MeshError::Parse { line: self.line, message: format!("`{}` is not a number", self.items[i]) })?;
        if !v.is_finite() {
            return Err(MeshError::Parse { line: self.line, message: format!("`{}` is not finite", self.items[i]) });
        }
        Ok(v)
    }
}

/// Writes `mesh` in the text format. Floats use the shortest representation
/// that parses back to the same value.
pub fn write_mesh<W: Write>(mesh: &Mesh, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for c in mesh.cells() {
        writeln!(out, "cell {} {} {} {}", c.id, c.center.x, c.center.y, c.area)?;
    }
    for e in mesh.interior_edges() {
        let [a, b] = e.endpoints;
        writeln!(
            out,
            "iedge {} {} {} {} {} {} {} {} {} {}",
            e.id, e.cells.0, e.cells.1, e.length, e.normal.x, e.normal.y, a.x, a.y, b.x, b.y
        )?;
    }
    for e in mesh.boundary_edges() {
        let [a, b] = e.endpoints;
        writeln!(out, "bedge {} {} {} {} {} {} {} {} {}", e.id, e.cell, e.length, e.normal.x, e.normal.y, a.x, a.y, b.x, b.y)?;
    }
    Ok(())
}
