//! Admissible finite-volume meshes of a polygonal domain in the plane.
//!
//! A mesh is a set of convex polygonal control volumes, each with a center
//! `x_K`, such that for every interior edge `σ = K|L` the segment
//! `[x_K, x_L]` is orthogonal to `σ`. Every constructor funnels through
//! [`Mesh::from_parts`], which checks the admissibility conditions and
//! derives the secondary quantities (center distances, diamond areas, cell
//! diameters, mesh size).

mod builder;
mod io;
mod regularity;

pub use builder::build_uniform_rect_mesh;
pub use io::{load_mesh, parse_mesh, write_mesh};
pub use regularity::{mesh_regularity, MeshRegularity};

use crate::geometry::{Point2, Rect};
use crate::sum::compensated_sum;

/// Default tolerance of the orthogonality check `x_L - x_K = d_KL n_Kσ`.
pub const DEFAULT_ORTHOGONALITY_TOL: f64 = 1e-10;

/// Relative tolerance of `Σ m_K = |Λ|`.
const AREA_REL_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no cells")]
    Empty,
    #[error("{what} {id} has non-positive measure {value}")]
    NonPositive { what: &'static str, id: usize, value: f64 },
    #[error("interior edge {edge} violates orthogonality: |x_L - x_K - d_KL n| = {deviation:e}")]
    Orthogonality { edge: usize, deviation: f64 },
    #[error("cell areas sum to {cells_total} but the boundary encloses {domain}")]
    AreaMismatch { cells_total: f64, domain: f64 },
    #[error("inconsistent mesh: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A control volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub id: usize,
    pub center: Point2,
    pub area: f64,
    /// Polygon vertices collected from the endpoints of the cell's edges.
    pub vertices: Vec<Point2>,
    pub diameter: f64,
    /// Set when the cell is an axis-aligned rectangle.
    pub rect: Option<Rect>,
}

/// An edge `σ = K|L` shared by two control volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdge {
    pub id: usize,
    /// `(K, L)`; the normal points from `K` toward `L`.
    pub cells: (usize, usize),
    pub length: f64,
    pub center_distance: f64,
    pub normal: Point2,
    pub diamond_area: f64,
    pub endpoints: [Point2; 2],
}

impl InteriorEdge {
    /// Transmissibility `m_σ / d_KL`.
    pub fn transmissibility(&self) -> f64 {
        self.length / self.center_distance
    }
}

/// An edge on the domain boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub id: usize,
    pub cell: usize,
    pub length: f64,
    /// Unit normal pointing out of the domain.
    pub normal: Point2,
    pub endpoints: [Point2; 2],
    /// Area of the triangle spanned by `x_K` and the edge.
    pub half_diamond_area: f64,
}

/// Index of an edge in one of the two edge lists of a [`Mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeRef {
    Interior(usize),
    Boundary(usize),
}

/// Raw cell record as given by a builder or a mesh file.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub id: usize,
    pub center: Point2,
    pub area: f64,
}

/// Raw interior edge record; `d_KL` is derived from the cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorEdgeSpec {
    pub id: usize,
    pub cells: (usize, usize),
    pub length: f64,
    pub normal: Point2,
    pub endpoints: [Point2; 2],
}

/// Raw boundary edge record.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdgeSpec {
    pub id: usize,
    pub cell: usize,
    pub length: f64,
    pub normal: Point2,
    pub endpoints: [Point2; 2],
}

/// An admissible mesh. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    cells: Vec<Cell>,
    interior_edges: Vec<InteriorEdge>,
    boundary_edges: Vec<BoundaryEdge>,
    cell_edges: Vec<Vec<EdgeRef>>,
    size: f64,
    domain_area: f64,
}

impl Mesh {
    /// Builds and validates a mesh. Cell ids must be `0..n`; edge ids must be
    /// unique across interior and boundary edges. Edges are stored in
    /// ascending id order.
    pub fn from_parts(
        cells: Vec<CellSpec>,
        interior: Vec<InteriorEdgeSpec>,
        boundary: Vec<BoundaryEdgeSpec>,
        orthogonality_tol: f64,
    ) -> Result<Mesh, MeshError> {
        if cells.is_empty() {
            return Err(MeshError::Empty);
        }
        if !(orthogonality_tol >= 0.0) {
            return Err(MeshError::InvalidArgument(format!("orthogonality tolerance must be non-negative, got {orthogonality_tol}")));
        }
        let n = cells.len();
        let mut slots: Vec<Option<CellSpec>> = vec![None; n];
        for c in cells {
            if c.id >= n {
                return Err(MeshError::Inconsistent(format!("cell id {} out of range 0..{n}", c.id)));
            }
            if !(c.area > 0.0) || !c.area.is_finite() {
                return Err(MeshError::NonPositive { what: "cell", id: c.id, value: c.area });
            }
            if !c.center.x.is_finite() || !c.center.y.is_finite() {
                return Err(MeshError::Inconsistent(format!("cell {} has a non-finite center", c.id)));
            }
            let id = c.id;
            if slots[id].replace(c).is_some() {
                return Err(MeshError::Inconsistent(format!("duplicate cell id {id}")));
            }
        }
        let specs: Vec<CellSpec> = slots.into_iter().map(|c| c.expect("all ids filled")).collect();

        let mut interior = interior;
        let mut boundary = boundary;
        interior.sort_by_key(|e| e.id);
        boundary.sort_by_key(|e| e.id);
        let mut ids: Vec<usize> = interior.iter().map(|e| e.id).chain(boundary.iter().map(|e| e.id)).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(MeshError::Inconsistent(format!("duplicate edge id {}", w[0])));
        }

        let mut cell_edges: Vec<Vec<EdgeRef>> = vec![Vec::new(); n];
        let mut interior_edges = Vec::with_capacity(interior.len());
        let mut seen_pairs = std::collections::HashSet::new();
        for (idx, e) in interior.into_iter().enumerate() {
            let (k, l) = e.cells;
            if k >= n || l >= n || k == l {
                return Err(MeshError::Inconsistent(format!("interior edge {} references cells ({k}, {l})", e.id)));
            }
            if !seen_pairs.insert((k.min(l), k.max(l))) {
                return Err(MeshError::Inconsistent(format!("cells {k} and {l} share more than one interior edge (edge {})", e.id)));
            }
            check_edge_geometry("interior edge", e.id, e.length, e.normal, e.endpoints, orthogonality_tol)?;
            let delta = specs[l].center - specs[k].center;
            let d = delta.norm();
            if !(d > 0.0) {
                return Err(MeshError::NonPositive { what: "center distance of edge", id: e.id, value: d });
            }
            let deviation = (delta - e.normal * d).x.abs().max((delta - e.normal * d).y.abs());
            if !(deviation <= orthogonality_tol) {
                return Err(MeshError::Orthogonality { edge: e.id, deviation });
            }
            cell_edges[k].push(EdgeRef::Interior(idx));
            cell_edges[l].push(EdgeRef::Interior(idx));
            interior_edges.push(InteriorEdge {
                id: e.id,
                cells: (k, l),
                length: e.length,
                center_distance: d,
                normal: e.normal,
                diamond_area: 0.5 * e.length * d,
                endpoints: e.endpoints,
            });
        }

        let mut boundary_edges = Vec::with_capacity(boundary.len());
        for (idx, e) in boundary.into_iter().enumerate() {
            if e.cell >= n {
                return Err(MeshError::Inconsistent(format!("boundary edge {} references missing cell {}", e.id, e.cell)));
            }
            check_edge_geometry("boundary edge", e.id, e.length, e.normal, e.endpoints, orthogonality_tol)?;
            let center = specs[e.cell].center;
            let dist = center.distance_to_segment(e.endpoints[0], e.endpoints[1]);
            cell_edges[e.cell].push(EdgeRef::Boundary(idx));
            boundary_edges.push(BoundaryEdge {
                id: e.id,
                cell: e.cell,
                length: e.length,
                normal: e.normal,
                endpoints: e.endpoints,
                half_diamond_area: 0.5 * e.length * dist,
            });
        }

        let mut cells = Vec::with_capacity(n);
        for spec in specs {
            let edges = &cell_edges[spec.id];
            if edges.len() < 3 {
                return Err(MeshError::Inconsistent(format!("cell {} has {} edges; a polygon needs at least 3", spec.id, edges.len())));
            }
            // Closed polygon: Σ_σ m_σ n_Kσ = 0.
            let mut closure = Point2::default();
            let mut perimeter = 0.0;
            let mut endpoints: Vec<Point2> = Vec::with_capacity(2 * edges.len());
            for &r in edges {
                let (len, normal, ends) = match r {
                    EdgeRef::Interior(i) => {
                        let e = &interior_edges[i];
                        let sign = if e.cells.0 == spec.id { 1.0 } else { -1.0 };
                        (e.length, e.normal * sign, e.endpoints)
                    }
                    EdgeRef::Boundary(i) => {
                        let e = &boundary_edges[i];
                        (e.length, e.normal, e.endpoints)
                    }
                };
                closure = closure + normal * len;
                perimeter += len;
                endpoints.extend(ends);
            }
            let mut vertices: Vec<Point2> = Vec::new();
            for p in endpoints {
                if !vertices.iter().any(|v| v.distance(p) <= 1e-12 * perimeter) {
                    vertices.push(p);
                }
            }
            if closure.norm() > 1e-9 * perimeter {
                return Err(MeshError::Inconsistent(format!("cell {} is not closed: |Σ m_σ n_Kσ| = {:e}", spec.id, closure.norm())));
            }
            let mut diameter: f64 = 0.0;
            for (i, a) in vertices.iter().enumerate() {
                for b in &vertices[i + 1..] {
                    diameter = diameter.max(a.distance(*b));
                }
            }
            let rect = detect_rect(&vertices, spec.area);
            cells.push(Cell { id: spec.id, center: spec.center, area: spec.area, vertices, diameter, rect });
        }

        // |Λ| = ½ ∮ x·n dγ over the boundary.
        let domain_area = 0.5
            * compensated_sum(boundary_edges.iter().map(|e| {
                let mid = e.endpoints[0].midpoint(e.endpoints[1]);
                e.length * mid.dot(e.normal)
            }));
        let cells_total = compensated_sum(cells.iter().map(|c| c.area));
        if !((cells_total - domain_area).abs() <= AREA_REL_TOL * domain_area.abs()) {
            return Err(MeshError::AreaMismatch { cells_total, domain: domain_area });
        }

        let size = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
        Ok(Mesh { cells, interior_edges, boundary_edges, cell_edges, size, domain_area })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.interior_edges
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    /// Edges `E_K` of cell `k`.
    pub fn cell_edges(&self, k: usize) -> &[EdgeRef] {
        &self.cell_edges[k]
    }

    /// Mesh size `h`, the largest cell diameter.
    pub fn size(&self) -> f64 {
        self.size
    }

    /// `|Λ|`, computed from the boundary.
    pub fn domain_area(&self) -> f64 {
        self.domain_area
    }

    /// Outward unit normal of `edge` with respect to cell `k`.
    pub fn outward_normal(&self, k: usize, edge: EdgeRef) -> Point2 {
        match edge {
            EdgeRef::Interior(i) => {
                let e = &self.interior_edges[i];
                if e.cells.0 == k {
                    e.normal
                } else {
                    -e.normal
                }
            }
            EdgeRef::Boundary(i) => self.boundary_edges[i].normal,
        }
    }

    /// Area centroid of cell `k`, from `∫_K x dx = ∫_∂K (x²/2) n_x dγ` and its `y` analogue.
    pub fn centroid(&self, k: usize) -> Point2 {
        let mut mx = 0.0;
        let mut my = 0.0;
        for &edge in &self.cell_edges[k] {
            let (ends, len) = match edge {
                EdgeRef::Interior(i) => (self.interior_edges[i].endpoints, self.interior_edges[i].length),
                EdgeRef::Boundary(i) => (self.boundary_edges[i].endpoints, self.boundary_edges[i].length),
            };
            let n = self.outward_normal(k, edge);
            let [a, b] = ends;
            // ∫_σ s² dγ = m_σ (a² + ab + b²) / 3 along the segment
            mx += 0.5 * n.x * len * (a.x * a.x + a.x * b.x + b.x * b.x) / 3.0;
            my += 0.5 * n.y * len * (a.y * a.y + a.y * b.y + b.y * b.y) / 3.0;
        }
        let area = self.cells[k].area;
        Point2::new(mx / area, my / area)
    }

    /// Bounding box of all cell vertices.
    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in self.cells.iter().flat_map(|c| &c.vertices) {
            r.x0 = r.x0.min(v.x);
            r.y0 = r.y0.min(v.y);
            r.x1 = r.x1.max(v.x);
            r.y1 = r.y1.max(v.y);
        }
        r
    }

    /// Sum of diamond areas over all edges; boundary edges contribute the
    /// triangle between the cell center and the edge.
    pub fn diamond_area_total(&self) -> f64 {
        compensated_sum(self.interior_edges.iter().map(|e| e.diamond_area).chain(self.boundary_edges.iter().map(|e| e.half_diamond_area)))
    }
}

fn check_edge_geometry(what: &'static str, id: usize, length: f64, normal: Point2, ends: [Point2; 2], tol: f64) -> Result<(), MeshError> {
    if !(length > 0.0) || !length.is_finite() {
        return Err(MeshError::NonPositive { what, id, value: length });
    }
    if !((normal.norm() - 1.0).abs() <= tol.max(1e-14)) {
        return Err(MeshError::Inconsistent(format!("{what} {id} has a non-unit normal ({}, {})", normal.x, normal.y)));
    }
    let span = ends[1] - ends[0];
    if !((span.norm() - length).abs() <= tol.max(1e-14) * length.max(1.0)) {
        return Err(MeshError::Inconsistent(format!("{what} {id}: length {length} disagrees with endpoint distance {}", span.norm())));
    }
    if !(span.dot(normal).abs() <= tol.max(1e-14) * length.max(1.0)) {
        return Err(MeshError::Inconsistent(format!("{what} {id}: normal is not orthogonal to the edge")));
    }
    Ok(())
}

fn detect_rect(vertices: &[Point2], area: f64) -> Option<Rect> {
    if vertices.len() != 4 {
        return None;
    }
    let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for v in vertices {
        r.x0 = r.x0.min(v.x);
        r.y0 = r.y0.min(v.y);
        r.x1 = r.x1.max(v.x);
        r.y1 = r.y1.max(v.y);
    }
    let corners = [Point2::new(r.x0, r.y0), Point2::new(r.x1, r.y0), Point2::new(r.x0, r.y1), Point2::new(r.x1, r.y1)];
    let on_corners = vertices.iter().all(|v| corners.iter().any(|c| c == v));
    if on_corners && (r.area() - area).abs() <= 1e-12 * area {
        Some(r)
    } else {
        None
    }
}
