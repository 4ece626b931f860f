use super::{EdgeRef, Mesh};
use crate::geometry::Point2;

/// Shape-regularity summary of a mesh.
///
/// `reg = max(N, max_{K, σ∈E_K} diam(K) / d(x_K, σ))` where `N` is the largest
/// number of edges meeting at a vertex. Both interior and boundary edges of
/// `K` enter the ratio, so the value stays finite on meshes without interior
/// edges (a single cell has `N = 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshRegularity {
    pub reg: f64,
    pub max_vertex_valence: usize,
    pub max_diam_over_dist: f64,
}

pub fn mesh_regularity(mesh: &Mesh) -> MeshRegularity {
    let mut max_ratio: f64 = 0.0;
    for (k, cell) in mesh.cells().iter().enumerate() {
        for &r in mesh.cell_edges(k) {
            let [a, b] = match r {
                EdgeRef::Interior(i) => mesh.interior_edges()[i].endpoints,
                EdgeRef::Boundary(i) => mesh.boundary_edges()[i].endpoints,
            };
            let dist = cell.center.distance_to_segment(a, b);
            max_ratio = max_ratio.max(if dist > 0.0 { cell.diameter / dist } else { f64::INFINITY });
        }
    }
    let valence = max_vertex_valence(mesh, 1e-12 * mesh.size());
    MeshRegularity { reg: max_ratio.max(valence as f64), max_vertex_valence: valence, max_diam_over_dist: max_ratio }
}

/// Endpoints closer than `tol` are treated as one vertex.
fn max_vertex_valence(mesh: &Mesh, tol: f64) -> usize {
    let mut points: Vec<Point2> =
        mesh.interior_edges().iter().flat_map(|e| e.endpoints).chain(mesh.boundary_edges().iter().flat_map(|e| e.endpoints)).collect();
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));

    // Cluster representatives with their incidence counts.
    let mut reps: Vec<(Point2, usize)> = Vec::new();
    let mut window_start = 0;
    for p in points {
        while window_start < reps.len() && reps[window_start].0.x < p.x - tol {
            window_start += 1;
        }
        match reps[window_start..].iter_mut().find(|(q, _)| q.distance(p) <= tol) {
            Some((_, count)) => *count += 1,
            None => reps.push((p, 1)),
        }
    }
    reps.iter().map(|&(_, c)| c).max().unwrap_or(0)
}
