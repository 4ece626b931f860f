use super::{BoundaryEdgeSpec, CellSpec, InteriorEdgeSpec, Mesh, MeshError, DEFAULT_ORTHOGONALITY_TOL};
use crate::geometry::{Point2, Rect};

/// Uniform `nx × ny` grid of rectangles with centers at the cell midpoints.
///
/// Cells are numbered row by row (`k = j·nx + i`). Interior edges come first
/// (vertical ones, then horizontal ones), followed by the boundary edges.
/// Grid lines are placed at `x0 + (x1 - x0)·i/nx`, so a `(2nx, 2ny)` grid
/// reproduces every line of the `(nx, ny)` grid bit for bit.
pub fn build_uniform_rect_mesh(nx: usize, ny: usize, rect: Rect) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidArgument(format!("grid dimensions must be positive, got {nx}×{ny}")));
    }
    if rect.is_degenerate() {
        return Err(MeshError::InvalidArgument(format!("degenerate rectangle {rect:?}")));
    }
    let xs = grid_lines(rect.x0, rect.x1, nx);
    let ys = grid_lines(rect.y0, rect.y1, ny);
    let cell = |i: usize, j: usize| j * nx + i;

    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let w = xs[i + 1] - xs[i];
            let h = ys[j + 1] - ys[j];
            cells.push(CellSpec { id: cell(i, j), center: Point2::new(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])), area: w * h });
        }
    }

    let mut next_id = 0;
    let mut interior = Vec::with_capacity(nx * (ny - 1) + ny * (nx - 1));
    for j in 0..ny {
        for i in 0..nx - 1 {
            let a = Point2::new(xs[i + 1], ys[j]);
            let b = Point2::new(xs[i + 1], ys[j + 1]);
            interior.push(InteriorEdgeSpec {
                id: next_id,
                cells: (cell(i, j), cell(i + 1, j)),
                length: b.y - a.y,
                normal: Point2::new(1.0, 0.0),
                endpoints: [a, b],
            });
            next_id += 1;
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            let a = Point2::new(xs[i], ys[j + 1]);
            let b = Point2::new(xs[i + 1], ys[j + 1]);
            interior.push(InteriorEdgeSpec {
                id: next_id,
                cells: (cell(i, j), cell(i, j + 1)),
                length: b.x - a.x,
                normal: Point2::new(0.0, 1.0),
                endpoints: [a, b],
            });
            next_id += 1;
        }
    }

    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    let mut push = |cell: usize, normal: Point2, a: Point2, b: Point2| {
        boundary.push(BoundaryEdgeSpec { id: next_id, cell, length: a.distance(b), normal, endpoints: [a, b] });
        next_id += 1;
    };
    for i in 0..nx {
        push(cell(i, 0), Point2::new(0.0, -1.0), Point2::new(xs[i], ys[0]), Point2::new(xs[i + 1], ys[0]));
    }
    for j in 0..ny {
        push(cell(nx - 1, j), Point2::new(1.0, 0.0), Point2::new(xs[nx], ys[j]), Point2::new(xs[nx], ys[j + 1]));
    }
    for i in 0..nx {
        push(cell(i, ny - 1), Point2::new(0.0, 1.0), Point2::new(xs[i + 1], ys[ny]), Point2::new(xs[i], ys[ny]));
    }
    for j in 0..ny {
        push(cell(0, j), Point2::new(-1.0, 0.0), Point2::new(xs[0], ys[j + 1]), Point2::new(xs[0], ys[j]));
    }

    Mesh::from_parts(cells, interior, boundary, DEFAULT_ORTHOGONALITY_TOL)
}

fn grid_lines(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let len = hi - lo;
    (0..=n).map(|i| if i == n { hi } else { lo + len * (i as f64) / (n as f64) }).collect()
}
