//! Edge- and time-averaged convective fluxes
//! `v_{K,σ} = (1/(Δt m_σ)) ∫_{t_n}^{t_{n+1}} ∫_σ v·n_{K,σ} dγ dt`,
//! upwind traces and divergence diagnostics.

use crate::geometry::Point2;
use crate::mesh::{BoundaryEdge, InteriorEdge, Mesh};
use crate::problem::Velocity;

/// `1/√3`, the positive node of the 2-point Gauss rule.
const GAUSS2: f64 = 0.577_350_269_189_625_8;

/// How the space-time flux integral is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxQuadrature {
    /// Difference of the stream function at the edge endpoints; exact for
    /// every registry field. The time factor is affine and integrated exactly.
    #[default]
    Stream,
    /// 2-point Gauss on the edge × 2-point Gauss in time. Exact for fields
    /// that are affine in space and time.
    Gauss2x2,
}

impl FluxQuadrature {
    pub fn name(&self) -> &'static str {
        match self {
            FluxQuadrature::Stream => "stream",
            FluxQuadrature::Gauss2x2 => "gauss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stream" => Some(FluxQuadrature::Stream),
            "gauss" => Some(FluxQuadrature::Gauss2x2),
            _ => None,
        }
    }
}

/// Averaged normal velocity across the segment `ends`, for the unit normal `normal`.
fn segment_flux(velocity: &Velocity, ends: [Point2; 2], normal: Point2, t_n: f64, t_n1: f64, route: FluxQuadrature) -> f64 {
    let [a, b] = ends;
    let len = a.distance(b);
    match route {
        FluxQuadrature::Stream => {
            // For n = (τ_y, -τ_x), v·n = dψ/ds along τ = (b - a)/|b - a|.
            let tau = (b - a) * (1.0 / len);
            let sign = normal.dot(Point2::new(tau.y, -tau.x));
            let mean_factor = velocity.time_factor(0.5 * (t_n + t_n1));
            mean_factor * sign * (velocity.field.stream(b) - velocity.field.stream(a)) / len
        }
        FluxQuadrature::Gauss2x2 => {
            // Both 2-point weights equal 1 on [-1, 1].
            let nodes = [-GAUSS2, GAUSS2];
            let mut acc = 0.0;
            for ti in nodes {
                let t = t_n + 0.5 * (t_n1 - t_n) * (ti + 1.0);
                for si in nodes {
                    let p = a + (b - a) * (0.5 * (si + 1.0));
                    acc += 0.25 * velocity.eval(t, p).dot(normal);
                }
            }
            acc
        }
    }
}

/// `v_{K,σ}` for the interior edge `σ = K|L`, oriented with `n_{K,σ}`.
pub fn edge_flux_average(velocity: &Velocity, edge: &InteriorEdge, t_n: f64, t_n1: f64, route: FluxQuadrature) -> f64 {
    debug_assert!(t_n < t_n1);
    segment_flux(velocity, edge.endpoints, edge.normal, t_n, t_n1, route)
}

/// Averaged outward normal velocity across a boundary edge. Zero for fields
/// satisfying `v·n = 0` on the boundary.
pub fn boundary_flux_average(velocity: &Velocity, edge: &BoundaryEdge, t_n: f64, t_n1: f64, route: FluxQuadrature) -> f64 {
    segment_flux(velocity, edge.endpoints, edge.normal, t_n, t_n1, route)
}

/// Fluxes `v_{K,σ}^{n+1}` on every interior edge for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFluxField<'m> {
    mesh: &'m Mesh,
    step: usize,
    values: Vec<f64>,
}

impl<'m> EdgeFluxField<'m> {
    /// Fluxes for step `step` (the `n + 1` of `v^{n+1}`) over `[t_n, t_n1]`.
    pub fn assemble(mesh: &'m Mesh, velocity: &Velocity, step: usize, t_n: f64, t_n1: f64, route: FluxQuadrature) -> Self {
        let values = if velocity.is_zero() {
            vec![0.0; mesh.interior_edges().len()]
        } else {
            mesh.interior_edges().iter().map(|e| edge_flux_average(velocity, e, t_n, t_n1, route)).collect()
        };
        Self { mesh, step, values }
    }

    pub fn from_values(mesh: &'m Mesh, step: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), mesh.interior_edges().len());
        Self { mesh, step, values }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Flux oriented with the stored normal, i.e. seen from the first cell.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flux across interior edge `edge` seen from `cell`. The value seen from
    /// the second cell is the exact negation of the stored one.
    pub fn from_cell(&self, edge: usize, cell: usize) -> f64 {
        let (k, l) = self.mesh.interior_edges()[edge].cells;
        if cell == k {
            self.values[edge]
        } else {
            assert_eq!(cell, l, "cell {cell} is not adjacent to edge {edge}");
            -self.values[edge]
        }
    }

    /// Per cell, `Σ_{σ ∈ E_int ∩ E_K} m_σ v_{K,σ}`.
    pub fn divergence_defect(&self) -> Vec<f64> {
        let mut defect = vec![0.0; self.mesh.num_cells()];
        for (e, &v) in self.mesh.interior_edges().iter().zip(&self.values) {
            let f = e.length * v;
            defect[e.cells.0] += f;
            defect[e.cells.1] -= f;
        }
        defect
    }

    pub fn max_abs_defect(&self) -> f64 {
        self.divergence_defect().into_iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// `a⁺ = max(a, 0)`.
#[inline]
pub fn positive_part(a: f64) -> f64 {
    a.max(0.0)
}

/// `a⁻ = max(-a, 0)`, so that `a = a⁺ - a⁻`.
#[inline]
pub fn negative_part(a: f64) -> f64 {
    (-a).max(0.0)
}

/// Upstream value across `σ = K|L`: `u_K` if `flux >= 0`, else `u_L`.
#[inline]
pub fn upwind_trace(u_k: f64, u_l: f64, flux: f64) -> f64 {
    if flux >= 0.0 {
        u_k
    } else {
        u_l
    }
}

/// Largest `|v_{K,σ}|` over boundary edges; zero when `v·n = 0` on `∂Λ`.
pub fn max_boundary_flux(mesh: &Mesh, velocity: &Velocity, t_n: f64, t_n1: f64, route: FluxQuadrature) -> f64 {
    mesh.boundary_edges().iter().map(|e| boundary_flux_average(velocity, e, t_n, t_n1, route).abs()).fold(0.0, f64::max)
}
