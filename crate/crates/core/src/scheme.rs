//! The semi-implicit upwind two-point-flux time step and the trajectory runner.
//!
//! One step solves, for every cell `K`,
//!
//! ```text
//! (m_K/Δt)(u_K − u_K^n) + Σ_σ m_σ (v_Kσ)⁻ (u_K − u_L) + Σ_σ (m_σ/d_KL)(u_K − u_L)
//!     = (m_K/Δt) g(u_K^n) ΔW + m_K β(u_K)
//! ```
//!
//! with diffusion, convection and `β` implicit and the noise explicit. The
//! upwind form `Σ_σ m_σ v_Kσ u_σ` is available through [`SchemeForm::Raw`];
//! the two coincide when the discrete divergence of the fluxes vanishes.

use crate::calculus::{h1_seminorm, l2_norm, CellField, FieldError};
use crate::linalg::{CsrMatrix, LinalgError, LinearSolver, SolverKind};
use crate::mesh::{EdgeRef, Mesh};
use crate::problem::{InitialCondition, ProblemSpec};
use crate::quadrature::GaussRule;
use crate::stochastic::BrownianPath;
use crate::sum::compensated_sum;
use crate::velocity::{negative_part, positive_part, upwind_trace, EdgeFluxField, FluxQuadrature};

/// Largest accepted `Δt·L_β`. The fixed-point map contracts with factor `Δt·L_β`.
pub const MAX_CONTRACTION: f64 = 0.125;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemeError {
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("Δt·L_β = {product} exceeds {max} (Δt = {dt}, L_β = {lipschitz_beta}); refine the time grid", max = MAX_CONTRACTION)]
    Contraction { dt: f64, lipschitz_beta: f64, product: f64 },
    #[error("Brownian path has {got} steps on [0, {got_horizon}], time grid has {expected} on [0, {horizon}]")]
    PathMismatch { expected: usize, got: usize, horizon: f64, got_horizon: f64 },
    #[error("step {step}: fixed-point iteration did not converge in {iterations} iterations (last change {change:e})")]
    FixedPoint { step: usize, iterations: usize, change: f64 },
    #[error("step {step}: linear solve failed: {source}")]
    Linear { step: usize, source: LinalgError },
    #[error("step {step}: residual {residual:e} exceeds {tol:e}")]
    Residual { step: usize, residual: f64, tol: f64 },
    #[error("step {step}: {source}")]
    Field { step: usize, source: FieldError },
}

/// Uniform grid `t_n = nT/N` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(steps: usize, horizon: f64) -> Result<Self, SchemeError> {
        if steps == 0 {
            return Err(SchemeError::Grid("N must be at least 1".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(SchemeError::Grid(format!("T must be positive, got {horizon}")));
        }
        Ok(Self { steps, horizon })
    }

    /// `N`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `Δt = T/N`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_n`; `t_N = T` exactly.
    pub fn t(&self, n: usize) -> f64 {
        assert!(n <= self.steps, "time index {n} beyond N = {}", self.steps);
        if n == self.steps {
            self.horizon
        } else {
            n as f64 * self.horizon / self.steps as f64
        }
    }

    /// The `n` with `t ∈ [t_n, t_{n+1})`, or `N` for `t = T`. `None` outside `[0, T]`.
    pub fn interval(&self, t: f64) -> Option<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return None;
        }
        if t == self.horizon {
            return Some(self.steps);
        }
        let mut n = ((t / self.dt()) as usize).min(self.steps - 1);
        while n > 0 && t < self.t(n) {
            n -= 1;
        }
        while n + 1 < self.steps && t >= self.t(n + 1) {
            n += 1;
        }
        Some(n)
    }
}

/// Which algebraic form of the step is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemeForm {
    /// Negative parts of the fluxes only; an M-matrix whose rows sum to `m_K/Δt`.
    #[default]
    Split,
    /// Upwind traces `Σ_σ m_σ v_Kσ u_σ`; conserves mass exactly for any fluxes.
    Raw,
}

impl SchemeForm {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeForm::Split => "split",
            SchemeForm::Raw => "raw",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "split" => Some(SchemeForm::Split),
            "raw" => Some(SchemeForm::Raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Fixed-point stop: `‖u^(m+1) − u^(m)‖ <= tol·(1 + ‖u^(m+1)‖)`.
    pub fixed_point_tol: f64,
    pub max_iters: usize,
    /// Relative residual of each linear solve.
    pub linear_tol: f64,
    /// Acceptance bound on the step residual, relative to `1 + ‖u^{n+1}‖`.
    pub residual_tol: f64,
    /// Meshes up to this many cells use the direct solver.
    pub direct_max_cells: usize,
    pub form: SchemeForm,
    pub flux: FluxQuadrature,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            fixed_point_tol: 1e-12,
            max_iters: 200,
            linear_tol: 1e-12,
            residual_tol: 1e-11,
            direct_max_cells: 100_000,
            form: SchemeForm::Split,
            flux: FluxQuadrature::Stream,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SchemeError> {
        for (name, v) in [
            ("fixed-point tolerance", self.fixed_point_tol),
            ("linear tolerance", self.linear_tol),
            ("residual tolerance", self.residual_tol),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SchemeError::Options(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iters == 0 {
            return Err(SchemeError::Options("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// `n + 1`.
    pub step: usize,
    pub iterations: usize,
    /// Last successive-iterate distance in `L²`.
    pub fixed_point_change: f64,
    /// `L²` norm of the cell residuals, scaled by `Δt/m_K`.
    pub residual: f64,
    /// Largest relative residual among the linear solves.
    pub linear_residual: f64,
    pub solver: SolverKind,
    /// `Δt·L_β`.
    pub contraction: f64,
    pub contraction_ok: bool,
}

/// The discrete solution `u^0, …, u^N` of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<'m> {
    mesh: &'m Mesh,
    grid: TimeGrid,
    fields: Vec<CellField<'m>>,
    reports: Vec<StepReport>,
}

impl<'m> Trajectory<'m> {
    /// Panics unless there are `N + 1` fields on `mesh`.
    pub fn from_fields(mesh: &'m Mesh, grid: TimeGrid, fields: Vec<CellField<'m>>) -> Self {
        assert_eq!(fields.len(), grid.steps() + 1, "a trajectory needs N + 1 fields");
        assert!(fields.iter().all(|f| std::ptr::eq(f.mesh(), mesh)), "fields live on another mesh");
        Self { mesh, grid, fields, reports: Vec::new() }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn fields(&self) -> &[CellField<'m>] {
        &self.fields
    }

    /// `u^n`.
    pub fn field(&self, n: usize) -> &CellField<'m> {
        &self.fields[n]
    }

    pub fn last(&self) -> &CellField<'m> {
        self.fields.last().unwrap()
    }

    pub fn reports(&self) -> &[StepReport] {
        &self.reports
    }

    /// Right embedding: `u^{n+1}` on `[t_n, t_{n+1})`, `u^N` at `T`.
    pub fn right(&self, t: f64) -> Option<&CellField<'m>> {
        let n = self.grid.interval(t)?;
        Some(&self.fields[(n + 1).min(self.grid.steps())])
    }

    /// Left embedding: `u^n` on `[t_n, t_{n+1})`, `u^{N-1}` at `T`.
    pub fn left(&self, t: f64) -> Option<&CellField<'m>> {
        let n = self.grid.interval(t)?;
        Some(&self.fields[n.min(self.grid.steps() - 1)])
    }

    /// `(‖u^n‖, |u^n|_{1,h})` for `n = 0..=N`.
    pub fn norms(&self) -> Vec<(f64, f64)> {
        self.fields.iter().map(|f| (l2_norm(f), h1_seminorm(f))).collect()
    }
}

/// Cell averages `(1/m_K) ∫_K u0`: 5×5 Gauss on rectangles, the centroid value otherwise.
pub fn project_initial<'m>(u0: &InitialCondition, mesh: &'m Mesh) -> CellField<'m> {
    match *u0 {
        InitialCondition::Zero => return CellField::zeros(mesh),
        InitialCondition::Constant { value } => return CellField::constant(mesh, value),
        _ => {}
    }
    let rule = GaussRule::new(5);
    let values = mesh
        .cells()
        .iter()
        .map(|c| match &c.rect {
            Some(r) => rule.integrate_rect(r, |p| u0.eval(p)) / r.area(),
            None => u0.eval(mesh.centroid(c.id)),
        })
        .collect();
    CellField::new(mesh, values).expect("initial data must be finite")
}

/// Assembles and solves the step system for one problem, mesh and time grid.
///
/// For steady convection the matrix is factored once at construction and
/// shared by every step and every path; `Stepper` is `Sync`.
#[derive(Debug)]
pub struct Stepper<'a> {
    spec: &'a ProblemSpec,
    mesh: &'a Mesh,
    grid: TimeGrid,
    options: SolverOptions,
    steady: Option<(LinearSolver, Vec<f64>)>,
}

impl<'a> Stepper<'a> {
    pub fn new(spec: &'a ProblemSpec, mesh: &'a Mesh, grid: TimeGrid, options: SolverOptions) -> Result<Self, SchemeError> {
        options.validate()?;
        let dt = grid.dt();
        let lipschitz_beta = spec.constants.lipschitz_beta;
        let product = dt * lipschitz_beta;
        if product > MAX_CONTRACTION {
            return Err(SchemeError::Contraction { dt, lipschitz_beta, product });
        }
        let mut stepper = Self { spec, mesh, grid, options, steady: None };
        if !spec.velocity.is_time_dependent() {
            let flux = stepper.fluxes(0);
            let solver = stepper.solver(&flux).map_err(|source| SchemeError::Linear { step: 1, source })?;
            stepper.steady = Some((solver, flux));
        }
        Ok(stepper)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn mesh(&self) -> &'a Mesh {
        self.mesh
    }

    pub fn spec(&self) -> &'a ProblemSpec {
        self.spec
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    /// Interior-edge fluxes `v^{n+1}` over `[t_n, t_{n+1}]`.
    pub fn fluxes(&self, n: usize) -> Vec<f64> {
        EdgeFluxField::assemble(self.mesh, &self.spec.velocity, n + 1, self.grid.t(n), self.grid.t(n + 1), self.options.flux)
            .values()
            .to_vec()
    }

    /// Step matrix for given fluxes.
    pub fn matrix(&self, flux: &[f64]) -> CsrMatrix {
        let mesh = self.mesh;
        let dt = self.grid.dt();
        let mut t = Vec::with_capacity(mesh.num_cells() + 4 * mesh.interior_edges().len());
        for c in mesh.cells() {
            t.push((c.id, c.id, c.area / dt));
        }
        for (e, &v) in mesh.interior_edges().iter().zip(flux) {
            let (k, l) = e.cells;
            let tau = e.transmissibility();
            // Off-diagonals: the flow into K comes from L through (v_Kσ)⁻ = (v_Lσ)⁺.
            let kl = e.length * negative_part(v) + tau;
            let lk = e.length * positive_part(v) + tau;
            t.push((k, l, -kl));
            t.push((l, k, -lk));
            match self.options.form {
                SchemeForm::Split => {
                    t.push((k, k, kl));
                    t.push((l, l, lk));
                }
                SchemeForm::Raw => {
                    t.push((k, k, e.length * positive_part(v) + tau));
                    t.push((l, l, e.length * negative_part(v) + tau));
                }
            }
        }
        CsrMatrix::from_triplets(mesh.num_cells(), &t)
    }

    fn solver(&self, flux: &[f64]) -> Result<LinearSolver, LinalgError> {
        LinearSolver::new(self.matrix(flux), self.options.direct_max_cells)
    }

    /// Advances `u^n` to `u^{n+1}` with Brownian increment `dw`.
    pub fn step(&self, n: usize, u_n: &CellField<'a>, dw: f64) -> Result<(CellField<'a>, StepReport), SchemeError> {
        let step = n + 1;
        let mesh = self.mesh;
        let dt = self.grid.dt();
        let local;
        let (solver, flux) = match &self.steady {
            Some((s, f)) => (s, f.as_slice()),
            None => {
                let flux = self.fluxes(n);
                let s = self.solver(&flux).map_err(|source| SchemeError::Linear { step, source })?;
                local = (s, flux);
                (&local.0, local.1.as_slice())
            }
        };
        let (g, beta) = (&self.spec.g, &self.spec.beta);
        let base: Vec<f64> = mesh.cells().iter().zip(u_n.values()).map(|(c, &u)| c.area / dt * (u + g.eval(u) * dw)).collect();

        let mut u = u_n.values().to_vec();
        let mut rhs = vec![0.0; u.len()];
        let mut iterations = 0;
        let mut change;
        let mut linear_residual: f64 = 0.0;
        let beta_zero = beta.is_zero();
        loop {
            iterations += 1;
            for ((r, b), (c, &uk)) in rhs.iter_mut().zip(&base).zip(mesh.cells().iter().zip(&u)) {
                *r = b + c.area * beta.eval(uk);
            }
            let (next, report) =
                solver.solve(&rhs, Some(&u), self.options.linear_tol).map_err(|source| SchemeError::Linear { step, source })?;
            linear_residual = linear_residual.max(report.relative_residual);
            change = weighted_distance(mesh, &next, &u);
            u = next;
            if beta_zero || change <= self.options.fixed_point_tol * (1.0 + weighted_norm(mesh, &u)) {
                break;
            }
            if iterations >= self.options.max_iters {
                return Err(SchemeError::FixedPoint { step, iterations, change });
            }
        }

        let u_next = CellField::new(mesh, u).map_err(|source| SchemeError::Field { step, source })?;
        let residual = l2_norm(&step_residual(self.spec, self.options.form, flux, dt, u_n, &u_next, dw));
        let tol = self.options.residual_tol * (1.0 + l2_norm(&u_next));
        if !(residual <= tol) {
            return Err(SchemeError::Residual { step, residual, tol });
        }
        let contraction = dt * self.spec.constants.lipschitz_beta;
        let report = StepReport {
            step,
            iterations,
            fixed_point_change: if beta_zero { 0.0 } else { change },
            residual,
            linear_residual,
            solver: solver.kind(),
            contraction,
            contraction_ok: contraction <= MAX_CONTRACTION,
        };
        Ok((u_next, report))
    }

    /// Runs the scheme along `path` from the projected initial datum.
    pub fn run_path(&self, path: &BrownianPath) -> Result<Trajectory<'a>, SchemeError> {
        let n_steps = self.grid.steps();
        let same_horizon = (path.horizon() - self.grid.horizon()).abs() <= 1e-14 * self.grid.horizon();
        if path.steps() != n_steps || !same_horizon {
            return Err(SchemeError::PathMismatch {
                expected: n_steps,
                got: path.steps(),
                horizon: self.grid.horizon(),
                got_horizon: path.horizon(),
            });
        }
        let mut fields = Vec::with_capacity(n_steps + 1);
        let mut reports = Vec::with_capacity(n_steps);
        fields.push(project_initial(&self.spec.u0, self.mesh));
        for n in 0..n_steps {
            let (next, report) = self.step(n, &fields[n], path.increment(n))?;
            fields.push(next);
            reports.push(report);
        }
        Ok(Trajectory { mesh: self.mesh, grid: self.grid, fields, reports })
    }
}

fn weighted_norm(mesh: &Mesh, u: &[f64]) -> f64 {
    compensated_sum(mesh.cells().iter().zip(u).map(|(c, v)| c.area * v * v)).sqrt()
}

fn weighted_distance(mesh: &Mesh, a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(mesh.cells().iter().zip(a.iter().zip(b)).map(|(c, (x, y))| c.area * (x - y) * (x - y))).sqrt()
}

/// Cell residuals of the step equation, scaled by `Δt/m_K` so they carry
/// the units of `u`. Evaluated cell by cell, independently of the matrix.
pub fn step_residual<'m>(
    spec: &ProblemSpec,
    form: SchemeForm,
    flux: &[f64],
    dt: f64,
    u_n: &CellField<'m>,
    u: &CellField<'m>,
    dw: f64,
) -> CellField<'m> {
    let mesh = u.mesh();
    let values = mesh
        .cells()
        .iter()
        .map(|c| {
            let k = c.id;
            let uk = u[k];
            let mut r = c.area / dt * (uk - u_n[k]);
            for &edge in mesh.cell_edges(k) {
                let EdgeRef::Interior(i) = edge else { continue };
                let e = &mesh.interior_edges()[i];
                let (l, v) = if e.cells.0 == k { (e.cells.1, flux[i]) } else { (e.cells.0, -flux[i]) };
                let ul = u[l];
                r += e.transmissibility() * (uk - ul);
                r += match form {
                    SchemeForm::Split => e.length * negative_part(v) * (uk - ul),
                    SchemeForm::Raw => e.length * v * upwind_trace(uk, ul, v),
                };
            }
            r -= c.area / dt * spec.g.eval(u_n[k]) * dw;
            r -= c.area * spec.beta.eval(uk);
            r * dt / c.area
        })
        .collect();
    CellField::new(mesh, values).unwrap_or_else(|_| CellField::constant(mesh, f64::INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::mass;
    use crate::geometry::Rect;
    use crate::mesh::build_uniform_rect_mesh;
    use crate::problem::{ScalarFn, Velocity, VelocityField};
    use std::f64::consts::PI;

    fn spec(g: ScalarFn, beta: ScalarFn, v: Velocity, u0: InitialCondition, t: f64) -> ProblemSpec {
        ProblemSpec::new(g, beta, v, u0, t).unwrap()
    }

    #[test]
    fn time_grid() {
        let g = TimeGrid::new(3, 1.0).unwrap();
        assert_eq!(g.t(3), 1.0);
        assert_eq!(g.t(0), 0.0);
        assert_eq!(g.interval(0.0), Some(0));
        assert_eq!(g.interval(g.t(1)), Some(1));
        assert_eq!(g.interval(0.999), Some(2));
        assert_eq!(g.interval(1.0), Some(3));
        assert_eq!(g.interval(1.5), None);
        assert_eq!(g.interval(-0.1), None);
        assert!(TimeGrid::new(0, 1.0).is_err());
        assert!(TimeGrid::new(4, 0.0).is_err());
    }

    #[test]
    fn embeddings() {
        let mesh = build_uniform_rect_mesh(1, 1, Rect::UNIT).unwrap();
        let grid = TimeGrid::new(4, 1.0).unwrap();
        let fields = (0..5).map(|n| CellField::constant(&mesh, n as f64)).collect();
        let tr = Trajectory::from_fields(&mesh, grid, fields);
        assert_eq!(tr.right(0.0).unwrap()[0], 1.0);
        assert_eq!(tr.left(0.0).unwrap()[0], 0.0);
        assert_eq!(tr.right(0.25).unwrap()[0], 2.0);
        assert_eq!(tr.left(0.25).unwrap()[0], 1.0);
        assert_eq!(tr.right(0.3).unwrap()[0], 2.0);
        assert_eq!(tr.right(1.0).unwrap()[0], 4.0);
        assert_eq!(tr.left(1.0).unwrap()[0], 3.0);
        assert!(tr.right(1.1).is_none());
    }

    #[test]
    fn projection() {
        let mesh = build_uniform_rect_mesh(2, 1, Rect::UNIT).unwrap();
        let f = project_initial(&InitialCondition::Affine { c0: 0.0, cx: 1.0, cy: 0.0 }, &mesh);
        assert!((f[0] - 0.25).abs() < 1e-15 && (f[1] - 0.75).abs() < 1e-15);
        let f = project_initial(&InitialCondition::Constant { value: 0.3 }, &mesh);
        assert!(f.values().iter().all(|&v| v == 0.3));

        // Exact averages of cos(πx)cos(πy) over [a,b]×[c,d]: (sin πb − sin πa)(sin πd − sin πc)/(π² m_K).
        let mesh = build_uniform_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let u0 = InitialCondition::Cosine { offset: 0.0, amplitude: 1.0, kx: 1.0, ky: 1.0 };
        let f = project_initial(&u0, &mesh);
        for c in mesh.cells() {
            let r = c.rect.unwrap();
            let exact = ((PI * r.x1).sin() - (PI * r.x0).sin()) * ((PI * r.y1).sin() - (PI * r.y0).sin()) / (PI * PI * r.area());
            assert!((f[c.id] - exact).abs() < 1e-10, "cell {}: {} vs {exact}", c.id, f[c.id]);
        }
    }

    #[test]
    fn single_cell_step() {
        let mesh = build_uniform_rect_mesh(1, 1, Rect::UNIT).unwrap();
        let (dt, b, u0, dw) = (0.1, 0.5, 2.0, 0.3);
        let spec =
            spec(ScalarFn::Identity, ScalarFn::Linear { lambda: b }, Velocity::zero(), InitialCondition::Constant { value: u0 }, 1.0);
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(10, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let (u1, report) = stepper.step(0, &CellField::constant(&mesh, u0), dw).unwrap();
        let exact = (u0 + u0 * dw) / (1.0 - dt * b);
        assert!((u1[0] - exact).abs() < 1e-13, "{} vs {exact}", u1[0]);
        assert!(report.iterations > 1 && report.contraction_ok);
        assert!(report.residual <= 1e-11 * (1.0 + exact));
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let mesh = build_uniform_rect_mesh(3, 3, Rect::UNIT).unwrap();
        let spec = spec(
            ScalarFn::Sine { amplitude: 1.0, frequency: 1.0 },
            ScalarFn::Linear { lambda: -1.0 },
            Velocity::steady(VelocityField::Rotation { omega: 1.0, cx: 0.5, cy: 0.5 }),
            InitialCondition::Zero,
            1.0,
        );
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(8, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let path = BrownianPath::generate(1, 0, 8, 1.0).unwrap();
        let tr = stepper.run_path(&path).unwrap();
        assert!(tr.fields().iter().all(|f| f.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn two_cell_heat_step() {
        // (2 + 2)u_K − 2u_L = 2u_K⁰ with m_K/Δt = 2, τ = 2: u¹ = (1/3, 2/3) for u⁰ = (0, 1).
        let mesh = build_uniform_rect_mesh(2, 1, Rect::UNIT).unwrap();
        let spec = spec(ScalarFn::Zero, ScalarFn::Zero, Velocity::zero(), InitialCondition::Zero, 1.0);
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(4, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let u0 = CellField::new(&mesh, vec![0.0, 1.0]).unwrap();
        let (u1, report) = stepper.step(0, &u0, 0.0).unwrap();
        assert!((u1[0] - 1.0 / 3.0).abs() < 1e-15 && (u1[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(report.iterations, 1);
    }

    #[test]
    fn contraction_condition_is_enforced() {
        let mesh = build_uniform_rect_mesh(1, 1, Rect::UNIT).unwrap();
        let spec = spec(ScalarFn::Zero, ScalarFn::Linear { lambda: 2.0 }, Velocity::zero(), InitialCondition::Zero, 1.0);
        let err = Stepper::new(&spec, &mesh, TimeGrid::new(4, 1.0).unwrap(), SolverOptions::default()).unwrap_err();
        assert!(matches!(err, SchemeError::Contraction { product, .. } if product == 0.5));
        assert!(Stepper::new(&spec, &mesh, TimeGrid::new(16, 1.0).unwrap(), SolverOptions::default()).is_ok());
    }

    #[test]
    fn split_matrix_is_an_m_matrix_with_rows_summing_to_the_mass_term() {
        let mesh = build_uniform_rect_mesh(4, 3, Rect::UNIT).unwrap();
        let spec = spec(
            ScalarFn::Zero,
            ScalarFn::Zero,
            Velocity::steady(VelocityField::Constant { vx: 3.0, vy: -1.0 }),
            InitialCondition::Zero,
            1.0,
        );
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(5, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let a = stepper.matrix(&stepper.fluxes(0));
        for c in mesh.cells() {
            let mut sum = 0.0;
            for (j, v) in a.row(c.id) {
                if j != c.id {
                    assert!(v <= 0.0);
                }
                sum += v;
            }
            assert!((sum - c.area / 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn conservation_and_maximum_principle() {
        let mesh = build_uniform_rect_mesh(3, 3, Rect::UNIT).unwrap();
        let u0 = InitialCondition::Gaussian { amplitude: 1.0, x0: 0.2, y0: 0.7, width: 0.2 };
        let v = Velocity { field: VelocityField::Cellular { amplitude: 4.0, rect: Rect::UNIT }, time_slope: 0.5 };
        let spec = spec(ScalarFn::Zero, ScalarFn::Zero, v, u0, 1.0);
        for form in [SchemeForm::Split, SchemeForm::Raw] {
            let options = SolverOptions { form, ..SolverOptions::default() };
            let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(8, 1.0).unwrap(), options).unwrap();
            let tr = stepper.run_path(&BrownianPath::zero(8, 1.0).unwrap()).unwrap();
            let (lo, hi) = tr.field(0).range();
            let m0 = mass(tr.field(0));
            for f in tr.fields() {
                assert!((mass(f) - m0).abs() <= 1e-10 * m0);
                let (a, b) = f.range();
                assert!(a >= lo - 1e-9 && b <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn raw_form_conserves_mass_even_with_a_defect() {
        let mesh = build_uniform_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let v = Velocity::steady(VelocityField::Rotation { omega: 2.0, cx: 0.5, cy: 0.5 });
        let spec = spec(ScalarFn::Zero, ScalarFn::Zero, v, InitialCondition::Affine { c0: 1.0, cx: 1.0, cy: 0.0 }, 1.0);
        let options = SolverOptions { form: SchemeForm::Raw, ..SolverOptions::default() };
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(8, 1.0).unwrap(), options).unwrap();
        let tr = stepper.run_path(&BrownianPath::zero(8, 1.0).unwrap()).unwrap();
        let m0 = mass(tr.field(0));
        assert!(tr.fields().iter().all(|f| (mass(f) - m0).abs() <= 1e-12 * m0));
    }

    #[test]
    fn forms_agree_without_defect() {
        let mesh = build_uniform_rect_mesh(6, 6, Rect::UNIT).unwrap();
        let v = Velocity::steady(VelocityField::Cellular { amplitude: 3.0, rect: Rect::UNIT });
        let spec = spec(
            ScalarFn::Linear { lambda: 0.5 },
            ScalarFn::Sine { amplitude: 0.5, frequency: 1.0 },
            v,
            InitialCondition::Cosine { offset: 1.0, amplitude: 0.5, kx: 1.0, ky: 2.0 },
            0.5,
        );
        let path = BrownianPath::generate(3, 0, 10, 0.5).unwrap();
        let run = |form| {
            let options = SolverOptions { form, ..SolverOptions::default() };
            Stepper::new(&spec, &mesh, TimeGrid::new(10, 0.5).unwrap(), options).unwrap().run_path(&path).unwrap()
        };
        let (a, b) = (run(SchemeForm::Split), run(SchemeForm::Raw));
        for (x, y) in a.fields().iter().zip(b.fields()) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert!((p - q).abs() <= 1e-12, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn krylov_path_matches_direct() {
        let mesh = build_uniform_rect_mesh(8, 8, Rect::UNIT).unwrap();
        let v = Velocity { field: VelocityField::Cellular { amplitude: 2.0, rect: Rect::UNIT }, time_slope: 1.0 };
        let spec = spec(
            ScalarFn::Identity,
            ScalarFn::Linear { lambda: 1.0 },
            v,
            InitialCondition::Cosine { offset: 1.0, amplitude: 0.5, kx: 1.0, ky: 1.0 },
            0.5,
        );
        let path = BrownianPath::generate(9, 2, 8, 0.5).unwrap();
        let grid = TimeGrid::new(8, 0.5).unwrap();
        let direct = Stepper::new(&spec, &mesh, grid, SolverOptions::default()).unwrap().run_path(&path).unwrap();
        let options = SolverOptions { direct_max_cells: 0, ..SolverOptions::default() };
        let krylov = Stepper::new(&spec, &mesh, grid, options).unwrap().run_path(&path).unwrap();
        assert!(krylov.reports().iter().all(|r| r.solver == SolverKind::Krylov));
        for (x, y) in direct.fields().iter().zip(krylov.fields()) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert!((p - q).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn causality() {
        let mesh = build_uniform_rect_mesh(3, 3, Rect::UNIT).unwrap();
        let spec = spec(ScalarFn::Identity, ScalarFn::Zero, Velocity::zero(), InitialCondition::Constant { value: 1.0 }, 1.0);
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(4, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let a = BrownianPath::from_increments(&[0.1, -0.2, 0.3, 0.4], 1.0).unwrap();
        let b = BrownianPath::from_increments(&[0.1, -0.2, -0.5, 0.0], 1.0).unwrap();
        let (ta, tb) = (stepper.run_path(&a).unwrap(), stepper.run_path(&b).unwrap());
        assert_eq!(ta.fields()[..3], tb.fields()[..3]);
        assert_ne!(ta.field(3), tb.field(3));
    }

    #[test]
    fn path_must_match_grid() {
        let mesh = build_uniform_rect_mesh(1, 1, Rect::UNIT).unwrap();
        let spec = spec(ScalarFn::Zero, ScalarFn::Zero, Velocity::zero(), InitialCondition::Zero, 1.0);
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(4, 1.0).unwrap(), SolverOptions::default()).unwrap();
        assert!(matches!(stepper.run_path(&BrownianPath::zero(8, 1.0).unwrap()), Err(SchemeError::PathMismatch { .. })));
    }
}
