//! Refinement studies: nested prolongation, space-time error norms, coupled
//! multi-level Monte Carlo runs and rate tables.

use std::f64::consts::PI;

use crate::calculus::{l2_norm_sq, CellField};
use crate::geometry::Rect;
use crate::mesh::{build_uniform_rect_mesh, Mesh, MeshError};
use crate::problem::{InitialCondition, ProblemSpec};
use crate::scheme::{project_initial, SchemeError, SolverOptions, Stepper, TimeGrid, Trajectory};
use crate::stochastic::{dissipation, parallel_map, BrownianPath, Estimate, McError, McPlan};
use crate::sum::compensated_sum;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("{which} mesh: cell {cell} is not an axis-aligned rectangle")]
    NotRectangular { which: &'static str, cell: usize },
    #[error("meshes are not nested: fine cell {cell} lies in no coarse cell")]
    NotNested { cell: usize },
    #[error("meshes are not nested: coarse cell {cell} is not tiled by fine cells")]
    NotTiled { cell: usize },
    #[error("incompatible time grids: {0}")]
    Grid(String),
    #[error("a study needs at least {min} levels, got {got}")]
    TooFewLevels { min: usize, got: usize },
    #[error("no closed-form reference solution for this problem: {0}")]
    NoExactSolution(String),
    #[error("level {level}: {source}")]
    Scheme { level: usize, source: SchemeError },
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("level {level}: {source}")]
    Mesh { level: usize, source: MeshError },
}

/// Piecewise-constant injection from a coarse mesh into a nested finer one.
#[derive(Debug, Clone)]
pub struct Prolongation<'a> {
    coarse: &'a Mesh,
    fine: &'a Mesh,
    owner: Vec<usize>,
}

impl<'a> Prolongation<'a> {
    /// Both meshes must consist of rectangles; every fine cell must lie in
    /// one coarse cell and the fine cells must tile each coarse cell.
    pub fn new(coarse: &'a Mesh, fine: &'a Mesh) -> Result<Self, AnalysisError> {
        let rects = |m: &Mesh, which| -> Result<Vec<Rect>, AnalysisError> {
            m.cells().iter().map(|c| c.rect.ok_or(AnalysisError::NotRectangular { which, cell: c.id })).collect()
        };
        let coarse_rects = rects(coarse, "coarse")?;
        let fine_rects = rects(fine, "fine")?;

        // Bucket the coarse cells on a uniform grid over the bounding box.
        let bbox = coarse.bounding_box();
        let nb = ((coarse.num_cells() as f64).sqrt().ceil() as usize).max(1);
        let bucket_of = |x: f64, y: f64| {
            let i = (((x - bbox.x0) / bbox.width() * nb as f64) as isize).clamp(0, nb as isize - 1) as usize;
            let j = (((y - bbox.y0) / bbox.height() * nb as f64) as isize).clamp(0, nb as isize - 1) as usize;
            (i, j)
        };
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nb * nb];
        for (k, r) in coarse_rects.iter().enumerate() {
            let (i0, j0) = bucket_of(r.x0, r.y0);
            let (i1, j1) = bucket_of(r.x1, r.y1);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nb + i].push(k);
                }
            }
        }
        let tol = 1e-10 * coarse.size();
        let mut owner = Vec::with_capacity(fine.num_cells());
        let mut covered = vec![0.0; coarse.num_cells()];
        for (f, r) in fine_rects.iter().enumerate() {
            let c = r.center();
            let (i, j) = bucket_of(c.x, c.y);
            let k = buckets[j * nb + i]
                .iter()
                .copied()
                .find(|&k| coarse_rects[k].contains_rect(r, tol))
                .ok_or(AnalysisError::NotNested { cell: f })?;
            owner.push(k);
            covered[k] += fine.cells()[f].area;
        }
        for (k, c) in coarse.cells().iter().enumerate() {
            if (covered[k] - c.area).abs() > 1e-12 * c.area {
                return Err(AnalysisError::NotTiled { cell: k });
            }
        }
        Ok(Self { coarse, fine, owner })
    }

    pub fn coarse(&self) -> &'a Mesh {
        self.coarse
    }

    pub fn fine(&self) -> &'a Mesh {
        self.fine
    }

    /// Coarse cell containing each fine cell.
    pub fn owners(&self) -> &[usize] {
        &self.owner
    }

    pub fn prolong(&self, coarse: &CellField<'_>) -> CellField<'a> {
        assert_eq!(coarse.len(), self.coarse.num_cells());
        let values = self.owner.iter().map(|&k| coarse[k]).collect();
        CellField::new(self.fine, values).expect("prolongation of a finite field is finite")
    }

    /// Area-weighted average of the fine values over each coarse cell.
    pub fn restrict(&self, fine: &CellField<'_>) -> CellField<'a> {
        assert_eq!(fine.len(), self.fine.num_cells());
        let mut acc = vec![0.0; self.coarse.num_cells()];
        for (f, &k) in self.owner.iter().enumerate() {
            acc[k] += self.fine.cells()[f].area * fine[f];
        }
        let values = acc.iter().zip(self.coarse.cells()).map(|(s, c)| s / c.area).collect();
        CellField::new(self.coarse, values).expect("restriction of a finite field is finite")
    }

    /// `‖u_f − P u_c‖²` without materializing `P u_c`.
    pub fn distance_sq(&self, fine: &CellField<'_>, coarse: &CellField<'_>) -> f64 {
        compensated_sum(self.fine.cells().iter().zip(&self.owner).map(|(c, &k)| c.area * (fine[c.id] - coarse[k]).powi(2)))
    }
}

/// `Σ_n Δt_f ‖u^r_f − P u^r_c‖²` on the fine time grid, with the coarse right
/// embedding looked up by integer index (`N_f` must be a multiple of `N_c`).
pub fn path_error_sq(fine: &Trajectory<'_>, coarse: &Trajectory<'_>, p: &Prolongation<'_>) -> Result<f64, AnalysisError> {
    let (gf, gc) = (fine.grid(), coarse.grid());
    if gf.horizon() != gc.horizon() {
        return Err(AnalysisError::Grid(format!("horizons differ: {} vs {}", gf.horizon(), gc.horizon())));
    }
    if gf.steps() % gc.steps() != 0 {
        return Err(AnalysisError::Grid(format!("{} fine steps are not a multiple of {} coarse steps", gf.steps(), gc.steps())));
    }
    if !std::ptr::eq(fine.mesh(), p.fine()) || !std::ptr::eq(coarse.mesh(), p.coarse()) {
        return Err(AnalysisError::Grid("trajectories do not live on the prolongation's meshes".into()));
    }
    let ratio = gf.steps() / gc.steps();
    let dt = gf.dt();
    Ok(dt * compensated_sum((0..gf.steps()).map(|n| p.distance_sq(fine.field(n + 1), coarse.field(n / ratio + 1)))))
}

/// Square root of [`path_error_sq`].
pub fn path_error(fine: &Trajectory<'_>, coarse: &Trajectory<'_>, p: &Prolongation<'_>) -> Result<f64, AnalysisError> {
    path_error_sq(fine, coarse, p).map(f64::sqrt)
}

/// `offset + A e^{−π²(kx² + ky²)t} cos(kx π x) cos(ky π y)`, the Neumann heat
/// solution for a cosine initial datum without noise, reaction or convection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatMode {
    pub offset: f64,
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
}

impl HeatMode {
    /// Checks that the problem is the plain heat equation and that the mode
    /// satisfies the Neumann condition on the mesh's bounding box.
    pub fn from_problem(spec: &ProblemSpec, mesh: &Mesh) -> Result<Self, AnalysisError> {
        if !spec.g.is_zero() || !spec.beta.is_zero() || !spec.velocity.is_zero() {
            return Err(AnalysisError::NoExactSolution("g, beta and v must all vanish".into()));
        }
        let InitialCondition::Cosine { offset, amplitude, kx, ky } = spec.u0 else {
            return Err(AnalysisError::NoExactSolution(format!("u0 is `{}`, not `cosine`", spec.u0.name())));
        };
        let b = mesh.bounding_box();
        let integer = |v: f64| (v - v.round()).abs() <= 1e-12 * v.abs().max(1.0);
        if ![kx * b.x0, kx * b.x1, ky * b.y0, ky * b.y1].into_iter().all(integer) {
            return Err(AnalysisError::NoExactSolution("the cosine mode violates the Neumann condition on this domain".into()));
        }
        Ok(Self { offset, amplitude, kx, ky })
    }

    pub fn decay_rate(&self) -> f64 {
        PI * PI * (self.kx * self.kx + self.ky * self.ky)
    }

    /// Exact cell averages at time `t`.
    pub fn cell_averages<'m>(&self, mesh: &'m Mesh, t: f64) -> CellField<'m> {
        let shape = project_initial(&InitialCondition::Cosine { offset: 0.0, amplitude: 1.0, kx: self.kx, ky: self.ky }, mesh);
        let a = self.amplitude * (-self.decay_rate() * t).exp();
        shape.map(|s| self.offset + a * s).expect("finite")
    }
}

/// `Σ_n Δt ‖u^{n+1} − ū(t_{n+1})‖²` against the exact heat solution `ū` (cell averages).
pub fn exact_error_sq(traj: &Trajectory<'_>, mode: &HeatMode) -> f64 {
    let grid = traj.grid();
    let mesh = traj.mesh();
    let shape = project_initial(&InitialCondition::Cosine { offset: 0.0, amplitude: 1.0, kx: mode.kx, ky: mode.ky }, mesh);
    compensated_sum((0..grid.steps()).map(|n| {
        let a = mode.amplitude * (-mode.decay_rate() * grid.t(n + 1)).exp();
        let u = traj.field(n + 1);
        compensated_sum(mesh.cells().iter().map(|c| c.area * (u[c.id] - mode.offset - a * shape[c.id]).powi(2)))
    })) * grid.dt()
}

/// `Σ_{n<N} Δt e^{−c t_n} ‖u^{n+1}‖²`.
pub fn exp_weighted_path_norm(traj: &Trajectory<'_>, c: f64) -> f64 {
    assert!(c >= 0.0, "weight must be non-negative");
    let grid = traj.grid();
    grid.dt() * compensated_sum((0..grid.steps()).map(|n| (-c * grid.t(n)).exp() * l2_norm_sq(traj.field(n + 1))))
}

/// `‖u^r − u^l‖²_{L²(0,T;L²)}` integrated through the embeddings (midpoint of each interval).
pub fn rl_gap_embedded(traj: &Trajectory<'_>) -> f64 {
    let grid = traj.grid();
    compensated_sum((0..grid.steps()).map(|n| {
        let t = 0.5 * (grid.t(n) + grid.t(n + 1));
        let (r, l) = (traj.right(t).unwrap(), traj.left(t).unwrap());
        let d = compensated_sum(traj.mesh().cells().iter().map(|c| c.area * (r[c.id] - l[c.id]).powi(2)));
        (grid.t(n + 1) - grid.t(n)) * d
    }))
}

/// `Δt Σ ‖u^{n+1} − u^n‖²`.
pub fn rl_gap_sum(traj: &Trajectory<'_>) -> f64 {
    traj.grid().dt() * dissipation(traj)
}

/// How `N` follows the mesh under refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LadderPolicy {
    /// `Δt ∝ h`: `N` doubles per level.
    #[default]
    Linear,
    /// `Δt ∝ h²`: `N` quadruples per level.
    Quadratic,
}

impl LadderPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            LadderPolicy::Linear => "linear",
            LadderPolicy::Quadratic => "quadratic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(LadderPolicy::Linear),
            "quadratic" => Some(LadderPolicy::Quadratic),
            _ => None,
        }
    }

    fn factor(&self) -> usize {
        match self {
            LadderPolicy::Linear => 2,
            LadderPolicy::Quadratic => 4,
        }
    }
}

/// One level of a refinement ladder.
#[derive(Debug, Clone)]
pub struct Level {
    pub mesh: Mesh,
    pub steps: usize,
}

/// Nested uniform `nx·2^k × ny·2^k` meshes with `N = steps·2^k` or `steps·4^k`.
pub fn uniform_ladder(
    nx: usize,
    ny: usize,
    rect: Rect,
    steps: usize,
    levels: usize,
    policy: LadderPolicy,
) -> Result<Vec<Level>, AnalysisError> {
    (0..levels)
        .map(|k| {
            let mesh = build_uniform_rect_mesh(nx << k, ny << k, rect).map_err(|source| AnalysisError::Mesh { level: k, source })?;
            Ok(Level { mesh, steps: steps * policy.factor().pow(k as u32) })
        })
        .collect()
}

/// What a study compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reference {
    /// Consecutive levels against each other on a shared Brownian path.
    #[default]
    InterLevel,
    /// Each level against the closed-form heat solution.
    Exact,
}

impl Reference {
    pub fn name(&self) -> &'static str {
        match self {
            Reference::InterLevel => "inter-level",
            Reference::Exact => "exact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inter-level" | "interlevel" => Some(Reference::InterLevel),
            "exact" => Some(Reference::Exact),
            _ => None,
        }
    }
}

/// How per-sample squared errors are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMeasure {
    /// `E‖e‖²`
    MeanSquare,
    /// `(E‖e‖²)^{1/2}`
    Rms,
}

impl ErrorMeasure {
    pub fn name(&self) -> &'static str {
        match self {
            ErrorMeasure::MeanSquare => "mean_square",
            ErrorMeasure::Rms => "rms",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mean_square" => Some(ErrorMeasure::MeanSquare),
            "rms" => Some(ErrorMeasure::Rms),
            _ => None,
        }
    }

    /// The default measure of a reference: mean square between levels, rms against the exact solution.
    pub fn default_for(reference: Reference) -> Self {
        match reference {
            Reference::InterLevel => ErrorMeasure::MeanSquare,
            Reference::Exact => ErrorMeasure::Rms,
        }
    }

    fn apply(&self, e: Estimate) -> (f64, f64) {
        match self {
            ErrorMeasure::MeanSquare => (e.mean, e.stderr),
            ErrorMeasure::Rms => {
                let r = e.mean.sqrt();
                // delta method
                let se = if r > 0.0 { e.stderr / (2.0 * r) } else { 0.0 };
                (r, se)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    /// Level index of the finer member of the pair (inter-level) or of the level itself (exact).
    pub level: usize,
    pub h: f64,
    pub steps: usize,
    pub samples: usize,
    pub error: f64,
    pub stderr: f64,
    /// `log2(err_{k−1}/err_k)`; absent on the first row.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub reference: Reference,
    pub measure: ErrorMeasure,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    fn new(reference: Reference, measure: ErrorMeasure, mut rows: Vec<RateRow>) -> Self {
        for k in 1..rows.len() {
            rows[k].rate = Some((rows[k - 1].error / rows[k].error).log2());
        }
        Self { reference, measure, rows }
    }

    pub fn errors_decrease(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }

    pub fn min_rate(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.rate).reduce(f64::min)
    }
}

/// The r−l gap of one level, computed both ways.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapRow {
    pub level: usize,
    pub h: f64,
    pub steps: usize,
    pub dt: f64,
    /// `E‖u^r − u^l‖²` through the embeddings.
    pub embedded: Estimate,
    /// `Δt E Σ‖u^{n+1} − u^n‖²`.
    pub summed: Estimate,
    /// Largest per-sample `|embedded − summed| / max(summed, tiny)`.
    pub max_identity_defect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub table: RateTable,
    pub gaps: Vec<GapRow>,
    /// Least-squares slope of `log gap` against `log Δt`.
    pub gap_exponent: Option<f64>,
}

/// Per-sample output of a study.
struct SampleOut {
    errors: Vec<f64>,
    gap_embedded: Vec<f64>,
    gap_summed: Vec<f64>,
}

/// Runs every level on the same Brownian paths: sample `i` draws one master
/// path at the finest resolution and each level uses its aggregation.
/// Noise-free problems are deterministic and run a single sample.
pub fn convergence_study(
    spec: &ProblemSpec,
    levels: &[Level],
    options: SolverOptions,
    plan: &McPlan,
    reference: Reference,
    measure: ErrorMeasure,
) -> Result<StudyResult, AnalysisError> {
    let min = match reference {
        Reference::InterLevel => 2,
        Reference::Exact => 1,
    };
    if levels.len() < min {
        return Err(AnalysisError::TooFewLevels { min, got: levels.len() });
    }
    if plan.samples < 1 {
        return Err(McError::TooFewSamples(plan.samples).into());
    }
    let finest = levels.last().unwrap().steps;
    for (k, l) in levels.iter().enumerate() {
        if !finest.is_multiple_of(l.steps) {
            return Err(AnalysisError::Grid(format!("level {k}: N = {} does not divide the finest N = {finest}", l.steps)));
        }
    }
    let steppers = levels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let grid = TimeGrid::new(l.steps, spec.horizon).map_err(|source| AnalysisError::Scheme { level: k, source })?;
            Stepper::new(spec, &l.mesh, grid, options).map_err(|source| AnalysisError::Scheme { level: k, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let prolongations = match reference {
        Reference::InterLevel => levels.windows(2).map(|w| Prolongation::new(&w[0].mesh, &w[1].mesh)).collect::<Result<Vec<_>, _>>()?,
        Reference::Exact => Vec::new(),
    };
    let modes = match reference {
        Reference::Exact => levels.iter().map(|l| HeatMode::from_problem(spec, &l.mesh)).collect::<Result<Vec<_>, _>>()?,
        Reference::InterLevel => Vec::new(),
    };

    // Without noise every path gives the same trajectory.
    let samples = if spec.g.is_zero() { 1 } else { plan.samples };
    let outs: Vec<SampleOut> = parallel_map(samples, plan.threads, |i| -> Result<SampleOut, AnalysisError> {
        let master = BrownianPath::generate(plan.seed, i, finest, spec.horizon).map_err(McError::from)?;
        let mut trajs = Vec::with_capacity(levels.len());
        for (k, (l, s)) in levels.iter().zip(&steppers).enumerate() {
            let path = master.aggregate_to(l.steps).map_err(McError::from)?;
            trajs.push(s.run_path(&path).map_err(|source| AnalysisError::Scheme { level: k, source })?);
        }
        let errors = match reference {
            Reference::InterLevel => {
                prolongations.iter().enumerate().map(|(k, p)| path_error_sq(&trajs[k + 1], &trajs[k], p)).collect::<Result<Vec<_>, _>>()?
            }
            Reference::Exact => trajs.iter().zip(&modes).map(|(t, m)| exact_error_sq(t, m)).collect(),
        };
        Ok(SampleOut {
            errors,
            gap_embedded: trajs.iter().map(rl_gap_embedded).collect(),
            gap_summed: trajs.iter().map(rl_gap_sum).collect(),
        })
    })?;

    let column = |f: &dyn Fn(&SampleOut) -> f64| Estimate::from_samples(&outs.iter().map(f).collect::<Vec<_>>());
    let offset = match reference {
        Reference::InterLevel => 1,
        Reference::Exact => 0,
    };
    let n_err = outs[0].errors.len();
    let rows = (0..n_err)
        .map(|j| {
            let level = j + offset;
            let (error, stderr) = measure.apply(column(&|o| o.errors[j]));
            RateRow { level, h: levels[level].mesh.size(), steps: levels[level].steps, samples, error, stderr, rate: None }
        })
        .collect();
    let table = RateTable::new(reference, measure, rows);

    let gaps: Vec<GapRow> = levels
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let max_identity_defect = outs
                .iter()
                .map(|o| (o.gap_embedded[k] - o.gap_summed[k]).abs() / o.gap_summed[k].max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            GapRow {
                level: k,
                h: l.mesh.size(),
                steps: l.steps,
                dt: spec.horizon / l.steps as f64,
                embedded: column(&|o| o.gap_embedded[k]),
                summed: column(&|o| o.gap_summed[k]),
                max_identity_defect,
            }
        })
        .collect();
    let gap_exponent = fit_exponent(&gaps.iter().map(|g| (g.dt, g.summed.mean)).collect::<Vec<_>>());
    Ok(StudyResult { table, gaps, gap_exponent })
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than two usable points.
pub fn fit_exponent(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::l2_norm;
    use crate::problem::{ScalarFn, Velocity};

    fn heat_spec(t: f64) -> ProblemSpec {
        ProblemSpec::new(
            ScalarFn::Zero,
            ScalarFn::Zero,
            Velocity::zero(),
            InitialCondition::Cosine { offset: 0.0, amplitude: 1.0, kx: 1.0, ky: 1.0 },
            t,
        )
        .unwrap()
    }

    #[test]
    fn prolongation_examples() {
        let coarse = build_uniform_rect_mesh(2, 1, Rect::UNIT).unwrap();
        let fine = build_uniform_rect_mesh(4, 2, Rect::UNIT).unwrap();
        let p = Prolongation::new(&coarse, &fine).unwrap();
        let u = CellField::new(&coarse, vec![0.0, 1.0]).unwrap();
        let pu = p.prolong(&u);
        assert_eq!(pu.values(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(l2_norm(&pu), l2_norm(&u));
        assert_eq!(p.restrict(&pu), u);
        let c = p.prolong(&CellField::constant(&coarse, 2.5));
        assert!(c.values().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn non_nested_meshes_are_rejected() {
        let a = build_uniform_rect_mesh(3, 3, Rect::UNIT).unwrap();
        let b = build_uniform_rect_mesh(4, 4, Rect::UNIT).unwrap();
        assert!(matches!(Prolongation::new(&a, &b), Err(AnalysisError::NotNested { .. })));
        let c = build_uniform_rect_mesh(4, 4, Rect::new(0.0, 0.0, 0.5, 1.0)).unwrap();
        assert!(matches!(Prolongation::new(&a, &c), Err(AnalysisError::NotNested { .. })));
        let half = build_uniform_rect_mesh(2, 4, Rect::new(0.0, 0.0, 0.5, 1.0)).unwrap();
        let big = build_uniform_rect_mesh(1, 1, Rect::UNIT).unwrap();
        assert!(matches!(Prolongation::new(&big, &half), Err(AnalysisError::NotTiled { cell: 0 })));
    }

    #[test]
    fn exp_weighted_norm() {
        let mesh = build_uniform_rect_mesh(2, 2, Rect::UNIT).unwrap();
        let grid = TimeGrid::new(10, 2.0).unwrap();
        let tr = Trajectory::from_fields(&mesh, grid, (0..11).map(|_| CellField::constant(&mesh, 1.0)).collect());
        let (dt, c) = (0.2, 0.7);
        let closed = dt * (1.0 - (-c * 2.0f64).exp()) / (1.0 - (-c * dt).exp());
        assert!((exp_weighted_path_norm(&tr, c) - closed).abs() < 1e-14);
        assert!((exp_weighted_path_norm(&tr, 0.0) - 2.0).abs() < 1e-14);
        assert!(exp_weighted_path_norm(&tr, 1.0) <= exp_weighted_path_norm(&tr, 0.5));
    }

    #[test]
    fn path_error_basics() {
        let coarse = build_uniform_rect_mesh(2, 2, Rect::UNIT).unwrap();
        let fine = build_uniform_rect_mesh(4, 4, Rect::UNIT).unwrap();
        let spec = ProblemSpec::new(
            ScalarFn::Linear { lambda: 0.5 },
            ScalarFn::Zero,
            Velocity::zero(),
            InitialCondition::Affine { c0: 1.0, cx: 1.0, cy: 0.0 },
            1.0,
        )
        .unwrap();
        let run = |mesh, n, index| {
            let s = Stepper::new(&spec, mesh, TimeGrid::new(n, 1.0).unwrap(), SolverOptions::default()).unwrap();
            s.run_path(&BrownianPath::generate(4, index, 8, 1.0).unwrap().aggregate_to(n).unwrap()).unwrap()
        };
        let same = Prolongation::new(&fine, &fine).unwrap();
        let a = run(&fine, 8, 0);
        assert_eq!(path_error(&a, &a, &same).unwrap(), 0.0);
        // Same mesh and N, independent paths: clearly nonzero.
        assert!(path_error(&a, &run(&fine, 8, 1), &same).unwrap() > 1e-3);
        let p = Prolongation::new(&coarse, &fine).unwrap();
        let b = run(&coarse, 4, 0);
        assert!(path_error(&a, &b, &p).unwrap() > 0.0);
        assert!(matches!(path_error(&b, &a, &p), Err(AnalysisError::Grid(_))));
    }

    #[test]
    fn heat_mode_requires_the_plain_heat_equation() {
        let mesh = build_uniform_rect_mesh(4, 4, Rect::UNIT).unwrap();
        assert!(HeatMode::from_problem(&heat_spec(0.1), &mesh).is_ok());
        let mut s = heat_spec(0.1);
        s.g = ScalarFn::Identity;
        assert!(HeatMode::from_problem(&s, &mesh).is_err());
        let shifted = build_uniform_rect_mesh(4, 4, Rect::new(0.0, 0.0, 0.5, 1.0)).unwrap();
        assert!(HeatMode::from_problem(&heat_spec(0.1), &shifted).is_err());
    }

    #[test]
    fn exact_study_on_the_heat_equation() {
        let levels = uniform_ladder(4, 4, Rect::UNIT, 2, 3, LadderPolicy::Quadratic).unwrap();
        assert_eq!(levels.iter().map(|l| l.steps).collect::<Vec<_>>(), vec![2, 8, 32]);
        let r =
            convergence_study(&heat_spec(0.1), &levels, SolverOptions::default(), &McPlan::new(0, 1), Reference::Exact, ErrorMeasure::Rms)
                .unwrap();
        assert!(r.table.errors_decrease());
        assert!(r.table.min_rate().unwrap() > 1.5, "{:?}", r.table);
        assert!(r.table.rows.iter().all(|row| row.stderr == 0.0));
    }

    #[test]
    fn coupled_study_and_gap_identity() {
        let spec = ProblemSpec::new(
            ScalarFn::Linear { lambda: 0.5 },
            ScalarFn::Linear { lambda: 0.25 },
            Velocity::zero(),
            InitialCondition::Cosine { offset: 1.0, amplitude: 0.5, kx: 1.0, ky: 1.0 },
            1.0,
        )
        .unwrap();
        let levels = uniform_ladder(2, 2, Rect::UNIT, 4, 3, LadderPolicy::Linear).unwrap();
        let plan = McPlan::new(8, 32);
        let r =
            convergence_study(&spec, &levels, SolverOptions::default(), &plan, Reference::InterLevel, ErrorMeasure::MeanSquare).unwrap();
        assert_eq!(r.table.rows.len(), 2);
        assert_eq!(r.table.rows[0].level, 1);
        for g in &r.gaps {
            assert!(g.max_identity_defect <= 1e-12);
        }
        let exponent = r.gap_exponent.unwrap();
        assert!((0.5..1.5).contains(&exponent), "{exponent}");

        // The finest level inside the study equals a standalone run on the same path.
        let fine = levels.last().unwrap();
        let s = Stepper::new(&spec, &fine.mesh, TimeGrid::new(fine.steps, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let alone = s.run_path(&BrownianPath::generate(8, 0, fine.steps, 1.0).unwrap()).unwrap();
        let master = BrownianPath::generate(8, 0, fine.steps, 1.0).unwrap();
        assert_eq!(alone, s.run_path(&master.aggregate_to(fine.steps).unwrap()).unwrap());
    }

    #[test]
    fn fit() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((fit_exponent(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fit_exponent(&[(1.0, 1.0)]), None);
    }
}
