use rayon::prelude::*;

use crate::calculus::{h1_seminorm_sq, l2_norm_sq, mass};
use crate::scheme::{SchemeError, Stepper, Trajectory};
use crate::sum::compensated_sum;

use super::path::{BrownianPath, PathError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum McError {
    #[error("Monte Carlo needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("path {index}: {source}")]
    Solver { index: u64, source: SchemeError },
    #[error("path {index}, step {step}, cell {cell}: g(u)² = {value} exceeds C_Lg(1 + u²) = {bound}")]
    GrowthBound { index: u64, step: usize, cell: usize, value: f64, bound: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Sample plan shared by every Monte Carlo computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McPlan {
    pub seed: u64,
    pub samples: usize,
    /// Worker threads; `None` uses rayon's default. Results never depend on it.
    pub threads: Option<usize>,
}

impl McPlan {
    pub fn new(seed: u64, samples: usize) -> Self {
        Self { seed, samples, threads: None }
    }

    pub fn with_threads(self, threads: usize) -> Self {
        Self { threads: Some(threads), ..self }
    }
}

/// Evaluates `f(0), …, f(M - 1)` on a dedicated pool and returns the results
/// in index order. The first failing index (not the first to fail in wall
/// time) determines the error, so failures are reproducible too.
pub fn parallel_map<T, E, F>(samples: usize, threads: Option<usize>, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send + From<McError>,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| E::from(McError::ThreadPool(e.to_string())))?;
    let results: Vec<Result<T, E>> = pool.install(|| (0..samples as u64).into_par_iter().map(&f).collect());
    results.into_iter().collect()
}

/// Runs the scheme on paths `0..M` of the seed family and maps each trajectory through `f`.
pub fn run_ensemble<'a, T, F>(stepper: &Stepper<'a>, plan: &McPlan, f: F) -> Result<Vec<T>, McError>
where
    T: Send,
    F: Fn(u64, &Trajectory<'a>) -> T + Sync + Send,
{
    let grid = *stepper.grid();
    parallel_map(plan.samples, plan.threads, |index| {
        let path = BrownianPath::generate(plan.seed, index, grid.steps(), grid.horizon())?;
        let traj = stepper.run_path(&path).map_err(|source| McError::Solver { index, source })?;
        check_growth(stepper, index, &traj)?;
        Ok(f(index, &traj))
    })
}

/// `g(u_K^n)² <= C_Lg (1 + (u_K^n)²)` along the trajectory.
fn check_growth(stepper: &Stepper<'_>, index: u64, traj: &Trajectory<'_>) -> Result<(), McError> {
    let spec = stepper.spec();
    if spec.g.is_zero() {
        return Ok(());
    }
    let c = spec.constants.growth_g;
    for (step, field) in traj.fields().iter().enumerate() {
        for (cell, &u) in field.values().iter().enumerate() {
            let value = spec.g.eval(u).powi(2);
            let bound = c * (1.0 + u * u);
            if value > bound * (1.0 + 1e-12) + 1e-300 {
                return Err(McError::GrowthBound { index, step, cell, value, bound });
            }
        }
    }
    Ok(())
}

/// Sample mean with its standard error `s/√M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    /// Two-pass mean and unbiased variance, summed in index order.
    pub fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len();
        assert!(m > 0, "no samples");
        let mean = compensated_sum(xs.iter().copied()) / m as f64;
        let stderr = if m > 1 {
            let var = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, samples: m }
    }
}

/// Scalar trajectory functionals available to [`mc_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Functional {
    /// `‖u^N‖²`
    FinalL2Sq,
    /// `Σ_n Δt ‖u^{n+1}‖²`, the squared `L²(0,T;L²)` norm of the right embedding.
    PathL2Sq,
    /// `‖u^N‖² + 2 Σ_k ‖u^{k+1} − u^k‖² + 8Δt Σ_k |u^{k+1}|²_{1,h}`
    StabilityLhs,
    /// `Σ_k ‖u^{k+1} − u^k‖²`
    Dissipation,
    /// `Δt Σ_k |u^{k+1}|²_{1,h}`
    Gradient,
    /// `‖u^r − u^l‖²_{L²(0,T;L²)} = Δt Σ_k ‖u^{k+1} − u^k‖²`
    RlGap,
    /// `Σ_K m_K u_K^N`
    FinalMass,
}

impl Functional {
    pub const ALL: [Functional; 7] = [
        Functional::FinalL2Sq,
        Functional::PathL2Sq,
        Functional::StabilityLhs,
        Functional::Dissipation,
        Functional::Gradient,
        Functional::RlGap,
        Functional::FinalMass,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Functional::FinalL2Sq => "final_l2_sq",
            Functional::PathL2Sq => "path_l2_sq",
            Functional::StabilityLhs => "stability_lhs",
            Functional::Dissipation => "dissipation",
            Functional::Gradient => "gradient",
            Functional::RlGap => "rl_gap",
            Functional::FinalMass => "final_mass",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn eval(&self, traj: &Trajectory<'_>) -> f64 {
        let dt = traj.grid().dt();
        let fields = traj.fields();
        match self {
            Functional::FinalL2Sq => l2_norm_sq(traj.last()),
            Functional::PathL2Sq => dt * compensated_sum(fields[1..].iter().map(l2_norm_sq)),
            Functional::StabilityLhs => {
                l2_norm_sq(traj.last()) + 2.0 * dissipation(traj) + 8.0 * dt * compensated_sum(fields[1..].iter().map(h1_seminorm_sq))
            }
            Functional::Dissipation => dissipation(traj),
            Functional::Gradient => dt * compensated_sum(fields[1..].iter().map(h1_seminorm_sq)),
            Functional::RlGap => dt * dissipation(traj),
            Functional::FinalMass => mass(traj.last()),
        }
    }
}

/// `Σ_k ‖u^{k+1} − u^k‖²`.
pub fn dissipation(traj: &Trajectory<'_>) -> f64 {
    compensated_sum(traj.fields().windows(2).map(|w| increment_sq(&w[0], &w[1])))
}

/// `‖b − a‖²` for fields on one mesh.
pub(crate) fn increment_sq(a: &crate::calculus::CellField<'_>, b: &crate::calculus::CellField<'_>) -> f64 {
    compensated_sum(a.mesh().cells().iter().zip(a.values().iter().zip(b.values())).map(|(c, (x, y))| c.area * (y - x) * (y - x)))
}

/// Means and standard errors of `functionals` over `plan.samples` paths.
pub fn mc_estimate(stepper: &Stepper<'_>, plan: &McPlan, functionals: &[Functional]) -> Result<Vec<Estimate>, McError> {
    if plan.samples < 2 {
        return Err(McError::TooFewSamples(plan.samples));
    }
    let values = run_ensemble(stepper, plan, |_, traj| functionals.iter().map(|f| f.eval(traj)).collect::<Vec<f64>>())?;
    Ok((0..functionals.len()).map(|j| Estimate::from_samples(&values.iter().map(|v| v[j]).collect::<Vec<_>>())).collect())
}
