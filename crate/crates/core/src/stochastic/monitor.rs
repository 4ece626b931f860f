use crate::calculus::{h1_seminorm_sq, l2_norm_sq, CellField};
use crate::problem::{ProblemSpec, ScalarFn};
use crate::scheme::{Stepper, Trajectory};
use crate::sum::compensated_sum;

use super::mc::{increment_sq, run_ensemble, Estimate, McError, McPlan};

/// The constructive bound from the stability proof:
/// `Υ = (‖u_h^0‖² + 8 C_Lg |Λ| T) e^{8T(C_Lg + L_β)}` bounds `E‖u^n‖²`, and
/// `K0 = ‖u_h^0‖² + 8 C_Lg T |Λ| + 8 Υ T (C_Lg + L_β)` bounds the combination
/// `E‖u^n‖² + 2 E Σ‖u^{k+1} − u^k‖² + 8Δt Σ E|u^{k+1}|²_{1,h}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTemplate {
    pub upsilon: f64,
    pub k0: f64,
}

impl BoundTemplate {
    pub fn new(initial_l2_sq: f64, growth_g: f64, lipschitz_beta: f64, domain_area: f64, horizon: f64) -> Self {
        let rate = growth_g + lipschitz_beta;
        let upsilon = (initial_l2_sq + 8.0 * growth_g * domain_area * horizon) * (8.0 * horizon * rate).exp();
        let k0 = initial_l2_sq + 8.0 * growth_g * horizon * domain_area + 8.0 * upsilon * horizon * rate;
        Self { upsilon, k0 }
    }
}

/// Monitored quantities at time `t_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub n: usize,
    pub t: f64,
    /// `E‖u^n‖²`
    pub l2_sq: Estimate,
    /// `E Σ_{k<n} ‖u^{k+1} − u^k‖²`
    pub dissipation: Estimate,
    /// `Δt Σ_{k<n} E|u^{k+1}|²_{1,h}`
    pub gradient: Estimate,
    /// `l2_sq + 2·dissipation + 8·gradient`, estimated path by path.
    pub combined: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub samples: usize,
    pub bound: BoundTemplate,
}

impl StabilityReport {
    /// Largest mean of the combined quantity over `n >= 1`.
    pub fn max_combined(&self) -> f64 {
        self.rows.iter().skip(1).map(|r| r.combined.mean).fold(0.0, f64::max)
    }

    /// Every combined mean stays below `K0`.
    pub fn within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.combined.mean <= self.bound.k0)
    }
}

/// Per-path `[‖u^n‖², Σ‖Δu‖², Δt Σ |u|²_{1,h}, combined]` for `n = 0..=N`.
fn stability_terms(traj: &Trajectory<'_>) -> Vec<[f64; 4]> {
    let dt = traj.grid().dt();
    let fields = traj.fields();
    let mut rows = Vec::with_capacity(fields.len());
    let (mut diss, mut grad) = (0.0, 0.0);
    for (n, f) in fields.iter().enumerate() {
        if n > 0 {
            diss += increment_sq(&fields[n - 1], f);
            grad += dt * h1_seminorm_sq(f);
        }
        let e = l2_norm_sq(f);
        rows.push([e, diss, grad, e + 2.0 * diss + 8.0 * grad]);
    }
    rows
}

fn collate<const K: usize>(per_path: &[Vec<[f64; K]>]) -> Vec<[Estimate; K]> {
    let steps = per_path[0].len();
    (0..steps).map(|n| std::array::from_fn(|j| Estimate::from_samples(&per_path.iter().map(|p| p[n][j]).collect::<Vec<_>>()))).collect()
}

/// Monte Carlo estimate of the stability quantities along the time grid.
pub fn stability_report(stepper: &Stepper<'_>, plan: &McPlan) -> Result<StabilityReport, McError> {
    if plan.samples < 2 {
        return Err(McError::TooFewSamples(plan.samples));
    }
    let per_path = run_ensemble(stepper, plan, |_, traj| stability_terms(traj))?;
    let grid = stepper.grid();
    let rows: Vec<StabilityRow> = collate(&per_path)
        .into_iter()
        .enumerate()
        .map(|(n, [l2_sq, dissipation, gradient, combined])| StabilityRow { n, t: grid.t(n), l2_sq, dissipation, gradient, combined })
        .collect();
    let spec = stepper.spec();
    let bound = BoundTemplate::new(
        rows[0].l2_sq.mean,
        spec.constants.growth_g,
        spec.constants.lipschitz_beta,
        stepper.mesh().domain_area(),
        grid.horizon(),
    );
    Ok(StabilityReport { rows, samples: plan.samples, bound })
}

/// Discrete analogue of the weighted energy equality at `t_n`, with
/// `w_k = e^{−c t_k}` and left-endpoint sums over `k < n`:
///
/// ```text
/// w_n ‖u^n‖² + 2 Σ Δt w_k |u^{k+1}|²_{1,h}
///     = ‖u^0‖² − c Σ Δt w_k ‖u^k‖² + Σ Δt w_k ‖g(u^k)‖² + 2 Σ Δt w_k ⟨β(u^{k+1}), u^{k+1}⟩ + residual
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub n: usize,
    pub t: f64,
    pub weighted_energy: Estimate,
    pub gradient: Estimate,
    pub initial: Estimate,
    pub decay: Estimate,
    pub noise: Estimate,
    pub reaction: Estimate,
    /// `Σ_{k<n} ‖u^{k+1} − u^k‖²`, which the scheme dissipates on top of the continuous balance.
    pub dissipation: Estimate,
    /// Left-hand side minus right-hand side.
    pub residual: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub c: f64,
    pub samples: usize,
    pub rows: Vec<EnergyRow>,
}

impl EnergyLedger {
    /// Ledger over an explicit ensemble of trajectories of one problem.
    pub fn from_trajectories(spec: &ProblemSpec, trajectories: &[Trajectory<'_>], c: f64) -> Result<Self, McError> {
        check_weight(c)?;
        if trajectories.is_empty() {
            return Err(McError::TooFewSamples(0));
        }
        let per_path: Vec<_> = trajectories.iter().map(|t| energy_terms(&spec.g, &spec.beta, t, c)).collect();
        Ok(Self::collate(trajectories[0].grid(), &per_path, c))
    }

    fn collate(grid: &crate::scheme::TimeGrid, per_path: &[Vec<[f64; 8]>], c: f64) -> Self {
        let rows = collate(per_path)
            .into_iter()
            .enumerate()
            .map(|(n, [weighted_energy, gradient, initial, decay, noise, reaction, dissipation, residual])| EnergyRow {
                n,
                t: grid.t(n),
                weighted_energy,
                gradient,
                initial,
                decay,
                noise,
                reaction,
                dissipation,
                residual,
            })
            .collect();
        Self { c, samples: per_path.len(), rows }
    }

    pub fn last(&self) -> &EnergyRow {
        self.rows.last().unwrap()
    }
}

fn check_weight(c: f64) -> Result<(), McError> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(McError::Invalid(format!("energy weight c must be >= 0, got {c}")));
    }
    Ok(())
}

fn inner_beta(beta: &ScalarFn, u: &CellField<'_>) -> f64 {
    compensated_sum(u.mesh().cells().iter().zip(u.values()).map(|(c, &v)| c.area * beta.eval(v) * v))
}

fn g_norm_sq(g: &ScalarFn, u: &CellField<'_>) -> f64 {
    compensated_sum(u.mesh().cells().iter().zip(u.values()).map(|(c, &v)| c.area * g.eval(v).powi(2)))
}

/// Per-path ledger terms `[weighted, gradient, initial, decay, noise, reaction, dissipation, residual]`.
fn energy_terms(g: &ScalarFn, beta: &ScalarFn, traj: &Trajectory<'_>, c: f64) -> Vec<[f64; 8]> {
    let grid = traj.grid();
    let dt = grid.dt();
    let fields = traj.fields();
    let initial = l2_norm_sq(&fields[0]);
    let (mut gradient, mut decay, mut noise, mut reaction, mut diss) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut rows = Vec::with_capacity(fields.len());
    for (n, u) in fields.iter().enumerate() {
        if n > 0 {
            let k = n - 1;
            let w = (-c * grid.t(k)).exp();
            let prev = &fields[k];
            gradient += 2.0 * dt * w * h1_seminorm_sq(u);
            decay -= c * dt * w * l2_norm_sq(prev);
            noise += dt * w * g_norm_sq(g, prev);
            reaction += 2.0 * dt * w * inner_beta(beta, u);
            diss += increment_sq(prev, u);
        }
        let weighted = (-c * grid.t(n)).exp() * l2_norm_sq(u);
        let residual = weighted + gradient - (initial + decay + noise + reaction);
        rows.push([weighted, gradient, initial, decay, noise, reaction, diss, residual]);
    }
    rows
}

/// Monte Carlo energy ledger with weight `e^{−ct}`.
pub fn energy_ledger(stepper: &Stepper<'_>, plan: &McPlan, c: f64) -> Result<EnergyLedger, McError> {
    check_weight(c)?;
    if plan.samples < 2 {
        return Err(McError::TooFewSamples(plan.samples));
    }
    let spec = stepper.spec();
    let per_path = run_ensemble(stepper, plan, |_, traj| energy_terms(&spec.g, &spec.beta, traj, c))?;
    Ok(EnergyLedger::collate(stepper.grid(), &per_path, c))
}
