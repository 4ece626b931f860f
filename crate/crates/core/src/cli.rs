//! Command implementations behind the `stochfv` binary.
//!
//! Every command reads one config file, writes CSV files plus a
//! `manifest.txt` into the output directory and returns a short summary.
//! Outputs depend only on the config and the seed, never on the thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{convergence_study, uniform_ladder, AnalysisError};
use crate::calculus::mass;
use crate::config::{ConfigError, MeshSource, RawConfig, RunConfig, LIPSCHITZ_SAMPLES};
use crate::mesh::{mesh_regularity, Mesh, MeshError};
use crate::problem::ProblemError;
use crate::scheme::{SchemeError, Stepper, TimeGrid, MAX_CONTRACTION};
use crate::stochastic::{energy_ledger, mc_estimate, stability_report, BrownianPath, McError, McPlan};
use crate::velocity::EdgeFluxField;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Run,
    Mc,
    Converge,
    MeshInfo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Run => "run",
            Command::Mc => "mc",
            Command::Converge => "converge",
            Command::MeshInfo => "mesh-info",
        }
    }
}

/// One command-line invocation; `seed` and `threads` override the config.
#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub command: Command,
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("solver: {0}")]
    Scheme(#[from] SchemeError),
    #[error("monte carlo: {0}")]
    Mc(#[from] McError),
    #[error("study: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    /// 2: config invalid, 3: solver failure, 4: validation failure, 1: I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Problem(ProblemError::Lipschitz { .. } | ProblemError::Growth { .. })) => 4,
            CliError::Config(_) => 2,
            CliError::Mesh(e) => mesh_code(e),
            CliError::Validation(_) => 4,
            CliError::Scheme(SchemeError::Contraction { .. } | SchemeError::Options(_) | SchemeError::Grid(_)) => 2,
            CliError::Scheme(_) => 3,
            CliError::Mc(McError::TooFewSamples(_) | McError::Invalid(_)) => 2,
            CliError::Mc(_) => 3,
            CliError::Analysis(e) => match e {
                AnalysisError::NotRectangular { .. } | AnalysisError::NotNested { .. } | AnalysisError::NotTiled { .. } => 4,
                AnalysisError::Grid(_) | AnalysisError::TooFewLevels { .. } | AnalysisError::NoExactSolution(_) => 2,
                AnalysisError::Mesh { source, .. } => mesh_code(source),
                AnalysisError::Scheme { source: SchemeError::Contraction { .. } | SchemeError::Options(_), .. } => 2,
                AnalysisError::Scheme { .. } => 3,
                AnalysisError::Mc(McError::TooFewSamples(_) | McError::Invalid(_)) => 2,
                AnalysisError::Mc(_) => 3,
            },
            CliError::Io { .. } => 1,
        }
    }
}

fn mesh_code(e: &MeshError) -> i32 {
    match e {
        MeshError::InvalidArgument(_) | MeshError::Io(_) => 2,
        _ => 4,
    }
}

/// Runs one command and returns the text printed on success.
pub fn execute(inv: &Invocation) -> Result<String, CliError> {
    let mut raw = RunConfig::read_raw(&inv.config)?;
    if let Some(seed) = inv.seed {
        raw.set("seed", seed.to_string());
    }
    let base = inv.config.parent();
    if inv.command == Command::MeshInfo {
        return mesh_info(inv, &raw, base);
    }
    let mut config = RunConfig::from_raw(&raw, base)?;
    if inv.threads.is_some() {
        config.threads = inv.threads;
    }
    let out = output_dir(inv, config.output_dir.as_deref());
    std::fs::create_dir_all(&out).map_err(|source| io_err(&out, source))?;
    let mut manifest = manifest_header(inv.command);
    for (k, v) in config.resolved() {
        let _ = writeln!(manifest, "{k} = {v}");
    }
    write(&out, "manifest.txt", &manifest)?;
    match inv.command {
        Command::Validate => validate(&config, &out),
        Command::Run => run(&config, &out),
        Command::Mc => mc(&config, &out),
        Command::Converge => converge(&config, &out),
        Command::MeshInfo => unreachable!(),
    }
}

fn output_dir(inv: &Invocation, configured: Option<&Path>) -> PathBuf {
    inv.out.clone().or_else(|| configured.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("out"))
}

fn manifest_header(command: Command) -> String {
    format!("# stochfv {VERSION}\ncommand = {}\n", command.name())
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| io_err(&path, source))
}

fn describe_mesh(mesh: &Mesh) -> String {
    let reg = mesh_regularity(mesh);
    let b = mesh.bounding_box();
    format!(
        "cells = {}\ninterior_edges = {}\nboundary_edges = {}\nh = {}\narea = {}\nbounding_box = [{}, {}] x [{}, {}]\nreg = {}\nmax_vertex_valence = {}\nmax_diam_over_dist = {}\n",
        mesh.num_cells(),
        mesh.interior_edges().len(),
        mesh.boundary_edges().len(),
        mesh.size(),
        mesh.domain_area(),
        b.x0,
        b.x1,
        b.y0,
        b.y1,
        reg.reg,
        reg.max_vertex_valence,
        reg.max_diam_over_dist,
    )
}

fn mesh_info(inv: &Invocation, raw: &RawConfig, base: Option<&Path>) -> Result<String, CliError> {
    let (source, tol) = MeshSource::from_raw(raw, base)?;
    let mesh = source.build(tol)?;
    let report = describe_mesh(&mesh);
    let out = output_dir(inv, raw.get("output.dir").map(Path::new));
    std::fs::create_dir_all(&out).map_err(|source| io_err(&out, source))?;
    let mut manifest = manifest_header(inv.command);
    match &source {
        MeshSource::Uniform { nx, ny, rect } => {
            let _ = write!(
                manifest,
                "mesh.nx = {nx}\nmesh.ny = {ny}\nmesh.x0 = {}\nmesh.y0 = {}\nmesh.x1 = {}\nmesh.y1 = {}\n",
                rect.x0, rect.y0, rect.x1, rect.y1
            );
        }
        MeshSource::File { given, .. } => {
            let _ = writeln!(manifest, "mesh.file = {given}");
        }
    }
    let _ = writeln!(manifest, "mesh.orthogonality_tol = {tol}");
    write(&out, "manifest.txt", &manifest)?;
    write(&out, "mesh_info.txt", &report)?;
    Ok(report)
}

fn validate(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    let mesh = config.build_mesh()?;
    let mut report = describe_mesh(&mesh);
    let _ = writeln!(report, "orthogonality_tol = {}", config.orthogonality_tol);
    let coeffs = config.problem.check_coefficients(config.lipschitz_range, LIPSCHITZ_SAMPLES, config.seed).map_err(ConfigError::Problem)?;
    let c = &config.problem.constants;
    let _ = write!(
        report,
        "lipschitz_samples = {}\nlipschitz_range = {}\nL_g = {}\nmax_ratio_g = {}\nL_beta = {}\nmax_ratio_beta = {}\nC_Lg = {}\nmax_growth_ratio_g = {}\n",
        coeffs.samples, coeffs.range, c.lipschitz_g, coeffs.max_ratio_g, c.lipschitz_beta, coeffs.max_ratio_beta, c.growth_g, coeffs.max_growth_ratio_g
    );
    let _ = writeln!(report, "contraction = {} (max {MAX_CONTRACTION})", config.dt() * c.lipschitz_beta);

    let grid = TimeGrid::new(config.steps, config.problem.horizon)?;
    let velocity = &config.problem.velocity;
    let steps = if velocity.is_time_dependent() { config.steps } else { 1 };
    let (mut worst, mut worst_step, mut worst_cell) = (0.0f64, 1, 0);
    for n in 0..steps {
        let field = EdgeFluxField::assemble(&mesh, velocity, n + 1, grid.t(n), grid.t(n + 1), config.options.flux);
        for (k, d) in field.divergence_defect().into_iter().enumerate() {
            if d.abs() > worst {
                (worst, worst_step, worst_cell) = (d.abs(), n + 1, k);
            }
        }
    }
    let _ = writeln!(report, "flux_route = {}\nmax_flux_defect = {worst}\ndefect_tol = {}", config.options.flux.name(), config.defect_tol);
    let ok = worst <= config.defect_tol;
    let _ = writeln!(report, "status = {}", if ok { "ok" } else { "failed" });
    write(out, "report.txt", &report)?;
    if !ok {
        return Err(CliError::Validation(format!(
            "divergence defect {worst} at step {worst_step}, cell {worst_cell} exceeds {}",
            config.defect_tol
        )));
    }
    Ok(report)
}

fn check_coefficients(config: &RunConfig) -> Result<(), CliError> {
    config.problem.check_coefficients(config.lipschitz_range, LIPSCHITZ_SAMPLES, config.seed).map_err(ConfigError::Problem)?;
    Ok(())
}

fn run(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    check_coefficients(config)?;
    let mesh = config.build_mesh()?;
    let grid = TimeGrid::new(config.steps, config.problem.horizon)?;
    let stepper = Stepper::new(&config.problem, &mesh, grid, config.options)?;
    let path = BrownianPath::generate(config.seed, 0, config.steps, config.problem.horizon).map_err(McError::from)?;
    let traj = stepper.run_path(&path)?;

    let mut csv = String::from("n,t_n,cell_id,value\n");
    for (n, f) in traj.fields().iter().enumerate() {
        let t = grid.t(n);
        for (k, v) in f.values().iter().enumerate() {
            let _ = writeln!(csv, "{n},{t},{k},{v}");
        }
    }
    write(out, "trajectory.csv", &csv)?;
    let norms = traj.norms();
    let mut csv = String::from("n,l2,h1_seminorm\n");
    for (n, (l2, h1)) in norms.iter().enumerate() {
        let _ = writeln!(csv, "{n},{l2},{h1}");
    }
    write(out, "norms.csv", &csv)?;
    let iters: usize = traj.reports().iter().map(|r| r.iterations).sum();
    Ok(format!(
        "steps = {}\ncells = {}\nfinal_l2 = {}\nfinal_mass_change = {}\nfixed_point_iterations = {iters}\n",
        config.steps,
        mesh.num_cells(),
        norms.last().unwrap().0,
        mass(traj.last()) - mass(traj.field(0)),
    ))
}

fn plan(config: &RunConfig) -> McPlan {
    McPlan { seed: config.seed, samples: config.samples, threads: config.threads }
}

fn mc(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    check_coefficients(config)?;
    let mesh = config.build_mesh()?;
    let grid = TimeGrid::new(config.steps, config.problem.horizon)?;
    let stepper = Stepper::new(&config.problem, &mesh, grid, config.options)?;
    let plan = plan(config);
    let mut summary = String::new();

    let estimates = mc_estimate(&stepper, &plan, &config.functionals)?;
    let mut csv = String::from("functional,mean,stderr,M,seed,N,h\n");
    for (f, e) in config.functionals.iter().zip(&estimates) {
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", f.name(), e.mean, e.stderr, e.samples, plan.seed, config.steps, mesh.size());
        let _ = writeln!(summary, "{} = {} +- {}", f.name(), e.mean, e.stderr);
    }
    write(out, "estimates.csv", &csv)?;

    if config.stability {
        let report = stability_report(&stepper, &plan)?;
        let mut csv = String::from("n,t,l2_sq,dissipation,gradient,combined,combined_stderr,upsilon,k0\n");
        for r in &report.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.t,
                r.l2_sq.mean,
                r.dissipation.mean,
                r.gradient.mean,
                r.combined.mean,
                r.combined.stderr,
                report.bound.upsilon,
                report.bound.k0
            );
        }
        write(out, "stability.csv", &csv)?;
        let _ = writeln!(
            summary,
            "stability: max combined = {}, K0 = {}, within bound = {}",
            report.max_combined(),
            report.bound.k0,
            report.within_bound()
        );
    }

    if let Some(c) = config.energy_c {
        let ledger = energy_ledger(&stepper, &plan, c)?;
        let mut csv = String::from("n,t,weighted_energy,gradient,initial,decay,noise,reaction,dissipation,residual,residual_stderr\n");
        for r in &ledger.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.n,
                r.t,
                r.weighted_energy.mean,
                r.gradient.mean,
                r.initial.mean,
                r.decay.mean,
                r.noise.mean,
                r.reaction.mean,
                r.dissipation.mean,
                r.residual.mean,
                r.residual.stderr
            );
        }
        write(out, "energy.csv", &csv)?;
        let last = ledger.last();
        let _ = writeln!(summary, "energy ledger (c = {c}): final residual = {} +- {}", last.residual.mean, last.residual.stderr);
    }
    Ok(summary)
}

fn converge(config: &RunConfig, out: &Path) -> Result<String, CliError> {
    check_coefficients(config)?;
    let MeshSource::Uniform { nx, ny, rect } = config.mesh else {
        return Err(ConfigError::Invalid("`converge` needs a uniform base mesh (mesh.nx, mesh.ny)".into()).into());
    };
    let levels = uniform_ladder(nx, ny, rect, config.steps, config.study.levels, config.study.policy)?;
    let study = convergence_study(&config.problem, &levels, config.options, &plan(config), config.study.reference, config.study.measure)?;

    let mut csv = String::from("level,h,N,M,error,stderr,rate\n");
    for r in &study.table.rows {
        let rate = r.rate.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{},{},{}", r.level, r.h, r.steps, r.samples, r.error, r.stderr, rate);
    }
    write(out, "rates.csv", &csv)?;
    let mut csv = String::from("level,h,N,dt,gap_embedded,gap_embedded_stderr,gap_summed,gap_summed_stderr,max_identity_defect\n");
    for g in &study.gaps {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            g.level, g.h, g.steps, g.dt, g.embedded.mean, g.embedded.stderr, g.summed.mean, g.summed.stderr, g.max_identity_defect
        );
    }
    write(out, "gaps.csv", &csv)?;

    let mut summary = format!("reference = {}\nmeasure = {}\n", config.study.reference.name(), study.table.measure.name());
    for r in &study.table.rows {
        let _ =
            writeln!(summary, "level {}: h = {}, N = {}, error = {} +- {}, rate = {:?}", r.level, r.h, r.steps, r.error, r.stderr, r.rate);
    }
    if let Some(p) = study.gap_exponent {
        let _ = writeln!(summary, "gap exponent = {p}");
    }
    Ok(summary)
}
