//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --release --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochfv::analysis::{convergence_study, uniform_ladder, ErrorMeasure, LadderPolicy, Reference, StudyResult};
use stochfv::calculus::{discrete_gradient, duality_form, h1_seminorm_sq, l1_norm, mass, CellField};
use stochfv::geometry::Rect;
use stochfv::mesh::build_uniform_rect_mesh;
use stochfv::problem::{InitialCondition, ProblemSpec, ScalarFn, Velocity, VelocityField};
use stochfv::scheme::{SolverOptions, Stepper, TimeGrid};
use stochfv::stochastic::{mc_estimate, stability_report, BrownianPath, Functional, McPlan};

/// `E[(u^32)²]` for `du = 0.25u dt + 0.5u dW`, `u⁰ = 1`, `Δt = 1/32`, from the exact
/// second-moment recursion of the implicit step, evaluated independently.
const SINGLE_CELL_SECOND_MOMENT: f64 = 2.119100808239795;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// `(nx, ny, domain, field a, field b)`
type Pair = (usize, usize, Rect, Vec<f64>, Vec<f64>);

fn random_pairs(count: usize) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..count)
        .map(|_| {
            let nx = rng.random_range(2..=16);
            let ny = rng.random_range(2..=16);
            let x0 = rng.random_range(-1.0..1.0);
            let y0 = rng.random_range(-1.0..1.0);
            let rect = Rect::new(x0, y0, x0 + rng.random_range(0.5..3.0), y0 + rng.random_range(0.5..3.0));
            let a = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = (0..nx * ny).map(|_| rng.random_range(-1.0..1.0)).collect();
            (nx, ny, rect, a, b)
        })
        .collect()
}

fn duality() -> Outcome {
    let mut worst: f64 = 0.0;
    for (nx, ny, rect, a, b) in random_pairs(100) {
        let mesh = build_uniform_rect_mesh(nx, ny, rect).unwrap();
        let (w, wt) = (CellField::new(&mesh, a).unwrap(), CellField::new(&mesh, b).unwrap());
        let d = duality_form(&w, &wt).unwrap();
        worst = worst.max((d.lhs - d.rhs).abs() / (1.0 + d.lhs.abs()));
    }
    outcome(worst <= 1e-12, format!("max |lhs - rhs| / (1 + |lhs|) = {worst:e} over 100 pairs (tol 1e-12)"))
}

fn gradient_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for (nx, ny, rect, a, _) in random_pairs(100) {
        let mesh = build_uniform_rect_mesh(nx, ny, rect).unwrap();
        let f = CellField::new(&mesh, a).unwrap();
        let lhs = discrete_gradient(&f).l2_norm_sq();
        let rhs = 2.0 * h1_seminorm_sq(&f);
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
    }
    outcome(worst <= 1e-12, format!("max relative gap = {worst:e} over 100 fields (tol 1e-12)"))
}

/// Diffusion and transport by the cellular vortex `(−∂_yψ, ∂_xψ)`, `ψ = sin πx sin πy`,
/// which is divergence-free with `v·n = 0` on the unit square.
fn vortex_spec() -> ProblemSpec {
    ProblemSpec::new(
        ScalarFn::Zero,
        ScalarFn::Zero,
        Velocity::steady(VelocityField::Cellular { amplitude: 1.0, rect: Rect::UNIT }),
        InitialCondition::Gaussian { amplitude: 1.0, x0: 0.3, y0: 0.5, width: 0.1 },
        1.0,
    )
    .unwrap()
}

fn transport() -> (Outcome, Outcome) {
    let spec = vortex_spec();
    let mesh = build_uniform_rect_mesh(16, 16, Rect::UNIT).unwrap();
    let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(64, 1.0).unwrap(), SolverOptions::default()).unwrap();
    let traj = stepper.run_path(&BrownianPath::zero(64, 1.0).unwrap()).unwrap();
    let u0 = traj.field(0);
    let (m0, l1) = (mass(u0), l1_norm(u0));
    let drift = traj.fields().iter().map(|f| (mass(f) - m0).abs()).fold(0.0, f64::max);
    let (lo, hi) = u0.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for f in traj.fields() {
        for &v in f.values() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    let mass_ok = drift <= 1e-10 * l1;
    let max_ok = min >= lo - 1e-9 && max <= hi + 1e-9;
    (
        outcome(mass_ok, format!("max_n |mass(u^n) - mass(u^0)| = {drift:e}, bound 1e-10 * {l1} (16x16, N = 64, cellular vortex)")),
        outcome(max_ok, format!("range of u^n = [{min:e}, {max}] within [{lo:e}, {hi}] +- 1e-9")),
    )
}

fn single_cell() -> Outcome {
    let (lambda, b, dt) = (0.5f64, 0.25f64, 1.0 / 32.0);
    let recursion = ((1.0 + lambda * lambda * dt) / (1.0 - dt * b).powi(2)).powi(32);
    let spec = ProblemSpec::new(
        ScalarFn::Linear { lambda },
        ScalarFn::Linear { lambda: b },
        Velocity::zero(),
        InitialCondition::Constant { value: 1.0 },
        1.0,
    )
    .unwrap();
    let mesh = build_uniform_rect_mesh(1, 1, Rect::UNIT).unwrap();
    let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(32, 1.0).unwrap(), SolverOptions::default()).unwrap();
    let e = mc_estimate(&stepper, &McPlan::new(5, 10_000), &[Functional::FinalL2Sq]).unwrap()[0];
    let z = (e.mean - SINGLE_CELL_SECOND_MOMENT) / e.stderr;
    let oracle_ok = (recursion - SINGLE_CELL_SECOND_MOMENT).abs() <= 1e-12;
    outcome(
        z.abs() <= 3.0 && oracle_ok,
        format!("E[(u^N)^2] = {} +- {} vs {SINGLE_CELL_SECOND_MOMENT} ({z:+.2} stderr, M = 10^4)", e.mean, e.stderr),
    )
}

fn heat_order() -> Outcome {
    let spec = ProblemSpec::new(
        ScalarFn::Zero,
        ScalarFn::Zero,
        Velocity::zero(),
        InitialCondition::Cosine { offset: 0.0, amplitude: 1.0, kx: 1.0, ky: 1.0 },
        0.1,
    )
    .unwrap();
    let levels = uniform_ladder(8, 8, Rect::UNIT, 8, 3, LadderPolicy::Quadratic).unwrap();
    let r = convergence_study(&spec, &levels, SolverOptions::default(), &McPlan::new(0, 2), Reference::Exact, ErrorMeasure::Rms).unwrap();
    let errors: Vec<f64> = r.table.rows.iter().map(|row| row.error).collect();
    let rate = r.table.min_rate().unwrap();
    outcome(
        r.table.errors_decrease() && rate >= 1.8,
        format!("L2(0,T;L2) errors {errors:?} on 8^2/16^2/32^2 with N = 8/32/128, min rate {rate:.3} (>= 1.8)"),
    )
}

fn linear_spec() -> ProblemSpec {
    ProblemSpec::new(
        ScalarFn::Linear { lambda: 0.5 },
        ScalarFn::Linear { lambda: 0.25 },
        Velocity::zero(),
        InitialCondition::Cosine { offset: 1.0, amplitude: 0.5, kx: 1.0, ky: 1.0 },
        1.0,
    )
    .unwrap()
}

fn stability() -> Outcome {
    let spec = linear_spec();
    let mesh = build_uniform_rect_mesh(8, 8, Rect::UNIT).unwrap();
    let mut maxima = Vec::new();
    let mut within = true;
    let mut k0 = 0.0;
    for n in [16, 32, 64] {
        let stepper = Stepper::new(&spec, &mesh, TimeGrid::new(n, 1.0).unwrap(), SolverOptions::default()).unwrap();
        let report = stability_report(&stepper, &McPlan::new(11, 256)).unwrap();
        within &= report.within_bound();
        k0 = report.bound.k0;
        maxima.push(report.max_combined());
    }
    let spread = maxima.iter().cloned().fold(0.0, f64::max) / maxima.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(spread < 2.0 && within, format!("max combined {maxima:?} for N = 16/32/64, spread {spread:.3} (< 2), K0 = {k0}"))
}

fn coupled_study() -> StudyResult {
    let levels = uniform_ladder(8, 8, Rect::UNIT, 32, 3, LadderPolicy::Linear).unwrap();
    convergence_study(
        &linear_spec(),
        &levels,
        SolverOptions::default(),
        &McPlan::new(3, 256),
        Reference::InterLevel,
        ErrorMeasure::MeanSquare,
    )
    .unwrap()
}

fn gap(study: &StudyResult) -> Outcome {
    let worst = study.gaps.iter().map(|g| g.max_identity_defect).fold(0.0, f64::max);
    let p = study.gap_exponent.unwrap_or(f64::NAN);
    let gaps: Vec<f64> = study.gaps.iter().map(|g| g.summed.mean).collect();
    outcome(
        worst <= 1e-12 && (0.8..=1.2).contains(&p),
        format!("identity defect {worst:e} (tol 1e-12); gaps {gaps:?}, fitted dt-exponent {p:.3} (in [0.8, 1.2])"),
    )
}

fn strong(study: &StudyResult) -> Outcome {
    let errors: Vec<f64> = study.table.rows.iter().map(|r| r.error).collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let ok = !ratios.is_empty() && ratios.iter().all(|&r| r >= 1.3);
    outcome(ok, format!("E||u_fine - u_coarse||^2 = {errors:?} for pairs 8/16 and 16/32 (dt ~ h, M = 256), ratios {ratios:?} (>= 1.3)"))
}

const CONFIGS: &[(&str, &str, &str)] = &[
    (
        "transport",
        "run",
        "mesh.nx = 16\nmesh.ny = 16\ntime.N = 64\ntime.T = 1\nproblem.v = cellular\nproblem.v.amplitude = 1\n\
         problem.u0 = gaussian\nproblem.u0.amplitude = 1\nproblem.u0.x0 = 0.3\nproblem.u0.y0 = 0.5\nproblem.u0.width = 0.1\n",
    ),
    (
        "single_cell",
        "mc",
        "mesh.nx = 1\nmesh.ny = 1\ntime.N = 32\ntime.T = 1\nproblem.g = linear\nproblem.g.lambda = 0.5\n\
         problem.beta = linear\nproblem.beta.lambda = 0.25\nproblem.u0 = constant\nproblem.u0.value = 1\n\
         mc.M = 10000\nmc.functionals = final_l2_sq\nmc.stability = false\nseed = 5\n",
    ),
    (
        "heat",
        "converge",
        "mesh.nx = 8\nmesh.ny = 8\ntime.N = 8\ntime.T = 0.1\nproblem.u0 = cosine\nproblem.u0.kx = 1\nproblem.u0.ky = 1\n\
         study.levels = 3\nstudy.policy = quadratic\nstudy.reference = exact\n",
    ),
    ("stability16", "mc", LINEAR_MC_16),
    ("coupled", "converge", LINEAR_STUDY),
];

const LINEAR_MC_16: &str = "mesh.nx = 8\nmesh.ny = 8\ntime.N = 16\ntime.T = 1\nproblem.g = linear\nproblem.g.lambda = 0.5\n\
problem.beta = linear\nproblem.beta.lambda = 0.25\nproblem.u0 = cosine\nproblem.u0.offset = 1\nproblem.u0.amplitude = 0.5\n\
problem.u0.kx = 1\nproblem.u0.ky = 1\nmc.M = 256\nmc.functionals = stability_lhs,rl_gap\nmc.energy_c = 1\nseed = 11\n";

const LINEAR_STUDY: &str = "mesh.nx = 8\nmesh.ny = 8\ntime.N = 32\ntime.T = 1\nproblem.g = linear\nproblem.g.lambda = 0.5\n\
problem.beta = linear\nproblem.beta.lambda = 0.25\nproblem.u0 = cosine\nproblem.u0.offset = 1\nproblem.u0.amplitude = 0.5\n\
problem.u0.kx = 1\nproblem.u0.ky = 1\nmc.M = 256\nseed = 3\nstudy.levels = 3\nstudy.policy = linear\n";

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut mismatches = Vec::new();
    let mut configs: Vec<(String, &str, String)> = CONFIGS.iter().map(|(n, c, t)| (n.to_string(), *c, t.to_string())).collect();
    for n in [32, 64] {
        configs.push((format!("stability{n}"), "mc", LINEAR_MC_16.replace("time.N = 16", &format!("time.N = {n}"))));
    }
    for (name, command, text) in &configs {
        let cfg = tmp.path().join(format!("{name}.conf"));
        std::fs::write(&cfg, text).unwrap();
        let mut outputs = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("{name}-{threads}"));
            let status = Command::new(env!("CARGO_BIN_EXE_stochfv"))
                .args([command, "--config"])
                .arg(&cfg)
                .arg("--out")
                .arg(&out)
                .args(["--threads", threads])
                .output()
                .unwrap();
            if !status.status.success() {
                return outcome(false, format!("{name}: `{command}` failed: {}", String::from_utf8_lossy(&status.stderr)));
            }
            outputs.push(files(&out));
        }
        for ((fa, a), (_, b)) in outputs[0].iter().zip(&outputs[1]) {
            if fa.ends_with(".csv") {
                compared += 1;
                if a != b {
                    mismatches.push(format!("{name}/{fa}"));
                }
            }
        }
        if outputs[0].len() != outputs[1].len() {
            mismatches.push(format!("{name}: different file sets"));
        }
    }
    outcome(
        mismatches.is_empty() && compared > 0,
        format!("{compared} CSV files compared between --threads 1 and 4; mismatches: {mismatches:?}"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, start: Instant, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("{tag} criterion {id:>2} {name}: {} [{:.2}s]", o.detail, start.elapsed().as_secs_f64());
    };
    let t = Instant::now();
    report(1, "discrete duality", t, duality());
    let t = Instant::now();
    report(2, "gradient-seminorm identity", t, gradient_identity());
    let t = Instant::now();
    let (mass_ok, max_ok) = transport();
    report(3, "mass conservation", t, mass_ok);
    report(4, "maximum principle", t, max_ok);
    let t = Instant::now();
    report(5, "single-cell second moment", t, single_cell());
    let t = Instant::now();
    report(6, "heat order study", t, heat_order());
    let t = Instant::now();
    report(7, "stability bound", t, stability());
    let t = Instant::now();
    let study = coupled_study();
    report(8, "r-l gap", t, gap(&study));
    report(9, "strong-convergence proxy", t, strong(&study));
    let t = Instant::now();
    report(10, "thread-count reproducibility", t, reproducibility());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 10 criteria passed");
}
