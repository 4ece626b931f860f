use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stochfv::geometry::Rect;
use stochfv::mesh::{build_uniform_rect_mesh, write_mesh};

const LINEAR: &str = "\
mesh.nx = 8
mesh.ny = 8
time.N = 16
time.T = 1
problem.g = linear
problem.g.lambda = 0.5
problem.beta = linear
problem.beta.lambda = 0.25
problem.u0 = cosine
problem.u0.offset = 1
problem.u0.amplitude = 0.5
problem.u0.kx = 1
problem.u0.ky = 1
mc.M = 64
seed = 9
";

struct Case {
    dir: tempfile::TempDir,
}

impl Case {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn stochfv(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochfv"))
        .args(&args[..1])
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(&args[1..])
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn validate_reports_regularity() {
    let c = Case::new();
    let o = stochfv(&["validate"], &c.config("a.conf", LINEAR), &c.out("v"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read(&c.out("v"), "report.txt");
    assert!(report.contains("\nreg = 4\n"), "{report}");
    assert!(report.contains("status = ok"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reg = 4"));
}

#[test]
fn contraction_violation_is_a_config_error() {
    let c = Case::new();
    let text = LINEAR.replace("time.N = 16", "time.N = 4").replace("problem.beta.lambda = 0.25", "problem.beta.lambda = 2");
    let o = stochfv(&["validate"], &c.config("a.conf", &text), &c.out("v"));
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("contraction"));
}

#[test]
fn config_errors_exit_2() {
    let c = Case::new();
    let cubic = LINEAR.replace("problem.g = linear", "problem.g = cubic");
    for (i, text) in
        [format!("{LINEAR}mesh.nz = 1\n"), format!("{LINEAR}solver.form = fancy\n"), format!("{LINEAR}garbage\n"), cubic].iter().enumerate()
    {
        let o = stochfv(&["run"], &c.config(&format!("{i}.conf"), text), &c.out("r"));
        assert_eq!(code(&o), 2, "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = stochfv(&["run"], &c.dir.path().join("missing.conf"), &c.out("r"));
    assert_eq!(code(&o), 2);
}

#[test]
fn broken_mesh_file_is_a_validation_failure() {
    let c = Case::new();
    let mesh = build_uniform_rect_mesh(2, 1, Rect::UNIT).unwrap();
    let mut text = Vec::new();
    write_mesh(&mesh, &mut text).unwrap();
    // Move the second cell center off the line through the first one.
    let text = String::from_utf8(text).unwrap().replace("cell 1 0.75 0.5", "cell 1 0.75 0.6");
    std::fs::write(c.dir.path().join("bad.msh"), text).unwrap();
    let cfg = c.config("a.conf", "mesh.file = bad.msh\ntime.N = 4\ntime.T = 1\nproblem.u0 = zero\n");
    let o = stochfv(&["validate"], &cfg, &c.out("v"));
    assert_eq!(code(&o), 4);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("interior edge 0"), "{err}");
    assert_eq!(code(&stochfv(&["mesh-info"], &cfg, &c.out("m"))), 4);
}

#[test]
fn lipschitz_violation_is_a_validation_failure() {
    let c = Case::new();
    let o = stochfv(&["validate"], &c.config("a.conf", &format!("{LINEAR}problem.L_g = 0.1\n")), &c.out("v"));
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Lipschitz"));
}

#[test]
fn rotation_fails_the_defect_check() {
    // The rigid rotation is divergence-free but not tangential on the square.
    let c = Case::new();
    let text = format!("{LINEAR}problem.v = rotation\nproblem.v.omega = 1\n");
    let o = stochfv(&["validate"], &c.config("a.conf", &text), &c.out("v"));
    assert_eq!(code(&o), 4);
    assert!(read(&c.out("v"), "report.txt").contains("status = failed"));
}

#[test]
fn zero_problem_gives_zero_trajectory() {
    let c = Case::new();
    let cfg = c.config("a.conf", "mesh.nx = 3\nmesh.ny = 2\ntime.N = 4\ntime.T = 1\nproblem.u0 = zero\n");
    let o = stochfv(&["run"], &cfg, &c.out("r"));
    assert_eq!(code(&o), 0);
    let traj = read(&c.out("r"), "trajectory.csv");
    let mut lines = traj.lines();
    assert_eq!(lines.next(), Some("n,t_n,cell_id,value"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5 * 6);
    assert!(rows.iter().all(|r| r.ends_with(",0")));
    assert_eq!(read(&c.out("r"), "norms.csv").lines().nth(1), Some("0,0,0"));
}

#[test]
fn heat_run_matches_exact_decay() {
    let c = Case::new();
    let text = "mesh.nx = 16\nmesh.ny = 16\ntime.N = 256\ntime.T = 0.1\nproblem.u0 = cosine\nproblem.u0.kx = 1\nproblem.u0.ky = 1\n";
    let o = stochfv(&["run"], &c.config("a.conf", text), &c.out("r"));
    assert_eq!(code(&o), 0);
    let norms = read(&c.out("r"), "norms.csv");
    let last: f64 = norms.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let exact = 0.5 * (-2.0 * std::f64::consts::PI.powi(2) * 0.1).exp();
    // O(h² + Δt): about 1% at h = 1/16, Δt = 1/2560.
    assert!((last - exact).abs() / exact < 2e-2, "{last} vs {exact}");
}

#[test]
fn outputs_are_reproducible() {
    let c = Case::new();
    let cfg = c.config("a.conf", LINEAR);
    for cmd in ["run", "mc"] {
        let a = c.out(&format!("{cmd}-a"));
        let b = c.out(&format!("{cmd}-b"));
        assert_eq!(code(&stochfv(&[cmd, "--threads", "1"], &cfg, &a)), 0);
        assert_eq!(code(&stochfv(&[cmd, "--threads", "3"], &cfg, &b)), 0);
        for entry in std::fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap(), "{cmd}: {name:?}");
        }
    }
    // A different seed changes the path.
    let d = c.out("run-seed");
    assert_eq!(code(&stochfv(&["run", "--seed", "10"], &cfg, &d)), 0);
    assert_ne!(read(&d, "trajectory.csv"), read(&c.out("run-a"), "trajectory.csv"));
    assert!(read(&d, "manifest.txt").contains("\nseed = 10\n"));
}

#[test]
fn manifest_echoes_resolved_config() {
    let c = Case::new();
    let o = stochfv(&["mc", "--threads", "2"], &c.config("a.conf", LINEAR), &c.out("m"));
    assert_eq!(code(&o), 0);
    let m = read(&c.out("m"), "manifest.txt");
    assert!(m.starts_with(&format!("# stochfv {}\ncommand = mc\n", env!("CARGO_PKG_VERSION"))));
    for line in ["problem.g.lambda = 0.5", "solver.form = split", "solver.flux = stream", "mc.M = 64", "seed = 9", "time.N = 16"] {
        assert!(m.contains(line), "{line} missing from\n{m}");
    }
    assert!(!m.contains("threads"));
    let est = read(&c.out("m"), "estimates.csv");
    assert!(est.starts_with("functional,mean,stderr,M,seed,N,h\n"));
    assert!(est.contains("final_l2_sq,"));
    assert!(read(&c.out("m"), "stability.csv").starts_with("n,t,l2_sq,"));
}

#[test]
fn solver_failure_exits_3() {
    let c = Case::new();
    let o = stochfv(&["mc"], &c.config("a.conf", &format!("{LINEAR}solver.max_iters = 1\n")), &c.out("m"));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn converge_writes_rate_table() {
    let c = Case::new();
    let text = LINEAR.replace("mesh.nx = 8", "mesh.nx = 2").replace("mesh.ny = 8", "mesh.ny = 2").replace("time.N = 16", "time.N = 4");
    let o = stochfv(&["converge"], &c.config("a.conf", &format!("{text}study.levels = 3\n")), &c.out("c"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rates = read(&c.out("c"), "rates.csv");
    let rows: Vec<&str> = rates.lines().collect();
    assert_eq!(rows[0], "level,h,N,M,error,stderr,rate");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].ends_with(','));
    assert!(rows[2].starts_with("2,"));
    assert_eq!(read(&c.out("c"), "gaps.csv").lines().count(), 4);
    assert!(read(&c.out("c"), "manifest.txt").contains("study.levels = 3"));
}

#[test]
fn mesh_info_needs_only_mesh_keys() {
    let c = Case::new();
    let o = stochfv(&["mesh-info"], &c.config("a.conf", "mesh.nx = 2\nmesh.ny = 1\n"), &c.out("m"));
    assert_eq!(code(&o), 0);
    let s = String::from_utf8_lossy(&o.stdout);
    assert!(s.contains("cells = 2"));
    assert!(s.contains(&format!("reg = {}", 1.25f64.sqrt() / 0.25)));
}
