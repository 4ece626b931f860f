//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! mesh.nx = 8
//! mesh.ny = 8
//! time.N = 32
//! time.T = 1
//! problem.g = linear
//! problem.g.lambda = 0.5
//! problem.u0 = cosine
//! problem.u0.kx = 1
//! problem.u0.ky = 1
//! ```
//!
//! Registry parameters live one level below the entry they belong to
//! (`problem.g.lambda`). Unknown keys and duplicates are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::analysis::{ErrorMeasure, LadderPolicy, Reference};
use crate::geometry::Rect;
use crate::mesh::{build_uniform_rect_mesh, load_mesh, Mesh, MeshError, DEFAULT_ORTHOGONALITY_TOL};
use crate::problem::{Constants, InitialCondition, Params, ProblemError, ProblemSpec, ScalarFn, Velocity};
use crate::scheme::{SchemeForm, SolverOptions, MAX_CONTRACTION};
use crate::stochastic::Functional;
use crate::velocity::FluxQuadrature;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { key: String, line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("`{key} = {value}`: expected {expected}")]
    Value { key: String, value: String, expected: String },
    #[error("{0}")]
    Invalid(String),
    #[error("contraction condition violated: dt * L_beta = {dt} * {lipschitz_beta} = {product} > {max}", max = MAX_CONTRACTION)]
    Contraction { dt: f64, lipschitz_beta: f64, product: f64 },
    #[error(transparent)]
    Problem(ProblemError),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

const KEYS: &[&str] = &[
    "mesh.nx",
    "mesh.ny",
    "mesh.x0",
    "mesh.y0",
    "mesh.x1",
    "mesh.y1",
    "mesh.file",
    "mesh.orthogonality_tol",
    "time.N",
    "time.T",
    "problem.g",
    "problem.beta",
    "problem.v",
    "problem.u0",
    "problem.L_g",
    "problem.L_beta",
    "problem.C_Lg",
    "problem.lipschitz_range",
    "solver.tol",
    "solver.max_iters",
    "solver.linear_tol",
    "solver.residual_tol",
    "solver.direct_max_cells",
    "solver.form",
    "solver.flux",
    "mc.M",
    "mc.functionals",
    "mc.stability",
    "mc.energy_c",
    "study.levels",
    "study.policy",
    "study.reference",
    "study.measure",
    "validate.defect_tol",
    "seed",
    "threads",
    "output.dir",
];

/// Registry entries whose parameters sit below them.
const ENTRIES: &[&str] = &["problem.g", "problem.beta", "problem.v", "problem.u0"];

/// Samples of the Lipschitz and growth checks.
pub const LIPSCHITZ_SAMPLES: usize = 1000;

/// Where the mesh comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Uniform {
        nx: usize,
        ny: usize,
        rect: Rect,
    },
    /// `path` is resolved against the config file's directory; `given` is the text of the config.
    File {
        path: PathBuf,
        given: String,
    },
}

impl MeshSource {
    /// Reads only the `mesh.*` keys.
    pub fn from_raw(raw: &RawConfig, base: Option<&Path>) -> Result<(Self, f64), ConfigError> {
        let source = match raw.get("mesh.file") {
            Some(file) => {
                if ["mesh.nx", "mesh.ny", "mesh.x0", "mesh.y0", "mesh.x1", "mesh.y1"].iter().any(|k| raw.get(k).is_some()) {
                    return Err(ConfigError::Invalid("`mesh.file` excludes the uniform mesh keys".into()));
                }
                let p = Path::new(file);
                let path = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                MeshSource::File { path, given: file.to_string() }
            }
            None => {
                let nx = raw.count("mesh.nx")?.ok_or(ConfigError::Missing("mesh.nx"))?;
                let ny = raw.count("mesh.ny")?.ok_or(ConfigError::Missing("mesh.ny"))?;
                let rect = Rect::new(
                    raw.real("mesh.x0")?.unwrap_or(0.0),
                    raw.real("mesh.y0")?.unwrap_or(0.0),
                    raw.real("mesh.x1")?.unwrap_or(1.0),
                    raw.real("mesh.y1")?.unwrap_or(1.0),
                );
                if rect.is_degenerate() || rect.x1 < rect.x0 || rect.y1 < rect.y0 {
                    return Err(ConfigError::Invalid(format!(
                        "mesh rectangle [{}, {}] x [{}, {}] is empty",
                        rect.x0, rect.x1, rect.y0, rect.y1
                    )));
                }
                MeshSource::Uniform { nx, ny, rect }
            }
        };
        let tol = raw.positive("mesh.orthogonality_tol")?.unwrap_or(DEFAULT_ORTHOGONALITY_TOL);
        Ok((source, tol))
    }

    pub fn build(&self, orthogonality_tol: f64) -> Result<Mesh, MeshError> {
        match self {
            MeshSource::Uniform { nx, ny, rect } => build_uniform_rect_mesh(*nx, *ny, *rect),
            MeshSource::File { path, .. } => load_mesh(path, orthogonality_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub levels: usize,
    pub policy: LadderPolicy,
    pub reference: Reference,
    pub measure: ErrorMeasure,
}

/// A fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub orthogonality_tol: f64,
    pub steps: usize,
    pub problem: ProblemSpec,
    pub lipschitz_range: f64,
    pub options: SolverOptions,
    pub seed: u64,
    pub samples: usize,
    pub functionals: Vec<Functional>,
    pub stability: bool,
    pub energy_c: Option<f64>,
    pub study: StudyConfig,
    pub defect_tol: f64,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

/// Raw `key = value` pairs with their line numbers.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ConfigError::Syntax { line, message: format!("expected `key = value`, found `{content}`") });
            };
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax { line, message: format!("invalid key `{k}`") });
            }
            if v.is_empty() {
                return Err(ConfigError::Syntax { line, message: format!("`{k}` has no value") });
            }
            if entries.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(ConfigError::Duplicate { key: k.to_string(), line });
            }
        }
        let raw = Self { entries };
        raw.check_keys()?;
        Ok(raw)
    }

    fn check_keys(&self) -> Result<(), ConfigError> {
        let known: BTreeSet<&str> = KEYS.iter().copied().collect();
        for (k, (_, line)) in &self.entries {
            let is_param = ENTRIES
                .iter()
                .any(|e| k.strip_prefix(e).and_then(|r| r.strip_prefix('.')).is_some_and(|p| !p.is_empty() && !p.contains('.')));
            if !known.contains(k.as_str()) && !is_param {
                return Err(ConfigError::UnknownKey { key: k.clone(), line: *line });
            }
        }
        Ok(())
    }

    /// Sets a key, replacing any previous value (used for command-line overrides).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn value<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| ConfigError::Value { key: key.into(), value: v.into(), expected: expected.into() }))
            .transpose()
    }

    fn real(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.value::<f64>(key, "a real number")? {
            Some(x) if !x.is_finite() => {
                Err(ConfigError::Value { key: key.into(), value: self.get(key).unwrap().into(), expected: "a finite number".into() })
            }
            other => Ok(other),
        }
    }

    fn positive(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.real(key)? {
            Some(x) if x <= 0.0 => {
                Err(ConfigError::Value { key: key.into(), value: self.get(key).unwrap().into(), expected: "a positive number".into() })
            }
            other => Ok(other),
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        match self.value::<usize>(key, "a positive integer")? {
            Some(0) => Err(ConfigError::Value { key: key.into(), value: "0".into(), expected: "a positive integer".into() }),
            other => Ok(other),
        }
    }

    fn choice<T>(&self, key: &str, parse: fn(&str) -> Option<T>, expected: &str) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|v| parse(v).ok_or_else(|| ConfigError::Value { key: key.into(), value: v.into(), expected: expected.into() }))
            .transpose()
    }

    /// Parameters of a registry entry.
    fn params(&self, entry: &str) -> Result<Params, ConfigError> {
        let prefix = format!("{entry}.");
        let mut out = Params::new();
        for k in self.entries.keys() {
            if let Some(p) = k.strip_prefix(&prefix) {
                out.insert(p.to_string(), self.real(k)?.unwrap());
            }
        }
        Ok(out)
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let raw = Self::read_raw(path.as_ref())?;
        Self::from_raw(&raw, path.as_ref().parent())
    }

    pub fn read_raw(path: &Path) -> Result<RawConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        RawConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?, None)
    }

    /// Resolves defaults and validates; relative mesh files are looked up in `base`.
    pub fn from_raw(raw: &RawConfig, base: Option<&Path>) -> Result<Self, ConfigError> {
        let (mesh, orthogonality_tol) = MeshSource::from_raw(raw, base)?;
        let steps = raw.count("time.N")?.ok_or(ConfigError::Missing("time.N"))?;
        let horizon = raw.positive("time.T")?.ok_or(ConfigError::Missing("time.T"))?;

        let problem_err = ConfigError::Problem;
        let g = ScalarFn::from_registry(raw.get("problem.g").unwrap_or("zero"), &raw.params("problem.g")?).map_err(problem_err)?;
        let beta = ScalarFn::from_registry(raw.get("problem.beta").unwrap_or("zero"), &raw.params("problem.beta")?).map_err(problem_err)?;
        let velocity = Velocity::from_registry(raw.get("problem.v").unwrap_or("zero"), &raw.params("problem.v")?).map_err(problem_err)?;
        let u0 =
            InitialCondition::from_registry(raw.get("problem.u0").ok_or(ConfigError::Missing("problem.u0"))?, &raw.params("problem.u0")?)
                .map_err(problem_err)?;
        let nonneg = |key: &str, default: f64| -> Result<f64, ConfigError> {
            match raw.real(key)? {
                Some(x) if x < 0.0 => Err(ConfigError::Value {
                    key: key.into(),
                    value: raw.get(key).unwrap().into(),
                    expected: "a non-negative number".into(),
                }),
                Some(x) => Ok(x),
                None => Ok(default),
            }
        };
        let constants = Constants {
            lipschitz_g: nonneg("problem.L_g", g.lipschitz())?,
            lipschitz_beta: nonneg("problem.L_beta", beta.lipschitz())?,
            growth_g: nonneg("problem.C_Lg", g.growth_constant())?,
        };
        let problem = ProblemSpec::with_constants(g, beta, velocity, u0, horizon, constants).map_err(problem_err)?;
        let lipschitz_range = raw.positive("problem.lipschitz_range")?.unwrap_or(10.0);

        let defaults = SolverOptions::default();
        let options = SolverOptions {
            fixed_point_tol: raw.positive("solver.tol")?.unwrap_or(defaults.fixed_point_tol),
            max_iters: raw.count("solver.max_iters")?.unwrap_or(defaults.max_iters),
            linear_tol: raw.positive("solver.linear_tol")?.unwrap_or(defaults.linear_tol),
            residual_tol: raw.positive("solver.residual_tol")?.unwrap_or(defaults.residual_tol),
            direct_max_cells: raw.value::<usize>("solver.direct_max_cells", "a non-negative integer")?.unwrap_or(defaults.direct_max_cells),
            form: raw.choice("solver.form", SchemeForm::parse, "`split` or `raw`")?.unwrap_or(defaults.form),
            flux: raw.choice("solver.flux", FluxQuadrature::parse, "`stream` or `gauss`")?.unwrap_or(defaults.flux),
        };
        options.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let samples = raw.value::<usize>("mc.M", "an integer >= 2")?.unwrap_or(1000);
        if samples < 2 {
            return Err(ConfigError::Value { key: "mc.M".into(), value: samples.to_string(), expected: "an integer >= 2".into() });
        }
        let functionals = match raw.get("mc.functionals") {
            Some(list) => list
                .split(',')
                .map(|s| {
                    Functional::parse(s.trim()).ok_or_else(|| ConfigError::Value {
                        key: "mc.functionals".into(),
                        value: s.trim().into(),
                        expected: format!("one of {}", Functional::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => Functional::ALL.to_vec(),
        };
        let stability = raw.value::<bool>("mc.stability", "`true` or `false`")?.unwrap_or(true);
        let energy_c = match raw.real("mc.energy_c")? {
            Some(c) if c < 0.0 => {
                return Err(ConfigError::Value {
                    key: "mc.energy_c".into(),
                    value: c.to_string(),
                    expected: "a non-negative number".into(),
                })
            }
            other => other,
        };

        let reference = raw.choice("study.reference", Reference::parse, "`inter-level` or `exact`")?.unwrap_or_default();
        let study = StudyConfig {
            levels: raw.count("study.levels")?.unwrap_or(3),
            policy: raw.choice("study.policy", LadderPolicy::parse, "`linear` or `quadratic`")?.unwrap_or_default(),
            reference,
            measure: raw
                .choice("study.measure", ErrorMeasure::parse, "`mean_square` or `rms`")?
                .unwrap_or(ErrorMeasure::default_for(reference)),
        };

        let config = Self {
            mesh,
            orthogonality_tol,
            steps,
            problem,
            lipschitz_range,
            options,
            seed: raw.value::<u64>("seed", "an unsigned 64-bit integer")?.unwrap_or(0),
            samples,
            functionals,
            stability,
            energy_c,
            study,
            defect_tol: raw.positive("validate.defect_tol")?.unwrap_or(1e-10),
            threads: raw.count("threads")?,
            output_dir: raw.get("output.dir").map(PathBuf::from),
        };
        config.check_contraction(steps)?;
        Ok(config)
    }

    pub fn dt(&self) -> f64 {
        self.problem.horizon / self.steps as f64
    }

    /// `Δt·L_β <= 1/8` at `steps` time steps.
    pub fn check_contraction(&self, steps: usize) -> Result<(), ConfigError> {
        let dt = self.problem.horizon / steps as f64;
        let lipschitz_beta = self.problem.constants.lipschitz_beta;
        let product = dt * lipschitz_beta;
        if product > MAX_CONTRACTION {
            return Err(ConfigError::Contraction { dt, lipschitz_beta, product });
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh, MeshError> {
        self.mesh.build(self.orthogonality_tol)
    }

    /// Every resolved setting except the thread count, in a fixed order.
    pub fn resolved(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        match &self.mesh {
            MeshSource::Uniform { nx, ny, rect } => {
                put("mesh.nx", nx.to_string());
                put("mesh.ny", ny.to_string());
                put("mesh.x0", rect.x0.to_string());
                put("mesh.y0", rect.y0.to_string());
                put("mesh.x1", rect.x1.to_string());
                put("mesh.y1", rect.y1.to_string());
            }
            MeshSource::File { given, .. } => put("mesh.file", given.clone()),
        }
        put("mesh.orthogonality_tol", self.orthogonality_tol.to_string());
        put("time.N", self.steps.to_string());
        put("time.T", self.problem.horizon.to_string());
        let p = &self.problem;
        for (key, name, params) in [
            ("problem.g", p.g.name(), p.g.params()),
            ("problem.beta", p.beta.name(), p.beta.params()),
            ("problem.v", p.velocity.name(), p.velocity.params()),
            ("problem.u0", p.u0.name(), p.u0.params()),
        ] {
            put(key, name.to_string());
            for (param, v) in params {
                put(&format!("{key}.{param}"), v.to_string());
            }
        }
        put("problem.L_g", p.constants.lipschitz_g.to_string());
        put("problem.L_beta", p.constants.lipschitz_beta.to_string());
        put("problem.C_Lg", p.constants.growth_g.to_string());
        put("problem.lipschitz_range", self.lipschitz_range.to_string());
        let o = &self.options;
        put("solver.tol", o.fixed_point_tol.to_string());
        put("solver.max_iters", o.max_iters.to_string());
        put("solver.linear_tol", o.linear_tol.to_string());
        put("solver.residual_tol", o.residual_tol.to_string());
        put("solver.direct_max_cells", o.direct_max_cells.to_string());
        put("solver.form", o.form.name().to_string());
        put("solver.flux", o.flux.name().to_string());
        put("mc.M", self.samples.to_string());
        put("mc.functionals", self.functionals.iter().map(|f| f.name()).collect::<Vec<_>>().join(","));
        put("mc.stability", self.stability.to_string());
        if let Some(c) = self.energy_c {
            put("mc.energy_c", c.to_string());
        }
        put("study.levels", self.study.levels.to_string());
        put("study.policy", self.study.policy.name().to_string());
        put("study.reference", self.study.reference.name().to_string());
        put("study.measure", self.study.measure.name().to_string());
        put("validate.defect_tol", self.defect_tol.to_string());
        put("seed", self.seed.to_string());
        out
    }
}
