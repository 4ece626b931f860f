//! Problem data: the noise coefficient `g`, the reaction term `β`, the
//! convection field `v`, the initial datum `u0` and the horizon `T`.
//!
//! Coefficients are picked from a small registry of closed-form families so
//! that a problem can be written down declaratively in a config file.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};

use crate::geometry::{Point2, Rect};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },
    #[error("{kind} `{name}`: missing parameter `{param}`")]
    MissingParameter { kind: &'static str, name: String, param: String },
    #[error("{kind} `{name}`: unknown parameter `{param}`")]
    UnknownParameter { kind: &'static str, name: String, param: String },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("beta(0) = {0}, but beta must vanish at the origin")]
    BetaNotZero(f64),
    #[error("{which} violates its declared Lipschitz constant {declared}: |f({a}) - f({b})| / |{a} - {b}| = {ratio}")]
    Lipschitz { which: &'static str, declared: f64, a: f64, b: f64, ratio: f64 },
    #[error("g violates the growth bound g(r)² <= {declared}(1 + r²) at r = {r} (g(r)² = {value})")]
    Growth { declared: f64, r: f64, value: f64 },
}

/// Parameters of a registry entry, keyed by name.
pub type Params = BTreeMap<String, f64>;

struct ParamReader<'a> {
    kind: &'static str,
    name: &'a str,
    params: &'a Params,
    used: Vec<&'static str>,
}

impl<'a> ParamReader<'a> {
    fn new(kind: &'static str, name: &'a str, params: &'a Params) -> Self {
        Self { kind, name, params, used: Vec::new() }
    }

    fn req(&mut self, key: &'static str) -> Result<f64, ProblemError> {
        self.used.push(key);
        let v = self.params.get(key).copied().ok_or_else(|| ProblemError::MissingParameter {
            kind: self.kind,
            name: self.name.to_string(),
            param: key.to_string(),
        })?;
        finite(key, v)
    }

    fn opt(&mut self, key: &'static str, default: f64) -> Result<f64, ProblemError> {
        self.used.push(key);
        match self.params.get(key) {
            Some(&v) => finite(key, v),
            None => Ok(default),
        }
    }

    fn finish(self) -> Result<(), ProblemError> {
        if let Some(k) = self.params.keys().find(|k| !self.used.contains(&k.as_str())) {
            return Err(ProblemError::UnknownParameter { kind: self.kind, name: self.name.to_string(), param: k.clone() });
        }
        Ok(())
    }
}

fn finite(key: &str, v: f64) -> Result<f64, ProblemError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ProblemError::Invalid(format!("parameter `{key}` must be finite, got {v}")))
    }
}

/// Scalar nonlinearities used for `g` and `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFn {
    Zero,
    Identity,
    /// `λ r`
    Linear {
        lambda: f64,
    },
    /// `slope · r + offset`
    Affine {
        slope: f64,
        offset: f64,
    },
    Constant {
        value: f64,
    },
    /// `a sin(k r)`
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// `λ clamp(r, -b, b)`
    Clipped {
        lambda: f64,
        bound: f64,
    },
}

impl ScalarFn {
    pub const NAMES: [&'static str; 7] = ["zero", "identity", "linear", "affine", "constant", "sine", "clipped"];

    pub fn from_registry(name: &str, params: &Params) -> Result<Self, ProblemError> {
        let mut p = ParamReader::new("scalar function", name, params);
        let f = match name {
            "zero" => ScalarFn::Zero,
            "identity" => ScalarFn::Identity,
            "linear" => ScalarFn::Linear { lambda: p.req("lambda")? },
            "affine" => ScalarFn::Affine { slope: p.req("slope")?, offset: p.req("offset")? },
            "constant" => ScalarFn::Constant { value: p.req("value")? },
            "sine" => ScalarFn::Sine { amplitude: p.req("amplitude")?, frequency: p.req("frequency")? },
            "clipped" => {
                let bound = p.req("bound")?;
                if !(bound >= 0.0) {
                    return Err(ProblemError::Invalid(format!("clipped: bound must be >= 0, got {bound}")));
                }
                ScalarFn::Clipped { lambda: p.req("lambda")?, bound }
            }
            other => return Err(ProblemError::UnknownName { kind: "scalar function", name: other.to_string() }),
        };
        p.finish()?;
        Ok(f)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScalarFn::Zero => "zero",
            ScalarFn::Identity => "identity",
            ScalarFn::Linear { .. } => "linear",
            ScalarFn::Affine { .. } => "affine",
            ScalarFn::Constant { .. } => "constant",
            ScalarFn::Sine { .. } => "sine",
            ScalarFn::Clipped { .. } => "clipped",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            ScalarFn::Zero | ScalarFn::Identity => vec![],
            ScalarFn::Linear { lambda } => vec![("lambda", lambda)],
            ScalarFn::Affine { slope, offset } => vec![("offset", offset), ("slope", slope)],
            ScalarFn::Constant { value } => vec![("value", value)],
            ScalarFn::Sine { amplitude, frequency } => vec![("amplitude", amplitude), ("frequency", frequency)],
            ScalarFn::Clipped { lambda, bound } => vec![("bound", bound), ("lambda", lambda)],
        }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Identity => r,
            ScalarFn::Linear { lambda } => lambda * r,
            ScalarFn::Affine { slope, offset } => slope * r + offset,
            ScalarFn::Constant { value } => value,
            ScalarFn::Sine { amplitude, frequency } => amplitude * (frequency * r).sin(),
            ScalarFn::Clipped { lambda, bound } => lambda * r.clamp(-bound, bound),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            ScalarFn::Zero => true,
            ScalarFn::Linear { lambda } | ScalarFn::Clipped { lambda, .. } => lambda == 0.0,
            ScalarFn::Affine { slope, offset } => slope == 0.0 && offset == 0.0,
            ScalarFn::Constant { value } => value == 0.0,
            ScalarFn::Sine { amplitude, frequency } => amplitude == 0.0 || frequency == 0.0,
            ScalarFn::Identity => false,
        }
    }

    /// Smallest Lipschitz constant of the closed form.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            ScalarFn::Zero | ScalarFn::Constant { .. } => 0.0,
            ScalarFn::Identity => 1.0,
            ScalarFn::Linear { lambda } | ScalarFn::Clipped { lambda, .. } => lambda.abs(),
            ScalarFn::Affine { slope, .. } => slope.abs(),
            ScalarFn::Sine { amplitude, frequency } => (amplitude * frequency).abs(),
        }
    }

    /// A constant `C` with `f(r)² <= C (1 + r²)` for all `r`.
    pub fn growth_constant(&self) -> f64 {
        match *self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Identity => 1.0,
            ScalarFn::Linear { lambda } | ScalarFn::Clipped { lambda, .. } => lambda * lambda,
            // (|b| + |a||r|)² <= (a² + b²)(1 + r²)
            ScalarFn::Affine { slope, offset } => slope * slope + offset * offset,
            ScalarFn::Constant { value } => value * value,
            ScalarFn::Sine { amplitude, .. } => amplitude * amplitude,
        }
    }
}

/// Divergence-free convection fields, each given through a stream function
/// `ψ` with `v = (∂ψ/∂y, -∂ψ/∂x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityField {
    Zero,
    Constant {
        vx: f64,
        vy: f64,
    },
    /// `ω (-(y - cy), x - cx)`
    Rotation {
        omega: f64,
        cx: f64,
        cy: f64,
    },
    /// A single convection roll filling `rect`, tangent to its boundary:
    /// `ψ = (a/π) sin(πξ) sin(πη)` with `ξ, η` the rectangle-relative coordinates.
    Cellular {
        amplitude: f64,
        rect: Rect,
    },
}

impl VelocityField {
    pub fn eval(&self, p: Point2) -> Point2 {
        match *self {
            VelocityField::Zero => Point2::default(),
            VelocityField::Constant { vx, vy } => Point2::new(vx, vy),
            VelocityField::Rotation { omega, cx, cy } => Point2::new(-omega * (p.y - cy), omega * (p.x - cx)),
            VelocityField::Cellular { amplitude, rect } => {
                let (lx, ly) = (rect.width(), rect.height());
                let xi = PI * (p.x - rect.x0) / lx;
                let eta = PI * (p.y - rect.y0) / ly;
                Point2::new(amplitude / ly * xi.sin() * eta.cos(), -amplitude / lx * xi.cos() * eta.sin())
            }
        }
    }

    pub fn stream(&self, p: Point2) -> f64 {
        match *self {
            VelocityField::Zero => 0.0,
            VelocityField::Constant { vx, vy } => vx * p.y - vy * p.x,
            VelocityField::Rotation { omega, cx, cy } => {
                let (dx, dy) = (p.x - cx, p.y - cy);
                -0.5 * omega * (dx * dx + dy * dy)
            }
            VelocityField::Cellular { amplitude, rect } => {
                let xi = PI * (p.x - rect.x0) / rect.width();
                let eta = PI * (p.y - rect.y0) / rect.height();
                amplitude / PI * xi.sin() * eta.sin()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            VelocityField::Zero => true,
            VelocityField::Constant { vx, vy } => vx == 0.0 && vy == 0.0,
            VelocityField::Rotation { omega, .. } => omega == 0.0,
            VelocityField::Cellular { amplitude, .. } => amplitude == 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VelocityField::Zero => "zero",
            VelocityField::Constant { .. } => "constant",
            VelocityField::Rotation { .. } => "rotation",
            VelocityField::Cellular { .. } => "cellular",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            VelocityField::Zero => vec![],
            VelocityField::Constant { vx, vy } => vec![("vx", vx), ("vy", vy)],
            VelocityField::Rotation { omega, cx, cy } => vec![("cx", cx), ("cy", cy), ("omega", omega)],
            VelocityField::Cellular { amplitude, rect } => {
                vec![("amplitude", amplitude), ("x0", rect.x0), ("x1", rect.x1), ("y0", rect.y0), ("y1", rect.y1)]
            }
        }
    }
}

/// `v(t, x) = (1 + s·t) v0(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Velocity {
    pub field: VelocityField,
    pub time_slope: f64,
}

impl Velocity {
    pub const NAMES: [&'static str; 4] = ["zero", "constant", "rotation", "cellular"];

    pub fn zero() -> Self {
        Self { field: VelocityField::Zero, time_slope: 0.0 }
    }

    pub fn steady(field: VelocityField) -> Self {
        Self { field, time_slope: 0.0 }
    }

    /// `time_slope` is read from the same parameter map.
    pub fn from_registry(name: &str, params: &Params) -> Result<Self, ProblemError> {
        let mut p = ParamReader::new("velocity field", name, params);
        let time_slope = p.opt("time_slope", 0.0)?;
        let field = match name {
            "zero" => VelocityField::Zero,
            "constant" => VelocityField::Constant { vx: p.req("vx")?, vy: p.req("vy")? },
            "rotation" => VelocityField::Rotation { omega: p.req("omega")?, cx: p.opt("cx", 0.5)?, cy: p.opt("cy", 0.5)? },
            "cellular" => {
                let rect = Rect::new(p.opt("x0", 0.0)?, p.opt("y0", 0.0)?, p.opt("x1", 1.0)?, p.opt("y1", 1.0)?);
                if rect.is_degenerate() {
                    return Err(ProblemError::Invalid(format!("cellular: degenerate rectangle {rect:?}")));
                }
                VelocityField::Cellular { amplitude: p.req("amplitude")?, rect }
            }
            other => return Err(ProblemError::UnknownName { kind: "velocity field", name: other.to_string() }),
        };
        p.finish()?;
        Ok(Self { field, time_slope })
    }

    pub fn name(&self) -> &'static str {
        self.field.name()
    }

    /// Field parameters, plus `time_slope` when it is nonzero.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        let mut p = self.field.params();
        if self.time_slope != 0.0 {
            p.push(("time_slope", self.time_slope));
        }
        p
    }

    #[inline]
    pub fn time_factor(&self, t: f64) -> f64 {
        1.0 + self.time_slope * t
    }

    pub fn eval(&self, t: f64, p: Point2) -> Point2 {
        self.field.eval(p) * self.time_factor(t)
    }

    pub fn stream(&self, t: f64, p: Point2) -> f64 {
        self.time_factor(t) * self.field.stream(p)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_slope != 0.0 && !self.field.is_zero()
    }

    pub fn is_zero(&self) -> bool {
        self.field.is_zero()
    }

    /// Sampled `(‖v‖_∞, ‖∂_t v‖_∞)` over `rect × [0, horizon]` on a 65×65 grid.
    pub fn sampled_sup_norms(&self, rect: &Rect, horizon: f64) -> (f64, f64) {
        let n = 64;
        let mut sup: f64 = 0.0;
        for i in 0..=n {
            for j in 0..=n {
                let p = Point2::new(rect.x0 + rect.width() * i as f64 / n as f64, rect.y0 + rect.height() * j as f64 / n as f64);
                sup = sup.max(self.field.eval(p).norm());
            }
        }
        let factor = self.time_factor(0.0).abs().max(self.time_factor(horizon).abs());
        (sup * factor, sup * self.time_slope.abs())
    }
}

/// Initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Zero,
    Constant {
        value: f64,
    },
    /// `c0 + cx x + cy y`
    Affine {
        c0: f64,
        cx: f64,
        cy: f64,
    },
    /// `offset + a cos(kx π x) cos(ky π y)`
    Cosine {
        offset: f64,
        amplitude: f64,
        kx: f64,
        ky: f64,
    },
    /// `a exp(-|x - x0|² / (2 w²))`
    Gaussian {
        amplitude: f64,
        x0: f64,
        y0: f64,
        width: f64,
    },
}

impl InitialCondition {
    pub const NAMES: [&'static str; 5] = ["zero", "constant", "affine", "cosine", "gaussian"];

    pub fn from_registry(name: &str, params: &Params) -> Result<Self, ProblemError> {
        let mut p = ParamReader::new("initial condition", name, params);
        let u0 = match name {
            "zero" => InitialCondition::Zero,
            "constant" => InitialCondition::Constant { value: p.req("value")? },
            "affine" => InitialCondition::Affine { c0: p.opt("c0", 0.0)?, cx: p.opt("cx", 0.0)?, cy: p.opt("cy", 0.0)? },
            "cosine" => InitialCondition::Cosine {
                offset: p.opt("offset", 0.0)?,
                amplitude: p.opt("amplitude", 1.0)?,
                kx: p.opt("kx", 1.0)?,
                ky: p.opt("ky", 1.0)?,
            },
            "gaussian" => {
                let width = p.req("width")?;
                if !(width > 0.0) {
                    return Err(ProblemError::Invalid(format!("gaussian: width must be positive, got {width}")));
                }
                InitialCondition::Gaussian { amplitude: p.opt("amplitude", 1.0)?, x0: p.req("x0")?, y0: p.req("y0")?, width }
            }
            other => return Err(ProblemError::UnknownName { kind: "initial condition", name: other.to_string() }),
        };
        p.finish()?;
        Ok(u0)
    }

    pub fn eval(&self, p: Point2) -> f64 {
        match *self {
            InitialCondition::Zero => 0.0,
            InitialCondition::Constant { value } => value,
            InitialCondition::Affine { c0, cx, cy } => c0 + cx * p.x + cy * p.y,
            InitialCondition::Cosine { offset, amplitude, kx, ky } => offset + amplitude * (kx * PI * p.x).cos() * (ky * PI * p.y).cos(),
            InitialCondition::Gaussian { amplitude, x0, y0, width } => {
                let r2 = (p.x - x0).powi(2) + (p.y - y0).powi(2);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::Zero => "zero",
            InitialCondition::Constant { .. } => "constant",
            InitialCondition::Affine { .. } => "affine",
            InitialCondition::Cosine { .. } => "cosine",
            InitialCondition::Gaussian { .. } => "gaussian",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            InitialCondition::Zero => vec![],
            InitialCondition::Constant { value } => vec![("value", value)],
            InitialCondition::Affine { c0, cx, cy } => vec![("c0", c0), ("cx", cx), ("cy", cy)],
            InitialCondition::Cosine { offset, amplitude, kx, ky } => {
                vec![("amplitude", amplitude), ("kx", kx), ("ky", ky), ("offset", offset)]
            }
            InitialCondition::Gaussian { amplitude, x0, y0, width } => {
                vec![("amplitude", amplitude), ("width", width), ("x0", x0), ("y0", y0)]
            }
        }
    }
}

/// Declared constants of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    /// `L_g`
    pub lipschitz_g: f64,
    /// `L_β`
    pub lipschitz_beta: f64,
    /// `C_{L_g}` with `g(r)² <= C_{L_g}(1 + r²)`
    pub growth_g: f64,
}

/// A fully specified problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub g: ScalarFn,
    pub beta: ScalarFn,
    pub velocity: Velocity,
    pub u0: InitialCondition,
    pub horizon: f64,
    pub constants: Constants,
}

/// Outcome of the sampled coefficient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientReport {
    pub samples: usize,
    pub range: f64,
    pub max_ratio_g: f64,
    pub max_ratio_beta: f64,
    pub max_growth_ratio_g: f64,
}

impl ProblemSpec {
    /// Uses the closed-form constants of the registry entries.
    pub fn new(g: ScalarFn, beta: ScalarFn, velocity: Velocity, u0: InitialCondition, horizon: f64) -> Result<Self, ProblemError> {
        let constants = Constants { lipschitz_g: g.lipschitz(), lipschitz_beta: beta.lipschitz(), growth_g: g.growth_constant() };
        Self::with_constants(g, beta, velocity, u0, horizon, constants)
    }

    pub fn with_constants(
        g: ScalarFn,
        beta: ScalarFn,
        velocity: Velocity,
        u0: InitialCondition,
        horizon: f64,
        constants: Constants,
    ) -> Result<Self, ProblemError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(ProblemError::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        for (name, v) in [("L_g", constants.lipschitz_g), ("L_beta", constants.lipschitz_beta), ("C_Lg", constants.growth_g)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(ProblemError::Invalid(format!("{name} must be a non-negative number, got {v}")));
            }
        }
        let b0 = beta.eval(0.0);
        if b0 != 0.0 {
            return Err(ProblemError::BetaNotZero(b0));
        }
        Ok(Self { g, beta, velocity, u0, horizon, constants })
    }

    /// Checks the declared constants on `samples` random pairs in `[-range, range]`.
    pub fn check_coefficients(&self, range: f64, samples: usize, seed: u64) -> Result<CoefficientReport, ProblemError> {
        if !(range > 0.0) {
            return Err(ProblemError::Invalid(format!("sampling range must be positive, got {range}")));
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let slack = |declared: f64| declared * (1.0 + 1e-12) + 1e-15;
        let mut report = CoefficientReport { samples, range, max_ratio_g: 0.0, max_ratio_beta: 0.0, max_growth_ratio_g: 0.0 };
        for _ in 0..samples {
            let a: f64 = rng.random_range(-range..=range);
            let b: f64 = rng.random_range(-range..=range);
            if a == b {
                continue;
            }
            for (which, f, declared, slot) in [
                ("g", &self.g, self.constants.lipschitz_g, &mut report.max_ratio_g),
                ("beta", &self.beta, self.constants.lipschitz_beta, &mut report.max_ratio_beta),
            ] {
                let ratio = (f.eval(a) - f.eval(b)).abs() / (a - b).abs();
                *slot = slot.max(ratio);
                if ratio > slack(declared) {
                    return Err(ProblemError::Lipschitz { which, declared, a, b, ratio });
                }
            }
            for r in [a, b] {
                let value = self.g.eval(r).powi(2);
                let ratio = value / (1.0 + r * r);
                report.max_growth_ratio_g = report.max_growth_ratio_g.max(ratio);
                if ratio > slack(self.constants.growth_g) {
                    return Err(ProblemError::Growth { declared: self.constants.growth_g, r, value });
                }
            }
        }
        Ok(report)
    }
}
