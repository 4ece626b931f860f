use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PathError {
    #[error("a Brownian path needs at least one step")]
    NoSteps,
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("{coarse} does not divide the path resolution {fine}")]
    NotDivisor { fine: usize, coarse: usize },
}

/// A discretely sampled Brownian motion `W(t_0), …, W(t_N)` with `W(0) = 0`.
///
/// Values rather than increments are stored so that coarsening is plain
/// subsampling: `aggregate_to` along any divisor chain gives bit-identical
/// coarse paths, and every level sees the same `W(T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    seed: u64,
    index: u64,
    horizon: f64,
    values: Vec<f64>,
}

impl BrownianPath {
    /// Path `index` of the family keyed by `seed`: a ChaCha8 stream with
    /// `stream = index`, so any path can be regenerated on its own.
    pub fn generate(seed: u64, index: u64, steps: usize, horizon: f64) -> Result<Self, PathError> {
        check(steps, horizon)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let sd = (horizon / steps as f64).sqrt();
        let mut values = Vec::with_capacity(steps + 1);
        let mut w = 0.0;
        values.push(w);
        for _ in 0..steps {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += sd * z;
            values.push(w);
        }
        Ok(Self { seed, index, horizon, values })
    }

    /// A path with prescribed increments, accumulated left to right.
    pub fn from_increments(increments: &[f64], horizon: f64) -> Result<Self, PathError> {
        check(increments.len(), horizon)?;
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut w = 0.0;
        values.push(w);
        for dw in increments {
            w += dw;
            values.push(w);
        }
        Ok(Self { seed: 0, index: 0, horizon, values })
    }

    pub fn zero(steps: usize, horizon: f64) -> Result<Self, PathError> {
        Self::from_increments(&vec![0.0; steps], horizon)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// `W(t_n)` for `n = 0..=N`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `W(t_{n+1}) - W(t_n)`.
    #[inline]
    pub fn increment(&self, n: usize) -> f64 {
        self.values[n + 1] - self.values[n]
    }

    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// The same Brownian motion observed on `coarse` steps.
    pub fn aggregate_to(&self, coarse: usize) -> Result<Self, PathError> {
        let fine = self.steps();
        if coarse == 0 || !fine.is_multiple_of(coarse) {
            return Err(PathError::NotDivisor { fine, coarse });
        }
        let k = fine / coarse;
        Ok(Self { values: self.values.iter().step_by(k).copied().collect(), ..*self })
    }
}

fn check(steps: usize, horizon: f64) -> Result<(), PathError> {
    if steps == 0 {
        return Err(PathError::NoSteps);
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(PathError::Horizon(horizon));
    }
    Ok(())
}
