//! Reproducible null-model simulation of the test statistic.
//!
//! Replicate `i` draws from its own ChaCha8 stream, keyed by
//! `(seed, i)`, so results do not depend on how replicates are scheduled
//! across threads. Aggregation is by counting and sorting, both order
//! independent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::lrt::{eigen2, GramMatrix};
use crate::specfun::chi2_quantile;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub p: usize,
    pub kappa: f64,
    pub reps: usize,
    pub seed: u64,
    /// Ascending significance levels in `(0, 1)`.
    pub alphas: Vec<f64>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(domain(
                "SimulationConfig",
                format!("p = {} must be >= 2", self.p),
            ));
        }
        if !(self.kappa >= 0.0) || !self.kappa.is_finite() {
            return Err(domain(
                "SimulationConfig",
                format!("kappa = {} must be >= 0", self.kappa),
            ));
        }
        if self.reps == 0 {
            return Err(domain("SimulationConfig", "reps must be >= 1"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(domain("SimulationConfig", "every alpha must lie in (0, 1)"));
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(domain(
                "SimulationConfig",
                "alphas must be strictly ascending",
            ));
        }
        Ok(())
    }
}

/// The random stream of replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A point of the null hypothesis: `X ~ N(mu1, I)`, `Y ~ N(beta mu1, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullModel {
    pub mu1: Vec<f64>,
    pub beta: f64,
}

impl NullModel {
    /// `beta = 0`, `mu1 = sqrt(kappa) e_1`: the representative used for
    /// every `(beta, mu1)` sharing the same `kappa`.
    pub fn canonical(p: usize, kappa: f64) -> Self {
        let mut mu1 = vec![0.0; p];
        mu1[0] = kappa.sqrt();
        Self { mu1, beta: 0.0 }
    }

    pub fn kappa(&self) -> f64 {
        (1.0 + self.beta * self.beta) * self.mu1.iter().map(|m| m * m).sum::<f64>()
    }

    /// One draw of `lambda2(S)`.
    pub fn sample_statistic<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &m in &self.mu1 {
            let x = m + rng.sample::<f64, _>(StandardNormal);
            let y = self.beta * m + rng.sample::<f64, _>(StandardNormal);
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        eigen2(&GramMatrix { sxx, sxy, syy }).lambda2
    }
}

/// One draw of the statistic under the canonical null model.
pub fn sample_statistic<R: Rng + ?Sized>(p: usize, kappa: f64, rng: &mut R) -> f64 {
    NullModel::canonical(p, kappa).sample_statistic(rng)
}

/// `reps` draws under `model`, in replicate order.
pub fn simulate_model(model: &NullModel, reps: usize, seed: u64) -> Vec<f64> {
    (0..reps as u64)
        .into_par_iter()
        .map(|i| model.sample_statistic(&mut replicate_rng(seed, i)))
        .collect()
}

/// Draws of the statistic for a configuration, in replicate order.
pub fn simulate_statistics(config: &SimulationConfig) -> Result<Vec<f64>> {
    config.validate()?;
    Ok(simulate_model(
        &NullModel::canonical(config.p, config.kappa),
        config.reps,
        config.seed,
    ))
}

/// One `(p, kappa, alpha)` cell of a size table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizeRow {
    pub p: usize,
    pub kappa: f64,
    pub alpha: f64,
    pub reps: usize,
    pub rejections: usize,
    /// `rejections / reps`.
    pub size: f64,
    /// `sqrt(size (1 - size) / reps)`.
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SizeTable {
    pub rows: Vec<SizeRow>,
}

impl SizeTable {
    pub fn get(&self, p: usize, kappa: f64, alpha: f64) -> Option<&SizeRow> {
        self.rows
            .iter()
            .find(|r| r.p == p && r.kappa == kappa && r.alpha == alpha)
    }

    pub fn extend(&mut self, other: SizeTable) {
        self.rows.extend(other.rows);
    }
}

/// Simulated rejection rate of the `chi2_{p-1}` test at each alpha.
pub fn simulate_sizes(config: &SimulationConfig) -> Result<SizeTable> {
    let stats = simulate_statistics(config)?;
    let df = (config.p - 1) as f64;
    let rows = config
        .alphas
        .iter()
        .map(|&alpha| {
            let critical = chi2_quantile(df, 1.0 - alpha)?;
            let rejections = stats.iter().filter(|&&s| s > critical).count();
            let size = rejections as f64 / config.reps as f64;
            Ok(SizeRow {
                p: config.p,
                kappa: config.kappa,
                alpha,
                reps: config.reps,
                rejections,
                size,
                mc_stderr: (size * (1.0 - size) / config.reps as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SizeTable { rows })
}

/// Empirical distribution function of simulated statistics, optionally
/// tabulated on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Self {
        samples.sort_by(f64::total_cmp);
        Self {
            sorted: samples,
            grid: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        self.sorted.partition_point(|&s| s <= x) as f64 / self.sorted.len() as f64
    }

    pub fn tabulate(mut self, grid: &[f64]) -> Self {
        self.values = grid.iter().map(|&x| self.eval(x)).collect();
        self.grid = grid.to_vec();
        self
    }

    /// `sup_x |F_n(x) - F(x)|` over the jump points of `F_n`.
    pub fn ks_distance(&self, cdf: impl Fn(f64) -> f64) -> f64 {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Empirical CDF of the statistic on a sorted grid.
pub fn simulate_cdf(config: &SimulationConfig, grid: &[f64]) -> Result<EmpiricalCdf> {
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(domain("simulate_cdf", "grid must be sorted ascending"));
    }
    Ok(EmpiricalCdf::new(simulate_statistics(config)?).tabulate(grid))
}

/// Half-width of the Dvoretzky-Kiefer-Wolfowitz band holding with
/// probability `confidence` for `n` samples.
pub fn dkw_epsilon(n: usize, confidence: f64) -> f64 {
    ((2.0 / (1.0 - confidence)).ln() / (2.0 * n as f64)).sqrt()
}
