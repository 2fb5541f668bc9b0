//! Grid verification of the inequalities that make the chi-square test
//! conservative.
//!
//! The chain being checked: the integrand-level monotonicity in `lambda2`
//! reduces to the Legendre ratio bound
//! `P_{j-1}(x) / P_j(x) <= (j+1)/j (x - sqrt(x^2 - 1))` for `x > 1`, which is
//! proved by induction using `P_{j-1} <= P_j` and
//! `P_{j+1} / P_j >= x`. The induction target
//! `P_j / P_{j+1} <= (j+2)/(j+1) (x - sqrt(x^2 - 1))` is the same bound one
//! degree up and is checked on its own as well.
//!
//! Legendre quantities are handled through consecutive ratios so degrees
//! up to several hundred at `x = 1e3` stay in range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Result};
use crate::specfun::{legendre_ratios, legendre_sequence, upper_incomplete_gamma};
use crate::wishart::{g_central, Lambda2Distribution, NoncentralSpec};

/// Slack granted to non-strict inequalities, relative to the size of the
/// compared quantities (absolute below 1).
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative beyond slack means the inequality failed.
    pub margin: f64,
}

/// Outcome of one inequality check over a grid. `passed` holds exactly
/// when `violations` is empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub grid_description: String,
    pub violations: Vec<Violation>,
    /// Smallest `rhs - lhs` seen on the grid.
    pub worst_margin: f64,
    pub passed: bool,
}

/// A single `lhs <= rhs` (or `lhs < rhs` when strict) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
}

impl Comparison {
    pub fn le(point: Vec<f64>, lhs: f64, rhs: f64) -> Self {
        Self {
            point,
            lhs,
            rhs,
            strict: false,
        }
    }

    pub fn lt(point: Vec<f64>, lhs: f64, rhs: f64) -> Self {
        Self {
            point,
            lhs,
            rhs,
            strict: true,
        }
    }

    fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    fn holds(&self) -> bool {
        let m = self.margin();
        if m.is_nan() {
            return false;
        }
        if self.strict {
            m > 0.0
        } else {
            m >= -SLACK * self.lhs.abs().max(self.rhs.abs()).max(1.0)
        }
    }
}

impl VerificationReport {
    /// Assemble a report from comparisons given in grid order.
    pub fn from_comparisons(
        check_name: impl Into<String>,
        grid_description: impl Into<String>,
        comparisons: impl IntoIterator<Item = Comparison>,
    ) -> Self {
        let mut worst_margin = f64::INFINITY;
        let mut violations = Vec::new();
        for c in comparisons {
            let m = c.margin();
            worst_margin = worst_margin.min(if m.is_nan() { f64::NEG_INFINITY } else { m });
            if !c.holds() {
                violations.push(Violation {
                    margin: m,
                    point: c.point,
                    lhs: c.lhs,
                    rhs: c.rhs,
                });
            }
        }
        Self {
            check_name: check_name.into(),
            grid_description: grid_description.into(),
            passed: violations.is_empty(),
            violations,
            worst_margin,
        }
    }
}

/// All checks of one run, in execution order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<VerificationReport>,
    pub passed: bool,
}

impl SuiteReport {
    pub fn new(checks: Vec<VerificationReport>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { checks, passed }
    }
}

/// `x - sqrt(x^2 - 1)` written as `1 / (x + sqrt(x^2 - 1))`, which keeps
/// full relative accuracy for large `x`.
fn lower_root(x: f64) -> f64 {
    1.0 / (x + ((x - 1.0) * (x + 1.0)).sqrt())
}

/// `(j+1) / sqrt(j (j+2))`: below this point the induction step cannot
/// lean on the hypothesis and the ratio bound is used instead.
pub fn induction_threshold(j: usize) -> f64 {
    let j = j as f64;
    (j + 1.0) / (j * (j + 2.0)).sqrt()
}

fn describe(x_grid: &[f64], j_max: usize) -> String {
    let lo = x_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!(
        "j in [1, {j_max}] x {} points x in [{lo:e}, {hi:e}]; point = [j, x]",
        x_grid.len()
    )
}

fn require_grid(function: &'static str, x_grid: &[f64], strict: bool) -> Result<()> {
    let bad = x_grid
        .iter()
        .find(|&&x| !x.is_finite() || if strict { x <= 1.0 } else { x < 1.0 });
    match bad {
        Some(x) => Err(domain(function, format!("grid point {x} out of range"))),
        None => Ok(()),
    }
}

/// Per-x comparisons computed in parallel and flattened in grid order.
fn over_x_grid<F>(x_grid: &[f64], per_x: F) -> Result<Vec<Comparison>>
where
    F: Fn(f64) -> Result<Vec<Comparison>> + Sync,
{
    let chunks = x_grid
        .par_iter()
        .map(|&x| per_x(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// `P_{j-1}(x) / P_j(x) <= (j+1)/j (x - sqrt(x^2 - 1))` for `1 <= j <= j_max`.
pub fn check_key_inequality(j_max: usize, x_grid: &[f64]) -> Result<VerificationReport> {
    require_grid("check_key_inequality", x_grid, true)?;
    let comps = over_x_grid(x_grid, |x| {
        let ratios = legendre_ratios(x, j_max)?;
        let root = lower_root(x);
        Ok((1..=j_max)
            .map(|j| {
                let jf = j as f64;
                Comparison::le(vec![jf, x], 1.0 / ratios[j - 1], (jf + 1.0) / jf * root)
            })
            .collect())
    })?;
    Ok(VerificationReport::from_comparisons(
        "key_inequality",
        describe(x_grid, j_max),
        comps,
    ))
}

/// `P_j(x) / P_{j+1}(x) <= (j+2)/(j+1) (x - sqrt(x^2 - 1))`, the
/// induction target, for `1 <= j <= j_max`.
pub fn check_induction_target(j_max: usize, x_grid: &[f64]) -> Result<VerificationReport> {
    require_grid("check_induction_target", x_grid, true)?;
    let comps = over_x_grid(x_grid, |x| {
        let ratios = legendre_ratios(x, j_max + 1)?;
        let root = lower_root(x);
        Ok((1..=j_max)
            .map(|j| {
                let jf = j as f64;
                Comparison::le(vec![jf, x], 1.0 / ratios[j], (jf + 2.0) / (jf + 1.0) * root)
            })
            .collect())
    })?;
    Ok(VerificationReport::from_comparisons(
        "induction_target",
        describe(x_grid, j_max),
        comps,
    ))
}

/// `P_{j-1}(x) <= P_j(x)` for `x >= 1`, checked as `P_{j-1}/P_j <= 1`.
pub fn check_degree_monotonicity(j_max: usize, x_grid: &[f64]) -> Result<VerificationReport> {
    require_grid("check_degree_monotonicity", x_grid, false)?;
    let comps = over_x_grid(x_grid, |x| {
        let ratios = legendre_ratios(x, j_max)?;
        Ok((1..=j_max)
            .map(|j| Comparison::le(vec![j as f64, x], 1.0 / ratios[j - 1], 1.0))
            .collect())
    })?;
    Ok(VerificationReport::from_comparisons(
        "degree_monotonicity",
        describe(x_grid, j_max),
        comps,
    ))
}

/// `x <= P_{j+1}(x) / P_j(x)` for `1 <= j <= j_max`.
///
/// The direct argument needs this only for `1 < x < (j+1)/sqrt(j(j+2))`;
/// it is checked on the whole grid, which is stronger.
pub fn check_ratio_lower_bound(j_max: usize, x_grid: &[f64]) -> Result<VerificationReport> {
    require_grid("check_ratio_lower_bound", x_grid, false)?;
    let restricted = x_grid
        .iter()
        .map(|&x| {
            (1..=j_max)
                .filter(|&j| x > 1.0 && x < induction_threshold(j))
                .count()
        })
        .sum::<usize>();
    let comps = over_x_grid(x_grid, |x| {
        let ratios = legendre_ratios(x, j_max + 1)?;
        Ok((1..=j_max)
            .map(|j| Comparison::le(vec![j as f64, x], x, ratios[j]))
            .collect())
    })?;
    Ok(VerificationReport::from_comparisons(
        "ratio_lower_bound",
        format!(
            "{}; {restricted} (j, x) pairs fall below the induction threshold",
            describe(x_grid, j_max)
        ),
        comps,
    ))
}

/// Five-point central difference with the step kept inside `(0, inf)`.
fn derivative_5pt(f: impl Fn(f64) -> f64, z: f64) -> f64 {
    let h = (1e-3 * z.max(1.0)).min(z / 4.0);
    (-f(z + 2.0 * h) + 8.0 * f(z + h) - 8.0 * f(z - h) + f(z - 2.0 * h)) / (12.0 * h)
}

/// `d g_c / dz = -Gamma((p-1)/2, z)` at `z = lambda2 / 2` (equivalently
/// `d g_c / d lambda2 = -Gamma((p-1)/2, lambda2/2) / 2`), within `1e-5`
/// scaled by `max(1, |Gamma|)`, and `g_c` strictly decreasing along the
/// grid.
pub fn check_gc_derivative(p_list: &[usize], lambda_grid: &[f64]) -> Result<VerificationReport> {
    if let Some(l) = lambda_grid.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(domain(
            "check_gc_derivative",
            format!("grid point {l} must be > 0"),
        ));
    }
    let per_p = p_list
        .par_iter()
        .map(|&p| -> Result<Vec<Comparison>> {
            let a = (p as f64 - 1.0) / 2.0;
            let g_of_z = |z: f64| g_central(p, 2.0 * z).unwrap_or(f64::NAN);
            let mut out = Vec::with_capacity(2 * lambda_grid.len());
            let mut prev: Option<(f64, f64)> = None;
            for &l in lambda_grid {
                let z = l / 2.0;
                let fd = derivative_5pt(g_of_z, z);
                let exact = -upper_incomplete_gamma(a, z)?;
                let tol = 1e-5 * exact.abs().max(1.0);
                // |fd - exact| <= tol, phrased as lhs <= rhs.
                out.push(Comparison::le(vec![p as f64, l], (fd - exact).abs(), tol));
                let g = g_central(p, l)?;
                if let Some((pl, pg)) = prev {
                    out.push(Comparison::lt(vec![p as f64, pl, l], g, pg));
                }
                prev = Some((l, g));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport::from_comparisons(
        "gc_derivative",
        format!(
            "p in {p_list:?} x {} lambda2 points; point = [p, lambda2] for the derivative \
             identity, [p, lambda2_prev, lambda2] for strict decrease",
            lambda_grid.len()
        ),
        per_p.into_iter().flatten(),
    ))
}

/// The likelihood ratio of `lambda2(S)` against `chi2_{p-1}` is
/// non-increasing between consecutive grid points.
pub fn check_mlr_noncentral(
    spec: &NoncentralSpec,
    lambda_grid: &[f64],
) -> Result<VerificationReport> {
    check_mlr_with(&Lambda2Distribution::new(*spec), lambda_grid)
}

pub fn check_mlr_with(
    dist: &Lambda2Distribution,
    lambda_grid: &[f64],
) -> Result<VerificationReport> {
    if let Some(l) = lambda_grid.iter().find(|&&l| !(l > 0.0) || !l.is_finite()) {
        return Err(domain(
            "check_mlr_noncentral",
            format!("grid point {l} must be > 0"),
        ));
    }
    let ratios = lambda_grid
        .par_iter()
        .map(|&l| dist.likelihood_ratio_unnorm(l))
        .collect::<Result<Vec<_>>>()?;
    // Normalize by the first value so the slack is relative.
    let scale = ratios.first().copied().unwrap_or(1.0);
    let comps = lambda_grid
        .windows(2)
        .zip(ratios.windows(2))
        .map(|(l, r)| Comparison::le(vec![l[0], l[1]], r[1] / scale, r[0] / scale));
    Ok(VerificationReport::from_comparisons(
        format!(
            "mlr_noncentral(p={}, kappa={})",
            dist.spec.p, dist.spec.kappa
        ),
        format!(
            "{} lambda2 points in [{:e}, {:e}]; point = [lambda2_prev, lambda2]; \
             ratios scaled by their value at the first point",
            lambda_grid.len(),
            lambda_grid.first().copied().unwrap_or(f64::NAN),
            lambda_grid.last().copied().unwrap_or(f64::NAN),
        ),
        comps,
    ))
}

/// `d/d lambda2 [(lambda1 - lambda2) lambda2^(j/2) P_j(x)] <= 0`, with
/// `x = (lambda1 + lambda2) / (2 sqrt(lambda1 lambda2))`, by central
/// differences at random `lambda1 > lambda2 > 0` and `0 <= j <= j_max`.
pub fn check_integrand_monotonicity(
    samples: usize,
    j_max: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let h_of = |l1: f64, l2: f64, j: usize| -> Result<f64> {
        let x = (l1 + l2) / (2.0 * (l1 * l2).sqrt());
        let pj = legendre_sequence(x.max(1.0), j)?[j].value;
        Ok((l1 - l2) * l2.powf(j as f64 / 2.0) * pj)
    };
    let comps = (0..samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Comparison> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let l1: f64 = rng.random_range(0.05..50.0);
            let l2: f64 = l1 * rng.random_range(0.02..0.98);
            let j = rng.random_range(0..=j_max);
            let step = 1e-6 * l2;
            let d = (h_of(l1, l2 + step, j)? - h_of(l1, l2 - step, j)?) / (2.0 * step);
            // Scale for roundoff in the difference quotient.
            let scale = h_of(l1, l2, j)?.abs() / l2;
            Ok(Comparison::le(
                vec![l1, l2, j as f64],
                d / scale.max(f64::MIN_POSITIVE),
                0.0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VerificationReport::from_comparisons(
        "integrand_monotonicity",
        format!(
            "{samples} random (lambda1, lambda2, j) with lambda1 in [0.05, 50), \
             lambda2/lambda1 in [0.02, 0.98), j in [0, {j_max}]; derivative scaled by \
             |h|/lambda2; point = [lambda1, lambda2, j]"
        ),
        comps,
    ))
}

/// 2000 points with `x - 1` log-spaced on `[1e-8, 999]`, plus each
/// induction threshold `(j+1)/sqrt(j(j+2))`, `j <= j_max`, and its two
/// neighbours at relative distance `1e-9`.
pub fn default_x_grid(j_max: usize) -> Vec<f64> {
    let n = 2000;
    let (lo, hi) = (-8.0_f64, 999.0_f64.log10());
    let mut grid: Vec<f64> = (0..n)
        .map(|i| 1.0 + 10f64.powf(lo + (hi - lo) * i as f64 / (n - 1) as f64))
        .collect();
    for j in 1..=j_max {
        let t = induction_threshold(j);
        grid.extend([t * (1.0 - 1e-9), t, t * (1.0 + 1e-9)]);
    }
    grid.retain(|&x| x > 1.0);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// 500 points from `1e-6` to `60`, evenly spaced.
pub fn default_lambda_grid() -> Vec<f64> {
    let (n, lo, hi) = (500, 1e-6, 60.0);
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// `(p, kappa)` pairs checked for the monotone likelihood ratio.
pub const MLR_SPECS: [(usize, f64); 9] = [
    (2, 0.0),
    (2, 5.0),
    (2, 20.0),
    (5, 0.0),
    (5, 5.0),
    (5, 20.0),
    (10, 0.0),
    (10, 5.0),
    (10, 20.0),
];

/// Every check on its default grid.
pub fn run_all(j_max: usize) -> Result<SuiteReport> {
    let x_grid = default_x_grid(j_max);
    let lambda_grid = default_lambda_grid();
    let p_list: Vec<usize> = (2..=20).collect();
    let mut checks = vec![
        check_key_inequality(j_max, &x_grid)?,
        check_induction_target(j_max, &x_grid)?,
        check_degree_monotonicity(j_max, &x_grid)?,
        check_ratio_lower_bound(j_max, &x_grid)?,
        check_gc_derivative(&p_list, &lambda_grid)?,
        check_integrand_monotonicity(10_000, j_max.min(60), 0x5eed)?,
    ];
    for (p, kappa) in MLR_SPECS {
        checks.push(check_mlr_noncentral(
            &NoncentralSpec::new(p, kappa)?,
            &lambda_grid,
        )?);
    }
    Ok(SuiteReport::new(checks))
}
