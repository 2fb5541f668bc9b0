//! Eigenvalue distribution of the 2x2 Wishart matrix `S = (X Y)^T (X Y)`
//! with `p` degrees of freedom, identity scale and rank-one noncentrality
//! `kappa`.
//!
//! The unnormalized joint density of the ordered eigenvalues
//! `lambda1 > lambda2 > 0` is
//!
//! ```text
//! 0F1(p/2; diag(kappa/4, 0), diag(lambda1, lambda2))
//!     * exp(-(lambda1 + lambda2)/2) * (lambda1 lambda2)^((p-3)/2) * (lambda1 - lambda2)
//! ```
//!
//! where the two-matrix-argument `0F1` reduces to the Legendre series
//! `sum_j (kappa/4)^j (lambda1 lambda2)^(j/2) P_j(x) / ((p/2)_j j!)`,
//! `x = (lambda1 + lambda2) / (2 sqrt(lambda1 lambda2))`.
//!
//! Normalizing constants are obtained by quadrature and cached per
//! distribution; nothing is transcribed from tables.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::specfun::upper_incomplete_gamma;

/// Dimension `p` and noncentrality `kappa = (1 + beta^2) |mu1|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralSpec {
    pub p: usize,
    pub kappa: f64,
}

impl NoncentralSpec {
    pub fn new(p: usize, kappa: f64) -> Result<Self> {
        if p < 2 {
            return Err(domain("NoncentralSpec", format!("p = {p} must be >= 2")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(domain(
                "NoncentralSpec",
                format!("kappa = {kappa} must be finite and >= 0"),
            ));
        }
        Ok(Self { p, kappa })
    }

    pub fn central(p: usize) -> Result<Self> {
        Self::new(p, 0.0)
    }

    pub fn is_central(&self) -> bool {
        self.kappa == 0.0
    }

    /// `(p - 3) / 2`, the exponent of `lambda1 lambda2` in the density.
    fn power(&self) -> f64 {
        (self.p as f64 - 3.0) / 2.0
    }
}

/// Truncation rule for the Legendre series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    /// Stop after three consecutive terms below `rel_tol` times the
    /// partial sum.
    pub rel_tol: f64,
    pub j_max: usize,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            j_max: 500,
        }
    }
}

impl SeriesControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-6) {
            return Err(domain(
                "SeriesControl",
                format!("rel_tol = {} must lie in (0, 1e-6]", self.rel_tol),
            ));
        }
        if self.j_max < 10 {
            return Err(domain(
                "SeriesControl",
                format!("j_max = {} < 10", self.j_max),
            ));
        }
        Ok(())
    }
}

/// Accuracy targets for the eigenvalue integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureControl {
    /// Absolute accuracy of normalized densities' integrals (CDF values).
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureControl {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            max_subdivisions: 4_000,
        }
    }
}

impl QuadratureControl {
    /// Relative accuracy demanded of each inner `lambda1` integral.
    fn inner_rel_tol(&self) -> f64 {
        (self.abs_tol * 1e-2).max(1e-13)
    }

    fn tolerance(&self, abs: f64, rel: f64) -> Tolerance {
        Tolerance {
            abs,
            rel,
            max_subdivisions: self.max_subdivisions,
        }
    }

    /// Upper integration limit `T` for a log-envelope `log_env`: `T` is
    /// doubled from `start` until the envelope at `T` lies `abs_tol * 1e-6`
    /// below its maximum on `[0, T]` and is still decreasing.
    pub fn tail_cut(&self, start: f64, log_env: impl Fn(f64) -> f64) -> f64 {
        let drop = (self.abs_tol * 1e-6).ln();
        let mut t = start.max(1.0);
        loop {
            let peak = (1..=256)
                .map(|i| log_env(t * i as f64 / 256.0))
                .fold(f64::NEG_INFINITY, f64::max);
            let at = log_env(t);
            if at - peak < drop && log_env(1.1 * t) < at {
                return t;
            }
            t *= 2.0;
        }
    }
}

fn check_pair(function: &'static str, lambda1: f64, lambda2: f64) -> Result<()> {
    if !(lambda2 >= 0.0) || !lambda1.is_finite() {
        return Err(domain(
            function,
            format!("eigenvalues ({lambda1}, {lambda2}) must be finite and non-negative"),
        ));
    }
    if lambda1 < lambda2 {
        return Err(domain(
            function,
            format!("expected lambda1 >= lambda2, got ({lambda1}, {lambda2})"),
        ));
    }
    Ok(())
}

/// `exp(-(l1 + l2)/2) (l1 l2)^((p-3)/2) (l1 - l2)` for `l1 >= l2 >= 0`;
/// zero on the diagonal.
pub fn central_joint_density_unnorm(p: usize, lambda1: f64, lambda2: f64) -> Result<f64> {
    check_pair("central_joint_density_unnorm", lambda1, lambda2)?;
    if lambda1 == lambda2 {
        return Ok(0.0);
    }
    let spec = NoncentralSpec::central(p)?;
    Ok(joint_kernel(spec.power(), lambda1, lambda2))
}

fn joint_kernel(power: f64, lambda1: f64, lambda2: f64) -> f64 {
    let prod = lambda1 * lambda2;
    let pw = if power == 0.0 { 1.0 } else { prod.powf(power) };
    (-(lambda1 + lambda2) / 2.0).exp() * pw * (lambda1 - lambda2)
}

/// `g_c(l2) = Gamma((p+1)/2, l2/2) - (l2/2) Gamma((p-1)/2, l2/2)`, the
/// central likelihood ratio against `chi2_{p-1}` up to a constant.
pub fn g_central(p: usize, lambda2: f64) -> Result<f64> {
    if p < 2 {
        return Err(domain("g_central", format!("p = {p} must be >= 2")));
    }
    if !(lambda2 >= 0.0) {
        return Err(domain(
            "g_central",
            format!("lambda2 = {lambda2} must be >= 0"),
        ));
    }
    let (a, z) = ((p as f64 - 1.0) / 2.0, lambda2 / 2.0);
    Ok(upper_incomplete_gamma(a + 1.0, z)? - z * upper_incomplete_gamma(a, z)?)
}

/// Central marginal of `lambda2` up to a constant:
/// `exp(-l2/2) l2^((p-3)/2) g_c(l2)`.
///
/// Integrating [`central_joint_density_unnorm`] over `lambda1 > l2` gives
/// exactly `2^((p+1)/2)` times this.
pub fn central_marginal_density_unnorm(p: usize, lambda2: f64) -> Result<f64> {
    if !(lambda2 > 0.0) || !lambda2.is_finite() {
        return Err(domain(
            "central_marginal_density_unnorm",
            format!("lambda2 = {lambda2} must be finite and > 0"),
        ));
    }
    let power = (p as f64 - 3.0) / 2.0;
    Ok((-lambda2 / 2.0).exp() * lambda2.powf(power) * g_central(p, lambda2)?)
}

/// The Legendre series for `0F1(p/2; diag(kappa/4, 0), diag(l1, l2))`.
///
/// Terms are generated through `Q_j = (l1 l2)^(j/2) P_j(x)`, which obeys
/// Bonnet's recursion rewritten as
/// `(j+1) Q_{j+1} = (2j+1) m Q_j - j g Q_{j-1}` with `m = (l1 + l2)/2` and
/// `g = l1 l2`. This avoids overflow of `P_j(x)` for large `x` and extends
/// continuously to `l2 = 0`. All terms are non-negative, so the sum is at
/// least 1, and it equals 1 exactly when `kappa = 0`.
pub fn hyp0f1_series(
    spec: &NoncentralSpec,
    lambda1: f64,
    lambda2: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_pair("hyp0f1_series", lambda1, lambda2)?;
    ctl.validate()?;
    hyp0f1_unchecked(spec, lambda1, lambda2, ctl)
}

fn hyp0f1_unchecked(
    spec: &NoncentralSpec,
    lambda1: f64,
    lambda2: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    if spec.is_central() {
        return Ok(1.0);
    }
    let b = spec.p as f64 / 2.0;
    let z = spec.kappa / 4.0;
    let m = 0.5 * (lambda1 + lambda2);
    let g = lambda1 * lambda2;
    // ratio(j) = c_{j+1} / c_j where c_j = z^j / ((b)_j j!).
    let ratio = |j: usize| z / ((b + j as f64) * (j as f64 + 1.0));

    let mut prev = 1.0; // A_0 = c_0 Q_0
    let mut cur = ratio(0) * m; // A_1 = c_1 Q_1
    let mut sum = prev + cur;
    let mut small_run = 0;
    for j in 1..ctl.j_max {
        let jf = j as f64;
        let next =
            ratio(j) / (jf + 1.0) * ((2.0 * jf + 1.0) * m * cur - jf * g * ratio(j - 1) * prev);
        sum += next;
        if next.abs() <= ctl.rel_tol * sum.abs() {
            small_run += 1;
            if small_run >= 3 {
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
        prev = cur;
        cur = next;
    }
    Err(Error::Convergence {
        method: "0F1 Legendre series",
        iterations: ctl.j_max,
    })
}

/// Noncentral joint density of `(lambda1, lambda2)` up to a constant.
pub fn noncentral_joint_density_unnorm(
    spec: &NoncentralSpec,
    lambda1: f64,
    lambda2: f64,
    ctl: &SeriesControl,
) -> Result<f64> {
    check_pair("noncentral_joint_density_unnorm", lambda1, lambda2)?;
    if lambda1 == lambda2 {
        return Ok(0.0);
    }
    let series = hyp0f1_series(spec, lambda1, lambda2, ctl)?;
    Ok(series * joint_kernel(spec.power(), lambda1, lambda2))
}

type CacheKey = (usize, u64, u64, usize, u64, usize);

fn normalizer_cache() -> &'static Mutex<HashMap<CacheKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<CacheKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Law of the smallest eigenvalue `lambda2(S)` for one [`NoncentralSpec`].
///
/// Writing `lambda1 = lambda2 + t`, the marginal density is
/// `exp(-lambda2) lambda2^((p-3)/2) K(lambda2) / Z` with
///
/// ```text
/// K(l2) = int_0^inf exp(-t/2) (l2 + t)^((p-3)/2) t 0F1(l2 + t, l2) dt.
/// ```
///
/// `K` is integrated in `t = s^2`, which removes the square-root endpoint
/// behaviour of odd `p`; the outer integrals use `lambda2 = u^2` for the
/// same reason at `lambda2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lambda2Distribution {
    pub spec: NoncentralSpec,
    pub series: SeriesControl,
    pub quad: QuadratureControl,
}

impl Lambda2Distribution {
    pub fn new(spec: NoncentralSpec) -> Self {
        Self {
            spec,
            series: SeriesControl::default(),
            quad: QuadratureControl::default(),
        }
    }

    pub fn with_controls(
        spec: NoncentralSpec,
        series: SeriesControl,
        quad: QuadratureControl,
    ) -> Result<Self> {
        series.validate()?;
        if !(quad.abs_tol > 0.0) || quad.max_subdivisions == 0 {
            return Err(domain("QuadratureControl", "abs_tol must be > 0"));
        }
        Ok(Self { spec, series, quad })
    }

    /// Upper limit for `t = lambda1 - lambda2`. The series is bounded by
    /// the scalar `0F1(p/2; kappa lambda1 / 4) <= exp(sqrt(kappa lambda1))`.
    fn t_cut(&self, lambda2: f64) -> f64 {
        let (kappa, power) = (self.spec.kappa, self.spec.power());
        self.quad
            .tail_cut(2.0 * (self.spec.p as f64 + kappa) + 20.0, |t| {
                -t / 2.0
                    + (kappa * (lambda2 + t)).sqrt()
                    + (power + 1.0) * (lambda2 + t + 1.0).ln()
                    + (t + 1e-300).ln()
            })
    }

    /// Upper limit for `lambda2` itself.
    fn lambda2_cut(&self) -> f64 {
        let (kappa, p) = (self.spec.kappa, self.spec.p as f64);
        self.quad.tail_cut(p + kappa + 20.0, |l| {
            -l + (kappa * l).sqrt() + (p + 2.0) * (l + 1.0).ln()
        })
    }

    /// `K(lambda2)` defined above, for `lambda2 >= 0`.
    pub fn kernel_integral(&self, lambda2: f64) -> Result<f64> {
        if !(lambda2 >= 0.0) || !lambda2.is_finite() {
            return Err(domain(
                "kernel_integral",
                format!("lambda2 = {lambda2} must be finite and >= 0"),
            ));
        }
        let power = self.spec.power();
        let s_max = self.t_cut(lambda2).sqrt();
        let mut failure = None;
        let integrand = |s: f64| {
            let t = s * s;
            let l1 = lambda2 + t;
            let series = match hyp0f1_unchecked(&self.spec, l1, lambda2, &self.series) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    return 0.0;
                }
            };
            let pw = if power == 0.0 { 1.0 } else { l1.powf(power) };
            2.0 * s * t * (-t / 2.0).exp() * pw * series
        };
        let tol = self.quad.tolerance(1e-300, self.quad.inner_rel_tol());
        let est = integrate(integrand, 0.0, s_max, &[], &tol);
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(est?.value)
    }

    /// Marginal density over the `chi2_{p-1}` kernel
    /// `exp(-l2/2) l2^((p-3)/2)`, up to a constant: `exp(-l2/2) K(l2)`.
    pub fn likelihood_ratio_unnorm(&self, lambda2: f64) -> Result<f64> {
        Ok((-lambda2 / 2.0).exp() * self.kernel_integral(lambda2)?)
    }

    /// Integrand of the `lambda2` marginal after `lambda2 = u^2`.
    fn outer_integrand(&self, u: f64) -> Result<f64> {
        let l2 = u * u;
        let p = self.spec.p as f64;
        let pw = if p == 2.0 { 1.0 } else { u.powf(p - 2.0) };
        Ok(2.0 * pw * (-l2).exp() * self.kernel_integral(l2)?)
    }

    fn integrate_outer(&self, u_lo: f64, u_hi: f64, tol: &Tolerance) -> Result<f64> {
        let mut failure = None;
        let est = integrate(
            |u| match self.outer_integrand(u) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            u_lo,
            u_hi,
            &[],
            tol,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(est?.value)
    }

    fn cache_key(&self) -> CacheKey {
        (
            self.spec.p,
            self.spec.kappa.to_bits(),
            self.series.rel_tol.to_bits(),
            self.series.j_max,
            self.quad.abs_tol.to_bits(),
            self.quad.max_subdivisions,
        )
    }

    /// `Z = int_0^inf exp(-l2) l2^((p-3)/2) K(l2) dl2`, computed once per
    /// distribution and cached process-wide. Concurrent first calls may
    /// each compute it; they store the same value.
    pub fn normalizer(&self) -> Result<f64> {
        let key = self.cache_key();
        if let Some(&z) = normalizer_cache().lock().expect("cache poisoned").get(&key) {
            return Ok(z);
        }
        let tol = self.quad.tolerance(1e-300, self.quad.abs_tol * 1e-2);
        let z = self.integrate_outer(0.0, self.lambda2_cut().sqrt(), &tol)?;
        normalizer_cache()
            .lock()
            .expect("cache poisoned")
            .entry(key)
            .or_insert(z);
        Ok(z)
    }

    /// Normalized marginal density of `lambda2` at `lambda2 > 0`.
    pub fn density(&self, lambda2: f64) -> Result<f64> {
        if !(lambda2 > 0.0) || !lambda2.is_finite() {
            return Err(domain(
                "noncentral_marginal_density",
                format!("lambda2 = {lambda2} must be finite and > 0"),
            ));
        }
        let power = self.spec.power();
        let pw = if power == 0.0 {
            1.0
        } else {
            lambda2.powf(power)
        };
        Ok((-lambda2).exp() * pw * self.kernel_integral(lambda2)? / self.normalizer()?)
    }

    /// Limit of the density as `lambda2 -> 0+`: infinite for `p = 2`,
    /// finite for `p = 3`, zero otherwise.
    pub fn density_at_zero(&self) -> Result<f64> {
        Ok(match self.spec.p {
            2 => f64::INFINITY,
            3 => self.kernel_integral(0.0)? / self.normalizer()?,
            _ => 0.0,
        })
    }

    /// `P(lambda2(S) <= x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        Ok(self.cdf_grid(&[x])?[0])
    }

    /// Distribution function on a grid, integrating only between
    /// consecutive sorted points.
    pub fn cdf_grid(&self, xs: &[f64]) -> Result<Vec<f64>> {
        if let Some(bad) = xs.iter().find(|x| !(**x >= 0.0)) {
            return Err(domain("lambda2_cdf", format!("x = {bad} must be >= 0")));
        }
        let z = self.normalizer()?;
        let u_cut = self.lambda2_cut().sqrt();
        let tol = self.quad.tolerance(self.quad.abs_tol * 1e-2 * z, 0.0);

        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
        let mut out = vec![0.0; xs.len()];
        let (mut u_prev, mut acc) = (0.0, 0.0);
        for i in order {
            let u = xs[i].sqrt().min(u_cut);
            if u > u_prev {
                acc += self.integrate_outer(u_prev, u, &tol)?;
                u_prev = u;
            }
            out[i] = if xs[i].sqrt() >= u_cut {
                1.0
            } else {
                (acc / z).clamp(0.0, 1.0)
            };
        }
        Ok(out)
    }
}

/// Normalized marginal density of `lambda2(S)`.
pub fn noncentral_marginal_density(
    spec: &NoncentralSpec,
    lambda2: f64,
    series: &SeriesControl,
    quad: &QuadratureControl,
) -> Result<f64> {
    Lambda2Distribution::with_controls(*spec, *series, *quad)?.density(lambda2)
}

/// Distribution function of `lambda2(S)`.
pub fn lambda2_cdf(
    spec: &NoncentralSpec,
    x: f64,
    series: &SeriesControl,
    quad: &QuadratureControl,
) -> Result<f64> {
    Lambda2Distribution::with_controls(*spec, *series, *quad)?.cdf(x)
}
