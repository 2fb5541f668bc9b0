//! The likelihood-ratio test of `H0: mu2 = beta * mu1`.
//!
//! The Fieller pivot `R(beta) = |Y - beta X|^2 / (1 + beta^2)` is a
//! quadratic form of the Gram matrix `S = (X Y)^T (X Y)` evaluated at the
//! unit vector `(beta, -1) / sqrt(1 + beta^2)`. Minimizing over `beta` is
//! therefore minimizing a Rayleigh quotient over the unit circle, and the
//! minimum is the smaller eigenvalue of `S`.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::specfun::{chi2_quantile, chi2_sf};

/// Symmetry tolerance for a supplied covariance matrix.
const SYMMETRY_TOL: f64 = 1e-10;

/// A pair of observed vectors `X`, `Y` with an optional known covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: Option<DMatrix<f64>>,
}

impl Sample {
    /// Both vectors must have the same length `p >= 2` and finite entries.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "x has length {} but y has length {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::Dimension(format!(
                "need p >= 2 observations per vector, got {}",
                x.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(domain("Sample::new", "observations must be finite"));
        }
        Ok(Self { x, y, sigma: None })
    }

    /// Attach a known covariance `Sigma` shared by `X` and `Y`.
    pub fn with_sigma(mut self, sigma: DMatrix<f64>) -> Result<Self> {
        let p = self.p();
        if sigma.nrows() != p || sigma.ncols() != p {
            return Err(Error::Dimension(format!(
                "sigma is {}x{} but p = {p}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        for i in 0..p {
            for j in 0..i {
                let (a, b) = (sigma[(i, j)], sigma[(j, i)]);
                if (a - b).abs() > SYMMETRY_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::NotPositiveDefinite(format!(
                        "entries ({i},{j}) and ({j},{i}) differ: {a} vs {b}"
                    )));
                }
            }
        }
        if sigma.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite(
                "Cholesky factorization failed".into(),
            ));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn sigma(&self) -> Option<&DMatrix<f64>> {
        self.sigma.as_ref()
    }

    /// The sample with any known covariance already applied.
    fn standardized(&self) -> Result<Sample> {
        match self.sigma {
            Some(_) => whiten(self),
            None => Ok(self.clone()),
        }
    }
}

/// Entries of the symmetric 2x2 matrix `S = (X Y)^T (X Y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramMatrix {
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
}

impl GramMatrix {
    pub fn new(sxx: f64, sxy: f64, syy: f64) -> Result<Self> {
        let s = Self { sxx, sxy, syy };
        s.validate()?;
        Ok(s)
    }

    /// Positive semi-definiteness up to roundoff.
    pub fn validate(&self) -> Result<()> {
        let Self { sxx, sxy, syy } = *self;
        if ![sxx, sxy, syy].iter().all(|v| v.is_finite()) {
            return Err(domain("GramMatrix", "entries must be finite"));
        }
        let scale = (sxx * syy).max(1.0);
        if sxx < 0.0 || syy < 0.0 || self.determinant() < -1e-9 * scale {
            return Err(domain(
                "GramMatrix",
                format!("({sxx}, {sxy}, {syy}) is not positive semi-definite"),
            ));
        }
        Ok(())
    }

    pub fn trace(&self) -> f64 {
        self.sxx + self.syy
    }

    pub fn determinant(&self) -> f64 {
        self.sxx * self.syy - self.sxy * self.sxy
    }

    /// `R(beta) = (syy - 2 beta sxy + beta^2 sxx) / (1 + beta^2)`.
    pub fn pivot(&self, beta: f64) -> f64 {
        let num = self.syy - 2.0 * beta * self.sxy + beta * beta * self.sxx;
        (num / (1.0 + beta * beta)).max(0.0)
    }
}

pub fn gram(sample: &Sample) -> GramMatrix {
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in sample.x.iter().zip(&sample.y) {
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    GramMatrix { sxx, sxy, syy }
}

/// Replace `X`, `Y` by `L^{-1} X`, `L^{-1} Y` where `Sigma = L L^T`.
///
/// Any square root of `Sigma^{-1}` yields the same Gram matrix, so the
/// Cholesky factor stands in for the symmetric `Sigma^{-1/2}`.
pub fn whiten(sample: &Sample) -> Result<Sample> {
    let sigma = sample
        .sigma
        .as_ref()
        .ok_or_else(|| domain("whiten", "sample has no covariance attached"))?;
    let chol = sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let l = chol.l();
    let solve = |v: &[f64]| -> Result<Vec<f64>> {
        l.solve_lower_triangular(&DVector::from_column_slice(v))
            .map(|s| s.iter().copied().collect())
            .ok_or_else(|| Error::NotPositiveDefinite("singular Cholesky factor".into()))
    };
    Ok(Sample {
        x: solve(&sample.x)?,
        y: solve(&sample.y)?,
        sigma: None,
    })
}

/// The Fieller pivot `R(beta)` of a sample (whitened first if a covariance
/// is attached).
pub fn pivot(sample: &Sample, beta: f64) -> Result<f64> {
    if !beta.is_finite() {
        return Err(domain("pivot", format!("beta = {beta} must be finite")));
    }
    Ok(gram(&sample.standardized()?).pivot(beta))
}

/// Ordered eigenvalues `lambda1 >= lambda2 >= 0` of a Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// Closed-form eigenvalues of the 2x2 Gram matrix.
///
/// The half-gap `sqrt(((sxx - syy)/2)^2 + sxy^2)` is formed without
/// cancellation and the small eigenvalue is recovered as `det / lambda1`.
/// Roundoff-negative determinants (exact proportionality) clamp to 0.
pub fn eigen2(s: &GramMatrix) -> EigenPair {
    let half_trace = 0.5 * s.trace();
    let half_gap = (0.5 * (s.sxx - s.syy)).hypot(s.sxy);
    let lambda1 = half_trace + half_gap;
    let det = s.determinant().max(0.0);
    let lambda2 = if lambda1 > 0.0 {
        (det / lambda1).min(half_trace).max(0.0)
    } else {
        0.0
    };
    EigenPair { lambda1, lambda2 }
}

/// A slope `beta`, or the vertical direction `(1, 0)` reached as
/// `beta -> inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slope {
    Finite(f64),
    Infinite,
}

impl Slope {
    pub fn finite(self) -> Option<f64> {
        match self {
            Slope::Finite(b) => Some(b),
            Slope::Infinite => None,
        }
    }
}

impl std::fmt::Display for Slope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Slope::Finite(b) => write!(f, "{b}"),
            Slope::Infinite => f.write_str("inf"),
        }
    }
}

/// `(beta_hat, min_beta R(beta))`.
///
/// On the unit circle `c(theta) = (sin theta, -cos theta)` the minimizer is
/// the eigenvector of `lambda2`, and `beta_hat = tan theta`. When that
/// eigenvector is `(1, 0)` the infimum is only approached as `beta -> inf`
/// and the slope is reported as [`Slope::Infinite`].
pub fn minimize_pivot(s: &GramMatrix) -> (Slope, f64) {
    let lambda2 = eigen2(s).lambda2;
    // (S - lambda2 I) v = 0; use the row of larger norm for the direction.
    let (a1, b1) = (s.sxx - lambda2, s.sxy);
    let (a2, b2) = (s.sxy, s.syy - lambda2);
    let (num, den) = if a1.hypot(b1) >= a2.hypot(b2) {
        // v = (sxy, -(sxx - lambda2))
        (b1, a1)
    } else {
        // v = (syy - lambda2, -sxy)
        (b2, a2)
    };
    let slope = if num == 0.0 && den == 0.0 {
        // S is a multiple of the identity: every direction is optimal.
        Slope::Finite(0.0)
    } else if den == 0.0 {
        Slope::Infinite
    } else {
        Slope::Finite(num / den)
    };
    (slope, lambda2)
}

/// Result of [`proportionality_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestOutcome {
    /// `R(beta_hat) = lambda2(S)`.
    pub statistic: f64,
    pub beta_hat: Slope,
    /// `p - 1`.
    pub df: usize,
    /// Upper tail of `chi2_{p-1}` at the statistic.
    pub p_value: f64,
    pub reject: bool,
}

/// Reject `H0` at level `alpha` when `lambda2(S) > chi2_{p-1}(1 - alpha)`.
pub fn proportionality_test(sample: &Sample, alpha: f64) -> Result<TestOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(
            "proportionality_test",
            format!("alpha = {alpha} must lie in (0, 1)"),
        ));
    }
    let p = sample.p();
    if p < 2 {
        return Err(Error::Dimension(format!("need p >= 2, got {p}")));
    }
    let s = gram(&sample.standardized()?);
    let (beta_hat, statistic) = minimize_pivot(&s);
    let df = p - 1;
    let critical = chi2_quantile(df as f64, 1.0 - alpha)?;
    Ok(TestOutcome {
        statistic,
        beta_hat,
        df,
        p_value: chi2_sf(df as f64, statistic)?,
        reject: statistic > critical,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalKind {
    /// `[lower, upper]`.
    Bounded,
    /// `(-inf, lower] U [upper, inf)`; one endpoint may be infinite, which
    /// describes a half-line.
    ComplementOfBounded,
    AllReals,
    Empty,
}

impl IntervalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::Bounded => "bounded",
            IntervalKind::ComplementOfBounded => "complement-of-bounded",
            IntervalKind::AllReals => "all-reals",
            IntervalKind::Empty => "empty",
        }
    }
}

/// Confidence set `{beta : R(beta) <= chi2_p(level)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiellerInterval {
    pub kind: IntervalKind,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub level: f64,
}

impl FiellerInterval {
    pub fn contains(&self, beta: f64) -> bool {
        match (self.kind, self.lower, self.upper) {
            (IntervalKind::Bounded, Some(l), Some(u)) => l <= beta && beta <= u,
            (IntervalKind::ComplementOfBounded, Some(l), Some(u)) => beta <= l || beta >= u,
            (IntervalKind::AllReals, ..) => true,
            _ => false,
        }
    }

    /// Whether the set is unbounded in the direction `beta -> +inf` or
    /// `-inf` (the closure in the projective sense).
    pub fn contains_slope(&self, slope: Slope) -> bool {
        match slope {
            Slope::Finite(b) => self.contains(b),
            Slope::Infinite => matches!(
                self.kind,
                IntervalKind::ComplementOfBounded | IntervalKind::AllReals
            ),
        }
    }
}

/// Solve `beta^2 (sxx - q) - 2 beta sxy + (syy - q) <= 0` with
/// `q = chi2_p(level)`.
pub fn fieller_interval(sample: &Sample, level: f64) -> Result<FiellerInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(
            "fieller_interval",
            format!("level = {level} must lie in (0, 1)"),
        ));
    }
    let s = gram(&sample.standardized()?);
    let q = chi2_quantile(sample.p() as f64, level)?;
    Ok(solve_fieller(&s, q, level))
}

fn solve_fieller(s: &GramMatrix, q: f64, level: f64) -> FiellerInterval {
    let a = s.sxx - q;
    let c = s.syy - q;
    let half_b = -s.sxy;
    let quarter_disc = half_b * half_b - a * c;
    let make = |kind, lower, upper| FiellerInterval {
        kind,
        lower,
        upper,
        level,
    };

    if a == 0.0 {
        // Linear: -2 sxy beta + c <= 0.
        return if s.sxy > 0.0 {
            make(
                IntervalKind::ComplementOfBounded,
                Some(f64::NEG_INFINITY),
                Some(c / (2.0 * s.sxy)),
            )
        } else if s.sxy < 0.0 {
            make(
                IntervalKind::ComplementOfBounded,
                Some(c / (2.0 * s.sxy)),
                Some(f64::INFINITY),
            )
        } else if c <= 0.0 {
            make(IntervalKind::AllReals, None, None)
        } else {
            make(IntervalKind::Empty, None, None)
        };
    }

    let roots = || {
        // Stable quadratic roots of a beta^2 + 2 half_b beta + c.
        let sq = quarter_disc.max(0.0).sqrt();
        let t = -(half_b + half_b.signum() * sq);
        let (r1, r2) = if t != 0.0 { (t / a, c / t) } else { (0.0, 0.0) };
        (r1.min(r2), r1.max(r2))
    };

    if a > 0.0 {
        if quarter_disc >= 0.0 {
            let (l, u) = roots();
            make(IntervalKind::Bounded, Some(l), Some(u))
        } else {
            make(IntervalKind::Empty, None, None)
        }
    } else if quarter_disc > 0.0 {
        let (l, u) = roots();
        make(IntervalKind::ComplementOfBounded, Some(l), Some(u))
    } else {
        make(IntervalKind::AllReals, None, None)
    }
}
