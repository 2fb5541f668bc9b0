//! Exact likelihood-ratio test for proportionality of the means of two
//! multivariate normal vectors, with the eigenvalue distribution theory of
//! the 2x2 Wishart matrix behind it.
//!
//! For independent `X ~ N(mu1, I_p)` and `Y ~ N(mu2, I_p)` the statistic
//! `min_beta |Y - beta X|^2 / (1 + beta^2)` equals the smallest eigenvalue
//! of `S = (X Y)^T (X Y)`. Under `mu2 = beta mu1` its law depends on the
//! means only through `kappa = (1 + beta^2) |mu1|^2` and is stochastically
//! smaller than chi-square with `p - 1` degrees of freedom, so comparing it
//! against `chi2_{p-1}` quantiles gives a valid, conservative test.
//!
//! Modules:
//! - [`specfun`]: Legendre polynomials, incomplete gamma, chi-square.
//! - [`lrt`]: the test, the Fieller pivot and confidence sets.
//! - [`wishart`]: densities and distribution function of the smallest eigenvalue.
//! - [`dominance`]: numerical verification of the inequalities behind the test's validity.
//! - [`montecarlo`]: reproducible null simulations (sizes and empirical CDFs).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dominance;
pub mod error;
pub mod lrt;
pub mod montecarlo;
pub mod quadrature;
pub mod specfun;
pub mod wishart;

pub use dominance::VerificationReport;
pub use error::{Error, Result};
pub use lrt::{
    eigen2, fieller_interval, gram, minimize_pivot, pivot, proportionality_test, whiten, EigenPair,
    FiellerInterval, GramMatrix, IntervalKind, Sample, Slope, TestOutcome,
};
pub use montecarlo::{EmpiricalCdf, SimulationConfig, SizeRow, SizeTable};
pub use wishart::{NoncentralSpec, QuadratureControl, SeriesControl};
