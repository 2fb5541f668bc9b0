//! Globally adaptive Gauss-Legendre quadrature on finite intervals.
//!
//! Each segment is integrated with a 15-point rule over the whole segment
//! and over its two halves; the difference bounds the error of the
//! (much more accurate) two-half sum. The segment with the largest error
//! is bisected until the total error meets the tolerance.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const ORDER: usize = 15;

/// Nodes and weights of the `ORDER`-point Gauss-Legendre rule on `[-1, 1]`.
fn gauss_legendre() -> &'static [(f64, f64); ORDER] {
    static RULE: OnceLock<[(f64, f64); ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = ORDER;
        let mut rule = [(0.0, 0.0); ORDER];
        for (i, slot) in rule.iter_mut().enumerate() {
            // Chebyshev-like initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for j in 1..n {
                    let jf = j as f64;
                    let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

fn rule<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    gauss_legendre()
        .iter()
        .map(|&(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-12,
            rel: 1e-12,
            max_subdivisions: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

struct Segment {
    a: f64,
    b: f64,
    coarse: f64,
    left: f64,
    right: f64,
}

impl Segment {
    fn new<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, coarse: f64) -> Self {
        let m = 0.5 * (a + b);
        Self {
            a,
            b,
            coarse,
            left: rule(f, a, m),
            right: rule(f, m, b),
        }
    }

    fn value(&self) -> f64 {
        self.left + self.right
    }

    fn error(&self) -> f64 {
        (self.coarse - self.value()).abs()
    }
}

/// Integrate `f` over `[a, b]` (`a <= b`, both finite).
///
/// `breaks` are optional interior points that seed the subdivision, e.g.
/// known kinks of the integrand.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: &Tolerance,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            subdivisions: 0,
        });
    }
    let mut edges = vec![a];
    edges.extend(breaks.iter().copied().filter(|&t| t > a && t < b));
    edges.push(b);
    let mut segments: Vec<Segment> = edges
        .windows(2)
        .map(|w| {
            let coarse = rule(&mut f, w[0], w[1]);
            Segment::new(&mut f, w[0], w[1], coarse)
        })
        .collect();

    loop {
        let value: f64 = segments.iter().map(Segment::value).sum();
        let error: f64 = segments.iter().map(Segment::error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Domain {
                function: "integrate",
                detail: "integrand produced a non-finite value".into(),
            });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            return Ok(Estimate {
                value,
                error,
                subdivisions: segments.len(),
            });
        }
        if segments.len() >= tol.max_subdivisions {
            return Err(Error::Convergence {
                method: "adaptive quadrature",
                iterations: segments.len(),
            });
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error().total_cmp(&y.1.error()))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let s = segments.swap_remove(worst);
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            // Segment cannot be split further in floating point.
            return Err(Error::Convergence {
                method: "adaptive quadrature",
                iterations: segments.len() + 1,
            });
        }
        segments.push(Segment::new(&mut f, s.a, m, s.left));
        segments.push(Segment::new(&mut f, m, s.b, s.right));
    }
}
