//! Acceptance gate. Runs every primary criterion, prints one PASS/FAIL
//! line each, and exits non-zero if any fails.

use std::process::Command;
use std::time::Instant;

use meanprop::montecarlo::{dkw_epsilon, replicate_rng, simulate_cdf, simulate_statistics};
use meanprop::quadrature::{integrate, Tolerance};
use meanprop::specfun::{
    chi2_cdf, chi2_quantile, gamma, legendre_derivative, legendre_ratios, legendre_sequence,
    regularized_gamma_p, upper_incomplete_gamma,
};
use meanprop::wishart::{central_joint_density_unnorm, central_marginal_density_unnorm};
use meanprop::{eigen2, EmpiricalCdf, GramMatrix, NoncentralSpec, SimulationConfig};
use rand::Rng;
use rand_distr::StandardNormal;

const REPS: usize = 100_000;
const DKW_CONFIDENCE: f64 = 0.999;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_meanprop")
}

fn run_binary(args: &[&str]) -> Result<String, String> {
    let o = Command::new(binary())
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.code() != Some(0) {
        return Err(format!(
            "{args:?} exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr).trim()
        ));
    }
    String::from_utf8(o.stdout).map_err(|e| e.to_string())
}

fn config(p: usize, kappa: f64, seed: u64) -> SimulationConfig {
    SimulationConfig {
        p,
        kappa,
        reps: REPS,
        seed,
        alphas: vec![0.01, 0.05, 0.1],
    }
}

/// Grid on `(0, 40]`.
fn dominance_grid() -> Vec<f64> {
    (1..=400).map(|i| i as f64 * 0.1).collect()
}

/// Printed simulated sizes in percent, rows p = 2, 5, 10, 20; columns
/// alpha = 1%, 5%, 10%, each with kappa = 0, 5, 20.
const TABLE: [[f64; 9]; 4] = [
    [0.0, 0.2, 0.7, 0.3, 2.2, 4.3, 1.3, 5.8, 9.0],
    [0.0, 0.1, 0.6, 0.2, 1.3, 3.8, 0.8, 3.7, 8.1],
    [0.0, 0.1, 0.4, 0.1, 0.8, 3.2, 0.7, 2.5, 7.2],
    [0.0, 0.0, 0.3, 0.1, 0.5, 2.5, 0.5, 1.7, 6.0],
];
const PS: [usize; 4] = [2, 5, 10, 20];
const KAPPAS: [f64; 3] = [0.0, 5.0, 20.0];
const ALPHAS: [f64; 3] = [0.01, 0.05, 0.1];

fn table_one() -> Outcome {
    // sizes[p][kappa][alpha] and their standard errors, from the binary.
    let mut sizes = [[[0.0; 3]; 3]; 4];
    let mut errs = [[[0.0; 3]; 3]; 4];
    let mut misses = Vec::new();
    let mut worst_slack = f64::INFINITY;
    for (pi, p) in PS.iter().enumerate() {
        for (ki, kappa) in KAPPAS.iter().enumerate() {
            let out = match run_binary(&[
                "simulate",
                "--p",
                &p.to_string(),
                "--kappa",
                &kappa.to_string(),
                "--reps",
                &REPS.to_string(),
                "--seed",
                "20240917",
                "--alphas",
                "0.01,0.05,0.1",
            ]) {
                Ok(o) => o,
                Err(e) => return outcome(false, e),
            };
            for (ai, line) in out.lines().skip(1).enumerate() {
                let f: Vec<&str> = line.split(',').collect();
                let size: f64 = f[5].parse().unwrap();
                sizes[pi][ki][ai] = size;
                errs[pi][ki][ai] = f[6].parse().unwrap();
                let printed = TABLE[pi][ai * 3 + ki] / 100.0;
                let tol = 0.0015f64.max(4.0 * (printed * (1.0 - printed) / REPS as f64).sqrt());
                let slack = tol - (size - printed).abs();
                worst_slack = worst_slack.min(slack);
                if slack < 0.0 {
                    misses.push(format!(
                        "p={p} kappa={kappa} alpha={}: {:.3}% vs {:.1}%",
                        ALPHAS[ai],
                        100.0 * size,
                        100.0 * printed
                    ));
                }
            }
        }
    }

    // Conservativeness: size <= alpha + 4 se; decreasing in p and
    // increasing in kappa, within 2 se of the pairwise difference.
    let mut trend = Vec::new();
    for pi in 0..4 {
        for ki in 0..3 {
            for ai in 0..3 {
                let (s, e) = (sizes[pi][ki][ai], errs[pi][ki][ai]);
                if s > ALPHAS[ai] + 4.0 * e {
                    trend.push(format!(
                        "size above alpha at p={} kappa={}",
                        PS[pi], KAPPAS[ki]
                    ));
                }
                let band = |a: (usize, usize), b: (usize, usize)| {
                    2.0 * (errs[a.0][a.1][ai].powi(2) + errs[b.0][b.1][ai].powi(2)).sqrt()
                };
                if pi + 1 < 4 && sizes[pi + 1][ki][ai] > s + band((pi, ki), (pi + 1, ki)) {
                    trend.push(format!(
                        "not decreasing in p at p={} kappa={}",
                        PS[pi], KAPPAS[ki]
                    ));
                }
                if ki + 1 < 3 && sizes[pi][ki + 1][ai] + band((pi, ki), (pi, ki + 1)) < s {
                    trend.push(format!(
                        "not increasing in kappa at p={} kappa={}",
                        PS[pi], KAPPAS[ki]
                    ));
                }
            }
        }
    }
    let passed = misses.is_empty() && trend.is_empty();
    let detail = if passed {
        format!(
            "36/36 cells within tolerance (smallest slack {:.3} pp); trends hold",
            100.0 * worst_slack
        )
    } else {
        format!(
            "{} cell misses {:?}; trend issues {:?}",
            misses.len(),
            misses,
            trend
        )
    };
    outcome(passed, detail)
}

fn dominance() -> Outcome {
    let grid = dominance_grid();
    let eps = dkw_epsilon(REPS, DKW_CONFIDENCE);
    let mut worst = f64::INFINITY;
    let mut bad = Vec::new();
    for p in [2usize, 5, 10] {
        for kappa in KAPPAS {
            let ecdf = simulate_cdf(&config(p, kappa, 7), &grid).unwrap();
            for (&x, &f) in grid.iter().zip(&ecdf.values) {
                let margin = f - (chi2_cdf((p - 1) as f64, x).unwrap() - eps);
                worst = worst.min(margin);
                if margin < 0.0 {
                    bad.push(format!("p={p} kappa={kappa} x={x}"));
                }
            }
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "9 specs x 400 points, DKW eps {eps:.5}, worst margin {worst:.5}; failures {bad:?}"
        ),
    )
}

fn figure_one() -> Outcome {
    let grid = dominance_grid();
    let eps = dkw_epsilon(REPS, DKW_CONFIDENCE);
    let mut issues = Vec::new();
    let mut notes = Vec::new();
    for p in [2usize, 10] {
        let f: Vec<Vec<f64>> = KAPPAS
            .iter()
            .map(|&k| simulate_cdf(&config(p, k, 13), &grid).unwrap().values)
            .collect();
        for i in 0..grid.len() {
            for k in 0..2 {
                if f[k + 1][i] > f[k][i] + 2.0 * eps {
                    issues.push(format!(
                        "p={p} x={} kappa {} vs {}",
                        grid[i],
                        KAPPAS[k],
                        KAPPAS[k + 1]
                    ));
                }
            }
        }
        let dist: Vec<f64> = f
            .iter()
            .map(|v| {
                grid.iter()
                    .zip(v)
                    .map(|(&x, &y)| (y - chi2_cdf((p - 1) as f64, x).unwrap()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        if !(dist[2] < dist[1] && dist[2] < dist[0]) {
            issues.push(format!("p={p}: kappa=20 not closest to chi2 ({dist:?})"));
        }
        notes.push(format!(
            "p={p} sup|F-chi2| = {:.3}/{:.3}/{:.3}",
            dist[0], dist[1], dist[2]
        ));
    }
    outcome(
        issues.is_empty(),
        format!("{}; issues {issues:?}", notes.join(", ")),
    )
}

/// Upper bound on `sup_x |F_n(x) - F(x)|` from a grid, using that both
/// functions are non-decreasing: on `[a, b)` the gap is at most
/// `max(F_n(b-) - F(a), F(b) - F_n(a))`.
fn sup_distance_bound(sorted: &[f64], grid: &[f64], exact: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let below = |x: f64| sorted.partition_point(|&s| s < x) as f64 / n;
    let at_or_below = |x: f64| sorted.partition_point(|&s| s <= x) as f64 / n;
    let mut bound: f64 = 0.0;
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        bound = bound
            .max(below(b) - exact[i])
            .max(exact[i + 1] - at_or_below(a));
    }
    // Beyond the last grid point F_n <= 1 and F >= exact[last].
    bound.max(1.0 - exact[exact.len() - 1])
}

fn exact_vs_simulated() -> Outcome {
    let spec = NoncentralSpec::new(2, 5.0).unwrap();
    let dist = meanprop::wishart::Lambda2Distribution::new(spec);
    let draws = simulate_statistics(&config(2, 5.0, 17)).unwrap();
    let ecdf = EmpiricalCdf::new(draws);
    let top = ecdf.sorted()[ecdf.len() - 1];
    // Quadratic spacing: near zero F grows like sqrt(x) for p = 2, so
    // this keeps the CDF increments per cell roughly even.
    let m = 6000;
    let grid: Vec<f64> = (0..=m)
        .map(|i| top * (i as f64 / m as f64).powi(2))
        .collect();
    let exact = dist.cdf_grid(&grid).unwrap();
    let bound = sup_distance_bound(ecdf.sorted(), &grid, &exact);
    let eps = dkw_epsilon(REPS, DKW_CONFIDENCE);
    outcome(
        bound < eps,
        format!("sup distance <= {bound:.5}, DKW bound {eps:.5}"),
    )
}

fn verify_suite() -> Outcome {
    let dir = std::env::temp_dir().join(format!("meanprop-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let report = dir.join("verify.json");
    let out = run_binary(&[
        "verify",
        "--jmax",
        "200",
        "--report",
        report.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&report).unwrap_or_default();
    let _ = std::fs::remove_dir_all(&dir);
    let summary = match out {
        Ok(s) => s,
        Err(e) => return outcome(false, e),
    };
    let v: serde_json::Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("report unreadable: {e}")),
    };
    let checks = v["checks"].as_array().cloned().unwrap_or_default();
    let names: Vec<&str> = checks
        .iter()
        .filter_map(|c| c["check_name"].as_str())
        .collect();
    let required = [
        "key_inequality",
        "degree_monotonicity",
        "ratio_lower_bound",
        "gc_derivative",
    ];
    let missing: Vec<&&str> = required.iter().filter(|r| !names.contains(r)).collect();
    let mlr = names
        .iter()
        .filter(|n| n.starts_with("mlr_noncentral"))
        .count();
    let violations: usize = checks
        .iter()
        .map(|c| c["violations"].as_array().map_or(0, Vec::len))
        .sum();
    let passed = v["passed"] == true && missing.is_empty() && mlr == 9 && violations == 0;
    outcome(
        passed,
        format!(
            "{} checks ({} mlr), {violations} violations, missing {missing:?}; {} PASS lines",
            checks.len(),
            mlr,
            summary.lines().filter(|l| l.starts_with("PASS")).count()
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    // Angles theta with beta = tan(theta) cover every slope including the
    // vertical; R = |y cos(theta) - x sin(theta)|^2.
    let m = 1_000_000;
    let h = std::f64::consts::PI / m as f64;
    let trig: Vec<(f64, f64)> = (0..m)
        .map(|i| ((i as f64 * h).cos(), (i as f64 * h).sin()))
        .collect();
    let mut worst = 0.0f64;
    let mut bad = 0;
    for i in 0..1000u64 {
        let mut rng = replicate_rng(31337, i);
        let p = rng.random_range(2..=10usize);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..p {
            let x = 2.0 * rng.random::<f64>() - 1.0 + rng.sample::<f64, _>(StandardNormal);
            let y = 3.0 * rng.random::<f64>() + rng.sample::<f64, _>(StandardNormal);
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        let grid_min = trig
            .iter()
            .map(|&(c, s)| syy * c * c - 2.0 * sxy * s * c + sxx * s * s)
            .fold(f64::INFINITY, f64::min);
        let e = eigen2(&GramMatrix { sxx, sxy, syy });
        // Off the minimizing angle by at most h/2, R exceeds lambda2 by at
        // most (lambda1 - lambda2) sin^2(h/2).
        let resolution = (e.lambda1 - e.lambda2) * (h / 2.0).powi(2) + 1e-12 * e.lambda1;
        let gap = grid_min - e.lambda2;
        worst = worst.max(gap.abs() / resolution);
        if gap < -1e-12 * e.lambda1 || gap > resolution {
            bad += 1;
        }
    }

    let mut fit_err = 0.0f64;
    for p in [2usize, 3, 5, 10] {
        let mut c0 = None;
        for l2 in [0.05, 0.5, 1.0, 3.0, 8.0, 15.0] {
            let tol = Tolerance {
                abs: 0.0,
                rel: 1e-13,
                max_subdivisions: 4000,
            };
            let joint = integrate(
                |s| 2.0 * s * central_joint_density_unnorm(p, l2 + s * s, l2).unwrap(),
                0.0,
                30.0,
                &[],
                &tol,
            )
            .unwrap()
            .value;
            let ratio = joint / central_marginal_density_unnorm(p, l2).unwrap();
            let c = *c0.get_or_insert(ratio);
            fit_err = fit_err.max((ratio / c - 1.0).abs());
        }
    }
    outcome(
        bad == 0 && fit_err < 1e-8,
        format!(
            "eigen2 vs 1e6-angle grid: {bad}/1000 outside resolution (worst {worst:.2} of bound); \
             central marginal fit max rel err {fit_err:.1e}"
        ),
    )
}

fn special_functions() -> Outcome {
    let mut fails: Vec<String> = Vec::new();
    let mut count = 0usize;
    let mut check = |ok: bool, what: String| {
        count += 1;
        if !ok && fails.len() < 10 {
            fails.push(what);
        }
    };

    // Bonnet closure, in value form where values are finite.
    for xi in 0..=49 {
        let x = 1.0 + xi as f64;
        let values = legendre_sequence(x, 201).ok();
        let ratios = legendre_ratios(x, 201).unwrap();
        for j in 1..=200usize {
            let jf = j as f64;
            match &values {
                Some(v) if v[j + 1].value.is_finite() => {
                    let (a, b, c) = (v[j - 1].value, v[j].value, v[j + 1].value);
                    let resid = (jf + 1.0) * c - (2.0 * jf + 1.0) * x * b + jf * a;
                    check(
                        resid.abs()
                            <= 1e-10 * ((jf + 1.0) * c.abs() + (2.0 * jf + 1.0) * x * b.abs()),
                        format!("bonnet x={x} j={j}"),
                    );
                }
                _ => {
                    let resid = (jf + 1.0) * ratios[j] - (2.0 * jf + 1.0) * x + jf / ratios[j - 1];
                    check(
                        resid.abs() <= 1e-10 * (2.0 * jf + 1.0) * x,
                        format!("bonnet ratio x={x} j={j}"),
                    );
                }
            }
            check(ratios[j - 1] >= 1.0, format!("monotone x={x} j={j}"));
        }
    }

    // Upper incomplete gamma recurrence and derivative.
    for si in 1..=60 {
        let s = si as f64 * 0.5;
        for xi in 1..=80 {
            let x = xi as f64 * 0.5;
            let lhs = upper_incomplete_gamma(s + 1.0, x).unwrap();
            let rhs = s * upper_incomplete_gamma(s, x).unwrap() + (s * x.ln() - x).exp();
            check(
                (lhs - rhs).abs() <= 1e-10 * lhs,
                format!("gamma recurrence s={s} x={x}"),
            );

            let step = 1e-6;
            let f = |t: f64| {
                if x < s + 1.0 {
                    -regularized_gamma_p(s, t).unwrap() * gamma(s)
                } else {
                    upper_incomplete_gamma(s, t).unwrap()
                }
            };
            let fd = (f(x + step) - f(x - step)) / (2.0 * step);
            let density = ((s - 1.0) * x.ln() - x).exp();
            check(
                (fd + density).abs() <= 1e-5 * density.max(1.0),
                format!("gamma derivative s={s} x={x}"),
            );
        }
    }

    // Legendre derivative formula against central differences.
    for x in [1.1, 1.5, 2.0, 4.0] {
        let seq = legendre_sequence(x, 30).unwrap();
        for j in 1..=30usize {
            let d = legendre_derivative(x, j, seq[j].value, seq[j - 1].value).unwrap();
            let h = 1e-6;
            let fd = (legendre_sequence(x + h, j).unwrap()[j].value
                - legendre_sequence(x - h, j).unwrap()[j].value)
                / (2.0 * h);
            check(
                (d - fd).abs() <= 1e-6 * d.abs().max(1.0),
                format!("legendre derivative x={x} j={j}"),
            );
        }
    }

    // Quantile round trips.
    for df in 1..=40 {
        let df = df as f64;
        for qi in 1..=99 {
            let q = qi as f64 / 100.0;
            let x = chi2_quantile(df, q).unwrap();
            check(
                (chi2_cdf(df, x).unwrap() - q).abs() <= 1e-10,
                format!("quantile df={df} q={q}"),
            );
        }
        for xi in 1..=60 {
            let x = xi as f64;
            let q = chi2_cdf(df, x).unwrap();
            if q > 1e-10 && q < 1.0 - 1e-10 {
                let back = chi2_quantile(df, q).unwrap();
                check(
                    (chi2_cdf(df, back).unwrap() - q).abs() <= 1e-10,
                    format!("cdf df={df} x={x}"),
                );
            }
        }
    }

    outcome(
        fails.is_empty(),
        format!("{count} checks; failures {fails:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("Table 1 reproduction", table_one),
        ("Dominance by chi2_{p-1}", dominance),
        ("Figure 1 ordering", figure_one),
        ("Exact vs simulated CDF", exact_vs_simulated),
        ("Inequality suite (verify, jmax 200)", verify_suite),
        ("Oracle equivalence", oracle_equivalence),
        ("Special-function suite", special_functions),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let o = f();
        println!(
            "{} {name}: {} [{:.1}s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
