//! Acceptance gate. Each criterion prints one PASS/FAIL line with its runtime;
//! the process exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use coded_batch::analytic::{
    exact_b1_ejct, exact_bimodal_ejct, f_derivative_scan, quadrature_ejct, solve_r_prime,
};
use coded_batch::experiments::run_path_battery;
use coded_batch::optimizer::{optimize_batch, optimize_joint, SimOptions};
use coded_batch::simulator::simulate_ejct;
use coded_batch::special::{batch_from_m_normal_approx, inverse_gamma_p, regularized_gamma_p};
use coded_batch::{Method, Policy, ServiceModel, SystemSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn se(delta: f64, w: f64) -> ServiceModel {
    ServiceModel::shifted_exponential(delta, w).unwrap()
}

fn spec(n: u64, j: u64) -> SystemSpec {
    SystemSpec::new(n, j).unwrap()
}

fn sample_paths() -> Outcome {
    let battery = run_path_battery(1000, 20_240_601).unwrap();
    outcome(
        battery.passed(),
        format!(
            "{} matrices, {} groupings, {} min / {} max violations",
            battery.matrices, battery.groupings, battery.min_violations, battery.max_violations
        ),
    )
}

/// Mean of the k-th smallest slow-CU-count time over all 2^(n b) CU outcomes.
fn brute_force_bimodal(t_fast: f64, t_slow: f64, eps: f64, n: u64, k: u64, b: u64) -> f64 {
    let bits = n * b;
    let mut total = 0.0;
    for mask in 0u64..(1 << bits) {
        let mut prob = 1.0;
        let mut times = Vec::with_capacity(n as usize);
        for worker in 0..n {
            let mut t = 0.0;
            for cu in 0..b {
                if mask >> (worker * b + cu) & 1 == 1 {
                    prob *= eps;
                    t += t_slow;
                } else {
                    prob *= 1.0 - eps;
                    t += t_fast;
                }
            }
            times.push(t);
        }
        times.sort_by(f64::total_cmp);
        total += prob * times[k as usize - 1];
    }
    total
}

fn oracle_equivalence() -> Outcome {
    let model = se(0.7, 1.3);
    let mut worst_quad = 0.0f64;
    for n in 2..=50u64 {
        for k in 1..=n {
            let quad = quadrature_ejct(&model, n, k, 1, 3).unwrap();
            let exact = exact_b1_ejct(&model, n, k, 3).unwrap();
            worst_quad = worst_quad.max(((quad - exact) / exact).abs());
        }
    }
    let mut worst_bimodal = 0.0f64;
    for (t_fast, t_slow, eps) in [(1.0, 2.5, 0.1), (0.5, 4.0, 0.35), (2.0, 2.1, 0.9)] {
        let model = ServiceModel::bimodal(t_fast, t_slow, eps).unwrap();
        for n in 1..=4u64 {
            for k in 1..=n {
                for b in 1..=3u64 {
                    let exact = exact_bimodal_ejct(&model, n, k, b, 1).unwrap();
                    let brute = brute_force_bimodal(t_fast, t_slow, eps, n, k, b);
                    worst_bimodal = worst_bimodal.max((exact - brute).abs());
                }
            }
        }
    }
    outcome(
        worst_quad <= 1e-6 && worst_bimodal <= 1e-12,
        format!("quadrature vs closed form max rel {worst_quad:.2e}; bimodal vs brute force max abs {worst_bimodal:.2e}"),
    )
}

fn calibration_grid() -> Vec<(SystemSpec, Policy, ServiceModel)> {
    let mut grid = Vec::new();
    type Case = (u64, u64, f64, f64, &'static [(u64, u64)]);
    let se_cases: [Case; 3] = [
        (
            10,
            60,
            1.0,
            1.0,
            &[(1, 1), (2, 30), (5, 3), (6, 10), (10, 6), (10, 1)],
        ),
        (8, 24, 0.2, 2.0, &[(3, 4), (4, 6), (6, 1), (8, 3)]),
        (12, 12, 3.0, 1.0, &[(4, 3), (6, 1), (12, 1)]),
    ];
    for (n, j, delta, w, policies) in se_cases {
        let s = spec(n, j);
        for &(k, b) in policies {
            grid.push((s, Policy::new(&s, k, b).unwrap(), se(delta, w)));
        }
    }
    let s = spec(6, 12);
    let bimodal = ServiceModel::bimodal(1.0, 3.0, 0.2).unwrap();
    for (k, b) in [(2, 2), (3, 4), (4, 3), (6, 1), (6, 2), (1, 4), (2, 6)] {
        grid.push((s, Policy::new(&s, k, b).unwrap(), bimodal));
    }
    grid
}

fn monte_carlo_calibration() -> Outcome {
    let grid = calibration_grid();
    assert_eq!(grid.len(), 20);
    let mut worst_z = 0.0f64;
    for (s, p, model) in &grid {
        let oracle = match model {
            ServiceModel::ShiftedExponential { .. } => {
                quadrature_ejct(model, s.n, p.k, p.b, p.g).unwrap()
            }
            ServiceModel::BiModal { .. } => exact_bimodal_ejct(model, s.n, p.k, p.b, p.g).unwrap(),
        };
        let est = simulate_ejct(s, p, model, 100_000, 42).unwrap();
        worst_z = worst_z.max((est.mean - oracle).abs() / est.std_err);
    }
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            grid.iter()
                .take(4)
                .map(|(s, p, m)| simulate_ejct(s, p, m, 20_000, 7).unwrap())
                .collect::<Vec<_>>()
        })
    };
    let deterministic = run_with(1) == run_with(4);
    outcome(
        worst_z <= 4.0 && deterministic,
        format!("20 policies, worst |mean - oracle| = {worst_z:.2} std_err; 1 vs 4 threads identical: {deterministic}"),
    )
}

fn batch_argmins() -> Outcome {
    let model = se(1.0, 1.0);
    let sim = SimOptions::default();
    let cases = [(112u64, 8u64, 14u64), (112, 4, 1), (112, 7, 16), (56, 7, 1)];
    let mut lines = Vec::new();
    let mut pass = true;
    for (j, k, expected) in cases {
        let got = optimize_batch(&spec(10, j), &model, k, Method::Quadrature, false, &sim)
            .unwrap()
            .best_policy
            .b;
        pass &= got == expected;
        lines.push(format!("J={j},k={k}: b*={got} (want {expected})"));
    }
    outcome(pass, lines.join("; "))
}

fn joint(n: u64, j: u64, delta: f64, w: f64) -> (u64, u64) {
    let r = optimize_joint(
        &spec(n, j),
        &se(delta, w),
        Method::Quadrature,
        &SimOptions::default(),
    )
    .unwrap();
    (r.best_policy.k, r.best_policy.b)
}

fn joint_low_shift() -> Outcome {
    let got = joint(10, 60, 0.1, 1.0);
    outcome(
        got == (1, 1),
        format!("n=10,J=60,SE(0.1,1): {got:?} (want (1, 1))"),
    )
}

fn joint_rest() -> Outcome {
    let a = joint(10, 60, 3.0, 1.0);
    let b = joint(12, 12, 1.0, 1.0);
    let c = joint(10, 60, 1.0, 1.0);
    let pass = a == (10, 6) && b.1 == 1 && 1 < b.0 && b.0 < 12 && c == (10, 6);
    outcome(
        pass,
        format!("SE(3,1): {a:?} (want (10, 6)); n=12,J=12: {b:?} (want (k, 1), 1<k<12); SE(1,1): {c:?} (want (10, 6))"),
    )
}

fn threshold() -> Outcome {
    let t = solve_r_prime().unwrap();
    let residual = (t.m1.exp() - 1.0 - 2.0 * t.m1).abs();
    let pass =
        (t.m1 - 1.25643).abs() <= 1e-4 && (t.r_prime - 0.71534).abs() <= 1e-4 && residual <= 1e-9;
    outcome(
        pass,
        format!(
            "m1 = {:.8}, R' = {:.8}, residual {residual:.1e}",
            t.m1, t.r_prime
        ),
    )
}

fn special_functions() -> Outcome {
    let mut worst_roundtrip = 0.0f64;
    let mut worst_seed = 0.0f64;
    for i in 1..=19 {
        let r = i as f64 * 0.05;
        for b in 1..=200u64 {
            let m = inverse_gamma_p(r, b).unwrap();
            worst_roundtrip = worst_roundtrip.max((regularized_gamma_p(b, m).unwrap() - r).abs());
            if b >= 20 && (0.2 - 1e-9..=0.8 + 1e-9).contains(&r) {
                let b_hat = batch_from_m_normal_approx(m, r).unwrap();
                worst_seed = worst_seed.max((b_hat - b as f64).abs());
            }
        }
    }
    outcome(
        worst_roundtrip <= 1e-10 && worst_seed <= 2.0,
        format!("roundtrip max {worst_roundtrip:.2e}; normal-approximation batch error max {worst_seed:.3}"),
    )
}

fn endpoint_property() -> Outcome {
    let r_prime = solve_r_prime().unwrap().r_prime;
    let grid: Vec<u64> = (1..=200).collect();
    let mut pass = true;
    let mut argmins = Vec::new();
    for i in 1..=9 {
        let r = i as f64 / 10.0;
        let b = f_derivative_scan(r, &grid).unwrap().argmin();
        pass &= b == 1 || b == 200;
        if r > r_prime {
            pass &= b == 200;
        }
        argmins.push(format!("{r:.1}->{b}"));
    }
    outcome(
        pass,
        format!("argmin over b in 1..200: {}", argmins.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1",
            "sample-path inequalities",
            Duration::from_secs(5),
            sample_paths,
        ),
        (
            "2",
            "oracle equivalence",
            Duration::from_secs(30),
            oracle_equivalence,
        ),
        (
            "3",
            "Monte Carlo calibration",
            Duration::from_secs(60),
            monte_carlo_calibration,
        ),
        (
            "4",
            "batch-size argmins",
            Duration::from_secs(10),
            batch_argmins,
        ),
        (
            "5a",
            "joint optimum, small shift",
            Duration::from_secs(10),
            joint_low_shift,
        ),
        (
            "5b",
            "joint optima, remaining scenarios",
            Duration::from_secs(10),
            joint_rest,
        ),
        ("6", "rate threshold", Duration::from_secs(1), threshold),
        (
            "7",
            "special functions",
            Duration::from_secs(5),
            special_functions,
        ),
        (
            "8",
            "endpoint property",
            Duration::from_secs(5),
            endpoint_property,
        ),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {id:<3} {:<4} {name}: {} [{:.2}s / {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
