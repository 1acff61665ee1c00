//! Acceptance criteria 1 to 11. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_traits::ToPrimitive;
use rand::Rng;

use disclab::fourier::{dhat, dhat_bruteforce, far_region_integral, gaussian_ball_integral};
use disclab::harness::{
    check_monotone_in_n, run_suite, run_theorem_experiment, ExperimentConfig, SolverKind,
};
use disclab::inversion::{cancellation_check, prob_even_variant, prob_exact, prob_fourier_mc};
use disclab::rng;
use disclab::setsystem::{sample_bernoulli, IncidenceMatrix};
use disclab::smoothing::{rho, Smoother};

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// `|est - exact| ≤ max(3·stderr, 10⁻³)`, returning `diff / tol`.
fn agreement(value: f64, stderr: f64, exact: f64) -> f64 {
    (value - exact).abs() / (3.0 * stderr).max(1e-3)
}

fn c1_inversion_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = rng::stream(SEED, 1);
    let smoother = Smoother::lazy(1);
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for k in 0..50 {
        let m = rng.random_range(1..=3usize);
        let n = rng.random_range(4..=12usize);
        let p = if rng.random::<bool>() { 0.3 } else { 0.5 };
        let seed: u64 = rng.random();
        let a = sample_bernoulli(m, n, p, seed).unwrap();
        let zero = vec![0; m];
        let exact = prob_exact(&a, &smoother, &zero).unwrap().to_f64().unwrap();
        let est = prob_fourier_mc(&a, &smoother, &zero, 1_000_000, rng::derive(seed, 1)).unwrap();
        let r = agreement(est.value, est.stderr, exact);
        worst = worst.max(r);
        if r > 1.0 {
            bad.push(format!(
                "#{k} (m={m}, n={n}, p={p}, seed={seed}): {} vs {exact}",
                est.value
            ));
        }
    }
    let elapsed = start.elapsed();
    let pass = bad.is_empty() && elapsed <= Duration::from_secs(300);
    outcome(
        pass,
        format!(
            "50 instances, worst |diff|/tol = {worst:.3}, {} in {}{}",
            bad.len(),
            secs(elapsed),
            fmt_bad(&bad)
        ),
    )
}

fn fmt_bad(bad: &[String]) -> String {
    if bad.is_empty() {
        String::new()
    } else {
        format!("; failing: {}", bad.join("; "))
    }
}

fn c2_dhat_bruteforce() -> Outcome {
    let start = Instant::now();
    let mut rng = rng::stream(SEED, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(1..=4usize);
        let n = rng.random_range(1..=16usize);
        let p = rng.random_range(0.05..0.95);
        let a = sample_bernoulli(m, n, p, rng.random()).unwrap();
        let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        worst = worst.max((dhat(&a, &theta).unwrap() - dhat_bruteforce(&a, &theta).unwrap()).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-10 && elapsed <= Duration::from_secs(60),
        format!(
            "100 pairs, max |product - bruteforce| = {worst:e} in {}",
            secs(elapsed)
        ),
    )
}

fn suite_outcome(name: &str) -> Outcome {
    let rep = run_suite(name, SEED).unwrap();
    let worst = rep
        .worst_margins
        .iter()
        .map(|e| format!("{}: {:.3e}", e.bound, e.worst_margin))
        .collect::<Vec<_>>()
        .join(", ");
    let failing = rep
        .failures
        .iter()
        .take(3)
        .map(|f| format!("{} at {}", f.check, f.witness))
        .collect::<Vec<_>>();
    outcome(
        rep.passed(),
        format!(
            "{} checks, {} violations in {:.1}s; worst margins [{worst}]{}",
            rep.checks,
            rep.failures.len(),
            rep.runtime_s,
            fmt_bad(&failing)
        ),
    )
}

fn c6_far_region() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    let mut prev_mean_log = f64::INFINITY;
    for (g, n) in [500usize, 1000, 2000].into_iter().enumerate() {
        let mut ok = 0;
        let mut logs = Vec::new();
        for k in 0..20u64 {
            let seed = rng::derive(rng::derive(SEED, 600 + g as u64), k);
            let a = sample_bernoulli(4, n, 0.5, seed).unwrap();
            let delta = 1.0 / (16.0 * a.t().sqrt());
            let rep = far_region_integral(&a, delta, 200_000, rng::derive(seed, 1)).unwrap();
            ok += rep.ok as usize;
            logs.push(rep.estimate.value.ln());
        }
        let mean_log = logs.iter().sum::<f64>() / logs.len() as f64;
        if ok < 18 || mean_log >= prev_mean_log {
            pass = false;
        }
        prev_mean_log = mean_log;
        lines.push(format!(
            "n={n}: {ok}/20 below bound, mean ln estimate {mean_log:.3}"
        ));
    }
    outcome(pass, lines.join("; "))
}

fn c7_gaussian() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (m, r)) in [(2usize, 1.0), (2, 4.0), (3, 1.0), (3, 4.0)]
        .into_iter()
        .enumerate()
    {
        let rep =
            gaussian_ball_integral(m, r, 1_000_000, rng::derive(SEED, 700 + k as u64)).unwrap();
        pass &= rep.ok;
        parts.push(format!(
            "m={m} r={r}: {:.4e} ± {:.1e} vs {:.4e}",
            rep.estimate.value, rep.estimate.stderr, rep.bound
        ));
    }
    outcome(pass, parts.join("; "))
}

fn c8_cancellation() -> Outcome {
    let zero = cancellation_check(&[0, 0, 0], 100_000, SEED).unwrap();
    let mut pass = zero.re.value == 1.0 && zero.im.value == 0.0;
    let mut worst: f64 = 0.0;
    for (k, t) in [
        vec![1i64],
        vec![0, -3],
        vec![1, 1, 1],
        vec![2, 0, -1, 4],
        vec![0, 0, 0, 0, 7],
    ]
    .into_iter()
    .enumerate()
    {
        let c = cancellation_check(&t, 100_000, rng::derive(SEED, 800 + k as u64)).unwrap();
        for part in [c.re, c.im] {
            let ratio = part.value.abs() / (3.0 * part.stderr);
            worst = worst.max(ratio);
            pass &= part.value.abs() <= 3.0 * part.stderr;
        }
    }
    outcome(
        pass,
        format!(
            "t = 0 gives {}; five t ≠ 0: worst |estimate|/(3·stderr) = {worst:.3}",
            zero.re.value
        ),
    )
}

fn c9_rho() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut below = true;
    for delta in 1..=12u32 {
        let r = rho(delta);
        worst = worst.max((r - 0.5f64.powi(delta as i32)).abs());
        below &= r <= (-0.69 * delta as f64).exp();
    }
    outcome(
        worst <= 1e-9 && below,
        format!("max |ρ - 2^-Δ| = {worst:e} over Δ ≤ 12; ρ ≤ e^(-0.69Δ): {below}"),
    )
}

fn c10_theorem_desk_scale() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        ms: vec![3],
        c: 4.0,
        p: 0.5,
        trials: 100,
        solver: SolverKind::Random,
        budget: 1_000_000,
        restarts: 50,
        seed: SEED,
        n_override: None,
    };
    let rep = run_theorem_experiment(&cfg).unwrap();
    let s = &rep.summaries[0];
    let elapsed = start.elapsed();
    let main_ok = s.n == 40 && s.successes >= 95 && elapsed <= Duration::from_secs(600);

    let local = ExperimentConfig {
        ms: vec![8],
        trials: 100,
        solver: SolverKind::Local,
        budget: 1_000_000,
        restarts: 50,
        n_override: Some(2000),
        ..cfg.clone()
    };
    let bench = run_theorem_experiment(&local).unwrap();
    let b = &bench.summaries[0];
    let regime = check_monotone_in_n(&local, 8, &[500, 1000, 2000]).unwrap();
    let small = check_monotone_in_n(&local, 8, &[6, 10, 16]).unwrap();
    let rates = |r: &disclab::harness::MonotonicityReport| {
        r.points
            .iter()
            .map(|p| format!("n={}: {:.2}", p.n, p.success_rate))
            .collect::<Vec<_>>()
            .join(", ")
    };
    outcome(
        main_ok && regime.ok && small.ok,
        format!(
            "m=3 n={} random: {}/100 in {}; benchmark m=8 n=2000 local: rate {:.2}, flips mean {:.1} median {} max {}; \
             monotone in n [{}] {} and [{}] {}",
            s.n,
            s.successes,
            secs(elapsed),
            b.success_rate,
            b.mean_flips,
            b.median_flips,
            b.max_flips,
            rates(&regime),
            regime.ok,
            rates(&small),
            small.ok
        ),
    )
}

/// Force every row to have the given parity by toggling the last column.
fn with_row_parity(a: &IncidenceMatrix, odd: bool) -> IncidenceMatrix {
    let last = a.n() - 1;
    IncidenceMatrix::from_fn(a.m(), a.n(), |i, j| {
        let fix = (a.row_sum(i) % 2 == 1) != odd;
        a.get(i, j) ^ (fix && j == last)
    })
    .unwrap()
}

fn c11_even_variant() -> Outcome {
    let mut rng = rng::stream(SEED, 11);
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for k in 0..20 {
        let m = rng.random_range(1..=3usize);
        let n = rng.random_range(4..=12usize);
        let seed: u64 = rng.random();
        let base = sample_bernoulli(m, n, 0.5, seed).unwrap();
        let (a, kind) = match k {
            0 | 1 => (with_row_parity(&base, false), "all-even"),
            2 | 3 => (with_row_parity(&base, true), "all-odd"),
            _ => (base, "mixed"),
        };
        let exact = prob_exact(&a, &Smoother::parity(&a), &vec![0; m])
            .unwrap()
            .to_f64()
            .unwrap();
        let est = prob_even_variant(&a, 1_000_000, rng::derive(seed, 1)).unwrap();
        let r = agreement(est.value, est.stderr, exact);
        worst = worst.max(r);
        if r > 1.0 {
            bad.push(format!(
                "#{k} {kind} (m={m}, n={n}, seed={seed}): {} vs {exact}",
                est.value
            ));
        }
    }
    outcome(
        bad.is_empty(),
        format!(
            "20 instances (2 all-even, 2 all-odd), worst |diff|/tol = {worst:.3}{}",
            fmt_bad(&bad)
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("inversion oracle equivalence", c1_inversion_oracle),
        ("D̂ product vs bruteforce", c2_dhat_bruteforce),
        ("smoothing bounds", || suite_outcome("smoothing")),
        ("spike dominance", || suite_outcome("spike")),
        ("one-factor decay", || suite_outcome("decay")),
        ("far-region decay", c6_far_region),
        ("Gaussian comparator", c7_gaussian),
        ("cancellation lemma", c8_cancellation),
        ("rho(R) = 2^-Δ", c9_rho),
        ("desk-scale regime experiment", c10_theorem_desk_scale),
        ("even-variant consistency", c11_even_variant),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        failed += !o.pass as usize;
        println!(
            "criterion {:>2} {name}: {} ({})",
            k + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
