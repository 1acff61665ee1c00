//! Experiment orchestration and the verification suites.
//!
//! The theorem experiment samples instances at `n = ⌈C·m²·ln m⌉`, runs a
//! solver with target 1 and records one CSV row per trial. The suites run
//! each module's inequality battery at fixed default sizes and report every
//! failing point together with the seed and parameters that reproduce it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_traits::ToPrimitive;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::fourier::{
    check_large_entry_bound, check_one_factor_summary, check_quadratic_approx,
    check_small_norm_bound, dhat, dhat_bruteforce, far_region_integral, gaussian_ball_integral,
    gaussian_norm_tail, quad_approx_k, spike_dominance_with, DhatEvaluator, C_SPIKE, ONE_FACTOR_C,
    SMALL_NORM_B,
};
use crate::inversion::{
    cancellation_check, prob_even_variant, prob_exact, prob_fourier_mc, three_region_assembly,
};
use crate::rng;
use crate::setsystem::{sample_bernoulli, IncidenceMatrix};
use crate::smoothing::{check_rhat_bounds, rho, spike_dominance_r, Smoother};
use crate::solvers::{
    count_good_colorings, counting_bound, exhaustive_min_disc, local_search, random_search,
};

/// Largest `n` an experiment may request.
pub const MAX_EXPERIMENT_N: usize = 10_000_000;

/// Largest `n` for the exhaustive lower-bound probe.
pub const MAX_PROBE_N: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exhaustive,
    Random,
    Local,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "random" => Ok(Self::Random),
            "local" => Ok(Self::Local),
            other => Err(invalid(format!(
                "unknown solver {other:?}; expected exhaustive, random or local"
            ))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exhaustive => "exhaustive",
            Self::Random => "random",
            Self::Local => "local",
        })
    }
}

/// `⌈C·m²·ln m⌉`, at least 1.
pub fn regime_n(m: usize, c: f64) -> Result<usize> {
    if m == 0 || !(c > 0.0 && c.is_finite()) {
        return Err(invalid(format!(
            "need m ≥ 1 and finite C > 0, got m = {m}, C = {c}"
        )));
    }
    let mf = m as f64;
    let n = (c * mf * mf * mf.ln()).ceil().max(1.0);
    if n > MAX_EXPERIMENT_N as f64 {
        return Err(Error::TooLarge {
            what: "n",
            limit: MAX_EXPERIMENT_N as u64,
            got: n.min(u64::MAX as f64) as u64,
        });
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ms: Vec<usize>,
    pub c: f64,
    pub p: f64,
    pub trials: u64,
    pub solver: SolverKind,
    /// Trials for random search, flips per restart for local search.
    pub budget: u64,
    /// Restarts for local search; ignored by the other solvers.
    pub restarts: u64,
    pub seed: u64,
    /// Use this `n` for every `m` instead of the regime formula.
    pub n_override: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ms: vec![3],
            c: 4.0,
            p: 0.5,
            trials: 100,
            solver: SolverKind::Random,
            budget: 1_000_000,
            restarts: 50,
            seed: 42,
            n_override: None,
        }
    }
}

impl ExperimentConfig {
    pub fn n_for(&self, m: usize) -> Result<usize> {
        match self.n_override {
            Some(n) if n == 0 || n > MAX_EXPERIMENT_N => Err(Error::TooLarge {
                what: "n",
                limit: MAX_EXPERIMENT_N as u64,
                got: n as u64,
            }),
            Some(n) => Ok(n),
            None => regime_n(m, self.c),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid(format!("p = {} is not a probability", self.p)));
        }
        for &m in &self.ms {
            let n = self.n_for(m)?;
            if self.solver == SolverKind::Exhaustive && n > crate::solvers::MAX_EXHAUSTIVE_N {
                return Err(Error::TooLarge {
                    what: "n",
                    limit: crate::solvers::MAX_EXHAUSTIVE_N as u64,
                    got: n as u64,
                });
            }
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub trial: u64,
    /// Instance seed; the solver runs on `rng::derive(seed, 1)`.
    pub seed: u64,
    pub solver: SolverKind,
    pub budget: u64,
    pub found: bool,
    pub disc: Option<u64>,
    pub flips: u64,
}

/// Per-`m` aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MSummary {
    pub m: usize,
    pub n: usize,
    pub t: f64,
    pub trials: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Binomial standard error of the rate.
    pub stderr: f64,
    pub mean_flips: f64,
    pub median_flips: u64,
    pub max_flips: u64,
    /// `n ≥ C·m²·ln m`
    pub regime_n: bool,
    /// `t = pm ≥ C·ln n`
    pub regime_t: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub config: ExperimentConfig,
    pub summaries: Vec<MSummary>,
    #[serde(skip)]
    pub rows: Vec<TrialRow>,
}

impl TheoremReport {
    /// Rows as CSV with header `m,n,p,C,trial,seed,solver,budget,found,disc,flips`.
    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[TrialRow]) -> Result<String> {
    // headers are written by hand so that an empty run still gets one
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "m", "n", "p", "C", "trial", "seed", "solver", "budget", "found", "disc", "flips",
    ])
    .map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn run_trial(cfg: &ExperimentConfig, m: usize, n: usize, trial: u64) -> Result<TrialRow> {
    let seed = rng::derive(rng::derive(cfg.seed, m as u64), trial);
    let a = sample_bernoulli(m, n, cfg.p, seed)?;
    let solver_seed = rng::derive(seed, 1);
    let res = match cfg.solver {
        SolverKind::Random => random_search(&a, 1, cfg.budget, solver_seed)?,
        SolverKind::Local => local_search(&a, 1, cfg.restarts, cfg.budget, solver_seed)?,
        SolverKind::Exhaustive => {
            let (disc, _) = exhaustive_min_disc(&a)?;
            crate::solvers::SolveResult {
                found: disc <= 1,
                disc: Some(disc),
                coloring: None,
                flips_used: 1 << (n - 1),
            }
        }
    };
    Ok(TrialRow {
        m,
        n,
        p: cfg.p,
        c: cfg.c,
        trial,
        seed,
        solver: cfg.solver,
        budget: cfg.budget,
        found: res.found,
        disc: res.disc,
        flips: res.flips_used,
    })
}

fn summarize(cfg: &ExperimentConfig, m: usize, n: usize, rows: &[TrialRow]) -> MSummary {
    let trials = rows.len() as u64;
    let successes = rows.iter().filter(|r| r.found).count() as u64;
    let rate = if trials > 0 {
        successes as f64 / trials as f64
    } else {
        0.0
    };
    let stderr = if trials > 0 {
        (rate * (1.0 - rate) / trials as f64).sqrt()
    } else {
        0.0
    };
    let mut flips: Vec<u64> = rows.iter().map(|r| r.flips).collect();
    flips.sort_unstable();
    let t = cfg.p * m as f64;
    let mf = m as f64;
    MSummary {
        m,
        n,
        t,
        trials,
        successes,
        success_rate: rate,
        stderr,
        mean_flips: if trials > 0 {
            flips.iter().sum::<u64>() as f64 / trials as f64
        } else {
            0.0
        },
        median_flips: flips.get(flips.len() / 2).copied().unwrap_or(0),
        max_flips: flips.last().copied().unwrap_or(0),
        regime_n: n as f64 >= cfg.c * mf * mf * mf.ln(),
        regime_t: t >= cfg.c * (n as f64).ln(),
    }
}

/// Run `trials` instances for every `m`, in parallel; rows come back in
/// `(m, trial)` order whatever the scheduling.
pub fn run_theorem_experiment(cfg: &ExperimentConfig) -> Result<TheoremReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &m in &cfg.ms {
        let n = cfg.n_for(m)?;
        let block: Vec<TrialRow> = (0..cfg.trials)
            .into_par_iter()
            .map(|k| run_trial(cfg, m, n, k))
            .collect::<Result<_>>()?;
        if cfg.trials > 0 {
            summaries.push(summarize(cfg, m, n, &block));
        }
        rows.extend(block);
    }
    Ok(TheoremReport {
        config: cfg.clone(),
        summaries,
        rows,
    })
}

/// Success rates over a grid of `n` at fixed `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub m: usize,
    pub points: Vec<MSummary>,
    /// Each rate is at least the previous one minus two combined stderrs.
    pub ok: bool,
}

pub fn check_monotone_in_n(
    base: &ExperimentConfig,
    m: usize,
    ns: &[usize],
) -> Result<MonotonicityReport> {
    let mut points = Vec::new();
    for &n in ns {
        let cfg = ExperimentConfig {
            ms: vec![m],
            n_override: Some(n),
            ..base.clone()
        };
        points.extend(run_theorem_experiment(&cfg)?.summaries);
    }
    let ok = points.windows(2).all(|w| {
        let slack = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].success_rate >= w[0].success_rate - slack
    });
    Ok(MonotonicityReport { m, points, ok })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport {
    pub m: usize,
    pub n: usize,
    pub p: f64,
    pub trials: u64,
    pub seed: u64,
    /// Number of instances with each exact minimum discrepancy.
    pub min_disc_histogram: BTreeMap<u64, u64>,
    /// Fraction of instances with a coloring of discrepancy at most 1.
    pub frac_disc_le_1: f64,
    /// Mean number of colorings with discrepancy at most 1.
    pub mean_good_colorings: f64,
    pub kappa: f64,
    /// `2ⁿ(κ/√n)^m`
    pub counting_bound: f64,
    pub bound_ok: bool,
}

/// Exact minimum discrepancy and good-coloring counts on small instances,
/// against the counting bound with constant `kappa`.
pub fn run_lowerbound_probe(
    m: usize,
    n: usize,
    p: f64,
    trials: u64,
    kappa: f64,
    seed: u64,
) -> Result<LowerBoundReport> {
    if n > MAX_PROBE_N {
        return Err(Error::TooLarge {
            what: "n",
            limit: MAX_PROBE_N as u64,
            got: n as u64,
        });
    }
    let per: Vec<(u64, u64)> = (0..trials)
        .into_par_iter()
        .map(|k| {
            let a = sample_bernoulli(m, n, p, rng::derive(seed, k))?;
            Ok((exhaustive_min_disc(&a)?.0, count_good_colorings(&a, 1)?))
        })
        .collect::<Result<_>>()?;
    let mut hist = BTreeMap::new();
    for &(d, _) in &per {
        *hist.entry(d).or_insert(0) += 1;
    }
    let denom = trials.max(1) as f64;
    let mean = per.iter().map(|&(_, c)| c as f64).sum::<f64>() / denom;
    let bound = counting_bound(m, n, 1, kappa);
    Ok(LowerBoundReport {
        m,
        n,
        p,
        trials,
        seed,
        min_disc_histogram: hist,
        frac_disc_le_1: per.iter().filter(|&&(d, _)| d <= 1).count() as f64 / denom,
        mean_good_colorings: mean,
        kappa,
        counting_bound: bound,
        bound_ok: mean <= bound,
    })
}

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 7] = [
    "smoothing",
    "fourier",
    "spike",
    "decay",
    "gaussian",
    "inversion",
    "assembly",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub check: String,
    /// Seed and parameters reproducing the failure.
    pub witness: Value,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginEntry {
    pub bound: String,
    pub domain: String,
    /// Smallest `rhs - lhs` seen; negative means a violation.
    pub worst_margin: f64,
    pub worst_point: Value,
    pub checks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: u64,
    /// Points outside a check's preconditions.
    pub skipped: u64,
    pub failures: Vec<Failure>,
    pub worst_margins: Vec<MarginEntry>,
    pub runtime_s: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Keep at most this many failures per suite; `checks` still counts all.
const MAX_REPORTED_FAILURES: usize = 100;

struct Battery {
    seed: u64,
    checks: u64,
    skipped: u64,
    failures: Vec<Failure>,
    margins: Vec<MarginEntry>,
}

impl Battery {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            checks: 0,
            skipped: 0,
            failures: Vec::new(),
            margins: Vec::new(),
        }
    }

    fn fail(&mut self, check: &str, witness: Value, detail: String) {
        if self.failures.len() < MAX_REPORTED_FAILURES {
            self.failures.push(Failure {
                check: check.into(),
                witness,
                detail,
            });
        }
    }

    /// A pass/fail check with no margin.
    fn check(
        &mut self,
        name: &str,
        ok: bool,
        witness: impl FnOnce() -> Value,
        detail: impl FnOnce() -> String,
    ) {
        self.checks += 1;
        if !ok {
            self.fail(name, witness(), detail());
        }
    }

    /// A check with margin `rhs - lhs`, tracked per `(bound, domain)`.
    fn margin(
        &mut self,
        bound: &str,
        domain: &str,
        margin: f64,
        ok: bool,
        point: impl FnOnce() -> Value,
    ) {
        self.checks += 1;
        let k = match self
            .margins
            .iter()
            .position(|e| e.bound == bound && e.domain == domain)
        {
            Some(k) => k,
            None => {
                self.margins.push(MarginEntry {
                    bound: bound.into(),
                    domain: domain.into(),
                    worst_margin: f64::INFINITY,
                    worst_point: Value::Null,
                    checks: 0,
                });
                self.margins.len() - 1
            }
        };
        let need_point = margin < self.margins[k].worst_margin || !ok;
        let pt = if need_point { Some(point()) } else { None };
        let e = &mut self.margins[k];
        e.checks += 1;
        if margin < e.worst_margin {
            e.worst_margin = margin;
            e.worst_point = pt.clone().unwrap_or(Value::Null);
        }
        if !ok {
            self.fail(
                bound,
                pt.unwrap_or(Value::Null),
                format!("margin {margin:e}"),
            );
        }
    }

    fn error(&mut self, name: &str, witness: Value, e: Error) {
        self.checks += 1;
        self.fail(name, witness, e.to_string());
    }

    fn finish(self, suite: &str, start: Instant) -> SuiteReport {
        SuiteReport {
            suite: suite.into(),
            seed: self.seed,
            checks: self.checks,
            skipped: self.skipped,
            failures: self.failures,
            worst_margins: self.margins,
            runtime_s: start.elapsed().as_secs_f64(),
        }
    }
}

/// Run one named suite at its default sizes.
pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut b = Battery::new(seed);
    match name {
        "smoothing" => suite_smoothing(&mut b),
        "fourier" => suite_fourier(&mut b),
        "spike" => suite_spike(&mut b),
        "decay" => suite_decay(&mut b),
        "gaussian" => suite_gaussian(&mut b),
        "inversion" => suite_inversion(&mut b),
        "assembly" => suite_assembly(&mut b),
        other => {
            return Err(invalid(format!(
                "unknown suite {other:?}; expected one of {}",
                SUITES.join(", ")
            )));
        }
    }
    Ok(b.finish(name, start))
}

/// Grid `-½, -½ + 10⁻³, …, ½`.
fn unit_grid() -> impl Iterator<Item = f64> {
    (0..=1000).map(|k| -0.5 + k as f64 * 1e-3)
}

fn suite_smoothing(b: &mut Battery) {
    for delta in 1..=8u32 {
        for t in unit_grid() {
            let rep = check_rhat_bounds(delta, &[t]);
            let pt = || json!({ "delta": delta, "theta": [t] });
            if let Some(c) = rep.upper {
                b.margin("upper", "‖θ‖∞ ≤ 1/2", c.margin, c.ok, pt);
            }
            if let Some(c) = rep.lower {
                b.margin("lower", "‖θ‖∞ ≤ 1/4", c.margin, c.ok, pt);
            }
            if let Some(c) = rep.ratio {
                b.margin("ratio", "‖θ‖∞ ≤ 1/8", c.margin, c.ok, pt);
            }
        }
    }
    for m in 2..=6usize {
        for delta in 1..=8u32 {
            let seed = b.seed;
            let mut rng = rng::stream(rng::derive(seed, 100 + m as u64), delta as u64);
            for (box_half, count) in [(0.5, 100), (0.25, 100), (0.125, 60)] {
                for _ in 0..count {
                    let theta: Vec<f64> = (0..m)
                        .map(|_| rng.random_range(-box_half..=box_half))
                        .collect();
                    let rep = check_rhat_bounds(delta, &theta);
                    let pt = || json!({ "delta": delta, "theta": theta.clone(), "seed": seed });
                    if let Some(c) = rep.upper {
                        b.margin("upper", "‖θ‖∞ ≤ 1/2, m ≥ 2", c.margin, c.ok, pt);
                    }
                    if let Some(c) = rep.lower {
                        b.margin("lower", "‖θ‖∞ ≤ 1/4, m ≥ 2", c.margin, c.ok, pt);
                    }
                    if let Some(c) = rep.ratio {
                        b.margin("ratio", "‖θ‖∞ ≤ 1/8, m ≥ 2", c.margin, c.ok, pt);
                    }
                }
            }
        }
    }
    for delta in 1..=12u32 {
        let r = rho(delta);
        let target = 0.5f64.powi(delta as i32);
        b.margin(
            "rho = 2^-Δ",
            "Δ ≤ 12",
            1e-9 - (r - target).abs(),
            (r - target).abs() <= 1e-9,
            || json!({ "delta": delta, "rho": r }),
        );
        b.check(
            "rho ≤ exp(-0.69Δ)",
            r <= (-0.69 * delta as f64).exp(),
            || json!({ "delta": delta }),
            || format!("rho = {r}"),
        );
    }
}

fn random_instance(
    rng: &mut rng::Stream,
    m_max: usize,
    n_range: (usize, usize),
    ps: &[f64],
) -> (usize, usize, f64, u64) {
    let m = rng.random_range(1..=m_max);
    let n = rng.random_range(n_range.0..=n_range.1);
    let p = ps[rng.random_range(0..ps.len())];
    (m, n, p, rng.random())
}

fn suite_fourier(b: &mut Battery) {
    let mut rng = rng::stream(b.seed, 1);
    for case in 0..100 {
        let (m, n, p, seed) = random_instance(&mut rng, 4, (1, 16), &[0.2, 0.5, 0.8]);
        let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-0.5..0.5)).collect();
        let witness = || json!({ "case": case, "m": m, "n": n, "p": p, "instance_seed": seed, "theta": theta.clone() });
        let res = sample_bernoulli(m, n, p, seed)
            .and_then(|a| Ok((dhat(&a, &theta)?, dhat_bruteforce(&a, &theta)?)));
        match res {
            Ok((fast, slow)) => {
                let diff = (fast - slow).abs();
                b.margin(
                    "dhat product = bruteforce",
                    "n ≤ 16, m ≤ 4, tol 1e-10",
                    1e-10 - diff,
                    diff <= 1e-10,
                    witness,
                )
            }
            Err(e) => b.error("dhat product = bruteforce", witness(), e),
        }
    }
    let k = quad_approx_k();
    for (idx, (m, n)) in [(2usize, 400usize), (3, 400), (4, 800), (6, 1000)]
        .into_iter()
        .enumerate()
    {
        let seed = rng::derive(b.seed, 10 + idx as u64);
        let a = match sample_bernoulli(m, n, 0.5, seed) {
            Ok(a) => a,
            Err(e) => return b.error("quadratic approximation", json!({ "m": m, "n": n }), e),
        };
        let radius = 1.0 / (16.0 * a.t().sqrt());
        let mut rng = rng::stream(seed, 2);
        for _ in 0..200 {
            let theta = ball_point(&mut rng, m, radius);
            match check_quadratic_approx(&a, &theta, k) {
                Ok(rep) => b.margin(
                    "quadratic approximation of ln D̂",
                    "‖θ‖₂ ≤ 1/(16√t)",
                    rep.bound - rep.residual,
                    rep.ok,
                    || json!({ "m": m, "n": n, "p": 0.5, "instance_seed": seed, "theta": theta.clone() }),
                ),
                Err(Error::Precondition(_)) => b.skipped += 1,
                Err(e) => b.error("quadratic approximation", json!({ "instance_seed": seed }), e),
            }
        }
    }
}

/// Uniform point of the Euclidean ball of radius `r` by rejection.
fn ball_point(rng: &mut rng::Stream, m: usize, r: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| rng.random_range(-r..=r)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= r * r {
            return v;
        }
    }
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while i > 0 {
        out += (i % base) as f64 * inv;
        i /= base;
        inv /= base as f64;
    }
    out
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic point set in `‖θ‖₂ ≤ radius`: the origin, eight radii
/// along every signed axis, and Halton points of the bounding cube that
/// land in the ball, `count` in total.
pub fn ball_grid(m: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    assert!((1..=PRIMES.len()).contains(&m));
    let mut pts = vec![vec![0.0; m]];
    for i in 0..m {
        for k in 1..=8 {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; m];
                v[i] = s * radius * k as f64 / 8.0;
                pts.push(v);
            }
        }
    }
    let mut idx = 1u64;
    while pts.len() < count {
        let v: Vec<f64> = PRIMES[..m]
            .iter()
            .map(|&p| radius * (2.0 * radical_inverse(idx, p) - 1.0))
            .collect();
        idx += 1;
        if v.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            pts.push(v);
        }
    }
    pts
}

fn suite_spike(b: &mut Battery) {
    for m in 1..=8usize {
        for theta in ball_grid(m, C_SPIKE, 1000) {
            let rep = spike_dominance_r(1, &theta);
            b.margin(
                "R̂ spike dominance",
                "‖θ‖₂ ≤ 1/16, Δ = 1",
                rep.lhs - rep.rhs,
                rep.holds,
                || json!({ "m": m, "theta": theta.clone() }),
            );
        }
    }
    let smoother = Smoother::lazy(1);
    for k in 0..100u64 {
        let seed = rng::derive(b.seed, 1000 + k);
        let a = match sample_bernoulli(6, 60, 0.5, seed) {
            Ok(a) => a,
            Err(e) => return b.error("X̂ spike dominance", json!({ "instance_seed": seed }), e),
        };
        let eval = DhatEvaluator::new(&a);
        let mut rng = rng::stream(seed, 0);
        for _ in 0..10 {
            let theta = ball_point(&mut rng, 6, C_SPIKE);
            let witness = || json!({ "m": 6, "n": 60, "p": 0.5, "instance_seed": seed, "theta": theta.clone() });
            match spike_dominance_with(&eval, &smoother, &theta) {
                Ok(rep) => {
                    b.margin(
                        "X̂ spike dominance (log)",
                        "‖θ‖₂ ≤ 1/16, m = 6",
                        rep.ln_lhs - rep.ln_rhs,
                        rep.holds,
                        witness,
                    );
                    b.check(
                        "|D̂| periodic under Λ",
                        rep.periodicity_deviation <= crate::fourier::PERIODICITY_TOL,
                        witness,
                        || format!("log deviation {}", rep.periodicity_deviation),
                    );
                }
                Err(e) => b.error("X̂ spike dominance", witness(), e),
            }
        }
    }
}

fn quarter_box(rng: &mut rng::Stream, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.random_range(-0.25..=0.25)).collect()
}

/// `p` uniform on `(0, ½]`.
fn small_p(rng: &mut rng::Stream) -> f64 {
    0.5 * (1.0 - rng.random::<f64>())
}

fn suite_decay(b: &mut Battery) {
    let cases = 1000u64;
    let seed = b.seed;
    let run = |tag: u64,
               f: &(dyn Fn(&mut rng::Stream) -> (Value, Result<crate::smoothing::BoundCheck>)
                     + Sync)| {
        (0..cases)
            .into_par_iter()
            .map(|k| f(&mut rng::stream(rng::derive(seed, tag), k)))
            .collect::<Vec<_>>()
    };

    let large = run(20, &|rng| {
        let m = rng.random_range(1..=14);
        let p = small_p(rng);
        let theta = quarter_box(rng, m);
        let res = check_large_entry_bound(&theta, p);
        (json!({ "p": p, "theta": theta }), res)
    });
    let small = run(21, &|rng| {
        let m = rng.random_range(1..=14);
        let p = small_p(rng);
        let mut theta = quarter_box(rng, m);
        let sq: f64 = theta.iter().map(|t| t * t).sum();
        let target = SMALL_NORM_B * rng.random::<f64>() / p;
        let scale = if sq > 0.0 { (target / sq).sqrt() } else { 1.0 };
        let inf = theta.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        let scale = if inf > 0.0 {
            scale.min(0.25 / inf)
        } else {
            scale
        };
        theta.iter_mut().for_each(|t| *t *= scale);
        let s = rng.random_range(0.0..std::f64::consts::TAU);
        let res = check_small_norm_bound(&theta, p, s, SMALL_NORM_B);
        (json!({ "p": p, "s": s, "theta": theta }), res)
    });
    let summary = run(22, &|rng| {
        let m = rng.random_range(1..=14);
        let p = small_p(rng);
        let mut theta = quarter_box(rng, m);
        // half the cases small enough for the ¼p‖θ‖₂² branch
        if rng.random::<bool>() {
            let shrink = 10f64.powf(-3.0 * rng.random::<f64>());
            theta.iter_mut().for_each(|t| *t *= shrink);
        }
        let res = check_one_factor_summary(&theta, p, ONE_FACTOR_C);
        (json!({ "p": p, "theta": theta }), res)
    });
    for (name, domain, results) in [
        ("large entry", "‖θ‖∞ ≤ 1/4, p ≤ 1/2", large),
        (
            "small norm with phase",
            "‖θ‖∞ ≤ 1/4, p ≤ 1/2, p‖θ‖₂² ≤ 1e-3",
            small,
        ),
        (
            "one-factor summary",
            "‖θ‖∞ ≤ 1/4, p ≤ 1/2, c = 1e-3",
            summary,
        ),
    ] {
        for (k, (pt, res)) in results.into_iter().enumerate() {
            let pt = json!({ "case": k, "point": pt });
            match res {
                Ok(c) => b.margin(name, domain, c.margin, c.ok, || pt.clone()),
                Err(e) => b.error(name, pt, e),
            }
        }
    }

    for k in 0..5u64 {
        let inst = rng::derive(seed, 30 + k);
        let res = sample_bernoulli(4, 1000, 0.5, inst).and_then(|a| {
            far_region_integral(
                &a,
                1.0 / (16.0 * a.t().sqrt()),
                100_000,
                rng::derive(inst, 1),
            )
        });
        let witness =
            || json!({ "m": 4, "n": 1000, "p": 0.5, "instance_seed": inst, "samples": 100_000 });
        match res {
            Ok(rep) => {
                b.check(
                    "far-region side conditions",
                    rep.side_conditions_ok,
                    witness,
                    || format!("{rep:?}"),
                );
                let upper = rep.estimate.value + 3.0 * rep.estimate.stderr;
                b.margin(
                    "far region ≤ exp(-pδ²n/24)",
                    "m = 4, n = 1000",
                    rep.bound - upper,
                    rep.ok,
                    witness,
                );
            }
            Err(e) => b.error("far region", witness(), e),
        }
    }
}

fn suite_gaussian(b: &mut Battery) {
    for (k, (m, r)) in [(2usize, 1.0), (2, 4.0), (3, 1.0), (3, 4.0)]
        .into_iter()
        .enumerate()
    {
        let s = rng::derive(b.seed, 40 + k as u64);
        let witness = || json!({ "m": m, "r": r, "samples": 1_000_000, "seed": s });
        match gaussian_ball_integral(m, r, 1_000_000, s) {
            Ok(rep) => b.margin(
                "ball integral ≥ ½(2πr)^(-m/2)",
                "m ∈ {2,3}, r ∈ {1,4}",
                rep.estimate.value + 3.0 * rep.estimate.stderr - rep.bound,
                rep.ok,
                witness,
            ),
            Err(e) => b.error("ball integral", witness(), e),
        }
    }
    for m in [1usize, 2, 4, 8, 16] {
        for lambda in [0.5, 1.0, 2.0, 3.0] {
            let s = rng::derive(b.seed, 50 + m as u64);
            let rep = gaussian_norm_tail(m, lambda, 100_000, s);
            b.margin(
                "Pr[‖G‖ > √m + λ] ≤ 2exp(-λ²/2)",
                "m ≤ 16",
                rep.bound - rep.frequency,
                rep.ok,
                || json!({ "m": m, "lambda": lambda, "samples": 100_000, "seed": s }),
            );
        }
    }
}

/// `|estimate - exact| ≤ max(3·stderr, 10⁻³)`.
fn mc_agrees(est: &crate::fourier::Estimate, exact: f64) -> (f64, bool) {
    let tol = (3.0 * est.stderr).max(1e-3);
    let diff = (est.value - exact).abs();
    (tol - diff, diff <= tol)
}

fn suite_inversion(b: &mut Battery) {
    let mut rng = rng::stream(b.seed, 2);
    let lazy = Smoother::lazy(1);
    for case in 0..10 {
        let (m, n, p, seed) = random_instance(&mut rng, 3, (4, 12), &[0.3, 0.5]);
        let witness = || json!({ "case": case, "m": m, "n": n, "p": p, "instance_seed": seed, "samples": 200_000 });
        let res = sample_bernoulli(m, n, p, seed).and_then(|a| {
            let exact = prob_exact(&a, &lazy, &vec![0; m])?
                .to_f64()
                .unwrap_or(f64::NAN);
            Ok((
                exact,
                prob_fourier_mc(&a, &lazy, &vec![0; m], 200_000, rng::derive(seed, 1))?,
            ))
        });
        match res {
            Ok((exact, est)) => {
                let (margin, ok) = mc_agrees(&est, exact);
                b.margin(
                    "MC inversion = exact",
                    "m ≤ 3, n ≤ 12, Δ = 1",
                    margin,
                    ok,
                    witness,
                )
            }
            Err(e) => b.error("MC inversion = exact", witness(), e),
        }
    }

    let zero = cancellation_check(&[0, 0, 0], 1000, b.seed);
    match zero {
        Ok(c) => b.check(
            "cancellation at t = 0",
            c.re.value == 1.0 && c.im.value == 0.0,
            || json!({ "t": [0, 0, 0] }),
            || format!("{c:?}"),
        ),
        Err(e) => b.error("cancellation at t = 0", json!({ "t": [0, 0, 0] }), e),
    }
    for t in [
        vec![1i64],
        vec![0, 2],
        vec![1, -1, 0],
        vec![3, 0, -2, 1],
        vec![0, 0, 0, 0, 5],
    ] {
        let s = rng::derive(b.seed, 60 + t.len() as u64);
        let witness = || json!({ "t": t.clone(), "samples": 100_000, "seed": s });
        match cancellation_check(&t, 100_000, s) {
            Ok(c) => {
                let ok =
                    c.re.value.abs() <= 3.0 * c.re.stderr && c.im.value.abs() <= 3.0 * c.im.stderr;
                b.check("cancellation at t ≠ 0", ok, witness, || format!("{c:?}"));
            }
            Err(e) => b.error("cancellation at t ≠ 0", witness(), e),
        }
    }

    let fixed = [
        IncidenceMatrix::from_dense(&[vec![1, 1, 0, 0], vec![0, 1, 1, 0], vec![1, 1, 1, 1]]),
        IncidenceMatrix::from_dense(&[
            vec![1, 0, 0, 0, 0],
            vec![1, 1, 1, 0, 0],
            vec![0, 0, 1, 1, 1],
        ]),
    ];
    for (k, a) in fixed.into_iter().enumerate() {
        even_case(
            b,
            a,
            json!({ "fixed": k }),
            rng::derive(b.seed, 70 + k as u64),
        );
    }
    for k in 0..4u64 {
        let (m, n, p, seed) = random_instance(&mut rng, 3, (4, 12), &[0.3, 0.5]);
        even_case(
            b,
            sample_bernoulli(m, n, p, seed),
            json!({ "m": m, "n": n, "p": p, "instance_seed": seed }),
            rng::derive(seed, 2 + k),
        );
    }
}

fn even_case(b: &mut Battery, a: Result<IncidenceMatrix>, witness: Value, seed: u64) {
    let res = a.and_then(|a| {
        let exact = prob_exact(&a, &Smoother::parity(&a), &vec![0; a.m()])?
            .to_f64()
            .unwrap_or(f64::NAN);
        Ok((exact, prob_even_variant(&a, 200_000, seed)?))
    });
    match res {
        Ok((exact, est)) => {
            let (margin, ok) = mc_agrees(&est, exact);
            b.margin(
                "even variant = exact parity",
                "m ≤ 3, n ≤ 12",
                margin,
                ok,
                || json!({ "instance": witness, "samples": 200_000, "seed": seed }),
            )
        }
        Err(e) => b.error("even variant = exact parity", witness, e),
    }
}

fn suite_assembly(b: &mut Battery) {
    let smoother = Smoother::lazy(1);
    for (k, (m, n)) in [(2usize, 200usize), (2, 400), (3, 400), (4, 800)]
        .into_iter()
        .enumerate()
    {
        let seed = rng::derive(b.seed, 80 + k as u64);
        let witness =
            || json!({ "m": m, "n": n, "p": 0.5, "instance_seed": seed, "samples": 400_000 });
        let res = sample_bernoulli(m, n, 0.5, seed).and_then(|a| {
            Ok((
                three_region_assembly(&a, &smoother, 400_000, rng::derive(seed, 1))?,
                crate::fourier::central_mass(&a, &smoother, 400_000, rng::derive(seed, 2))?,
            ))
        });
        match res {
            Ok((rep, central)) => {
                b.check("assembly: central dominates", rep.holds, witness, || {
                    format!("{rep:?}")
                });
                b.margin(
                    "central mass ≥ ½(2πnm)^(-m/2)",
                    "p = 1/2",
                    central.estimate.value + 3.0 * central.estimate.stderr - central.bound,
                    central.ok,
                    witness,
                );
            }
            Err(e) => b.error("assembly", witness(), e),
        }
    }
}
