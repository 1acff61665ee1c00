use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use disclab::fourier::{d2_to_lattice, DhatEvaluator, ThetaPoint};
use disclab::harness::{self, ExperimentConfig, SolverKind, SUITES};
use disclab::inversion::{inversion_integral_mc, prob_exact, PointProbability};
use disclab::setsystem::{sample_bernoulli, IncidenceMatrix};
use disclab::smoothing::Smoother;
use disclab::solvers::{exhaustive_min_disc, local_search, random_search, SolveResult};
use disclab::Error;

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "disclab",
    version,
    about = "Discrepancy of random set systems: Fourier checks and coloring search"
)]
struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a Bernoulli(p) instance and print it as JSON.
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// Search for a coloring with discrepancy at most `target`.
    Disc {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_solver)]
        solver: SolverKind,
        #[arg(long, default_value_t = 1)]
        target: u64,
        /// Trials (random) or flips per restart (local).
        #[arg(long, default_value_t = 1_000_000)]
        budget: u64,
        /// Restarts for the local solver.
        #[arg(long, default_value_t = 50)]
        restarts: u64,
    },
    /// Pr[X = λ] by Monte Carlo inversion, optionally also exactly.
    Invert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        delta: u32,
        /// Use the parity smoother instead of R(Δ).
        #[arg(long)]
        parity: bool,
        /// Comma-separated integers; defaults to the zero vector.
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        /// Also compute the exact rational by enumeration (n ≤ 24).
        #[arg(long)]
        exact: bool,
    },
    /// Evaluate transforms at a point.
    Fourier {
        #[command(subcommand)]
        cmd: FourierCmd,
    },
    /// Run a verification suite; exits 1 on any failure.
    Verify {
        /// One of smoothing, fourier, spike, decay, gaussian, inversion, assembly, or all.
        #[arg(long)]
        suite: String,
    },
    /// Regime experiments.
    Experiment {
        #[command(subcommand)]
        cmd: ExperimentCmd,
    },
}

#[derive(Subcommand)]
enum FourierCmd {
    /// Print D̂, R̂, X̂ and the lattice distance at θ.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        /// Comma-separated coordinates in [-1/2, 1/2).
        #[arg(long, allow_hyphen_values = true)]
        theta: String,
        #[arg(long, default_value_t = 1)]
        delta: u32,
    },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    /// Success rate of a solver at n = ⌈C·m²·ln m⌉; CSV rows, JSON summary.
    Theorem(TheoremArgs),
    /// Exact minimum discrepancy on small instances against the counting bound.
    Lowerbound {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        #[arg(long, default_value_t = 50)]
        trials: u64,
        #[arg(long, default_value_t = 3.0)]
        kappa: f64,
    },
}

#[derive(Args)]
struct TheoremArgs {
    /// Comma-separated list of m.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    m: Vec<usize>,
    #[arg(long = "C", alias = "c", default_value_t = 4.0)]
    c: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long, value_parser = parse_solver, default_value = "random")]
    solver: SolverKind,
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 50)]
    restarts: u64,
    /// Fixed n for every m, overriding the formula.
    #[arg(long)]
    n: Option<usize>,
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ints(s: &str) -> Result<Vec<i64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|e| Error::InvalidParameter(format!("bad integer {t:?}: {e}")))
        })
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

fn load(path: &Path) -> Result<IncidenceMatrix, Error> {
    IncidenceMatrix::load(path)
}

fn run(cli: Cli) -> Result<u8, Error> {
    let out = cli.out.as_deref();
    let seed = cli.seed;
    match cli.cmd {
        Cmd::Gen { m, n, p } => {
            let a = sample_bernoulli(m, n, p, seed)?;
            emit(out, &(a.to_json() + "\n"))?;
        }
        Cmd::Disc {
            input,
            solver,
            target,
            budget,
            restarts,
        } => {
            let a = load(&input)?;
            let res = match solver {
                SolverKind::Exhaustive => {
                    let (disc, x) = exhaustive_min_disc(&a)?;
                    SolveResult {
                        found: disc <= target,
                        disc: Some(disc),
                        coloring: Some(x),
                        flips_used: 1u64 << (a.n() - 1),
                    }
                }
                SolverKind::Random => random_search(&a, target, budget, seed)?,
                SolverKind::Local => local_search(&a, target, restarts, budget, seed)?,
            };
            emit(out, &pretty(&res))?;
        }
        Cmd::Invert {
            input,
            delta,
            parity,
            lambda,
            samples,
            exact,
        } => {
            let a = load(&input)?;
            let lambda = match lambda {
                Some(s) => parse_ints(&s)?,
                None => vec![0; a.m()],
            };
            let smoother = if parity {
                Smoother::parity(&a)
            } else {
                Smoother::lazy(delta)
            };
            let exact = if exact {
                Some(prob_exact(&a, &smoother, &lambda)?)
            } else {
                None
            };
            let mc = if samples > 0 {
                Some(inversion_integral_mc(
                    &a, &smoother, &lambda, samples, seed,
                )?)
            } else {
                None
            };
            emit(
                out,
                &pretty(&PointProbability::new(lambda, exact.as_ref(), mc)),
            )?;
        }
        Cmd::Fourier {
            cmd:
                FourierCmd::Eval {
                    input,
                    theta,
                    delta,
                },
        } => {
            let a = load(&input)?;
            let theta = ThetaPoint::parse(&theta)?;
            let d = DhatEvaluator::new(&a).log_abs(theta.coords())?;
            let r = Smoother::lazy(delta).rhat(theta.coords());
            let report = json!({
                "theta": theta.coords(),
                "delta": delta,
                "dhat": d.value(),
                "dhat_sign": d.sign,
                "dhat_ln_abs": d.ln_abs,
                "rhat": r,
                "xhat": d.value() * r,
                "d2_to_lattice": d2_to_lattice(theta.coords()),
            });
            emit(out, &pretty(&report))?;
        }
        Cmd::Verify { suite } => {
            let names: Vec<&str> = if suite == "all" {
                SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let reports = names
                .iter()
                .map(|s| harness::run_suite(s, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let failed = reports.iter().any(|r| !r.passed());
            if reports.len() == 1 {
                emit(out, &pretty(&reports[0]))?;
            } else {
                emit(out, &pretty(&reports))?;
            }
            if failed {
                return Ok(EXIT_CHECK_FAILED);
            }
        }
        Cmd::Experiment {
            cmd: ExperimentCmd::Theorem(args),
        } => {
            let cfg = ExperimentConfig {
                ms: args.m,
                c: args.c,
                p: args.p,
                trials: args.trials,
                solver: args.solver,
                budget: args.budget,
                restarts: args.restarts,
                seed,
                n_override: args.n,
            };
            let report = harness::run_theorem_experiment(&cfg)?;
            let csv = report.to_csv()?;
            let summary = pretty(&report);
            match out {
                Some(path) => {
                    fs::write(path, csv)?;
                    let mut side = path.as_os_str().to_owned();
                    side.push(".json");
                    fs::write(PathBuf::from(side), &summary)?;
                    print!("{summary}");
                }
                None => {
                    print!("{csv}");
                    eprint!("{summary}");
                }
            }
        }
        Cmd::Experiment {
            cmd:
                ExperimentCmd::Lowerbound {
                    m,
                    n,
                    p,
                    trials,
                    kappa,
                },
        } => {
            let report = harness::run_lowerbound_probe(m, n, p, trials, kappa, seed)?;
            emit(out, &pretty(&report))?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
