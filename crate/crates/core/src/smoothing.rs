//! The smoothing distribution `R(Δ)`: a sum of `Δ` independent steps in
//! `{-1, 0, 1}` with probabilities `(¼, ½, ¼)`, its characteristic function
//! `R̂(θ) = (½ + ½·cos 2πθ)^Δ = cos²(πθ)^Δ`, the decay bounds that `R̂`
//! obeys, and the parity smoother used when `Δ = 1`.
//!
//! The PMF is held exactly as integer numerators over `4^Δ`. Transforms are
//! evaluated in `f64` through [`cos_pi`], which is exact at half-integers so
//! that the zeros of `R̂` at `θ = ±½` are true zeros.

use std::f64::consts::PI;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::setsystem::IncidenceMatrix;

/// `cos(πx)`, with argument reduction that keeps zeros at half-integers exact.
pub fn cos_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    let a = r.abs();
    if a <= 0.25 {
        (PI * a).cos()
    } else if a <= 0.75 {
        (PI * (0.5 - a)).sin()
    } else {
        -(PI * (1.0 - a)).cos()
    }
}

/// `sin(πx)`, exact zeros at integers.
pub fn sin_pi(x: f64) -> f64 {
    cos_pi(x - 0.5)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpec {
    delta: u32,
    /// `numerators[k + Δ]` is `4^Δ · Pr[R = k]`.
    numerators: Vec<BigUint>,
}

/// `Δ`-fold convolution of `(1, 2, 1) / 4`.
pub fn build_pmf(delta: u32) -> SmoothingSpec {
    let mut table = vec![BigUint::one()];
    for _ in 0..delta {
        let mut next = vec![BigUint::zero(); table.len() + 2];
        for (k, c) in table.iter().enumerate() {
            next[k] += c;
            next[k + 1] += c * 2u32;
            next[k + 2] += c;
        }
        table = next;
    }
    SmoothingSpec {
        delta,
        numerators: table,
    }
}

impl SmoothingSpec {
    pub fn delta(&self) -> u32 {
        self.delta
    }

    /// Support `-Δ..=Δ`.
    pub fn support(&self) -> std::ops::RangeInclusive<i64> {
        -(self.delta as i64)..=self.delta as i64
    }

    /// `log2` of the common denominator `4^Δ`.
    pub fn denominator_bits(&self) -> u32 {
        2 * self.delta
    }

    /// Numerator of `Pr[R = k]` over `4^Δ`; zero outside the support.
    pub fn numerator(&self, k: i64) -> BigUint {
        let idx = k + self.delta as i64;
        if idx < 0 || idx as usize >= self.numerators.len() {
            BigUint::zero()
        } else {
            self.numerators[idx as usize].clone()
        }
    }

    pub fn prob(&self, k: i64) -> BigRational {
        BigRational::new(
            BigInt::from(self.numerator(k)),
            BigInt::from(BigUint::one() << self.denominator_bits()),
        )
    }

    pub fn prob_f64(&self, k: i64) -> f64 {
        self.prob(k).to_f64().unwrap_or(0.0)
    }

    /// Exact variance `Σ k²·Pr[R = k]`.
    pub fn variance(&self) -> BigRational {
        self.support()
            .map(|k| self.prob(k) * BigRational::from_integer(BigInt::from(k * k)))
            .fold(BigRational::zero(), |acc, v| acc + v)
    }

    /// One draw: `Δ` steps of (coin + coin − 1), i.e. `Binomial(2Δ, ½) − Δ`.
    pub fn sample(&self, rng: &mut Stream) -> i64 {
        let mut remaining = 2 * self.delta;
        let mut heads = 0u32;
        while remaining > 0 {
            let take = remaining.min(64);
            let bits: u64 = rng.random();
            let mask = if take == 64 {
                u64::MAX
            } else {
                (1u64 << take) - 1
            };
            heads += (bits & mask).count_ones();
            remaining -= take;
        }
        heads as i64 - self.delta as i64
    }
}

/// `R̂(θ) = (½ + ½·cos 2πθ)^Δ`.
pub fn rhat_1d(delta: u32, theta: f64) -> f64 {
    let c = cos_pi(theta);
    (c * c).powi(delta as i32)
}

/// Product of the one-dimensional transforms.
pub fn rhat_md(delta: u32, theta: &[f64]) -> f64 {
    theta.iter().map(|&t| rhat_1d(delta, t)).product()
}

/// Transform of the PMF computed by direct summation, `Σ_k Pr[k]·cos(2πθk)`.
pub fn rhat_from_pmf(spec: &SmoothingSpec, theta: f64) -> f64 {
    spec.support()
        .map(|k| spec.prob_f64(k) * cos_pi(2.0 * theta * k as f64))
        .sum()
}

/// Outcome of one inequality `lhs ≤ rhs` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative iff violated.
    pub margin: f64,
    pub ok: bool,
}

impl BoundCheck {
    pub fn le(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            margin: rhs - lhs,
            ok: lhs <= rhs,
        }
    }
}

/// The three decay properties of `R̂` at one `θ`. A property whose domain
/// does not contain `θ` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhatBoundReport {
    /// `R̂(θ) ≤ exp(-π²Δ‖θ‖²)` for `‖θ‖∞ ≤ ½`.
    pub upper: Option<BoundCheck>,
    /// `R̂(θ) ≥ exp(-π²Δ‖θ‖² - 20Δ‖θ‖⁴)` for `‖θ‖∞ ≤ ¼`, stored as `rhs ≤ lhs`.
    pub lower: Option<BoundCheck>,
    /// `R̂(θ+s) ≤ R̂(θ)·∏_{s_i≠0} (32θ_i²)^Δ` for `‖θ‖∞ ≤ ⅛`, worst `s`.
    pub ratio: Option<BoundCheck>,
    pub ratio_worst_shift: Option<Vec<f64>>,
    pub shifts_checked: usize,
}

impl RhatBoundReport {
    pub fn upper_ok(&self) -> bool {
        self.upper.is_none_or(|b| b.ok)
    }
    pub fn lower_ok(&self) -> bool {
        self.lower.is_none_or(|b| b.ok)
    }
    pub fn ratio_ok(&self) -> bool {
        self.ratio.is_none_or(|b| b.ok)
    }
    pub fn all_ok(&self) -> bool {
        self.upper_ok() && self.lower_ok() && self.ratio_ok()
    }
}

/// Largest `m` for which `{-½, 0, ½}^m` is enumerated rather than sampled.
pub const MAX_ENUMERATED_LATTICE_DIM: usize = 12;
const SAMPLED_SHIFTS: usize = 100_000;

/// Half-integral shifts `{-½, 0, ½}^m`: all of them when `3^m ≤ 10⁶`,
/// otherwise a fixed pseudo-random sample that always includes the
/// single-coordinate shifts.
pub fn lattice_shifts(m: usize, seed: u64) -> Vec<Vec<f64>> {
    const STEPS: [f64; 3] = [0.0, 0.5, -0.5];
    if m <= MAX_ENUMERATED_LATTICE_DIM {
        let total = 3usize.pow(m as u32);
        (0..total)
            .map(|mut code| {
                (0..m)
                    .map(|_| {
                        let s = STEPS[code % 3];
                        code /= 3;
                        s
                    })
                    .collect()
            })
            .collect()
    } else {
        let mut rng = rng::stream(seed, m as u64);
        let mut out = vec![vec![0.0; m]];
        for i in 0..m {
            for s in [0.5, -0.5] {
                let mut v = vec![0.0; m];
                v[i] = s;
                out.push(v);
            }
        }
        while out.len() < SAMPLED_SHIFTS {
            out.push((0..m).map(|_| STEPS[rng.random_range(0..3)]).collect());
        }
        out
    }
}

fn norm2_sq(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t * t).sum()
}

fn norm_inf(theta: &[f64]) -> f64 {
    theta.iter().fold(0.0, |a, t| a.max(t.abs()))
}

pub fn check_rhat_bounds(delta: u32, theta: &[f64]) -> RhatBoundReport {
    let d = delta as f64;
    let r = rhat_md(delta, theta);
    let sq = norm2_sq(theta);
    let inf = norm_inf(theta);

    let upper = (inf <= 0.5).then(|| BoundCheck::le(r, (-PI * PI * d * sq).exp()));
    let lower =
        (inf <= 0.25).then(|| BoundCheck::le((-PI * PI * d * sq - 20.0 * d * sq * sq).exp(), r));

    let mut ratio = None;
    let mut ratio_worst_shift = None;
    let mut shifts_checked = 0;
    if inf <= 0.125 {
        let mut worst: Option<(BoundCheck, Vec<f64>)> = None;
        for s in lattice_shifts(theta.len(), 0) {
            if s.iter().all(|&v| v == 0.0) {
                continue;
            }
            shifts_checked += 1;
            let shifted: Vec<f64> = theta.iter().zip(&s).map(|(t, v)| t + v).collect();
            let factor: f64 = theta
                .iter()
                .zip(&s)
                .filter(|(_, &v)| v != 0.0)
                .map(|(t, _)| (32.0 * t * t).powi(delta as i32))
                .product();
            let check = BoundCheck::le(rhat_md(delta, &shifted), r * factor);
            if worst.as_ref().is_none_or(|(w, _)| check.margin < w.margin) {
                worst = Some((check, s));
            }
        }
        if let Some((c, s)) = worst {
            ratio = Some(c);
            ratio_worst_shift = Some(s);
        }
    }
    RhatBoundReport {
        upper,
        lower,
        ratio,
        ratio_worst_shift,
        shifts_checked,
    }
}

/// Grid used by [`rho`]: step `10⁻³` over `[¼, ½]`, both endpoints included.
pub const RHO_GRID_STEP: f64 = 1e-3;

/// `ρ(R) = max{|R̂(θ)| : ¼ ≤ θ ≤ ½}` by grid search followed by a
/// golden-section refinement in the bracket around the best grid point.
pub fn rho(delta: u32) -> f64 {
    let (lo, hi) = (0.25, 0.5);
    let steps = ((hi - lo) / RHO_GRID_STEP).round() as usize;
    let f = |t: f64| rhat_1d(delta, t).abs();
    let (best_k, best) = (0..=steps)
        .map(|k| (k, f(lo + k as f64 * RHO_GRID_STEP)))
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, v| if v.1 > acc.1 { v } else { acc },
        );

    let mut a = (lo + (best_k.saturating_sub(1)) as f64 * RHO_GRID_STEP).max(lo);
    let mut b = (lo + (best_k + 1) as f64 * RHO_GRID_STEP).min(hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if f(c) >= f(e) {
            b = e;
        } else {
            a = c;
        }
    }
    best.max(f(0.5 * (a + b))).max(f(a)).max(f(b))
}

/// The `Δ = 1` variant: rows with odd size get an independent uniform `±1`,
/// even rows get `0`, so `X = D + R` is always even.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParitySmoother {
    m: usize,
    odd_rows: Vec<usize>,
}

impl ParitySmoother {
    pub fn from_matrix(a: &IncidenceMatrix) -> Self {
        Self {
            m: a.m(),
            odd_rows: a.odd_rows(),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn odd_rows(&self) -> &[usize] {
        &self.odd_rows
    }

    pub fn is_odd(&self, i: usize) -> bool {
        self.odd_rows.binary_search(&i).is_ok()
    }
}

/// `∏_{i odd} cos(2πθ_i)`; `1` when no row is odd.
pub fn parity_rhat(smoother: &ParitySmoother, theta: &[f64]) -> Result<f64> {
    if theta.len() != smoother.m {
        return Err(Error::DimensionMismatch {
            expected: smoother.m,
            got: theta.len(),
        });
    }
    Ok(smoother
        .odd_rows
        .iter()
        .map(|&i| cos_pi(2.0 * theta[i]))
        .product())
}

/// Either smoother, as consumed by the transform and inversion code.
#[derive(Debug, Clone, PartialEq)]
pub enum Smoother {
    Lazy(SmoothingSpec),
    Parity(ParitySmoother),
}

impl Smoother {
    pub fn lazy(delta: u32) -> Self {
        Smoother::Lazy(build_pmf(delta))
    }

    pub fn parity(a: &IncidenceMatrix) -> Self {
        Smoother::Parity(ParitySmoother::from_matrix(a))
    }

    /// `R̂(θ)`; `theta` must have one coordinate per row.
    pub fn rhat(&self, theta: &[f64]) -> f64 {
        match self {
            Smoother::Lazy(s) => rhat_md(s.delta, theta),
            Smoother::Parity(p) => p.odd_rows.iter().map(|&i| cos_pi(2.0 * theta[i])).product(),
        }
    }

    /// Largest `|R_i|`.
    pub fn max_offset(&self) -> i64 {
        match self {
            Smoother::Lazy(s) => s.delta as i64,
            Smoother::Parity(p) => i64::from(!p.odd_rows.is_empty()),
        }
    }

    /// Exact law of `R_i` as `(value, numerator)` pairs over `2^bits`.
    pub fn row_law(&self, i: usize) -> (Vec<(i64, BigUint)>, u32) {
        match self {
            Smoother::Lazy(s) => (
                s.support().map(|k| (k, s.numerator(k))).collect(),
                s.denominator_bits(),
            ),
            Smoother::Parity(p) if p.is_odd(i) => {
                (vec![(-1, BigUint::one()), (1, BigUint::one())], 1)
            }
            Smoother::Parity(_) => (vec![(0, BigUint::one())], 0),
        }
    }
}

/// Spike comparison for `R̂` alone at one `θ`:
/// `R̂(θ)` against `2·Σ_{s ∈ Λ∖0} R̂(θ+s)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpikeReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub shifts: usize,
}

pub fn spike_dominance_r(delta: u32, theta: &[f64]) -> SpikeReport {
    let lhs = rhat_md(delta, theta);
    let shifts = lattice_shifts(theta.len(), 0);
    let mut sum = 0.0;
    let mut count = 0;
    for s in &shifts {
        if s.iter().all(|&v| v == 0.0) {
            continue;
        }
        count += 1;
        let shifted: Vec<f64> = theta.iter().zip(s).map(|(t, v)| t + v).collect();
        sum += rhat_md(delta, &shifted).abs();
    }
    let rhs = 2.0 * sum;
    SpikeReport {
        lhs,
        rhs,
        holds: lhs > rhs,
        shifts: count,
    }
}
