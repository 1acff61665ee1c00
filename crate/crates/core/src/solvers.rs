//! Coloring search: exact minimum by Gray-code enumeration for tiny `n`, a
//! randomized walk, and steepest descent on `Σ_i (A_i x)²` with restarts.
//!
//! Every witness is re-checked with [`disc_of_coloring`] before it is
//! returned, and `found` is decided by that check rather than by the
//! solver's own counters.

use std::collections::{BTreeSet, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::setsystem::{disc_of_coloring, Coloring, IncidenceMatrix};

/// Largest `n` accepted by [`exhaustive_min_disc`] and [`count_good_colorings`].
pub const MAX_EXHAUSTIVE_N: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SolveResult {
    /// `disc ≤ target` for the returned coloring.
    pub found: bool,
    /// `‖Ax‖∞` of `coloring`.
    pub disc: Option<u64>,
    pub coloring: Option<Coloring>,
    /// Trials for random search, flips for local search, `2^{n-1}` for the
    /// exhaustive solver.
    pub flips_used: u64,
}

impl SolveResult {
    fn verified(
        a: &IncidenceMatrix,
        target: u64,
        x: Option<Coloring>,
        flips_used: u64,
    ) -> Result<Self> {
        match x {
            None => Ok(Self {
                found: false,
                disc: None,
                coloring: None,
                flips_used,
            }),
            Some(x) => {
                let disc = disc_of_coloring(a, &x)?;
                Ok(Self {
                    found: disc <= target,
                    disc: Some(disc),
                    coloring: Some(x),
                    flips_used,
                })
            }
        }
    }
}

fn check_exhaustive(n: usize) -> Result<()> {
    if n > MAX_EXHAUSTIVE_N {
        return Err(Error::TooLarge {
            what: "n",
            limit: MAX_EXHAUSTIVE_N as u64,
            got: n as u64,
        });
    }
    Ok(())
}

/// `1` if some row has odd size, else `0`: no coloring can beat it.
pub fn parity_lower_bound(a: &IncidenceMatrix) -> u64 {
    (0..a.m()).any(|i| a.row_sum(i) % 2 == 1) as u64
}

/// Gray-code walk over `x₁..x_{n-1}` with `x₀ = +1`, calling `visit` with
/// the coloring, the current `D`, the rows touched by the last flip and the
/// amount each of them moved (0 for the initial state, where every row is
/// listed). `visit` returns `false` to stop early. Returns the number of
/// states seen.
fn gray_walk(
    a: &IncidenceMatrix,
    mut visit: impl FnMut(&[i8], &[i32], &[u32], i32) -> bool,
) -> u64 {
    let n = a.n();
    let cols: Vec<Vec<u32>> = a
        .column_lists()
        .into_iter()
        .map(|c| c.into_iter().map(|i| i as u32).collect())
        .collect();
    let mut x = vec![1i8; n];
    let mut d: Vec<i32> = (0..a.m()).map(|i| a.row_sum(i) as i32).collect();
    let all: Vec<u32> = (0..a.m() as u32).collect();
    if !visit(&x, &d, &all, 0) {
        return 1;
    }
    let states = 1u64 << n.saturating_sub(1);
    for k in 1..states {
        let j = 1 + k.trailing_zeros() as usize;
        x[j] = -x[j];
        let step = 2 * x[j] as i32;
        for &i in &cols[j] {
            d[i as usize] += step;
        }
        if !visit(&x, &d, &cols[j], step) {
            return k + 1;
        }
    }
    states
}

/// Exact `min_x ‖Ax‖∞` over all colorings (`n ≤ 30`) and one minimizer.
///
/// Keeps the number of rows with `|D_i| ≥ best`; when it drops to zero a
/// strictly better coloring has been reached. Stops once the parity lower
/// bound is met.
pub fn exhaustive_min_disc(a: &IncidenceMatrix) -> Result<(u64, Coloring)> {
    check_exhaustive(a.n())?;
    let floor = parity_lower_bound(a) as i32;
    let mut best = i32::MAX;
    let mut witness = Coloring::all_plus(a.n());
    let mut over = 0usize;
    gray_walk(a, |x, d, touched, step| {
        if best != i32::MAX {
            for &i in touched {
                let now = d[i as usize].abs() >= best;
                let was = (d[i as usize] - step).abs() >= best;
                over = over + now as usize - was as usize;
            }
        }
        if over == 0 {
            best = d.iter().map(|v| v.abs()).max().unwrap_or(0);
            witness = Coloring::new(x.to_vec()).expect("signs are ±1");
            over = d.iter().filter(|v| v.abs() >= best).count();
        }
        best > floor
    });
    let disc = disc_of_coloring(a, &witness)?;
    debug_assert_eq!(disc, best as u64);
    Ok((disc, witness))
}

/// Number of colorings among all `2ⁿ` with `‖Ax‖∞ ≤ target` (`n ≤ 30`).
pub fn count_good_colorings(a: &IncidenceMatrix, target: u64) -> Result<u64> {
    check_exhaustive(a.n())?;
    let target = target.min(i32::MAX as u64) as i32;
    let mut count = 0u64;
    gray_walk(a, |_, d, _, _| {
        if d.iter().all(|v| v.abs() <= target) {
            count += 1;
        }
        true
    });
    // x and -x have the same discrepancy
    Ok(2 * count)
}

/// Single-flip random walk. The first trial is a uniform coloring; each
/// later trial picks a uniform column and gives it a fresh uniform sign, so
/// it flips with probability ½. Returns at the first trial with
/// `‖Ax‖∞ ≤ target`, or unsuccessfully after `budget` trials.
pub fn random_search(
    a: &IncidenceMatrix,
    target: u64,
    budget: u64,
    seed: u64,
) -> Result<SolveResult> {
    let n = a.n();
    if budget == 0 {
        return SolveResult::verified(a, target, None, 0);
    }
    let target = target.min(i64::MAX as u64) as i64;
    let mut rng = rng::stream(seed, 0);
    let cols = a.column_lists();
    let mut x = Coloring::random(n, &mut rng);
    let mut d: Vec<i64> = crate::setsystem::signed_discrepancy(a, &x)?;
    let mut viol = d.iter().filter(|v| v.abs() > target).count();
    let mut trials = 1;
    while viol > 0 && trials < budget {
        trials += 1;
        let j = rng.random_range(0..n);
        if rng.random::<bool>() {
            x.flip(j);
            let step = 2 * x.signs()[j] as i64;
            for &i in &cols[j] {
                let was = d[i].abs() > target;
                d[i] += step;
                let now = d[i].abs() > target;
                viol = viol + now as usize - was as usize;
            }
        }
    }
    SolveResult::verified(a, target as u64, (viol == 0).then_some(x), trials)
}

struct SupportClass {
    rows: Vec<usize>,
    plus: BTreeSet<usize>,
    minus: BTreeSet<usize>,
}

fn support_classes(a: &IncidenceMatrix, x: &Coloring) -> Vec<SupportClass> {
    let mut index: HashMap<&[u64], usize> = HashMap::new();
    let mut classes: Vec<SupportClass> = Vec::new();
    for j in 0..a.n() {
        let bits = a.col_bits(j);
        if bits.iter().all(|&w| w == 0) {
            continue;
        }
        let k = *index.entry(bits).or_insert_with(|| {
            classes.push(SupportClass {
                rows: a.col_support(j).collect(),
                plus: BTreeSet::new(),
                minus: BTreeSet::new(),
            });
            classes.len() - 1
        });
        if x.signs()[j] == 1 {
            classes[k].plus.insert(j);
        } else {
            classes[k].minus.insert(j);
        }
    }
    classes
}

struct Descent {
    x: Coloring,
    disc: u64,
    flips: u64,
}

/// Steepest descent on `Φ(x) = Σ_i D_i²` from `x`. Flipping `x_j` changes
/// `Φ` by `4|S| - 4x_j·Σ_{i∈S} D_i` where `S` is column `j`'s support, so a
/// class of identical columns is scored once. Ties go to the lowest column
/// index. Stops at `‖D‖∞ ≤ target`, at a local minimum, or after
/// `max_flips` flips.
fn descend(a: &IncidenceMatrix, mut x: Coloring, target: i64, max_flips: u64) -> Descent {
    let mut classes = support_classes(a, &x);
    let mut d = crate::setsystem::signed_discrepancy(a, &x).expect("lengths match");
    let mut viol = d.iter().filter(|v| v.abs() > target).count();
    let mut flips = 0;
    while viol > 0 && flips < max_flips {
        // (ΔΦ, column, class, sign of column before the flip)
        let mut best: Option<(i64, usize, usize, i8)> = None;
        for (k, c) in classes.iter().enumerate() {
            let sum: i64 = c.rows.iter().map(|&i| d[i]).sum();
            let size = c.rows.len() as i64;
            let candidates = [
                (c.plus.first(), 1i8, 4 * size - 4 * sum),
                (c.minus.first(), -1i8, 4 * size + 4 * sum),
            ];
            for (col, sign, delta) in candidates {
                let Some(&j) = col else { continue };
                if delta >= 0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bd, bj, _, _)) => delta < bd || (delta == bd && j < bj),
                };
                if better {
                    best = Some((delta, j, k, sign));
                }
            }
        }
        let Some((_, j, k, sign)) = best else { break };
        x.flip(j);
        let c = &mut classes[k];
        if sign == 1 {
            c.plus.remove(&j);
            c.minus.insert(j);
        } else {
            c.minus.remove(&j);
            c.plus.insert(j);
        }
        let step = -2 * sign as i64;
        for &i in &c.rows {
            let was = d[i].abs() > target;
            d[i] += step;
            let now = d[i].abs() > target;
            viol = viol + now as usize - was as usize;
        }
        flips += 1;
    }
    let disc = d.iter().map(|v| v.unsigned_abs()).max().unwrap_or(0);
    Descent { x, disc, flips }
}

/// Restarted steepest descent. Restart `r` starts from a uniform coloring
/// drawn from `rng::stream(seed, r)` and may use up to `max_flips` flips.
/// Restarts run in parallel batches; the result is the lowest-numbered
/// successful restart, or the lowest-disc local minimum if none succeeds.
/// `flips_used` counts flips of every restart up to the returned one.
pub fn local_search(
    a: &IncidenceMatrix,
    target: u64,
    restarts: u64,
    max_flips: u64,
    seed: u64,
) -> Result<SolveResult> {
    let t = target.min(i64::MAX as u64) as i64;
    let batch = rayon::current_num_threads().max(1) as u64;
    let mut flips_used = 0;
    let mut best: Option<Descent> = None;
    let mut start = 0;
    while start < restarts {
        let end = (start + batch).min(restarts);
        let runs: Vec<Descent> = (start..end)
            .into_par_iter()
            .map(|r| {
                let x = Coloring::random(a.n(), &mut rng::stream(seed, r));
                descend(a, x, t, max_flips)
            })
            .collect();
        for run in runs {
            flips_used += run.flips;
            let success = run.disc <= target;
            if best.as_ref().is_none_or(|b| run.disc < b.disc) {
                best = Some(run);
            }
            if success {
                return SolveResult::verified(a, target, best.map(|b| b.x), flips_used);
            }
        }
        start = end;
    }
    SolveResult::verified(a, target, best.map(|b| b.x), flips_used)
}

/// `2ⁿ·(κΔ/√n)^m`: the expected number of colorings with `‖Ax‖∞ ≤ Δ` when
/// each row independently satisfies `Pr[|A_i x| ≤ Δ] ≤ κΔ/√n`.
pub fn counting_bound(m: usize, n: usize, delta: u64, kappa: f64) -> f64 {
    let n_f = n as f64;
    let ln = n_f * std::f64::consts::LN_2 + m as f64 * (kappa * delta as f64 / n_f.sqrt()).ln();
    ln.exp()
}
