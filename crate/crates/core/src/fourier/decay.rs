//! Decay of `|D̂|` away from the half-integral lattice.
//!
//! A single random column `a ∈ {0,1}^m` with `Pr[a_i = 1] = p` shrinks
//! `|D̂(θ)|` by the factor `E|cos(2π⟨a, θ⟩)|`. The expectations here are
//! exact (all `2^m` outcomes, weighted), and are compared with the three
//! one-factor bounds. The far-region integral then estimates how small
//! `∫_{d₂(θ,Λ) ≥ δ} |D̂(θ)| dθ` is for a sampled matrix.

use std::f64::consts::PI;

use serde::Serialize;

use super::integrate::{integrate_mc, Estimate, Region};
use super::DhatEvaluator;
use crate::error::{invalid, Error, Result};
use crate::setsystem::IncidenceMatrix;
use crate::smoothing::{cos_pi, BoundCheck, Smoother};

/// Largest `m` for the exact `2^m` expectation.
pub const MAX_EXACT_M: usize = 20;

/// `c` in `1 - min{¼p‖θ‖₂², c}` and in the far-region side condition `pδ² ≤ c`.
pub const ONE_FACTOR_C: f64 = 1e-3;

/// `b` in the small-norm hypothesis `p‖θ‖₂² ≤ b`.
pub const SMALL_NORM_B: f64 = 1e-3;

fn norm_inf(theta: &[f64]) -> f64 {
    theta.iter().fold(0.0, |a, t| a.max(t.abs()))
}

fn norm2_sq(theta: &[f64]) -> f64 {
    theta.iter().map(|t| t * t).sum()
}

/// All subset sums and probabilities of `theta` under independent
/// Bernoulli(p) inclusion.
fn half_table(theta: &[f64], p: f64) -> Vec<(f64, f64)> {
    let mut table = vec![(0.0, 1.0)];
    for &t in theta {
        let mut next = Vec::with_capacity(table.len() * 2);
        for &(z, w) in &table {
            next.push((z, w * (1.0 - p)));
            next.push((z + t, w * p));
        }
        table = next;
    }
    table
}

/// `E|cos(phase + 2π⟨a, θ⟩)|` over `a ∈ {0,1}^m`, `Pr[a_i = 1] = p`,
/// computed exactly by splitting the coordinates into two halves.
pub fn expected_abs_cos(theta: &[f64], p: f64, phase: f64) -> Result<f64> {
    if theta.len() > MAX_EXACT_M {
        return Err(Error::TooLarge {
            what: "m",
            limit: MAX_EXACT_M as u64,
            got: theta.len() as u64,
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("p = {p} is outside [0, 1]")));
    }
    let (lo, hi) = theta.split_at(theta.len() / 2);
    let lo = half_table(lo, p);
    let hi = half_table(hi, p);
    let shift = phase / PI;
    let mut total = 0.0;
    for &(zh, wh) in &hi {
        if wh == 0.0 {
            continue;
        }
        let inner: f64 = lo
            .iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|&(zl, wl)| wl * cos_pi(shift + 2.0 * (zl + zh)).abs())
            .sum();
        total += wh * inner;
    }
    Ok(total)
}

fn require_quarter_box(theta: &[f64]) -> Result<()> {
    if norm_inf(theta) > 0.25 {
        return Err(Error::Precondition(format!(
            "‖θ‖∞ = {} exceeds 1/4",
            norm_inf(theta)
        )));
    }
    Ok(())
}

fn require_half_p(p: f64) -> Result<()> {
    if !(0.0..=0.5).contains(&p) {
        return Err(Error::Precondition(format!("p = {p} is outside [0, 1/2]")));
    }
    Ok(())
}

/// `E|cos(2π⟨a, θ⟩)|` for `‖θ‖∞ ≤ ¼`.
pub fn one_factor_abs_cos_exact(theta: &[f64], p: f64) -> Result<f64> {
    require_quarter_box(theta)?;
    expected_abs_cos(theta, p, 0.0)
}

/// Large-entry bound: `E|cos(2π⟨a, θ⟩)| ≤ 1 - (π²/4)·p·‖θ‖∞²`.
pub fn check_large_entry_bound(theta: &[f64], p: f64) -> Result<BoundCheck> {
    let lhs = one_factor_abs_cos_exact(theta, p)?;
    let inf = norm_inf(theta);
    Ok(BoundCheck::le(lhs, 1.0 - PI * PI / 4.0 * p * inf * inf))
}

/// Small-norm bound with a phase: for centered `y_i = a_i - p`,
/// `E|cos(s + 2π Σ θ_i y_i)| ≤ 1 - ½·p·‖θ‖₂²`, when `p ≤ ½`, `‖θ‖∞ ≤ ¼`
/// and `p‖θ‖₂² ≤ b`.
pub fn check_small_norm_bound(theta: &[f64], p: f64, s: f64, b: f64) -> Result<BoundCheck> {
    require_quarter_box(theta)?;
    require_half_p(p)?;
    let sq = norm2_sq(theta);
    if p * sq > b {
        return Err(Error::Precondition(format!(
            "p‖θ‖₂² = {} exceeds b = {b}",
            p * sq
        )));
    }
    let centering = -2.0 * PI * p * theta.iter().sum::<f64>();
    let lhs = expected_abs_cos(theta, p, s + centering)?;
    Ok(BoundCheck::le(lhs, 1.0 - 0.5 * p * sq))
}

/// Summary bound: `E|cos(2π⟨a, θ⟩)| ≤ 1 - min{¼p‖θ‖₂², c}` for `p ≤ ½`.
pub fn check_one_factor_summary(theta: &[f64], p: f64, c: f64) -> Result<BoundCheck> {
    require_half_p(p)?;
    let lhs = one_factor_abs_cos_exact(theta, p)?;
    Ok(BoundCheck::le(
        lhs,
        1.0 - (0.25 * p * norm2_sq(theta)).min(c),
    ))
}

/// Sampling probability behind `A`: the recorded `p`, else the density.
pub(crate) fn instance_p(a: &IncidenceMatrix) -> f64 {
    a.meta()
        .and_then(|g| g.p)
        .unwrap_or_else(|| a.nnz() as f64 / (a.m() * a.n()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FarRegionReport {
    pub estimate: Estimate,
    pub delta: f64,
    pub p: f64,
    /// `exp(-pδ²n/24)`
    pub bound: f64,
    /// `pδ²/6 ≤ 1` and `pδ² ≤ c`
    pub side_conditions_ok: bool,
    /// The zero matrix: the integrand is identically 1 and the bound does
    /// not apply.
    pub calibration_only: bool,
    /// `estimate + 3·stderr ≤ bound`
    pub ok: bool,
}

/// `∫_{d₂(θ,Λ) ≥ δ} |D̂(θ)| dθ` by uniform sampling of the cube.
pub fn far_region_integral(
    a: &IncidenceMatrix,
    delta: f64,
    samples: u64,
    seed: u64,
) -> Result<FarRegionReport> {
    let eval = DhatEvaluator::new(a);
    let estimate = integrate_mc(
        |t| eval.log_abs_unchecked(t).value().abs(),
        Region::FarFromLattice { delta },
        a.m(),
        samples,
        seed,
    )?;
    let p = instance_p(a);
    let pd2 = p * delta * delta;
    let bound = (-pd2 * a.n() as f64 / 24.0).exp();
    Ok(FarRegionReport {
        estimate,
        delta,
        p,
        bound,
        side_conditions_ok: pd2 / 6.0 <= 1.0 && pd2 <= ONE_FACTOR_C,
        calibration_only: a.nnz() == 0,
        ok: estimate.value + 3.0 * estimate.stderr <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentralMassReport {
    pub radius: f64,
    pub estimate: Estimate,
    /// `½·(2πnm)^{-m/2}`
    pub bound: f64,
    /// `estimate ≥ bound - 3·stderr`
    pub ok: bool,
}

/// `∫_{‖θ‖₂ ≤ 1/(π√n)} X̂(θ) dθ` against the Gaussian comparison bound.
pub fn central_mass(
    a: &IncidenceMatrix,
    smoother: &Smoother,
    samples: u64,
    seed: u64,
) -> Result<CentralMassReport> {
    let eval = DhatEvaluator::new(a);
    let (m, n) = (a.m() as f64, a.n() as f64);
    let radius = 1.0 / (PI * n.sqrt());
    let estimate = integrate_mc(
        |t| eval.log_abs_unchecked(t).value() * smoother.rhat(t),
        Region::OriginBall { radius },
        a.m(),
        samples,
        seed,
    )?;
    let bound = 0.5 * (2.0 * PI * n * m).powf(-m / 2.0);
    Ok(CentralMassReport {
        radius,
        estimate,
        bound,
        ok: estimate.value >= bound - 3.0 * estimate.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::setsystem::sample_bernoulli;
    use rand::Rng;

    /// Independent oracle: weight every `a ∈ {0,1}^m` directly.
    fn brute(theta: &[f64], p: f64, phase: f64) -> f64 {
        let m = theta.len();
        (0u32..1 << m)
            .map(|mask| {
                let mut w = 1.0;
                let mut z = 0.0;
                for (i, t) in theta.iter().enumerate() {
                    if mask >> i & 1 == 1 {
                        w *= p;
                        z += t;
                    } else {
                        w *= 1.0 - p;
                    }
                }
                w * (phase + 2.0 * PI * z).cos().abs()
            })
            .sum()
    }

    #[test]
    fn expectation_matches_direct_weighting() {
        let mut rng = rng::stream(8, 0);
        for _ in 0..200 {
            let m = rng.random_range(1..=10);
            let theta: Vec<f64> = (0..m).map(|_| rng.random_range(-0.25..=0.25)).collect();
            let p = rng.random::<f64>();
            let phase = rng.random_range(-4.0..4.0);
            let fast = expected_abs_cos(&theta, p, phase).unwrap();
            assert!((fast - brute(&theta, p, phase)).abs() < 1e-12);
        }
    }

    #[test]
    fn one_factor_examples() {
        assert_eq!(one_factor_abs_cos_exact(&[0.0, 0.0], 0.3).unwrap(), 1.0);
        let v = one_factor_abs_cos_exact(&[0.25], 0.5).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let c = check_large_entry_bound(&[0.25], 0.5).unwrap();
        assert!(c.ok && (c.rhs - 0.9229).abs() < 1e-4);

        // m = 2, θ = (⅛, ⅛), p = ½: ¼·(1 + 2|cos(π/4)| + |cos(π/2)|).
        let v = one_factor_abs_cos_exact(&[0.125, 0.125], 0.5).unwrap();
        assert!((v - 0.25 * (1.0 + 2f64.sqrt())).abs() < 1e-15);
        let s = check_one_factor_summary(&[0.125, 0.125], 0.5, ONE_FACTOR_C).unwrap();
        assert!(s.ok);
        assert!((s.rhs - (1.0 - 0.25 * 0.5 / 32.0f64).max(1.0 - ONE_FACTOR_C)).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            one_factor_abs_cos_exact(&[0.3], 0.5),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            check_one_factor_summary(&[0.1], 0.7, 1e-3),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            check_small_norm_bound(&[0.25; 4], 0.5, 0.0, 1e-3),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            expected_abs_cos(&[0.0; 21], 0.5, 0.0),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn large_entry_bound_needs_p_at_most_half() {
        // a = (1, 1) surely, so E|cos(2π(¼ + ¼))| = 1 > 1 - π²/64.
        let c = check_large_entry_bound(&[0.25, 0.25], 1.0).unwrap();
        assert!(!c.ok);
        assert!(check_large_entry_bound(&[0.25, 0.25], 0.5).unwrap().ok);
    }

    #[test]
    fn small_norm_with_phase() {
        let theta = [0.02, -0.01, 0.015];
        for s in [0.0, 0.1, PI / 12.0, 1.0, PI / 2.0, 3.0] {
            let c = check_small_norm_bound(&theta, 0.4, s, SMALL_NORM_B).unwrap();
            assert!(c.ok, "s = {s}: {c:?}");
        }
    }

    #[test]
    fn far_region_of_zero_matrix_is_its_volume() {
        let z = IncidenceMatrix::zeros(2, 10).unwrap();
        let delta = 0.1;
        let rep = far_region_integral(&z, delta, 100_000, 1).unwrap();
        assert!(rep.calibration_only);
        let vol = 1.0 - 4.0 * PI * delta * delta;
        assert!(rep.estimate.within(vol, 4.0), "{:?}", rep.estimate);
    }

    #[test]
    fn far_region_small_instance() {
        let a = sample_bernoulli(4, 1000, 0.5, 3).unwrap();
        let delta = 1.0 / (16.0 * a.t().sqrt());
        let rep = far_region_integral(&a, delta, 200_000, 4).unwrap();
        assert!(rep.side_conditions_ok);
        assert!(rep.ok, "{rep:?}");
    }

    #[test]
    fn central_mass_small_instance() {
        let a = sample_bernoulli(2, 200, 0.5, 6).unwrap();
        let rep = central_mass(&a, &Smoother::lazy(1), 100_000, 2).unwrap();
        assert!(rep.ok, "{rep:?}");
        assert!(rep.estimate.value > 0.0);
    }
}
