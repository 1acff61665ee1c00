//! Monte Carlo integration over regions of the torus `[-½, ½)^m`.
//!
//! Samples are drawn in fixed-size blocks; block `b` uses
//! `rng::stream(seed, b)` and block statistics are merged in block order,
//! so an estimate depends only on `(seed, samples)` and never on how rayon
//! schedules the blocks.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::d2_to_lattice;
use crate::error::{invalid, Error, Result};
use crate::rng::{self, Stream};

/// Samples per block.
pub const BLOCK: usize = 4096;

/// Rejection sampling below this acceptance rate is refused.
pub const MIN_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
}

impl Estimate {
    /// `|value - target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }
}

/// Integration domains.
///
/// * `FullCube`: `[-½, ½)^m`, volume 1.
/// * `QuarterCube`: `[-¼, ¼)^m`, volume `2^-m`.
/// * `OriginBall`: the Euclidean ball `‖θ‖₂ ≤ radius` in `ℝ^m`; it lies in
///   the cube only when `radius ≤ ½`.
/// * `NearLattice`: cube points within `delta` of a nonzero point of
///   `Λ = {-½, 0, ½}^m` and at least `delta` from the origin. For
///   `delta < ¼` the balls around distinct lattice points are disjoint and
///   together with `OriginBall(delta)` and `FarFromLattice(delta)` the three
///   regions partition the cube.
/// * `FarFromLattice`: cube points with `d₂(θ, Λ) ≥ delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    FullCube,
    QuarterCube,
    OriginBall { radius: f64 },
    NearLattice { delta: f64 },
    FarFromLattice { delta: f64 },
}

/// Volume of the unit ball in `ℝ^m`.
pub fn unit_ball_volume(m: usize) -> f64 {
    // V_0 = 1, V_1 = 2, V_m = 2π/m · V_{m-2}
    let mut v = if m.is_multiple_of(2) { 1.0 } else { 2.0 };
    let mut k = if m.is_multiple_of(2) { 2 } else { 3 };
    while k <= m {
        v *= 2.0 * PI / k as f64;
        k += 2;
    }
    v
}

impl Region {
    pub fn contains(&self, theta: &[f64]) -> bool {
        let in_cube = || theta.iter().all(|t| (-0.5..0.5).contains(t));
        let norm2 = || theta.iter().map(|t| t * t).sum::<f64>().sqrt();
        match *self {
            Region::FullCube => in_cube(),
            Region::QuarterCube => theta.iter().all(|t| (-0.25..0.25).contains(t)),
            Region::OriginBall { radius } => norm2() <= radius,
            Region::NearLattice { delta } => {
                in_cube() && d2_to_lattice(theta) < delta && norm2() >= delta
            }
            Region::FarFromLattice { delta } => in_cube() && d2_to_lattice(theta) >= delta,
        }
    }

    /// Closed-form volume where one exists.
    pub fn volume(&self, m: usize) -> Option<f64> {
        match *self {
            Region::FullCube => Some(1.0),
            Region::QuarterCube => Some(0.5f64.powi(m as i32)),
            Region::OriginBall { radius } => Some(unit_ball_volume(m) * radius.powi(m as i32)),
            Region::NearLattice { .. } | Region::FarFromLattice { .. } => None,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(invalid("integration dimension must be positive"));
        }
        match *self {
            Region::OriginBall { radius }
            | Region::NearLattice { delta: radius }
            | Region::FarFromLattice { delta: radius }
                if !(radius > 0.0 && radius.is_finite()) =>
            {
                Err(invalid(format!(
                    "region parameter {radius} must be positive and finite"
                )))
            }
            Region::OriginBall { .. } => {
                let rate = unit_ball_volume(m) / 2f64.powi(m as i32);
                if rate < MIN_ACCEPTANCE {
                    Err(Error::AcceptanceTooLow { rate })
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Uniform point of the region's sampling domain: the region itself for
/// cubes and balls, the full cube (with the integrand masked) otherwise.
fn draw(region: &Region, m: usize, rng: &mut Stream, out: &mut [f64]) {
    match *region {
        Region::FullCube | Region::NearLattice { .. } | Region::FarFromLattice { .. } => {
            out.iter_mut().for_each(|t| *t = rng.random::<f64>() - 0.5)
        }
        Region::QuarterCube => out
            .iter_mut()
            .for_each(|t| *t = 0.5 * rng.random::<f64>() - 0.25),
        Region::OriginBall { radius } => loop {
            let mut sq = 0.0;
            for t in out.iter_mut() {
                *t = radius * (2.0 * rng.random::<f64>() - 1.0);
                sq += *t * *t;
            }
            if sq <= radius * radius {
                break;
            }
        },
    }
    debug_assert_eq!(out.len(), m);
}

#[derive(Clone, Copy)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        n: 0,
        mean: 0.0,
        m2: 0.0,
    };

    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if self.n == 0 {
            return o;
        }
        if o.n == 0 {
            return self;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }
}

/// Integrate `K` real integrands at once over `region`, sharing sample
/// points. Returns one [`Estimate`] per component.
pub fn integrate_mc_multi<const K: usize, F>(
    f: F,
    region: Region,
    m: usize,
    samples: u64,
    seed: u64,
) -> Result<[Estimate; K]>
where
    F: Fn(&[f64]) -> [f64; K] + Sync,
{
    region.validate(m)?;
    if samples == 0 {
        return Err(invalid("sample count must be positive"));
    }
    let masked = region.volume(m).is_none();
    let volume = region.volume(m).unwrap_or(1.0);
    let blocks = samples.div_ceil(BLOCK as u64);
    let per_block: Vec<[Moments; K]> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = (samples - b * BLOCK as u64).min(BLOCK as u64);
            let mut rng = rng::stream(seed, b);
            let mut theta = vec![0.0; m];
            let mut acc = [Moments::EMPTY; K];
            for _ in 0..len {
                draw(&region, m, &mut rng, &mut theta);
                let vals = if masked && !region.contains(&theta) {
                    [0.0; K]
                } else {
                    f(&theta)
                };
                for (a, v) in acc.iter_mut().zip(vals) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let total = per_block
        .into_iter()
        .fold([Moments::EMPTY; K], |mut acc, blk| {
            for (a, b) in acc.iter_mut().zip(blk) {
                *a = a.merge(b);
            }
            acc
        });
    Ok(total.map(|mo| {
        let sd = if mo.n > 1 {
            (mo.m2.max(0.0) / (mo.n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            value: volume * mo.mean,
            stderr: volume * sd / (mo.n as f64).sqrt(),
            samples: mo.n,
            seed,
        }
    }))
}

/// `∫_region f dθ` by Monte Carlo.
pub fn integrate_mc<F>(f: F, region: Region, m: usize, samples: u64, seed: u64) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    integrate_mc_multi(|t| [f(t)], region, m, samples, seed).map(|[e]| e)
}

/// Real and imaginary parts of a complex-valued integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEstimate {
    pub re: Estimate,
    pub im: Estimate,
}

pub fn integrate_mc_complex<F>(
    f: F,
    region: Region,
    m: usize,
    samples: u64,
    seed: u64,
) -> Result<ComplexEstimate>
where
    F: Fn(&[f64]) -> (f64, f64) + Sync,
{
    integrate_mc_multi(
        |t| {
            let (re, im) = f(t);
            [re, im]
        },
        region,
        m,
        samples,
        seed,
    )
    .map(|[re, im]| ComplexEstimate { re, im })
}

/// Doubles the sample count, starting at `start`, until the stderr drops to
/// `target_stderr` or `cap` samples have been used. Seeds are shared so the
/// final estimate equals a direct call with the reported sample count.
pub fn integrate_mc_adaptive<F>(
    f: F,
    region: Region,
    m: usize,
    start: u64,
    cap: u64,
    target_stderr: f64,
    seed: u64,
) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let mut n = start.max(1).min(cap);
    loop {
        let est = integrate_mc(&f, region, m, n, seed)?;
        if est.stderr <= target_stderr || n >= cap {
            return Ok(est);
        }
        n = (n * 2).min(cap);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * PI).abs() < 1e-14);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_over_cube_is_exact() {
        let e = integrate_mc(|_| 1.0, Region::FullCube, 3, 10_000, 1).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.samples, 10_000);
        let q = integrate_mc(|_| 1.0, Region::QuarterCube, 3, 100, 1).unwrap();
        assert_eq!(q.value, 0.125);
    }

    #[test]
    fn disk_area_via_cube_indicator() {
        let r = 0.3;
        let e = integrate_mc(
            |t| f64::from(t[0] * t[0] + t[1] * t[1] <= r * r),
            Region::FullCube,
            2,
            200_000,
            5,
        )
        .unwrap();
        assert!(e.within(PI * r * r, 3.0), "{e:?}");
        let b = integrate_mc(|_| 1.0, Region::OriginBall { radius: r }, 2, 1000, 5).unwrap();
        assert!((b.value - PI * r * r).abs() < 1e-15);
    }

    #[test]
    fn deterministic_regardless_of_threads() {
        let f = |t: &[f64]| (t[0] * 7.0).sin() + t[1];
        let a = integrate_mc(f, Region::FullCube, 2, 50_001, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| integrate_mc(f, Region::FullCube, 2, 50_001, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn region_partition() {
        let delta = 0.1;
        let regions = [
            Region::OriginBall { radius: delta },
            Region::NearLattice { delta },
            Region::FarFromLattice { delta },
        ];
        let mut rng = rng::stream(3, 0);
        for _ in 0..20_000 {
            let t: Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let hits = regions.iter().filter(|r| r.contains(&t)).count();
            assert_eq!(hits, 1, "{t:?}");
        }
    }

    #[test]
    fn volumes_of_masked_regions_sum_to_one() {
        let delta = 0.1;
        let near = integrate_mc(|_| 1.0, Region::NearLattice { delta }, 2, 400_000, 2).unwrap();
        let far = integrate_mc(|_| 1.0, Region::FarFromLattice { delta }, 2, 400_000, 2).unwrap();
        let ball = Region::OriginBall { radius: delta }.volume(2).unwrap();
        // Same seed, same points: the indicators are complementary.
        assert!((near.value + far.value + ball - 1.0).abs() < 5.0 * (near.stderr + far.stderr));
        // On the torus Λ∖0 has 2^m - 1 distinct points, each with a full disk.
        assert!(near.within(3.0 * PI * delta * delta, 4.0), "{near:?}");
    }

    #[test]
    fn low_acceptance_is_refused() {
        let err = integrate_mc(|_| 1.0, Region::OriginBall { radius: 0.1 }, 16, 10, 0).unwrap_err();
        assert!(matches!(err, Error::AcceptanceTooLow { .. }));
        assert!(integrate_mc(|_| 1.0, Region::OriginBall { radius: -1.0 }, 2, 10, 0).is_err());
        assert!(integrate_mc(|_| 1.0, Region::FullCube, 2, 0, 0).is_err());
    }

    #[test]
    fn adaptive_stops_at_target_or_cap() {
        let f = |t: &[f64]| t[0];
        let e = integrate_mc_adaptive(f, Region::FullCube, 1, 1000, 1 << 20, 1e-3, 4).unwrap();
        assert!(e.stderr <= 1e-3);
        assert!(e.samples < 1 << 20);
        let direct = integrate_mc(f, Region::FullCube, 1, e.samples, 4).unwrap();
        assert_eq!(e, direct);
        let capped = integrate_mc_adaptive(f, Region::FullCube, 1, 1000, 4000, 1e-9, 4).unwrap();
        assert_eq!(capped.samples, 4000);
    }
}
