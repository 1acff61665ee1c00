//! Point probabilities of `X = D + R` by two independent routes.
//!
//! The exact route enumerates all `2ⁿ` colorings in Gray-code order,
//! tallies each signed discrepancy vector `D`, and convolves the tallies
//! with the exact law of `R`; the result is a rational with denominator
//! `2ⁿ·2^{bits(R)}`. The Fourier route integrates
//! `X̂(θ)·exp(-2πi⟨λ, θ⟩)` over `[-½, ½)^m` by Monte Carlo and scales to any
//! `n`.

use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fourier::{
    integrate_mc, integrate_mc_complex, integrate_mc_multi, ComplexEstimate, DhatEvaluator,
    Estimate, Region, MAX_ENUM_N,
};
use crate::rng;
use crate::setsystem::IncidenceMatrix;
use crate::smoothing::{cos_pi, rhat_1d, sin_pi, Smoother};

/// Number of colorings producing each signed discrepancy vector.
#[derive(Debug, Clone)]
pub struct DiscrepancyLaw {
    m: usize,
    n: usize,
    counts: HashMap<Vec<i64>, u64>,
}

impl DiscrepancyLaw {
    /// Enumerate all `2ⁿ` colorings (`n ≤ 24`). Each step flips one sign and
    /// updates only the rows containing that element.
    pub fn enumerate(a: &IncidenceMatrix) -> Result<Self> {
        let n = a.n();
        if n > MAX_ENUM_N {
            return Err(Error::TooLarge {
                what: "n",
                limit: MAX_ENUM_N as u64,
                got: n as u64,
            });
        }
        let cols = a.column_lists();
        let mut x = vec![1i64; n];
        let mut d: Vec<i64> = (0..a.m()).map(|i| a.row_sum(i) as i64).collect();
        let mut counts: HashMap<Vec<i64>, u64> = HashMap::new();
        for k in 0..1u64 << n {
            if k > 0 {
                let j = k.trailing_zeros() as usize;
                x[j] = -x[j];
                for &i in &cols[j] {
                    d[i] += 2 * x[j];
                }
            }
            match counts.get_mut(d.as_slice()) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(d.clone(), 1);
                }
            }
        }
        Ok(Self {
            m: a.m(),
            n,
            counts,
        })
    }

    pub fn counts(&self) -> &HashMap<Vec<i64>, u64> {
        &self.counts
    }

    /// Exact `Pr[D + R = λ]`.
    pub fn prob(&self, smoother: &Smoother, lambda: &[i64]) -> Result<BigRational> {
        if lambda.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: lambda.len(),
            });
        }
        let laws: Vec<(HashMap<i64, BigUint>, u32)> = (0..self.m)
            .map(|i| {
                let (pairs, bits) = smoother.row_law(i);
                (pairs.into_iter().collect(), bits)
            })
            .collect();
        let bits: u32 = laws.iter().map(|(_, b)| b).sum::<u32>() + self.n as u32;
        let mut numerator = BigUint::zero();
        'outer: for (d, &count) in &self.counts {
            let mut term = BigUint::from(count);
            for (i, (law, _)) in laws.iter().enumerate() {
                match law.get(&(lambda[i] - d[i])) {
                    Some(w) => term *= w,
                    None => continue 'outer,
                }
            }
            numerator += term;
        }
        Ok(BigRational::new(
            BigInt::from(numerator),
            BigInt::from(BigUint::one() << bits),
        ))
    }
}

/// Exact `Pr[X = λ]` by enumeration (`n ≤ 24`).
pub fn prob_exact(a: &IncidenceMatrix, smoother: &Smoother, lambda: &[i64]) -> Result<BigRational> {
    check_smoother(a, smoother)?;
    DiscrepancyLaw::enumerate(a)?.prob(smoother, lambda)
}

fn check_smoother(a: &IncidenceMatrix, smoother: &Smoother) -> Result<()> {
    if let Smoother::Parity(p) = smoother {
        if p.m() != a.m() {
            return Err(Error::DimensionMismatch {
                expected: a.m(),
                got: p.m(),
            });
        }
    }
    Ok(())
}

/// Real and imaginary parts of `∫ X̂(θ)·exp(-2πi⟨λ, θ⟩) dθ` over the cube.
/// The imaginary part vanishes in expectation since `X̂` is even.
pub fn inversion_integral_mc(
    a: &IncidenceMatrix,
    smoother: &Smoother,
    lambda: &[i64],
    samples: u64,
    seed: u64,
) -> Result<ComplexEstimate> {
    check_smoother(a, smoother)?;
    if lambda.len() != a.m() {
        return Err(Error::DimensionMismatch {
            expected: a.m(),
            got: lambda.len(),
        });
    }
    let eval = DhatEvaluator::new(a);
    integrate_mc_complex(
        |t| {
            let x = eval.log_abs_unchecked(t).value() * smoother.rhat(t);
            if x == 0.0 {
                return (0.0, 0.0);
            }
            let phase: f64 = lambda.iter().zip(t).map(|(&l, &th)| l as f64 * th).sum();
            (x * cos_pi(2.0 * phase), -x * sin_pi(2.0 * phase))
        },
        Region::FullCube,
        a.m(),
        samples,
        seed,
    )
}

/// Monte Carlo `Pr[X = λ]` through the inversion integral.
pub fn prob_fourier_mc(
    a: &IncidenceMatrix,
    smoother: &Smoother,
    lambda: &[i64],
    samples: u64,
    seed: u64,
) -> Result<Estimate> {
    inversion_integral_mc(a, smoother, lambda, samples, seed).map(|c| c.re)
}

/// [`prob_fourier_mc`] with the sample count doubled from `start` until the
/// stderr reaches `target_stderr` or `cap` samples are used.
pub fn prob_fourier_mc_adaptive(
    a: &IncidenceMatrix,
    smoother: &Smoother,
    lambda: &[i64],
    start: u64,
    cap: u64,
    target_stderr: f64,
    seed: u64,
) -> Result<Estimate> {
    let mut n = start.max(1).min(cap);
    loop {
        let est = prob_fourier_mc(a, smoother, lambda, n, seed)?;
        if est.stderr <= target_stderr || n >= cap {
            return Ok(est);
        }
        n = (n * 2).min(cap);
    }
}

/// `Pr[X = 0]` under the parity smoother as `2^m·∫_{[-¼,¼)^m} X̂(θ) dθ`.
/// `X` is always even, so the transform has period ½ in every coordinate.
pub fn prob_even_variant(a: &IncidenceMatrix, samples: u64, seed: u64) -> Result<Estimate> {
    let smoother = Smoother::parity(a);
    let eval = DhatEvaluator::new(a);
    let est = integrate_mc(
        |t| eval.log_abs_unchecked(t).value() * smoother.rhat(t),
        Region::QuarterCube,
        a.m(),
        samples,
        seed,
    )?;
    let scale = 2f64.powi(a.m() as i32);
    Ok(Estimate {
        value: scale * est.value,
        stderr: scale * est.stderr,
        ..est
    })
}

/// `∫_{[-½,½)^m} exp(2πi⟨t, θ⟩) dθ`, which is 1 for `t = 0` and 0 otherwise.
pub fn cancellation_check(t: &[i64], samples: u64, seed: u64) -> Result<ComplexEstimate> {
    if t.is_empty() {
        return Err(invalid("frequency vector must be non-empty"));
    }
    integrate_mc_complex(
        |theta| {
            let phase: f64 = t.iter().zip(theta).map(|(&k, &th)| k as f64 * th).sum();
            (cos_pi(2.0 * phase), sin_pi(2.0 * phase))
        },
        Region::FullCube,
        t.len(),
        samples,
        seed,
    )
}

/// Exact or estimated `Pr[X = λ]`, as printed by the `invert` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointProbability {
    pub lambda: Vec<i64>,
    /// `"numerator/denominator"`
    pub exact: Option<String>,
    pub exact_f64: Option<f64>,
    pub estimate: Option<Estimate>,
    pub imag: Option<Estimate>,
    /// `|exact - estimate.value|` when both are present.
    pub abs_diff: Option<f64>,
}

impl PointProbability {
    pub fn new(lambda: Vec<i64>, exact: Option<&BigRational>, mc: Option<ComplexEstimate>) -> Self {
        let exact_f64 = exact.and_then(|q| q.to_f64());
        let abs_diff = match (exact_f64, mc) {
            (Some(e), Some(c)) => Some((e - c.re.value).abs()),
            _ => None,
        };
        Self {
            lambda,
            exact: exact.map(|q| format!("{}/{}", q.numer(), q.denom())),
            exact_f64,
            estimate: mc.map(|c| c.re),
            imag: mc.map(|c| c.im),
            abs_diff,
        }
    }
}

/// The three-way split of `Pr[X = 0] = ∫ X̂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssemblyReport {
    /// Ball radius `min(1/(16√t), ⅛)`.
    pub radius: f64,
    /// `∫_{‖θ‖₂ ≤ r} X̂`
    pub central: Estimate,
    /// `Σ_{s} ∫_{‖θ - s‖₂ ≤ r} X̂` over the `2^m - 1` nonzero half-integral
    /// points of the torus.
    pub near_lattice: Estimate,
    /// `∫_{d₂(θ,Λ) ≥ r} |X̂|`
    pub far: Estimate,
    /// `exp(-p·r²·n/24)`
    pub far_bound: f64,
    /// `central - |near| - (far + 3·stderr)`: a lower estimate of `Pr[X = 0]`.
    pub lower_bound_witness: f64,
    /// `central ≥ 2|near|` and `central > far + 3·stderr`.
    pub holds: bool,
}

/// Ball radius for the assembly.
pub fn assembly_radius(a: &IncidenceMatrix) -> f64 {
    let t = a.t();
    if t > 0.0 {
        (1.0 / (16.0 * t.sqrt())).min(0.125)
    } else {
        0.125
    }
}

/// Estimate the central, near-lattice and far integrals of the main
/// decomposition. The near-lattice term samples offsets `u` from the origin
/// ball and uses `D̂(s + u) = (-1)^{Σ_{i ∈ supp s} |S_i|}·D̂(u)` with `R̂`
/// evaluated exactly at `s + u`.
pub fn three_region_assembly(
    a: &IncidenceMatrix,
    smoother: &Smoother,
    samples: u64,
    seed: u64,
) -> Result<AssemblyReport> {
    check_smoother(a, smoother)?;
    let m = a.m();
    if m > 16 {
        return Err(Error::TooLarge {
            what: "m",
            limit: 16,
            got: m as u64,
        });
    }
    let r = assembly_radius(a);
    let eval = DhatEvaluator::new(a);
    let row_parity: Vec<bool> = (0..m).map(|i| a.row_sum(i) % 2 == 1).collect();
    let centers: Vec<(u32, f64)> = (1u32..1 << m)
        .map(|mask| {
            let odd = (0..m)
                .filter(|&i| mask >> i & 1 == 1 && row_parity[i])
                .count();
            (mask, if odd % 2 == 1 { -1.0 } else { 1.0 })
        })
        .collect();
    let lazy_delta = match smoother {
        Smoother::Lazy(s) => Some(s.delta()),
        Smoother::Parity(_) => None,
    };

    let [central, near] = integrate_mc_multi(
        |u| {
            let d = eval.log_abs_unchecked(u).value();
            if d == 0.0 {
                return [0.0, 0.0];
            }
            let central = d * smoother.rhat(u);
            let near: f64 = match lazy_delta {
                Some(delta) => {
                    let base: Vec<f64> = u.iter().map(|&x| rhat_1d(delta, x)).collect();
                    let half: Vec<f64> = u.iter().map(|&x| rhat_1d(delta, x + 0.5)).collect();
                    centers
                        .iter()
                        .map(|&(mask, sign)| {
                            let r: f64 = (0..m)
                                .map(|i| if mask >> i & 1 == 1 { half[i] } else { base[i] })
                                .product();
                            sign * r
                        })
                        .sum()
                }
                None => {
                    let mut shifted = vec![0.0; m];
                    centers
                        .iter()
                        .map(|&(mask, sign)| {
                            for i in 0..m {
                                shifted[i] = u[i] + if mask >> i & 1 == 1 { 0.5 } else { 0.0 };
                            }
                            sign * smoother.rhat(&shifted)
                        })
                        .sum()
                }
            };
            [central, d * near]
        },
        Region::OriginBall { radius: r },
        m,
        samples,
        seed,
    )?;

    let far = integrate_mc(
        |t| (eval.log_abs_unchecked(t).value() * smoother.rhat(t)).abs(),
        Region::FarFromLattice { delta: r },
        m,
        samples,
        rng::derive(seed, 1),
    )?;

    let p = crate::fourier::decay::instance_p(a);
    let far_bound = (-p * r * r * a.n() as f64 / 24.0).exp();
    let far_upper = far.value + 3.0 * far.stderr;
    Ok(AssemblyReport {
        radius: r,
        central,
        near_lattice: near,
        far,
        far_bound,
        lower_bound_witness: central.value - near.value.abs() - far_upper,
        holds: central.value >= 2.0 * near.value.abs() && central.value > far_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setsystem::sample_bernoulli;

    fn dense(rows: &[&[u8]]) -> IncidenceMatrix {
        IncidenceMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn exact_examples() {
        let s1 = Smoother::lazy(1);
        assert_eq!(prob_exact(&dense(&[&[1, 1]]), &s1, &[0]).unwrap(), q(1, 4));
        assert_eq!(prob_exact(&dense(&[&[1]]), &s1, &[0]).unwrap(), q(1, 4));
        let z = IncidenceMatrix::zeros(1, 3).unwrap();
        assert_eq!(prob_exact(&z, &Smoother::lazy(0), &[0]).unwrap(), q(1, 1));
        // D ∈ {-2, 0, 2} w.p. (¼, ½, ¼); X = 2 needs D = 2, R = 0: ¼·½.
        assert_eq!(prob_exact(&dense(&[&[1, 1]]), &s1, &[2]).unwrap(), q(1, 8));
        assert!(prob_exact(&IncidenceMatrix::zeros(1, 25).unwrap(), &s1, &[0]).is_err());
        assert!(prob_exact(&dense(&[&[1, 1]]), &s1, &[0, 0]).is_err());
    }

    #[test]
    fn exact_parity_examples() {
        let even = dense(&[&[1, 1]]);
        assert_eq!(
            prob_exact(&even, &Smoother::parity(&even), &[0]).unwrap(),
            q(1, 2)
        );
        let odd = dense(&[&[1]]);
        assert_eq!(
            prob_exact(&odd, &Smoother::parity(&odd), &[0]).unwrap(),
            q(1, 2)
        );
        let z = IncidenceMatrix::zeros(2, 2).unwrap();
        assert_eq!(
            prob_exact(&z, &Smoother::parity(&z), &[0, 0]).unwrap(),
            q(1, 1)
        );
    }

    #[test]
    fn law_sums_to_one_and_is_symmetric() {
        for seed in 0..5 {
            let a = sample_bernoulli(2, 8, 0.5, seed).unwrap();
            let law = DiscrepancyLaw::enumerate(&a).unwrap();
            for smoother in [Smoother::lazy(1), Smoother::lazy(2), Smoother::parity(&a)] {
                let reach = (a.n() as i64) + smoother.max_offset();
                let mut total = BigRational::zero();
                for l0 in -reach..=reach {
                    for l1 in -reach..=reach {
                        let p = law.prob(&smoother, &[l0, l1]).unwrap();
                        assert_eq!(p, law.prob(&smoother, &[-l0, -l1]).unwrap());
                        total += p;
                    }
                }
                assert_eq!(total, q(1, 1));
            }
        }
    }

    #[test]
    fn monte_carlo_matches_small_exact() {
        let a = dense(&[&[1, 1]]);
        let s = Smoother::lazy(1);
        for lambda in [0i64, 2] {
            let exact = prob_exact(&a, &s, &[lambda]).unwrap().to_f64().unwrap();
            let c = inversion_integral_mc(&a, &s, &[lambda], 200_000, 3).unwrap();
            assert!(
                (c.re.value - exact).abs() <= (3.0 * c.re.stderr).max(1e-3),
                "{c:?} vs {exact}"
            );
            assert!(c.im.value.abs() <= 3.0 * c.im.stderr + 1e-15);
        }
        let far = prob_fourier_mc(&a, &s, &[9], 200_000, 4).unwrap();
        assert!(far.within(0.0, 3.0), "{far:?}");
    }

    #[test]
    fn adaptive_reaches_target() {
        let a = dense(&[&[1, 1, 0], &[0, 1, 1]]);
        let e = prob_fourier_mc_adaptive(&a, &Smoother::lazy(1), &[0, 0], 1000, 1 << 22, 2e-3, 5)
            .unwrap();
        assert!(e.stderr <= 2e-3);
    }

    #[test]
    fn even_variant_examples() {
        let even = dense(&[&[1, 1]]);
        let e = prob_even_variant(&even, 100_000, 1).unwrap();
        assert!((e.value - 0.5).abs() <= (3.0 * e.stderr).max(1e-3), "{e:?}");
        let odd = dense(&[&[1]]);
        let e = prob_even_variant(&odd, 100_000, 2).unwrap();
        assert!((e.value - 0.5).abs() <= (3.0 * e.stderr).max(1e-3), "{e:?}");
        let z = IncidenceMatrix::zeros(3, 4).unwrap();
        let e = prob_even_variant(&z, 1000, 3).unwrap();
        assert!((e.value - 1.0).abs() < 1e-12 && e.stderr == 0.0);
    }

    #[test]
    fn cancellation_examples() {
        let zero = cancellation_check(&[0, 0], 1000, 1).unwrap();
        assert_eq!(zero.re.value, 1.0);
        assert_eq!(zero.re.stderr, 0.0);
        assert_eq!(zero.im.value, 0.0);
        for t in [vec![1], vec![3, -2]] {
            let c = cancellation_check(&t, 100_000, 2).unwrap();
            assert!(
                c.re.within(0.0, 3.0) && c.im.within(0.0, 3.0),
                "{t:?}: {c:?}"
            );
        }
        assert!(cancellation_check(&[], 10, 0).is_err());
    }

    #[test]
    fn point_probability_fields() {
        let pp = PointProbability::new(vec![0], Some(&q(1, 4)), None);
        assert_eq!(pp.exact.as_deref(), Some("1/4"));
        assert_eq!(pp.exact_f64, Some(0.25));
        assert!(pp.abs_diff.is_none());
    }

    #[test]
    fn assembly_of_zero_matrix() {
        let z = IncidenceMatrix::zeros(2, 10).unwrap();
        let rep = three_region_assembly(&z, &Smoother::lazy(1), 100_000, 1).unwrap();
        assert!(rep.central.value > 0.0);
        // Around s ≠ 0 the integrand is R̂(s + u) ≤ R̂(u)·∏(32u_i²), tiny next to the center.
        assert!(
            rep.near_lattice.value.abs() < 0.2 * rep.central.value,
            "{rep:?}"
        );
        let sum = rep.central.value + rep.near_lattice.value;
        assert!(sum > 0.0);
    }
}
