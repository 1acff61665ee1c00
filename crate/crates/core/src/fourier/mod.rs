//! Fourier transforms of the signed discrepancy and its smoothed version.
//!
//! For a uniformly random coloring, `D̂(θ) = E[exp(2πi⟨Ax, θ⟩)]` factors over
//! columns as `∏_j cos(2π⟨Aʲ, θ⟩)`. With thousands of columns the product
//! underflows, so it is accumulated as a sign and a sum of `ln|cos|`; a
//! column whose cosine is an exact zero makes the whole transform zero.
//! Columns with identical support contribute identical factors and are
//! evaluated once with a multiplicity.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::setsystem::{max_column_frequency, IncidenceMatrix};
use crate::smoothing::{cos_pi, lattice_shifts, sin_pi, Smoother};

pub mod decay;
pub mod gaussian;
pub mod integrate;

pub use decay::*;
pub use gaussian::*;
pub use integrate::{
    integrate_mc, integrate_mc_adaptive, integrate_mc_complex, integrate_mc_multi, ComplexEstimate,
    Estimate, Region,
};

/// Spike dominance is tested on `‖θ‖₂ ≤ C_SPIKE`.
pub const C_SPIKE: f64 = 1.0 / 16.0;

/// A point of the fundamental domain `[-½, ½)^m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaPoint(Vec<f64>);

impl ThetaPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(c) = coords.iter().find(|c| !(-0.5..0.5).contains(*c)) {
            return Err(invalid(format!("coordinate {c} is outside [-1/2, 1/2)")));
        }
        Ok(Self(coords))
    }

    /// Reduce arbitrary coordinates modulo 1 into the fundamental domain.
    pub fn reduced(coords: &[f64]) -> Self {
        Self(
            coords
                .iter()
                .map(|&c| {
                    let r = c - c.round();
                    if r >= 0.5 {
                        r - 1.0
                    } else {
                        r
                    }
                })
                .collect(),
        )
    }

    /// Comma-separated coordinates, e.g. `0.1,-0.02`.
    pub fn parse(s: &str) -> Result<Self> {
        let coords = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("bad coordinate {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl AsRef<[f64]> for ThetaPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// A real number stored as sign and log-magnitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignedLog {
    /// `-1`, `0` or `1`.
    pub sign: i8,
    /// `ln|value|`; `-∞` when `sign == 0`.
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        ln_abs: f64::NEG_INFINITY,
    };

    pub fn value(&self) -> f64 {
        // exp underflows to 0 below about -745
        self.sign as f64 * self.ln_abs.exp()
    }
}

/// `D̂` for one matrix, with columns grouped by support.
#[derive(Debug, Clone)]
pub struct DhatEvaluator {
    m: usize,
    /// (rows of the support, number of columns with that support)
    classes: Vec<(Vec<usize>, u64)>,
}

impl DhatEvaluator {
    pub fn new(a: &IncidenceMatrix) -> Self {
        let mut index: HashMap<&[u64], usize> = HashMap::new();
        let mut classes: Vec<(Vec<usize>, u64)> = Vec::new();
        for j in 0..a.n() {
            let bits = a.col_bits(j);
            if bits.iter().all(|&w| w == 0) {
                continue;
            }
            match index.get(bits) {
                Some(&k) => classes[k].1 += 1,
                None => {
                    index.insert(bits, classes.len());
                    classes.push((a.col_support(j).collect(), 1));
                }
            }
        }
        Self { m: a.m(), classes }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: theta.len(),
            });
        }
        Ok(())
    }

    /// `D̂(θ)` as sign and log-magnitude. Caller guarantees `theta.len() == m`.
    pub fn log_abs_unchecked(&self, theta: &[f64]) -> SignedLog {
        let mut negative = false;
        let mut ln_abs = 0.0;
        for (rows, count) in &self.classes {
            let z: f64 = rows.iter().map(|&i| theta[i]).sum();
            let c = cos_pi(2.0 * z);
            if c == 0.0 {
                return SignedLog::ZERO;
            }
            if c < 0.0 && count % 2 == 1 {
                negative = !negative;
            }
            ln_abs += *count as f64 * c.abs().ln();
        }
        SignedLog {
            sign: if negative { -1 } else { 1 },
            ln_abs,
        }
    }

    pub fn log_abs(&self, theta: &[f64]) -> Result<SignedLog> {
        self.check(theta)?;
        Ok(self.log_abs_unchecked(theta))
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        self.log_abs(theta).map(|v| v.value())
    }

    /// `θᵀ(AAᵀ)θ = Σ_j ⟨Aʲ, θ⟩²`.
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        self.classes
            .iter()
            .map(|(rows, count)| {
                let z: f64 = rows.iter().map(|&i| theta[i]).sum();
                *count as f64 * z * z
            })
            .sum()
    }
}

/// `D̂(θ) = ∏_j cos(2π⟨Aʲ, θ⟩)`.
pub fn dhat(a: &IncidenceMatrix, theta: &[f64]) -> Result<f64> {
    DhatEvaluator::new(a).value(theta)
}

/// Largest `n` accepted by the `2ⁿ` enumerations.
pub const MAX_ENUM_N: usize = 24;

/// `D̂(θ)` straight from the definition: the average of
/// `exp(2πi⟨Ax, θ⟩)` over all `2ⁿ` colorings, visited in Gray-code order.
/// The imaginary part cancels under `x ↦ -x`; it is checked to be below
/// `10⁻¹²`.
pub fn dhat_bruteforce(a: &IncidenceMatrix, theta: &[f64]) -> Result<f64> {
    let n = a.n();
    if n > MAX_ENUM_N {
        return Err(Error::TooLarge {
            what: "n",
            limit: MAX_ENUM_N as u64,
            got: n as u64,
        });
    }
    if theta.len() != a.m() {
        return Err(Error::DimensionMismatch {
            expected: a.m(),
            got: theta.len(),
        });
    }
    let cols = a.column_lists();
    let mut x = vec![1i64; n];
    let mut d: Vec<i64> = (0..a.m()).map(|i| a.row_sum(i) as i64).collect();
    let (mut re, mut im) = (Neumaier::default(), Neumaier::default());
    let total = 1u64 << n;
    for k in 0..total {
        if k > 0 {
            let j = k.trailing_zeros() as usize;
            x[j] = -x[j];
            for &i in &cols[j] {
                d[i] += 2 * x[j];
            }
        }
        let phase: f64 = d.iter().zip(theta).map(|(&di, &t)| di as f64 * t).sum();
        re.add(cos_pi(2.0 * phase));
        im.add(sin_pi(2.0 * phase));
    }
    let (re, im) = (re.sum() / total as f64, im.sum() / total as f64);
    assert!(im.abs() < 1e-12, "imaginary part {im} of D̂ does not vanish");
    Ok(re)
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `φ_k(θ) = |∏_{j<k} cos(2π⟨Aʲ, θ⟩)|`, the contribution of the first `k`
/// columns.
pub fn dhat_partial(a: &IncidenceMatrix, theta: &[f64], k: usize) -> Result<f64> {
    if theta.len() != a.m() {
        return Err(Error::DimensionMismatch {
            expected: a.m(),
            got: theta.len(),
        });
    }
    if k > a.n() {
        return Err(invalid(format!("k = {k} exceeds n = {}", a.n())));
    }
    let mut ln = 0.0;
    for j in 0..k {
        let z: f64 = a.col_support(j).map(|i| theta[i]).sum();
        let c = cos_pi(2.0 * z).abs();
        if c == 0.0 {
            return Ok(0.0);
        }
        ln += c.ln();
    }
    Ok(ln.exp())
}

/// `X̂(θ) = D̂(θ)·R̂(θ)`.
pub fn xhat(a: &IncidenceMatrix, smoother: &Smoother, theta: &[f64]) -> Result<f64> {
    Ok(dhat(a, theta)? * smoother.rhat(theta))
}

/// `d₂(θ, Λ)` for `Λ = {-½, 0, ½}^m`, coordinatewise distance to `½ℤ`.
pub fn d2_to_lattice(theta: &[f64]) -> f64 {
    theta
        .iter()
        .map(|&t| {
            let d = t - 0.5 * (2.0 * t).round();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Quadratic approximation check at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadApproxReport {
    pub log_dhat: f64,
    /// `θᵀ(AAᵀ)θ`
    pub quad_form: f64,
    /// `|ln D̂(θ) + 2π²θᵀ(AAᵀ)θ|`
    pub residual: f64,
    /// `K·n·t²·‖θ‖₂⁴`
    pub bound: f64,
    pub ok: bool,
}

/// The constant used for the quadratic approximation suite: the per-column
/// Taylor remainder `|ln cos z + z²/2| ≤ z⁴/3` for `|z| ≤ π/4` with
/// `|⟨Aʲ, θ⟩| ≤ 2√t‖θ‖₂` gives `K = (2π)⁴·2⁴/3 = 256π⁴/3`.
pub fn quad_approx_k() -> f64 {
    256.0 * PI.powi(4) / 3.0
}

/// `|ln D̂(θ) + 2π²θᵀ(AAᵀ)θ| ≤ K·n·t²·‖θ‖₂⁴`, where `t` is
/// [`IncidenceMatrix::t`]. Requires `‖θ‖₂ ≤ 1/(16√t)`, every element in at
/// most `4t` sets, and `D̂(θ) > 0`.
pub fn check_quadratic_approx(
    a: &IncidenceMatrix,
    theta: &[f64],
    k: f64,
) -> Result<QuadApproxReport> {
    let eval = DhatEvaluator::new(a);
    let sl = eval.log_abs(theta)?;
    let t = a.t();
    let norm_sq: f64 = theta.iter().map(|x| x * x).sum();
    if t > 0.0 && norm_sq.sqrt() > 1.0 / (16.0 * t.sqrt()) {
        return Err(Error::Precondition(format!(
            "‖θ‖₂ = {} exceeds 1/(16√t) = {}",
            norm_sq.sqrt(),
            1.0 / (16.0 * t.sqrt())
        )));
    }
    let freq = max_column_frequency(a);
    if freq as f64 > 4.0 * t {
        return Err(Error::Precondition(format!(
            "an element lies in {freq} sets, more than 4t = {}",
            4.0 * t
        )));
    }
    if sl.sign <= 0 {
        return Err(Error::Precondition("D̂(θ) is not positive".into()));
    }
    let quad = eval.quad_form(theta);
    let residual = (sl.ln_abs + 2.0 * PI * PI * quad).abs();
    let bound = k * a.n() as f64 * t * t * norm_sq * norm_sq;
    Ok(QuadApproxReport {
        log_dhat: sl.ln_abs,
        quad_form: quad,
        residual,
        bound,
        ok: residual <= bound,
    })
}

/// Spike dominance for `X̂` at one point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XSpikeReport {
    /// `ln|X̂(θ)|`
    pub ln_lhs: f64,
    /// `ln(2·Σ_{s ∈ Λ∖0} |X̂(θ+s)|)`
    pub ln_rhs: f64,
    pub holds: bool,
    /// Largest `| ln|D̂(θ+s)| - ln|D̂(θ)| |` over the tested shifts.
    pub periodicity_deviation: f64,
    pub shifts: usize,
    pub within_radius: bool,
}

/// Periodicity of `|D̂|` under `Λ` is accepted up to this log deviation.
pub const PERIODICITY_TOL: f64 = 1e-9;

/// `|X̂(θ)| > 2·Σ_{s ∈ Λ∖0} |X̂(θ+s)|` with `Δ = 1`, evaluated in log space.
/// Shifts are enumerated when `3^m ≤ 10⁶`; beyond that a fixed sample is
/// used and the right side is only a lower bound.
pub fn spike_dominance_x(
    a: &IncidenceMatrix,
    smoother: &Smoother,
    theta: &[f64],
) -> Result<XSpikeReport> {
    match smoother {
        Smoother::Lazy(s) if s.delta() == 1 => {}
        _ => {
            return Err(Error::Precondition(
                "spike dominance is stated for the Δ = 1 smoother".into(),
            ))
        }
    }
    spike_dominance_with(&DhatEvaluator::new(a), smoother, theta)
}

/// [`spike_dominance_x`] with a prebuilt evaluator.
pub fn spike_dominance_with(
    eval: &DhatEvaluator,
    smoother: &Smoother,
    theta: &[f64],
) -> Result<XSpikeReport> {
    let base = eval.log_abs(theta)?;
    let ln_lhs = base.ln_abs + smoother.rhat(theta).ln();
    let mut terms = Vec::new();
    let mut dev: f64 = 0.0;
    let mut shifted = vec![0.0; theta.len()];
    for s in lattice_shifts(theta.len(), 0) {
        if s.iter().all(|&v| v == 0.0) {
            continue;
        }
        for ((o, t), v) in shifted.iter_mut().zip(theta).zip(&s) {
            *o = t + v;
        }
        let d = eval.log_abs_unchecked(&shifted);
        if base.sign != 0 || d.sign != 0 {
            dev = dev.max((d.ln_abs - base.ln_abs).abs());
        }
        let r = smoother.rhat(&shifted).abs();
        if r > 0.0 && d.sign != 0 {
            terms.push(d.ln_abs + r.ln());
        }
    }
    let ln_rhs = 2f64.ln() + log_sum_exp(&terms);
    let norm: f64 = theta.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(XSpikeReport {
        ln_lhs,
        ln_rhs,
        holds: ln_lhs > ln_rhs,
        periodicity_deviation: dev,
        shifts: 3usize.saturating_pow(theta.len() as u32).min(100_000) - 1,
        within_radius: norm <= C_SPIKE,
    })
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::setsystem::sample_bernoulli;
    use crate::smoothing::rhat_1d;
    use proptest::prelude::*;
    use rand::Rng;

    fn dense(rows: &[&[u8]]) -> IncidenceMatrix {
        IncidenceMatrix::from_dense(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn dhat_examples() {
        let z = IncidenceMatrix::zeros(3, 5).unwrap();
        assert_eq!(dhat(&z, &[0.1, -0.3, 0.49]).unwrap(), 1.0);
        assert!(
            (dhat(&dense(&[&[1]]), &[0.125]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs()
                < 1e-8
        );
        assert_eq!(
            dhat(&IncidenceMatrix::identity(2).unwrap(), &[0.25, 1.0 / 6.0]).unwrap(),
            0.0
        );
        assert!(dhat(&z, &[0.1]).is_err());
    }

    #[test]
    fn bruteforce_examples() {
        assert_eq!(
            dhat_bruteforce(&IncidenceMatrix::zeros(2, 6).unwrap(), &[0.2, 0.3]).unwrap(),
            1.0
        );
        assert!(dhat_bruteforce(&dense(&[&[1, 1]]), &[0.25]).unwrap().abs() < 1e-15);
        let big = IncidenceMatrix::zeros(1, 25).unwrap();
        assert!(matches!(
            dhat_bruteforce(&big, &[0.0]),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn bruteforce_matches_product() {
        let mut rng = rng::stream(11, 0);
        for trial in 0..100 {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(1..=16);
            let a = sample_bernoulli(m, n, rng.random_range(0.2..0.8), trial).unwrap();
            let theta: Vec<f64> = (0..m).map(|_| rng.random::<f64>() - 0.5).collect();
            let p = dhat(&a, &theta).unwrap();
            let b = dhat_bruteforce(&a, &theta).unwrap();
            assert!((p - b).abs() <= 1e-10, "trial {trial}: {p} vs {b}");
        }
    }

    #[test]
    fn partial_products() {
        let a = sample_bernoulli(3, 40, 0.5, 3).unwrap();
        let theta = [0.07, -0.21, 0.33];
        assert_eq!(dhat_partial(&a, &theta, 0).unwrap(), 1.0);
        let full = dhat_partial(&a, &theta, 40).unwrap();
        assert!((full - dhat(&a, &theta).unwrap().abs()).abs() < 1e-12);
        let mut prev = 1.0;
        for k in 1..=40 {
            let v = dhat_partial(&a, &theta, k).unwrap();
            assert!(v <= prev);
            prev = v;
        }
        assert!(dhat_partial(&a, &theta, 41).is_err());
    }

    #[test]
    fn xhat_examples() {
        let a = sample_bernoulli(2, 9, 0.5, 1).unwrap();
        assert_eq!(xhat(&a, &Smoother::lazy(2), &[0.0, 0.0]).unwrap(), 1.0);
        let t = [0.11, -0.3];
        assert_eq!(
            xhat(&a, &Smoother::lazy(0), &t).unwrap(),
            dhat(&a, &t).unwrap()
        );
        let v = xhat(&dense(&[&[1]]), &Smoother::lazy(1), &[0.125]).unwrap();
        assert!((v - 0.603_553).abs() < 1e-6);
    }

    #[test]
    fn lattice_distance_examples() {
        assert_eq!(d2_to_lattice(&[0.0, 0.0]), 0.0);
        assert!((d2_to_lattice(&[0.25, 0.25]) - 2f64.sqrt() / 4.0).abs() < 1e-15);
        assert!((d2_to_lattice(&[0.4, 0.0]) - 0.1).abs() < 1e-15);
        assert!((d2_to_lattice(&[-0.45, 0.1]) - (0.05f64.powi(2) + 0.01).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn theta_point_domain() {
        assert!(ThetaPoint::new(vec![0.5]).is_err());
        assert!(ThetaPoint::new(vec![-0.5, 0.49]).is_ok());
        let r = ThetaPoint::reduced(&[0.75, -1.2, 0.5]);
        assert_eq!(r.coords()[0], -0.25);
        assert!((r.coords()[1] + 0.2).abs() < 1e-15);
        assert_eq!(r.coords()[2], -0.5);
        assert_eq!(
            ThetaPoint::parse("0.1, -0.02").unwrap().coords(),
            &[0.1, -0.02]
        );
        assert!(ThetaPoint::parse("0.1,abc").is_err());
    }

    #[test]
    fn quadratic_approx_examples() {
        let a = sample_bernoulli(3, 50, 0.5, 2).unwrap();
        let r = check_quadratic_approx(&a, &[0.0; 3], 0.0).unwrap();
        assert_eq!(r.residual, 0.0);
        assert!(r.ok);

        let one = dense(&[&[1]]);
        let r = check_quadratic_approx(&one, &[0.02], quad_approx_k()).unwrap();
        let expect = ((0.04 * PI).cos().ln() + 2.0 * PI * PI * 0.0004).abs();
        assert!((r.residual - expect).abs() < 1e-15);
        assert!(r.ok);
        assert!(r.residual <= quad_approx_k() * 0.02f64.powi(4));

        assert!(matches!(
            check_quadratic_approx(&one, &[0.2], 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn spike_examples() {
        let a = sample_bernoulli(1, 30, 0.5, 5).unwrap();
        let s = Smoother::lazy(1);
        let rep = spike_dominance_x(&a, &s, &[0.01]).unwrap();
        assert!(rep.holds);
        assert!(rep.periodicity_deviation < PERIODICITY_TOL);
        let ratio = (rep.ln_rhs - rep.ln_lhs).exp();
        let expect = 2.0 * (rhat_1d(1, 0.51) + rhat_1d(1, -0.49)) / rhat_1d(1, 0.01);
        // In m = 1 the shifts ±½ coincide with the two listed terms.
        assert!((ratio - expect).abs() < 1e-9, "{ratio} vs {expect}");

        let rep = spike_dominance_x(&a, &s, &[0.0]).unwrap();
        assert!(rep.holds && rep.ln_rhs == f64::NEG_INFINITY);
        assert!(spike_dominance_x(&a, &Smoother::lazy(2), &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn dhat_symmetries(seed in any::<u64>(), m in 1usize..5, n in 1usize..60,
                           t in proptest::collection::vec(-0.5f64..0.5, 4), k in 0usize..4) {
            let a = sample_bernoulli(m, n, 0.5, seed).unwrap();
            let theta = &t[..m];
            let v = dhat(&a, theta).unwrap();
            prop_assert!(v.abs() <= 1.0);
            let neg: Vec<f64> = theta.iter().map(|x| -x).collect();
            prop_assert!((v - dhat(&a, &neg).unwrap()).abs() < 1e-12);
            let i = k % m;
            let mut one = theta.to_vec();
            one[i] += 1.0;
            prop_assert!((v - dhat(&a, &one).unwrap()).abs() < 1e-9);
            let mut half = theta.to_vec();
            half[i] += 0.5;
            prop_assert!((v.abs() - dhat(&a, &half).unwrap().abs()).abs() < 1e-9);
            let x = xhat(&a, &Smoother::lazy(1), theta).unwrap();
            prop_assert!(x.abs() <= 1.0);
        }
    }
}
