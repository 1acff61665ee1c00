//! Gaussian comparators: the transform `Ŷ(θ) = exp(-2π²θᵀΣθ)` of a centered
//! Gaussian, its density at the origin, and the norm tail used to show that
//! the ball `‖θ‖₂ ≤ (1/π)√(m/r)` carries half the mass when `Σ = r·I`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::integrate::{integrate_mc, Estimate, Region};
use crate::error::{invalid, Error, Result};
use crate::rng;

/// Eigenvalues below `-PSD_TOL·max(1, max|λ|)` reject a covariance matrix.
pub const PSD_TOL: f64 = 1e-10;

fn validate_covariance(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !sigma.is_square() || sigma.nrows() == 0 {
        return Err(invalid("covariance must be a non-empty square matrix"));
    }
    let scale = sigma.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if (sigma - sigma.transpose())
        .iter()
        .any(|v| v.abs() > PSD_TOL * scale)
    {
        return Err(invalid("covariance is not symmetric"));
    }
    let eig = sigma.clone().symmetric_eigen().eigenvalues;
    let top = eig.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if let Some(l) = eig.iter().find(|&&l| l < -PSD_TOL * top) {
        return Err(invalid(format!("covariance has negative eigenvalue {l}")));
    }
    Ok(eig.iter().copied().collect())
}

/// `Ŷ(θ) = exp(-2π²·θᵀΣθ)`.
pub fn gaussian_fhat(sigma: &DMatrix<f64>, theta: &[f64]) -> Result<f64> {
    validate_covariance(sigma)?;
    if theta.len() != sigma.nrows() {
        return Err(Error::DimensionMismatch {
            expected: sigma.nrows(),
            got: theta.len(),
        });
    }
    Ok(gaussian_fhat_unchecked(sigma, theta))
}

fn gaussian_fhat_unchecked(sigma: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let m = theta.len();
    let mut q = 0.0;
    for i in 0..m {
        for k in 0..m {
            q += theta[i] * sigma[(i, k)] * theta[k];
        }
    }
    (-2.0 * PI * PI * q).exp()
}

/// `f_Y(0) = (2π)^{-m/2}·det(Σ)^{-1/2}`. Requires `Σ` positive definite.
pub fn gaussian_density_zero(sigma: &DMatrix<f64>) -> Result<f64> {
    let eig = validate_covariance(sigma)?;
    let m = eig.len() as f64;
    let log_det: f64 = eig.iter().map(|l| l.ln()).sum();
    if !log_det.is_finite() || eig.iter().any(|&l| l <= 0.0) {
        return Err(invalid("covariance is singular"));
    }
    Ok((-0.5 * m * (2.0 * PI).ln() - 0.5 * log_det).exp())
}

/// Monte Carlo `∫_{‖θ‖₂ ≤ (1/π)√(m/r)} Ŷ(θ) dθ` for `Σ = r·I_m`, with the
/// lower bound `½·(2πr)^{-m/2}` it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianBallReport {
    pub m: usize,
    pub r: f64,
    pub radius: f64,
    pub estimate: Estimate,
    pub bound: f64,
    /// `estimate ≥ bound - 3·stderr`
    pub ok: bool,
}

pub fn gaussian_ball_integral(
    m: usize,
    r: f64,
    samples: u64,
    seed: u64,
) -> Result<GaussianBallReport> {
    if r.is_nan() || r <= 0.0 {
        return Err(invalid(format!("r = {r} must be positive")));
    }
    let sigma = DMatrix::identity(m, m) * r;
    validate_covariance(&sigma)?;
    let radius = (m as f64 / r).sqrt() / PI;
    let estimate = integrate_mc(
        |t| gaussian_fhat_unchecked(&sigma, t),
        Region::OriginBall { radius },
        m,
        samples,
        seed,
    )?;
    let bound = 0.5 * (2.0 * PI * r).powf(-(m as f64) / 2.0);
    Ok(GaussianBallReport {
        m,
        r,
        radius,
        estimate,
        bound,
        ok: estimate.value >= bound - 3.0 * estimate.stderr,
    })
}

/// Empirical `Pr[‖G‖₂ > √m + λ]` for a standard Gaussian in `ℝ^m`, and the
/// concentration bound `2e^{-λ²/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormTailReport {
    pub m: usize,
    pub lambda: f64,
    pub frequency: f64,
    pub bound: f64,
    pub ok: bool,
}

pub fn gaussian_norm_tail(m: usize, lambda: f64, samples: u64, seed: u64) -> NormTailReport {
    let mut rng = rng::stream(seed, m as u64);
    let threshold = (m as f64).sqrt() + lambda;
    let hits = (0..samples)
        .filter(|_| {
            let sq: f64 = (0..m)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g * g
                })
                .sum();
            sq.sqrt() > threshold
        })
        .count();
    let frequency = hits as f64 / samples as f64;
    let bound = 2.0 * (-lambda * lambda / 2.0).exp();
    NormTailReport {
        m,
        lambda,
        frequency,
        bound,
        ok: frequency <= bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fhat_examples() {
        let one = DMatrix::identity(1, 1);
        assert_eq!(gaussian_fhat(&one, &[0.0]).unwrap(), 1.0);
        let v = gaussian_fhat(&one, &[1.0]).unwrap();
        assert!((v - (-2.0 * PI * PI).exp()).abs() < 1e-20);
        assert!((v - 2.68e-9).abs() < 1e-11);
        let two = DMatrix::identity(2, 2) * 2.0;
        let v = gaussian_fhat(&two, &[0.5, 0.0]).unwrap();
        assert!((v - (-PI * PI).exp()).abs() < 1e-18);
        assert!((v - 5.17e-5).abs() < 1e-7);
    }

    #[test]
    fn fhat_rejects_bad_covariance() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(gaussian_fhat(&asym, &[0.0, 0.0]).is_err());
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(gaussian_fhat(&neg, &[0.0, 0.0]).is_err());
        assert!(gaussian_fhat(&DMatrix::identity(2, 2), &[0.0]).is_err());
        // PSD but singular is fine for the transform, not for the density.
        let sing = DMatrix::from_element(2, 2, 1.0);
        assert!(gaussian_fhat(&sing, &[0.1, -0.1]).is_ok());
        assert!(gaussian_density_zero(&sing).is_err());
    }

    #[test]
    fn density_examples() {
        let v = gaussian_density_zero(&DMatrix::identity(1, 1)).unwrap();
        assert!((v - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        assert!((v - 0.39894).abs() < 1e-5);
        let v = gaussian_density_zero(&DMatrix::identity(2, 2)).unwrap();
        assert!((v - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let v = gaussian_density_zero(&(DMatrix::identity(3, 3) * k as f64)).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn ball_integral_meets_half_density() {
        let rep = gaussian_ball_integral(2, 4.0, 200_000, 1).unwrap();
        assert!(rep.ok, "{rep:?}");
        assert!((rep.radius - 2f64.sqrt() / (2.0 * PI)).abs() < 1e-15);
        // Exact value: f_Y(0)·Pr[χ²₂ ≤ 4m] = (1/(8π))·(1 - e^{-4}).
        let exact = (1.0 - (-4.0f64).exp()) / (8.0 * PI);
        assert!(
            rep.estimate.within(exact, 4.0),
            "{:?} vs {exact}",
            rep.estimate
        );
    }

    #[test]
    fn norm_tail_examples() {
        for m in [2, 8] {
            for lambda in [1.0, 2.0, 3.0] {
                let rep = gaussian_norm_tail(m, lambda, 100_000, 3);
                assert!(rep.ok, "{rep:?}");
            }
        }
    }
}
