use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::sym::{cholesky, SymMatrix, PSD_TOL};
use crate::error::{Result, SpcError};

/// Degrees of freedom up to which chi-square variates are drawn as sums of
/// squared normals; larger values go through the gamma sampler.
const SUM_OF_SQUARES_MAX_DF: u64 = 30;

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn standard_normal_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(dim, (0..dim).map(|_| standard_normal(rng)))
}

/// One draw from `N(mean, cov)`.
pub fn draw_mvn<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &SymMatrix, rng: &mut R) -> Result<DVector<f64>> {
    if mean.len() != cov.dim() {
        return Err(SpcError::InvalidArgument(format!(
            "mean has length {} but covariance is {}x{}",
            mean.len(),
            cov.dim(),
            cov.dim()
        )));
    }
    let factor = cholesky(cov, PSD_TOL * cov.scale())?;
    Ok(draw_mvn_factored(mean, &factor, rng))
}

/// One draw from `N(mean, L Lᵀ)` given the lower Cholesky factor `L`.
pub fn draw_mvn_factored<R: Rng + ?Sized>(mean: &DVector<f64>, factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vector(mean.len(), rng);
    mean + factor * z
}

pub fn draw_chisq<R: Rng + ?Sized>(df: u64, rng: &mut R) -> Result<f64> {
    if df < 1 {
        return Err(SpcError::InvalidDf(df));
    }
    if df <= SUM_OF_SQUARES_MAX_DF {
        Ok((0..df).map(|_| standard_normal(rng).powi(2)).sum())
    } else {
        let gamma = Gamma::new(df as f64 / 2.0, 2.0).map_err(|e| SpcError::InvalidArgument(e.to_string()))?;
        Ok(gamma.sample(rng))
    }
}

/// `scale_sum / χ²_df`, the Jeffreys-prior posterior of a normal variance
/// when `scale_sum` is a residual sum of squares.
pub fn draw_scaled_inv_chisq<R: Rng + ?Sized>(df: u64, scale_sum: f64, rng: &mut R) -> Result<f64> {
    if df < 1 {
        return Err(SpcError::InvalidDf(df));
    }
    if !(scale_sum > 0.0 && scale_sum.is_finite()) {
        return Err(SpcError::InvalidArgument(format!(
            "inverse chi-square scale must be positive and finite, got {scale_sum}"
        )));
    }
    Ok(scale_sum / draw_chisq(df, rng)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn zero_covariance_returns_mean() {
        let mean = DVector::from_vec(vec![0.5, -1.25, 3.0]);
        let mut rng = RngStream::root(1).rng();
        let x = draw_mvn(&mean, &SymMatrix::zeros(3), &mut rng).unwrap();
        assert_eq!(x, mean);
    }

    #[test]
    fn scalar_case_is_normal_draw() {
        let mean = DVector::from_element(1, 2.0);
        let cov = SymMatrix::from_lower_fn(1, |_, _| 4.0);
        let mut a = RngStream::root(9).rng();
        let mut b = RngStream::root(9).rng();
        let x = draw_mvn(&mean, &cov, &mut a).unwrap();
        let z = standard_normal(&mut b);
        assert_eq!(x[0], 2.0 + 2.0 * z);
    }

    #[test]
    fn mvn_moments_and_correlation() {
        let mean = DVector::from_vec(vec![0.0, 1.0]);
        let cov = SymMatrix::from_lower_fn(2, |i, j| if i == j { 1.0 } else { 0.8 });
        let mut rng = RngStream::root(2024).rng();
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| draw_mvn(&mean, &cov, &mut rng).unwrap()).collect();
        let nf = n as f64;
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / nf;
        let m1 = draws.iter().map(|d| d[1]).sum::<f64>() / nf;
        let v0 = draws.iter().map(|d| (d[0] - m0).powi(2)).sum::<f64>() / (nf - 1.0);
        let v1 = draws.iter().map(|d| (d[1] - m1).powi(2)).sum::<f64>() / (nf - 1.0);
        let c01 = draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / (nf - 1.0);
        let bound = 4.0 * (1.0 / nf).sqrt();
        assert!((m0 - 0.0).abs() < bound, "m0 = {m0}");
        assert!((m1 - 1.0).abs() < bound, "m1 = {m1}");
        assert!((v0 - 1.0).abs() < 0.05 && (v1 - 1.0).abs() < 0.05);
        let corr = c01 / (v0 * v1).sqrt();
        assert!((0.79..=0.81).contains(&corr), "corr = {corr}");
    }

    #[test]
    fn mvn_rejects_indefinite() {
        let cov = SymMatrix::from_lower_fn(2, |i, j| if i == j { 1.0 } else { 1.2 });
        let mut rng = RngStream::root(0).rng();
        assert!(matches!(
            draw_mvn(&DVector::zeros(2), &cov, &mut rng),
            Err(SpcError::NotPsd { .. })
        ));
    }

    #[test]
    fn inv_chisq_rejects_bad_input() {
        let mut rng = RngStream::root(0).rng();
        assert!(matches!(
            draw_scaled_inv_chisq(0, 1.0, &mut rng),
            Err(SpcError::InvalidDf(0))
        ));
        assert!(draw_scaled_inv_chisq(5, 0.0, &mut rng).is_err());
    }

    #[test]
    fn inv_chisq_mean_large_df() {
        let df = 40_u64;
        let scale = 12.0;
        let mut rng = RngStream::root(5).rng();
        let n = 100_000;
        let mean = (0..n)
            .map(|_| draw_scaled_inv_chisq(df, scale, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        let expected = scale / (df as f64 - 2.0);
        assert!((mean / expected - 1.0).abs() < 0.03, "mean {mean} vs {expected}");
    }

    #[test]
    fn inv_chisq_small_df_median() {
        // Wilson-Hilferty: median(χ²_df) ≈ df (1 - 2/(9 df))³.
        let df = 8_u64;
        let scale = 3.0;
        let mut rng = RngStream::root(6).rng();
        let mut draws: Vec<f64> = (0..100_000)
            .map(|_| draw_scaled_inv_chisq(df, scale, &mut rng).unwrap())
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[draws.len() / 2];
        let d = df as f64;
        let chisq_median = d * (1.0 - 2.0 / (9.0 * d)).powi(3);
        assert!((median / (scale / chisq_median) - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn inv_chisq_residual_variance_concentrates() {
        let df = 2498_u64;
        let scale = df as f64 * 0.75;
        let mut rng = RngStream::root(7).rng();
        let draws: Vec<f64> = (0..20_000)
            .map(|_| draw_scaled_inv_chisq(df, scale, &mut rng).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        assert!((mean - 0.75).abs() < 0.005, "mean {mean}");
        let rel = sd / mean;
        let expected = (2.0 / df as f64).sqrt();
        assert!(
            (rel / expected - 1.0).abs() < 0.05,
            "relative spread {rel} vs {expected}"
        );
    }
}
