//! MMSE precoding, normalized MSE and downlink sum rate.
//!
//! The precoder is `W = Ĥ*(ĤĤ* + (N_u/ρ)I)⁻¹` with `ρ` the linear SNR, then
//! power-normalized. Rates are always evaluated on the true channel with unit
//! noise power.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerNormalization {
    /// `tr(WW*) = N_u`.
    #[default]
    TotalPower,
    /// Every column has unit norm.
    PerColumn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecoderConfig {
    pub snr_db: f64,
    pub n_users: usize,
    #[serde(default)]
    pub power_normalization: PowerNormalization,
}

impl PrecoderConfig {
    pub fn new(snr_db: f64, n_users: usize) -> Self {
        PrecoderConfig {
            snr_db,
            n_users,
            power_normalization: PowerNormalization::TotalPower,
        }
    }

    /// Linear SNR `ρ`.
    pub fn rho(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users must be at least 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid(format!("SNR must be finite (got {})", self.snr_db)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub normalized_mse: f64,
    pub sum_rate_bps_hz: f64,
    pub eta: f64,
    pub bits: Option<u32>,
    pub scheme: String,
}

/// `‖h - ĥ‖² / ‖h‖²`.
pub fn normalized_mse(h: &CVector, h_hat: &CVector) -> Result<f64> {
    if h.len() != h_hat.len() {
        return Err(Error::dims("reconstructed channel", h.len(), h_hat.len()));
    }
    let energy = linalg::norm_sqr(h);
    if energy == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok(linalg::norm_sqr(&(h - h_hat)) / energy)
}

#[derive(Debug, Clone)]
pub struct Precoder {
    /// `N_t × N_u`, column `k` serves user `k`.
    pub matrix: CMatrix,
    /// The regularized Gram matrix was numerically singular and a
    /// pseudoinverse was used.
    pub pinv_fallback: bool,
}

/// `Ĥ*(ĤĤ* + (N_u/ρ)I)⁻¹` before power normalization.
pub fn mmse_unnormalized(h_hat: &CMatrix, cfg: &PrecoderConfig) -> Result<Precoder> {
    cfg.validate()?;
    let n_u = h_hat.nrows();
    if n_u != cfg.n_users {
        return Err(Error::dims("stacked channel rows", cfg.n_users, n_u));
    }
    let reg = n_u as f64 / cfg.rho();
    let gram = h_hat * h_hat.adjoint() + CMatrix::identity(n_u, n_u) * C64::new(reg, 0.0);
    let h_adj = h_hat.adjoint();
    let chol = gram.clone().cholesky().filter(|c| {
        let d = c.l_dirty().diagonal();
        let max = d.iter().fold(0.0f64, |m, z| m.max(z.re));
        d.iter().all(|z| z.re.is_finite() && z.re > 1e-8 * max)
    });
    match chol {
        Some(c) => {
            // W = Ĥ* G⁻¹ = (G⁻¹ Ĥ)* since G is Hermitian.
            let x = c.solve(h_hat);
            Ok(Precoder {
                matrix: x.adjoint(),
                pinv_fallback: false,
            })
        }
        None => Ok(Precoder {
            matrix: h_adj * linalg::pinv(&gram).matrix,
            pinv_fallback: true,
        }),
    }
}

/// Power-normalized MMSE precoder. An all-zero estimate yields `W = 0`.
pub fn mmse_precoder(h_hat: &CMatrix, cfg: &PrecoderConfig) -> Result<Precoder> {
    let mut p = mmse_unnormalized(h_hat, cfg)?;
    match cfg.power_normalization {
        PowerNormalization::TotalPower => {
            let power = p.matrix.norm_squared();
            if power > 0.0 {
                p.matrix *= C64::new((cfg.n_users as f64 / power).sqrt(), 0.0);
            }
        }
        PowerNormalization::PerColumn => {
            for mut col in p.matrix.column_iter_mut() {
                let n = col.norm();
                if n > 0.0 {
                    col /= C64::new(n, 0.0);
                }
            }
        }
    }
    Ok(p)
}

/// Per-user SINR with the true channel rows `h_k` and precoder columns `w_k`:
/// `(ρ/N_u)|h_k w_k|² / (1 + (ρ/N_u) Σ_{j≠k} |h_k w_j|²)`.
pub fn user_sinrs(h_true: &CMatrix, w: &CMatrix, cfg: &PrecoderConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n_u = cfg.n_users;
    if h_true.nrows() != n_u {
        return Err(Error::dims("stacked channel rows", n_u, h_true.nrows()));
    }
    if w.nrows() != h_true.ncols() {
        return Err(Error::dims("precoder rows", h_true.ncols(), w.nrows()));
    }
    if w.ncols() != n_u {
        return Err(Error::dims("precoder columns", n_u, w.ncols()));
    }
    let gain = cfg.rho() / n_u as f64;
    let g = h_true * w;
    Ok((0..n_u)
        .map(|k| {
            let signal = g[(k, k)].norm_sqr();
            let interference: f64 = (0..n_u).filter(|&j| j != k).map(|j| g[(k, j)].norm_sqr()).sum();
            gain * signal / (1.0 + gain * interference)
        })
        .collect())
}

/// `Σ_k log2(1 + SINR_k)` in bit/s/Hz.
pub fn sum_rate(h_true: &CMatrix, w: &CMatrix, cfg: &PrecoderConfig) -> Result<f64> {
    Ok(user_sinrs(h_true, w, cfg)?.iter().map(|s| (1.0 + s).log2()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, rng_from_seed};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = rng_from_seed(seed);
        CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(&mut rng))
    }

    fn basis_rows(n_u: usize, n_t: usize) -> CMatrix {
        CMatrix::from_fn(n_u, n_t, |i, j| C64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
    }

    #[test]
    fn nmse_examples() {
        let h = CVector::from_fn(5, |i, _| C64::new(i as f64 + 1.0, -0.5));
        assert_eq!(normalized_mse(&h, &h).unwrap(), 0.0);
        assert_eq!(normalized_mse(&h, &CVector::zeros(5)).unwrap(), 1.0);
        assert!((normalized_mse(&h, &(&h * C64::new(2.0, 0.0))).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(normalized_mse(&CVector::zeros(5), &h), Err(Error::ZeroChannel)));
    }

    #[test]
    fn single_user_matched_filter() {
        let h = basis_rows(1, 8);
        let cfg = PrecoderConfig::new(200.0, 1);
        let w = mmse_precoder(&h, &cfg).unwrap().matrix;
        assert!((w[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((w.norm() - 1.0).abs() < 1e-12);

        let cfg = PrecoderConfig::new(10.0, 1);
        let rate = sum_rate(&h, &basis_rows(1, 8).transpose(), &cfg).unwrap();
        assert!((rate - 11f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_users_zero_forcing() {
        let h = basis_rows(2, 6);
        let cfg = PrecoderConfig::new(10.0, 2);
        let w = mmse_precoder(&h, &PrecoderConfig::new(200.0, 2)).unwrap().matrix;
        let g = &h * &w;
        assert!(g[(0, 1)].norm() < 1e-12 && g[(1, 0)].norm() < 1e-12);
        let rate = sum_rate(&h, &w, &cfg).unwrap();
        assert!((rate - 2.0 * 6f64.log2()).abs() < 1e-9);
        assert!((rate - 5.170).abs() < 1e-3);
    }

    #[test]
    fn definitional_identity() {
        let h = random_matrix(4, 64, 1);
        let cfg = PrecoderConfig::new(10.0, 4);
        let w = mmse_unnormalized(&h, &cfg).unwrap();
        assert!(!w.pinv_fallback);
        let gram = &h * h.adjoint() + CMatrix::identity(4, 4) * C64::new(0.4, 0.0);
        let oracle = h.adjoint() * gram.try_inverse().unwrap();
        assert!(linalg::rel_frobenius(&w.matrix, &oracle) < 1e-10);
    }

    #[test]
    fn normalization_modes() {
        let h = random_matrix(3, 16, 2);
        let mut cfg = PrecoderConfig::new(5.0, 3);
        let w = mmse_precoder(&h, &cfg).unwrap().matrix;
        assert!((w.norm_squared() - 3.0).abs() < 1e-10);
        cfg.power_normalization = PowerNormalization::PerColumn;
        let w = mmse_precoder(&h, &cfg).unwrap().matrix;
        for col in w.column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_invariance_per_column_high_snr() {
        let h = random_matrix(4, 32, 3);
        let mut cfg = PrecoderConfig::new(150.0, 4);
        cfg.power_normalization = PowerNormalization::PerColumn;
        let w = mmse_precoder(&h, &cfg).unwrap().matrix;
        for c in [0.01, 3.0, 250.0] {
            let ws = mmse_precoder(&(&h * C64::new(c, 0.0)), &cfg).unwrap().matrix;
            assert!(linalg::rel_frobenius(&ws, &w) < 1e-8);
        }
    }

    #[test]
    fn orthogonal_precoder_gives_zero_rate() {
        let h = basis_rows(2, 4);
        let w = CMatrix::from_fn(4, 2, |i, j| C64::new(if i == j + 2 { 1.0 } else { 0.0 }, 0.0));
        assert_eq!(sum_rate(&h, &w, &PrecoderConfig::new(20.0, 2)).unwrap(), 0.0);
    }

    #[test]
    fn rank_deficient_estimate_at_extreme_snr_falls_back() {
        let row = random_matrix(1, 8, 4);
        let h = CMatrix::from_fn(2, 8, |_, j| row[(0, j)]);
        let p = mmse_precoder(&h, &PrecoderConfig::new(400.0, 2)).unwrap();
        assert!(p.pinv_fallback);
        assert!(p.matrix.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn zero_estimate_gives_zero_precoder() {
        let p = mmse_precoder(&CMatrix::zeros(2, 4), &PrecoderConfig::new(10.0, 2)).unwrap();
        assert_eq!(p.matrix.norm(), 0.0);
    }

    #[test]
    fn rate_grows_with_snr_for_perfect_csi() {
        let h = random_matrix(4, 16, 5);
        let mut last = 0.0;
        for snr in (0..=30).step_by(5) {
            let cfg = PrecoderConfig::new(snr as f64, 4);
            let w = mmse_precoder(&h, &cfg).unwrap().matrix;
            let r = sum_rate(&h, &w, &cfg).unwrap();
            assert!(r >= last);
            last = r;
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let h = random_matrix(2, 4, 6);
        assert!(mmse_precoder(&h, &PrecoderConfig::new(0.0, 3)).is_err());
        assert!(sum_rate(&h, &CMatrix::zeros(3, 2), &PrecoderConfig::new(0.0, 2)).is_err());
        assert!(PrecoderConfig::new(f64::NAN, 2).validate().is_err());
    }
}
