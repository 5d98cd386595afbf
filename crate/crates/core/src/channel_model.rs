//! Spatial correlation and Kronecker-model channel synthesis.
//!
//! Transmit correlation follows the one-ring model
//!
//! ```text
//! [R]_{p,q} = 1/(2Δ) ∫_{φ-Δ}^{φ+Δ} exp(-j 2π (d/λ) (p - q) sin α) dα
//! ```
//!
//! For a UPA the vertical and horizontal factors are one-ring ULA matrices
//! whose spread/AoA come from the transmitter height `u`, scattering ring
//! radius `r` and distance `s`, and `R_TX = R_V ⊗ R_H`.
//!
//! Vectorization is column-major (`h = vec(H)`), so for `N_r = 1` the
//! covariance of `h` is `R_TXᵀ`, and in general
//! `E[h h*] = R_TXᵀ ⊗ R_RX / tr(R_RX)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};
use crate::rng::complex_gaussian;

/// Gauss-Legendre points per quadrature panel.
const GL_ORDER: usize = 16;

/// Default number of channel draws used to estimate a link covariance.
pub const DEFAULT_COVARIANCE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrayGeometry {
    Ula { n_t: usize },
    Upa { n_v: usize, n_h: usize },
}

impl ArrayGeometry {
    pub fn n_t(&self) -> usize {
        match *self {
            ArrayGeometry::Ula { n_t } => n_t,
            ArrayGeometry::Upa { n_v, n_h } => n_v * n_h,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ArrayGeometry::Ula { .. } => "ula",
            ArrayGeometry::Upa { .. } => "upa",
        }
    }
}

/// Scattering geometry of a UPA deployment, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpaGeometry {
    pub elevation_u: f64,
    pub ring_radius_r: f64,
    pub distance_s: f64,
}

impl Default for UpaGeometry {
    fn default() -> Self {
        Self {
            elevation_u: 60.0,
            ring_radius_r: 30.0,
            distance_s: 100.0,
        }
    }
}

/// Vertical/horizontal one-ring parameters derived from a [`UpaGeometry`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpaAngles {
    pub delta_v: f64,
    pub phi_v: f64,
    pub delta_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSpec {
    pub geometry: ArrayGeometry,
    /// Antenna spacing d/λ.
    pub antenna_spacing_wavelengths: f64,
    /// One-ring angular spread Δ in radians (ULA only; a UPA derives its
    /// spreads from `upa_geometry`).
    pub angular_spread: f64,
    pub upa_geometry: Option<UpaGeometry>,
}

impl CorrelationSpec {
    pub fn ula(n_t: usize, spacing: f64, angular_spread: f64) -> Self {
        Self {
            geometry: ArrayGeometry::Ula { n_t },
            antenna_spacing_wavelengths: spacing,
            angular_spread,
            upa_geometry: None,
        }
    }

    pub fn upa(n_v: usize, n_h: usize, spacing: f64, geometry: UpaGeometry) -> Self {
        let angular_spread = upa_geometry_angles(&geometry)
            .map(|a| a.delta_h)
            .unwrap_or(f64::NAN);
        Self {
            geometry: ArrayGeometry::Upa { n_v, n_h },
            antenna_spacing_wavelengths: spacing,
            angular_spread,
            upa_geometry: Some(geometry),
        }
    }

    pub fn n_t(&self) -> usize {
        self.geometry.n_t()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t() == 0 {
            return Err(Error::invalid("array must have at least one antenna"));
        }
        let d = self.antenna_spacing_wavelengths;
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::invalid(format!("antenna spacing d/λ = {d} must be finite and >= 0")));
        }
        match self.geometry {
            ArrayGeometry::Ula { .. } => {
                let delta = self.angular_spread;
                if !(delta.is_finite() && delta >= 0.0) {
                    return Err(Error::invalid(format!(
                        "angular spread {delta} must be finite and >= 0"
                    )));
                }
            }
            ArrayGeometry::Upa { .. } => {
                let g = self
                    .upa_geometry
                    .ok_or_else(|| Error::invalid("UPA geometry requires u, r, s"))?;
                upa_geometry_angles(&g)?;
            }
        }
        Ok(())
    }

    /// Transmit correlation matrix for a user at azimuth AoA `user_aoa`.
    pub fn transmit_correlation(&self, user_aoa: f64) -> Result<CMatrix> {
        match self.geometry {
            ArrayGeometry::Ula { .. } => ula_correlation(self, user_aoa),
            ArrayGeometry::Upa { .. } => upa_correlation(self, user_aoa),
        }
    }
}

fn gauss_legendre() -> &'static ([f64; GL_ORDER], [f64; GL_ORDER]) {
    static RULE: OnceLock<([f64; GL_ORDER], [f64; GL_ORDER])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut nodes = [0.0; GL_ORDER];
        let mut weights = [0.0; GL_ORDER];
        for i in 0..n {
            // Newton iteration on P_n from the Chebyshev-like initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        (nodes, weights)
    })
}

/// `1/(2Δ) ∫ exp(-j 2π d ℓ sin α) dα` over `[φ-Δ, φ+Δ]` by composite
/// Gauss-Legendre quadrature, with panels refined to the oscillation count.
fn one_ring_lag(spacing: f64, lag: usize, spread: f64, aoa: f64) -> C64 {
    let freq = 2.0 * PI * spacing * lag as f64;
    if spread == 0.0 {
        // Point-mass limit.
        return C64::from_polar(1.0, -freq * aoa.sin());
    }
    let (nodes, weights) = gauss_legendre();
    // sin has unit slope bound, so the phase sweeps at most freq·2Δ radians.
    let cycles = freq * 2.0 * spread / (2.0 * PI);
    let panels = 8 + (4.0 * cycles).ceil() as usize;
    let lo = aoa - spread;
    let width = 2.0 * spread / panels as f64;
    let half = 0.5 * width;
    let mut acc = C64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = lo + (p as f64 + 0.5) * width;
        let mut panel = C64::new(0.0, 0.0);
        for (x, w) in nodes.iter().zip(weights) {
            let alpha = mid + half * x;
            panel += C64::from_polar(*w, -freq * alpha.sin());
        }
        acc += panel * half;
    }
    acc / (2.0 * spread)
}

/// One-ring correlation matrix of an `n`-element linear array.
///
/// The result is Toeplitz and exactly Hermitian, with unit diagonal.
pub fn one_ring_correlation(n: usize, spacing: f64, spread: f64, aoa: f64) -> Result<CMatrix> {
    if n == 0 {
        return Err(Error::invalid("array must have at least one antenna"));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid(format!("angular spread {spread} must be finite and >= 0")));
    }
    if !spacing.is_finite() || !aoa.is_finite() {
        return Err(Error::invalid("spacing and AoA must be finite"));
    }
    let mut lags = Vec::with_capacity(n);
    lags.push(C64::new(1.0, 0.0));
    for lag in 1..n {
        let v = one_ring_lag(spacing, lag, spread, aoa);
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Integration { lag });
        }
        lags.push(v);
    }
    Ok(CMatrix::from_fn(n, n, |p, q| {
        if p >= q {
            lags[p - q]
        } else {
            lags[q - p].conj()
        }
    }))
}

/// One-ring correlation of a ULA described by `spec` for a user at `user_aoa`.
pub fn ula_correlation(spec: &CorrelationSpec, user_aoa: f64) -> Result<CMatrix> {
    let n = match spec.geometry {
        ArrayGeometry::Ula { n_t } => n_t,
        ArrayGeometry::Upa { .. } => {
            return Err(Error::invalid("ula_correlation requires a ULA geometry"))
        }
    };
    one_ring_correlation(n, spec.antenna_spacing_wavelengths, spec.angular_spread, user_aoa)
}

pub fn upa_geometry_angles(g: &UpaGeometry) -> Result<UpaAngles> {
    let UpaGeometry {
        elevation_u: u,
        ring_radius_r: r,
        distance_s: s,
    } = *g;
    if !(u > 0.0 && r >= 0.0 && s > 0.0 && s > r) || !(u.is_finite() && s.is_finite()) {
        return Err(Error::invalid(format!(
            "UPA geometry requires u > 0, s > r >= 0 (got u={u}, r={r}, s={s})"
        )));
    }
    let far = ((s + r) / u).atan();
    let near = ((s - r) / u).atan();
    Ok(UpaAngles {
        delta_v: 0.5 * (far - near),
        phi_v: 0.5 * (far + near),
        delta_h: (r / s).atan(),
    })
}

/// Vertical and horizontal factors of a UPA transmit correlation.
pub fn upa_factors(spec: &CorrelationSpec, user_aoa_h: f64) -> Result<(CMatrix, CMatrix)> {
    let (n_v, n_h) = match spec.geometry {
        ArrayGeometry::Upa { n_v, n_h } => (n_v, n_h),
        ArrayGeometry::Ula { .. } => {
            return Err(Error::invalid("upa_correlation requires a UPA geometry"))
        }
    };
    let g = spec
        .upa_geometry
        .ok_or_else(|| Error::invalid("UPA geometry requires u, r, s"))?;
    let angles = upa_geometry_angles(&g)?;
    let d = spec.antenna_spacing_wavelengths;
    let r_v = one_ring_correlation(n_v, d, angles.delta_v, angles.phi_v)?;
    let r_h = one_ring_correlation(n_h, d, angles.delta_h, user_aoa_h)?;
    Ok((r_v, r_h))
}

/// `R_V ⊗ R_H`; antenna index is `v * n_h + h`.
pub fn upa_correlation(spec: &CorrelationSpec, user_aoa_h: f64) -> Result<CMatrix> {
    let (r_v, r_h) = upa_factors(spec, user_aoa_h)?;
    Ok(linalg::kron(&r_v, &r_h))
}

/// Draws a horizontal AoA uniformly from (-π, π].
pub fn draw_aoa<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.random(); // [0, 1)
    PI - 2.0 * PI * u
}

/// Channel realizations for one or more users.
#[derive(Debug, Clone)]
pub struct ChannelSample {
    per_user: Vec<CMatrix>,
    vectorized: Vec<CVector>,
    stacked: CMatrix,
}

impl ChannelSample {
    pub fn from_users(per_user: Vec<CMatrix>) -> Result<Self> {
        let first = per_user.first().ok_or(Error::EmptySamples)?;
        let (n_r, n_t) = first.shape();
        for h in &per_user {
            if h.shape() != (n_r, n_t) {
                return Err(Error::dims("user channel columns", n_t, h.ncols()));
            }
        }
        let vectorized = per_user
            .iter()
            .map(|h| CVector::from_column_slice(h.as_slice()))
            .collect();
        let mut stacked = CMatrix::zeros(n_r * per_user.len(), n_t);
        for (k, h) in per_user.iter().enumerate() {
            stacked.view_mut((k * n_r, 0), (n_r, n_t)).copy_from(h);
        }
        Ok(Self {
            per_user,
            vectorized,
            stacked,
        })
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn user_matrix(&self, k: usize) -> &CMatrix {
        &self.per_user[k]
    }

    /// `h_k = vec(H_k)`, column-major.
    pub fn vectorized(&self, k: usize) -> &CVector {
        &self.vectorized[k]
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectorized
    }

    /// `[H_1ᵀ ⋯ H_Nuᵀ]ᵀ`.
    pub fn stacked(&self) -> &CMatrix {
        &self.stacked
    }
}

/// Pre-factored Kronecker link: holds the correlation square roots so repeated
/// draws cost two matrix products.
#[derive(Debug, Clone)]
pub struct KroneckerLink {
    tx_sqrt: CMatrix,
    rx_sqrt: CMatrix,
    scale: f64,
}

impl KroneckerLink {
    pub fn new(r_tx: &CMatrix, r_rx: &CMatrix) -> Result<Self> {
        let tx_sqrt = linalg::psd_sqrt(r_tx)?;
        let rx_sqrt = linalg::psd_sqrt(r_rx)?;
        let trace: f64 = r_rx.diagonal().iter().map(|z| z.re).sum();
        if !(trace > 0.0) {
            return Err(Error::invalid("receive correlation must have positive trace"));
        }
        Ok(Self {
            tx_sqrt,
            rx_sqrt,
            scale: 1.0 / trace.sqrt(),
        })
    }

    /// Transmit-only link with `R_RX = I_{n_r}`.
    pub fn with_identity_rx(r_tx: &CMatrix, n_r: usize) -> Result<Self> {
        Self::new(r_tx, &CMatrix::identity(n_r, n_r))
    }

    pub fn n_t(&self) -> usize {
        self.tx_sqrt.nrows()
    }

    pub fn n_r(&self) -> usize {
        self.rx_sqrt.nrows()
    }

    /// `H = R_RX^{1/2} H_iid R_TX^{1/2} / √tr(R_RX)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let iid = CMatrix::from_fn(self.n_r(), self.n_t(), |_, _| complex_gaussian(rng));
        (&self.rx_sqrt * iid * &self.tx_sqrt) * C64::new(self.scale, 0.0)
    }

    pub fn draw_vectorized<R: Rng + ?Sized>(&self, rng: &mut R) -> CVector {
        let h = self.draw(rng);
        CVector::from_column_slice(h.as_slice())
    }
}

/// Single-user draw from the Kronecker model.
pub fn draw_channel<R: Rng + ?Sized>(
    r_tx: &CMatrix,
    r_rx: &CMatrix,
    rng: &mut R,
) -> Result<ChannelSample> {
    let link = KroneckerLink::new(r_tx, r_rx)?;
    ChannelSample::from_users(vec![link.draw(rng)])
}

/// Multi-user draw; users are stacked in the order of `links`.
pub fn draw_multiuser<R: Rng + ?Sized>(links: &[KroneckerLink], rng: &mut R) -> Result<ChannelSample> {
    ChannelSample::from_users(links.iter().map(|l| l.draw(rng)).collect())
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: CMatrix,
    pub sample_count: usize,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// Wraps a known covariance (e.g. the analytic one) as an estimate.
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        linalg::ensure_hermitian(&matrix)?;
        Ok(Self {
            matrix,
            sample_count: 0,
        })
    }
}

/// `C_h = (1/T) Σ h h*`, symmetrized.
pub fn estimate_covariance(samples: &[CVector]) -> Result<CovarianceEstimate> {
    let first = samples.first().ok_or(Error::EmptySamples)?;
    let n = first.len();
    let t = samples.len();
    let mut stacked = CMatrix::zeros(n, t);
    for (j, h) in samples.iter().enumerate() {
        if h.len() != n {
            return Err(Error::dims("covariance sample length", n, h.len()));
        }
        stacked.set_column(j, h);
    }
    let mut c = &stacked * stacked.adjoint();
    c /= C64::new(t as f64, 0.0);
    let sym = (&c + c.adjoint()) * C64::new(0.5, 0.0);
    Ok(CovarianceEstimate {
        matrix: sym,
        sample_count: t,
    })
}

/// Analytic covariance of `vec(H)`: `R_TXᵀ ⊗ R_RX / tr(R_RX)`.
pub fn kronecker_covariance(r_tx: &CMatrix, r_rx: &CMatrix) -> CMatrix {
    let trace: f64 = r_rx.diagonal().iter().map(|z| z.re).sum();
    linalg::kron(&r_tx.transpose(), r_rx) / C64::new(trace, 0.0)
}
