//! Feedback encoders.
//!
//! * Random projection: `y = Φ h` with an i.i.d. Gaussian `Φ` shared by both
//!   link ends through its seed. The receiver needs no basis.
//! * Truncation: `y = first M entries of Ψ* h` for a dominance-ordered basis.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::bases::{read_f64, read_u32, read_u64, read_u8, Basis, BasisKind};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::rng::{complex_gaussian, real_gaussian, rng_from_seed};

const CSI_MAGIC: &[u8; 8] = b"CSIFBFB1";

/// Entry distribution of the measurement matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasurementEnsemble {
    /// i.i.d. N(0, 1) real entries.
    #[default]
    Real,
    /// i.i.d. CN(0, 1) entries.
    Complex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    matrix: CMatrix,
    seed: Option<u64>,
    ensemble: MeasurementEnsemble,
}

impl MeasurementMatrix {
    /// Wraps an explicit matrix (no seed, cannot be regenerated remotely).
    pub fn from_matrix(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() > matrix.ncols() {
            return Err(Error::invalid(format!(
                "measurement matrix must satisfy 1 <= M <= N (got {}x{})",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self {
            matrix,
            seed: None,
            ensemble: MeasurementEnsemble::Real,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn ensemble(&self) -> MeasurementEnsemble {
        self.ensemble
    }

    pub fn m(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Draws an `m × n` Gaussian measurement matrix from `seed`.
pub fn draw_measurement_matrix(
    m: usize,
    n: usize,
    seed: u64,
    ensemble: MeasurementEnsemble,
) -> Result<MeasurementMatrix> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!(
            "measurement count must satisfy 1 <= M <= N (got M={m}, N={n})"
        )));
    }
    let mut rng = rng_from_seed(seed);
    // Row-major fill keeps a row prefix stable if M changes.
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        data.push(match ensemble {
            MeasurementEnsemble::Real => C64::new(real_gaussian(&mut rng), 0.0),
            MeasurementEnsemble::Complex => complex_gaussian(&mut rng),
        });
    }
    Ok(MeasurementMatrix {
        matrix: CMatrix::from_row_slice(m, n, &data),
        seed: Some(seed),
        ensemble,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum FeedbackScheme {
    RandomProjection {
        seed: Option<u64>,
        ensemble: MeasurementEnsemble,
    },
    Truncation,
}

/// Compressed feedback vector `y` with enough metadata to decode it.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedCsi {
    pub vector: CVector,
    pub scheme: FeedbackScheme,
    /// Basis used by the encoder; `None` for random projection.
    pub basis_kind: Option<BasisKind>,
    /// Original CSI dimension `N`.
    pub n: usize,
}

impl CompressedCsi {
    pub fn m(&self) -> usize {
        self.vector.len()
    }

    /// Compression ratio `η = M / N`.
    pub fn eta(&self) -> f64 {
        compression_ratio(self.m(), self.n)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(CSI_MAGIC)?;
        match self.scheme {
            FeedbackScheme::RandomProjection { seed, ensemble } => {
                w.write_all(&[1, ensemble as u8, seed.is_some() as u8])?;
                w.write_all(&seed.unwrap_or(0).to_le_bytes())?;
            }
            FeedbackScheme::Truncation => {
                w.write_all(&[2, 0, 0])?;
                w.write_all(&0u64.to_le_bytes())?;
            }
        }
        let (tag, n_r, n_t) = match self.basis_kind {
            None => (0u8, 0, 0),
            Some(BasisKind::Dct2d { n_r, n_t }) => (1, n_r, n_t),
            Some(BasisKind::Klt) => (2, 0, 0),
            Some(BasisKind::Custom) => (3, 0, 0),
        };
        w.write_all(&[tag])?;
        for v in [n_r, n_t, self.n, self.m()] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for z in self.vector.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CSI_MAGIC {
            return Err(Error::Format("not a compressed CSI record".into()));
        }
        let scheme_tag = read_u8(r)?;
        let ensemble = match read_u8(r)? {
            0 => MeasurementEnsemble::Real,
            1 => MeasurementEnsemble::Complex,
            e => return Err(Error::Format(format!("unknown ensemble {e}"))),
        };
        let has_seed = read_u8(r)? != 0;
        let seed = read_u64(r)?;
        let scheme = match scheme_tag {
            1 => FeedbackScheme::RandomProjection {
                seed: has_seed.then_some(seed),
                ensemble,
            },
            2 => FeedbackScheme::Truncation,
            t => return Err(Error::Format(format!("unknown scheme tag {t}"))),
        };
        let basis_tag = read_u8(r)?;
        let n_r = read_u32(r)? as usize;
        let n_t = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        let m = read_u32(r)? as usize;
        let basis_kind = match basis_tag {
            0 => None,
            1 => Some(BasisKind::Dct2d { n_r, n_t }),
            2 => Some(BasisKind::Klt),
            3 => Some(BasisKind::Custom),
            t => return Err(Error::Format(format!("unknown basis tag {t}"))),
        };
        if m == 0 || m > n {
            return Err(Error::Format(format!("invalid dimensions M={m}, N={n}")));
        }
        let mut data = Vec::with_capacity(m);
        for _ in 0..m {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            data.push(C64::new(re, im));
        }
        Ok(Self {
            vector: CVector::from_vec(data),
            scheme,
            basis_kind,
            n,
        })
    }
}

pub fn compression_ratio(m: usize, n: usize) -> f64 {
    m as f64 / n as f64
}

/// Number of measurements for a target ratio: `round(η N)` clamped to `[1, N]`.
pub fn measurements_for_ratio(eta: f64, n: usize) -> usize {
    ((eta * n as f64).round() as usize).clamp(1, n)
}

/// `y = Φ h`.
pub fn compress_random_projection(phi: &MeasurementMatrix, h: &CVector) -> Result<CompressedCsi> {
    if h.len() != phi.n() {
        return Err(Error::dims("random projection input", phi.n(), h.len()));
    }
    Ok(CompressedCsi {
        vector: phi.matrix() * h,
        scheme: FeedbackScheme::RandomProjection {
            seed: phi.seed(),
            ensemble: phi.ensemble(),
        },
        basis_kind: None,
        n: phi.n(),
    })
}

/// `y = Ψ₃* h`, the first `m` sparsified coefficients.
pub fn compress_truncation(basis: &Basis, h: &CVector, m: usize) -> Result<CompressedCsi> {
    let n = basis.dim();
    if h.len() != n {
        return Err(Error::dims("truncation input", n, h.len()));
    }
    if m == 0 || m > n {
        return Err(Error::invalid(format!("truncation length must satisfy 1 <= M <= N (got M={m}, N={n})")));
    }
    let head = basis.matrix().columns(0, m);
    Ok(CompressedCsi {
        vector: head.ad_mul(h),
        scheme: FeedbackScheme::Truncation,
        basis_kind: Some(basis.kind()),
        n,
    })
}
