//! Dense complex linear algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative singular-value cutoff for pseudoinverses.
pub const PINV_RTOL: f64 = 1e-12;

/// Relative tolerance used when checking Hermitian symmetry.
pub const HERMITIAN_RTOL: f64 = 1e-10;

pub fn real_to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Frobenius norm of `m - m*` relative to the norm of `m`.
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (m - m.adjoint()).norm() / scale
}

pub fn ensure_hermitian(m: &CMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::dims("Hermitian matrix columns", m.nrows(), m.ncols()));
    }
    let asymmetry = hermitian_asymmetry(m);
    if !(asymmetry <= HERMITIAN_RTOL) {
        return Err(Error::NotHermitian { asymmetry });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted in descending order and each eigenvector's phase is
/// fixed so its largest-magnitude entry is real and positive.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

pub fn hermitian_eigen(m: &CMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(m)?;
    let n = m.nrows();
    // Exact symmetrization so the solver sees a Hermitian input.
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        vectors.set_column(dst, &col);
        values.push(eig.eigenvalues[src]);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("eigendecomposition produced non-finite eigenvalues"));
    }
    Ok(HermitianEigen {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Rotates `v` so that its largest-magnitude entry (lowest index on ties) is
/// real and positive.
pub fn fix_phase(v: &mut CVector) {
    let mut best = 0;
    let mut best_mag = -1.0;
    for (i, z) in v.iter().enumerate() {
        // Small slack keeps the pick stable against last-bit noise.
        if z.norm() > best_mag * (1.0 + 1e-12) {
            best = i;
            best_mag = z.norm();
        }
    }
    if best_mag > 0.0 {
        let rot = v[best].conj() / best_mag;
        v.iter_mut().for_each(|z| *z *= rot);
        v[best] = C64::new(v[best].re, 0.0);
    }
}

/// Principal square root of a Hermitian PSD matrix.
///
/// Eigenvalues below `N·ε·max|λ|` are treated as zero. Negative eigenvalues
/// down to `-1e-8 * max|λ|` are clamped; anything more negative is rejected.
pub fn psd_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eigen(m)?;
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tolerance = 1e-8 * scale.max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let zero_floor = n as f64 * f64::EPSILON * scale;
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -tolerance {
            return Err(Error::NotPositiveSemidefinite {
                eigenvalue: lambda,
                tolerance: -tolerance,
            });
        }
        // Eigenvalues at rounding level are zero; their square roots would not be.
        let root = if lambda <= zero_floor { 0.0 } else { lambda.sqrt() };
        for i in 0..n {
            scaled[(i, j)] *= root;
        }
    }
    Ok(&scaled * eig.eigenvectors.adjoint())
}

/// Moore-Penrose pseudoinverse with rank information.
#[derive(Debug, Clone)]
pub struct PseudoInverse {
    pub matrix: CMatrix,
    pub rank: usize,
    pub condition_number: f64,
}

impl PseudoInverse {
    pub fn is_full_column_rank(&self, ncols: usize) -> bool {
        self.rank == ncols
    }
}

/// SVD-based pseudoinverse; singular values below `PINV_RTOL * σ_max` are
/// treated as zero.
pub fn pinv(a: &CMatrix) -> PseudoInverse {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return PseudoInverse {
            matrix: CMatrix::zeros(n, m),
            rank: 0,
            condition_number: f64::INFINITY,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let sigma_max = sigma.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let cutoff = PINV_RTOL * sigma_max;

    let mut rank = 0;
    let mut sigma_min = f64::INFINITY;
    // pinv = V Σ⁺ U*
    let mut v_scaled = v_t.adjoint();
    for (k, &s) in sigma.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 {
            rank += 1;
            sigma_min = sigma_min.min(s);
            1.0 / s
        } else {
            0.0
        };
        v_scaled.column_mut(k).scale_mut(inv);
    }
    let condition_number = if rank == 0 {
        f64::INFINITY
    } else {
        sigma_max / sigma_min
    };
    PseudoInverse {
        matrix: v_scaled * u.adjoint(),
        rank,
        condition_number,
    }
}

/// Squared Euclidean norm of a complex vector.
pub fn norm_sqr(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn squared_distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Relative Frobenius distance `‖a - b‖ / max(‖b‖, tiny)`.
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
