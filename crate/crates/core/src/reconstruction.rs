//! Feedback decoders.
//!
//! * [`omp`]: greedy support search over the columns of `A = ΦΨ`, one
//!   least-squares solve per iteration.
//! * [`modified_omp`]: the support is known to be the first `K_p` dominance
//!   ordered coefficients, so a single pseudoinverse solve
//!   `ŝ₁ = (ΦΨ₁)† y` replaces the iterations.
//! * [`reconstruct_truncation`]: `ĥ = Ψ₃ y`.

use serde::{Deserialize, Serialize};

use crate::bases::Basis;
use crate::compression::{CompressedCsi, FeedbackScheme};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum Algorithm {
    Omp { k: usize },
    ModifiedOmp { k_p: usize },
    InverseTransform,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub h_hat: CVector,
    /// Selected coefficient indices, in selection order.
    pub support: Vec<usize>,
    /// Coefficients on `support`, same order.
    pub coefficients: CVector,
    pub algorithm: Algorithm,
    /// Number of least-squares (pseudoinverse) solves performed.
    pub ls_solves: usize,
    /// Some least-squares system had deficient column rank; the minimum-norm
    /// solution was used.
    pub rank_deficient: bool,
    /// Residual norm `‖y - A_T ŝ_T‖` after each OMP iteration.
    pub residual_norms: Vec<f64>,
}

impl ReconstructionResult {
    /// Full coefficient vector `ŝ` (zero off-support).
    pub fn sparse_coefficients(&self, n: usize) -> CVector {
        let mut s = CVector::zeros(n);
        for (&i, &c) in self.support.iter().zip(self.coefficients.iter()) {
            s[i] = c;
        }
        s
    }
}

fn check_projection(y: &CVector, phi: &CMatrix, basis: &Basis) -> Result<()> {
    if phi.ncols() != basis.dim() {
        return Err(Error::dims("measurement matrix columns", basis.dim(), phi.ncols()));
    }
    if y.len() != phi.nrows() {
        return Err(Error::dims("measurement vector", phi.nrows(), y.len()));
    }
    Ok(())
}

/// Orthogonal matching pursuit with sparsity `k`.
///
/// The selection statistic is `|⟨r, a_j⟩| / ‖a_j‖`; ties go to the lowest
/// index and selected indices are never revisited.
pub fn omp(y: &CVector, phi: &CMatrix, basis: &Basis, k: usize) -> Result<ReconstructionResult> {
    check_projection(y, phi, basis)?;
    let m = phi.nrows();
    if k == 0 || k > m {
        return Err(Error::invalid(format!("OMP sparsity must satisfy 1 <= K <= M (got K={k}, M={m})")));
    }
    let a = phi * basis.matrix();
    let n = a.ncols();
    let col_norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();

    let mut support: Vec<usize> = Vec::with_capacity(k);
    let mut selected = vec![false; n];
    let mut residual = y.clone();
    let mut coefficients = CVector::zeros(0);
    let mut residual_norms = Vec::with_capacity(k);
    let mut rank_deficient = false;

    for _ in 0..k {
        let corr = a.ad_mul(&residual);
        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..n {
            if selected[j] {
                continue;
            }
            let score = if col_norms[j] > 0.0 {
                corr[j].norm() / col_norms[j]
            } else {
                0.0
            };
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        let Some(t) = best else { break };
        selected[t] = true;
        support.push(t);

        let a_t = CMatrix::from_fn(m, support.len(), |i, c| a[(i, support[c])]);
        let p = linalg::pinv(&a_t);
        rank_deficient |= !p.is_full_column_rank(support.len());
        coefficients = &p.matrix * y;
        residual = y - &a_t * &coefficients;
        let rn = residual.norm();
        if let Some(&prev) = residual_norms.last() {
            debug_assert!(rn <= prev * (1.0 + 1e-9) + 1e-12, "OMP residual grew: {prev} -> {rn}");
        }
        residual_norms.push(rn);
    }

    let mut s = CVector::zeros(n);
    for (&i, &c) in support.iter().zip(coefficients.iter()) {
        s[i] = c;
    }
    Ok(ReconstructionResult {
        h_hat: basis.matrix() * s,
        ls_solves: support.len(),
        support,
        coefficients,
        algorithm: Algorithm::Omp { k },
        rank_deficient,
        residual_norms,
    })
}

/// Options for [`modified_omp_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModifiedOmpOptions {
    pub k_p: usize,
    /// Accept `K_p > M`; the dominant block is then solved in the minimum-norm
    /// sense and the result is flagged `rank_deficient`.
    pub allow_underdetermined: bool,
}

/// Modified OMP: `ŝ₁ = (ΦΨ₁)† y`, `ĥ = Ψ₁ ŝ₁`, with `Ψ₁` the first `k_p`
/// basis columns. Requires `1 <= k_p <= M`.
pub fn modified_omp(y: &CVector, phi: &CMatrix, basis: &Basis, k_p: usize) -> Result<ReconstructionResult> {
    modified_omp_with(
        y,
        phi,
        basis,
        ModifiedOmpOptions {
            k_p,
            allow_underdetermined: false,
        },
    )
}

pub fn modified_omp_with(
    y: &CVector,
    phi: &CMatrix,
    basis: &Basis,
    opts: ModifiedOmpOptions,
) -> Result<ReconstructionResult> {
    check_projection(y, phi, basis)?;
    let (m, n) = phi.shape();
    let k_p = opts.k_p;
    if k_p == 0 || k_p > n {
        return Err(Error::invalid(format!("K_p must satisfy 1 <= K_p <= N (got {k_p})")));
    }
    if k_p > m && !opts.allow_underdetermined {
        return Err(Error::invalid(format!(
            "K_p = {k_p} exceeds M = {m}: dominant block is underdetermined"
        )));
    }
    let psi1 = basis.leading(k_p);
    let a1 = phi * &psi1;
    let p = linalg::pinv(&a1);
    let s1 = &p.matrix * y;
    Ok(ReconstructionResult {
        h_hat: &psi1 * &s1,
        support: (0..k_p).collect(),
        coefficients: s1,
        algorithm: Algorithm::ModifiedOmp { k_p },
        ls_solves: 1,
        rank_deficient: !p.is_full_column_rank(k_p),
        residual_norms: Vec::new(),
    })
}

/// Error terms of a modified-OMP reconstruction, computed from the true `h`:
/// `(‖(ΦΨ₁)† ΦΨ₂ s₂‖², ‖s₂‖²)`. Their sum equals `‖h - ĥ‖²`.
pub fn modified_omp_error_terms(h: &CVector, phi: &CMatrix, basis: &Basis, k_p: usize) -> Result<(f64, f64)> {
    let n = basis.dim();
    if k_p == 0 || k_p > n {
        return Err(Error::invalid(format!("K_p must satisfy 1 <= K_p <= N (got {k_p})")));
    }
    let s = basis.sparsify(h)?;
    let s2 = s.rows(k_p, n - k_p).into_owned();
    let a1 = phi * basis.leading(k_p);
    let leak = linalg::pinv(&a1).matrix * (phi * basis.trailing(k_p) * &s2);
    Ok((linalg::norm_sqr(&leak), linalg::norm_sqr(&s2)))
}

/// `ĥ = Ψ₃ y` for truncation feedback.
pub fn reconstruct_truncation(y: &CompressedCsi, basis: &Basis) -> Result<ReconstructionResult> {
    if y.scheme != FeedbackScheme::Truncation {
        return Err(Error::SchemeMismatch("expected truncation feedback".into()));
    }
    if y.basis_kind != Some(basis.kind()) {
        return Err(Error::SchemeMismatch(format!(
            "feedback encoded with {:?}, decoder holds {:?}",
            y.basis_kind,
            basis.kind()
        )));
    }
    if y.n != basis.dim() {
        return Err(Error::dims("truncation feedback dimension", basis.dim(), y.n));
    }
    let m = y.m();
    if m == 0 || m > y.n {
        return Err(Error::invalid(format!("feedback length {m} out of range")));
    }
    let h_hat = basis.matrix().columns(0, m) * &y.vector;
    Ok(ReconstructionResult {
        h_hat,
        support: (0..m).collect(),
        coefficients: y.vector.clone(),
        algorithm: Algorithm::InverseTransform,
        ls_solves: 0,
        rank_deficient: false,
        residual_norms: Vec::new(),
    })
}

/// Decodes a (possibly dequantized) truncation payload without the metadata
/// wrapper: `ĥ = Ψ₃ y`.
pub fn inverse_truncation(y: &CVector, basis: &Basis) -> Result<CVector> {
    if y.is_empty() || y.len() > basis.dim() {
        return Err(Error::dims("truncation payload", basis.dim(), y.len()));
    }
    Ok(basis.matrix().columns(0, y.len()) * y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use crate::bases::dct2d_basis;
    use crate::compression::{compress_truncation, draw_measurement_matrix, MeasurementEnsemble};
    use crate::rng::{complex_gaussian, rng_from_seed};

    fn zero_like(n: usize) -> CVector {
        CVector::from_element(n, C64::new(0.0, 0.0))
    }

    fn random_vector(n: usize, seed: u64) -> CVector {
        let mut rng = rng_from_seed(seed);
        CVector::from_fn(n, |_, _| complex_gaussian(&mut rng))
    }

    fn gaussian_phi(m: usize, n: usize, seed: u64) -> CMatrix {
        draw_measurement_matrix(m, n, seed, MeasurementEnsemble::Real)
            .unwrap()
            .matrix()
            .clone()
    }

    #[test]
    fn omp_recovers_one_sparse_identity() {
        let n = 10;
        let mut y = zero_like(n);
        y[5] = C64::new(2.0, -1.0);
        let r = omp(&y, &CMatrix::identity(n, n), &Basis::identity(n), 1).unwrap();
        assert_eq!(r.support, vec![5]);
        assert!((r.h_hat - &y).norm() < 1e-14);
        assert_eq!(r.ls_solves, 1);
    }

    #[test]
    fn omp_on_zero_input_picks_first_column() {
        let phi = gaussian_phi(4, 8, 1);
        let r = omp(&zero_like(4), &phi, &Basis::identity(8), 1).unwrap();
        assert_eq!(r.support, vec![0]);
        assert!(r.h_hat.norm() == 0.0);
        assert_eq!(r.residual_norms, vec![0.0]);
    }

    #[test]
    fn omp_rejects_bad_sparsity() {
        let phi = gaussian_phi(4, 8, 1);
        let basis = Basis::identity(8);
        assert!(omp(&zero_like(4), &phi, &basis, 0).is_err());
        assert!(omp(&zero_like(4), &phi, &basis, 5).is_err());
        assert!(omp(&zero_like(3), &phi, &basis, 1).is_err());
    }

    #[test]
    fn omp_residual_monotone_and_unique_support() {
        let basis = dct2d_basis(1, 32).unwrap();
        for seed in 0..20 {
            let phi = gaussian_phi(12, 32, seed);
            let h = random_vector(32, 100 + seed);
            let y = &phi * &h;
            let r = omp(&y, &phi, &basis, 8).unwrap();
            assert!(r.residual_norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)));
            let mut s = r.support.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 8);
            assert_eq!(r.ls_solves, 8);
        }
    }

    #[test]
    fn modified_omp_exact_on_dominant_span() {
        let basis = dct2d_basis(1, 16).unwrap();
        let mut s = zero_like(16);
        for i in 0..4 {
            s[i] = complex_gaussian(&mut rng_from_seed(i as u64));
        }
        let h = basis.densify(&s).unwrap();
        let phi = gaussian_phi(6, 16, 3);
        let r = modified_omp(&(&phi * &h), &phi, &basis, 4).unwrap();
        assert!((r.h_hat - &h).norm() / h.norm() < 1e-10);
        assert_eq!(r.support, vec![0, 1, 2, 3]);
        assert_eq!(r.ls_solves, 1);
        assert!(!r.rank_deficient);
    }

    #[test]
    fn modified_omp_identity_full() {
        let n = 8;
        let basis = dct2d_basis(1, n).unwrap();
        let h = random_vector(n, 4);
        let r = modified_omp(&h, &CMatrix::identity(n, n), &basis, n).unwrap();
        assert!((r.h_hat - &h).norm() / h.norm() < 1e-12);
    }

    #[test]
    fn modified_omp_error_identity() {
        let basis = dct2d_basis(1, 32).unwrap();
        for seed in 0..10 {
            let phi = gaussian_phi(10, 32, seed);
            let h = random_vector(32, 50 + seed);
            let r = modified_omp(&(&phi * &h), &phi, &basis, 5).unwrap();
            let lhs = linalg::norm_sqr(&(&h - &r.h_hat));
            let (leak, tail) = modified_omp_error_terms(&h, &phi, &basis, 5).unwrap();
            assert!((lhs - (leak + tail)).abs() / lhs < 1e-8);
        }
    }

    #[test]
    fn modified_omp_k_p_bounds() {
        let basis = Basis::identity(8);
        let phi = gaussian_phi(3, 8, 2);
        let y = random_vector(3, 2);
        assert!(modified_omp(&y, &phi, &basis, 4).is_err());
        assert!(modified_omp(&y, &phi, &basis, 0).is_err());
        let r = modified_omp_with(
            &y,
            &phi,
            &basis,
            ModifiedOmpOptions {
                k_p: 5,
                allow_underdetermined: true,
            },
        )
        .unwrap();
        assert!(r.rank_deficient);
        // Minimum-norm solution still honors the measurements.
        assert!((&phi * &r.h_hat - &y).norm() < 1e-10);
    }

    #[test]
    fn truncation_examples() {
        let basis = dct2d_basis(1, 8).unwrap();
        let h = random_vector(8, 9);
        let full = compress_truncation(&basis, &h, 8).unwrap();
        assert!((reconstruct_truncation(&full, &basis).unwrap().h_hat - &h).norm() < 1e-12);

        let orth = basis.column(5) * C64::new(1.5, 0.5);
        let y = compress_truncation(&basis, &orth, 3).unwrap();
        assert!(reconstruct_truncation(&y, &basis).unwrap().h_hat.norm() < 1e-12);

        let y = compress_truncation(&basis, &h, 3).unwrap();
        let r = reconstruct_truncation(&y, &basis).unwrap();
        let s = basis.sparsify(&h).unwrap();
        let tail: f64 = s.iter().skip(3).map(|z| z.norm_sqr()).sum();
        let err = linalg::norm_sqr(&(&h - &r.h_hat));
        assert!((err - tail).abs() / tail < 1e-12);
    }

    #[test]
    fn truncation_rejects_mismatched_basis() {
        let dct = dct2d_basis(1, 8).unwrap();
        let y = compress_truncation(&dct, &random_vector(8, 1), 3).unwrap();
        assert!(matches!(
            reconstruct_truncation(&y, &Basis::identity(8)),
            Err(Error::SchemeMismatch(_))
        ));
    }

    #[test]
    fn truncation_equals_modified_omp_with_identity_measurements() {
        let basis = dct2d_basis(1, 12).unwrap();
        let h = random_vector(12, 12);
        for m in [1, 4, 12] {
            let y = compress_truncation(&basis, &h, m).unwrap();
            let trunc = reconstruct_truncation(&y, &basis).unwrap();
            let momp = modified_omp(&h, &CMatrix::identity(12, 12), &basis, m).unwrap();
            assert!((trunc.h_hat - momp.h_hat).norm() < 1e-12 * h.norm());
        }
    }
}
