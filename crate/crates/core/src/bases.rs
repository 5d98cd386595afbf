//! Sparsifying bases.
//!
//! A [`Basis`] stores a unitary `Ψ` whose columns are already ordered by
//! dominance: zig-zag order for the 2D-DCT, descending eigenvalue for the
//! KLT. "The first K coefficients" therefore means the K dominant ones for
//! every basis kind.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel_model::CovarianceEstimate;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};

const BASIS_MAGIC: &[u8; 8] = b"CSIFBAS1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BasisKind {
    Dct2d { n_r: usize, n_t: usize },
    Klt,
    /// Caller-supplied unitary matrix.
    Custom,
}

impl BasisKind {
    pub fn label(&self) -> &'static str {
        match self {
            BasisKind::Dct2d { .. } => "dct",
            BasisKind::Klt => "klt",
            BasisKind::Custom => "custom",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            BasisKind::Dct2d { .. } => 1,
            BasisKind::Klt => 2,
            BasisKind::Custom => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    matrix: CMatrix,
    kind: BasisKind,
    eigenvalues: Option<Vec<f64>>,
}

impl Basis {
    /// Wraps a unitary matrix. Fails if `Ψ*Ψ` deviates from `I` by more than
    /// `1e-10` (relative Frobenius).
    pub fn from_unitary(matrix: CMatrix, kind: BasisKind, eigenvalues: Option<Vec<f64>>) -> Result<Self> {
        let n = matrix.nrows();
        if !matrix.is_square() || n == 0 {
            return Err(Error::dims("basis columns", n, matrix.ncols()));
        }
        let gram = matrix.adjoint() * &matrix;
        let eye = CMatrix::identity(n, n);
        let dev = linalg::rel_frobenius(&gram, &eye);
        if dev > 1e-10 {
            return Err(Error::invalid(format!("basis is not unitary (deviation {dev:e})")));
        }
        match (&kind, &eigenvalues) {
            (BasisKind::Klt, Some(ev)) if ev.len() == n => {}
            (BasisKind::Klt, _) => return Err(Error::invalid("KLT basis requires n eigenvalues")),
            (_, Some(_)) => return Err(Error::invalid("only KLT bases carry eigenvalues")),
            (BasisKind::Dct2d { n_r, n_t }, None) if n_r * n_t != n => {
                return Err(Error::dims("DCT basis dimension", n_r * n_t, n))
            }
            _ => {}
        }
        Ok(Self {
            matrix,
            kind,
            eigenvalues,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CMatrix::identity(n, n),
            kind: BasisKind::Custom,
            eigenvalues: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// Descending eigenvalues; `Some` iff the basis is a KLT.
    pub fn eigenvalues(&self) -> Option<&[f64]> {
        self.eigenvalues.as_deref()
    }

    /// First `k` (dominant) columns.
    pub fn leading(&self, k: usize) -> CMatrix {
        self.matrix.columns(0, k).into_owned()
    }

    /// Columns `k..n` (the non-dominant block).
    pub fn trailing(&self, k: usize) -> CMatrix {
        self.matrix.columns(k, self.dim() - k).into_owned()
    }

    pub fn column(&self, j: usize) -> CVector {
        self.matrix.column(j).into_owned()
    }

    /// `s = Ψ* h`.
    pub fn sparsify(&self, h: &CVector) -> Result<CVector> {
        if h.len() != self.dim() {
            return Err(Error::dims("sparsify input", self.dim(), h.len()));
        }
        Ok(self.matrix.ad_mul(h))
    }

    /// `h = Ψ s`.
    pub fn densify(&self, s: &CVector) -> Result<CVector> {
        if s.len() != self.dim() {
            return Err(Error::dims("densify input", self.dim(), s.len()));
        }
        Ok(&self.matrix * s)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let n = self.dim();
        w.write_all(BASIS_MAGIC)?;
        w.write_all(&[self.kind.tag()])?;
        let (n_r, n_t) = match self.kind {
            BasisKind::Dct2d { n_r, n_t } => (n_r, n_t),
            _ => (0, 0),
        };
        for v in [n_r, n_t, n] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        match &self.eigenvalues {
            Some(ev) => {
                w.write_all(&[1])?;
                for v in ev {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
            None => w.write_all(&[0])?,
        }
        // Row-major (re, im) pairs.
        for i in 0..n {
            for j in 0..n {
                let z = self.matrix[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BASIS_MAGIC {
            return Err(Error::Format("not a basis file".into()));
        }
        let tag = read_u8(r)?;
        let n_r = read_u32(r)? as usize;
        let n_t = read_u32(r)? as usize;
        let n = read_u32(r)? as usize;
        let kind = match tag {
            1 => BasisKind::Dct2d { n_r, n_t },
            2 => BasisKind::Klt,
            3 => BasisKind::Custom,
            t => return Err(Error::Format(format!("unknown basis kind tag {t}"))),
        };
        let eigenvalues = match read_u8(r)? {
            0 => None,
            1 => Some((0..n).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?),
            f => return Err(Error::Format(format!("bad eigenvalue flag {f}"))),
        };
        let mut data = Vec::with_capacity(n * n);
        for _ in 0..n * n {
            let re = read_f64(r)?;
            let im = read_f64(r)?;
            data.push(C64::new(re, im));
        }
        let matrix = CMatrix::from_row_slice(n, n, &data);
        Basis::from_unitary(matrix, kind, eigenvalues)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

/// Orthonormal DCT-II matrix; row `k` is the `k`-th cosine basis vector.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |k, m| {
        let c = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        c * (PI * (2 * m + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

/// JPEG zig-zag traversal of an `n_r × n_t` coefficient grid.
///
/// Returns column-major linear indices `row + n_r * col`, matching `vec(·)`.
pub fn zigzag_order(n_r: usize, n_t: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n_r * n_t);
    if n_r == 0 || n_t == 0 {
        return order;
    }
    for diag in 0..(n_r + n_t - 1) {
        let row_hi = diag.min(n_r - 1);
        let row_lo = diag.saturating_sub(n_t - 1);
        if diag % 2 == 0 {
            for row in (row_lo..=row_hi).rev() {
                order.push(row + n_r * (diag - row));
            }
        } else {
            for row in row_lo..=row_hi {
                order.push(row + n_r * (diag - row));
            }
        }
    }
    order
}

/// 2D-DCT basis in natural (unpermuted) column order.
///
/// Column `kt * n_r + kr` is the separable cosine `C_{n_t}[kt, ·] ⊗ C_{n_r}[kr, ·]`
/// laid out as `vec` of an `n_r × n_t` matrix, i.e. `Ψ = (C_{n_t} ⊗ C_{n_r})ᵀ`.
pub fn dct2d_natural(n_r: usize, n_t: usize) -> DMatrix<f64> {
    dct_matrix(n_t).kronecker(&dct_matrix(n_r)).transpose()
}

pub fn dct2d_basis(n_r: usize, n_t: usize) -> Result<Basis> {
    if n_r == 0 || n_t == 0 {
        return Err(Error::invalid("DCT dimensions must be >= 1"));
    }
    let natural = dct2d_natural(n_r, n_t);
    let order = zigzag_order(n_r, n_t);
    let n = n_r * n_t;
    let matrix = CMatrix::from_fn(n, n, |i, j| C64::new(natural[(i, order[j])], 0.0));
    Ok(Basis {
        matrix,
        kind: BasisKind::Dct2d { n_r, n_t },
        eigenvalues: None,
    })
}

/// KLT basis: eigenvectors of `C_h` ordered by descending eigenvalue.
pub fn klt_basis(c_h: &CovarianceEstimate) -> Result<Basis> {
    let eig = linalg::hermitian_eigen(&c_h.matrix)?;
    Ok(Basis {
        matrix: eig.eigenvectors,
        kind: BasisKind::Klt,
        eigenvalues: Some(eig.eigenvalues),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_gaussian, rng_from_seed};
    use nalgebra::DVector;

    fn random_vector(n: usize, seed: u64) -> CVector {
        let mut rng = rng_from_seed(seed);
        CVector::from_fn(n, |_, _| complex_gaussian(&mut rng))
    }

    #[test]
    fn dct_small_cases() {
        assert_eq!(dct_matrix(1), DMatrix::from_element(1, 1, 1.0));
        let c = dct_matrix(2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let expect = DMatrix::from_row_slice(2, 2, &[r, r, r, -r]);
        assert!((c - expect).norm() < 1e-15);
    }

    #[test]
    fn dct_is_orthonormal() {
        for n in [1, 2, 3, 8, 64] {
            let c = dct_matrix(n);
            let err = (c.transpose() * &c - DMatrix::identity(n, n)).norm() / (n as f64).sqrt();
            assert!(err < 1e-12, "n={n}: {err}");
        }
    }

    #[test]
    fn zigzag_tables() {
        assert_eq!(zigzag_order(1, 5), vec![0, 1, 2, 3, 4]);
        // (0,0),(0,1),(1,0),(1,1) in column-major linear indices
        assert_eq!(zigzag_order(2, 2), vec![0, 2, 1, 3]);
        let grid = [(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2), (1, 2), (2, 1), (2, 2)];
        let expect: Vec<usize> = grid.iter().map(|&(r, c)| r + 3 * c).collect();
        assert_eq!(zigzag_order(3, 3), expect);
    }

    #[test]
    fn zigzag_rectangular_is_permutation() {
        for (r, c) in [(2, 5), (5, 2), (4, 7), (1, 1)] {
            let mut z = zigzag_order(r, c);
            z.sort_unstable();
            assert_eq!(z, (0..r * c).collect::<Vec<_>>());
        }
    }

    #[test]
    fn dct2d_single_row_is_plain_dct() {
        let b = dct2d_basis(1, 8).unwrap();
        let c = dct_matrix(8);
        for i in 0..8 {
            for j in 0..8 {
                assert!((b.matrix()[(i, j)].re - c[(j, i)]).abs() < 1e-15);
            }
        }
        let ones = CVector::from_element(8, C64::new(1.0, 0.0));
        let s = b.sparsify(&ones).unwrap();
        assert!((s[0].re - 8f64.sqrt()).abs() < 1e-12);
        assert!(s.iter().skip(1).all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn dct2d_two_by_two() {
        let b = dct2d_basis(2, 2).unwrap();
        let r = 0.5;
        // natural columns: (kr,kt) = (0,0),(1,0),(0,1),(1,1); zig-zag picks 0,2,1,3
        let natural = DMatrix::from_row_slice(
            4,
            4,
            &[r, r, r, r, r, -r, r, -r, r, r, -r, -r, r, -r, -r, r],
        );
        for (dst, src) in [0, 2, 1, 3].into_iter().enumerate() {
            for i in 0..4 {
                assert!((b.matrix()[(i, dst)].re - natural[(i, src)]).abs() < 1e-15);
            }
        }
        assert!(b.matrix().iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn permutation_consistency() {
        let (n_r, n_t) = (3, 4);
        let b = dct2d_basis(n_r, n_t).unwrap();
        let natural = linalg::real_to_complex(&dct2d_natural(n_r, n_t));
        let h = random_vector(12, 3);
        let s_nat = natural.ad_mul(&h);
        let s = b.sparsify(&h).unwrap();
        for (i, &j) in zigzag_order(n_r, n_t).iter().enumerate() {
            assert!((s[i] - s_nat[j]).norm() < 1e-14);
        }
    }

    #[test]
    fn klt_of_identity() {
        let c = CovarianceEstimate::from_matrix(CMatrix::identity(4, 4)).unwrap();
        let b = klt_basis(&c).unwrap();
        assert!(b.eigenvalues().unwrap().iter().all(|&l| (l - 1.0).abs() < 1e-14));
        assert!(linalg::rel_frobenius(&(&c.matrix * b.matrix()), b.matrix()) < 1e-12);
    }

    #[test]
    fn klt_of_diagonal() {
        let d = DVector::from_vec(vec![1.0, 3.0, 2.0]).map(|x| C64::new(x, 0.0));
        let c = CovarianceEstimate::from_matrix(CMatrix::from_diagonal(&d)).unwrap();
        let b = klt_basis(&c).unwrap();
        assert_eq!(b.eigenvalues().unwrap().len(), 3);
        for (got, want) in b.eigenvalues().unwrap().iter().zip([3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-14);
        }
        for (col, unit) in [1usize, 2, 0].into_iter().enumerate() {
            assert!((b.matrix()[(unit, col)] - C64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn klt_reconstructs_covariance() {
        let mut rng = rng_from_seed(8);
        let a = CMatrix::from_fn(8, 8, |_, _| complex_gaussian(&mut rng));
        let c = CovarianceEstimate::from_matrix(&a * a.adjoint()).unwrap();
        let b = klt_basis(&c).unwrap();
        let lambda = CMatrix::from_diagonal(&DVector::from_iterator(
            8,
            b.eigenvalues().unwrap().iter().map(|&l| C64::new(l, 0.0)),
        ));
        let rebuilt = b.matrix() * lambda * b.matrix().adjoint();
        assert!(linalg::rel_frobenius(&rebuilt, &c.matrix) < 1e-10);
    }

    #[test]
    fn sparsify_identity_and_columns() {
        let h = random_vector(5, 1);
        assert_eq!(Basis::identity(5).sparsify(&h).unwrap(), h);
        let b = dct2d_basis(1, 5).unwrap();
        let s = b.sparsify(&b.column(3)).unwrap();
        for (i, z) in s.iter().enumerate() {
            let want = if i == 3 { 1.0 } else { 0.0 };
            assert!((z - C64::new(want, 0.0)).norm() < 1e-14);
        }
        assert!(b.sparsify(&random_vector(4, 0)).is_err());
    }

    #[test]
    fn densify_mirrors_sparsify() {
        let h = random_vector(5, 2);
        assert_eq!(Basis::identity(5).densify(&h).unwrap(), h);
        let b = dct2d_basis(1, 5).unwrap();
        let mut e = CVector::zeros(5);
        e[2] = C64::new(1.0, 0.0);
        assert!((b.densify(&e).unwrap() - b.column(2)).norm() < 1e-15);
        assert!((b.densify(&h).unwrap().norm() - h.norm()).abs() < 1e-12);
        assert!(b.densify(&random_vector(6, 0)).is_err());
    }

    #[test]
    fn rejects_non_unitary() {
        let m = CMatrix::from_element(2, 2, C64::new(1.0, 0.0));
        assert!(Basis::from_unitary(m, BasisKind::Custom, None).is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut rng = rng_from_seed(4);
        let a = CMatrix::from_fn(6, 6, |_, _| complex_gaussian(&mut rng));
        let c = CovarianceEstimate::from_matrix(&a * a.adjoint()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for b in [klt_basis(&c).unwrap(), dct2d_basis(2, 3).unwrap()] {
            let path = dir.path().join("basis.bin");
            b.save(&path).unwrap();
            assert_eq!(Basis::load(&path).unwrap(), b);
        }
        let junk = dir.path().join("junk.bin");
        std::fs::write(&junk, b"nope").unwrap();
        assert!(Basis::load(&junk).is_err());
    }
}
