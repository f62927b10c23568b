//! Small dense symmetric linear algebra.
//!
//! The matrices in this crate are tiny (moment matrices of order
//! `v1 + 1 + v2`, information matrices of order `s1 + s2`), so everything is
//! done with dense `nalgebra` storage and full eigendecompositions.
//! Generalized inverses are Moore-Penrose throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DesignError, Result};

/// Eigenvalues below `RANK_TOL * largest` are treated as zero.
pub const RANK_TOL: f64 = 1e-9;

/// Symmetric matrices whose asymmetry exceeds this (relative) are rejected.
const SYMMETRY_REJECT: f64 = 1e-8;

/// Dense symmetric matrix. Always stored exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates and symmetrizes `m` as `(m + m^T) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(DesignError::InvalidMatrix(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(DesignError::InvalidMatrix("non-finite entry".into()));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_REJECT * scale {
            return Err(DesignError::InvalidMatrix(format!(
                "not symmetric (max |m - m^T| = {asym:.3e})"
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes a computed matrix without any checks.
    pub(crate) fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    /// `U^T self U`.
    pub fn congruence(&self, u: &DMatrix<f64>) -> Self {
        Self::symmetrize(u.transpose() * &self.0 * u)
    }

    fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DMatrix<f64> {
        self.0
            .view((rows.start, cols.start), (rows.len(), cols.len()))
            .into_owned()
    }
}

impl std::ops::Index<(usize, usize)> for SymMatrix {
    type Output = f64;
    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Split point of a partitioned matrix: the top-left block is
/// `top x top`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    top: usize,
}

impl Partition {
    pub fn new(top: usize, order: usize) -> Result<Self> {
        if top == 0 || top >= order {
            return Err(DesignError::Dimension(format!(
                "partition top block {top} must lie in 1..{order}"
            )));
        }
        Ok(Partition { top })
    }

    pub fn top(&self) -> usize {
        self.top
    }
}

/// Eigendecomposition with eigenvalues sorted in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored as columns, matching `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn largest(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0]
        }
    }

    /// Number of eigenvalues above `rank_tol * max(largest, 0)`.
    pub fn positive_count(&self, rank_tol: f64) -> usize {
        let thr = positive_threshold(self.largest(), rank_tol);
        self.values.iter().filter(|&&g| g > thr).count()
    }

    /// Rebuilds `V diag(f(gamma)) V^T`, skipping eigenvalues where `f`
    /// returns `None`.
    pub fn rebuild<F: Fn(f64) -> Option<f64>>(&self, f: F) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (j, &g) in self.values.iter().enumerate() {
            if let Some(v) = f(g) {
                let col = self.vectors.column(j);
                out.ger(v, &col, &col, 1.0);
            }
        }
        out
    }
}

fn positive_threshold(largest: f64, rank_tol: f64) -> f64 {
    (rank_tol * largest.max(0.0)).max(f64::MIN_POSITIVE)
}

pub fn sym_eig(m: &SymMatrix) -> Result<SymEigen> {
    if m.0.iter().any(|x| !x.is_finite()) {
        return Err(DesignError::InvalidMatrix("non-finite entry".into()));
    }
    let n = m.order();
    if n == 0 {
        return Ok(SymEigen {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::new(m.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen { values, vectors })
}

/// Moore-Penrose pseudoinverse of a symmetric matrix.
pub fn mp_pinv(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let eig = sym_eig(m)?;
    let scale = eig.values.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
    let thr = (rank_tol * scale).max(f64::MIN_POSITIVE);
    let inv = eig.rebuild(|g| (g.abs() > thr).then(|| 1.0 / g));
    Ok(SymMatrix::symmetrize(inv))
}

/// Result of a Schur complement; `top_pseudo_inverted` is set when the top
/// block was singular and its pseudoinverse had to be used.
#[derive(Debug, Clone)]
pub struct Schur {
    pub matrix: SymMatrix,
    pub top_pseudo_inverted: bool,
}

fn top_is_invertible(eig: &SymEigen, rank_tol: f64) -> bool {
    let n = eig.values.len();
    n > 0 && eig.values[n - 1] > positive_threshold(eig.largest(), rank_tol)
}

/// `B22 - B12^T B11^{-1} B12` for the given partition.
pub fn schur_complement(b: &SymMatrix, p: Partition, rank_tol: f64) -> Result<Schur> {
    let n = b.order();
    let t = p.top();
    let b11 = SymMatrix::symmetrize(b.block(0..t, 0..t));
    let b12 = b.block(0..t, t..n);
    let b22 = b.block(t..n, t..n);
    let eig = sym_eig(&b11)?;
    let invertible = top_is_invertible(&eig, rank_tol);
    let b11_inv = mp_pinv(&b11, rank_tol)?;
    if !invertible {
        let proj = b11.as_matrix() * b11_inv.as_matrix() * &b12;
        let scale = b12.amax().max(1.0);
        if (&proj - &b12).amax() > 1e-8 * scale {
            return Err(DesignError::IllDefinedSchur);
        }
    }
    let s = b22 - b12.transpose() * b11_inv.as_matrix() * &b12;
    Ok(Schur {
        matrix: SymMatrix::symmetrize(s),
        top_pseudo_inverted: !invertible,
    })
}

/// Block generalized inverse of a nonnegative definite partitioned matrix,
/// built from the inverse of the top block and the pseudoinverse of its
/// Schur complement.
pub fn block_ginverse(b: &SymMatrix, p: Partition, rank_tol: f64) -> Result<SymMatrix> {
    let n = b.order();
    let t = p.top();
    let b11 = SymMatrix::symmetrize(b.block(0..t, 0..t));
    let b12 = b.block(0..t, t..n);
    let eig = sym_eig(&b11)?;
    if !top_is_invertible(&eig, rank_tol) {
        return Err(DesignError::SingularTopBlock);
    }
    let b11_inv = eig.rebuild(|g| Some(1.0 / g));
    let schur = schur_complement(b, p, rank_tol)?;
    // the complement can be pure rounding noise, so threshold against B
    let s_eig = sym_eig(&schur.matrix)?;
    let scale = sym_eig(b)?.largest().max(s_eig.largest());
    let thr = positive_threshold(scale, rank_tol);
    let s_inv = s_eig.rebuild(|g| (g.abs() > thr).then(|| 1.0 / g));

    // F = B11^{-1} B12
    let f = &b11_inv * &b12;
    let top_left = &b11_inv + &f * &s_inv * f.transpose();
    let top_right = -(&f * &s_inv);

    let mut g = DMatrix::zeros(n, n);
    g.view_mut((0, 0), (t, t)).copy_from(&top_left);
    g.view_mut((0, t), (t, n - t)).copy_from(&top_right);
    g.view_mut((t, 0), (n - t, t)).copy_from(&top_right.transpose());
    g.view_mut((t, t), (n - t, n - t)).copy_from(&s_inv);
    Ok(SymMatrix::symmetrize(g))
}

/// Max-abs residual of `M M^+ A - A`, relative to `max(1, max|A|)`.
pub fn range_residual(a: &DMatrix<f64>, m: &SymMatrix, rank_tol: f64) -> Result<f64> {
    if a.nrows() != m.order() {
        return Err(DesignError::Dimension(format!(
            "A has {} rows but M has order {}",
            a.nrows(),
            m.order()
        )));
    }
    if a.ncols() == 0 {
        return Ok(0.0);
    }
    let pinv = mp_pinv(m, rank_tol)?;
    let proj = m.as_matrix() * pinv.as_matrix() * a;
    Ok((proj - a).amax() / a.amax().max(1.0))
}

/// Column-space inclusion `C(A) ⊆ C(M)`, checked as `M M^+ A = A`.
pub fn range_check(a: &DMatrix<f64>, m: &SymMatrix, tol: f64) -> Result<bool> {
    Ok(range_residual(a, m, RANK_TOL)? <= tol)
}

/// Numerical rank via singular values above `tol * largest`.
pub fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    if largest <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * largest).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn max_abs(m: &DMatrix<f64>) -> f64 {
        m.amax()
    }

    #[test]
    fn eig_of_identity_and_diagonal() {
        let e = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert!(e.values.iter().all(|&g| (g - 1.0).abs() < 1e-14));
        let e = sym_eig(&SymMatrix::from_diagonal(&[1.0, 4.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 1.0]);
    }

    #[test]
    fn eig_rejects_non_finite() {
        let m = SymMatrix(dmatrix![1.0, f64::NAN; f64::NAN, 1.0]);
        assert!(matches!(sym_eig(&m), Err(DesignError::InvalidMatrix(_))));
        assert!(SymMatrix::new(dmatrix![1.0, 2.0; 0.0, 1.0]).is_err());
    }

    #[test]
    fn pinv_examples() {
        let p = mp_pinv(&SymMatrix::from_diagonal(&[2.0, 0.0]), RANK_TOL).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && p[(1, 1)].abs() < 1e-15);
        let i = mp_pinv(&SymMatrix::identity(4), RANK_TOL).unwrap();
        assert!(max_abs(&(i.into_inner() - DMatrix::identity(4, 4))) < 1e-14);

        // centering matrix is a symmetric idempotent, its own pseudoinverse
        let c = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        let cs = SymMatrix::new(c.clone()).unwrap();
        let cp = mp_pinv(&cs, RANK_TOL).unwrap().into_inner();
        assert!(max_abs(&(&cp - &c)) < 1e-12);
        // Moore-Penrose conditions by multiplication
        assert!(max_abs(&(&c * &cp * &c - &c)) < 1e-12);
        assert!(max_abs(&(&cp * &c * &cp - &cp)) < 1e-12);
        assert!(max_abs(&((&c * &cp).transpose() - &c * &cp)) < 1e-12);
        assert!(max_abs(&((&cp * &c).transpose() - &cp * &c)) < 1e-12);
    }

    #[test]
    fn schur_examples() {
        let b = SymMatrix::identity(4);
        let s = schur_complement(&b, Partition::new(2, 4).unwrap(), RANK_TOL).unwrap();
        assert!(max_abs(&(s.matrix.into_inner() - DMatrix::identity(2, 2))) < 1e-15);
        assert!(!s.top_pseudo_inverted);

        let b = SymMatrix::new(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        let s = schur_complement(&b, Partition::new(1, 2).unwrap(), RANK_TOL).unwrap();
        assert!(s.matrix[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn schur_with_singular_top() {
        // top block zero, off-diagonal zero: fine, flagged
        let b = SymMatrix::from_diagonal(&[0.0, 2.0]);
        let s = schur_complement(&b, Partition::new(1, 2).unwrap(), RANK_TOL).unwrap();
        assert!(s.top_pseudo_inverted);
        assert!((s.matrix[(0, 0)] - 2.0).abs() < 1e-15);
        // top block zero but coupled: not defined
        let b = SymMatrix::new(dmatrix![0.0, 1.0; 1.0, 2.0]).unwrap();
        assert_eq!(
            schur_complement(&b, Partition::new(1, 2).unwrap(), RANK_TOL).unwrap_err(),
            DesignError::IllDefinedSchur
        );
    }

    #[test]
    fn block_ginverse_examples() {
        let g = block_ginverse(&SymMatrix::identity(4), Partition::new(2, 4).unwrap(), RANK_TOL)
            .unwrap();
        assert!(max_abs(&(g.into_inner() - DMatrix::identity(4, 4))) < 1e-14);

        let b = dmatrix![1.0, 1.0; 1.0, 1.0];
        let g = block_ginverse(
            &SymMatrix::new(b.clone()).unwrap(),
            Partition::new(1, 2).unwrap(),
            RANK_TOL,
        )
        .unwrap()
        .into_inner();
        // by hand: B11^{-1} = 1, Schur = 0 so S^- = 0, G = [[1,0],[0,0]]
        assert!(max_abs(&(&g - dmatrix![1.0, 0.0; 0.0, 0.0])) < 1e-15);
        assert!(max_abs(&(&b * &g * &b - &b)) < 1e-14);

        let b = SymMatrix::from_diagonal(&[0.0, 1.0]);
        assert_eq!(
            block_ginverse(&b, Partition::new(1, 2).unwrap(), RANK_TOL).unwrap_err(),
            DesignError::SingularTopBlock
        );
    }

    #[test]
    fn range_check_examples() {
        let e1 = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert!(range_check(&e1, &SymMatrix::identity(3), 1e-10).unwrap());
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(!range_check(&e2, &SymMatrix::from_diagonal(&[1.0, 0.0]), 1e-10).unwrap());
        assert!(matches!(
            range_check(&e1, &SymMatrix::identity(2), 1e-10),
            Err(DesignError::Dimension(_))
        ));
    }

    #[test]
    fn partition_bounds() {
        assert!(Partition::new(0, 3).is_err());
        assert!(Partition::new(3, 3).is_err());
        assert!(Partition::new(1, 3).is_ok());
    }

    #[test]
    fn rank_of_simple_matrices() {
        assert_eq!(matrix_rank(&DMatrix::identity(3, 3), 1e-9), 3);
        assert_eq!(matrix_rank(&dmatrix![1.0, 2.0; 2.0, 4.0], 1e-9), 1);
        assert_eq!(matrix_rank(&DMatrix::zeros(2, 0), 1e-9), 0);
    }
}
