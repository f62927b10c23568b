//! Information matrices and Kiefer's Phi_p criteria.
//!
//! Rank-deficient interest systems use the pseudoinverse information matrix
//! and evaluate criteria on its positive eigenvalues only. If fewer than
//! `s = rank(A)` eigenvalues are positive the design has lost information
//! and every criterion is 0.

use nalgebra::DMatrix;

use crate::error::{DesignError, Result};
use crate::linalg::{mp_pinv, range_residual, sym_eig, SymMatrix, RANK_TOL};
use crate::model::{ApproxDesign, CovariateWeights, ExactDesign, InterestSpec, ModelSpec, TreatmentWeights};

/// Column-space inclusion residual above which a design is infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A member of the Phi_p family, `p` in `[-inf, 0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Criterion {
    p: f64,
}

impl Criterion {
    pub const D: Criterion = Criterion { p: 0.0 };
    pub const A: Criterion = Criterion { p: -1.0 };
    pub const E: Criterion = Criterion {
        p: f64::NEG_INFINITY,
    };

    pub fn new(p: f64) -> Result<Self> {
        if p.is_nan() || p > 0.0 || p == f64::INFINITY {
            return Err(DesignError::InvalidCriterion(format!(
                "p must lie in [-inf, 0], got {p}"
            )));
        }
        Ok(Criterion { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn is_e(&self) -> bool {
        self.p == f64::NEG_INFINITY
    }

    pub fn name(&self) -> String {
        match self.p {
            0.0 => "D".into(),
            -1.0 => "A".into(),
            f64::NEG_INFINITY => "E".into(),
            p => format!("Phi_{p}"),
        }
    }

    /// Value on a list of positive eigenvalues, with effective dimension `s`.
    pub fn value(&self, positive: &[f64], s: usize) -> f64 {
        phi_p_eigenvalues(positive, self.p, s)
    }
}

/// Phi_p on positive eigenvalues. Returns 0 when fewer than `s` are given.
pub fn phi_p_eigenvalues(positive: &[f64], p: f64, s: usize) -> f64 {
    if s == 0 || positive.len() < s || positive.iter().any(|&g| !(g > 0.0)) {
        return 0.0;
    }
    let smallest = positive.iter().cloned().fold(f64::INFINITY, f64::min);
    if p == f64::NEG_INFINITY {
        return smallest;
    }
    let sf = s as f64;
    if p == 0.0 {
        return (positive.iter().map(|g| g.ln()).sum::<f64>() / sf).exp();
    }
    // scaled by the smallest eigenvalue so that no power overflows
    let mean = positive.iter().map(|g| (g / smallest).powf(p)).sum::<f64>() / sf;
    smallest * mean.powf(1.0 / p)
}

/// Information matrix together with its count of positive eigenvalues.
#[derive(Debug, Clone)]
pub struct InfoMatrix {
    matrix: SymMatrix,
    positive: Vec<f64>,
}

impl InfoMatrix {
    pub fn from_matrix(matrix: SymMatrix) -> Result<Self> {
        let positive = positive_eigenvalues(&matrix)?;
        Ok(InfoMatrix { matrix, positive })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    pub fn positive_rank(&self) -> usize {
        self.positive.len()
    }

    /// Positive eigenvalues, descending.
    pub fn positive_eigenvalues(&self) -> &[f64] {
        &self.positive
    }
}

fn positive_eigenvalues(m: &SymMatrix) -> Result<Vec<f64>> {
    let eig = sym_eig(m)?;
    let k = eig.positive_count(RANK_TOL);
    Ok(eig.values.iter().take(k).cloned().collect())
}

/// `(X)^+` of the "inverse information" `X = B^T G B`.
fn info_from_inverse(x: DMatrix<f64>) -> Result<InfoMatrix> {
    let x = SymMatrix::symmetrize(x);
    InfoMatrix::from_matrix(mp_pinv(&x, RANK_TOL)?)
}

/// `N_A(xi) = (A^T M^+(xi) A)^+`; errors if `A^T theta` is not estimable.
pub fn info_matrix_full(
    spec: &ModelSpec,
    xi: &ApproxDesign,
    interest: &InterestSpec,
) -> Result<InfoMatrix> {
    interest.check_model(spec)?;
    let m = spec.moment_matrix(xi)?;
    let a = interest.a();
    let residual = range_residual(a, &m, RANK_TOL)?;
    if residual > FEASIBILITY_TOL {
        return Err(DesignError::InfeasibleDesign(format!(
            "C(A) is not contained in C(M(xi)) (residual {residual:.3e})"
        )));
    }
    let mp = mp_pinv(&m, RANK_TOL)?;
    info_from_inverse(a.transpose() * mp.as_matrix() * a)
}

/// `N_Q1(w) = (Q1^T M1^{-1}(w) Q1)^+` in the treatment marginal model.
pub fn info_matrix_treatment(
    spec: &ModelSpec,
    w: &TreatmentWeights,
    q1: &DMatrix<f64>,
) -> Result<InfoMatrix> {
    if w.len() != spec.v1() || q1.nrows() != spec.v1() {
        return Err(DesignError::Dimension("treatment dimensions".into()));
    }
    if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
        return Err(DesignError::InfeasibleMarginal(format!(
            "treatment {} has zero weight",
            i + 1
        )));
    }
    let inv_diag: Vec<f64> = w
        .iter()
        .zip(spec.lambda())
        .map(|(w, l)| 1.0 / (w * l))
        .collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inv_diag));
    info_from_inverse(q1.transpose() * d * q1)
}

/// `N_K(alpha) = (K^T S^+(alpha) K)^+` in the covariate marginal model.
pub fn info_matrix_covariate(
    spec: &ModelSpec,
    alpha: &CovariateWeights,
    k: &DMatrix<f64>,
) -> Result<InfoMatrix> {
    if k.nrows() != spec.v2() {
        return Err(DesignError::Dimension("K must have v2 rows".into()));
    }
    if k.ncols() == 0 {
        return InfoMatrix::from_matrix(SymMatrix::zeros(0));
    }
    let (_, s) = spec.covariate_moment(alpha)?;
    let residual = range_residual(k, &s, RANK_TOL)?;
    if residual > FEASIBILITY_TOL {
        return Err(DesignError::InfeasibleMarginal(format!(
            "C(K) is not contained in C(S(alpha)) (residual {residual:.3e})"
        )));
    }
    let sp = mp_pinv(&s, RANK_TOL)?;
    info_from_inverse(k.transpose() * sp.as_matrix() * k)
}

/// Information matrix of a product design assembled from the two marginal
/// information matrices: `diag(N_Q1(w), (sum lambda_i w_i) N_K(alpha))`.
pub fn product_info(
    spec: &ModelSpec,
    w: &TreatmentWeights,
    alpha: &CovariateWeights,
    interest: &InterestSpec,
) -> Result<InfoMatrix> {
    interest.check_model(spec)?;
    let nt = info_matrix_treatment(spec, w, interest.q1())?;
    let nk = info_matrix_covariate(spec, alpha, interest.k())?;
    let total: f64 = w.iter().zip(spec.lambda()).map(|(w, l)| w * l).sum();
    let (s1, s2) = (interest.s1(), interest.s2());
    let mut n = DMatrix::zeros(s1 + s2, s1 + s2);
    n.view_mut((0, 0), (s1, s1)).copy_from(nt.matrix().as_matrix());
    n.view_mut((s1, s1), (s2, s2))
        .copy_from(&(nk.matrix().as_matrix() * total));
    InfoMatrix::from_matrix(SymMatrix::symmetrize(n))
}

/// Phi_p of an information matrix with effective dimension `s`.
pub fn phi_p(n: &InfoMatrix, crit: Criterion, s: usize) -> f64 {
    crit.value(n.positive_eigenvalues(), s)
}

/// Criterion value of a design, 0 when it is infeasible.
pub fn design_value(
    spec: &ModelSpec,
    xi: &ApproxDesign,
    interest: &InterestSpec,
    crit: Criterion,
) -> Result<f64> {
    match info_matrix_full(spec, xi, interest) {
        Ok(n) => Ok(phi_p(&n, crit, interest.rank())),
        Err(DesignError::InfeasibleDesign(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// `Phi(N_A(counts / n)) / Phi(N_A(reference))`; 0 for infeasible exact
/// designs.
pub fn efficiency(
    spec: &ModelSpec,
    exact: &ExactDesign,
    reference: &ApproxDesign,
    interest: &InterestSpec,
    crit: Criterion,
) -> Result<f64> {
    let s = interest.rank();
    let reference_value = phi_p(&info_matrix_full(spec, reference, interest)?, crit, s);
    if !(reference_value > 0.0) {
        return Err(DesignError::InfeasibleDesign(
            "reference design carries no information".into(),
        ));
    }
    if exact.n() == 0 {
        return Err(DesignError::InvalidDesign("exact design has no trials".into()));
    }
    let value = design_value(spec, &exact.to_approx()?, interest, crit)?;
    Ok(value / reference_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{factorial_covariates, presets};
    use nalgebra::dmatrix;

    #[test]
    fn phi_of_identity_is_one() {
        let n = InfoMatrix::from_matrix(SymMatrix::identity(3)).unwrap();
        for p in [0.0, -0.5, -1.0, -3.0, f64::NEG_INFINITY] {
            let c = Criterion::new(p).unwrap();
            assert!((phi_p(&n, c, 3) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn phi_arithmetic() {
        let n = InfoMatrix::from_matrix(SymMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
        assert!((phi_p(&n, Criterion::A, 2) - 1.6).abs() < 1e-14);
        assert!((phi_p(&n, Criterion::D, 2) - 2.0).abs() < 1e-14);
        assert!((phi_p(&n, Criterion::E, 2) - 1.0).abs() < 1e-15);
        // information lost
        assert_eq!(phi_p(&n, Criterion::A, 3), 0.0);
    }

    #[test]
    fn criterion_validation() {
        assert!(Criterion::new(0.5).is_err());
        assert!(Criterion::new(f64::NAN).is_err());
        assert!(Criterion::new(f64::NEG_INFINITY).unwrap().is_e());
        assert_eq!(Criterion::A.name(), "A");
    }

    #[test]
    fn treatment_info_two_arms() {
        let spec = ModelSpec::new(vec![1.0, 1.0], dmatrix![0.0]).unwrap();
        let w = TreatmentWeights::new(vec![0.5, 0.5]).unwrap();
        let n = info_matrix_treatment(&spec, &w, &dmatrix![-1.0; 1.0]).unwrap();
        assert!((n.matrix()[(0, 0)] - 0.25).abs() < 1e-15);

        let w = TreatmentWeights::new(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            info_matrix_treatment(&spec, &w, &dmatrix![-1.0; 1.0]),
            Err(DesignError::InfeasibleMarginal(_))
        ));
    }

    #[test]
    fn missing_treatment_is_infeasible() {
        let spec = ModelSpec::new(vec![1.0, 1.0], dmatrix![-1.0; 1.0]).unwrap();
        let interest = InterestSpec::new(dmatrix![-1.0; 1.0], presets::no_covariates(1)).unwrap();
        let xi = ApproxDesign::new(2, 2, vec![0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            info_matrix_full(&spec, &xi, &interest),
            Err(DesignError::InfeasibleDesign(_))
        ));
        assert_eq!(design_value(&spec, &xi, &interest, Criterion::A).unwrap(), 0.0);
    }

    #[test]
    fn single_point_covariates_are_infeasible() {
        let spec = ModelSpec::new(vec![1.0, 1.0], dmatrix![0.3]).unwrap();
        let alpha = CovariateWeights::uniform(1);
        assert!(matches!(
            info_matrix_covariate(&spec, &alpha, &dmatrix![1.0]),
            Err(DesignError::InfeasibleMarginal(_))
        ));
    }

    #[test]
    fn product_info_matches_full_path() {
        let g = factorial_covariates(&vec![vec![-1.0, 1.0]; 3]).unwrap();
        let spec = ModelSpec::new(vec![9.0, 1.0, 1.0], g).unwrap();
        let interest =
            InterestSpec::new(presets::control_contrasts(3), DMatrix::identity(3, 3)).unwrap();
        let w = TreatmentWeights::new(vec![0.236, 0.382, 0.382]).unwrap();
        let alpha = CovariateWeights::uniform(8);
        let prod = product_info(&spec, &w, &alpha, &interest).unwrap();
        let full =
            info_matrix_full(&spec, &ApproxDesign::product(&w, &alpha), &interest).unwrap();
        let diff = (prod.matrix().as_matrix() - full.matrix().as_matrix()).amax();
        assert!(diff < 1e-8, "{diff}");
        // covariate block is (sum lambda w) I
        let total = 9.0 * 0.236 + 0.382 + 0.382;
        for j in 2..5 {
            assert!((prod.matrix()[(j, j)] - total).abs() < 1e-12);
        }
        assert!((total - 2.888).abs() < 1e-12);
    }

    #[test]
    fn efficiency_of_proportional_design_is_one() {
        let g = factorial_covariates(&vec![vec![-1.0, 1.0]; 2]).unwrap();
        let spec = ModelSpec::new(vec![1.0, 1.0], g).unwrap();
        let interest =
            InterestSpec::new(presets::control_contrasts(2), DMatrix::identity(2, 2)).unwrap();
        let xi = ApproxDesign::uniform(2, 4);
        let exact = ExactDesign::new(2, 4, vec![3; 8]).unwrap();
        let e = efficiency(&spec, &exact, &xi, &interest, Criterion::A).unwrap();
        assert!((e - 1.0).abs() < 1e-12);
    }
}
