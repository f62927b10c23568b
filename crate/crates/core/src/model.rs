//! The experiment: treatments with per-treatment efficiencies, a finite set
//! of covariate points, designs on the `v1 x d` grid and their moment
//! matrices.
//!
//! Grid cells are indexed `(i, k) -> i * d + k` (0-based, covariate index
//! varying fastest). Files use the same order with 1-based labels.

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};
use crate::linalg::{matrix_rank, SymMatrix, RANK_TOL};

/// Weights at or below this are not part of a design's support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// Probability vectors must sum to one within this.
pub const SUM_TOL: f64 = 1e-10;

/// Treatments, efficiency function and covariate regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    lambda: Vec<f64>,
    /// `d x v2`, row `k` is `g(k)`.
    g: DMatrix<f64>,
    treatment_labels: Option<Vec<String>>,
    covariate_labels: Option<Vec<String>>,
}

impl ModelSpec {
    pub fn new(lambda: Vec<f64>, g: DMatrix<f64>) -> Result<Self> {
        if lambda.len() < 2 {
            return Err(DesignError::Dimension(format!(
                "need at least two treatments, got {}",
                lambda.len()
            )));
        }
        if let Some((i, l)) = lambda
            .iter()
            .enumerate()
            .find(|(_, &l)| !(l.is_finite() && l > 0.0))
        {
            return Err(DesignError::InvalidDesign(format!(
                "efficiency of treatment {} must be positive and finite, got {l}",
                i + 1
            )));
        }
        if g.nrows() == 0 {
            return Err(DesignError::Dimension(
                "need at least one covariate point".into(),
            ));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(DesignError::InvalidDesign(
                "covariate regressors must be finite".into(),
            ));
        }
        Ok(ModelSpec {
            lambda,
            g,
            treatment_labels: None,
            covariate_labels: None,
        })
    }

    pub fn with_labels(
        mut self,
        treatments: Option<Vec<String>>,
        covariates: Option<Vec<String>>,
    ) -> Result<Self> {
        if let Some(t) = &treatments {
            if t.len() != self.v1() {
                return Err(DesignError::Dimension("treatment label count".into()));
            }
        }
        if let Some(c) = &covariates {
            if c.len() != self.d() {
                return Err(DesignError::Dimension("covariate label count".into()));
            }
        }
        self.treatment_labels = treatments;
        self.covariate_labels = covariates;
        Ok(self)
    }

    pub fn v1(&self) -> usize {
        self.lambda.len()
    }

    pub fn d(&self) -> usize {
        self.g.nrows()
    }

    pub fn v2(&self) -> usize {
        self.g.ncols()
    }

    /// Length of `theta = (tau, mu, beta)`.
    pub fn param_dim(&self) -> usize {
        self.v1() + 1 + self.v2()
    }

    pub fn cells(&self) -> usize {
        self.v1() * self.d()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn g_row(&self, k: usize) -> DVector<f64> {
        self.g.row(k).transpose()
    }

    pub fn treatment_labels(&self) -> Option<&[String]> {
        self.treatment_labels.as_deref()
    }

    pub fn covariate_labels(&self) -> Option<&[String]> {
        self.covariate_labels.as_deref()
    }

    pub fn cell(&self, i: usize, k: usize) -> usize {
        i * self.d() + k
    }

    pub fn cell_coords(&self, j: usize) -> (usize, usize) {
        (j / self.d(), j % self.d())
    }

    /// `h(k) = (1, g(k))`.
    pub fn covariate_regressor(&self, k: usize) -> DVector<f64> {
        let mut h = DVector::zeros(self.v2() + 1);
        h[0] = 1.0;
        h.rows_mut(1, self.v2()).copy_from(&self.g.row(k).transpose());
        h
    }

    /// `f(i, k) = (e_i, 1, g(k))` for 0-based `i`, `k`.
    pub fn regressor(&self, i: usize, k: usize) -> Result<DVector<f64>> {
        if i >= self.v1() || k >= self.d() {
            return Err(DesignError::Index(format!(
                "cell ({i}, {k}) outside {}x{}",
                self.v1(),
                self.d()
            )));
        }
        let mut f = DVector::zeros(self.param_dim());
        f[i] = 1.0;
        f.rows_mut(self.v1(), self.v2() + 1)
            .copy_from(&self.covariate_regressor(k));
        Ok(f)
    }

    fn check_design(&self, xi: &ApproxDesign) -> Result<()> {
        if xi.v1() != self.v1() || xi.d() != self.d() {
            return Err(DesignError::Dimension(format!(
                "design is {}x{} but the model is {}x{}",
                xi.v1(),
                xi.d(),
                self.v1(),
                self.d()
            )));
        }
        Ok(())
    }

    /// `M(xi) = sum xi(i,k) lambda_i f(i,k) f(i,k)^T`.
    pub fn moment_matrix(&self, xi: &ApproxDesign) -> Result<SymMatrix> {
        self.check_design(xi)?;
        let n = self.param_dim();
        let mut m = DMatrix::zeros(n, n);
        for (j, &x) in xi.weights().iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let (i, k) = self.cell_coords(j);
            let f = self.regressor(i, k)?;
            m.ger(x * self.lambda[i], &f, &f, 1.0);
        }
        Ok(SymMatrix::symmetrize(m))
    }

    /// `M1(w) = diag(lambda_i w_i)`.
    pub fn treatment_moment(&self, w: &TreatmentWeights) -> Result<SymMatrix> {
        if w.len() != self.v1() {
            return Err(DesignError::Dimension("treatment weight count".into()));
        }
        let diag: Vec<f64> = w.iter().zip(&self.lambda).map(|(w, l)| w * l).collect();
        Ok(SymMatrix::from_diagonal(&diag))
    }

    /// `sum_k alpha_k g(k)`.
    pub fn covariate_mean(&self, alpha: &CovariateWeights) -> DVector<f64> {
        let a = DVector::from_column_slice(alpha.as_slice());
        self.g.transpose() * a
    }

    /// Returns `(M2(alpha), S(alpha))`: the covariate moment matrix with
    /// the constant term and its Schur complement after eliminating it.
    pub fn covariate_moment(&self, alpha: &CovariateWeights) -> Result<(SymMatrix, SymMatrix)> {
        if alpha.len() != self.d() {
            return Err(DesignError::Dimension("covariate weight count".into()));
        }
        let v2 = self.v2();
        let mut m2 = DMatrix::zeros(v2 + 1, v2 + 1);
        for (k, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let h = self.covariate_regressor(k);
                m2.ger(a, &h, &h, 1.0);
            }
        }
        let mean = self.covariate_mean(alpha);
        let second = m2.view((1, 1), (v2, v2)).into_owned();
        let s = second - &mean * mean.transpose();
        Ok((SymMatrix::symmetrize(m2), SymMatrix::symmetrize(s)))
    }

    /// Covariate marginal of `xi` weighted by the efficiency function,
    /// `beta_k` proportional to `sum_i lambda_i xi(i, k)`. This is the
    /// covariate design whose product with the treatment marginal dominates
    /// `xi`; it equals the plain marginal when `lambda` is constant or `xi`
    /// is a product.
    pub fn weighted_covariate_marginal(&self, xi: &ApproxDesign) -> Result<CovariateWeights> {
        if xi.v1() != self.v1() || xi.d() != self.d() {
            return Err(DesignError::Dimension("design grid".into()));
        }
        let mut beta = vec![0.0; self.d()];
        for (i, l) in self.lambda.iter().enumerate() {
            for (k, b) in beta.iter_mut().enumerate() {
                *b += l * xi.weight(i, k);
            }
        }
        let total: f64 = beta.iter().sum();
        CovariateWeights::new(beta.into_iter().map(|b| b / total).collect())
    }
}

macro_rules! probability_vector {
    ($(#[$meta:meta])* $name:ident, $what:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(weights: Vec<f64>) -> Result<Self> {
                check_probability(&weights, $what)?;
                Ok($name(weights))
            }

            pub fn uniform(n: usize) -> Self {
                $name(vec![1.0 / n as f64; n])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn iter(&self) -> std::slice::Iter<'_, f64> {
                self.0.iter()
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

fn check_probability(weights: &[f64], what: &str) -> Result<()> {
    if weights.is_empty() {
        return Err(DesignError::InvalidDesign(format!("{what} is empty")));
    }
    if let Some(x) = weights.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(DesignError::InvalidDesign(format!(
            "{what} has a negative or non-finite weight {x}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(DesignError::InvalidDesign(format!(
            "{what} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

probability_vector!(
    /// Marginal treatment design `w`.
    TreatmentWeights,
    "treatment design"
);
probability_vector!(
    /// Marginal covariate design `alpha`.
    CovariateWeights,
    "covariate design"
);

/// Approximate design on the `v1 x d` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxDesign {
    v1: usize,
    d: usize,
    weights: Vec<f64>,
}

impl ApproxDesign {
    pub fn new(v1: usize, d: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != v1 * d {
            return Err(DesignError::Dimension(format!(
                "expected {} weights, got {}",
                v1 * d,
                weights.len()
            )));
        }
        check_probability(&weights, "design")?;
        Ok(ApproxDesign { v1, d, weights })
    }

    /// Rescales nonnegative weights to sum to one.
    pub fn from_unnormalized(v1: usize, d: usize, mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(DesignError::InvalidDesign(format!(
                "weights sum to {sum}"
            )));
        }
        weights.iter_mut().for_each(|x| *x /= sum);
        Self::new(v1, d, weights)
    }

    pub fn uniform(v1: usize, d: usize) -> Self {
        let n = v1 * d;
        ApproxDesign {
            v1,
            d,
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// `xi(i,k) = w_i alpha_k`.
    pub fn product(w: &TreatmentWeights, alpha: &CovariateWeights) -> Self {
        let weights = w
            .iter()
            .flat_map(|&wi| alpha.iter().map(move |&a| wi * a))
            .collect();
        ApproxDesign {
            v1: w.len(),
            d: alpha.len(),
            weights,
        }
    }

    pub fn v1(&self) -> usize {
        self.v1
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, k: usize) -> f64 {
        self.weights[i * self.d + k]
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len())
            .filter(|&j| self.weights[j] > SUPPORT_TOL)
            .collect()
    }

    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|&&x| x > SUPPORT_TOL).count()
    }

    pub fn marginals(&self) -> (TreatmentWeights, CovariateWeights) {
        let mut w = vec![0.0; self.v1];
        let mut a = vec![0.0; self.d];
        for (i, wi) in w.iter_mut().enumerate() {
            for (k, ak) in a.iter_mut().enumerate() {
                let x = self.weight(i, k);
                *wi += x;
                *ak += x;
            }
        }
        (TreatmentWeights(w), CovariateWeights(a))
    }
}

/// Trial counts on the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactDesign {
    v1: usize,
    d: usize,
    counts: Vec<u64>,
}

impl ExactDesign {
    pub fn new(v1: usize, d: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != v1 * d {
            return Err(DesignError::Dimension(format!(
                "expected {} counts, got {}",
                v1 * d,
                counts.len()
            )));
        }
        Ok(ExactDesign { v1, d, counts })
    }

    pub fn v1(&self) -> usize {
        self.v1
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, i: usize, k: usize) -> u64 {
        self.counts[i * self.d + k]
    }

    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support_size(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// `counts / n` as an approximate design.
    pub fn to_approx(&self) -> Result<ApproxDesign> {
        let n = self.n();
        if n == 0 {
            return Err(DesignError::InvalidDesign("exact design has no trials".into()));
        }
        let w = self.counts.iter().map(|&c| c as f64 / n as f64).collect();
        ApproxDesign::new(self.v1, self.d, w)
    }
}

/// Interest system `A^T theta` with `A = diag(Q1, Q2)`, `Q2^T = (0, K^T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterestSpec {
    q1: DMatrix<f64>,
    k: DMatrix<f64>,
    a: DMatrix<f64>,
    rank: usize,
    rank_deficient: bool,
}

impl InterestSpec {
    /// Assembles `A` from treatment contrasts `q1` (`v1 x s1`) and covariate
    /// functions `k` (`v2 x s2`, possibly with no columns).
    pub fn new(q1: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self> {
        let v1 = q1.nrows();
        let s1 = q1.ncols();
        let v2 = k.nrows();
        let s2 = k.ncols();
        if q1.iter().chain(k.iter()).any(|x| !x.is_finite()) {
            return Err(DesignError::InvalidMatrix("non-finite interest entry".into()));
        }
        let scale = q1.amax().max(f64::MIN_POSITIVE);
        for i in 0..v1 {
            if q1.row(i).amax() <= 1e-12 * scale {
                return Err(DesignError::ZeroRowQ1(i + 1));
            }
        }
        let col_sums = q1.row_sum();
        let dev = col_sums.amax();
        if dev > 1e-10 * scale.max(1.0) {
            return Err(DesignError::NotContrasts(dev));
        }
        let mut a = DMatrix::zeros(v1 + 1 + v2, s1 + s2);
        a.view_mut((0, 0), (v1, s1)).copy_from(&q1);
        a.view_mut((v1 + 1, s1), (v2, s2)).copy_from(&k);
        let rank = matrix_rank(&a, RANK_TOL);
        Ok(InterestSpec {
            rank_deficient: rank < s1 + s2,
            q1,
            k,
            a,
            rank,
        })
    }

    pub fn q1(&self) -> &DMatrix<f64> {
        &self.q1
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `Q2 = (0; K)`, of size `(v2 + 1) x s2`.
    pub fn q2(&self) -> DMatrix<f64> {
        let mut q2 = DMatrix::zeros(self.k.nrows() + 1, self.k.ncols());
        q2.view_mut((1, 0), (self.k.nrows(), self.k.ncols()))
            .copy_from(&self.k);
        q2
    }

    pub fn s1(&self) -> usize {
        self.q1.ncols()
    }

    pub fn s2(&self) -> usize {
        self.k.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Rank of the covariate part alone, `rank(K)`.
    pub fn covariate_rank(&self) -> usize {
        matrix_rank(&self.k, RANK_TOL)
    }

    pub fn treatment_rank(&self) -> usize {
        matrix_rank(&self.q1, RANK_TOL)
    }

    pub fn check_model(&self, spec: &ModelSpec) -> Result<()> {
        if self.q1.nrows() != spec.v1() || self.k.nrows() != spec.v2() {
            return Err(DesignError::Dimension(format!(
                "interest is for v1={}, v2={} but the model has v1={}, v2={}",
                self.q1.nrows(),
                self.k.nrows(),
                spec.v1(),
                spec.v2()
            )));
        }
        Ok(())
    }
}

/// Ready-made contrast and covariate-function matrices.
pub mod presets {
    use nalgebra::DMatrix;

    /// Comparisons with the control (treatment 1): columns `e_i - e_1`.
    pub fn control_contrasts(v1: usize) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(v1, v1 - 1);
        for c in 0..v1 - 1 {
            q[(0, c)] = -1.0;
            q[(c + 1, c)] = 1.0;
        }
        q
    }

    /// `I - 11^T / v`.
    pub fn centering(v: usize) -> DMatrix<f64> {
        DMatrix::identity(v, v) - DMatrix::from_element(v, v, 1.0 / v as f64)
    }

    /// Block-diagonal centering, one block per one-hot group.
    pub fn centered_groups(sizes: &[usize]) -> DMatrix<f64> {
        let total: usize = sizes.iter().sum();
        let mut k = DMatrix::zeros(total, total);
        let mut at = 0;
        for &s in sizes {
            k.view_mut((at, at), (s, s)).copy_from(&centering(s));
            at += s;
        }
        k
    }

    /// No interest in covariates: `v2 x 0`.
    pub fn no_covariates(v2: usize) -> DMatrix<f64> {
        DMatrix::zeros(v2, 0)
    }
}

/// Full factorial of the given levels, in lexicographic order (last
/// dimension varying fastest). Returns the `d x v2` regressor table.
pub fn factorial_covariates(levels: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if let Some(dim) = levels.iter().position(|l| l.is_empty()) {
        return Err(DesignError::EmptyLevels(dim + 1));
    }
    let v2 = levels.len();
    let d: usize = levels.iter().map(Vec::len).product();
    let mut g = DMatrix::zeros(d, v2);
    for row in 0..d {
        let mut rest = row;
        for dim in (0..v2).rev() {
            let n = levels[dim].len();
            g[(row, dim)] = levels[dim][rest % n];
            rest /= n;
        }
    }
    Ok(g)
}

/// Concatenated one-hot encodings of qualitative covariates, all level
/// combinations in lexicographic order.
pub fn onehot_covariates(group_sizes: &[usize]) -> Result<DMatrix<f64>> {
    if group_sizes.is_empty() {
        return Err(DesignError::Dimension("no covariate groups".into()));
    }
    if let Some(pos) = group_sizes.iter().position(|&s| s < 2) {
        return Err(DesignError::Dimension(format!(
            "group {} needs at least two levels",
            pos + 1
        )));
    }
    let d: usize = group_sizes.iter().product();
    let v2: usize = group_sizes.iter().sum();
    let mut g = DMatrix::zeros(d, v2);
    for row in 0..d {
        let mut rest = row;
        let mut offsets = Vec::with_capacity(group_sizes.len());
        let mut at = v2;
        for &s in group_sizes.iter().rev() {
            at -= s;
            offsets.push(at + rest % s);
            rest /= s;
        }
        for col in offsets {
            g[(row, col)] = 1.0;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{schur_complement, Partition};
    use nalgebra::dmatrix;

    fn example1() -> ModelSpec {
        let g = factorial_covariates(&vec![vec![-1.0, 1.0]; 3]).unwrap();
        ModelSpec::new(vec![9.0, 1.0, 1.0], g).unwrap()
    }

    #[test]
    fn regressor_layout() {
        let spec = ModelSpec::new(vec![1.0, 1.0], dmatrix![0.5]).unwrap();
        assert_eq!(spec.regressor(0, 0).unwrap().as_slice(), &[1.0, 0.0, 1.0, 0.5]);
        let spec = example1();
        assert_eq!(
            spec.regressor(0, 0).unwrap().as_slice(),
            &[1.0, 0.0, 0.0, 1.0, -1.0, -1.0, -1.0]
        );
        assert!(matches!(spec.regressor(3, 0), Err(DesignError::Index(_))));
        assert!(matches!(spec.regressor(0, 8), Err(DesignError::Index(_))));
    }

    #[test]
    fn onehot_regressor() {
        let g = onehot_covariates(&[3, 5]).unwrap();
        let spec = ModelSpec::new(vec![4.0, 1.0, 1.0], g).unwrap();
        // treatment 2, row level 1, column level 3
        let k = 2;
        let f = spec.regressor(1, k).unwrap();
        assert_eq!(
            f.as_slice(),
            &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn model_validation() {
        assert!(ModelSpec::new(vec![1.0], dmatrix![0.0]).is_err());
        assert!(ModelSpec::new(vec![1.0, 0.0], dmatrix![0.0]).is_err());
        assert!(ModelSpec::new(vec![1.0, 1.0], DMatrix::zeros(0, 1)).is_err());
        assert!(ModelSpec::new(vec![1.0, 1.0], dmatrix![f64::INFINITY]).is_err());
    }

    #[test]
    fn single_atom_moment() {
        let spec = example1();
        let mut w = vec![0.0; 24];
        w[0] = 1.0;
        let xi = ApproxDesign::new(3, 8, w).unwrap();
        let m = spec.moment_matrix(&xi).unwrap();
        let f = spec.regressor(0, 0).unwrap();
        let expected = &f * f.transpose() * 9.0;
        assert!((m.as_matrix() - expected).amax() < 1e-15);
    }

    #[test]
    fn moment_blocks_for_product_design() {
        let spec = example1();
        let w = TreatmentWeights::new(vec![0.236, 0.382, 0.382]).unwrap();
        let xi = ApproxDesign::product(&w, &CovariateWeights::uniform(8));
        let m = spec.moment_matrix(&xi).unwrap();
        let m1 = spec.treatment_moment(&w).unwrap();
        let top = m.as_matrix().view((0, 0), (3, 3)).into_owned();
        assert!((top - m1.as_matrix()).amax() < 1e-15);
        assert!((m1[(0, 0)] - 9.0 * 0.236).abs() < 1e-15);
        assert!((m1[(1, 1)] - 0.382).abs() < 1e-15);
    }

    #[test]
    fn treatment_moment_examples() {
        let spec = ModelSpec::new(vec![1.0, 1.0], dmatrix![0.0]).unwrap();
        let m = spec
            .treatment_moment(&TreatmentWeights::new(vec![0.5, 0.5]).unwrap())
            .unwrap();
        assert_eq!(m, SymMatrix::from_diagonal(&[0.5, 0.5]));

        let spec = ModelSpec::new(vec![1.0, 1.0, 2.0, 3.0], dmatrix![0.0]).unwrap();
        let w = TreatmentWeights::new(vec![0.431, 0.249, 0.176, 0.144]).unwrap();
        let m = spec.treatment_moment(&w).unwrap();
        let expect = [0.431, 0.249, 0.352, 0.432];
        for (i, e) in expect.iter().enumerate() {
            assert!((m[(i, i)] - e).abs() < 1e-3);
        }
    }

    #[test]
    fn covariate_moment_examples() {
        let spec = ModelSpec::new(vec![1.0, 1.0], dmatrix![3.0, -1.0]).unwrap();
        let (_, s) = spec
            .covariate_moment(&CovariateWeights::new(vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(s, SymMatrix::zeros(2));

        let spec = example1();
        let (m2, s) = spec.covariate_moment(&CovariateWeights::uniform(8)).unwrap();
        assert!((m2.into_inner() - DMatrix::identity(4, 4)).amax() < 1e-15);
        assert!((s.into_inner() - DMatrix::identity(3, 3)).amax() < 1e-15);
    }

    #[test]
    fn covariate_schur_matches_linalg() {
        let g = dmatrix![0.3, -1.0; 1.2, 0.4; -0.7, 0.9; 0.1, 0.1];
        let spec = ModelSpec::new(vec![1.0, 2.0], g).unwrap();
        let alpha = CovariateWeights::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (m2, s) = spec.covariate_moment(&alpha).unwrap();
        let sc = schur_complement(&m2, Partition::new(1, 3).unwrap(), RANK_TOL).unwrap();
        assert!((sc.matrix.into_inner() - s.into_inner()).amax() < 1e-12);
    }

    #[test]
    fn marginals_and_products() {
        let xi = ApproxDesign::uniform(3, 4);
        let (w, a) = xi.marginals();
        assert!(w.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert!(a.iter().all(|&x| (x - 0.25).abs() < 1e-15));

        let w = TreatmentWeights::new(vec![1.0, 0.0]).unwrap();
        let a = CovariateWeights::new(vec![1.0, 0.0, 0.0]).unwrap();
        let xi = ApproxDesign::product(&w, &a);
        assert_eq!(xi.support(), vec![0]);

        let w = TreatmentWeights::new(vec![0.236, 0.382, 0.382]).unwrap();
        let xi = ApproxDesign::product(&w, &CovariateWeights::uniform(8));
        assert!((xi.weight(0, 0) - 0.236 / 8.0).abs() < 1e-15);
        assert!((xi.weight(1, 7) - 0.382 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn interest_assembly() {
        let q1 = dmatrix![-1.0; 1.0];
        let spec = InterestSpec::new(q1, presets::no_covariates(2)).unwrap();
        assert_eq!(spec.a().shape(), (5, 1));
        assert_eq!(spec.a().column(0).as_slice(), &[-1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(!spec.rank_deficient());

        let spec = InterestSpec::new(
            presets::control_contrasts(3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        assert_eq!(spec.a().shape(), (7, 5));
        assert_eq!(spec.rank(), 5);
        assert!(!spec.rank_deficient());
        assert!(spec.q2().row(0).iter().all(|&x| x == 0.0));

        let spec =
            InterestSpec::new(presets::centering(3), presets::centered_groups(&[3, 5])).unwrap();
        assert!(spec.rank_deficient());
        assert_eq!(spec.rank(), 2 + 6);
    }

    #[test]
    fn interest_validation() {
        let q1 = dmatrix![1.0; 1.0];
        assert!(matches!(
            InterestSpec::new(q1, presets::no_covariates(1)),
            Err(DesignError::NotContrasts(_))
        ));
        let q1 = dmatrix![-1.0; 1.0; 0.0];
        assert_eq!(
            InterestSpec::new(q1, presets::no_covariates(1)).unwrap_err(),
            DesignError::ZeroRowQ1(3)
        );
    }

    #[test]
    fn factorial_order() {
        let g = factorial_covariates(&vec![vec![-1.0, 1.0]; 3]).unwrap();
        assert_eq!(g.nrows(), 8);
        assert_eq!(g.row(0).iter().cloned().collect::<Vec<_>>(), vec![-1.0, -1.0, -1.0]);
        assert_eq!(g.row(1).iter().cloned().collect::<Vec<_>>(), vec![-1.0, -1.0, 1.0]);
        assert_eq!(g.row(7).iter().cloned().collect::<Vec<_>>(), vec![1.0, 1.0, 1.0]);

        assert_eq!(factorial_covariates(&[vec![0.0]]).unwrap().shape(), (1, 1));

        let fine: Vec<f64> = (-10..=10).map(|j| j as f64 / 10.0).collect();
        let g = factorial_covariates(&vec![fine; 3]).unwrap();
        assert_eq!(g.nrows(), 21 * 21 * 21);

        assert_eq!(
            factorial_covariates(&[vec![1.0], vec![]]).unwrap_err(),
            DesignError::EmptyLevels(2)
        );
    }

    #[test]
    fn onehot_shapes() {
        let g = onehot_covariates(&[3, 5]).unwrap();
        assert_eq!(g.shape(), (15, 8));
        let mean = g.row_mean();
        for c in 0..3 {
            assert!((mean[c] - 1.0 / 3.0).abs() < 1e-15);
        }
        for c in 3..8 {
            assert!((mean[c] - 0.2).abs() < 1e-15);
        }
        let g = onehot_covariates(&[2]).unwrap();
        assert_eq!(g, dmatrix![1.0, 0.0; 0.0, 1.0]);
        assert!(onehot_covariates(&[1]).is_err());
    }

    #[test]
    fn design_validation() {
        assert!(ApproxDesign::new(2, 2, vec![0.5, 0.5, 0.1, -0.1]).is_err());
        assert!(ApproxDesign::new(2, 2, vec![0.5, 0.5, 0.1]).is_err());
        assert!(ApproxDesign::new(2, 2, vec![0.5, 0.5, 0.1, 0.1]).is_err());
        let xi = ApproxDesign::from_unnormalized(1, 2, vec![1.0, 3.0]).unwrap();
        assert_eq!(xi.weights(), &[0.25, 0.75]);
        let e = ExactDesign::new(1, 3, vec![2, 0, 2]).unwrap();
        assert_eq!(e.n(), 4);
        assert_eq!(e.to_approx().unwrap().weights(), &[0.5, 0.0, 0.5]);
    }
}
