//! Sparsely supported optimal designs from an optimal product design.
//!
//! Every design satisfying `M(xi) G A = A`, with
//! `G = diag(M1^{-1}(w*), L*^{-1} M2^-(alpha*))`, is as good as the product
//! design `xi* = w* (x) alpha*`. That condition is linear in `xi`, so a basic
//! feasible solution of the system has at most `rank(C)` nonzero entries.
//! The system is split into the rows below, in this order:
//!
//! * marginal fix: `sum_k xi(i,k) = w*_i`
//! * covariate resistance: `sum_{i,k} xi(i,k) g_r(k) Q1[i,c] / w*_i = 0`
//! * treatment residual: `sum_k xi(i,k) (g(k)^T S^+ K)_c = w*_i (gbar^T S^+ K)_c`
//! * covariate optimality:
//!   `sum_{i,k} lambda_i xi(i,k) g_r(k) ((g(k) - gbar)^T S^+ K)_c = L* K[r,c]`
//! * normalization, then user rows.
//!
//! `S = S(alpha*)`, `gbar` is the covariate mean under `alpha*` and
//! `L* = sum_i lambda_i w*_i`. The last two groups vanish when `K` has no
//! columns.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::criteria::{info_matrix_full, phi_p, Criterion};
use crate::error::{DesignError, Result};
use crate::linalg::{block_ginverse, matrix_rank, mp_pinv, Partition, RANK_TOL};
use crate::lp::{self, LpOptions};
use crate::model::{
    ApproxDesign, CovariateWeights, InterestSpec, ModelSpec, TreatmentWeights, SUPPORT_TOL,
};
use crate::par::{self, Execution};

/// Tolerance of the transfer condition and of the equality checks.
pub const VERIFY_TOL: f64 = 1e-8;
/// Absolute feasibility tolerance on `C x - b` after clamping.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Relative singular value cutoff when reporting `rank(C)`.
pub const SYSTEM_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    MarginalFix { treatment: usize },
    CovariateResistance { covariate: usize, contrast: usize },
    TreatmentResidual { treatment: usize, column: usize },
    CovariateOptimality { row: usize, column: usize },
    MomentMatch { row: usize, column: usize },
    Normalization,
    User(usize),
}

impl RowTag {
    pub fn label(&self) -> &'static str {
        match self {
            RowTag::MarginalFix { .. } => "marginal-fix",
            RowTag::CovariateResistance { .. } => "covariate-resistance",
            RowTag::TreatmentResidual { .. } => "treat-res",
            RowTag::CovariateOptimality { .. } => "cov-opt",
            RowTag::MomentMatch { .. } => "moment-match",
            RowTag::Normalization => "normalization",
            RowTag::User(_) => "user",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// A linear constraint `coeffs . xi (sense) rhs` on the flattened design.
#[derive(Debug, Clone, PartialEq)]
pub struct UserConstraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl UserConstraint {
    pub fn new(coeffs: Vec<f64>, sense: Sense, rhs: f64) -> Self {
        UserConstraint { coeffs, sense, rhs }
    }

    /// `sum_i xi(i,k) = value`.
    pub fn covariate_marginal(v1: usize, d: usize, k: usize, value: f64) -> Self {
        let mut coeffs = vec![0.0; v1 * d];
        for i in 0..v1 {
            coeffs[i * d + k] = 1.0;
        }
        UserConstraint::new(coeffs, Sense::Eq, value)
    }

    /// `sum_k xi(i,k) = value`.
    pub fn treatment_marginal(v1: usize, d: usize, i: usize, value: f64) -> Self {
        let mut coeffs = vec![0.0; v1 * d];
        coeffs[i * d..(i + 1) * d].iter_mut().for_each(|c| *c = 1.0);
        UserConstraint::new(coeffs, Sense::Eq, value)
    }
}

#[derive(Debug, Clone)]
pub struct ConstraintSet {
    matrix: DMatrix<f64>,
    rhs: Vec<f64>,
    tags: Vec<RowTag>,
    senses: Vec<Sense>,
}

impl ConstraintSet {
    fn empty(cols: usize) -> Self {
        ConstraintSet {
            matrix: DMatrix::zeros(0, cols),
            rhs: Vec::new(),
            tags: Vec::new(),
            senses: Vec::new(),
        }
    }

    fn from_rows(cols: usize, rows: Vec<(Vec<f64>, f64, RowTag, Sense)>) -> Self {
        let mut cs = ConstraintSet::empty(cols);
        cs.matrix = DMatrix::from_fn(rows.len(), cols, |r, c| rows[r].0[c]);
        for (_, b, tag, sense) in rows {
            cs.rhs.push(b);
            cs.tags.push(tag);
            cs.senses.push(sense);
        }
        cs
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn tags(&self) -> &[RowTag] {
        &self.tags
    }

    pub fn senses(&self) -> &[Sense] {
        &self.senses
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn count(&self, label: &str) -> usize {
        self.tags.iter().filter(|t| t.label() == label).count()
    }

    /// Appends user rows; errors on a length mismatch or non-finite data.
    pub fn with_user(mut self, user: &[UserConstraint]) -> Result<Self> {
        let cols = self.cols();
        for (u, con) in user.iter().enumerate() {
            if con.coeffs.len() != cols {
                return Err(DesignError::Dimension(format!(
                    "user constraint {} has {} coefficients, expected {cols}",
                    u + 1,
                    con.coeffs.len()
                )));
            }
            if con.coeffs.iter().any(|v| !v.is_finite()) || !con.rhs.is_finite() {
                return Err(DesignError::InvalidMatrix(format!(
                    "user constraint {} is not finite",
                    u + 1
                )));
            }
        }
        let old = self.rows();
        let mut m = self.matrix.clone().resize_vertically(old + user.len(), 0.0);
        for (u, con) in user.iter().enumerate() {
            for (j, &c) in con.coeffs.iter().enumerate() {
                m[(old + u, j)] = c;
            }
            self.rhs.push(con.rhs);
            self.tags.push(RowTag::User(u));
            self.senses.push(con.sense);
        }
        self.matrix = m;
        Ok(self)
    }

    /// Rank of the equality part.
    pub fn rank(&self) -> usize {
        matrix_rank(&self.equality_part().0, SYSTEM_RANK_TOL)
    }

    fn equality_part(&self) -> (DMatrix<f64>, Vec<f64>) {
        let rows: Vec<usize> = (0..self.rows())
            .filter(|&r| self.senses[r] == Sense::Eq)
            .collect();
        let m = DMatrix::from_fn(rows.len(), self.cols(), |r, c| self.matrix[(rows[r], c)]);
        (m, rows.iter().map(|&r| self.rhs[r]).collect())
    }

    /// Largest violation over all rows.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let ax = &self.matrix * DVector::from_column_slice(x);
        (0..self.rows()).fold(0.0f64, |acc, r| {
            let v = match self.senses[r] {
                Sense::Eq => (ax[r] - self.rhs[r]).abs(),
                Sense::Le => (ax[r] - self.rhs[r]).max(0.0),
                Sense::Ge => (self.rhs[r] - ax[r]).max(0.0),
            };
            acc.max(v)
        })
    }

    /// Standard form with one slack column per inequality.
    fn standard_form(&self) -> (DMatrix<f64>, usize) {
        let n = self.cols();
        let slacks: Vec<usize> = (0..self.rows())
            .filter(|&r| self.senses[r] != Sense::Eq)
            .collect();
        let mut a = self.matrix.clone().resize_horizontally(n + slacks.len(), 0.0);
        for (s, &r) in slacks.iter().enumerate() {
            a[(r, n + s)] = if self.senses[r] == Sense::Le { 1.0 } else { -1.0 };
        }
        (a, slacks.len())
    }
}

fn check_marginals(
    spec: &ModelSpec,
    interest: &InterestSpec,
    w_star: &TreatmentWeights,
    alpha_star: &CovariateWeights,
) -> Result<()> {
    interest.check_model(spec)?;
    if w_star.len() != spec.v1() || alpha_star.len() != spec.d() {
        return Err(DesignError::Dimension("marginal lengths".into()));
    }
    if let Some(i) = w_star.iter().position(|&w| !(w > 0.0)) {
        return Err(DesignError::InfeasibleMarginal(format!(
            "treatment {} has zero weight",
            i + 1
        )));
    }
    Ok(())
}

/// The linear system characterizing designs that inherit the optimality of
/// `w* (x) alpha*`.
pub fn theorem3_constraints(
    spec: &ModelSpec,
    interest: &InterestSpec,
    w_star: &TreatmentWeights,
    alpha_star: &CovariateWeights,
) -> Result<ConstraintSet> {
    check_marginals(spec, interest, w_star, alpha_star)?;
    let (v1, d, v2) = (spec.v1(), spec.d(), spec.v2());
    let q1 = interest.q1();
    let k = interest.k();
    let (s1, s2) = (interest.s1(), interest.s2());
    let cols = v1 * d;
    let g = spec.g();
    let mut rows = Vec::new();

    for i in 0..v1 {
        let mut c = vec![0.0; cols];
        c[i * d..(i + 1) * d].iter_mut().for_each(|v| *v = 1.0);
        rows.push((c, w_star[i], RowTag::MarginalFix { treatment: i }, Sense::Eq));
    }
    for r in 0..v2 {
        for ci in 0..s1 {
            let mut c = vec![0.0; cols];
            for i in 0..v1 {
                let f = q1[(i, ci)] / w_star[i];
                for kk in 0..d {
                    c[i * d + kk] = g[(kk, r)] * f;
                }
            }
            rows.push((
                c,
                0.0,
                RowTag::CovariateResistance {
                    covariate: r,
                    contrast: ci,
                },
                Sense::Eq,
            ));
        }
    }
    if s2 > 0 {
        let (_, s) = spec.covariate_moment(alpha_star)?;
        let spk = mp_pinv(&s, RANK_TOL)?.as_matrix() * k;
        let gbar = spec.covariate_mean(alpha_star);
        // per-point (g(k) - gbar)^T S^+ K and g(k)^T S^+ K
        let proj = g * &spk;
        let mean_proj = gbar.transpose() * &spk;
        for i in 0..v1 {
            for ci in 0..s2 {
                let mut c = vec![0.0; cols];
                for kk in 0..d {
                    c[i * d + kk] = proj[(kk, ci)];
                }
                rows.push((
                    c,
                    w_star[i] * mean_proj[(0, ci)],
                    RowTag::TreatmentResidual {
                        treatment: i,
                        column: ci,
                    },
                    Sense::Eq,
                ));
            }
        }
        let total: f64 = w_star.iter().zip(spec.lambda()).map(|(w, l)| w * l).sum();
        for r in 0..v2 {
            for ci in 0..s2 {
                let mut c = vec![0.0; cols];
                for i in 0..v1 {
                    let li = spec.lambda()[i] / total;
                    for kk in 0..d {
                        c[i * d + kk] = li * g[(kk, r)] * (proj[(kk, ci)] - mean_proj[(0, ci)]);
                    }
                }
                rows.push((
                    c,
                    k[(r, ci)],
                    RowTag::CovariateOptimality { row: r, column: ci },
                    Sense::Eq,
                ));
            }
        }
    }
    rows.push((vec![1.0; cols], 1.0, RowTag::Normalization, Sense::Eq));
    Ok(ConstraintSet::from_rows(cols, rows))
}

/// `M(xi) = M(xi*)` (upper triangle) plus normalization. Any solution has
/// the same information matrix as `xi*`.
pub fn moment_constraints(spec: &ModelSpec, xi_star: &ApproxDesign) -> Result<ConstraintSet> {
    let m = spec.moment_matrix(xi_star)?;
    let order = spec.param_dim();
    let cols = spec.cells();
    let regs: Vec<DVector<f64>> = (0..cols)
        .map(|j| {
            let (i, k) = spec.cell_coords(j);
            spec.regressor(i, k)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for r in 0..order {
        for c in r..order {
            let coeffs: Vec<f64> = (0..cols)
                .map(|j| {
                    let (i, _) = spec.cell_coords(j);
                    spec.lambda()[i] * regs[j][r] * regs[j][c]
                })
                .collect();
            rows.push((coeffs, m[(r, c)], RowTag::MomentMatch { row: r, column: c }, Sense::Eq));
        }
    }
    rows.push((vec![1.0; cols], 1.0, RowTag::Normalization, Sense::Eq));
    Ok(ConstraintSet::from_rows(cols, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexSolution {
    pub x: Vec<f64>,
    pub support_size: usize,
    pub basis_rank: usize,
    /// Largest entry change made by clamping and renormalizing.
    pub drift: f64,
}

/// Uniform `[0, 1)` objective from a seeded ChaCha8 stream.
pub fn random_objective(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

/// A basic feasible solution of `min c^T x` over the constraint set.
pub fn lp_vertex_solve(cs: &ConstraintSet, c: &[f64]) -> Result<VertexSolution> {
    lp_vertex_solve_on(cs, c, None)
}

fn lp_vertex_solve_on(cs: &ConstraintSet, c: &[f64], allowed: Option<&[bool]>) -> Result<VertexSolution> {
    let n = cs.cols();
    if c.len() != n {
        return Err(DesignError::Dimension("objective length".into()));
    }
    let (mut a, slacks) = cs.standard_form();
    if let Some(allowed) = allowed {
        for (j, &ok) in allowed.iter().enumerate() {
            if !ok {
                a.column_mut(j).fill(0.0);
            }
        }
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, slacks));
    if let Some(allowed) = allowed {
        // excluded columns are zero; a large cost keeps them at zero
        for (j, &ok) in allowed.iter().enumerate() {
            if !ok {
                cost[j] = 1e6;
            }
        }
    }
    let sol = lp::solve(&a, cs.rhs(), &cost, &LpOptions::default())?;
    let mut x: Vec<f64> = sol.x[..n]
        .iter()
        .map(|&v| if v > SUPPORT_TOL { v } else { 0.0 })
        .collect();
    let total: f64 = x.iter().sum();
    if !(total > 0.0) {
        return Err(DesignError::LpInfeasible("vertex has no mass".into()));
    }
    x.iter_mut().for_each(|v| *v /= total);
    let drift = sol.x[..n]
        .iter()
        .zip(&x)
        .fold(0.0f64, |acc, (raw, new)| acc.max((raw - new).abs()));
    let resid = cs.residual(&x);
    if resid > FEASIBILITY_TOL {
        return Err(DesignError::LpInfeasible(format!(
            "vertex violates the system by {resid:.3e}"
        )));
    }
    Ok(VertexSolution {
        support_size: x.iter().filter(|&&v| v > SUPPORT_TOL).count(),
        x,
        basis_rank: cs.rank(),
        drift,
    })
}

/// Generalized inverse `G` of the transfer condition.
fn transfer_g(
    spec: &ModelSpec,
    w_star: &TreatmentWeights,
    alpha_star: &CovariateWeights,
) -> Result<DMatrix<f64>> {
    let (v1, v2) = (spec.v1(), spec.v2());
    let total: f64 = w_star.iter().zip(spec.lambda()).map(|(w, l)| w * l).sum();
    let mut g = DMatrix::zeros(v1 + v2 + 1, v1 + v2 + 1);
    for i in 0..v1 {
        g[(i, i)] = 1.0 / (spec.lambda()[i] * w_star[i]);
    }
    let (m2, _) = spec.covariate_moment(alpha_star)?;
    let g2 = if v2 == 0 {
        DMatrix::from_element(1, 1, 1.0)
    } else {
        block_ginverse(&m2, Partition::new(1, v2 + 1)?, RANK_TOL)?.into_inner()
    };
    g.view_mut((v1, v1), (v2 + 1, v2 + 1)).copy_from(&(g2 / total));
    Ok(g)
}

/// `max |M(xi) G A - A| / max(1, max |A|)`.
pub fn transfer_residual(
    spec: &ModelSpec,
    xi: &ApproxDesign,
    w_star: &TreatmentWeights,
    alpha_star: &CovariateWeights,
    interest: &InterestSpec,
) -> Result<f64> {
    check_marginals(spec, interest, w_star, alpha_star)?;
    let m = spec.moment_matrix(xi)?;
    let g = transfer_g(spec, w_star, alpha_star)?;
    let a = interest.a();
    let diff = m.as_matrix() * g * a - a;
    Ok(diff.amax() / a.amax().max(1.0))
}

/// True iff `M(xi) G A = A` within [`VERIFY_TOL`]; false on invalid input.
pub fn verify_transfer(
    spec: &ModelSpec,
    xi: &ApproxDesign,
    w_star: &TreatmentWeights,
    alpha_star: &CovariateWeights,
    interest: &InterestSpec,
) -> bool {
    matches!(
        transfer_residual(spec, xi, w_star, alpha_star, interest),
        Ok(r) if r <= VERIFY_TOL
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum System {
    /// Optimality-transfer rows built from the marginals of `xi*`.
    #[default]
    Transfer,
    /// `M(xi) = M(xi*)`.
    MomentMatching,
}

#[derive(Debug, Clone)]
pub struct SparsifyOptions {
    pub seed: u64,
    /// Number of objective vectors tried (seeds `seed, seed + 1, ...`).
    pub restarts: usize,
    pub system: System,
    pub exec: Execution,
}

impl Default for SparsifyOptions {
    fn default() -> Self {
        SparsifyOptions {
            seed: 0,
            restarts: 16,
            system: System::Transfer,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparsifyReport {
    pub rows: usize,
    pub rank: usize,
    /// `v1 d - rank`: zeros every vertex is guaranteed to have.
    pub zero_guarantee: usize,
    pub input_support: usize,
    pub output_support: usize,
    /// Seed of the objective that produced the output; `None` when the
    /// input was returned unchanged.
    pub seed_used: Option<u64>,
    pub supports_seen: Vec<usize>,
    pub criterion_input: f64,
    pub criterion_output: f64,
    /// Relative Frobenius distance of the information matrices.
    pub info_difference: f64,
    pub transfer_residual: f64,
    pub drift: f64,
}

/// Replaces `xi*` by a vertex of its optimality system with the smallest
/// support found over `opts.restarts` random objectives, and verifies that
/// nothing was lost.
pub fn sparsify(
    spec: &ModelSpec,
    interest: &InterestSpec,
    crit: Criterion,
    xi_star: &ApproxDesign,
    user: &[UserConstraint],
    opts: &SparsifyOptions,
) -> Result<(ApproxDesign, SparsifyReport)> {
    let (w_star, alpha_star) = xi_star.marginals();
    let cs = match opts.system {
        System::Transfer => theorem3_constraints(spec, interest, &w_star, &alpha_star)?,
        System::MomentMatching => moment_constraints(spec, xi_star)?,
    }
    .with_user(user)?;
    let input_resid = cs.residual(xi_star.weights());
    if input_resid > 1e-8 {
        return Err(DesignError::InfeasibleDesign(format!(
            "input design violates its own system by {input_resid:.3e}"
        )));
    }

    let s = interest.rank();
    let reference = info_matrix_full(spec, xi_star, interest)?;
    let criterion_input = phi_p(&reference, crit, s);
    let rank = cs.rank();
    let cells = spec.cells();
    let input_support = xi_star.support_size();

    let check = |x: &[f64]| -> Result<(ApproxDesign, f64, f64, f64)> {
        let xi = ApproxDesign::new(spec.v1(), spec.d(), x.to_vec())?;
        let info = info_matrix_full(spec, &xi, interest)
            .map_err(|e| DesignError::VerificationFailed(e.to_string()))?;
        let diff = (info.matrix().as_matrix() - reference.matrix().as_matrix()).norm()
            / reference.matrix().as_matrix().norm().max(1e-300);
        let value = phi_p(&info, crit, s);
        let resid = transfer_residual(spec, &xi, &w_star, &alpha_star, interest)?;
        Ok((xi, diff, value, resid))
    };
    let passes = |diff: f64, value: f64, resid: f64| {
        diff <= VERIFY_TOL
            && (value - criterion_input).abs() <= VERIFY_TOL * criterion_input.max(1e-300)
            && resid <= VERIFY_TOL
    };

    let make_report = |support: usize, seed_used, seen: Vec<usize>, value, diff, resid, drift| SparsifyReport {
        rows: cs.rows(),
        rank,
        zero_guarantee: cells.saturating_sub(rank),
        input_support,
        output_support: support,
        seed_used,
        supports_seen: seen,
        criterion_input,
        criterion_output: value,
        info_difference: diff,
        transfer_residual: resid,
        drift,
    };

    // a design that is already a vertex of its own system stays as it is
    let support_cols = xi_star.support();
    let sub = DMatrix::from_fn(cs.rows(), support_cols.len(), |r, c| cs.matrix()[(r, support_cols[c])]);
    if matrix_rank(&sub, SYSTEM_RANK_TOL) == support_cols.len() {
        let (xi, diff, value, resid) = check(xi_star.weights())?;
        return Ok((
            xi,
            make_report(input_support, None, Vec::new(), value, diff, resid, 0.0),
        ));
    }

    let seeds: Vec<u64> = (0..opts.restarts.max(1) as u64).map(|r| opts.seed.wrapping_add(r)).collect();
    let vertices = par::map(opts.exec, &seeds, |&seed| {
        lp_vertex_solve(&cs, &random_objective(cells, seed))
    });
    let mut candidates: Vec<(usize, u64, VertexSolution)> = Vec::new();
    let mut first_error = None;
    for (seed, v) in seeds.iter().zip(vertices) {
        match v {
            Ok(v) => candidates.push((v.support_size, *seed, v)),
            Err(e) => {
                log::debug!("objective seed {seed}: {e}");
                first_error.get_or_insert(e);
            }
        }
    }
    let supports_seen: Vec<usize> = candidates.iter().map(|c| c.0).collect();
    candidates.sort_by_key(|c| c.0);

    // vertices restricted to the input support cannot grow it
    if candidates.first().is_none_or(|c| c.0 > input_support) {
        let allowed: Vec<bool> = xi_star.weights().iter().map(|&v| v > SUPPORT_TOL).collect();
        if let Ok(v) = lp_vertex_solve_on(&cs, &random_objective(cells, opts.seed), Some(&allowed)) {
            candidates.insert(0, (v.support_size, opts.seed, v));
        }
    }

    let mut last_failure = None;
    for (support, seed, v) in candidates {
        let (xi, diff, value, resid) = check(&v.x)?;
        if passes(diff, value, resid) {
            let report = make_report(support, Some(seed), supports_seen, value, diff, resid, v.drift);
            return Ok((xi, report));
        }
        last_failure = Some(format!(
            "seed {seed}: info difference {diff:.3e}, criterion {value:.9e} vs {criterion_input:.9e}, transfer residual {resid:.3e}"
        ));
    }
    match (last_failure, first_error) {
        (Some(msg), _) => Err(DesignError::VerificationFailed(msg)),
        (None, Some(e)) => Err(e),
        (None, None) => Err(DesignError::LpInfeasible("no vertex found".into())),
    }
}

/// Projects `xi` onto the equality rows of `cs` without leaving its
/// support (least-squares correction). Returns the corrected design and
/// the largest entry change; errors if the projection leaves the simplex.
pub fn refine_on_support(cs: &ConstraintSet, xi: &ApproxDesign) -> Result<(ApproxDesign, f64)> {
    let support = xi.support();
    let (c, b) = cs.equality_part();
    let cs_sub = DMatrix::from_fn(c.nrows(), support.len(), |r, k| c[(r, support[k])]);
    let x0 = DVector::from_iterator(support.len(), support.iter().map(|&j| xi.weights()[j]));
    let resid = &cs_sub * &x0 - DVector::from_column_slice(&b);
    let pinv = cs_sub
        .clone()
        .svd(true, true)
        .pseudo_inverse(1e-12)
        .map_err(|e| DesignError::InvalidMatrix(e.to_string()))?;
    let x = &x0 - pinv * resid;
    let mut weights = vec![0.0; xi.weights().len()];
    let mut displacement = 0.0f64;
    for (k, &j) in support.iter().enumerate() {
        if x[k] < 0.0 {
            return Err(DesignError::InfeasibleDesign(format!(
                "projection makes cell {j} negative"
            )));
        }
        weights[j] = x[k];
        displacement = displacement.max((x[k] - x0[k]).abs());
    }
    let refined = ApproxDesign::from_unnormalized(xi.v1(), xi.d(), weights)?;
    Ok((refined, displacement))
}
