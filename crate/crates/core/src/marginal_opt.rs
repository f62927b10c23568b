//! The two marginal problems whose solutions combine into an optimal product
//! design, plus an exhaustive simplex-grid oracle used to check them.
//!
//! Both marginal problems share one shape: maximize a Phi_p criterion of
//! `(Q^T M^+(x) Q)^+` with `M(x) = sum_j x_j c_j a_j a_j^T` over the simplex.
//! For the treatment stage the atoms are unit vectors scaled by `lambda_i`,
//! and the covariate stage contributes extra eigenvalues `L(w) kappa_m`
//! with `L(w) = sum_i lambda_i w_i`. For the covariate stage the atoms are
//! `h(k) = (1, g(k))` with interest `(0; K)`.
//!
//! Finite `p` uses pairwise vertex exchange with an exact line search.
//! `p = -inf` warm-starts through a decreasing-`p` homotopy and then polishes
//! the nonsmooth problem with a trust-region cutting-plane method.

use nalgebra::{DMatrix, DVector};

use crate::criteria::{phi_p_eigenvalues, Criterion};
use crate::error::{DesignError, Result};
use crate::linalg::{mp_pinv, sym_eig, SymMatrix, RANK_TOL};
use crate::lp::{self, LpOptions};
use crate::model::{ApproxDesign, CovariateWeights, InterestSpec, ModelSpec, TreatmentWeights};
use crate::par::{self, Execution};

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Relative tolerance for agreement with the grid oracle.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative improvement counted as a stalled iteration.
    pub rel_improvement: f64,
    /// Relative duality gap at which the exchange method stops.
    pub gap_tol: f64,
    /// Lower bound on treatment weights during iteration.
    pub floor: f64,
    /// Decreasing `p` schedule warm-starting E-optimal solves.
    pub homotopy: Vec<f64>,
    pub homotopy_max_iter: usize,
    /// Maximum change between the last two homotopy stages before a warning.
    pub agreement_tol: f64,
    pub polish_max_iter: usize,
    /// Relative predicted gain at which the cutting-plane polish stops.
    pub polish_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-4,
            max_iter: 100_000,
            rel_improvement: 1e-12,
            gap_tol: 1e-14,
            floor: 1e-9,
            homotopy: vec![-8.0, -16.0, -32.0, -64.0, -128.0],
            homotopy_max_iter: 5_000,
            agreement_tol: 1e-5,
            polish_max_iter: 400,
            polish_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MarginalSolution {
    pub weights: Vec<f64>,
    pub criterion_value: f64,
    /// `tr(N^p)` over positive eigenvalues for finite `p`; the E-value for
    /// `p = -inf`.
    pub phi_star: f64,
    /// Positive eigenvalues of the marginal information matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some weight sits at the interior floor.
    pub floor_binding: bool,
}

/// What the covariate stage contributes to the treatment objective: the
/// positive eigenvalues `kappa` of `N_K(alpha*)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Coupling {
    kappa: Vec<f64>,
}

impl Coupling {
    pub fn none() -> Self {
        Coupling::default()
    }

    pub fn from_eigenvalues(kappa: Vec<f64>) -> Self {
        Coupling { kappa }
    }

    pub fn from_solution(sol: &MarginalSolution) -> Self {
        Coupling::from_eigenvalues(sol.eigenvalues.clone())
    }

    /// Equivalent coupling from the scalar summary `phi_star` and `s2`.
    ///
    /// The treatment objective depends on `kappa` only through
    /// `sum kappa^p` (finite `p != 0`), `min kappa` (E) or its length (D), so
    /// `s2` equal values reproduce it exactly.
    pub fn from_phi_star(crit: Criterion, phi_star: f64, s2: usize) -> Result<Self> {
        if !(phi_star >= 0.0) {
            return Err(DesignError::InvalidCriterion(format!(
                "phi_star must be nonnegative, got {phi_star}"
            )));
        }
        if s2 == 0 {
            return Ok(Coupling::none());
        }
        let p = crit.p();
        let value = if crit.is_e() {
            phi_star
        } else if p == 0.0 {
            1.0
        } else {
            (phi_star / s2 as f64).powf(1.0 / p)
        };
        if !(value > 0.0) || !value.is_finite() {
            return Err(DesignError::InvalidCriterion(format!(
                "phi_star {phi_star} is not attainable with s2 = {s2}"
            )));
        }
        Ok(Coupling::from_eigenvalues(vec![value; s2]))
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.kappa
    }
}

struct Stage {
    atoms: Vec<DVector<f64>>,
    scales: Vec<f64>,
    q: DMatrix<f64>,
    q_rank: usize,
    lambda: Vec<f64>,
    kappa: Vec<f64>,
    floor: f64,
}

struct Eval {
    value: f64,
    /// Empty when the point is infeasible.
    grad: Vec<f64>,
    eigenvalues: Vec<f64>,
}

impl Eval {
    fn feasible(&self) -> bool {
        !self.grad.is_empty()
    }

    fn infeasible() -> Self {
        Eval {
            value: 0.0,
            grad: Vec::new(),
            eigenvalues: Vec::new(),
        }
    }
}

impl Stage {
    fn dim(&self) -> usize {
        self.atoms.len()
    }

    fn s(&self) -> usize {
        self.q_rank + self.kappa.len()
    }

    fn evaluate(&self, x: &[f64], p: f64) -> Result<Eval> {
        let order = self.q.nrows();
        let mut m = DMatrix::zeros(order, order);
        for ((a, &c), &xj) in self.atoms.iter().zip(&self.scales).zip(x) {
            if xj > 0.0 {
                m.ger(xj * c, a, a, 1.0);
            }
        }
        let m = SymMatrix::symmetrize(m);
        let mp = mp_pinv(&m, RANK_TOL)?;
        let mq = mp.as_matrix() * &self.q;
        let scale = self.q.amax().max(1.0);
        if (m.as_matrix() * &mq - &self.q).amax() > 1e-8 * scale {
            return Ok(Eval::infeasible());
        }
        let x_inv = SymMatrix::symmetrize(self.q.transpose() * &mq);
        let n = mp_pinv(&x_inv, RANK_TOL)?;
        let eig = sym_eig(&n)?;
        if eig.positive_count(RANK_TOL) < self.q_rank {
            return Ok(Eval::infeasible());
        }
        let gammas: Vec<f64> = eig.values.iter().take(self.q_rank).cloned().collect();
        let total: f64 = self.lambda.iter().zip(x).map(|(l, x)| l * x).sum();
        let mut all = gammas.clone();
        all.extend(self.kappa.iter().map(|k| total * k));
        let s = self.s();
        let value = phi_p_eigenvalues(&all, p, s);
        if !(value > 0.0) {
            return Ok(Eval::infeasible());
        }

        // rows u_l^T N Q^T M^+ so that u_l^T b_j = row_l . a_j
        let w = n.as_matrix() * mq.transpose();
        let rows: Vec<DVector<f64>> = (0..self.q_rank)
            .map(|l| w.transpose() * eig.vectors.column(l))
            .collect();
        let sens = |l: usize, j: usize| -> f64 {
            if l < self.q_rank {
                let v = rows[l].dot(&self.atoms[j]);
                self.scales[j] * v * v
            } else {
                self.lambda[j] * self.kappa[l - self.q_rank]
            }
        };
        let dim = self.dim();
        let grad = if p == f64::NEG_INFINITY {
            let l = (0..all.len())
                .min_by(|&a, &b| all[a].total_cmp(&all[b]))
                .unwrap_or(0);
            (0..dim).map(|j| sens(l, j)).collect()
        } else {
            let weights: Vec<f64> = all
                .iter()
                .map(|g| (value / g).powf(1.0 - p) / s as f64)
                .collect();
            (0..dim)
                .map(|j| weights.iter().enumerate().map(|(l, w)| w * sens(l, j)).sum())
                .collect()
        };
        let mut eigenvalues = gammas;
        eigenvalues.truncate(self.q_rank);
        Ok(Eval {
            value,
            grad,
            eigenvalues,
        })
    }

    fn lower(&self) -> f64 {
        self.floor
    }
}

struct Run {
    x: Vec<f64>,
    eval: Eval,
    iterations: usize,
    converged: bool,
}

fn exchange(stage: &Stage, p: f64, x0: Vec<f64>, max_iter: usize, opts: &SolverOptions) -> Result<Run> {
    let dim = stage.dim();
    let floor = stage.lower();
    let mut x = x0;
    let mut ev = stage.evaluate(&x, p)?;
    if !ev.feasible() {
        return Err(DesignError::InfeasibleMarginal(
            "starting design is infeasible".into(),
        ));
    }
    let mut stall = 0usize;
    let mut best_gap = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let g = &ev.grad;
        let dot: f64 = x.iter().zip(g).map(|(x, g)| x * g).sum();
        let best = argmax(g);
        let worst = (0..dim)
            .filter(|&j| x[j] > floor)
            .min_by(|&a, &b| g[a].total_cmp(&g[b]));
        let gap = g[best] - dot;
        if gap <= opts.gap_tol * ev.value {
            converged = true;
            break;
        }
        let Some(worst) = worst else { break };
        if worst == best || g[best] <= g[worst] {
            converged = true;
            break;
        }
        iterations += 1;
        let tmax = x[worst] - floor;
        let before = ev.value;
        if let Some((t, next)) = line_search(stage, p, &x, best, worst, tmax, &ev)? {
            x[best] += t;
            x[worst] = if t == tmax { floor } else { x[worst] - t };
            ev = next;
        }
        // values plateau long before the gradients settle, so a step only
        // counts as stalled if the gap stopped shrinking as well
        let gap_progress = gap < 0.9 * best_gap;
        best_gap = best_gap.min(gap);
        if ev.value - before < opts.rel_improvement * before && !gap_progress {
            stall += 1;
            if stall >= (4 * dim).max(50) {
                converged = gap <= 1e-8 * ev.value;
                break;
            }
        } else {
            stall = 0;
        }
    }
    Ok(Run {
        x,
        eval: ev,
        iterations,
        converged,
    })
}

/// Bisection on the sign of the directional derivative along
/// `e_up - e_down`. Returns `None` if no step keeps the value.
fn line_search(
    stage: &Stage,
    p: f64,
    x: &[f64],
    up: usize,
    down: usize,
    tmax: f64,
    ev: &Eval,
) -> Result<Option<(f64, Eval)>> {
    let point = |t: f64| {
        let mut y = x.to_vec();
        y[up] += t;
        y[down] = if t == tmax { stage.lower() } else { y[down] - t };
        y
    };
    let slope = |e: &Eval| e.grad[up] - e.grad[down];
    let keeps = |e: &Eval| e.value >= ev.value * (1.0 - 1e-13);

    let at_max = stage.evaluate(&point(tmax), p)?;
    if at_max.feasible() && slope(&at_max) >= 0.0 && keeps(&at_max) {
        return Ok(Some((tmax, at_max)));
    }
    let (mut lo, mut hi) = (0.0, tmax);
    let mut lo_eval: Option<Eval> = None;
    let mut hi_eval: Option<Eval> = at_max.feasible().then_some(at_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let e = stage.evaluate(&point(mid), p)?;
        if !e.feasible() {
            hi = mid;
            hi_eval = None;
        } else if slope(&e) > 0.0 {
            lo = mid;
            lo_eval = Some(e);
        } else {
            hi = mid;
            hi_eval = Some(e);
        }
    }
    let pick = [(lo, lo_eval), (hi, hi_eval)]
        .into_iter()
        .filter_map(|(t, e)| e.filter(|e| t > 0.0 && keeps(e)).map(|e| (t, e)))
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value));
    Ok(pick)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for j in 1..v.len() {
        if v[j] > v[best] {
            best = j;
        }
    }
    best
}

/// Trust-region cutting-plane maximization of the E-criterion.
fn polish(stage: &Stage, x0: Vec<f64>, opts: &SolverOptions) -> Result<Run> {
    let p = f64::NEG_INFINITY;
    let dim = stage.dim();
    let floor = stage.lower();
    let mut center = x0;
    let mut fc = stage.evaluate(&center, p)?;
    if !fc.feasible() {
        return Err(DesignError::InfeasibleMarginal(
            "starting design is infeasible".into(),
        ));
    }
    let mut cuts: Vec<(Vec<f64>, f64, Vec<f64>)> = vec![(center.clone(), fc.value, fc.grad.clone())];
    let mut radius = 0.1f64;
    let mut iterations = 0;
    let mut converged = false;
    let lp_opts = LpOptions::default();

    while iterations < opts.polish_max_iter {
        iterations += 1;
        let lower: Vec<f64> = center.iter().map(|c| (c - radius).max(floor)).collect();
        let upper: Vec<f64> = center.iter().map(|c| (c + radius).min(1.0)).collect();
        let nc = cuts.len();
        // columns: z (dim), t, box slacks (dim), cut slacks (nc)
        let ncol = 2 * dim + 1 + nc;
        let nrow = 1 + dim + nc;
        let mut a = DMatrix::zeros(nrow, ncol);
        let mut b = vec![0.0; nrow];
        for j in 0..dim {
            a[(0, j)] = 1.0;
            a[(1 + j, j)] = 1.0;
            a[(1 + j, dim + 1 + j)] = 1.0;
            b[1 + j] = (upper[j] - lower[j]).max(0.0);
        }
        b[0] = 1.0 - lower.iter().sum::<f64>();
        for (i, (xi, fi, gi)) in cuts.iter().enumerate() {
            let r = 1 + dim + i;
            a[(r, dim)] = 1.0;
            for j in 0..dim {
                a[(r, j)] = -gi[j];
            }
            a[(r, 2 * dim + 1 + i)] = 1.0;
            b[r] = fi + (0..dim).map(|j| gi[j] * (lower[j] - xi[j])).sum::<f64>();
        }
        let mut c = vec![0.0; ncol];
        c[dim] = -1.0;
        let sol = match lp::solve(&a, &b, &c, &lp_opts) {
            Ok(s) => s,
            Err(e) => {
                log::debug!("cutting-plane LP failed: {e}");
                break;
            }
        };
        let predicted = sol.x[dim] - fc.value;
        if predicted <= opts.polish_tol * fc.value {
            converged = true;
            break;
        }
        let mut y: Vec<f64> = (0..dim).map(|j| lower[j] + sol.x[j]).collect();
        let total: f64 = y.iter().sum();
        y.iter_mut().for_each(|v| *v /= total);
        let ey = stage.evaluate(&y, p)?;

        // keep cuts that are tight at the model optimum
        let mut kept = Vec::with_capacity(nc + 1);
        for (i, cut) in cuts.into_iter().enumerate() {
            let slack = sol.x[2 * dim + 1 + i];
            if i == 0 || slack <= 1e-9 * (1.0 + fc.value) {
                kept.push(cut);
            }
        }
        cuts = kept;

        if ey.feasible() {
            cuts.push((y.clone(), ey.value, ey.grad.clone()));
        }
        if ey.feasible() && ey.value >= fc.value + 0.1 * predicted {
            center = y;
            fc = ey;
            cuts.insert(0, (center.clone(), fc.value, fc.grad.clone()));
            radius = (2.0 * radius).min(1.0);
        } else {
            radius *= 0.5;
            if radius < 1e-12 {
                converged = true;
                break;
            }
        }
    }
    Ok(Run {
        x: center,
        eval: fc,
        iterations,
        converged,
    })
}

fn solve_stage(stage: &Stage, crit: Criterion, opts: &SolverOptions) -> Result<Run> {
    let dim = stage.dim();
    let x0 = vec![1.0 / dim as f64; dim];
    if dim == 1 {
        let eval = stage.evaluate(&x0, crit.p())?;
        if !eval.feasible() {
            return Err(DesignError::InfeasibleMarginal("single point design".into()));
        }
        return Ok(Run {
            x: x0,
            eval,
            iterations: 0,
            converged: true,
        });
    }
    if !crit.is_e() {
        let run = exchange(stage, crit.p(), x0, opts.max_iter, opts)?;
        if !run.converged && run.iterations >= opts.max_iter {
            return Err(DesignError::NotConverged {
                iterations: run.iterations,
                best_value: run.eval.value,
                best_weights: run.x,
            });
        }
        return Ok(run);
    }

    let mut x = x0;
    let mut previous: Option<Vec<f64>> = None;
    let mut iterations = 0;
    for &p in &opts.homotopy {
        let run = exchange(stage, p, x.clone(), opts.homotopy_max_iter, opts)?;
        iterations += run.iterations;
        previous = Some(std::mem::replace(&mut x, run.x));
    }
    if let Some(prev) = previous {
        let diff = prev
            .iter()
            .zip(&x)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        if diff > opts.agreement_tol {
            log::debug!("last homotopy stages differ by {diff:.3e}; polishing");
        }
    }
    let mut run = polish(stage, x, opts)?;
    run.iterations += iterations;
    Ok(run)
}

fn phi_star_of(eigenvalues: &[f64], crit: Criterion) -> f64 {
    if eigenvalues.is_empty() {
        return 0.0;
    }
    if crit.is_e() {
        eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        eigenvalues.iter().map(|k| k.powf(crit.p())).sum()
    }
}

fn finish(run: Run, crit: Criterion, floor: f64, what: &str) -> MarginalSolution {
    let floor_binding = floor > 0.0 && run.x.iter().any(|&v| v <= floor * (1.0 + 1e-9));
    if floor_binding {
        log::warn!("{what} weights reached the interior floor {floor:e}");
    }
    if !run.converged {
        log::warn!("{what} solver stopped before certifying optimality");
    }
    MarginalSolution {
        phi_star: phi_star_of(&run.eval.eigenvalues, crit),
        weights: run.x,
        criterion_value: run.eval.value,
        eigenvalues: run.eval.eigenvalues,
        iterations: run.iterations,
        converged: run.converged,
        floor_binding,
    }
}

fn covariate_stage(spec: &ModelSpec, k: &DMatrix<f64>) -> Result<Stage> {
    let d = spec.d();
    let v2 = spec.v2();
    let mut q = DMatrix::zeros(v2 + 1, k.ncols());
    q.view_mut((1, 0), (v2, k.ncols())).copy_from(k);
    Ok(Stage {
        atoms: (0..d).map(|j| spec.covariate_regressor(j)).collect(),
        scales: vec![1.0; d],
        q_rank: crate::linalg::matrix_rank(k, RANK_TOL),
        q,
        lambda: Vec::new(),
        kappa: Vec::new(),
        floor: 0.0,
    })
}

/// Phi_p-optimal covariate marginal for `K^T beta`.
pub fn optimize_covariate(
    spec: &ModelSpec,
    k: &DMatrix<f64>,
    crit: Criterion,
    opts: &SolverOptions,
) -> Result<MarginalSolution> {
    if k.nrows() != spec.v2() {
        return Err(DesignError::Dimension("K must have v2 rows".into()));
    }
    let d = spec.d();
    if k.ncols() == 0 || crate::linalg::matrix_rank(k, RANK_TOL) == 0 {
        return Ok(MarginalSolution {
            weights: vec![1.0 / d as f64; d],
            criterion_value: 0.0,
            phi_star: 0.0,
            eigenvalues: Vec::new(),
            iterations: 0,
            converged: true,
            floor_binding: false,
        });
    }
    let stage = covariate_stage(spec, k)?;
    // the uniform design has maximal support, hence maximal range
    let uniform = vec![1.0 / d as f64; d];
    if !stage.evaluate(&uniform, 0.0)?.feasible() {
        return Err(DesignError::InfeasibleInterest(
            "C(K) is not contained in C(S(alpha)) even for the uniform design".into(),
        ));
    }
    let run = solve_stage(&stage, crit, opts)?;
    Ok(finish(run, crit, 0.0, "covariate"))
}

/// Phi_p-optimal treatment marginal given the covariate-stage coupling.
pub fn optimize_treatment(
    spec: &ModelSpec,
    q1: &DMatrix<f64>,
    crit: Criterion,
    coupling: &Coupling,
    opts: &SolverOptions,
) -> Result<MarginalSolution> {
    let v1 = spec.v1();
    if q1.nrows() != v1 {
        return Err(DesignError::Dimension("Q1 must have v1 rows".into()));
    }
    let stage = Stage {
        atoms: (0..v1)
            .map(|i| {
                let mut e = DVector::zeros(v1);
                e[i] = 1.0;
                e
            })
            .collect(),
        scales: spec.lambda().to_vec(),
        q: q1.clone(),
        q_rank: crate::linalg::matrix_rank(q1, RANK_TOL),
        lambda: spec.lambda().to_vec(),
        kappa: coupling.eigenvalues().to_vec(),
        floor: opts.floor,
    };
    let run = solve_stage(&stage, crit, opts)?;
    let mut sol = finish(run, crit, opts.floor, "treatment");
    sol.phi_star = phi_star_of(coupling.eigenvalues(), crit);
    Ok(sol)
}

#[derive(Debug, Clone)]
pub struct ProductSolution {
    pub treatment: MarginalSolution,
    pub covariate: MarginalSolution,
    pub design: ApproxDesign,
    /// Phi_p of the full information matrix of the product design.
    pub criterion_value: f64,
}

impl ProductSolution {
    pub fn treatment_weights(&self) -> TreatmentWeights {
        TreatmentWeights::new(self.treatment.weights.clone()).expect("solver output is a probability vector")
    }

    pub fn covariate_weights(&self) -> CovariateWeights {
        CovariateWeights::new(self.covariate.weights.clone()).expect("solver output is a probability vector")
    }
}

/// Optimal product design `w* (x) alpha*`.
pub fn optimal_product(
    spec: &ModelSpec,
    interest: &InterestSpec,
    crit: Criterion,
    opts: &SolverOptions,
) -> Result<ProductSolution> {
    optimal_product_with(spec, interest, crit, None, opts)
}

/// As [`optimal_product`], but with the covariate marginal optionally fixed
/// by the caller. Without covariate functions of interest any marginal is
/// optimal and `alpha` (default uniform) is used as given.
pub fn optimal_product_with(
    spec: &ModelSpec,
    interest: &InterestSpec,
    crit: Criterion,
    alpha: Option<&CovariateWeights>,
    opts: &SolverOptions,
) -> Result<ProductSolution> {
    interest.check_model(spec)?;
    let covariate = match alpha {
        Some(a) => {
            if a.len() != spec.d() {
                return Err(DesignError::Dimension("alpha must have d entries".into()));
            }
            fixed_covariate(spec, interest, a, crit)?
        }
        None => optimize_covariate(spec, interest.k(), crit, opts)?,
    };
    let coupling = Coupling::from_solution(&covariate);
    let treatment = optimize_treatment(spec, interest.q1(), crit, &coupling, opts)?;
    let w = TreatmentWeights::new(treatment.weights.clone())?;
    let a = CovariateWeights::new(covariate.weights.clone())?;
    let design = ApproxDesign::product(&w, &a);
    let criterion_value =
        crate::criteria::design_value(spec, &design, interest, crit)?;
    Ok(ProductSolution {
        treatment,
        covariate,
        design,
        criterion_value,
    })
}

fn fixed_covariate(
    spec: &ModelSpec,
    interest: &InterestSpec,
    alpha: &CovariateWeights,
    crit: Criterion,
) -> Result<MarginalSolution> {
    let eigenvalues = if interest.covariate_rank() == 0 {
        Vec::new()
    } else {
        let n = crate::criteria::info_matrix_covariate(spec, alpha, interest.k())?;
        n.positive_eigenvalues().to_vec()
    };
    Ok(MarginalSolution {
        weights: alpha.as_slice().to_vec(),
        criterion_value: crit.value(&eigenvalues, interest.covariate_rank()),
        phi_star: phi_star_of(&eigenvalues, crit),
        eigenvalues,
        iterations: 0,
        converged: true,
        floor_binding: false,
    })
}

/// Largest dimension accepted by [`simplex_grid_oracle`].
pub const ORACLE_MAX_DIM: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub evaluations: u64,
}

/// Maximizes `objective` over all simplex points with coordinates in
/// `{0, 1/r, ..., 1}`. Ties go to the lexicographically smallest point;
/// NaN counts as minus infinity.
pub fn simplex_grid_oracle<F>(
    objective: F,
    dim: usize,
    resolution: usize,
    exec: Execution,
) -> Result<OracleResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    if dim > ORACLE_MAX_DIM {
        return Err(DesignError::OracleTooLarge {
            dim,
            max: ORACLE_MAX_DIM,
        });
    }
    if dim == 0 {
        return Err(DesignError::Dimension("oracle dimension must be positive".into()));
    }
    if resolution < 10 {
        return Err(DesignError::Dimension(format!(
            "oracle resolution must be at least 10, got {resolution}"
        )));
    }
    let r = resolution as f64;
    let chunks = par::map_range(exec, resolution + 1, |first| {
        let mut counts = vec![0usize; dim];
        let mut point = vec![0.0; dim];
        counts[0] = first;
        point[0] = first as f64 / r;
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut evals = 0u64;
        if dim == 1 {
            if first == resolution {
                evals += 1;
                best = Some((point.clone(), clean(objective(&point))));
            }
        } else {
            scan(
                1,
                resolution - first,
                r,
                &mut counts,
                &mut point,
                &objective,
                &mut best,
                &mut evals,
            );
        }
        (best, evals)
    });
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0;
    for (cand, evals) in chunks {
        evaluations += evals;
        if let Some((p, v)) = cand {
            if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                best = Some((p, v));
            }
        }
    }
    let (point, value) = best.expect("grid is nonempty");
    Ok(OracleResult {
        point,
        value,
        evaluations,
    })
}

fn clean(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

#[allow(clippy::too_many_arguments)]
fn scan<F: Fn(&[f64]) -> f64>(
    pos: usize,
    remaining: usize,
    r: f64,
    counts: &mut [usize],
    point: &mut [f64],
    objective: &F,
    best: &mut Option<(Vec<f64>, f64)>,
    evals: &mut u64,
) {
    let dim = counts.len();
    if pos == dim - 1 {
        counts[pos] = remaining;
        point[pos] = remaining as f64 / r;
        *evals += 1;
        let v = clean(objective(point));
        if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
            *best = Some((point.to_vec(), v));
        }
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        point[pos] = c as f64 / r;
        scan(pos + 1, remaining - c, r, counts, point, objective, best, evals);
    }
}
