//! Dense two-phase revised simplex for `min c^T x, A x = b, x >= 0`.
//!
//! Problems here are small (a few hundred columns), so the basis is
//! refactorized from scratch every iteration. The result is always a basic
//! solution, which is what the sparsification step relies on.

use nalgebra::{DMatrix, DVector};

use crate::error::{DesignError, Result};

#[derive(Debug, Clone)]
pub struct LpOptions {
    pub max_iter: usize,
    /// Optimality and feasibility tolerance.
    pub tol: f64,
    /// Relative tolerance for dropping linearly dependent rows.
    pub presolve_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            max_iter: 50_000,
            tol: 1e-9,
            presolve_tol: 1e-10,
            bland_after: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Basic columns (original indices; artificials excluded).
    pub basis: Vec<usize>,
    pub iterations: usize,
    /// Rows kept after presolve.
    pub rank: usize,
}

/// Indices of a maximal set of linearly independent rows, in order.
pub fn independent_rows(a: &DMatrix<f64>, rel_tol: f64) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for r in 0..a.nrows() {
        let row = a.row(r).transpose();
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = row.clone();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let rest = v.norm();
        if rest > rel_tol * norm {
            basis.push(v / rest);
            keep.push(r);
        }
    }
    keep
}

struct Tableau<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    basis: Vec<usize>,
    n_real: usize,
}

enum Step {
    Optimal,
    Unbounded,
}

impl Tableau<'_> {
    fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.a.nrows(), self.basis.len(), |r, c| {
            self.a[(r, self.basis[c])]
        })
    }

    fn basic_values(&self) -> Result<DVector<f64>> {
        self.basis_matrix()
            .lu()
            .solve(self.b)
            .ok_or_else(|| DesignError::LpInfeasible("singular basis".into()))
    }

    /// Runs simplex pivots for cost `c`; columns with `allowed[j] == false`
    /// never enter.
    fn run(&mut self, c: &[f64], allowed: &[bool], opts: &LpOptions, iters: &mut usize) -> Result<Step> {
        let m = self.a.nrows();
        let n = self.a.ncols();
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if *iters >= opts.max_iter {
                return Err(DesignError::LpInfeasible(format!(
                    "iteration limit {} reached",
                    opts.max_iter
                )));
            }
            let bmat = self.basis_matrix();
            let lu = bmat.clone().lu();
            let xb = lu
                .solve(self.b)
                .ok_or_else(|| DesignError::LpInfeasible("singular basis".into()))?;
            let cb = DVector::from_iterator(m, self.basis.iter().map(|&j| c[j]));
            let y = bmat
                .transpose()
                .lu()
                .solve(&cb)
                .ok_or_else(|| DesignError::LpInfeasible("singular basis".into()))?;

            let mut in_basis = vec![false; n];
            for &j in &self.basis {
                in_basis[j] = true;
            }
            let cscale = c.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n {
                if in_basis[j] || !allowed[j] {
                    continue;
                }
                let d = c[j] - self.a.column(j).dot(&y);
                if d < -opts.tol * cscale {
                    match entering {
                        None => entering = Some((j, d)),
                        Some((_, best)) if !bland && d < best => entering = Some((j, d)),
                        _ => {}
                    }
                    if bland {
                        break;
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Step::Optimal);
            };

            let u = lu
                .solve(&self.a.column(q).into_owned())
                .ok_or_else(|| DesignError::LpInfeasible("singular basis".into()))?;
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                if u[r] > 1e-9 {
                    let ratio = xb[r].max(0.0) / u[r];
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio);
                            let better = if tie {
                                if bland {
                                    self.basis[r] < self.basis[lr]
                                } else {
                                    u[r] > u[lr]
                                }
                            } else {
                                ratio < lratio
                            };
                            if better {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, theta)) = leave else {
                return Ok(Step::Unbounded);
            };
            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            self.basis[r] = q;
            *iters += 1;
        }
    }
}

/// Solves `min c^T x` subject to `A x = b`, `x >= 0`.
pub fn solve(a: &DMatrix<f64>, b: &[f64], c: &[f64], opts: &LpOptions) -> Result<LpSolution> {
    let (m0, n) = a.shape();
    if b.len() != m0 || c.len() != n {
        return Err(DesignError::Dimension("LP dimensions".into()));
    }
    if a.iter().chain(b).chain(c).any(|v| !v.is_finite()) {
        return Err(DesignError::InvalidMatrix("LP data must be finite".into()));
    }

    let keep = independent_rows(a, opts.presolve_tol);
    let m = keep.len();
    let mut ar = DMatrix::zeros(m, n + m);
    let mut br = DVector::zeros(m);
    for (r, &src) in keep.iter().enumerate() {
        let sign = if b[src] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            ar[(r, j)] = sign * a[(src, j)];
        }
        ar[(r, n + r)] = 1.0;
        br[r] = sign * b[src];
    }

    let mut tab = Tableau {
        a: &ar,
        b: &br,
        basis: (n..n + m).collect(),
        n_real: n,
    };
    let mut iters = 0;

    // phase 1
    let mut c1 = vec![0.0; n + m];
    c1[n..].iter_mut().for_each(|v| *v = 1.0);
    let all = vec![true; n + m];
    tab.run(&c1, &all, opts, &mut iters)?;
    let xb = tab.basic_values()?;
    let infeas: f64 = tab
        .basis
        .iter()
        .zip(xb.iter())
        .filter(|(&j, _)| j >= n)
        .map(|(_, v)| v.abs())
        .sum();
    let bscale = 1.0 + br.amax();
    if infeas > 1e-7 * bscale {
        return Err(DesignError::LpInfeasible(format!(
            "phase 1 residual {infeas:.3e}"
        )));
    }

    // pivot zero-level artificials out of the basis
    for r in 0..m {
        if tab.basis[r] < n {
            continue;
        }
        let mut e = DVector::zeros(m);
        e[r] = 1.0;
        let Some(row) = tab.basis_matrix().transpose().lu().solve(&e) else {
            continue;
        };
        let candidate = (0..n)
            .filter(|j| !tab.basis.contains(j))
            .map(|j| (j, ar.column(j).dot(&row)))
            .filter(|(_, v)| v.abs() > 1e-7)
            .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()));
        if let Some((j, _)) = candidate {
            tab.basis[r] = j;
        }
    }

    // phase 2
    let mut c2 = c.to_vec();
    c2.extend(std::iter::repeat_n(0.0, m));
    let mut allowed = vec![true; n];
    allowed.extend(std::iter::repeat_n(false, m));
    if let Step::Unbounded = tab.run(&c2, &allowed, opts, &mut iters)? {
        return Err(DesignError::LpUnbounded);
    }

    let xb = tab.basic_values()?;
    let mut x = vec![0.0; n];
    let mut basis = Vec::new();
    for (&j, &v) in tab.basis.iter().zip(xb.iter()) {
        if j < tab.n_real {
            x[j] = v.max(0.0);
            basis.push(j);
        }
    }

    // dropped rows must be consistent too
    let ax = a * DVector::from_column_slice(&x);
    let scale = 1.0 + b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let resid = (0..m0).fold(0.0f64, |acc, r| acc.max((ax[r] - b[r]).abs()));
    if resid > 1e-7 * scale {
        return Err(DesignError::LpInfeasible(format!(
            "constraint residual {resid:.3e}"
        )));
    }
    basis.sort_unstable();
    let objective = x.iter().zip(c).map(|(x, c)| x * c).sum();
    Ok(LpSolution {
        x,
        objective,
        basis,
        iterations: iters,
        rank: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn small_lp() {
        // min -x - y, x + 2y + s1 = 4, 3x + y + s2 = 6
        let a = dmatrix![1.0, 2.0, 1.0, 0.0; 3.0, 1.0, 0.0, 1.0];
        let sol = solve(&a, &[4.0, 6.0], &[-1.0, -1.0, 0.0, 0.0], &LpOptions::default()).unwrap();
        assert!((sol.x[0] - 1.6).abs() < 1e-12);
        assert!((sol.x[1] - 1.2).abs() < 1e-12);
        assert!((sol.objective + 2.8).abs() < 1e-12);
    }

    #[test]
    fn dependent_rows_and_negative_rhs() {
        let a = dmatrix![1.0, 1.0, 1.0; 2.0, 2.0, 2.0; -1.0, 0.0, 1.0];
        let sol = solve(&a, &[1.0, 2.0, -0.5], &[0.0, 1.0, 2.0], &LpOptions::default()).unwrap();
        assert_eq!(sol.rank, 2);
        assert!((sol.x[0] - 0.75).abs() < 1e-12 && (sol.x[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = dmatrix![1.0, 1.0];
        assert!(matches!(
            solve(&a, &[-1.0], &[0.0, 0.0], &LpOptions::default()),
            Err(DesignError::LpInfeasible(_))
        ));
        let a = dmatrix![1.0, -1.0];
        assert!(matches!(
            solve(&a, &[1.0], &[-1.0, 0.0], &LpOptions::default()),
            Err(DesignError::LpUnbounded)
        ));
        // inconsistent dependent rows
        let a = dmatrix![1.0, 1.0; 2.0, 2.0];
        assert!(solve(&a, &[1.0, 3.0], &[0.0, 0.0], &LpOptions::default()).is_err());
    }

    #[test]
    fn vertex_support_bounded_by_rank() {
        // transportation polytope with 3 x 4 cells
        let mut a = DMatrix::zeros(7, 12);
        for i in 0..3 {
            for k in 0..4 {
                a[(i, i * 4 + k)] = 1.0;
                a[(3 + k, i * 4 + k)] = 1.0;
            }
        }
        let b = [0.3, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25];
        let c: Vec<f64> = (0..12).map(|j| ((j * 7) % 5) as f64).collect();
        let sol = solve(&a, &b, &c, &LpOptions::default()).unwrap();
        let support = sol.x.iter().filter(|&&v| v > 1e-12).count();
        assert!(support <= sol.rank);
        assert_eq!(sol.rank, 6);
    }
}
