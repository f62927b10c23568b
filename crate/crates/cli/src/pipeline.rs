//! The solve, sparsify, round, verify and figure steps.
//!
//! Each `run_*` method writes its artifacts below the output directory and
//! returns the human-readable report it also wrote there.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use optdesign::criteria::{design_value, efficiency};
use optdesign::marginal_opt::{optimal_product_with, ProductSolution, SolverOptions};
use optdesign::model::{ApproxDesign, CovariateWeights, ExactDesign};
use optdesign::par::{self, Execution};
use optdesign::rounding::{covariate_strata, efficient_round, efficient_round_by, stratum_argmax_round};
use optdesign::sparsify::{sparsify, theorem3_constraints, transfer_residual, SparsifyOptions, SparsifyReport, VERIFY_TOL};
use optdesign::DesignError;

use crate::config::{CovariateConfig, JobConfig, Problem, RoundingMethod, TieBreak};
use crate::design_file::{DesignFile, Kind};
use crate::error::{io_err, CliError, Context, Result};
use crate::report::{sig, sig_list, Report};

/// Largest per-cell move accepted when snapping a printed table (4
/// decimals) onto its optimality system.
pub const SNAP_TOL: f64 = 5e-4;

pub struct Pipeline {
    pub cfg: JobConfig,
    pub problem: Problem,
    pub seed: u64,
    pub exec: Execution,
    solver: SolverOptions,
    optimum: OnceLock<ProductSolution>,
}

/// One rounded design and its efficiency; `design` is `None` when rounding
/// is impossible (efficiency 0).
#[derive(Debug, Clone)]
pub struct Rounded {
    pub n: u64,
    pub design: Option<ExactDesign>,
    pub efficiency: f64,
}

#[derive(Debug, Clone)]
pub struct Verification {
    pub residual: f64,
    pub constraint_residual: f64,
    pub criterion_ratio: f64,
    pub passed: bool,
    /// `(largest move, verification after the move)` when the raw design
    /// failed and was projected onto its system.
    pub snapped: Option<(f64, Box<Verification>)>,
}

impl Verification {
    pub fn accepted(&self) -> bool {
        self.passed || self.snapped.as_ref().is_some_and(|(moved, v)| *moved <= SNAP_TOL && v.passed)
    }
}

impl Pipeline {
    pub fn new(cfg: JobConfig, seed: Option<u64>) -> Result<Self> {
        let problem = cfg.build()?;
        let seed = seed.unwrap_or(cfg.seed);
        Ok(Pipeline {
            cfg,
            problem,
            seed,
            exec: Execution::default(),
            solver: SolverOptions::default(),
            optimum: OnceLock::new(),
        })
    }

    pub fn load(config: &Path, seed: Option<u64>) -> Result<Self> {
        Self::new(JobConfig::load(config)?, seed)
    }

    /// Output directory: the flag, else the config's `out` (relative to the
    /// working directory), else `out/`.
    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        match (flag, &self.cfg.out) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => p.clone(),
            (None, None) => PathBuf::from("out"),
        }
    }

    /// The optimal product design, computed once.
    pub fn optimum(&self) -> Result<&ProductSolution> {
        if let Some(s) = self.optimum.get() {
            return Ok(s);
        }
        let p = &self.problem;
        let alpha = match &p.fixed_alpha {
            Some(a) => Some(CovariateWeights::new(a.clone()).context("pinned covariate marginal")?),
            None => None,
        };
        let sol = optimal_product_with(&p.spec, &p.interest, p.criterion, alpha.as_ref(), &self.solver)
            .context("solve")?;
        Ok(self.optimum.get_or_init(|| sol))
    }

    pub fn run_solve(&self, out: &Path) -> Result<Report> {
        let sol = self.optimum()?;
        let p = &self.problem;
        let v2 = p.spec.v2();
        DesignFile::from_approx(&sol.design, v2).write(&out.join("product.csv"))?;
        write_vector(&out.join("treatment.csv"), "i", &sol.treatment.weights)?;
        write_vector(&out.join("covariate.csv"), "k", &sol.covariate.weights)?;

        let mut r = Report::new(format!("solve {}", self.name()));
        r.line("criterion", p.criterion.name())
            .line("w*", sig_list(&sol.treatment.weights))
            .line("alpha*", sig_list(&sol.covariate.weights))
            .real("covariate value", sol.covariate.criterion_value)
            .real("phi*", sol.covariate.phi_star)
            .real("treatment value", sol.treatment.criterion_value)
            .real("criterion value", sol.criterion_value)
            .line("support", sol.design.support_size().to_string());
        if !sol.treatment.converged || !sol.covariate.converged {
            r.line("warning", "solver stopped before certifying optimality");
        }
        write_report(out, "solve.txt", &r)?;
        Ok(r)
    }

    pub fn sparsify(&self, xi_star: &ApproxDesign) -> Result<(ApproxDesign, SparsifyReport)> {
        let p = &self.problem;
        let opts = SparsifyOptions {
            seed: self.seed,
            restarts: self.cfg.sparsify.restarts,
            system: p.system,
            exec: self.exec,
        };
        sparsify(&p.spec, &p.interest, p.criterion, xi_star, &p.constraints, &opts).context("sparsify")
    }

    /// Sparsifies the design in `design`, or the optimal product design.
    pub fn run_sparsify(&self, design: Option<&Path>, out: &Path) -> Result<Report> {
        let xi_star = match design {
            Some(path) => self.read_approx(path)?,
            None => self.optimum()?.design.clone(),
        };
        let (xs, rep) = self.sparsify(&xi_star)?;
        DesignFile::from_approx(&xs, self.problem.spec.v2()).write(&out.join("sparse.csv"))?;
        let mut r = Report::new(format!("sparsify {}", self.name()));
        r.line("rows", rep.rows.to_string())
            .line("rank", rep.rank.to_string())
            .line("guaranteed zeros", rep.zero_guarantee.to_string())
            .line("input support", rep.input_support.to_string())
            .line("output support", rep.output_support.to_string())
            .line(
                "objective seed",
                rep.seed_used.map_or("none (input is a vertex)".into(), |s| s.to_string()),
            )
            .real("criterion input", rep.criterion_input)
            .real("criterion output", rep.criterion_output)
            .real("info difference", rep.info_difference)
            .real("transfer residual", rep.transfer_residual)
            .line("verified", "yes");
        write_report(out, "sparsify.txt", &r)?;
        Ok(r)
    }

    /// Rounds `xi` with the configured method. Efficient rounding with too
    /// few trials yields efficiency 0 and no design.
    pub fn round(&self, xi: &ApproxDesign, n: u64) -> Result<Rounded> {
        let p = &self.problem;
        let rounding = self.cfg.rounding.clone().unwrap_or_default();
        let exact = match rounding.method {
            RoundingMethod::Argmax => stratum_argmax_round(xi, &covariate_strata(xi.v1(), xi.d())),
            RoundingMethod::Efficient => match rounding.ties {
                TieBreak::LowestIndex => efficient_round(xi, n),
                TieBreak::Criterion => efficient_round_by(xi, n, |counts| {
                    ExactDesign::new(xi.v1(), xi.d(), counts.to_vec())
                        .and_then(|e| e.to_approx())
                        .and_then(|a| design_value(&p.spec, &a, &p.interest, p.criterion))
                        .unwrap_or(f64::NEG_INFINITY)
                }),
            },
        };
        let exact = match exact {
            Ok(e) => e,
            Err(DesignError::TooFewTrials { .. }) => {
                return Ok(Rounded {
                    n,
                    design: None,
                    efficiency: 0.0,
                })
            }
            Err(e) => return Err(e).context("round"),
        };
        let reference = &self.optimum()?.design;
        let eff = efficiency(&p.spec, &exact, reference, &p.interest, p.criterion).context("efficiency")?;
        Ok(Rounded {
            n: exact.n(),
            design: Some(exact),
            efficiency: eff,
        })
    }

    /// Trial counts to round to: the flag, else the config's list.
    pub fn trial_counts(&self, flag: Option<u64>) -> Result<Vec<u64>> {
        let method = self.cfg.rounding.as_ref().map(|r| r.method).unwrap_or_default();
        match (flag, method) {
            (Some(n), _) => Ok(vec![n]),
            (None, RoundingMethod::Argmax) => Ok(vec![self.problem.spec.d() as u64]),
            (None, RoundingMethod::Efficient) => match self.cfg.rounding.as_ref().map(|r| r.n.clone()) {
                Some(ns) if !ns.is_empty() => Ok(ns),
                _ => Err(CliError::Config("no trial count: pass --n or set rounding.n".into())),
            },
        }
    }

    pub fn run_round(&self, design: Option<&Path>, n: Option<u64>, out: &Path) -> Result<Report> {
        let xi = match design {
            Some(path) => self.read_approx(path)?,
            None => self.optimum()?.design.clone(),
        };
        let mut r = Report::new(format!("round {}", self.name()));
        for n in self.trial_counts(n)? {
            let rounded = self.round(&xi, n)?;
            match &rounded.design {
                Some(e) => {
                    let file = format!("exact_n{}.csv", rounded.n);
                    DesignFile::from_exact(e, self.problem.spec.v2()).write(&out.join(&file))?;
                    r.line(
                        format!("n={}", rounded.n),
                        format!("efficiency {} support {} -> {file}", sig(rounded.efficiency), e.support_size()),
                    );
                }
                None => {
                    r.line(
                        format!("n={n}"),
                        format!("efficiency 0 (support {} exceeds n)", xi.support_size()),
                    );
                }
            }
        }
        write_report(out, "round.txt", &r)?;
        Ok(r)
    }

    /// Checks that `xi` inherits the optimality of the product optimum; a
    /// failing design is also projected onto its system on its own support.
    pub fn verify(&self, xi: &ApproxDesign) -> Result<Verification> {
        let p = &self.problem;
        let sol = self.optimum()?;
        let (w, a) = sol.design.marginals();
        let cs = theorem3_constraints(&p.spec, &p.interest, &w, &a)
            .and_then(|cs| cs.with_user(&p.constraints))
            .context("verify")?;
        let check = |xi: &ApproxDesign| -> Result<Verification> {
            let residual = transfer_residual(&p.spec, xi, &w, &a, &p.interest).context("verify")?;
            let constraint_residual = cs.residual(xi.weights());
            let value = design_value(&p.spec, xi, &p.interest, p.criterion).context("verify")?;
            let criterion_ratio = value / sol.criterion_value;
            Ok(Verification {
                residual,
                constraint_residual,
                criterion_ratio,
                passed: residual <= VERIFY_TOL
                    && constraint_residual <= VERIFY_TOL
                    && (criterion_ratio - 1.0).abs() <= VERIFY_TOL,
                snapped: None,
            })
        };
        let mut v = check(xi)?;
        if !v.passed {
            if let Ok((snapped, moved)) = optdesign::sparsify::refine_on_support(&cs, xi) {
                v.snapped = Some((moved, Box::new(check(&snapped)?)));
            }
        }
        Ok(v)
    }

    pub fn run_verify(&self, design: &Path, out: &Path) -> Result<Report> {
        let xi = self.read_approx(design)?;
        let v = self.verify(&xi)?;
        let mut r = Report::new(format!("verify {}", self.name()));
        r.line("design", design.display().to_string()).line("support", xi.support_size().to_string());
        describe(&mut r, "", &v);
        if let Some((moved, s)) = &v.snapped {
            r.real("snapped: largest move", *moved);
            describe(&mut r, "snapped: ", s);
        }
        r.line("result", if v.accepted() { "pass" } else { "FAIL" });
        write_report(out, "verify.txt", &r)?;
        if !v.accepted() {
            return Err(CliError::Verification(format!(
                "{} does not inherit the optimality of the product design (transfer residual {})",
                design.display(),
                sig(v.residual)
            )));
        }
        Ok(r)
    }

    /// `(v2, w1*)` over the configured covariate-dimension range; the model
    /// is rebuilt with the first factor's levels repeated `v2` times.
    pub fn fig1(&self) -> Result<Vec<(usize, f64)>> {
        let [lo, hi] = self
            .cfg
            .figures
            .as_ref()
            .and_then(|f| f.v2_range)
            .ok_or_else(|| CliError::Config("figures.v2_range is not set".into()))?;
        let levels = match &self.cfg.model.covariates {
            CovariateConfig::Factorial(l) if !l.is_empty() => l[0].clone(),
            _ => return Err(CliError::Config("the v2 sweep needs factorial covariates".into())),
        };
        if lo == 0 || lo > hi {
            return Err(CliError::Config(format!("bad v2 range [{lo}, {hi}]")));
        }
        let dims: Vec<usize> = (lo..=hi).collect();
        let rows = par::try_map(self.exec, &dims, |&v2| {
            let mut cfg = self.cfg.clone();
            cfg.model.covariates = CovariateConfig::Factorial(vec![levels.clone(); v2]);
            cfg.constraints.clear();
            let problem = cfg.build()?;
            let sol = optimal_product_with(&problem.spec, &problem.interest, problem.criterion, None, &self.solver)
                .context(&format!("v2 = {v2}"))?;
            Ok::<_, CliError>((v2, sol.treatment.weights[0]))
        })?;
        Ok(rows)
    }

    /// `(n, product efficiency, non-product efficiency)` over the configured
    /// range of trial counts.
    pub fn fig2(&self) -> Result<Vec<(u64, f64, f64)>> {
        let figures = self.cfg.figures.as_ref();
        let [lo, hi] = figures
            .and_then(|f| f.n_range)
            .ok_or_else(|| CliError::Config("figures.n_range is not set".into()))?;
        if lo == 0 || lo > hi {
            return Err(CliError::Config(format!("bad n range [{lo}, {hi}]")));
        }
        let product = self.optimum()?.design.clone();
        let nonproduct = match figures.and_then(|f| f.nonproduct_design.as_ref()) {
            Some(path) => self.read_approx(&self.cfg.resolve(path))?,
            None => self.sparsify(&product)?.0,
        };
        let ns: Vec<u64> = (lo..=hi).collect();
        par::try_map(self.exec, &ns, |&n| {
            Ok((n, self.round(&product, n)?.efficiency, self.round(&nonproduct, n)?.efficiency))
        })
    }

    pub fn run_figures(&self, out: &Path) -> Result<Report> {
        let figures = self
            .cfg
            .figures
            .as_ref()
            .ok_or_else(|| CliError::Config("no figures block in the config".into()))?;
        let mut r = Report::new(format!("figures {}", self.name()));
        if figures.v2_range.is_some() {
            let rows = self.fig1()?;
            let mut csv = String::from("v2,w1\n");
            for (v2, w1) in &rows {
                csv.push_str(&format!("{v2},{w1:.16e}\n"));
            }
            write_text(&out.join("fig1.csv"), &csv)?;
            r.line("fig1.csv", format!("{} rows", rows.len()));
        }
        if figures.n_range.is_some() {
            let rows = self.fig2()?;
            let mut csv = String::from("n,eff_product,eff_nonproduct\n");
            for (n, a, b) in &rows {
                csv.push_str(&format!("{n},{a:.16e},{b:.16e}\n"));
            }
            write_text(&out.join("fig2.csv"), &csv)?;
            r.line("fig2.csv", format!("{} rows", rows.len()));
        }
        write_report(out, "figures.txt", &r)?;
        Ok(r)
    }

    fn read_approx(&self, path: &Path) -> Result<ApproxDesign> {
        let f = DesignFile::read(path)?;
        let spec = &self.problem.spec;
        if f.v1 != spec.v1() || f.d != spec.d() {
            return Err(CliError::Config(format!(
                "{} is a {}x{} design, the model is {}x{}",
                path.display(),
                f.v1,
                f.d,
                spec.v1(),
                spec.d()
            )));
        }
        if f.kind == Kind::Exact {
            log::info!("{}: exact counts are normalized to weights", path.display());
        }
        f.to_approx().context(&path.display().to_string())
    }

    fn name(&self) -> &str {
        self.cfg.name.as_deref().unwrap_or("job")
    }
}

fn describe(r: &mut Report, prefix: &str, v: &Verification) {
    r.real(format!("{prefix}transfer residual"), v.residual)
        .real(format!("{prefix}constraint residual"), v.constraint_residual)
        .real(format!("{prefix}criterion ratio"), v.criterion_ratio)
        .line(format!("{prefix}within {}", sig(VERIFY_TOL)), if v.passed { "yes" } else { "no" });
}

fn write_vector(path: &Path, index: &str, values: &[f64]) -> Result<()> {
    let mut csv = format!("{index},value\n");
    for (j, v) in values.iter().enumerate() {
        csv.push_str(&format!("{},{v:.16e}\n", j + 1));
    }
    write_text(path, &csv)
}

fn write_report(out: &Path, file: &str, r: &Report) -> Result<()> {
    write_text(&out.join(file), &r.render())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}
