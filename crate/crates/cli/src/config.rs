//! JSON job configuration.
//!
//! A config names a model, an interest system, a criterion and optional
//! constraints, rounding and figure settings. Presets are expanded into
//! matrices by [`JobConfig::build`].

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Deserialize;

use optdesign::criteria::Criterion;
use optdesign::model::{factorial_covariates, onehot_covariates, presets, InterestSpec, ModelSpec};
use optdesign::sparsify::{Sense, System, UserConstraint};

use crate::error::{io_err, CliError, Context, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub model: ModelConfig,
    pub interest: InterestConfig,
    pub criterion: CriterionConfig,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    #[serde(default)]
    pub rounding: Option<RoundingConfig>,
    #[serde(default)]
    pub sparsify: SparsifyConfig,
    #[serde(default)]
    pub figures: Option<FiguresConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Directory of the config file; relative paths inside it resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub lambda: Vec<f64>,
    pub covariates: CovariateConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovariateConfig {
    /// Full factorial over the given level lists.
    Factorial(Vec<Vec<f64>>),
    /// One-hot coding of crossed qualitative factors with these level counts.
    #[serde(alias = "onehot")]
    OneHot(Vec<usize>),
    /// `g(k)` listed row by row.
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterestConfig {
    pub q1: MatrixPreset,
    pub k: MatrixPreset,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum MatrixPreset {
    Named(String),
    Explicit { explicit: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CriterionConfig {
    P(f64),
    Named(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintConfig {
    /// `sum_i xi(i, k) = value`, `k` 1-based.
    CovariateMarginal { k: usize, value: f64 },
    /// `sum_i xi(i, k) = 1/d` for every `k`.
    UniformCovariateMarginals,
    /// `sum_k xi(i, k) = value`, `i` 1-based.
    TreatmentMarginal { i: usize, value: f64 },
    /// `coeffs . xi (sense) rhs`, coefficients in cell order.
    Linear { coeffs: Vec<f64>, sense: String, rhs: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingMethod {
    #[default]
    Efficient,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Criterion,
    LowestIndex,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundingConfig {
    #[serde(default)]
    pub n: Vec<u64>,
    #[serde(default)]
    pub method: RoundingMethod,
    #[serde(default)]
    pub ties: TieBreak,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparsifyConfig {
    pub restarts: usize,
    pub system: String,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            restarts: 16,
            system: "transfer".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresConfig {
    /// Inclusive range of covariate dimensions for the `w1*` sweep.
    #[serde(default)]
    pub v2_range: Option<[usize; 2]>,
    /// Inclusive range of trial counts for the efficiency sweep.
    #[serde(default)]
    pub n_range: Option<[u64; 2]>,
    /// Non-product design for the efficiency sweep; the sparsified optimum
    /// is used when absent.
    #[serde(default)]
    pub nonproduct_design: Option<PathBuf>,
}

/// A config with every preset expanded.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ModelSpec,
    pub interest: InterestSpec,
    pub criterion: Criterion,
    pub constraints: Vec<UserConstraint>,
    /// Covariate marginal pinned by the constraints, if they pin all of it.
    pub fixed_alpha: Option<Vec<f64>>,
    pub system: System,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: JobConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn build(&self) -> Result<Problem> {
        let g = self.model.covariates.g_matrix()?;
        let spec = ModelSpec::new(self.model.lambda.clone(), g).context("model")?;
        let interest = self.interest_for(&spec)?;
        let criterion = self.criterion.parse()?;
        let (constraints, fixed_alpha) = self.constraints(&spec)?;
        let system = match self.sparsify.system.as_str() {
            "transfer" => System::Transfer,
            "moment-matching" => System::MomentMatching,
            other => return Err(CliError::Config(format!("unknown sparsify system {other:?}"))),
        };
        Ok(Problem {
            spec,
            interest,
            criterion,
            constraints,
            fixed_alpha,
            system,
        })
    }

    pub fn interest_for(&self, spec: &ModelSpec) -> Result<InterestSpec> {
        let v1 = spec.v1();
        let v2 = spec.v2();
        let q1 = match &self.interest.q1 {
            MatrixPreset::Named(n) => match n.as_str() {
                "control" => presets::control_contrasts(v1),
                "centered" => presets::centering(v1),
                other => return Err(CliError::Config(format!("unknown q1 preset {other:?}"))),
            },
            MatrixPreset::Explicit { explicit } => rows_to_matrix(explicit, "q1")?,
        };
        let k = match &self.interest.k {
            MatrixPreset::Named(n) => match n.as_str() {
                "identity" => DMatrix::identity(v2, v2),
                "none" => presets::no_covariates(v2),
                "centered-groups" => match &self.model.covariates {
                    CovariateConfig::OneHot(sizes) => presets::centered_groups(sizes),
                    _ => {
                        return Err(CliError::Config(
                            "k preset \"centered-groups\" needs one-hot covariates".into(),
                        ))
                    }
                },
                other => return Err(CliError::Config(format!("unknown k preset {other:?}"))),
            },
            MatrixPreset::Explicit { explicit } => rows_to_matrix(explicit, "k")?,
        };
        if q1.nrows() != v1 {
            return Err(CliError::Config(format!("q1 has {} rows, expected {v1}", q1.nrows())));
        }
        if k.nrows() != v2 {
            return Err(CliError::Config(format!("k has {} rows, expected {v2}", k.nrows())));
        }
        let interest = InterestSpec::new(q1, k).context("interest")?;
        interest.check_model(spec).context("interest")?;
        Ok(interest)
    }

    fn constraints(&self, spec: &ModelSpec) -> Result<(Vec<UserConstraint>, Option<Vec<f64>>)> {
        let (v1, d) = (spec.v1(), spec.d());
        let mut rows = Vec::new();
        let mut alpha: Vec<Option<f64>> = vec![None; d];
        let mut pin = |k: usize, value: f64, rows: &mut Vec<UserConstraint>| {
            alpha[k] = Some(value);
            rows.push(UserConstraint::covariate_marginal(v1, d, k, value));
        };
        for c in &self.constraints {
            match c {
                ConstraintConfig::CovariateMarginal { k, value } => {
                    if *k == 0 || *k > d {
                        return Err(CliError::Config(format!("covariate index {k} outside 1..={d}")));
                    }
                    pin(k - 1, *value, &mut rows);
                }
                ConstraintConfig::UniformCovariateMarginals => {
                    for k in 0..d {
                        pin(k, 1.0 / d as f64, &mut rows);
                    }
                }
                ConstraintConfig::TreatmentMarginal { i, value } => {
                    if *i == 0 || *i > v1 {
                        return Err(CliError::Config(format!("treatment index {i} outside 1..={v1}")));
                    }
                    rows.push(UserConstraint::treatment_marginal(v1, d, i - 1, *value));
                }
                ConstraintConfig::Linear { coeffs, sense, rhs } => {
                    if coeffs.len() != v1 * d {
                        return Err(CliError::Config(format!(
                            "linear constraint has {} coefficients, expected {}",
                            coeffs.len(),
                            v1 * d
                        )));
                    }
                    let sense = match sense.as_str() {
                        "=" | "==" | "eq" => Sense::Eq,
                        "<=" | "le" => Sense::Le,
                        ">=" | "ge" => Sense::Ge,
                        other => return Err(CliError::Config(format!("unknown sense {other:?}"))),
                    };
                    rows.push(UserConstraint::new(coeffs.clone(), sense, *rhs));
                }
            }
        }
        let fixed = alpha.iter().copied().collect::<Option<Vec<f64>>>();
        if let Some(a) = &fixed {
            let total: f64 = a.iter().sum();
            if (total - 1.0).abs() > 1e-9 || a.iter().any(|&x| x < 0.0) {
                return Err(CliError::Config(format!(
                    "pinned covariate marginals must be a probability vector (sum {total})"
                )));
            }
        }
        Ok((rows, fixed))
    }
}

impl CovariateConfig {
    pub fn g_matrix(&self) -> Result<DMatrix<f64>> {
        match self {
            CovariateConfig::Factorial(levels) => factorial_covariates(levels).context("covariates"),
            CovariateConfig::OneHot(sizes) => onehot_covariates(sizes).context("covariates"),
            CovariateConfig::Explicit(rows) => rows_to_matrix(rows, "covariates.explicit"),
        }
    }
}

impl CriterionConfig {
    pub fn parse(&self) -> Result<Criterion> {
        let p = match self {
            CriterionConfig::P(p) => *p,
            CriterionConfig::Named(s) => match s.as_str() {
                "D" | "d" => 0.0,
                "A" | "a" => -1.0,
                "E" | "e" | "-inf" => f64::NEG_INFINITY,
                other => other
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("unknown criterion {other:?}")))?,
            },
        };
        Criterion::new(p).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!("{what}: rows have different lengths")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}
