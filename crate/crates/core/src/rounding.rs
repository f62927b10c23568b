//! Approximate to exact designs.

use crate::error::{DesignError, Result};
use crate::model::{ApproxDesign, ExactDesign, SUPPORT_TOL};

/// Ratios closer than this (relatively) count as ties.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundingReport {
    pub method: String,
    pub n: u64,
    pub support_used: usize,
    pub efficiency: f64,
}

/// Efficient rounding of `xi` to `n` trials, ties to the lowest index.
pub fn efficient_round(xi: &ApproxDesign, n: u64) -> Result<ExactDesign> {
    apportion(xi, n, None)
}

/// Efficient rounding where tied candidates are resolved by the largest
/// `score` of the resulting counts (then lowest index).
pub fn efficient_round_by<F>(xi: &ApproxDesign, n: u64, score: F) -> Result<ExactDesign>
where
    F: Fn(&[u64]) -> f64,
{
    apportion(xi, n, Some(&score))
}

type Score<'a> = &'a dyn Fn(&[u64]) -> f64;

fn apportion(xi: &ApproxDesign, n: u64, score: Option<Score>) -> Result<ExactDesign> {
    let w = xi.weights();
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > SUPPORT_TOL).collect();
    let l = support.len();
    if (n as usize) < l || n == 0 {
        return Err(DesignError::TooFewTrials { n, support: l });
    }
    let mut counts = vec![0u64; w.len()];
    let base = n as f64 - l as f64 / 2.0;
    for &j in &support {
        counts[j] = ((base * w[j]).ceil() as u64).max(1);
    }
    let mut total: u64 = counts.iter().sum();

    while total != n {
        let up = total < n;
        let ratio = |j: usize, c: &[u64]| {
            if up {
                c[j] as f64 / w[j]
            } else {
                (c[j] as f64 - 1.0) / w[j]
            }
        };
        let eligible = support.iter().copied().filter(|&j| up || counts[j] > 1);
        // incrementing targets the smallest ratio, decrementing the largest
        let key = |j: usize| if up { -ratio(j, &counts) } else { ratio(j, &counts) };
        let best = eligible.clone().map(key).fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = eligible
            .filter(|&j| {
                let k = key(j);
                (best - k).abs() <= TIE_TOL * best.abs().max(1.0)
            })
            .collect();
        let pick = match (score, tied.len()) {
            (Some(score), len) if len > 1 => {
                let mut chosen = tied[0];
                let mut chosen_score = f64::NEG_INFINITY;
                for &j in &tied {
                    let mut trial = counts.clone();
                    if up {
                        trial[j] += 1;
                    } else {
                        trial[j] -= 1;
                    }
                    let s = score(&trial);
                    let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
                    if s > chosen_score {
                        chosen = j;
                        chosen_score = s;
                    }
                }
                chosen
            }
            _ => tied[0],
        };
        if up {
            counts[pick] += 1;
            total += 1;
        } else {
            counts[pick] -= 1;
            total -= 1;
        }
    }
    ExactDesign::new(xi.v1(), xi.d(), counts)
}

/// One stratum per covariate point `k`, holding cells `(i, k)` in treatment
/// order.
pub fn covariate_strata(v1: usize, d: usize) -> Vec<Vec<usize>> {
    (0..d).map(|k| (0..v1).map(|i| i * d + k).collect()).collect()
}

/// One trial per stratum at its largest cell, ties to the first listed cell.
pub fn stratum_argmax_round(xi: &ApproxDesign, strata: &[Vec<usize>]) -> Result<ExactDesign> {
    let cells = xi.weights().len();
    let mut seen = vec![false; cells];
    for (s, stratum) in strata.iter().enumerate() {
        if stratum.is_empty() {
            return Err(DesignError::BadStrata(format!("stratum {} is empty", s + 1)));
        }
        for &j in stratum {
            if j >= cells {
                return Err(DesignError::BadStrata(format!(
                    "cell {j} in stratum {} is out of range",
                    s + 1
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(DesignError::BadStrata(format!("cell {j} appears twice")));
            }
        }
    }
    if let Some(j) = seen.iter().position(|&s| !s) {
        return Err(DesignError::BadStrata(format!("cell {j} is in no stratum")));
    }
    let w = xi.weights();
    let mut counts = vec![0u64; cells];
    for stratum in strata {
        let mut best = stratum[0];
        for &j in &stratum[1..] {
            if w[j] > w[best] {
                best = j;
            }
        }
        counts[best] += 1;
    }
    ExactDesign::new(xi.v1(), xi.d(), counts)
}
