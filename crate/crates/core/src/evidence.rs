//! Marginal likelihood of first-order Markov chain data under Dirichlet
//! priors, Bayes factors and the resulting ranking of hypotheses.
//!
//! For counts `n` and hyperparameters `alpha`, each row `i` contributes
//!
//! ```text
//! lnG(A_i) - lnG(A_i + N_i) + sum_j [ lnG(n_ij + alpha_ij) - lnG(alpha_ij) ]
//! ```
//!
//! with `A_i = sum_j alpha_ij` and `N_i = sum_j n_ij`. Cells with `n_ij = 0`
//! cancel exactly, so only stored counts are visited and rows without data
//! contribute nothing.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TransitionCounts;
use crate::elicitation::{Prior, PriorOrigin};
use crate::error::{Error, Result};

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Log marginal likelihood of one dataset under one prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEvidence {
    pub hypothesis: String,
    /// Weighting factor of the prior (`k` for elicited priors, `c` for toys).
    pub k: u64,
    pub value: f64,
    pub fingerprint: u64,
    pub prior: PriorOrigin,
}

fn prior_weight(origin: PriorOrigin) -> u64 {
    match origin {
        PriorOrigin::TrialRoulette { k, .. } => k,
        PriorOrigin::UniformToy { c } | PriorOrigin::AlignedToy { c } | PriorOrigin::OpposingToy { c } => c,
    }
}

/// Sparse evaluation of the log marginal likelihood.
pub fn log_evidence_value(n: &TransitionCounts, prior: &Prior) -> Result<f64> {
    if n.m() != prior.m() {
        return Err(Error::Dimension(format!(
            "counts have m={} but the prior has m={}",
            n.m(),
            prior.m()
        )));
    }
    let row_sums = n.row_sums();
    let rows: Vec<usize> = (0..n.m()).filter(|&i| row_sums[i] > 0).collect();
    // collected in row order so the final sum is independent of scheduling
    let terms: Vec<f64> = rows.par_iter().map(|&i| row_term(n, prior, i)).collect();
    Ok(terms.iter().sum())
}

fn row_term(n: &TransitionCounts, prior: &Prior, i: usize) -> f64 {
    let flat = prior.flat_offset();
    let a = prior.row_alpha_sum(i) as f64;
    let total = n.row_sums()[i] as f64;
    let (ncols, ncounts) = n.row(i);
    let (pcols, pextra) = prior.extra_row(i);
    let mut p = 0;
    let mut cells = 0.0;
    for (&j, &c) in ncols.iter().zip(ncounts) {
        while p < pcols.len() && pcols[p] < j {
            p += 1;
        }
        let extra = if p < pcols.len() && pcols[p] == j {
            pextra[p]
        } else {
            0
        };
        let alpha = (flat + extra) as f64;
        cells += ln_gamma(c as f64 + alpha) - ln_gamma(alpha);
    }
    ln_gamma(a) - ln_gamma(a + total) + cells
}

/// Log evidence of `n` under `prior`, labelled for comparison.
pub fn log_evidence(n: &TransitionCounts, prior: &Prior, hypothesis: &str) -> Result<LogEvidence> {
    Ok(LogEvidence {
        hypothesis: hypothesis.to_owned(),
        k: prior_weight(prior.origin()),
        value: log_evidence_value(n, prior)?,
        fingerprint: n.fingerprint(),
        prior: prior.origin(),
    })
}

/// `ln B = ln P(D|H1) - ln P(D|H2)`; both evidences must come from the same
/// data and weighting factor.
pub fn log_bayes_factor(e1: &LogEvidence, e2: &LogEvidence) -> Result<f64> {
    if e1.fingerprint != e2.fingerprint {
        return Err(Error::Incomparable(format!(
            "'{}' and '{}' were computed on different data ({:016x} vs {:016x})",
            e1.hypothesis, e2.hypothesis, e1.fingerprint, e2.fingerprint
        )));
    }
    if e1.k != e2.k {
        return Err(Error::Incomparable(format!(
            "'{}' has k={} but '{}' has k={}",
            e1.hypothesis, e1.k, e2.hypothesis, e2.k
        )));
    }
    Ok(e1.value - e2.value)
}

/// Kass and Raftery bands on the `2 ln B` scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strength {
    /// `2 ln B < 2`
    Negligible,
    /// `2 <= 2 ln B < 6`
    Positive,
    /// `6 <= 2 ln B < 10`
    Strong,
    /// `2 ln B >= 10`
    Decisive,
}

impl Strength {
    pub fn as_str(self) -> &'static str {
        match self {
            Strength::Negligible => "negligible",
            Strength::Positive => "positive",
            Strength::Strong => "strong",
            Strength::Decisive => "decisive",
        }
    }
}

impl fmt::Display for Strength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strength of a log Bayes factor; the sign only says which side it favours.
pub fn interpret_strength(log_b: f64) -> Strength {
    let two_ln_b = 2.0 * log_b.abs();
    if two_ln_b >= 10.0 {
        Strength::Decisive
    } else if two_ln_b >= 6.0 {
        Strength::Strong
    } else if two_ln_b >= 2.0 {
        Strength::Positive
    } else {
        Strength::Negligible
    }
}

/// Hypotheses whose pairwise Bayes factors are not significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankClass {
    pub hypotheses: Vec<String>,
    pub log_evidence: Vec<f64>,
}

/// Partial order over hypotheses at one weighting factor, most plausible first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRanking {
    pub k: u64,
    pub classes: Vec<RankClass>,
}

impl HypothesisRanking {
    pub fn top(&self) -> &RankClass {
        &self.classes[0]
    }
}

/// Sorts evidences descending and merges neighbours whose Bayes factor is
/// negligible into one class.
pub fn rank_hypotheses(evidences: &[LogEvidence]) -> Result<HypothesisRanking> {
    let first = evidences
        .first()
        .ok_or_else(|| Error::InvalidInput("no evidences to rank".into()))?;
    for e in &evidences[1..] {
        log_bayes_factor(first, e)?;
    }
    let mut order: Vec<&LogEvidence> = evidences.iter().collect();
    order.sort_by(|a, b| b.value.total_cmp(&a.value));

    let mut classes: Vec<RankClass> = Vec::new();
    let mut prev: Option<f64> = None;
    for e in order {
        let merge = prev.is_some_and(|p| interpret_strength(p - e.value) == Strength::Negligible);
        match classes.last_mut() {
            Some(class) if merge => {
                class.hypotheses.push(e.hypothesis.clone());
                class.log_evidence.push(e.value);
            }
            _ => classes.push(RankClass {
                hypotheses: vec![e.hypothesis.clone()],
                log_evidence: vec![e.value],
            }),
        }
        prev = Some(e.value);
    }
    Ok(HypothesisRanking { k: first.k, classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elicitation::{aligned_toy_prior, opposing_toy_prior, uniform_toy_prior};

    fn ln_factorial(n: u64) -> f64 {
        (2..=n).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn ln_gamma_integers_and_half_integers() {
        for n in 1..=400u64 {
            let exact = ln_factorial(n - 1);
            let got = ln_gamma(n as f64);
            let err = (got - exact).abs();
            assert!(err <= 1e-12 * exact.abs().max(1.0), "n={n}: {got} vs {exact}");
        }
        // G(n + 1/2) = (2n)! / (4^n n!) * sqrt(pi)
        let half_pi = 0.5 * std::f64::consts::PI.ln();
        for n in 0..=100u64 {
            let exact = ln_factorial(2 * n) - (n as f64) * 4f64.ln() - ln_factorial(n) + half_pi;
            let got = ln_gamma(n as f64 + 0.5);
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "n={n}");
        }
        // Stirling series for a large argument
        let x: f64 = 1.0e7;
        let stirling = (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + 1.0 / (12.0 * x);
        assert!((ln_gamma(x) - stirling).abs() / stirling < 1e-13);
    }

    #[test]
    fn two_state_flat_prior() {
        let n = TransitionCounts::from_triplets(2, [(0, 0, 2), (0, 1, 1), (1, 1, 1)]).unwrap();
        let p = uniform_toy_prior(2, 0);
        let v = log_evidence_value(&n, &p).unwrap();
        assert!((v - (1.0f64 / 24.0).ln()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn empty_counts_give_zero() {
        let n = TransitionCounts::empty(4);
        for p in [uniform_toy_prior(4, 3), opposing_toy_prior(&n, 2)] {
            assert_eq!(log_evidence_value(&n, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn toy_priors_agree_at_zero_and_split_after() {
        let n = TransitionCounts::from_triplets(3, [(0, 1, 5), (1, 2, 3), (2, 0, 1), (2, 2, 4)]).unwrap();
        let z = [
            log_evidence_value(&n, &uniform_toy_prior(3, 0)).unwrap(),
            log_evidence_value(&n, &aligned_toy_prior(&n, 0)).unwrap(),
            log_evidence_value(&n, &opposing_toy_prior(&n, 0)).unwrap(),
        ];
        assert!(z[0] == z[1] && z[1] == z[2]);
        let mut last = (z[1], z[2]);
        for c in [1, 3, 5] {
            let a = log_evidence_value(&n, &aligned_toy_prior(&n, c)).unwrap();
            let o = log_evidence_value(&n, &opposing_toy_prior(&n, c)).unwrap();
            assert!(a > last.0 && o < last.1);
            last = (a, o);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let n = TransitionCounts::empty(3);
        assert!(matches!(
            log_evidence_value(&n, &uniform_toy_prior(2, 0)),
            Err(Error::Dimension(_))
        ));
    }

    fn ev(h: &str, v: f64) -> LogEvidence {
        LogEvidence {
            hypothesis: h.into(),
            k: 1,
            value: v,
            fingerprint: 9,
            prior: PriorOrigin::TrialRoulette { k: 1, seed: 0 },
        }
    }

    #[test]
    fn bayes_factor_checks_metadata() {
        let a = ev("a", -10.0);
        let b = ev("b", -14.0);
        assert_eq!(log_bayes_factor(&a, &a).unwrap(), 0.0);
        assert_eq!(log_bayes_factor(&a, &b).unwrap(), 4.0);
        assert_eq!(log_bayes_factor(&b, &a).unwrap(), -4.0);
        let mut c = ev("c", -1.0);
        c.fingerprint = 10;
        assert!(matches!(log_bayes_factor(&a, &c), Err(Error::Incomparable(_))));
        let mut d = ev("d", -1.0);
        d.k = 2;
        assert!(log_bayes_factor(&a, &d).is_err());
    }

    #[test]
    fn strength_bands() {
        assert_eq!(interpret_strength(0.0), Strength::Negligible);
        assert_eq!(interpret_strength(0.99), Strength::Negligible);
        assert_eq!(interpret_strength(1.0), Strength::Positive);
        assert_eq!(interpret_strength(3.5), Strength::Strong);
        assert_eq!(interpret_strength(-3.5), Strength::Strong);
        assert_eq!(interpret_strength(5.0), Strength::Decisive);
        assert_eq!(interpret_strength(25.0), Strength::Decisive);
    }

    #[test]
    fn ranking_merges_negligible_neighbours() {
        let r = rank_hypotheses(&[ev("only", -3.0)]).unwrap();
        assert_eq!(r.classes.len(), 1);

        let r = rank_hypotheses(&[ev("a", -5.0), ev("b", -5.0)]).unwrap();
        assert_eq!(r.classes.len(), 1);
        assert_eq!(r.classes[0].hypotheses.len(), 2);

        let r = rank_hypotheses(&[ev("low", -50.0), ev("top", -1.0), ev("near", -1.5)]).unwrap();
        assert_eq!(r.classes.len(), 2);
        assert_eq!(r.top().hypotheses, vec!["top", "near"]);
        assert_eq!(r.classes[1].hypotheses, vec!["low"]);

        assert!(rank_hypotheses(&[]).is_err());
    }
}
