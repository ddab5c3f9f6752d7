//! Dirichlet prior elicitation.
//!
//! [`trial_roulette`] spends a chip budget of `m^2 + k*m^2` pseudo counts:
//! one chip on every cell (the flat prior), then `k*m^2` informative chips
//! split proportionally to the hypothesis matrix. Proportional shares are
//! floored first; the chips lost to flooring go one at a time to the cells
//! with the largest fractional parts, ties broken by a seeded shuffle.
//!
//! The toy priors (uniform, empirically aligned, empirically opposing) are
//! reference points for how prior placement moves the evidence.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{StateSpace, TransitionCounts};
use crate::error::{Error, Result};
use crate::hypothesis::{Diagonal, HypothesisMatrix};

/// Scaled shares this close to an integer are treated as that integer, so
/// that e.g. a uniform matrix never floors to `k - 1` through rounding noise.
const SNAP_TOLERANCE: f64 = 1e-9;

/// How a prior was produced; carried into exports and run manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum PriorOrigin {
    TrialRoulette { k: u64, seed: u64 },
    UniformToy { c: u64 },
    AlignedToy { c: u64 },
    OpposingToy { c: u64 },
}

/// Dirichlet hyperparameters `alpha[i][j] = flat_offset + extra[i][j]`.
///
/// `extra` is stored row-compressed and only holds positive chip counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prior {
    m: usize,
    flat_offset: u64,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    extra: Vec<u64>,
    row_extra: Vec<u64>,
    origin: PriorOrigin,
}

impl Prior {
    fn from_rows(m: usize, flat_offset: u64, rows: Vec<Vec<(u32, u64)>>, origin: PriorOrigin) -> Self {
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut extra = Vec::with_capacity(nnz);
        let mut row_extra = Vec::with_capacity(m);
        row_ptr.push(0);
        for row in rows {
            let mut sum = 0u64;
            for (j, c) in row {
                if c > 0 {
                    cols.push(j);
                    extra.push(c);
                    sum += c;
                }
            }
            row_extra.push(sum);
            row_ptr.push(cols.len());
        }
        Prior {
            m,
            flat_offset,
            row_ptr,
            cols,
            extra,
            row_extra,
            origin,
        }
    }

    /// Flat prior: every hyperparameter equal to `flat_offset`.
    pub fn flat(m: usize, flat_offset: u64, origin: PriorOrigin) -> Self {
        Self::from_rows(m, flat_offset, vec![Vec::new(); m], origin)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn flat_offset(&self) -> u64 {
        self.flat_offset
    }

    pub fn origin(&self) -> PriorOrigin {
        self.origin
    }

    /// Columns and chip counts above the flat offset in row `i`.
    pub fn extra_row(&self, i: usize) -> (&[u32], &[u64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.extra[r])
    }

    pub fn extra(&self, i: u32, j: u32) -> u64 {
        let (cols, extra) = self.extra_row(i as usize);
        cols.binary_search(&j).map(|p| extra[p]).unwrap_or(0)
    }

    pub fn alpha(&self, i: u32, j: u32) -> u64 {
        self.flat_offset + self.extra(i, j)
    }

    /// `sum_j alpha[i][j]`.
    pub fn row_alpha_sum(&self, i: usize) -> u64 {
        self.m as u64 * self.flat_offset + self.row_extra[i]
    }

    /// Total chips above the flat offset.
    pub fn total_extra(&self) -> u64 {
        self.row_extra.iter().sum()
    }

    pub fn nnz_extra(&self) -> usize {
        self.cols.len()
    }

    pub fn iter_extra(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        (0..self.m).flat_map(move |i| {
            let (cols, extra) = self.extra_row(i);
            cols.iter().zip(extra).map(move |(&j, &c)| (i as u32, j, c))
        })
    }

    /// Export of the cells above the flat offset as `i<TAB>j<TAB>alpha`.
    pub fn to_tsv(&self) -> String {
        let mut s = match self.origin {
            PriorOrigin::TrialRoulette { k, seed } => {
                format!("m={} flat={} k={k} seed={seed}\n", self.m, self.flat_offset)
            }
            PriorOrigin::UniformToy { c }
            | PriorOrigin::AlignedToy { c }
            | PriorOrigin::OpposingToy { c } => {
                format!("m={} flat={} c={c}\n", self.m, self.flat_offset)
            }
        };
        for (i, j, c) in self.iter_extra() {
            let _ = writeln!(s, "{i}\t{j}\t{}", self.flat_offset + c);
        }
        s
    }
}

/// Chip budget `total = flat + informative = m^2 + k*m^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipBudget {
    pub m: u64,
    pub k: u64,
    pub total: u64,
    pub flat: u64,
    pub informative: u64,
}

impl ChipBudget {
    pub fn new(m: usize, k: u64) -> Result<Self> {
        let m = m as u64;
        let overflow = || Error::InvalidInput(format!("chip budget overflows for m={m}, k={k}"));
        let flat = m.checked_mul(m).ok_or_else(overflow)?;
        let informative = flat.checked_mul(k).ok_or_else(overflow)?;
        let total = flat.checked_add(informative).ok_or_else(overflow)?;
        Ok(ChipBudget {
            m,
            k,
            total,
            flat,
            informative,
        })
    }
}

/// Intermediate quantities of one [`trial_roulette`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct RouletteTrace {
    pub budget: ChipBudget,
    /// `(i, j, share)` where `share = q / |Q|_1 * k*m^2`, in row-major order.
    pub scaled: Vec<(u32, u32, f64)>,
    /// Chips placed by flooring the scaled shares.
    pub floor_chips: u64,
    /// Chips placed by the fractional-part ranking.
    pub remainder_chips: u64,
    /// Whole passes over every stored cell, only nonzero when the remainder
    /// exceeds the number of stored cells.
    pub full_cycles: u64,
    /// Cells that received one ranked remainder chip, row-major.
    pub remainder_cells: Vec<(u32, u32)>,
}

/// Elicits a Dirichlet prior from `q` with weighting factor `k`.
pub fn trial_roulette(q: &HypothesisMatrix, k: u64, seed: u64) -> Result<Prior> {
    roulette(q, k, seed, false).map(|(p, _)| p)
}

/// [`trial_roulette`] that also reports the scaled shares and chip split.
pub fn trial_roulette_traced(q: &HypothesisMatrix, k: u64, seed: u64) -> Result<(Prior, RouletteTrace)> {
    roulette(q, k, seed, true).map(|(p, t)| (p, t.expect("trace requested")))
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= SNAP_TOLERANCE {
        r
    } else {
        x
    }
}

fn roulette(
    q: &HypothesisMatrix,
    k: u64,
    seed: u64,
    want_trace: bool,
) -> Result<(Prior, Option<RouletteTrace>)> {
    let m = q.m();
    let budget = ChipBudget::new(m, k)?;
    let origin = PriorOrigin::TrialRoulette { k, seed };
    let flat_trace = || RouletteTrace {
        budget,
        scaled: Vec::new(),
        floor_chips: 0,
        remainder_chips: 0,
        full_cycles: 0,
        remainder_cells: Vec::new(),
    };
    if k == 0 {
        return Ok((Prior::flat(m, 1, origin), want_trace.then(flat_trace)));
    }
    if q.is_empty() {
        return Err(Error::Degenerate(
            "hypothesis matrix has no positive entries".into(),
        ));
    }
    let norm = q.l1_norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::InvalidInput(format!(
            "hypothesis l1 norm {norm} is not finite"
        )));
    }

    let informative = budget.informative as f64;
    let vals = q.values();
    let nnz = vals.len();
    let mut chips = Vec::with_capacity(nnz);
    let mut fracs = Vec::with_capacity(nnz);
    let mut floor_chips = 0u64;
    for &v in vals {
        let share = snap(v * informative / norm);
        let whole = share.floor();
        chips.push(whole as u64);
        fracs.push(share - whole);
        floor_chips += whole as u64;
    }
    if floor_chips > budget.informative {
        return Err(Error::InvalidInput(format!(
            "floored shares ({floor_chips}) exceed the informative budget ({})",
            budget.informative
        )));
    }
    let remainder = budget.informative - floor_chips;
    let full_cycles = remainder / nnz as u64;
    let mut left = (remainder % nnz as u64) as usize;
    if full_cycles > 0 {
        chips.iter_mut().for_each(|c| *c += full_cycles);
    }

    let mut ranked_flags = want_trace.then(|| vec![false; nnz]);
    if left > 0 {
        let mut order: Vec<u32> = (0..nnz as u32).collect();
        order.sort_unstable_by(|&a, &b| fracs[b as usize].total_cmp(&fracs[a as usize]).then(a.cmp(&b)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut start = 0;
        while left > 0 {
            let f = fracs[order[start] as usize];
            let end = start
                + order[start..]
                    .iter()
                    .take_while(|&&e| fracs[e as usize] == f)
                    .count();
            let group = &order[start..end];
            let mut award = |e: u32| {
                chips[e as usize] += 1;
                if let Some(flags) = ranked_flags.as_mut() {
                    flags[e as usize] = true;
                }
            };
            if group.len() <= left {
                group.iter().for_each(|&e| award(e));
                left -= group.len();
            } else {
                for pick in sample(&mut rng, group.len(), left).into_iter() {
                    award(group[pick]);
                }
                left = 0;
            }
            start = end;
        }
    }

    let row_ptr = q.row_ptr();
    let cols = q.cols();
    let rows: Vec<Vec<(u32, u64)>> = (0..m)
        .map(|i| {
            (row_ptr[i]..row_ptr[i + 1])
                .map(|e| (cols[e], chips[e]))
                .collect()
        })
        .collect();
    let prior = Prior::from_rows(m, 1, rows, origin);
    debug_assert_eq!(prior.total_extra(), budget.informative);

    let trace = ranked_flags.map(|flags| {
        let entries: Vec<(u32, u32, f64)> = q.iter().collect();
        RouletteTrace {
            budget,
            scaled: entries
                .iter()
                .map(|&(i, j, v)| (i, j, v * informative / norm))
                .collect(),
            floor_chips,
            remainder_chips: remainder,
            full_cycles,
            remainder_cells: entries
                .iter()
                .zip(&flags)
                .filter(|(_, &f)| f)
                .map(|(&(i, j, _), _)| (i, j))
                .collect(),
        }
    });
    Ok((prior, trace))
}

/// `alpha = 1 + c` everywhere.
pub fn uniform_toy_prior(m: usize, c: u64) -> Prior {
    Prior::flat(m, 1 + c, PriorOrigin::UniformToy { c })
}

/// `alpha = 1 + c` on observed transitions, 1 elsewhere.
pub fn aligned_toy_prior(n: &TransitionCounts, c: u64) -> Prior {
    let m = n.m();
    let rows = (0..m)
        .map(|i| n.row(i).0.iter().map(|&j| (j, c)).collect())
        .collect();
    Prior::from_rows(m, 1, rows, PriorOrigin::AlignedToy { c })
}

/// `alpha = 1 + c` on unobserved transitions, 1 on observed ones.
pub fn opposing_toy_prior(n: &TransitionCounts, c: u64) -> Prior {
    let m = n.m();
    let origin = PriorOrigin::OpposingToy { c };
    if c == 0 {
        return Prior::flat(m, 1, origin);
    }
    let rows = (0..m)
        .map(|i| {
            let seen = n.row(i).0;
            let mut p = 0;
            (0..m as u32)
                .filter(|&j| {
                    if p < seen.len() && seen[p] == j {
                        p += 1;
                        false
                    } else {
                        true
                    }
                })
                .map(|j| (j, c))
                .collect()
        })
        .collect();
    Prior::from_rows(m, 1, rows, origin)
}

/// What a hypothesis says about leaving the reset state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResetRow {
    /// Reset row gets the smallest positive `q` on every observed column.
    #[default]
    UniformRow,
    /// Reset row left empty.
    ZeroRow,
}

impl std::str::FromStr for ResetRow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-row" => Ok(ResetRow::UniformRow),
            "zero-row" => Ok(ResetRow::ZeroRow),
            other => Err(Error::InvalidInput(format!("unknown reset-row policy '{other}'"))),
        }
    }
}

/// Widens a hypothesis over the observed states to the full state space.
/// The reset column is always left empty.
pub fn embed_reset(q: HypothesisMatrix, space: &StateSpace, policy: ResetRow) -> Result<HypothesisMatrix> {
    let observed = space.observed_len();
    if q.m() != observed {
        return Err(Error::Dimension(format!(
            "hypothesis has m={} but the state space has {observed} observed states",
            q.m()
        )));
    }
    if space.reset_index().is_none() {
        return Ok(q);
    }
    let mut rows: Vec<Vec<(u32, f64)>> = (0..observed)
        .map(|i| {
            let (c, v) = q.row(i);
            c.iter().copied().zip(v.iter().copied()).collect()
        })
        .collect();
    let reset_row = match (policy, q.min_positive()) {
        (ResetRow::UniformRow, Some(fill)) => (0..observed as u32).map(|j| (j, fill)).collect(),
        _ => Vec::new(),
    };
    rows.push(reset_row);
    let diagonal = match q.diagonal() {
        Diagonal::Constant(_) => Diagonal::Builder,
        d => d,
    };
    Ok(HypothesisMatrix::from_sorted_rows(observed + 1, rows, diagonal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypothesis::{self_loop_hypothesis, uniform_hypothesis};

    /// Geographic example over restaurants A..E (indices 0..4).
    pub(crate) fn geo_example() -> HypothesisMatrix {
        let (a, b, c, d, e) = (0, 1, 2, 3, 4);
        HypothesisMatrix::from_triplets(
            5,
            [
                (b, c, 1.0),
                (c, b, 1.0),
                (d, e, 1.0),
                (e, d, 1.0),
                (a, c, 0.9),
                (c, a, 0.9),
                (a, b, 0.7),
                (b, a, 0.7),
            ],
            Diagonal::Absent,
        )
        .unwrap()
    }

    #[test]
    fn geo_example_chip_split() {
        let q = geo_example();
        let (prior, trace) = trial_roulette_traced(&q, 1, 7).unwrap();
        assert_eq!(trace.budget.total, 50);
        assert_eq!(trace.budget.informative, 25);
        let ab = trace.scaled.iter().find(|e| (e.0, e.1) == (0, 1)).unwrap().2;
        assert!((ab - 2.43).abs() < 0.005, "{ab}");
        assert_eq!(trace.floor_chips, 22);
        assert_eq!(trace.remainder_chips, 3);
        assert_eq!(trace.remainder_cells.len(), 3);
        let tied = [(1, 2), (2, 1), (3, 4), (4, 3)];
        assert!(trace.remainder_cells.iter().all(|c| tied.contains(c)));
        assert_eq!(prior.alpha(0, 1), 3);
        assert_eq!(prior.alpha(0, 3), 1);
        assert_eq!(prior.total_extra(), 25);
    }

    #[test]
    fn every_tied_cell_can_lose_the_draw() {
        let q = geo_example();
        let tied = [(1u32, 2u32), (2, 1), (3, 4), (4, 3)];
        let mut missed = std::collections::HashSet::new();
        for seed in 0..64 {
            let (p, _) = trial_roulette_traced(&q, 1, seed).unwrap();
            for &(i, j) in &tied {
                let a = p.alpha(i, j);
                assert!(a == 4 || a == 5);
                if a == 4 {
                    missed.insert((i, j));
                }
            }
        }
        assert_eq!(missed.len(), 4);
    }

    #[test]
    fn k_zero_is_flat() {
        let p = trial_roulette(&geo_example(), 0, 1).unwrap();
        assert_eq!(p.total_extra(), 0);
        assert_eq!(p.flat_offset(), 1);
        let empty = HypothesisMatrix::from_triplets(3, [], Diagonal::Absent).unwrap();
        assert!(trial_roulette(&empty, 0, 1).is_ok());
        assert!(matches!(trial_roulette(&empty, 1, 1), Err(Error::Degenerate(_))));
    }

    #[test]
    fn single_entry_takes_all_chips() {
        let q = HypothesisMatrix::from_triplets(3, [(1, 2, 0.3)], Diagonal::Absent).unwrap();
        let (p, t) = trial_roulette_traced(&q, 2, 0).unwrap();
        assert_eq!(p.alpha(1, 2), 19);
        assert_eq!(t.remainder_chips, 0);
        assert_eq!(p.nnz_extra(), 1);
    }

    #[test]
    fn remainder_goes_to_largest_fraction() {
        // shares 112/9 = 12.44 and 32/9 = 3.56: 15 floored, 1 left for (1, 1)
        let q = HypothesisMatrix::from_triplets(2, [(0, 0, 3.5), (1, 1, 1.0)], Diagonal::Absent).unwrap();
        let (p, t) = trial_roulette_traced(&q, 4, 0).unwrap();
        assert_eq!(p.total_extra(), 16);
        assert_eq!((p.alpha(0, 0), p.alpha(1, 1)), (13, 5));
        assert_eq!(t.full_cycles, 0);
        assert_eq!(t.remainder_cells, vec![(1, 1)]);
    }

    #[test]
    fn uniform_hypothesis_gives_row_uniform_prior() {
        for k in [1, 2, 5] {
            let p = trial_roulette(&uniform_hypothesis(6), k, 3).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    assert_eq!(p.alpha(i, j), 1 + k);
                }
            }
        }
    }

    #[test]
    fn self_loop_prior_only_on_diagonal() {
        let p = trial_roulette(&self_loop_hypothesis(4), 3, 9).unwrap();
        for (i, j, _) in p.iter_extra() {
            assert_eq!(i, j);
        }
        assert_eq!(p.alpha(0, 1), 1);
        assert_eq!(p.alpha(2, 2), 1 + 12);
    }

    #[test]
    fn toy_priors() {
        let n = TransitionCounts::from_triplets(2, [(0, 0, 2), (0, 1, 1), (1, 1, 1)]).unwrap();
        let u = uniform_toy_prior(2, 5);
        assert_eq!(u.alpha(0, 1), 6);
        assert_eq!(u.alpha(1, 0), 6);
        let a = aligned_toy_prior(&n, 3);
        assert_eq!((a.alpha(0, 0), a.alpha(1, 0)), (4, 1));
        let o = opposing_toy_prior(&n, 3);
        assert_eq!((o.alpha(0, 0), o.alpha(1, 0)), (1, 4));
        for p in [
            uniform_toy_prior(2, 0),
            aligned_toy_prior(&n, 0),
            opposing_toy_prior(&n, 0),
        ] {
            assert_eq!(p.total_extra(), 0);
            assert_eq!(p.flat_offset(), 1);
        }
    }

    #[test]
    fn reset_embedding() {
        let space = StateSpace::from_tokens(vec!["a".into(), "b".into()], true).unwrap();
        let q = HypothesisMatrix::from_triplets(2, [(0, 1, 2.0), (1, 0, 0.5)], Diagonal::Absent).unwrap();
        let e = embed_reset(q.clone(), &space, ResetRow::UniformRow).unwrap();
        assert_eq!(e.m(), 3);
        assert_eq!(e.get(2, 0), 0.5);
        assert_eq!(e.get(2, 1), 0.5);
        assert_eq!(e.get(2, 2), 0.0);
        assert_eq!(e.get(0, 2), 0.0);
        let z = embed_reset(q.clone(), &space, ResetRow::ZeroRow).unwrap();
        assert_eq!(z.row(2).0.len(), 0);
        let no_reset = StateSpace::from_tokens(vec!["a".into(), "b".into()], false).unwrap();
        assert_eq!(
            embed_reset(q.clone(), &no_reset, ResetRow::UniformRow).unwrap(),
            q
        );
        let wrong = StateSpace::from_tokens(vec!["a".into()], true).unwrap();
        assert!(matches!(
            embed_reset(q, &wrong, ResetRow::UniformRow),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn prior_export_header() {
        let p = trial_roulette(&geo_example(), 1, 42).unwrap();
        let tsv = p.to_tsv();
        assert!(tsv.starts_with("m=5 flat=1 k=1 seed=42\n"));
        assert_eq!(tsv.lines().count(), 1 + 8);
    }
}
