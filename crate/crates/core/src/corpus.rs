//! Trail data, state spaces and sparse first-order transition counts.
//!
//! A trail is a sequence of at least two successive states. The state space is
//! the set of distinct tokens the trails traverse, sorted lexicographically, and
//! optionally augmented with a synthetic reset state appended at the end. When
//! the reset state is present every trail is counted as if it started there,
//! which contributes one `reset -> first` transition per trail.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Display label of the synthetic reset state. Never matched by token lookup.
pub const RESET_LABEL: &str = "<reset>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    states: Vec<String>,
    index: HashMap<String, u32>,
    reset_index: Option<u32>,
}

impl StateSpace {
    /// Collects the distinct tokens of `raw_trails`, sorted, with an optional
    /// reset state appended as the last index.
    pub fn build<S: AsRef<str>>(raw_trails: &[Vec<S>], reset: bool) -> Result<Self> {
        if raw_trails.is_empty() {
            return Err(Error::InvalidInput("empty trail corpus".into()));
        }
        for (n, trail) in raw_trails.iter().enumerate() {
            if trail.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "trail {} has {} state(s); a trail needs at least 2",
                    n + 1,
                    trail.len()
                )));
            }
        }
        let mut tokens: Vec<String> = raw_trails
            .iter()
            .flatten()
            .map(|t| t.as_ref().to_owned())
            .collect();
        tokens.sort_unstable();
        tokens.dedup();
        Self::from_tokens(tokens, reset)
    }

    /// Builds a state space from already distinct tokens; they are sorted here.
    pub fn from_tokens(mut tokens: Vec<String>, reset: bool) -> Result<Self> {
        tokens.sort_unstable();
        let before = tokens.len();
        tokens.dedup();
        if tokens.len() != before {
            return Err(Error::InvalidInput("duplicate state identifiers".into()));
        }
        if tokens.is_empty() {
            return Err(Error::InvalidInput("state space is empty".into()));
        }
        if tokens.len() >= u32::MAX as usize {
            return Err(Error::InvalidInput("state space too large".into()));
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let reset_index = reset.then_some(tokens.len() as u32);
        Ok(StateSpace {
            states: tokens,
            index,
            reset_index,
        })
    }

    /// Number of states including the reset state.
    pub fn len(&self) -> usize {
        self.states.len() + usize::from(self.reset_index.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of states that occur in the raw trails.
    pub fn observed_len(&self) -> usize {
        self.states.len()
    }

    pub fn reset_index(&self) -> Option<u32> {
        self.reset_index
    }

    pub fn index_of(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn label(&self, i: u32) -> &str {
        match self.states.get(i as usize) {
            Some(s) => s,
            None if Some(i) == self.reset_index => RESET_LABEL,
            None => panic!("state index {i} out of range"),
        }
    }

    /// Observed (non-reset) state tokens in index order.
    pub fn tokens(&self) -> &[String] {
        &self.states
    }
}

/// A trail of state indices, at least two steps long.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Trail(Vec<u32>);

impl Trail {
    pub fn new(steps: Vec<u32>) -> Result<Self> {
        if steps.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "trail has {} state(s); a trail needs at least 2",
                steps.len()
            )));
        }
        Ok(Trail(steps))
    }

    pub fn steps(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrailCorpus {
    space: StateSpace,
    trails: Vec<Trail>,
}

impl TrailCorpus {
    pub fn from_raw<S: AsRef<str>>(raw_trails: &[Vec<S>], reset: bool) -> Result<Self> {
        let space = StateSpace::build(raw_trails, reset)?;
        let trails = raw_trails
            .iter()
            .map(|t| {
                let steps = t
                    .iter()
                    .map(|tok| space.index_of(tok.as_ref()).expect("token in state space"))
                    .collect();
                Trail(steps)
            })
            .collect();
        Ok(TrailCorpus { space, trails })
    }

    /// Wraps index trails over an existing state space. Trails may not step
    /// into the reset state; it is implicit at every trail start.
    pub fn from_indexed(space: StateSpace, trails: Vec<Trail>) -> Result<Self> {
        let bound = space.observed_len() as u32;
        for (n, t) in trails.iter().enumerate() {
            if let Some(&bad) = t.steps().iter().find(|&&s| s >= bound) {
                return Err(Error::InvalidInput(format!(
                    "trail {}: state index {bad} out of range for {bound} observed states",
                    n + 1
                )));
            }
        }
        if trails.is_empty() {
            return Err(Error::InvalidInput("empty trail corpus".into()));
        }
        Ok(TrailCorpus { space, trails })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn trails(&self) -> &[Trail] {
        &self.trails
    }

    /// Token form of the corpus, suitable for [`write_trail_file`].
    pub fn to_raw(&self) -> Vec<Vec<String>> {
        self.trails
            .iter()
            .map(|t| {
                t.steps()
                    .iter()
                    .map(|&s| self.space.label(s).to_owned())
                    .collect()
            })
            .collect()
    }
}

/// Parses the trail text format: one trail per line, tab-separated tokens,
/// `#` comment lines and blank lines ignored.
pub fn parse_trails(text: &str, path: &Path) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let tokens: Vec<String> = line.split('\t').map(str::to_owned).collect();
        if tokens.iter().any(|t| t.is_empty()) {
            return Err(Error::parse(path, n + 1, "empty state token"));
        }
        if tokens.len() < 2 {
            return Err(Error::parse(path, n + 1, "trail shorter than 2 states"));
        }
        out.push(tokens);
    }
    if out.is_empty() {
        return Err(Error::parse(path, 0, "no trails in file"));
    }
    Ok(out)
}

pub fn read_trail_file(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trails(&text, path)
}

pub fn format_trails(raw: &[Vec<String>]) -> String {
    let mut s = String::new();
    for t in raw {
        s.push_str(&t.join("\t"));
        s.push('\n');
    }
    s
}

pub fn write_trail_file(path: &Path, raw: &[Vec<String>]) -> Result<()> {
    fs::write(path, format_trails(raw)).map_err(|e| Error::io(path, e))
}

/// Sparse `m x m` matrix of observed transition counts, stored row-compressed
/// with columns sorted inside each row. Zero counts are never stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    m: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    counts: Vec<u64>,
    row_sums: Vec<u64>,
}

impl TransitionCounts {
    /// Builds counts from `(i, j, n)` triplets; duplicates are summed and zero
    /// counts dropped.
    pub fn from_triplets<I>(m: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, u64)>,
    {
        let mut map: HashMap<(u32, u32), u64> = HashMap::new();
        for (i, j, n) in triplets {
            if i as usize >= m || j as usize >= m {
                return Err(Error::InvalidInput(format!(
                    "transition ({i}, {j}) out of range for m={m}"
                )));
            }
            if n > 0 {
                *map.entry((i, j)).or_insert(0) += n;
            }
        }
        Ok(Self::from_map(m, map))
    }

    fn from_map(m: usize, map: HashMap<(u32, u32), u64>) -> Self {
        let mut entries: Vec<((u32, u32), u64)> = map.into_iter().collect();
        entries.sort_unstable_by_key(|e| e.0);
        let mut row_ptr = vec![0usize; m + 1];
        let mut row_sums = vec![0u64; m];
        let mut cols = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        for ((i, j), n) in entries {
            row_ptr[i as usize + 1] += 1;
            row_sums[i as usize] += n;
            cols.push(j);
            counts.push(n);
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }
        TransitionCounts {
            m,
            row_ptr,
            cols,
            counts,
            row_sums,
        }
    }

    /// All-zero counts over `m` states.
    pub fn empty(m: usize) -> Self {
        Self::from_map(m, HashMap::new())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn total(&self) -> u64 {
        self.row_sums.iter().sum()
    }

    pub fn row_sums(&self) -> &[u64] {
        &self.row_sums
    }

    /// Stored columns and counts of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[u64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.counts[r])
    }

    pub fn get(&self, i: u32, j: u32) -> u64 {
        let (cols, counts) = self.row(i as usize);
        cols.binary_search(&j).map(|p| counts[p]).unwrap_or(0)
    }

    /// Stored `(i, j, n)` entries in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, u64)> + '_ {
        (0..self.m).flat_map(move |i| {
            let (cols, counts) = self.row(i);
            cols.iter().zip(counts).map(move |(&j, &n)| (i as u32, j, n))
        })
    }

    /// FNV-1a over `m` and the sorted count triplets. Two count matrices with
    /// the same fingerprint are treated as the same dataset.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(PRIME);
            }
        };
        feed(self.m as u64);
        for (i, j, n) in self.iter() {
            feed(u64::from(i));
            feed(u64::from(j));
            feed(n);
        }
        h
    }

    /// TSV export: header `m=<int>` then `i<TAB>j<TAB>count` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("m={}\n", self.m);
        for (i, j, n) in self.iter() {
            let _ = writeln!(s, "{i}\t{j}\t{n}");
        }
        s
    }

    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let m = match lines.next() {
            Some((_, header)) => {
                parse_m_header(header).ok_or_else(|| Error::parse(path, 1, "expected header 'm=<int>'"))?
            }
            None => return Err(Error::parse(path, 1, "empty counts file")),
        };
        let mut triplets = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let parsed = match f.as_slice() {
                [i, j, c] => i
                    .parse::<u32>()
                    .ok()
                    .zip(j.parse::<u32>().ok())
                    .zip(c.parse::<u64>().ok())
                    .map(|((i, j), c)| (i, j, c)),
                _ => None,
            };
            let t = parsed.ok_or_else(|| Error::parse(path, n + 1, "expected i<TAB>j<TAB>count"))?;
            if t.0 as usize >= m || t.1 as usize >= m {
                return Err(Error::parse(path, n + 1, "index out of range"));
            }
            triplets.push(t);
        }
        Self::from_triplets(m, triplets)
    }
}

pub(crate) fn parse_m_header(line: &str) -> Option<usize> {
    line.trim().strip_prefix("m=")?.parse().ok()
}

/// Counts adjacent pairs over all trails. With `reset`, each trail also
/// contributes one transition from the reset state into its first state.
pub fn count_transitions(corpus: &TrailCorpus, reset: bool) -> Result<TransitionCounts> {
    let space = corpus.space();
    let reset_state = match (reset, space.reset_index()) {
        (true, Some(r)) => Some(r),
        (true, None) => {
            return Err(Error::InvalidInput(
                "reset counting requested but the state space has no reset state".into(),
            ))
        }
        (false, _) => None,
    };
    let m = space.len();
    let bound = m as u32;

    let map = corpus
        .trails()
        .par_iter()
        .try_fold(HashMap::new, |mut acc: HashMap<(u32, u32), u64>, trail| {
            let steps = trail.steps();
            if let Some(&bad) = steps.iter().find(|&&s| s >= bound) {
                return Err(Error::InvalidInput(format!(
                    "state index {bad} out of range for m={m}"
                )));
            }
            if let Some(r) = reset_state {
                *acc.entry((r, steps[0])).or_insert(0) += 1;
            }
            for w in steps.windows(2) {
                *acc.entry((w[0], w[1])).or_insert(0) += 1;
            }
            Ok(acc)
        })
        .try_reduce(HashMap::new, |a, b| {
            let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
            for (k, v) in small {
                *big.entry(k).or_insert(0) += v;
            }
            Ok(big)
        })?;

    Ok(TransitionCounts::from_map(m, map))
}
