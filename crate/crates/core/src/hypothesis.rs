//! Hypothesis matrices over the observed states of a trail corpus.
//!
//! A hypothesis is a sparse nonnegative matrix `Q` whose entry `q[i][j]`
//! expresses how strongly one believes in the transition `i -> j`. Only the
//! relative magnitudes matter; elicitation normalizes `Q` before turning it
//! into pseudo counts. Builders here never see the reset state; see
//! [`crate::elicitation::embed_reset`] for how a matrix is widened to a
//! reset-augmented state space.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_m_header, StateSpace};
use crate::error::{Error, Result};

/// Mean Earth radius in kilometres used by [`haversine_km`].
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Similarity cut-off the cosine builder uses unless told otherwise.
pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.1;

/// How the diagonal of a hypothesis matrix was populated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Diagonal {
    /// No diagonal entries.
    Absent,
    /// Every diagonal cell set to this value.
    Constant(f64),
    /// Diagonal follows the builder's own rule (uniform, self-loop, file input).
    Builder,
}

/// Sparse hypothesis matrix in row-compressed form. Stored values are finite
/// and strictly positive; columns are sorted within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisMatrix {
    m: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    diagonal: Diagonal,
}

impl HypothesisMatrix {
    /// Builds a matrix from `(i, j, q)` triplets. Zero weights are dropped;
    /// negative, non-finite or duplicate entries are rejected.
    pub fn from_triplets<I>(m: usize, triplets: I, diagonal: Diagonal) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32, f64)>,
    {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
        for (i, j, q) in triplets {
            if i as usize >= m || j as usize >= m {
                return Err(Error::Dimension(format!(
                    "hypothesis entry ({i}, {j}) out of range for m={m}"
                )));
            }
            if !q.is_finite() || q < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "hypothesis entry ({i}, {j}) has invalid weight {q}"
                )));
            }
            if q > 0.0 {
                rows[i as usize].push((j, q));
            }
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|e| e.0);
            if let Some(w) = row.windows(2).find(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidInput(format!(
                    "duplicate hypothesis entry ({i}, {})",
                    w[0].0
                )));
            }
        }
        Ok(Self::from_sorted_rows(m, rows, diagonal))
    }

    /// Rows must already be sorted by column, duplicate free and positive.
    pub(crate) fn from_sorted_rows(m: usize, rows: Vec<Vec<(u32, f64)>>, diagonal: Diagonal) -> Self {
        debug_assert_eq!(rows.len(), m);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (j, q) in row {
                debug_assert!(q > 0.0 && q.is_finite());
                cols.push(j);
                vals.push(q);
            }
            row_ptr.push(cols.len());
        }
        HypothesisMatrix {
            m,
            row_ptr,
            cols,
            vals,
            diagonal,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn diagonal(&self) -> Diagonal {
        self.diagonal
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        let (cols, vals) = self.row(i as usize);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.m).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &q)| (i as u32, j, q))
        })
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.vals
    }

    pub(crate) fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub(crate) fn cols(&self) -> &[u32] {
        &self.cols
    }

    /// Sum of all stored entries.
    pub fn l1_norm(&self) -> f64 {
        self.vals.iter().sum()
    }

    pub fn min_positive(&self) -> Option<f64> {
        self.vals.iter().copied().reduce(f64::min)
    }

    /// Multiplies every entry by `c > 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidInput(format!("scale factor {c} must be positive")));
        }
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= c;
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(
                    "scaled hypothesis left the positive finite range".into(),
                ));
            }
        }
        Ok(out)
    }

    /// Hypothesis file body: header `m=<int>` then `state_i<TAB>state_j<TAB>weight`.
    pub fn to_tsv(&self, space: &StateSpace) -> String {
        let mut s = format!("m={}\n", self.m);
        for (i, j, q) in self.iter() {
            let _ = writeln!(s, "{}\t{}\t{}", space.label(i), space.label(j), q);
        }
        s
    }

    /// Parses a hypothesis file against the observed states of `space`.
    pub fn parse_tsv(text: &str, path: &Path, space: &StateSpace) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
        let m = match lines.next() {
            Some((n, header)) => parse_m_header(header)
                .ok_or_else(|| Error::parse(path, n + 1, "expected header 'm=<int>'"))?,
            None => return Err(Error::parse(path, 1, "empty hypothesis file")),
        };
        if m != space.observed_len() {
            return Err(Error::Dimension(format!(
                "{}: hypothesis declares m={m} but the trails have {} states",
                path.display(),
                space.observed_len()
            )));
        }
        let mut triplets = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let [a, b, w] = f.as_slice() else {
                return Err(Error::parse(
                    path,
                    n + 1,
                    "expected state_i<TAB>state_j<TAB>weight",
                ));
            };
            let lookup = |tok: &str| {
                space.index_of(tok).ok_or_else(|| {
                    Error::Dimension(format!(
                        "{}:{}: state '{tok}' is not in the trail state space",
                        path.display(),
                        n + 1
                    ))
                })
            };
            let (i, j) = (lookup(a)?, lookup(b)?);
            let q: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, n + 1, format!("bad weight '{w}'")))?;
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::parse(
                    path,
                    n + 1,
                    format!("weight must be positive, got {q}"),
                ));
            }
            triplets.push((i, j, q));
        }
        Self::from_triplets(m, triplets, Diagonal::Builder)
    }
}

/// Every transition equally likely, diagonal included.
pub fn uniform_hypothesis(m: usize) -> HypothesisMatrix {
    let rows = (0..m)
        .map(|_| (0..m as u32).map(|j| (j, 1.0)).collect())
        .collect();
    HypothesisMatrix::from_sorted_rows(m, rows, Diagonal::Builder)
}

/// Belief that a trail never leaves its current state.
pub fn self_loop_hypothesis(m: usize) -> HypothesisMatrix {
    let rows = (0..m as u32).map(|i| vec![(i, 1.0)]).collect();
    HypothesisMatrix::from_sorted_rows(m, rows, Diagonal::Builder)
}

/// Directed multigraph over the observed states of a corpus.
///
/// `in_degrees` may exceed the in-degree implied by `edges`: when a graph is
/// restricted to a state space, edges from outside the space still count
/// towards the in-degree of their targets.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    n: usize,
    /// Sorted `(src, dst, multiplicity)`.
    edges: Vec<(u32, u32, u32)>,
    in_degrees: Vec<u64>,
}

impl AdjacencyGraph {
    /// Graph over `n` nodes; parallel edges become multiplicities.
    pub fn new<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut in_degrees = vec![0u64; n];
        let mut mult: HashMap<(u32, u32), u32> = HashMap::new();
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::Dimension(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            *mult.entry((a, b)).or_insert(0) += 1;
            in_degrees[b as usize] += 1;
        }
        Ok(Self::assemble(n, mult, in_degrees))
    }

    /// Restricts a labelled edge list to the observed states of `space`.
    /// Edges whose endpoints both lie in the space are kept; in-degrees count
    /// every listed edge into a state, including edges from unobserved nodes.
    pub fn from_labeled<S: AsRef<str>>(space: &StateSpace, edges: &[(S, S)]) -> Self {
        let n = space.observed_len();
        let mut in_degrees = vec![0u64; n];
        let mut mult: HashMap<(u32, u32), u32> = HashMap::new();
        for (a, b) in edges {
            let Some(j) = space.index_of(b.as_ref()) else {
                continue;
            };
            in_degrees[j as usize] += 1;
            if let Some(i) = space.index_of(a.as_ref()) {
                *mult.entry((i, j)).or_insert(0) += 1;
            }
        }
        Self::assemble(n, mult, in_degrees)
    }

    fn assemble(n: usize, mult: HashMap<(u32, u32), u32>, in_degrees: Vec<u64>) -> Self {
        let mut edges: Vec<(u32, u32, u32)> = mult.into_iter().map(|((a, b), c)| (a, b, c)).collect();
        edges.sort_unstable();
        AdjacencyGraph { n, edges, in_degrees }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(u32, u32, u32)] {
        &self.edges
    }

    pub fn in_degrees(&self) -> &[u64] {
        &self.in_degrees
    }
}

/// Parses a `src<TAB>dst` edge list (`#` lines ignored) into labelled pairs.
pub fn parse_edge_list(text: &str, path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        match f.as_slice() {
            [a, b] | [a, b, _] if !a.is_empty() && !b.is_empty() => out.push((a.to_string(), b.to_string())),
            _ => return Err(Error::parse(path, n + 1, "expected src<TAB>dst")),
        }
    }
    Ok(out)
}

/// `q[i][j]` = number of edges `i -> j`; optional constant diagonal.
pub fn structural_hypothesis(g: &AdjacencyGraph, diagonal: f64) -> Result<HypothesisMatrix> {
    check_diagonal(diagonal)?;
    let mut triplets: Vec<(u32, u32, f64)> = g
        .edges
        .iter()
        .filter(|&&(a, b, _)| !(diagonal > 0.0 && a == b))
        .map(|&(a, b, c)| (a, b, f64::from(c)))
        .collect();
    let policy = if diagonal > 0.0 {
        triplets.extend((0..g.n as u32).map(|i| (i, i, diagonal)));
        Diagonal::Constant(diagonal)
    } else {
        Diagonal::Builder
    };
    HypothesisMatrix::from_triplets(g.n, triplets, policy)
}

/// `q[i][j]` = in-degree of `j` for every linked pair `i -> j`.
pub fn popularity_hypothesis(g: &AdjacencyGraph) -> Result<HypothesisMatrix> {
    if g.n == 0 {
        return Err(Error::InvalidInput(
            "popularity hypothesis needs a nonempty graph".into(),
        ));
    }
    let triplets = g
        .edges
        .iter()
        .map(|&(a, b, _)| (a, b, g.in_degrees[b as usize] as f64));
    HypothesisMatrix::from_triplets(g.n, triplets, Diagonal::Builder)
}

fn check_diagonal(d: f64) -> Result<()> {
    if d.is_finite() && d >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "diagonal value {d} must be finite and >= 0"
        )))
    }
}

/// Per-state features, one optional row per observed state.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureTable {
    Real(Vec<Option<Vec<f64>>>),
    Binary(Vec<Option<BTreeSet<String>>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Real,
    Binary,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        match self {
            FeatureTable::Real(r) => r.len(),
            FeatureTable::Binary(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses `state<TAB>f1,f2,...` (real) or `state<TAB>tag1;tag2;...`
    /// (binary). Rows for states outside `space` are skipped.
    pub fn parse_tsv(text: &str, path: &Path, space: &StateSpace, kind: FeatureKind) -> Result<Self> {
        let n = space.observed_len();
        let mut real: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut binary: Vec<Option<BTreeSet<String>>> = vec![None; n];
        let mut dim = None;
        for (ln, idx, rest) in keyed_rows(text, path, space)? {
            let seen = match kind {
                FeatureKind::Real => real[idx].is_some(),
                FeatureKind::Binary => binary[idx].is_some(),
            };
            if seen {
                return Err(Error::parse(path, ln, "duplicate state row"));
            }
            match kind {
                FeatureKind::Real => {
                    let v = rest
                        .split(',')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::parse(path, ln, format!("bad feature value: {e}")))?;
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::parse(path, ln, "non-finite feature value"));
                    }
                    match dim {
                        None => dim = Some(v.len()),
                        Some(d) if d != v.len() => {
                            return Err(Error::parse(
                                path,
                                ln,
                                format!("expected {d} features, found {}", v.len()),
                            ))
                        }
                        _ => {}
                    }
                    real[idx] = Some(v);
                }
                FeatureKind::Binary => {
                    let set = rest
                        .split(';')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(str::to_owned)
                        .collect();
                    binary[idx] = Some(set);
                }
            }
        }
        Ok(match kind {
            FeatureKind::Real => FeatureTable::Real(real),
            FeatureKind::Binary => FeatureTable::Binary(binary),
        })
    }
}

/// Yields `(line, state index, remainder)` for `state<TAB>...` rows.
fn keyed_rows<'a>(text: &'a str, path: &Path, space: &StateSpace) -> Result<Vec<(usize, usize, &'a str)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let Some((state, rest)) = line.split_once('\t') else {
            return Err(Error::parse(path, n + 1, "expected state<TAB>value"));
        };
        if let Some(i) = space.index_of(state) {
            out.push((n + 1, i as usize, rest));
        }
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity between real feature vectors, keeping pairs at or above
/// `threshold`. Returns the matrix and the states whose vectors have zero
/// norm; those states get no off-diagonal entries.
pub fn cosine_similarity_hypothesis(
    f: &FeatureTable,
    threshold: f64,
    diagonal: f64,
) -> Result<(HypothesisMatrix, Vec<u32>)> {
    let FeatureTable::Real(rows) = f else {
        return Err(Error::InvalidInput(
            "cosine similarity needs real-valued features".into(),
        ));
    };
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidInput(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    check_diagonal(diagonal)?;
    let norms: Vec<Option<f64>> = rows
        .iter()
        .map(|r| r.as_ref().map(|v| dot(v, v).sqrt()))
        .collect();
    let zero_norm: Vec<u32> = norms
        .iter()
        .enumerate()
        .filter(|(_, n)| matches!(n, Some(x) if *x == 0.0))
        .map(|(i, _)| i as u32)
        .collect();
    for &i in &zero_norm {
        log::warn!("state {i} has a zero-norm feature vector; its similarities are treated as 0");
    }
    let usable = |i: usize| match (&rows[i], norms[i]) {
        (Some(v), Some(n)) if n > 0.0 => Some((v.as_slice(), n)),
        _ => None,
    };
    let m = rows.len();
    let out_rows: Vec<Vec<(u32, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            let me = usable(i);
            for j in 0..m {
                if i == j {
                    if diagonal > 0.0 {
                        row.push((j as u32, diagonal));
                    }
                    continue;
                }
                let (Some((a, na)), Some((b, nb))) = (me, usable(j)) else {
                    continue;
                };
                let c = (dot(a, b) / (na * nb)).min(1.0);
                if c >= threshold && c > 0.0 {
                    row.push((j as u32, c));
                }
            }
            row
        })
        .collect();
    let policy = if diagonal > 0.0 {
        Diagonal::Constant(diagonal)
    } else {
        Diagonal::Absent
    };
    Ok((HypothesisMatrix::from_sorted_rows(m, out_rows, policy), zero_norm))
}

/// Jaccard similarity of tag sets; diagonal absent. Pairs of two empty sets
/// are skipped.
pub fn jaccard_similarity_hypothesis(f: &FeatureTable) -> Result<HypothesisMatrix> {
    let FeatureTable::Binary(rows) = f else {
        return Err(Error::InvalidInput(
            "jaccard similarity needs binary features".into(),
        ));
    };
    let m = rows.len();
    let out_rows = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::new();
            let Some(a) = &rows[i] else { return row };
            for (j, b) in rows.iter().enumerate() {
                let Some(b) = b else { continue };
                if i == j {
                    continue;
                }
                let inter = a.intersection(b).count();
                let union = a.len() + b.len() - inter;
                if inter > 0 {
                    row.push((j as u32, inter as f64 / union as f64));
                }
            }
            row
        })
        .collect();
    Ok(HypothesisMatrix::from_sorted_rows(m, out_rows, Diagonal::Absent))
}

/// Latitude/longitude in degrees per observed state.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoTable(Vec<Option<(f64, f64)>>);

impl GeoTable {
    pub fn new(coords: Vec<Option<(f64, f64)>>) -> Result<Self> {
        for (i, c) in coords.iter().enumerate() {
            if let Some((lat, lon)) = *c {
                if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                    return Err(Error::InvalidInput(format!(
                        "state {i}: coordinates ({lat}, {lon}) out of range"
                    )));
                }
            }
        }
        Ok(GeoTable(coords))
    }

    pub fn coords(&self) -> &[Option<(f64, f64)>] {
        &self.0
    }

    /// Parses `state<TAB>lat<TAB>lon` rows.
    pub fn parse_tsv(text: &str, path: &Path, space: &StateSpace) -> Result<Self> {
        let mut coords = vec![None; space.observed_len()];
        for (ln, idx, rest) in keyed_rows(text, path, space)? {
            let Some((lat, lon)) = rest.split_once('\t') else {
                return Err(Error::parse(path, ln, "expected state<TAB>lat<TAB>lon"));
            };
            let p = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, ln, format!("bad coordinate '{s}'")))
            };
            let (lat, lon) = (p(lat)?, p(lon)?);
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(Error::parse(path, ln, "coordinates out of range"));
            }
            if coords[idx].replace((lat, lon)).is_some() {
                return Err(Error::parse(path, ln, "duplicate state row"));
            }
        }
        GeoTable::new(coords)
    }
}

/// Great-circle distance in kilometres between two `(lat, lon)` points.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h =
        ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// `q[i][j] = 1 - d(i, j) / max d` over states that have coordinates.
pub fn geographic_hypothesis(geo: &GeoTable) -> Result<HypothesisMatrix> {
    let pts: Vec<(usize, (f64, f64))> = geo
        .0
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|c| (i, c)))
        .collect();
    proximity_hypothesis(
        geo.0.len(),
        &pts,
        |a, b| haversine_km(*a, *b),
        "all states are co-located",
    )
}

/// `q[i][j] = 1 - |v_i - v_j| / max difference` over states that have a value.
pub fn scalar_proximity_hypothesis(values: &[Option<f64>]) -> Result<HypothesisMatrix> {
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find_map(|(i, v)| v.filter(|x| !x.is_finite()).map(|x| (i, x)))
    {
        return Err(Error::InvalidInput(format!("state {i} has non-finite value {v}")));
    }
    let pts: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    proximity_hypothesis(values.len(), &pts, |a, b| (a - b).abs(), "all values are equal")
}

/// Parses `state<TAB>value` rows.
pub fn parse_scalar_table(text: &str, path: &Path, space: &StateSpace) -> Result<Vec<Option<f64>>> {
    let mut values = vec![None; space.observed_len()];
    for (ln, idx, rest) in keyed_rows(text, path, space)? {
        let v: f64 = rest
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, ln, format!("bad value '{rest}'")))?;
        if !v.is_finite() {
            return Err(Error::parse(path, ln, "non-finite value"));
        }
        if values[idx].replace(v).is_some() {
            return Err(Error::parse(path, ln, "duplicate state row"));
        }
    }
    Ok(values)
}

fn proximity_hypothesis<T: Sync>(
    m: usize,
    pts: &[(usize, T)],
    dist: impl Fn(&T, &T) -> f64 + Sync,
    degenerate: &str,
) -> Result<HypothesisMatrix> {
    if pts.len() < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 states with values, found {}",
            pts.len()
        )));
    }
    let max = pts
        .par_iter()
        .enumerate()
        .map(|(a, (_, pa))| {
            pts[a + 1..]
                .iter()
                .map(|(_, pb)| dist(pa, pb))
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::Degenerate(degenerate.to_owned()));
    }
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); m];
    let filled: Vec<(usize, Vec<(u32, f64)>)> = pts
        .par_iter()
        .map(|(i, pa)| {
            let row = pts
                .iter()
                .filter(|(j, _)| j != i)
                .filter_map(|(j, pb)| {
                    let q = 1.0 - dist(pa, pb) / max;
                    (q > 0.0).then_some((*j as u32, q))
                })
                .collect();
            (*i, row)
        })
        .collect();
    for (i, row) in filled {
        rows[i] = row;
    }
    Ok(HypothesisMatrix::from_sorted_rows(m, rows, Diagonal::Absent))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(v: &[&str]) -> Option<BTreeSet<String>> {
        Some(v.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn uniform_and_self_loop_shapes() {
        let u = uniform_hypothesis(2);
        assert_eq!(u.nnz(), 4);
        assert!(u.iter().all(|(_, _, q)| q == 1.0));
        assert_eq!(uniform_hypothesis(5).nnz(), 25);

        let s = self_loop_hypothesis(3);
        assert_eq!(s.nnz(), 3);
        assert!(s.iter().all(|(i, j, q)| i == j && q == 1.0));
    }

    #[test]
    fn structural_counts_parallel_edges() {
        let g = AdjacencyGraph::new(2, [(0, 1)]).unwrap();
        let q = structural_hypothesis(&g, 0.0).unwrap();
        assert_eq!(q.iter().collect::<Vec<_>>(), vec![(0, 1, 1.0)]);

        let g = AdjacencyGraph::new(2, [(0, 1), (0, 1)]).unwrap();
        assert_eq!(structural_hypothesis(&g, 0.0).unwrap().get(0, 1), 2.0);

        let q = structural_hypothesis(&g, 1.0).unwrap();
        assert_eq!(q.nnz(), 3);
        assert_eq!(q.get(1, 1), 1.0);
        assert_eq!(q.diagonal(), Diagonal::Constant(1.0));
    }

    #[test]
    fn popularity_uses_in_degree_of_target() {
        // star: spokes 1..=4 all point at hub 0, hub points at 1
        let g = AdjacencyGraph::new(5, [(1, 0), (2, 0), (3, 0), (4, 0), (0, 1)]).unwrap();
        let q = popularity_hypothesis(&g).unwrap();
        for s in 1..=4 {
            assert_eq!(q.get(s, 0), 4.0);
        }
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.nnz(), 5);
    }

    #[test]
    fn labeled_restriction_keeps_outside_in_degree() {
        let space = StateSpace::from_tokens(vec!["a".into(), "b".into()], false).unwrap();
        let edges = [("a", "b"), ("z", "b"), ("b", "z")];
        let g = AdjacencyGraph::from_labeled(&space, &edges);
        assert_eq!(g.edges(), &[(0, 1, 1)]);
        assert_eq!(g.in_degrees(), &[0, 2]);
    }

    #[test]
    fn cosine_threshold_and_zero_norm() {
        let f = FeatureTable::Real(vec![
            Some(vec![1.0, 0.0]),
            Some(vec![1.0, 0.0]),
            Some(vec![0.0, 1.0]),
            Some(vec![0.0, 0.0]),
            Some(vec![1.0, 0.05]),
        ]);
        let (q, zero) = cosine_similarity_hypothesis(&f, 0.1, 0.0).unwrap();
        assert_eq!(zero, vec![3]);
        assert!((q.get(0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(q.get(0, 2), 0.0); // orthogonal
        assert_eq!(q.get(4, 2), 0.0); // cos ~= 0.0499, below threshold
        assert!(q.iter().all(|(i, j, _)| i != 3 && j != 3));
        assert!(q.iter().all(|(i, j, _)| i != j));

        let (q1, _) = cosine_similarity_hypothesis(&f, 0.1, 1.0).unwrap();
        assert_eq!(q1.get(2, 2), 1.0);
        assert!(q1.get(4, 2) == 0.0 && q1.nnz() == q.nnz() + 5);
        let (q0, _) = cosine_similarity_hypothesis(&f, 0.0, 0.0).unwrap();
        assert!(q0.get(4, 2) > 0.0);
    }

    #[test]
    fn jaccard_values() {
        let f = FeatureTable::Binary(vec![
            tags(&["r", "b"]),
            tags(&["r"]),
            tags(&["x"]),
            tags(&[]),
            tags(&[]),
            tags(&["r", "b"]),
        ]);
        let q = jaccard_similarity_hypothesis(&f).unwrap();
        assert_eq!(q.get(0, 1), 0.5);
        assert_eq!(q.get(1, 0), 0.5);
        assert_eq!(q.get(0, 5), 1.0);
        assert_eq!(q.get(0, 0), 0.0);
        assert_eq!(q.get(0, 2), 0.0);
        assert_eq!(q.get(3, 4), 0.0);
    }

    #[test]
    fn haversine_quarter_meridian() {
        // independent: quarter of a great circle is pi/2 * R
        let expected = std::f64::consts::FRAC_PI_2 * 6371.0088;
        let d = haversine_km((0.0, 0.0), (0.0, 90.0));
        assert!((d - expected).abs() < 1e-9);
        assert!((d - 10_007.5).abs() < 0.1);
        assert!((haversine_km((0.0, 0.0), (90.0, 0.0)) - expected).abs() < 1e-9);
    }

    #[test]
    fn geographic_normalization() {
        let geo = GeoTable::new(vec![
            Some((10.0, 10.0)),
            Some((10.0, 10.0)),
            Some((11.0, 10.0)),
            Some((40.0, 10.0)),
            None,
        ])
        .unwrap();
        let q = geographic_hypothesis(&geo).unwrap();
        assert_eq!(q.get(0, 1), 1.0);
        assert_eq!(q.get(0, 0), 0.0);
        // farthest pairs (0,3) and (1,3) hit q = 0
        assert_eq!(q.get(0, 3), 0.0);
        assert_eq!(q.get(3, 1), 0.0);
        assert!(q.get(2, 3) > 0.0);
        assert!(q.iter().all(|(i, j, _)| i != 4 && j != 4));

        let same = GeoTable::new(vec![Some((1.0, 1.0)), Some((1.0, 1.0))]).unwrap();
        assert!(matches!(geographic_hypothesis(&same), Err(Error::Degenerate(_))));
        assert!(GeoTable::new(vec![Some((91.0, 0.0))]).is_err());
    }

    #[test]
    fn scalar_proximity_values() {
        let q = scalar_proximity_hypothesis(&[Some(1980.0), Some(1990.0), Some(2000.0), None]).unwrap();
        assert_eq!(q.get(0, 1), 0.5);
        assert_eq!(q.get(1, 2), 0.5);
        assert_eq!(q.get(0, 2), 0.0);
        assert_eq!(q.nnz(), 4);

        let q = scalar_proximity_hypothesis(&[Some(1.0), Some(1.0), Some(3.0)]).unwrap();
        assert_eq!(q.get(0, 1), 1.0);
        assert!(matches!(
            scalar_proximity_hypothesis(&[Some(2.0), Some(2.0)]),
            Err(Error::Degenerate(_))
        ));
        assert!(scalar_proximity_hypothesis(&[Some(2.0), None]).is_err());
    }

    #[test]
    fn similarity_builders_are_symmetric() {
        let f = FeatureTable::Real(vec![
            Some(vec![1.0, 2.0, 0.5]),
            Some(vec![0.3, 2.0, 1.0]),
            Some(vec![4.0, 0.1, 0.0]),
        ]);
        let (q, _) = cosine_similarity_hypothesis(&f, 0.0, 0.0).unwrap();
        let s = scalar_proximity_hypothesis(&[Some(1.0), Some(4.0), Some(9.0)]).unwrap();
        for m in [&q, &s] {
            for (i, j, v) in m.iter() {
                assert_eq!(m.get(j, i), v);
            }
        }
    }

    #[test]
    fn hypothesis_file_parsing() {
        let space = StateSpace::from_tokens(vec!["A".into(), "B".into()], true).unwrap();
        let p = Path::new("h.tsv");
        let q = HypothesisMatrix::parse_tsv("m=2\nA\tB\t0.5\nB\tB\t2\n", p, &space).unwrap();
        assert_eq!(q.get(0, 1), 0.5);
        assert_eq!(q.get(1, 1), 2.0);
        let back = HypothesisMatrix::parse_tsv(&q.to_tsv(&space), p, &space).unwrap();
        assert_eq!(back, q);

        assert!(matches!(
            HypothesisMatrix::parse_tsv("m=3\nA\tB\t1\n", p, &space),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            HypothesisMatrix::parse_tsv("m=2\nA\tC\t1\n", p, &space),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            HypothesisMatrix::parse_tsv("m=2\nA\tB\t-1\n", p, &space),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(HypothesisMatrix::parse_tsv("m=2\nA\tB\t1\nA\tB\t1\n", p, &space).is_err());
    }

    #[test]
    fn table_parsing() {
        let space = StateSpace::from_tokens(vec!["A".into(), "B".into(), "C".into()], false).unwrap();
        let p = Path::new("f");
        let f = FeatureTable::parse_tsv("A\t1,0\nB\t0,1\nZ\t1,1\n", p, &space, FeatureKind::Real).unwrap();
        assert_eq!(
            f,
            FeatureTable::Real(vec![Some(vec![1.0, 0.0]), Some(vec![0.0, 1.0]), None])
        );
        assert!(FeatureTable::parse_tsv("A\t1,0\nB\t1\n", p, &space, FeatureKind::Real).is_err());
        let b = FeatureTable::parse_tsv("A\tr;b\nC\tr\n", p, &space, FeatureKind::Binary).unwrap();
        assert_eq!(
            b,
            FeatureTable::Binary(vec![tags(&["b", "r"]), None, tags(&["r"])])
        );

        let g = GeoTable::parse_tsv("A\t1.5\t2\n", p, &space).unwrap();
        assert_eq!(g.coords()[0], Some((1.5, 2.0)));
        assert!(GeoTable::parse_tsv("A\t100\t2\n", p, &space).is_err());

        let v = parse_scalar_table("B\t1990\n", p, &space).unwrap();
        assert_eq!(v, vec![None, Some(1990.0), None]);

        let e = parse_edge_list("# g\nA\tB\nB\tC\n", p).unwrap();
        assert_eq!(e.len(), 2);
        assert!(parse_edge_list("A\n", p).is_err());
    }
}
