//! Synthetic networks and trail corpora with known generating mechanisms.
//!
//! The network grows Price-style: a complete directed clique, then nodes that
//! each link to `out_degree` distinct existing nodes picked with probability
//! proportional to `in_degree + attachment_offset`. Three walkers produce
//! trails over it: uniform out-link choice, softmax over target in-degree, and
//! teleportation that ignores the links.
//!
//! Every trail draws from its own ChaCha stream derived from the seed, the
//! walker and the trail index, so corpora are reproducible and can be built in
//! parallel.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub nodes: usize,
    pub out_degree: usize,
    pub clique: usize,
    pub trails: usize,
    pub trail_length: usize,
    /// Softmax temperature of the popularity walker.
    pub temperature: f64,
    /// Added to the in-degree when choosing attachment targets.
    pub attachment_offset: u64,
    /// Let the teleporting walker stay on its current node.
    pub teleport_allow_self: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            nodes: 10_000,
            out_degree: 10,
            clique: 11,
            trails: 1_000,
            trail_length: 5,
            temperature: 10.0,
            attachment_offset: 1,
            teleport_allow_self: false,
            seed: 1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.clique <= self.out_degree {
            return bad(format!(
                "clique size {} must exceed out-degree {}",
                self.clique, self.out_degree
            ));
        }
        if self.nodes < self.clique {
            return bad(format!(
                "{} nodes cannot hold a clique of {}",
                self.nodes, self.clique
            ));
        }
        if self.nodes >= u32::MAX as usize {
            return bad("too many nodes".into());
        }
        if self.trail_length < 2 {
            return bad("trail length must be at least 2".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if self.out_degree == 0 && self.nodes > self.clique {
            return bad("out-degree must be positive".into());
        }
        Ok(())
    }
}

/// Directed simple graph with sorted out-adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    out: Vec<Vec<u32>>,
    in_degrees: Vec<u64>,
}

impl DirectedGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32)>) -> Result<Self> {
        let mut out = vec![Vec::new(); n];
        let mut in_degrees = vec![0; n];
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidInput(format!("edge ({a}, {b}) out of range")));
            }
            out[a as usize].push(b);
            in_degrees[b as usize] += 1;
        }
        out.iter_mut().for_each(|o| o.sort_unstable());
        Ok(DirectedGraph { out, in_degrees })
    }

    pub fn node_count(&self) -> usize {
        self.out.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn out_neighbors(&self, v: u32) -> &[u32] {
        &self.out[v as usize]
    }

    pub fn in_degrees(&self) -> &[u64] {
        &self.in_degrees
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.out[a as usize].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(a, o)| o.iter().map(move |&b| (a as u32, b)))
    }

    /// Edges with node ids rendered as state tokens.
    pub fn labeled_edges(&self) -> Vec<(String, String)> {
        self.edges()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    /// Edge list export: `# nodes=<N>` then `src<TAB>dst` lines.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("# nodes={}\n", self.node_count());
        for (a, b) in self.edges() {
            let _ = writeln!(s, "{a}\t{b}");
        }
        s
    }

    /// Reads the format written by [`DirectedGraph::to_tsv`]. Without a
    /// `# nodes=` header the node count is one past the largest id.
    pub fn parse_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix("# nodes=") {
                let v = rest
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(path, n + 1, "bad node count"))?;
                declared = Some(v);
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let id = |t: &str| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::parse(path, n + 1, format!("node id '{t}' is not an integer")))
            };
            match line.split('\t').collect::<Vec<_>>().as_slice() {
                [a, b] => edges.push((id(a)?, id(b)?)),
                _ => return Err(Error::parse(path, n + 1, "expected src<TAB>dst")),
            }
        }
        let n = declared.unwrap_or_else(|| {
            edges
                .iter()
                .map(|&(a, b)| a.max(b) as usize + 1)
                .max()
                .unwrap_or(0)
        });
        Self::from_edges(n, edges)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const GRAPH_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Walker {
    Structural = 1,
    Popularity = 2,
    Teleport = 3,
}

fn trail_stream(w: Walker, trail: usize) -> u64 {
    ((w as u64) << 48) | trail as u64
}

/// Grows the preferential-attachment network described by `cfg`.
pub fn price_network(cfg: &GeneratorConfig) -> Result<DirectedGraph> {
    cfg.validate()?;
    let n0 = cfg.clique;
    let mut out: Vec<Vec<u32>> = Vec::with_capacity(cfg.nodes);
    let mut in_degrees = vec![0u64; cfg.nodes];
    // node v appears (in_degree + offset) times; uniform draws from the pool
    // are draws proportional to that weight
    let mut pool: Vec<u32> = Vec::new();
    for a in 0..n0 as u32 {
        out.push((0..n0 as u32).filter(|&b| b != a).collect());
        in_degrees[a as usize] = (n0 - 1) as u64;
    }
    for a in 0..n0 as u32 {
        pool.extend(std::iter::repeat_n(a, (n0 - 1) + cfg.attachment_offset as usize));
    }

    let mut rng = rng_for(cfg.seed, GRAPH_STREAM);
    let mut chosen: Vec<u32> = Vec::with_capacity(cfg.out_degree);
    for v in n0 as u32..cfg.nodes as u32 {
        chosen.clear();
        while chosen.len() < cfg.out_degree {
            let t = pool[rng.gen_range(0..pool.len())];
            if !chosen.contains(&t) {
                chosen.push(t);
            }
        }
        for &t in &chosen {
            in_degrees[t as usize] += 1;
            pool.push(t);
        }
        pool.extend(std::iter::repeat_n(v, cfg.attachment_offset as usize));
        let mut targets = chosen.clone();
        targets.sort_unstable();
        out.push(targets);
    }
    Ok(DirectedGraph { out, in_degrees })
}

/// Trails as node ids.
pub type NodeTrails = Vec<Vec<u32>>;

/// Renders node trails as string tokens for [`crate::corpus::TrailCorpus::from_raw`].
pub fn node_trails_to_raw(trails: &[Vec<u32>]) -> Vec<Vec<String>> {
    trails
        .iter()
        .map(|t| t.iter().map(u32::to_string).collect())
        .collect()
}

/// Continues a uniform out-link walk from `start` until `len` steps.
pub fn walk_structural_from<R: Rng>(g: &DirectedGraph, start: u32, len: usize, rng: &mut R) -> Vec<u32> {
    let mut trail = Vec::with_capacity(len);
    trail.push(start);
    let mut cur = start;
    while trail.len() < len {
        let nb = g.out_neighbors(cur);
        assert!(!nb.is_empty(), "node {cur} has no out-links");
        cur = nb[rng.gen_range(0..nb.len())];
        trail.push(cur);
    }
    trail
}

/// Picks an out-neighbour of `cur` with probability proportional to
/// `exp(in_degree / temperature)`.
pub fn popularity_step<R: Rng>(g: &DirectedGraph, cur: u32, temperature: f64, rng: &mut R) -> u32 {
    let nb = g.out_neighbors(cur);
    assert!(!nb.is_empty(), "node {cur} has no out-links");
    let probs = softmax_weights(nb.iter().map(|&t| g.in_degrees()[t as usize] as f64), temperature);
    let mut u: f64 = rng.gen();
    for (&t, &p) in nb.iter().zip(&probs) {
        if u < p {
            return t;
        }
        u -= p;
    }
    *nb.last().unwrap()
}

/// Normalized `exp(d / temperature)` weights, shifted by the maximum.
pub fn softmax_weights(degrees: impl Iterator<Item = f64>, temperature: f64) -> Vec<f64> {
    let d: Vec<f64> = degrees.collect();
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = d.iter().map(|x| ((x - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn check_graph(g: &DirectedGraph, cfg: &GeneratorConfig) -> Result<()> {
    if cfg.trail_length < 2 {
        return Err(Error::InvalidInput("trail length must be at least 2".into()));
    }
    if g.node_count() == 0 {
        return Err(Error::InvalidInput("graph has no nodes".into()));
    }
    if let Some(v) = (0..g.node_count()).find(|&v| g.out[v].is_empty()) {
        return Err(Error::InvalidInput(format!("node {v} has no out-links")));
    }
    Ok(())
}

/// Random walks following uniformly chosen out-links.
pub fn structural_walk(g: &DirectedGraph, cfg: &GeneratorConfig) -> Result<NodeTrails> {
    check_graph(g, cfg)?;
    let n = g.node_count();
    Ok((0..cfg.trails)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(cfg.seed, trail_stream(Walker::Structural, t));
            let start = rng.gen_range(0..n) as u32;
            walk_structural_from(g, start, cfg.trail_length, &mut rng)
        })
        .collect())
}

/// Random walks preferring popular (high in-degree) targets.
pub fn popularity_walk(g: &DirectedGraph, cfg: &GeneratorConfig) -> Result<NodeTrails> {
    check_graph(g, cfg)?;
    let n = g.node_count();
    Ok((0..cfg.trails)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(cfg.seed, trail_stream(Walker::Popularity, t));
            let mut cur = rng.gen_range(0..n) as u32;
            let mut trail = vec![cur];
            while trail.len() < cfg.trail_length {
                cur = popularity_step(g, cur, cfg.temperature, &mut rng);
                trail.push(cur);
            }
            trail
        })
        .collect())
}

/// Trails that jump uniformly at random, ignoring links.
pub fn teleportation_walk(n: usize, cfg: &GeneratorConfig) -> Result<NodeTrails> {
    if n < 2 || n >= u32::MAX as usize {
        return Err(Error::InvalidInput(format!(
            "teleportation needs at least 2 nodes, got {n}"
        )));
    }
    if cfg.trail_length < 2 {
        return Err(Error::InvalidInput("trail length must be at least 2".into()));
    }
    Ok((0..cfg.trails)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(cfg.seed, trail_stream(Walker::Teleport, t));
            let mut cur = rng.gen_range(0..n) as u32;
            let mut trail = vec![cur];
            while trail.len() < cfg.trail_length {
                cur = if cfg.teleport_allow_self {
                    rng.gen_range(0..n) as u32
                } else {
                    let r = rng.gen_range(0..n - 1) as u32;
                    if r >= cur {
                        r + 1
                    } else {
                        r
                    }
                };
                trail.push(cur);
            }
            trail
        })
        .collect())
}
