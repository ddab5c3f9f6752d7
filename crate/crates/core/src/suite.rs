//! End-to-end check on synthetic data: each corpus must rank the hypothesis
//! matching its generating mechanism first, decisively, for every `k >= 1`.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::{count_transitions, write_trail_file, TrailCorpus};
use crate::elicitation::{embed_reset, ResetRow};
use crate::error::{Error, Result};
use crate::evidence::{interpret_strength, Strength};
use crate::experiment::{evaluate, write_reports, Evaluation, DEFAULT_K};
use crate::hypothesis::{popularity_hypothesis, structural_hypothesis, uniform_hypothesis, AdjacencyGraph};
use crate::report::{create_dir, to_json, write_file, OutputFormat};
use crate::synth::{
    node_trails_to_raw, popularity_walk, price_network, structural_walk, teleportation_walk, DirectedGraph,
    GeneratorConfig, NodeTrails,
};

pub const UNIFORM: &str = "uniform";
pub const STRUCTURAL: &str = "structural";
pub const POPULARITY: &str = "popularity";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub generator: GeneratorConfig,
    pub k: Vec<u64>,
    pub reset: bool,
    pub reset_row: ResetRow,
    pub jobs: usize,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            generator: GeneratorConfig::default(),
            k: DEFAULT_K.to_vec(),
            reset: true,
            // keeps the reset row out of the chip budget, so it cannot favour any hypothesis
            reset_row: ResetRow::ZeroRow,
            jobs: 1,
            out: None,
            format: OutputFormat::Tsv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOutcome {
    pub corpus: String,
    pub expected: String,
    pub evaluation: Evaluation,
}

impl CorpusOutcome {
    /// `2 ln B` of the expected hypothesis over the best other one at `k`.
    pub fn margin(&self, k: u64) -> Option<f64> {
        let best = self.evaluation.value(&self.expected, k)?;
        let other = self
            .evaluation
            .hypotheses
            .iter()
            .filter(|h| **h != self.expected)
            .filter_map(|h| self.evaluation.value(h, k))
            .fold(f64::NEG_INFINITY, f64::max);
        Some(2.0 * (best - other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub outcomes: Vec<CorpusOutcome>,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn check(&self) -> Result<()> {
        if self.failures.is_empty() {
            Ok(())
        } else {
            Err(Error::SuiteAssertion(self.failures.join("; ")))
        }
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("corpus\texpected\tk\ttop\ttwo_ln_B_margin\tcategory\n");
        for o in &self.outcomes {
            for r in &o.evaluation.rankings {
                let margin = o.margin(r.k).unwrap_or(f64::NAN);
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    o.corpus,
                    o.expected,
                    r.k,
                    r.top().hypotheses.join(","),
                    margin,
                    interpret_strength(margin / 2.0)
                );
            }
        }
        s
    }
}

fn outcome_failures(o: &CorpusOutcome) -> Vec<String> {
    let mut out = Vec::new();
    for r in o.evaluation.rankings.iter().filter(|r| r.k >= 1) {
        let top = &r.top().hypotheses;
        if top.len() != 1 || top[0] != o.expected {
            out.push(format!(
                "corpus={} k={}: expected '{}' alone on top, got [{}]",
                o.corpus,
                r.k,
                o.expected,
                top.join(",")
            ));
            continue;
        }
        let margin = o.margin(r.k).unwrap_or(f64::NAN);
        if interpret_strength(margin / 2.0) != Strength::Decisive {
            let runner_up = r
                .classes
                .get(1)
                .map(|c| c.hypotheses.join(","))
                .unwrap_or_default();
            out.push(format!(
                "corpus={} k={}: '{}' over '{}' has 2 ln B = {margin}, not decisive",
                o.corpus, r.k, o.expected, runner_up
            ));
        }
    }
    out
}

/// Builds uniform, structural and popularity hypotheses for one corpus and
/// evaluates them.
pub fn evaluate_corpus(
    graph: &DirectedGraph,
    trails: &NodeTrails,
    cfg: &SuiteConfig,
) -> Result<(TrailCorpus, Evaluation)> {
    let raw = node_trails_to_raw(trails);
    let corpus = TrailCorpus::from_raw(&raw, cfg.reset)?;
    let counts = count_transitions(&corpus, cfg.reset)?;
    let space = corpus.space();
    let adj = AdjacencyGraph::from_labeled(space, &graph.labeled_edges());
    let hyps = vec![
        (UNIFORM.to_owned(), uniform_hypothesis(space.observed_len())),
        (STRUCTURAL.to_owned(), structural_hypothesis(&adj, 0.0)?),
        (POPULARITY.to_owned(), popularity_hypothesis(&adj)?),
    ]
    .into_iter()
    .map(|(l, q)| Ok((l, embed_reset(q, space, cfg.reset_row)?)))
    .collect::<Result<Vec<_>>>()?;
    let eval = evaluate(&counts, &hyps, &cfg.k, cfg.generator.seed, cfg.jobs)?;
    Ok((corpus, eval))
}

/// Generates the network and the three corpora, evaluates them, and writes
/// everything under `cfg.out` when set. Ordering failures are collected in the
/// report; call [`SuiteReport::check`] to turn them into an error.
pub fn run_synthetic_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let mut cfg = cfg.clone();
    cfg.k.sort_unstable();
    cfg.k.dedup();
    let gen = &cfg.generator;
    let graph = price_network(gen)?;
    let corpora = [
        ("structural", STRUCTURAL, structural_walk(&graph, gen)?),
        ("popularity", POPULARITY, popularity_walk(&graph, gen)?),
        (
            "teleportation",
            UNIFORM,
            teleportation_walk(graph.node_count(), gen)?,
        ),
    ];

    if let Some(out) = &cfg.out {
        create_dir(out)?;
        write_file(&out.join("graph.tsv"), &graph.to_tsv())?;
        write_file(&out.join("config.json"), &to_json(&cfg)?)?;
    }

    let mut report = SuiteReport {
        outcomes: Vec::new(),
        failures: Vec::new(),
    };
    for (name, expected, trails) in corpora {
        let (corpus, evaluation) = evaluate_corpus(&graph, &trails, &cfg)?;
        let outcome = CorpusOutcome {
            corpus: name.to_owned(),
            expected: expected.to_owned(),
            evaluation,
        };
        report.failures.extend(outcome_failures(&outcome));
        if let Some(out) = &cfg.out {
            let dir = out.join(name);
            create_dir(&dir)?;
            write_trail_file(&dir.join("trails.tsv"), &corpus.to_raw())?;
            write_reports(&outcome.evaluation, &dir, cfg.format)?;
        }
        report.outcomes.push(outcome);
    }
    if let Some(out) = &cfg.out {
        write_file(&out.join("suite_summary.tsv"), &report.summary_tsv())?;
    }
    Ok(report)
}
