//! Experiment orchestration: read trails and metadata, build hypotheses,
//! sweep `k`, and write evidence, Bayes-factor, ranking and curve reports.
//!
//! Every hypothesis x `k` cell is an independent job. Jobs run on a rayon
//! pool sized by `jobs`; results are gathered in a fixed order so report
//! bytes do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{count_transitions, read_trail_file, StateSpace, TrailCorpus, TransitionCounts};
use crate::elicitation::{
    aligned_toy_prior, embed_reset, opposing_toy_prior, trial_roulette, uniform_toy_prior, ResetRow,
};
use crate::error::{Error, Result};
use crate::evidence::{interpret_strength, log_evidence, rank_hypotheses, HypothesisRanking, LogEvidence};
use crate::hypothesis::{
    cosine_similarity_hypothesis, geographic_hypothesis, jaccard_similarity_hypothesis, parse_edge_list,
    parse_scalar_table, popularity_hypothesis, scalar_proximity_hypothesis, self_loop_hypothesis,
    structural_hypothesis, uniform_hypothesis, AdjacencyGraph, Diagonal, FeatureKind, FeatureTable, GeoTable,
    HypothesisMatrix, DEFAULT_COSINE_THRESHOLD,
};
use crate::report::{
    bayes_factor_tsv, create_dir, emit_plot_data, evidence_tsv, ranking_tsv, to_json, write_file,
    BayesFactorRow, EvidenceRow, OutputFormat,
};

pub const TOOL_NAME: &str = "trailcmp";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Default weighting-factor sweep.
pub const DEFAULT_K: [u64; 6] = [0, 1, 2, 3, 5, 10];

/// Default constant sweep for the toy priors.
pub const DEFAULT_TOY_C: [u64; 6] = [0, 1, 3, 5, 10, 20];

/// How to obtain one hypothesis matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "builder")]
pub enum Builder {
    Uniform,
    SelfLoop,
    Structural {
        graph: PathBuf,
        diagonal: f64,
    },
    Popularity {
        graph: PathBuf,
    },
    Cosine {
        features: PathBuf,
        threshold: f64,
        diagonal: f64,
    },
    Jaccard {
        features: PathBuf,
    },
    Geo {
        table: PathBuf,
    },
    Scalar {
        table: PathBuf,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpec {
    pub label: String,
    #[serde(flatten)]
    pub builder: Builder,
}

impl HypothesisSpec {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "file".into());
        HypothesisSpec {
            label,
            builder: Builder::File { path },
        }
    }

    /// Builds the matrix over the observed states of `space`.
    pub fn build(&self, space: &StateSpace) -> Result<HypothesisMatrix> {
        let m = space.observed_len();
        let read = |p: &Path| fs::read_to_string(p).map_err(|e| Error::io(p, e));
        match &self.builder {
            Builder::Uniform => Ok(uniform_hypothesis(m)),
            Builder::SelfLoop => Ok(self_loop_hypothesis(m)),
            Builder::Structural { graph, diagonal } => {
                let edges = parse_edge_list(&read(graph)?, graph)?;
                structural_hypothesis(&AdjacencyGraph::from_labeled(space, &edges), *diagonal)
            }
            Builder::Popularity { graph } => {
                let edges = parse_edge_list(&read(graph)?, graph)?;
                popularity_hypothesis(&AdjacencyGraph::from_labeled(space, &edges))
            }
            Builder::Cosine {
                features,
                threshold,
                diagonal,
            } => {
                let f = FeatureTable::parse_tsv(&read(features)?, features, space, FeatureKind::Real)?;
                let (q, zero) = cosine_similarity_hypothesis(&f, *threshold, *diagonal)?;
                if !zero.is_empty() {
                    log::warn!("{}: {} state(s) with zero-norm features", self.label, zero.len());
                }
                Ok(q)
            }
            Builder::Jaccard { features } => {
                let f = FeatureTable::parse_tsv(&read(features)?, features, space, FeatureKind::Binary)?;
                jaccard_similarity_hypothesis(&f)
            }
            Builder::Geo { table } => {
                geographic_hypothesis(&GeoTable::parse_tsv(&read(table)?, table, space)?)
            }
            Builder::Scalar { table } => {
                scalar_proximity_hypothesis(&parse_scalar_table(&read(table)?, table, space)?)
            }
            Builder::File { path } => HypothesisMatrix::parse_tsv(&read(path)?, path, space),
        }
    }
}

impl FromStr for HypothesisSpec {
    type Err = Error;

    /// Parses `NAME[:key=value,...]`, e.g. `structural:graph=g.tsv,diagonal=1`.
    /// Every builder accepts `label=...` to rename the hypothesis.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kv: Vec<(String, String)> = Vec::new();
        for p in params.split(',').filter(|p| !p.is_empty()) {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("hypothesis parameter '{p}' is not key=value")))?;
            kv.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let mut take = |key: &str| -> Option<String> {
            let pos = kv.iter().position(|(k, _)| k == key)?;
            Some(kv.remove(pos).1)
        };
        let label = take("label");
        let req_path = |v: Option<String>, key: &str| -> Result<PathBuf> {
            v.map(PathBuf::from)
                .ok_or_else(|| Error::InvalidInput(format!("hypothesis '{name}' needs {key}=PATH")))
        };
        let num = |v: Option<String>, key: &str, default: f64| -> Result<f64> {
            match v {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("{key}={v} is not a number"))),
            }
        };
        let builder = match name {
            "uniform" => Builder::Uniform,
            "self-loop" | "selfloop" => Builder::SelfLoop,
            "structural" => Builder::Structural {
                graph: req_path(take("graph"), "graph")?,
                diagonal: num(take("diagonal"), "diagonal", 0.0)?,
            },
            "popularity" => Builder::Popularity {
                graph: req_path(take("graph"), "graph")?,
            },
            "cosine" => Builder::Cosine {
                features: req_path(take("features"), "features")?,
                threshold: num(take("threshold"), "threshold", DEFAULT_COSINE_THRESHOLD)?,
                diagonal: num(take("diagonal"), "diagonal", 0.0)?,
            },
            "jaccard" => Builder::Jaccard {
                features: req_path(take("features"), "features")?,
            },
            "geo" => Builder::Geo {
                table: req_path(take("table"), "table")?,
            },
            "scalar" => Builder::Scalar {
                table: req_path(take("table"), "table")?,
            },
            "file" => Builder::File {
                path: req_path(take("path"), "path")?,
            },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown hypothesis builder '{other}'"
                )))
            }
        };
        if let Some((k, _)) = kv.first() {
            return Err(Error::InvalidInput(format!(
                "unknown parameter '{k}' for hypothesis '{name}'"
            )));
        }
        Ok(HypothesisSpec {
            label: label.unwrap_or_else(|| name.to_owned()),
            builder,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub trails: PathBuf,
    pub reset: bool,
    #[serde(default)]
    pub reset_row: ResetRow,
    pub hypotheses: Vec<HypothesisSpec>,
    pub k: Vec<u64>,
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub emit_priors: bool,
}

fn default_jobs() -> usize {
    1
}

impl ExperimentConfig {
    /// Sorts and dedups `k`, and checks that labels are unique.
    pub fn normalize(&mut self) -> Result<()> {
        self.k.sort_unstable();
        self.k.dedup();
        if self.k.is_empty() {
            return Err(Error::InvalidInput("at least one k value is required".into()));
        }
        if self.hypotheses.is_empty() {
            return Err(Error::InvalidInput("at least one hypothesis is required".into()));
        }
        let mut labels: Vec<&str> = self.hypotheses.iter().map(|h| h.label.as_str()).collect();
        labels.sort_unstable();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput(format!(
                "duplicate hypothesis label '{}'",
                w[0]
            )));
        }
        if self.jobs == 0 {
            self.jobs = 1;
        }
        Ok(())
    }
}

/// Parses a comma-separated list of nonnegative integers.
pub fn parse_k_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| Error::InvalidInput(format!("k value '{t}' is not a nonnegative integer")))
        })
        .collect()
}

/// Evidence for every hypothesis at every `k`, plus derived comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub hypotheses: Vec<String>,
    pub ks: Vec<u64>,
    /// `evidence[k_index][hypothesis_index]`.
    pub evidence: Vec<Vec<LogEvidence>>,
    pub rankings: Vec<HypothesisRanking>,
    pub bayes_factors: Vec<BayesFactorRow>,
    pub fingerprint: u64,
    /// `(hypothesis, k, cells above the flat offset)`.
    pub prior_sizes: Vec<(String, u64, usize)>,
}

impl Evaluation {
    pub fn value(&self, hypothesis: &str, k: u64) -> Option<f64> {
        let ki = self.ks.iter().position(|&x| x == k)?;
        let hi = self.hypotheses.iter().position(|h| h == hypothesis)?;
        Some(self.evidence[ki][hi].value)
    }

    pub fn ranking(&self, k: u64) -> Option<&HypothesisRanking> {
        self.rankings.iter().find(|r| r.k == k)
    }

    /// Hypothesis-major evidence rows.
    pub fn evidence_rows(&self) -> Vec<EvidenceRow> {
        let mut rows = Vec::new();
        for (hi, h) in self.hypotheses.iter().enumerate() {
            for (ki, &k) in self.ks.iter().enumerate() {
                rows.push(EvidenceRow {
                    hypothesis: h.clone(),
                    k,
                    log_evidence: self.evidence[ki][hi].value,
                });
            }
        }
        rows
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

/// Elicits a prior for every hypothesis x `k` and compares the evidences.
/// Hypotheses must already span the full (reset-augmented) state space.
pub fn evaluate(
    counts: &TransitionCounts,
    hypotheses: &[(String, HypothesisMatrix)],
    ks: &[u64],
    seed: u64,
    jobs: usize,
) -> Result<Evaluation> {
    for (label, q) in hypotheses {
        if q.m() != counts.m() {
            return Err(Error::Dimension(format!(
                "hypothesis '{label}' has m={} but the counts have m={}",
                q.m(),
                counts.m()
            )));
        }
    }
    let cells: Vec<(usize, usize)> = (0..ks.len())
        .flat_map(|ki| (0..hypotheses.len()).map(move |hi| (ki, hi)))
        .collect();
    let run = || -> Result<Vec<(LogEvidence, usize)>> {
        cells
            .par_iter()
            .map(|&(ki, hi)| {
                let (label, q) = &hypotheses[hi];
                let prior = trial_roulette(q, ks[ki], seed)?;
                Ok((log_evidence(counts, &prior, label)?, prior.nnz_extra()))
            })
            .collect()
    };
    let results = thread_pool(jobs)?.install(run)?;

    let mut evidence: Vec<Vec<LogEvidence>> = vec![Vec::with_capacity(hypotheses.len()); ks.len()];
    let mut prior_sizes = Vec::with_capacity(cells.len());
    for (&(ki, hi), (e, nnz)) in cells.iter().zip(results) {
        prior_sizes.push((hypotheses[hi].0.clone(), ks[ki], nnz));
        evidence[ki].push(e);
    }
    let rankings = evidence
        .iter()
        .map(|row| rank_hypotheses(row))
        .collect::<Result<Vec<_>>>()?;
    let mut bayes_factors = Vec::new();
    for (ki, row) in evidence.iter().enumerate() {
        for a in 0..row.len() {
            for b in a + 1..row.len() {
                let log_b = crate::evidence::log_bayes_factor(&row[a], &row[b])?;
                bayes_factors.push(BayesFactorRow {
                    h_a: row[a].hypothesis.clone(),
                    h_b: row[b].hypothesis.clone(),
                    k: ks[ki],
                    two_ln_b: 2.0 * log_b,
                    category: interpret_strength(log_b),
                });
            }
        }
    }
    Ok(Evaluation {
        hypotheses: hypotheses.iter().map(|h| h.0.clone()).collect(),
        ks: ks.to_vec(),
        evidence,
        rankings,
        bayes_factors,
        fingerprint: counts.fingerprint(),
        prior_sizes,
    })
}

/// Writes evidence, Bayes-factor, ranking and curve reports into `dir`.
pub fn write_reports(eval: &Evaluation, dir: &Path, format: OutputFormat) -> Result<Vec<String>> {
    create_dir(dir)?;
    let rows = eval.evidence_rows();
    match format {
        OutputFormat::Tsv => {
            write_file(&dir.join("evidence.tsv"), &evidence_tsv(&rows))?;
            write_file(
                &dir.join("bayes_factors.tsv"),
                &bayes_factor_tsv(&eval.bayes_factors),
            )?;
            write_file(&dir.join("ranking.tsv"), &ranking_tsv(&eval.rankings))?;
        }
        OutputFormat::Json => {
            write_file(&dir.join("evidence.json"), &to_json(&rows)?)?;
            write_file(&dir.join("bayes_factors.json"), &to_json(&eval.bayes_factors)?)?;
            write_file(&dir.join("ranking.json"), &to_json(&eval.rankings)?)?;
        }
    }
    emit_plot_data(&rows, dir, format)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisManifest {
    pub label: String,
    pub nnz: usize,
    pub diagonal: Diagonal,
    pub reset_row: Option<ResetRow>,
    /// `(k, cells above the flat offset)`.
    pub priors: Vec<(u64, usize)>,
}

/// Everything needed to rerun an experiment, plus timing diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub fingerprint: String,
    pub states: usize,
    pub transitions: u64,
    pub hypotheses: Vec<HypothesisManifest>,
    pub timings_ms: Vec<(String, u128)>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn load_corpus(path: &Path, reset: bool) -> Result<(TrailCorpus, TransitionCounts)> {
    let raw = read_trail_file(path)?;
    let corpus = TrailCorpus::from_raw(&raw, reset)?;
    let counts = count_transitions(&corpus, reset)?;
    Ok((corpus, counts))
}

/// Runs a configured experiment and writes reports plus `manifest.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(Evaluation, RunManifest)> {
    let mut cfg = cfg.clone();
    cfg.normalize()?;
    let mut timings = Vec::new();
    let clock = Instant::now();

    let (corpus, counts) = load_corpus(&cfg.trails, cfg.reset)?;
    let space = corpus.space();
    timings.push(("load".to_owned(), clock.elapsed().as_millis()));

    let mut built = Vec::with_capacity(cfg.hypotheses.len());
    let mut manifests = Vec::with_capacity(cfg.hypotheses.len());
    for spec in &cfg.hypotheses {
        let q = embed_reset(spec.build(space)?, space, cfg.reset_row)?;
        manifests.push(HypothesisManifest {
            label: spec.label.clone(),
            nnz: q.nnz(),
            diagonal: q.diagonal(),
            reset_row: space.reset_index().map(|_| cfg.reset_row),
            priors: Vec::new(),
        });
        built.push((spec.label.clone(), q));
    }
    timings.push(("hypotheses".to_owned(), clock.elapsed().as_millis()));

    let eval = evaluate(&counts, &built, &cfg.k, cfg.seed, cfg.jobs)?;
    timings.push(("evidence".to_owned(), clock.elapsed().as_millis()));
    for (label, k, nnz) in &eval.prior_sizes {
        if let Some(h) = manifests.iter_mut().find(|h| &h.label == label) {
            h.priors.push((*k, *nnz));
        }
    }

    create_dir(&cfg.out)?;
    write_file(&cfg.out.join("counts.tsv"), &counts.to_tsv())?;
    write_reports(&eval, &cfg.out, cfg.format)?;
    if cfg.emit_priors {
        let pdir = cfg.out.join("priors");
        create_dir(&pdir)?;
        for (label, q) in &built {
            for &k in &cfg.k {
                let prior = trial_roulette(q, k, cfg.seed)?;
                write_file(&pdir.join(format!("{label}_k{k}.tsv")), &prior.to_tsv())?;
            }
        }
    }
    timings.push(("reports".to_owned(), clock.elapsed().as_millis()));

    let manifest = RunManifest {
        tool: TOOL_NAME.to_owned(),
        version: TOOL_VERSION.to_owned(),
        config: cfg.clone(),
        fingerprint: format!("{:016x}", counts.fingerprint()),
        states: counts.m(),
        transitions: counts.total(),
        hypotheses: manifests,
        timings_ms: timings,
    };
    write_file(&cfg.out.join("manifest.json"), &to_json(&manifest)?)?;
    Ok((eval, manifest))
}

/// One row of a toy-prior sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRow {
    pub prior: String,
    pub c: u64,
    pub log_evidence: f64,
}

/// Evidence of the uniform, aligned and opposing toy priors over `cs`.
pub fn toy_prior_sweep(counts: &TransitionCounts, cs: &[u64]) -> Result<Vec<ToyRow>> {
    let mut rows = Vec::new();
    for (name, make) in [
        (
            "uniform",
            &(|c| uniform_toy_prior(counts.m(), c)) as &dyn Fn(u64) -> _,
        ),
        ("aligned", &|c| aligned_toy_prior(counts, c)),
        ("opposing", &|c| opposing_toy_prior(counts, c)),
    ] {
        for &c in cs {
            let prior = make(c);
            rows.push(ToyRow {
                prior: name.to_owned(),
                c,
                log_evidence: crate::evidence::log_evidence_value(counts, &prior)?,
            });
        }
    }
    Ok(rows)
}

pub fn toy_rows_tsv(rows: &[ToyRow]) -> String {
    let mut s = String::from("prior\tc\tlog_evidence\n");
    for r in rows {
        s.push_str(&format!("{}\t{}\t{}\n", r.prior, r.c, r.log_evidence));
    }
    s
}

pub fn write_toy_report(rows: &[ToyRow], dir: &Path, format: OutputFormat) -> Result<()> {
    create_dir(dir)?;
    match format {
        OutputFormat::Tsv => write_file(&dir.join("toy_priors.tsv"), &toy_rows_tsv(rows)),
        OutputFormat::Json => write_file(&dir.join("toy_priors.json"), &to_json(rows)?),
    }
}
