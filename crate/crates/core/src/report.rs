//! Report files: evidence tables, Bayes factors, rankings and plot curves.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reports
//! are byte-identical whenever the underlying values are bit-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{HypothesisRanking, Strength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Tsv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(OutputFormat::Tsv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidInput(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub hypothesis: String,
    pub k: u64,
    pub log_evidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactorRow {
    pub h_a: String,
    pub h_b: String,
    pub k: u64,
    pub two_ln_b: f64,
    pub category: Strength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: u64,
    pub log_evidence: f64,
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn evidence_tsv(rows: &[EvidenceRow]) -> String {
    let mut s = String::from("hypothesis\tk\tlog_evidence\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}", r.hypothesis, r.k, r.log_evidence);
    }
    s
}

pub fn parse_evidence_tsv(text: &str, path: &Path) -> Result<Vec<EvidenceRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let [h, k, v] = f.as_slice() else {
            return Err(Error::parse(
                path,
                n + 1,
                "expected hypothesis<TAB>k<TAB>log_evidence",
            ));
        };
        let k = k
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("bad k '{k}'")))?;
        let log_evidence = v
            .parse()
            .map_err(|_| Error::parse(path, n + 1, format!("bad log evidence '{v}'")))?;
        rows.push(EvidenceRow {
            hypothesis: h.to_string(),
            k,
            log_evidence,
        });
    }
    Ok(rows)
}

pub fn bayes_factor_tsv(rows: &[BayesFactorRow]) -> String {
    let mut s = String::from("h_a\th_b\tk\ttwo_ln_B\tcategory\n");
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", r.h_a, r.h_b, r.k, r.two_ln_b, r.category);
    }
    s
}

pub fn ranking_tsv(rankings: &[HypothesisRanking]) -> String {
    let mut s = String::from("k\trank\thypotheses\tlog_evidence\n");
    for r in rankings {
        for (rank, class) in r.classes.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                r.k,
                rank + 1,
                class.hypotheses.join(","),
                class.log_evidence[0]
            );
        }
    }
    s
}

/// Groups evidence rows into one `k`-sorted curve per hypothesis, keeping
/// first-appearance order of hypotheses. The second value lists warnings for
/// hypotheses missing some `k` that others have.
pub fn plot_curves(rows: &[EvidenceRow]) -> (Vec<(String, Vec<CurvePoint>)>, Vec<String>) {
    let mut order: Vec<String> = Vec::new();
    let mut curves: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for r in rows {
        if !curves.contains_key(&r.hypothesis) {
            order.push(r.hypothesis.clone());
        }
        curves.entry(r.hypothesis.clone()).or_default().push(CurvePoint {
            k: r.k,
            log_evidence: r.log_evidence,
        });
    }
    let all_k: std::collections::BTreeSet<u64> = rows.iter().map(|r| r.k).collect();
    let mut warnings = Vec::new();
    let out = order
        .into_iter()
        .map(|h| {
            let mut pts = curves.remove(&h).unwrap_or_default();
            pts.sort_by_key(|p| p.k);
            let missing: Vec<String> = all_k
                .iter()
                .filter(|k| !pts.iter().any(|p| p.k == **k))
                .map(u64::to_string)
                .collect();
            if !missing.is_empty() {
                warnings.push(format!(
                    "hypothesis '{h}' has no evidence for k={}",
                    missing.join(",")
                ));
            }
            (h, pts)
        })
        .collect();
    (out, warnings)
}

fn file_stem_for(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes plot curves under `dir`: `curves/<hypothesis>.tsv` with columns
/// `k`, `log_evidence`, or a single `curves.json`. Returns coverage warnings.
pub fn emit_plot_data(rows: &[EvidenceRow], dir: &Path, format: OutputFormat) -> Result<Vec<String>> {
    let (curves, warnings) = plot_curves(rows);
    for w in &warnings {
        log::warn!("{w}");
    }
    match format {
        OutputFormat::Tsv => {
            let cdir = dir.join("curves");
            create_dir(&cdir)?;
            for (h, pts) in &curves {
                let mut s = String::from("k\tlog_evidence\n");
                for p in pts {
                    let _ = writeln!(s, "{}\t{}", p.k, p.log_evidence);
                }
                write_file(&cdir.join(format!("{}.tsv", file_stem_for(h))), &s)?;
            }
        }
        OutputFormat::Json => {
            let map: BTreeMap<&str, &Vec<CurvePoint>> = curves.iter().map(|(h, p)| (h.as_str(), p)).collect();
            write_file(&dir.join("curves.json"), &to_json(&map)?)?;
        }
    }
    Ok(warnings)
}

pub(crate) fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}
