use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn trailcmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trailcmp"))
        .args(args)
        .output()
        .expect("spawn trailcmp")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TRAILS: &str = "a\tb\tc\tb\na\tc\na\tb\tc\nc\ta\tb\nb\tc\tb\tc\n";
const GRAPH: &str = "a\tb\nb\tc\nc\ta\nc\tb\n";

fn small_inputs(dir: &Path) -> (PathBuf, PathBuf) {
    (write(dir, "trails.tsv", TRAILS), write(dir, "links.tsv", GRAPH))
}

#[test]
fn two_hypotheses_three_k() {
    let tmp = tempfile::tempdir().unwrap();
    let (trails, graph) = small_inputs(tmp.path());
    let out = tmp.path().join("out");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis",
        "uniform",
        "--hypothesis",
        &format!("structural:graph={}", s(&graph)),
        "--k",
        "0,1,3",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let evidence = fs::read_to_string(out.join("evidence.tsv")).unwrap();
    assert_eq!(evidence.lines().next(), Some("hypothesis\tk\tlog_evidence"));
    assert_eq!(evidence.lines().skip(1).count(), 6);

    let ranking = fs::read_to_string(out.join("ranking.tsv")).unwrap();
    let mut blocks: Vec<&str> = ranking
        .lines()
        .skip(1)
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    blocks.dedup();
    assert_eq!(blocks, ["0", "1", "3"]);
    // every hypothesis ties at k=0
    let k0: Vec<&str> = ranking.lines().filter(|l| l.starts_with("0\t")).collect();
    assert_eq!(k0.len(), 1);
    assert!(k0[0].contains("uniform") && k0[0].contains("structural"));

    for f in [
        "bayes_factors.tsv",
        "counts.tsv",
        "manifest.json",
        "curves/uniform.tsv",
        "curves/structural.tsv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != "manifest.json" {
                files.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (trails, graph) = small_inputs(tmp.path());
    let first = tmp.path().join("first");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--reset",
        "--hypothesis",
        "uniform",
        "--hypothesis",
        &format!("popularity:graph={}", s(&graph)),
        "--hypothesis",
        &format!("structural:graph={},diagonal=0.5,label=links", s(&graph)),
        "--seed",
        "9",
        "--jobs",
        "3",
        "--emit-priors",
        "--out",
        s(&first),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let second = tmp.path().join("second");
    let res = trailcmp(&[
        "run",
        "--manifest",
        s(&first.join("manifest.json")),
        "--out",
        s(&second),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));

    let a = report_files(&first);
    assert!(a.iter().any(|(n, _)| n.starts_with("priors")));
    assert_eq!(a, report_files(&second));
}

#[test]
fn json_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (trails, _) = small_inputs(tmp.path());
    let out = tmp.path().join("out");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis",
        "self-loop",
        "--format",
        "json",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(out.join("evidence.json")).unwrap();
    assert!(text.contains("\"hypothesis\": \"self-loop\""));
    assert!(out.join("curves.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let (trails, _) = small_inputs(tmp.path());
    let out = tmp.path().join("out");

    let short = write(tmp.path(), "short.tsv", "a\tb\nc\n");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&short),
        "--hypothesis",
        "uniform",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains(":2"));

    let bad_weight = write(tmp.path(), "h.tsv", "m=3\na\tb\tlots\n");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis-file",
        s(&bad_weight),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 2);

    let wrong_m = write(tmp.path(), "h4.tsv", "m=4\na\tb\t1\n");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis-file",
        s(&wrong_m),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 3);

    let unknown = write(tmp.path(), "hx.tsv", "m=3\na\tzz\t1\n");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis-file",
        s(&unknown),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 3);

    let geo = write(tmp.path(), "geo.tsv", "a\t48.2\t16.4\n");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis",
        &format!("geo:table={}", s(&geo)),
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 4);

    let res = trailcmp(&[
        "synth-suite",
        "--nodes",
        "20",
        "--trails-per-corpus",
        "3",
        "--length",
        "2",
    ]);
    assert_eq!(code(&res), 5);
    assert!(String::from_utf8_lossy(&res.stderr).contains("corpus="));

    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--hypothesis",
        "nonsense",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 1);
}

#[test]
fn toy_priors_report() {
    let tmp = tempfile::tempdir().unwrap();
    let (trails, _) = small_inputs(tmp.path());
    let out = tmp.path().join("toy");
    let res = trailcmp(&[
        "toy-priors",
        "--trails",
        s(&trails),
        "--c",
        "0,1,5",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0);
    let text = fs::read_to_string(out.join("toy_priors.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 9);
    let at_zero: Vec<&str> = rows.iter().filter(|r| r[1] == "0").map(|r| r[2]).collect();
    assert!(at_zero.iter().all(|v| *v == at_zero[0]));
}

#[test]
fn generate_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = tmp.path().join("graph.tsv");
    let trails = tmp.path().join("trails.tsv");
    let res = trailcmp(&["gen-network", "--nodes", "200", "--seed", "3", "--out", s(&graph)]);
    assert_eq!(code(&res), 0);
    let res = trailcmp(&[
        "gen-trails",
        "--graph",
        s(&graph),
        "--mechanism",
        "structural",
        "--trails-per-corpus",
        "300",
        "--out",
        s(&trails),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(fs::read_to_string(&trails).unwrap().lines().count(), 300);

    let out = tmp.path().join("out");
    let res = trailcmp(&[
        "run",
        "--trails",
        s(&trails),
        "--reset",
        "--hypothesis",
        "uniform",
        "--hypothesis",
        &format!("structural:graph={}", s(&graph)),
        "--k",
        "3",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let ranking = fs::read_to_string(out.join("ranking.tsv")).unwrap();
    assert!(
        ranking.lines().nth(1).unwrap().starts_with("3\t1\tstructural\t"),
        "{ranking}"
    );

    let plots = tmp.path().join("plots");
    let res = trailcmp(&[
        "plot-data",
        "--evidence",
        s(&out.join("evidence.tsv")),
        "--out",
        s(&plots),
    ]);
    assert_eq!(code(&res), 0);
    assert!(plots.join("curves/structural.tsv").exists());
}

#[test]
fn suite_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("suite");
    let res = trailcmp(&["synth-suite", "--nodes", "500", "--k", "1,2", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    for f in [
        "graph.tsv",
        "config.json",
        "suite_summary.tsv",
        "structural/evidence.tsv",
        "popularity/ranking.tsv",
        "teleportation/trails.tsv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
}

#[test]
fn default_scale_suite_finds_every_mechanism() {
    let tmp = tempfile::tempdir().unwrap();
    let res = trailcmp(&["synth-suite", "--out", s(&tmp.path().join("suite"))]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}
