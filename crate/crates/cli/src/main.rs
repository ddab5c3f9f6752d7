use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use trailcmp::elicitation::ResetRow;
use trailcmp::experiment::{
    load_corpus, parse_k_list, run_experiment, toy_prior_sweep, write_toy_report, ExperimentConfig,
    HypothesisSpec, RunManifest, DEFAULT_K, DEFAULT_TOY_C,
};
use trailcmp::report::{emit_plot_data, parse_evidence_tsv, OutputFormat};
use trailcmp::suite::{run_synthetic_suite, SuiteConfig};
use trailcmp::synth::{
    node_trails_to_raw, popularity_walk, price_network, structural_walk, teleportation_walk, DirectedGraph,
    GeneratorConfig,
};
use trailcmp::{corpus, Error, Result};

/// Compare hypotheses about sequential trails by Bayesian evidence.
#[derive(Parser)]
#[command(name = "trailcmp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate hypotheses on a trail file over a range of k.
    Run(RunArgs),
    /// Generate a network and three corpora and check the expected rankings.
    SynthSuite(SuiteArgs),
    /// Evidence of the uniform, aligned and opposing toy priors.
    ToyPriors(ToyArgs),
    /// Write a preferential-attachment network as an edge list.
    GenNetwork(GenNetworkArgs),
    /// Write trails walked on a network.
    GenTrails(GenTrailsArgs),
    /// Turn an evidence table into one curve per hypothesis.
    PlotData(PlotArgs),
}

#[derive(Clone)]
struct KList(Vec<u64>);

fn k_list(s: &str) -> Result<KList> {
    parse_k_list(s).map(KList)
}

#[derive(Args)]
struct RunArgs {
    /// Re-run the configuration recorded in a manifest.json.
    #[arg(long, conflicts_with_all = ["trails", "hypothesis", "hypothesis_file"])]
    manifest: Option<PathBuf>,
    /// Trail file, one tab-separated trail per line.
    #[arg(long, required_unless_present = "manifest")]
    trails: Option<PathBuf>,
    /// Add a reset state before every trail.
    #[arg(long)]
    reset: bool,
    /// Hypothesis row for the reset state: uniform-row or zero-row.
    #[arg(long, default_value = "uniform-row")]
    reset_row: ResetRow,
    /// Builder spec NAME[:key=value,...]. Repeatable.
    #[arg(long = "hypothesis", value_name = "NAME:PARAMS")]
    hypothesis: Vec<HypothesisSpec>,
    /// Hypothesis matrix file. Repeatable.
    #[arg(long = "hypothesis-file", value_name = "PATH")]
    hypothesis_file: Vec<PathBuf>,
    /// Comma-separated k values.
    #[arg(long, value_parser = k_list)]
    k: Option<KList>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write every elicited prior under priors/.
    #[arg(long)]
    emit_priors: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Tsv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Tsv => OutputFormat::Tsv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct GeneratorArgs {
    #[arg(long)]
    nodes: Option<usize>,
    /// Out-links per node added after the clique.
    #[arg(long)]
    m_out: Option<usize>,
    #[arg(long)]
    clique: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct WalkArgs {
    #[arg(long = "trails-per-corpus")]
    trails: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    /// Softmax temperature of the popularity walker.
    #[arg(long)]
    temperature: Option<f64>,
    /// Let the teleporting walker stay on the current node.
    #[arg(long)]
    teleport_allow_self: bool,
}

impl GeneratorArgs {
    fn apply(&self, cfg: &mut GeneratorConfig) {
        if let Some(v) = self.nodes {
            cfg.nodes = v;
        }
        if let Some(v) = self.m_out {
            cfg.out_degree = v;
        }
        if let Some(v) = self.clique {
            cfg.clique = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
    }
}

impl WalkArgs {
    fn apply(&self, cfg: &mut GeneratorConfig) {
        if let Some(v) = self.trails {
            cfg.trails = v;
        }
        if let Some(v) = self.length {
            cfg.trail_length = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        cfg.teleport_allow_self |= self.teleport_allow_self;
    }
}

#[derive(Args)]
struct SuiteArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    #[command(flatten)]
    walk: WalkArgs,
    #[arg(long, value_parser = k_list)]
    k: Option<KList>,
    /// Do not add a reset state.
    #[arg(long)]
    no_reset: bool,
    #[arg(long, default_value = "zero-row")]
    reset_row: ResetRow,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ToyArgs {
    #[arg(long)]
    trails: PathBuf,
    #[arg(long)]
    reset: bool,
    /// Comma-separated pseudo-count constants.
    #[arg(long, value_parser = k_list)]
    c: Option<KList>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
}

#[derive(Args)]
struct GenNetworkArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Edge list to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mechanism {
    Structural,
    Popularity,
    Teleport,
}

#[derive(Args)]
struct GenTrailsArgs {
    /// Edge list written by gen-network.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum)]
    mechanism: Mechanism,
    #[command(flatten)]
    walk: WalkArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Trail file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// evidence.tsv from a previous run.
    #[arg(long)]
    evidence: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "tsv")]
    format: Format,
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.manifest {
        Some(path) => RunManifest::read(path)?.config,
        None => {
            let mut hypotheses = args.hypothesis.clone();
            hypotheses.extend(args.hypothesis_file.iter().map(HypothesisSpec::file));
            ExperimentConfig {
                trails: args.trails.clone().expect("clap enforces --trails"),
                reset: args.reset,
                reset_row: args.reset_row,
                hypotheses,
                k: DEFAULT_K.to_vec(),
                seed: 1,
                out: PathBuf::from("out"),
                format: OutputFormat::Tsv,
                jobs: 1,
                emit_priors: false,
            }
        }
    };
    if let Some(k) = args.k {
        cfg.k = k.0;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(f) = args.format {
        cfg.format = f.into();
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    cfg.emit_priors |= args.emit_priors;

    let (eval, manifest) = run_experiment(&cfg)?;
    log::info!(
        "{} states, {} transitions, fingerprint {}",
        manifest.states,
        manifest.transitions,
        manifest.fingerprint
    );
    for r in &eval.rankings {
        let top = r.top();
        println!(
            "k={}\ttop={}\t{}",
            r.k,
            top.hypotheses.join(","),
            top.log_evidence[0]
        );
    }
    Ok(())
}

fn synth_suite(args: SuiteArgs) -> Result<()> {
    let mut cfg = SuiteConfig::default();
    args.generator.apply(&mut cfg.generator);
    args.walk.apply(&mut cfg.generator);
    if let Some(k) = args.k {
        cfg.k = k.0;
    }
    cfg.reset = !args.no_reset;
    cfg.reset_row = args.reset_row;
    cfg.out = args.out;
    cfg.format = args.format.into();
    cfg.jobs = args.jobs;
    let report = run_synthetic_suite(&cfg)?;
    print!("{}", report.summary_tsv());
    report.check()
}

fn toy_priors(args: ToyArgs) -> Result<()> {
    let (_, counts) = load_corpus(&args.trails, args.reset)?;
    let cs = args.c.map_or_else(|| DEFAULT_TOY_C.to_vec(), |c| c.0);
    let rows = toy_prior_sweep(&counts, &cs)?;
    write_toy_report(&rows, &args.out, args.format.into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen_network(args: GenNetworkArgs) -> Result<()> {
    let mut cfg = GeneratorConfig::default();
    args.generator.apply(&mut cfg);
    let g = price_network(&cfg)?;
    log::info!("{} nodes, {} edges", g.node_count(), g.edge_count());
    write_text(&args.out, &g.to_tsv())
}

fn gen_trails(args: GenTrailsArgs) -> Result<()> {
    let text = fs::read_to_string(&args.graph).map_err(|e| Error::Io {
        path: args.graph.clone(),
        source: e,
    })?;
    let g = DirectedGraph::parse_tsv(&text, &args.graph)?;
    let mut cfg = GeneratorConfig {
        nodes: g.node_count(),
        ..GeneratorConfig::default()
    };
    args.walk.apply(&mut cfg);
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let trails = match args.mechanism {
        Mechanism::Structural => structural_walk(&g, &cfg)?,
        Mechanism::Popularity => popularity_walk(&g, &cfg)?,
        Mechanism::Teleport => teleportation_walk(g.node_count(), &cfg)?,
    };
    corpus::write_trail_file(&args.out, &node_trails_to_raw(&trails))
}

fn plot_data(args: PlotArgs) -> Result<()> {
    let text = fs::read_to_string(&args.evidence).map_err(|e| Error::Io {
        path: args.evidence.clone(),
        source: e,
    })?;
    let rows = parse_evidence_tsv(&text, &args.evidence)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::Io {
        path: args.out.clone(),
        source: e,
    })?;
    emit_plot_data(&rows, &args.out, args.format.into())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::SynthSuite(a) => synth_suite(a),
        Command::ToyPriors(a) => toy_priors(a),
        Command::GenNetwork(a) => gen_network(a),
        Command::GenTrails(a) => gen_trails(a),
        Command::PlotData(a) => plot_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
