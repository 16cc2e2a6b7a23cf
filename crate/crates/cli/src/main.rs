use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use factdiff_core::classify::lint_rules;
use factdiff_core::metrics::{aggregate, bleedover_bins, AggregateReport, NeighborBleedover, UpdateCaseResult};
use factdiff_core::pipeline::{read_dataset, Pipeline, RunConfig, StageReport, REPLACEMENT_FILE};
use factdiff_core::probe::{
    emit_probe_requests, plan_cases, read_responses_jsonl, score_run, write_requests_jsonl, ProbeMode,
};
use factdiff_core::{jsonl, Date};

#[derive(Parser)]
#[command(name = "factdiff", version, about = "Build a factual-update dataset from two knowledge-base snapshots")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage, from ingestion to the final dataset files.
    Build(BuildArgs),
    /// Run the stages up to the diff.
    Diff(StageArgs),
    /// Run the stages up to classification.
    Classify(ClassifyArgs),
    /// Run the stages up to the neighbor search.
    Neighbors(StageArgs),
    /// Run the stages up to template selection.
    Verbalize(StageArgs),
    /// Write a probe request file for a dataset.
    EmitProbe(EmitArgs),
    /// Join pre/post probe responses and compute per-update metrics.
    Score(ScoreArgs),
    /// Aggregate scored runs of one or more algorithms.
    Report(ReportArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    old: Option<PathBuf>,
    #[arg(long)]
    new: Option<PathBuf>,
    #[arg(long)]
    relations: Option<PathBuf>,
    #[arg(long)]
    popularity: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_old: Option<Date>,
    #[arg(long)]
    t_new: Option<Date>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        let i = &mut cfg.inputs;
        if let Some(p) = &self.old {
            i.old_snapshot = p.clone();
        }
        if let Some(p) = &self.new {
            i.new_snapshot = p.clone();
        }
        for (slot, flag) in [
            (&mut i.relations, &self.relations),
            (&mut i.popularity, &self.popularity),
            (&mut i.templates, &self.templates),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        if let Some(p) = &self.out_dir {
            cfg.out_dir = p.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = self.t_old {
            cfg.pipeline.t_old = d;
        }
        if let Some(d) = self.t_new {
            cfg.pipeline.t_new = d;
        }
        if let Some(k) = self.k {
            cfg.neighbors.k = k;
        }
        if let Some(n) = self.n {
            cfg.neighbors.n = n;
        }
        if cfg.out_dir.as_os_str().is_empty() {
            cfg.out_dir = PathBuf::from("factdiff-out");
        }
        if cfg.inputs.old_snapshot.as_os_str().is_empty() || cfg.inputs.new_snapshot.as_os_str().is_empty() {
            bail!("both snapshots are needed (inputs.old_snapshot / inputs.new_snapshot or --old / --new)");
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct BuildArgs {
    /// `--seed`, `--t-old` and `--t-new` are mandatory here, even with a
    /// config file, so a full build never depends on silent defaults.
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Only check the rule table for rows no context can reach.
    #[arg(long)]
    lint_rules: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Pre,
    Post,
    PromptBaseline,
}

impl From<Mode> for ProbeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Pre => ProbeMode::Pre,
            Mode::Post => ProbeMode::Post,
            Mode::PromptBaseline => ProbeMode::PromptBaseline,
        }
    }
}

#[derive(Args)]
struct ProbeArgs {
    /// Run configuration supplying the `probe` section and the seed.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dataset file; defaults to the replacement subset of the configured run.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ProbeArgs {
    fn resolve(&self) -> Result<(RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        let dataset = match &self.dataset {
            Some(d) => d.clone(),
            None if self.config.is_some() => cfg.stage_dir("dataset").join(REPLACEMENT_FILE),
            None => bail!("--dataset or --config is required"),
        };
        Ok((cfg, dataset))
    }
}

#[derive(Args)]
struct EmitArgs {
    #[command(flatten)]
    probe: ProbeArgs,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Request file to write.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    probe: ProbeArgs,
    #[arg(long)]
    pre: PathBuf,
    #[arg(long)]
    post: PathBuf,
    /// Name of the update method, used in report rows.
    #[arg(long)]
    algorithm: String,
    #[arg(short, long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directories written by `score`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Quantile bins per axis of the bleedover breakdown.
    #[arg(long, default_value_t = 5)]
    bins: usize,
    #[arg(short, long)]
    out_dir: PathBuf,
}

fn print_reports(reports: &[StageReport]) {
    for r in reports {
        let counts: Vec<String> = r.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{:<10} {:<8} {}", r.stage, if r.skipped { "cached" } else { "done" }, counts.join(" "));
    }
}

fn run_stages(cfg: RunConfig, last: &str) -> Result<()> {
    let pipeline = Pipeline::new(cfg)?;
    let reports = pipeline.run_through(last).map_err(|e| anyhow::anyhow!(e))?;
    print_reports(&reports);
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match cli.command {
        Command::Build(a) => {
            if a.cfg.seed.is_none() || a.cfg.t_old.is_none() || a.cfg.t_new.is_none() {
                bail!("build needs --seed, --t-old and --t-new");
            }
            run_stages(a.cfg.load()?, "dataset")
        }
        Command::Diff(a) => run_stages(a.cfg.load()?, "diff"),
        Command::Classify(a) if a.lint_rules => {
            let mut cfg = a.cfg.config.as_deref().map(RunConfig::load).transpose()?.unwrap_or_default().pipeline;
            if let Some(d) = a.cfg.t_old {
                cfg.t_old = d;
            }
            if let Some(d) = a.cfg.t_new {
                cfg.t_new = d;
            }
            print!("{}", lint_rules(&cfg));
            Ok(())
        }
        Command::Classify(a) => run_stages(a.cfg.load()?, "classify"),
        Command::Neighbors(a) => run_stages(a.cfg.load()?, "neighbors"),
        Command::Verbalize(a) => run_stages(a.cfg.load()?, "verbalize"),
        Command::EmitProbe(a) => {
            let (cfg, dataset) = a.probe.resolve()?;
            let records = read_dataset(&dataset).map_err(|e| anyhow::anyhow!(e))?;
            let params = cfg.probe_params();
            let cases = plan_cases(&records, &params)?;
            let requests = emit_probe_requests(&cases, a.mode.into(), &params);
            let w = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
            write_requests_jsonl(&requests, w)?;
            println!("{} cases, {} requests", cases.len(), requests.len());
            Ok(())
        }
        Command::Score(a) => {
            let (cfg, dataset) = a.probe.resolve()?;
            let records = read_dataset(&dataset).map_err(|e| anyhow::anyhow!(e))?;
            let params = cfg.probe_params();
            let cases = plan_cases(&records, &params)?;
            let pre = read_responses_jsonl(open(&a.pre)?)?;
            let post = read_responses_jsonl(open(&a.post)?)?;
            let run = score_run(&cases, &params, &a.algorithm, &pre, &post)?;
            fs::create_dir_all(&a.out_dir)?;
            jsonl::write(&run.results, BufWriter::new(File::create(a.out_dir.join("cases.jsonl"))?))?;
            jsonl::write(&run.neighbors, BufWriter::new(File::create(a.out_dir.join("neighbors.jsonl"))?))?;
            let report = AggregateReport { rows: vec![aggregate(&a.algorithm, &run.results)?] };
            fs::write(a.out_dir.join("report.tsv"), report.to_tsv())?;
            write_json(&a.out_dir.join("report.json"), &report)?;
            print!("{}", report.to_tsv());
            Ok(())
        }
        Command::Report(a) => {
            let mut rows = Vec::new();
            let mut neighbors: Vec<NeighborBleedover> = Vec::new();
            for dir in &a.runs {
                let results: Vec<UpdateCaseResult> = jsonl::read(open(&dir.join("cases.jsonl"))?)?;
                let nb: Vec<NeighborBleedover> = jsonl::read(open(&dir.join("neighbors.jsonl"))?)?;
                let scored: AggregateReport = serde_json::from_reader(open(&dir.join("report.json"))?)
                    .with_context(|| format!("{}: unreadable report.json", dir.display()))?;
                let Some(algorithm) = scored.rows.first().map(|r| r.algorithm.clone()) else {
                    bail!("{}: report.json has no row", dir.display());
                };
                rows.push(aggregate(&algorithm, &results)?);
                neighbors.extend(nb);
            }
            let report = AggregateReport { rows };
            fs::create_dir_all(&a.out_dir)?;
            fs::write(a.out_dir.join("report.tsv"), report.to_tsv())?;
            write_json(&a.out_dir.join("report.json"), &report)?;
            write_json(&a.out_dir.join("bleedover_bins.json"), &bleedover_bins(&neighbors, a.bins))?;
            print!("{}", report.to_tsv());
            Ok(())
        }
    }
}
