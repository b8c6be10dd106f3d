use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rlmlab::analysis;
use rlmlab::automaton::{Dpfsa, DEFAULT_RANK_TOL};
use rlmlab::dataset::{build_dataset, Dataset, DatasetConfig};
use rlmlab::eval::{automaton_scores, ingest_external_scores, kl_estimate, rnn_scores, Units};
use rlmlab::experiment::{
    self, export_plot, plot_file_stem, run_experiment, ExperimentConfig, DEFAULT_PAIRINGS, DEFAULT_VALUES,
};
use rlmlab::generation::{generate_family, GenerationConfig};
use rlmlab::regression::{build_design_matrix, ols_fit, regression_report};
use rlmlab::results::{self, Table};
use rlmlab::rnn::{train, RnnLm, TrainConfig};
use rlmlab::{Error, Result};

#[derive(Parser)]
#[command(name = "rlmlab", version, about = "Random automata, RNN language models and KL-based learnability analysis")]
struct Cli {
    /// Seed for whatever randomness the subcommand uses.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one automaton family and write its members.
    Generate(GenerateArgs),
    /// Sample a train/test corpus from an automaton.
    Sample(SampleArgs),
    /// Exact entropy, expected length and rank diagnostics.
    Analyze(AnalyzeArgs),
    /// Train an RNN language model on a corpus.
    Train(TrainArgs),
    /// Score the test split with a model or with the automaton itself.
    Score(ScoreArgs),
    /// Estimate KL divergence from a score file.
    Kl(KlArgs),
    /// Fit the complexity regression on a results table.
    Regress(RegressArgs),
    /// Grid means of a results column for plotting.
    ExportPlot(ExportPlotArgs),
    /// Run a full experiment grid.
    Run(RunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    alphabet: usize,
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Comma-separated rank grid.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    #[arg(long)]
    logit_std: Option<f64>,
    /// Drop members whose expected length exceeds this.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, env = "RLMLAB_OUTPUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    automaton: PathBuf,
    #[arg(long, default_value_t = 20_000)]
    size: usize,
    #[arg(long, default_value_t = 256)]
    max_len: usize,
    #[arg(long, default_value_t = 2_000)]
    min_test: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    automaton: PathBuf,
    /// Print the full report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Alphabet size, excluding EOS.
    #[arg(long)]
    alphabet: usize,
    #[arg(long)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, required_unless_present = "automaton", conflicts_with = "automaton")]
    model: Option<PathBuf>,
    #[arg(long)]
    automaton: Option<PathBuf>,
    #[arg(long)]
    model_id: Option<String>,
    #[arg(long, default_value = "automaton")]
    automaton_id: String,
    #[arg(long, value_enum, default_value_t = UnitsArg::Nats)]
    units: UnitsArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Nats,
    Bits,
}

#[derive(Args)]
struct KlArgs {
    #[arg(long)]
    automaton: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    scores: PathBuf,
}

#[derive(Args)]
struct RegressArgs {
    #[arg(long)]
    results: PathBuf,
    /// Only rows whose model_id starts with this prefix.
    #[arg(long)]
    model_prefix: Option<String>,
    /// Also write the coefficient table as TSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportPlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, requires = "cols")]
    rows: Option<String>,
    #[arg(long, requires = "rows")]
    cols: Option<String>,
    /// Value column; defaults to both kl_bits and H_bits.
    #[arg(long)]
    value: Option<String>,
    #[arg(long, env = "RLMLAB_OUTPUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config; unspecified fields take defaults.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, env = "RLMLAB_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Also write plot grids and the regression report.
    #[arg(long)]
    report: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn load_corpus(path: &Path, seed: u64) -> Result<Dataset> {
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::load(path, &id, seed, rlmlab::dataset::DEFAULT_MAX_LEN)
}

fn generate(seed: Option<u64>, a: GenerateArgs) -> Result<()> {
    let mut cfg = GenerationConfig {
        master_seed: seed.unwrap_or(0),
        ..GenerationConfig::default()
    };
    if let Some(r) = a.ranks {
        cfg.rank_grid = r.into_iter().collect();
    }
    if let Some(s) = a.logit_std {
        cfg.logit_std = s;
    }
    if let Some(t) = a.threshold {
        cfg.length_filter_threshold = t;
    }
    let family = generate_family(&cfg, a.states, a.alphabet, a.replicate)?;
    let mut written = Vec::new();
    for m in family {
        let report = analysis::analyze(&m)?;
        let id = experiment::automaton_id(a.states, a.alphabet, a.replicate as usize, m.declared_rank());
        let kept = report.expected_length <= cfg.length_filter_threshold;
        let file = kept.then(|| a.out_dir.join(format!("{id}.json")));
        if let Some(path) = &file {
            write(path, &(m.to_json()? + "\n"))?;
        }
        written.push(serde_json::json!({
            "automaton_id": id,
            "rank": m.declared_rank(),
            "kept": kept,
            "file": file,
            "entropy_bits": report.entropy_bits,
            "expected_length": report.expected_length,
        }));
    }
    print_json(&written);
    Ok(())
}

fn sample(seed: Option<u64>, a: SampleArgs) -> Result<()> {
    let automaton = Dpfsa::load(&a.automaton)?;
    let id = a.automaton.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let cfg = DatasetConfig {
        size: a.size,
        max_len: a.max_len,
        min_test: a.min_test,
    };
    let d = build_dataset(&automaton, &id, seed.unwrap_or(0), &cfg)?;
    write(&a.out, &d.to_jsonl())?;
    print_json(&serde_json::json!({
        "train": d.train.len(),
        "test": d.test.len(),
        "stats": d.stats,
    }));
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let automaton = Dpfsa::load(&a.automaton)?;
    let report = analysis::analyze(&automaton)?;
    if a.json {
        print_json(&serde_json::json!({
            "report": report,
            "logit_rank": automaton.logit_rank(DEFAULT_RANK_TOL).ok(),
            "declared_rank": automaton.declared_rank(),
        }));
    } else {
        println!("H = {} bits", report.entropy_bits);
        println!("E[len] = {}", report.expected_length);
        println!("declared rank = {}", automaton.declared_rank());
        if let Some(r) = report.logprob_matrix_rank {
            println!("log-prob matrix rank = {r}");
        }
    }
    Ok(())
}

fn train_cmd(seed: Option<u64>, a: TrainArgs) -> Result<()> {
    let d = load_corpus(&a.corpus, 0)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        grad_clip: a.grad_clip,
        seed: seed.unwrap_or(0),
        ..TrainConfig::default()
    };
    let (lm, trace) = train(&d.train, a.alphabet, a.hidden, &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    lm.save(&a.out)?;
    print_json(&trace);
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let d = load_corpus(&a.corpus, 0)?;
    let scores = match (&a.model, &a.automaton) {
        (Some(m), None) => {
            let lm = RnnLm::load(m)?;
            let id = a.model_id.clone().unwrap_or_else(|| experiment::model_id(lm.hidden()));
            rnn_scores(&lm, &id, &a.automaton_id, &d)?
        }
        (None, Some(p)) => automaton_scores(&Dpfsa::load(p)?, &a.automaton_id, &d)?,
        _ => unreachable!("clap enforces exactly one scorer"),
    };
    let units = match a.units {
        UnitsArg::Nats => Units::Nats,
        UnitsArg::Bits => Units::Bits,
    };
    write(&a.out, &scores.to_jsonl(units))?;
    Ok(())
}

fn kl(a: KlArgs) -> Result<()> {
    let automaton = Dpfsa::load(&a.automaton)?;
    let d = load_corpus(&a.corpus, 0)?;
    let scores = ingest_external_scores(&a.scores)?;
    print_json(&kl_estimate(&automaton, &scores, &d)?);
    Ok(())
}

fn regress(a: RegressArgs) -> Result<()> {
    let mut records = results::load(&a.results)?;
    if let Some(p) = &a.model_prefix {
        records.retain(|r| r.model_id.starts_with(p.as_str()));
    }
    let fit = ols_fit(&build_design_matrix(&records)?)?;
    let report = regression_report(&fit);
    print!("{}", report.text);
    if let Some(out) = &a.out {
        write(out, &report.tsv)?;
    }
    Ok(())
}

fn export(a: ExportPlotArgs) -> Result<()> {
    let table = Table::load(&a.results)?;
    let pairings: Vec<(String, String)> = match (a.rows, a.cols) {
        (Some(r), Some(c)) => vec![(r, c)],
        _ => DEFAULT_PAIRINGS.iter().map(|(r, c)| (r.to_string(), c.to_string())).collect(),
    };
    let values: Vec<String> = match a.value {
        Some(v) => vec![v],
        None => DEFAULT_VALUES.iter().map(|v| v.to_string()).collect(),
    };
    for path in write_plots(&table, &pairings, &values, &a.out_dir)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn write_plots(table: &Table, pairings: &[(String, String)], values: &[String], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (r, c) in pairings {
        for v in values {
            let grid = export_plot(table, r, c, v)?;
            let stem = plot_file_stem(r, c, v);
            let means = dir.join(format!("{stem}.tsv"));
            write(&means, &grid.means_tsv())?;
            write(&dir.join(format!("{stem}.counts.tsv")), &grid.counts_tsv())?;
            written.push(means);
        }
    }
    Ok(written)
}

fn run(seed: Option<u64>, a: RunArgs) -> Result<()> {
    let mut cfg = match (&a.config, a.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(Preset::Full)) => ExperimentConfig::default(),
        (None, _) => ExperimentConfig::desk(),
    };
    if let Some(s) = seed {
        cfg.generation.master_seed = s;
    }
    if let Some(dir) = a.output_dir {
        cfg.output_dir = dir;
    }
    if let Some(p) = a.parallelism {
        cfg.parallelism = p;
    }
    if let Some(r) = a.replicates {
        cfg.replicates = r;
    }
    let out = run_experiment(&cfg)?;
    log::info!(
        "{} cells recomputed, {} reused, {} failed",
        out.summary.recomputed.len(),
        out.summary.reused.len(),
        out.summary.failed.len()
    );
    let mut plots = Vec::new();
    if a.report {
        let table = Table::load(&cfg.output_dir.join(experiment::RESULTS_FILE))?;
        let pairings: Vec<(String, String)> =
            DEFAULT_PAIRINGS.iter().map(|(r, c)| (r.to_string(), c.to_string())).collect();
        let values: Vec<String> = DEFAULT_VALUES.iter().map(|v| v.to_string()).collect();
        plots = write_plots(&table, &pairings, &values, &cfg.output_dir.join("plots"))?;
        match build_design_matrix(&out.records).and_then(|dm| ols_fit(&dm)) {
            Ok(fit) => {
                let report = regression_report(&fit);
                write(&cfg.output_dir.join("regression.txt"), &report.text)?;
                write(&cfg.output_dir.join("regression.tsv"), &report.tsv)?;
            }
            Err(e) => log::warn!("regression skipped: {e}"),
        }
    }
    print_json(&serde_json::json!({
        "output_dir": cfg.output_dir,
        "rows": out.records.len(),
        "recomputed": out.summary.recomputed.len(),
        "reused": out.summary.reused.len(),
        "failed": out.summary.failed,
        "config_hash": out.manifest.config_hash,
        "plots": plots,
    }));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let seed = cli.seed;
    let result = match cli.command {
        Command::Generate(a) => generate(seed, a),
        Command::Sample(a) => sample(seed, a),
        Command::Analyze(a) => analyze(a),
        Command::Train(a) => train_cmd(seed, a),
        Command::Score(a) => score(a),
        Command::Kl(a) => kl(a),
        Command::Regress(a) => regress(a),
        Command::ExportPlot(a) => export(a),
        Command::Run(a) => run(seed, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
