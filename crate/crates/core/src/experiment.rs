//! End-to-end runs over a grid of automaton families and hidden sizes.
//!
//! Layout under `output_dir` (all paths in the manifest are relative to it):
//!
//! ```text
//! automata/<automaton_id>.json
//! corpora/<automaton_id>.jsonl
//! models/<automaton_id>/rnn-D<D>.json
//! scores/<automaton_id>/rnn-D<D>.jsonl
//! cells/<automaton_id>__rnn-D<D>.json
//! families.json  manifest.json  results.tsv
//! ```
//!
//! A cell is one `(automaton, D)` pair. Finished cells leave a result file;
//! on a rerun a cell is reused when that file and every output it references
//! are present with the recorded content hashes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, AnalysisReport};
use crate::automaton::Dpfsa;
use crate::dataset::{build_dataset, Dataset, DatasetConfig};
use crate::error::{Error, Result};
use crate::eval::{kl_estimate, rnn_scores, KlEstimate};
use crate::generation::{generate_family, GenerationConfig};
use crate::results::{self, EvalRecord, Table};
use crate::rng;
use crate::rnn::{train, TrainConfig};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FAMILIES_FILE: &str = "families.json";
pub const RESULTS_FILE: &str = "results.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub generation: GenerationConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub d_grid: BTreeSet<usize>,
    pub replicates: usize,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub parallelism: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            generation: GenerationConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            d_grid: [2, 4, 6, 8, 10, 12, 16].into_iter().collect(),
            replicates: 1,
            output_dir: PathBuf::from("runs"),
            parallelism: 0,
        }
    }
}

#[derive(Serialize)]
struct HashedConfig<'a> {
    generation: &'a GenerationConfig,
    dataset: &'a DatasetConfig,
    train: &'a TrainConfig,
    d_grid: &'a BTreeSet<usize>,
    replicates: usize,
}

impl ExperimentConfig {
    /// Workstation-sized grid: |Q|, |Σ| ∈ {2, 4, 8}, all admissible ranks,
    /// D ∈ {2, 8, 16}, three replicates.
    pub fn desk() -> Self {
        let sizes: BTreeSet<usize> = [2, 4, 8].into_iter().collect();
        ExperimentConfig {
            generation: GenerationConfig {
                state_sizes: sizes.clone(),
                alphabet_sizes: sizes,
                ..GenerationConfig::default()
            },
            d_grid: [2, 8, 16].into_iter().collect(),
            replicates: 3,
            ..ExperimentConfig::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.train.validate()?;
        if self.d_grid.is_empty() || self.d_grid.contains(&0) {
            return Err(Error::Config("d_grid must be non-empty and positive".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be positive".into()));
        }
        if self.dataset.size <= self.dataset.min_test {
            return Err(Error::Config("dataset size must exceed min_test".into()));
        }
        Ok(())
    }

    /// SHA-256 of everything that affects results; excludes `output_dir`
    /// and `parallelism`.
    pub fn hash(&self) -> String {
        let h = HashedConfig {
            generation: &self.generation,
            dataset: &self.dataset,
            train: &self.train,
            d_grid: &self.d_grid,
            replicates: self.replicates,
        };
        sha256_hex(serde_json::to_string(&h).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn automaton_id(num_states: usize, alphabet_size: usize, replicate: usize, rank: usize) -> String {
    format!("q{num_states}-s{alphabet_size}-r{replicate}-R{rank}")
}

pub fn model_id(hidden: usize) -> String {
    format!("rnn-D{hidden}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyMember {
    pub automaton_id: String,
    pub rank: usize,
    pub kept: bool,
    pub analysis: AnalysisReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRecord {
    pub num_states: usize,
    pub alphabet_size: usize,
    pub replicate: usize,
    pub members: Vec<FamilyMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for CellError {
    fn from(e: &Error) -> Self {
        CellError {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub automaton_id: String,
    pub model_id: String,
    pub hidden: usize,
    pub dataset_seed: u64,
    pub train_seed: u64,
    pub automaton_file: String,
    pub dataset_file: Option<String>,
    pub checkpoint_file: Option<String>,
    pub score_file: Option<String>,
    /// SHA-256 of every referenced file, keyed by relative path.
    pub file_hashes: BTreeMap<String, String>,
    pub kl: Option<KlEstimate>,
    pub status: CellStatus,
    pub error: Option<CellError>,
}

impl CellRecord {
    pub fn key(&self) -> String {
        format!("{}__{}", self.automaton_id, self.model_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellResultFile {
    config_hash: String,
    cell: CellRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub tool_version: String,
    pub rng_algorithm: String,
    pub results_file: String,
    pub results_sha256: String,
    pub cells: Vec<CellRecord>,
    /// Wall-clock seconds per cell key; not covered by `content_hash`.
    pub timing: BTreeMap<String, f64>,
    /// SHA-256 of this manifest serialized with `timing` emptied and this
    /// field blank.
    pub content_hash: String,
}

impl Manifest {
    fn seal(&mut self) {
        let mut copy = self.clone();
        copy.timing.clear();
        copy.content_hash.clear();
        self.content_hash = sha256_hex(
            serde_json::to_string(&copy)
                .expect("manifest serializes")
                .as_bytes(),
        );
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// Checks that every referenced file exists under `root` with its
    /// recorded hash; returns the offending paths.
    pub fn verify(&self, root: &Path) -> Vec<String> {
        let mut bad = Vec::new();
        for c in &self.cells {
            for (rel, hash) in &c.file_hashes {
                if sha256_file(&root.join(rel)).ok().as_deref() != Some(hash.as_str()) {
                    bad.push(rel.clone());
                }
            }
        }
        if sha256_file(&root.join(&self.results_file)).ok().as_deref() != Some(self.results_sha256.as_str()) {
            bad.push(self.results_file.clone());
        }
        bad.sort();
        bad.dedup();
        bad
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub recomputed: Vec<String>,
    pub reused: Vec<String>,
    pub failed: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub manifest: Manifest,
    pub families: Vec<FamilyRecord>,
    pub records: Vec<EvalRecord>,
    pub summary: RunSummary,
}

struct Member {
    id: String,
    num_states: usize,
    alphabet_size: usize,
    replicate: usize,
    automaton: Dpfsa,
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> Result<()> {
    if fs::read(path).ok().as_deref() == Some(bytes) {
        return Ok(());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

fn families(config: &ExperimentConfig) -> Result<(Vec<FamilyRecord>, Vec<Member>)> {
    let gen = &config.generation;
    let mut records = Vec::new();
    let mut kept = Vec::new();
    for &q in &gen.state_sizes {
        for &s in &gen.alphabet_sizes {
            for rep in 0..config.replicates {
                let family = generate_family(gen, q, s, rep as u64)?;
                let mut members = Vec::with_capacity(family.len());
                for a in family {
                    let report = analysis::analyze(&a)?;
                    let id = automaton_id(q, s, rep, a.declared_rank());
                    let keep = report.expected_length <= gen.length_filter_threshold;
                    members.push(FamilyMember {
                        automaton_id: id.clone(),
                        rank: a.declared_rank(),
                        kept: keep,
                        analysis: report,
                    });
                    if keep {
                        kept.push(Member {
                            id,
                            num_states: q,
                            alphabet_size: s,
                            replicate: rep,
                            automaton: a,
                        });
                    }
                }
                records.push(FamilyRecord {
                    num_states: q,
                    alphabet_size: s,
                    replicate: rep,
                    members,
                });
            }
        }
    }
    Ok((records, kept))
}

fn dataset_seed(config: &ExperimentConfig, m: &Member) -> u64 {
    rng::derive_seed_multi(
        config.generation.master_seed,
        "dataset",
        &[
            m.num_states as u64,
            m.alphabet_size as u64,
            m.replicate as u64,
            m.automaton.declared_rank() as u64,
        ],
    )
}

fn train_seed(config: &ExperimentConfig, m: &Member, hidden: usize) -> u64 {
    rng::derive_seed_multi(
        config.generation.master_seed ^ config.train.seed,
        "train",
        &[
            m.num_states as u64,
            m.alphabet_size as u64,
            m.replicate as u64,
            m.automaton.declared_rank() as u64,
            hidden as u64,
        ],
    )
}

fn cell_result_path(root: &Path, aid: &str, mid: &str) -> PathBuf {
    root.join("cells").join(format!("{aid}__{mid}.json"))
}

fn try_reuse(root: &Path, config_hash: &str, aid: &str, mid: &str) -> Option<CellRecord> {
    let text = fs::read_to_string(cell_result_path(root, aid, mid)).ok()?;
    let file: CellResultFile = serde_json::from_str(&text).ok()?;
    if file.config_hash != config_hash || file.cell.status != CellStatus::Ok {
        return None;
    }
    for (rel, hash) in &file.cell.file_hashes {
        if sha256_file(&root.join(rel)).ok()? != *hash {
            return None;
        }
    }
    Some(file.cell)
}

struct MemberOutcome {
    cells: Vec<(CellRecord, bool, f64)>,
}

fn run_member(config: &ExperimentConfig, config_hash: &str, m: &Member) -> Result<MemberOutcome> {
    let root = &config.output_dir;
    let automaton_rel = rel(&["automata", &format!("{}.json", m.id)]);
    let automaton_text = m.automaton.to_json()? + "\n";
    write_if_changed(&root.join(&automaton_rel), automaton_text.as_bytes())?;
    let automaton_hash = sha256_hex(automaton_text.as_bytes());
    let d_seed = dataset_seed(config, m);

    let hidden: Vec<usize> = config.d_grid.iter().copied().collect();
    let reused: Vec<Option<CellRecord>> = hidden
        .iter()
        .map(|&d| try_reuse(root, config_hash, &m.id, &model_id(d)))
        .collect();

    let needs_data = reused.iter().any(Option::is_none);
    let mut dataset: Option<Result<(Dataset, String, String)>> = None;
    if needs_data {
        let built = build_dataset(&m.automaton, &m.id, d_seed, &config.dataset).and_then(|d| {
            let corpus_rel = rel(&["corpora", &format!("{}.jsonl", m.id)]);
            let text = d.to_jsonl();
            write_if_changed(&root.join(&corpus_rel), text.as_bytes())?;
            let hash = sha256_hex(text.as_bytes());
            Ok((d, corpus_rel, hash))
        });
        dataset = Some(built);
    }

    let cells = hidden
        .par_iter()
        .zip(reused.into_par_iter())
        .map(|(&d, prior)| -> Result<(CellRecord, bool, f64)> {
            let start = Instant::now();
            if let Some(cell) = prior {
                return Ok((cell, false, start.elapsed().as_secs_f64()));
            }
            let mid = model_id(d);
            let t_seed = train_seed(config, m, d);
            let mut cell = CellRecord {
                automaton_id: m.id.clone(),
                model_id: mid.clone(),
                hidden: d,
                dataset_seed: d_seed,
                train_seed: t_seed,
                automaton_file: automaton_rel.clone(),
                dataset_file: None,
                checkpoint_file: None,
                score_file: None,
                file_hashes: BTreeMap::from([(automaton_rel.clone(), automaton_hash.clone())]),
                kl: None,
                status: CellStatus::Failed,
                error: None,
            };
            let data = dataset.as_ref().expect("dataset built when a cell needs it");
            let (ds, corpus_rel, corpus_hash) = match data {
                Ok(v) => v,
                Err(e) => {
                    cell.error = Some(CellError::from(e));
                    return Ok((cell, true, start.elapsed().as_secs_f64()));
                }
            };
            cell.dataset_file = Some(corpus_rel.clone());
            cell.file_hashes.insert(corpus_rel.clone(), corpus_hash.clone());

            match compute_cell(config, m, ds, d, t_seed, &mut cell) {
                Ok(()) => {
                    cell.status = CellStatus::Ok;
                    let file = CellResultFile {
                        config_hash: config_hash.to_string(),
                        cell: cell.clone(),
                    };
                    let text = serde_json::to_string_pretty(&file)
                        .map_err(|e| Error::json("serializing cell result", e))?;
                    write_if_changed(&cell_result_path(root, &m.id, &mid), text.as_bytes())?;
                }
                Err(e @ Error::Io { .. }) => return Err(e),
                Err(e) => {
                    log::warn!("cell {} failed: {e}", cell.key());
                    cell.error = Some(CellError::from(&e));
                }
            }
            Ok((cell, true, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MemberOutcome { cells })
}

fn compute_cell(
    config: &ExperimentConfig,
    m: &Member,
    ds: &Dataset,
    hidden: usize,
    seed: u64,
    cell: &mut CellRecord,
) -> Result<()> {
    let root = &config.output_dir;
    let tc = TrainConfig {
        seed,
        ..config.train
    };
    let (lm, _) = train(&ds.train, m.alphabet_size, hidden, &tc)?;

    let ckpt_rel = rel(&["models", &m.id, &format!("{}.json", cell.model_id)]);
    let ckpt_path = root.join(&ckpt_rel);
    ensure_dir(ckpt_path.parent().expect("has parent"))?;
    lm.save(&ckpt_path)?;
    cell.file_hashes.insert(ckpt_rel.clone(), sha256_file(&ckpt_path)?);
    cell.checkpoint_file = Some(ckpt_rel);

    let scores = rnn_scores(&lm, &cell.model_id, &m.id, ds)?;
    let score_rel = rel(&["scores", &m.id, &format!("{}.jsonl", cell.model_id)]);
    let score_path = root.join(&score_rel);
    ensure_dir(score_path.parent().expect("has parent"))?;
    scores.save(&score_path)?;
    cell.file_hashes.insert(score_rel.clone(), sha256_file(&score_path)?);
    cell.score_file = Some(score_rel);

    cell.kl = Some(kl_estimate(&m.automaton, &scores, ds)?);
    Ok(())
}

/// One results row, with every predictor recomputed from the automaton file.
pub fn eval_record(root: &Path, cell: &CellRecord) -> Result<EvalRecord> {
    let kl = cell
        .kl
        .ok_or_else(|| Error::Config(format!("cell {} has no KL estimate", cell.key())))?;
    let a = Dpfsa::load(&root.join(&cell.automaton_file))?;
    Ok(EvalRecord {
        automaton_id: cell.automaton_id.clone(),
        model_id: cell.model_id.clone(),
        hidden: cell.hidden,
        num_states: a.num_states(),
        alphabet_size: a.alphabet().size(),
        rank: a.declared_rank(),
        expected_length: analysis::expected_length(&a)?,
        entropy_bits: analysis::entropy(&a)?,
        kl_bits: kl.kl_bits,
        kl_stderr_bits: kl.stderr_bits,
    })
}

/// Runs (or resumes) the whole grid and writes the manifest, family
/// manifest and results table.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let root = &config.output_dir;
    ensure_dir(root)?;
    let config_hash = config.hash();
    let (family_records, members) = families(config)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<MemberOutcome> = pool.install(|| {
        members
            .par_iter()
            .map(|m| run_member(config, &config_hash, m))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut summary = RunSummary::default();
    let mut cells = Vec::new();
    let mut timing = BTreeMap::new();
    for (cell, recomputed, secs) in outcomes.into_iter().flat_map(|o| o.cells) {
        let key = cell.key();
        if cell.status == CellStatus::Failed {
            summary.failed.push(key.clone());
        }
        if recomputed {
            summary.recomputed.push(key.clone());
        } else {
            summary.reused.push(key.clone());
        }
        timing.insert(key, secs);
        cells.push(cell);
    }
    if !cells.is_empty() && summary.failed.len() == cells.len() {
        return Err(Error::AllCellsFailed(cells.len()));
    }

    let records = cells
        .iter()
        .filter(|c| c.status == CellStatus::Ok)
        .map(|c| eval_record(root, c))
        .collect::<Result<Vec<_>>>()?;
    let tsv = results::to_tsv(&records);
    write_if_changed(&root.join(RESULTS_FILE), tsv.as_bytes())?;

    let families_text = serde_json::to_string_pretty(&family_records)
        .map_err(|e| Error::json("serializing families", e))?;
    write_if_changed(&root.join(FAMILIES_FILE), families_text.as_bytes())?;

    let mut manifest = Manifest {
        config_hash,
        tool_version: TOOL_VERSION.to_string(),
        rng_algorithm: rng::RNG_ALGORITHM.to_string(),
        results_file: RESULTS_FILE.to_string(),
        results_sha256: sha256_hex(tsv.as_bytes()),
        cells,
        timing,
        content_hash: String::new(),
    };
    manifest.seal();
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::json("serializing manifest", e))?;
    fs::write(root.join(MANIFEST_FILE), text + "\n").map_err(|e| Error::io(root.join(MANIFEST_FILE), e))?;

    Ok(ExperimentOutput {
        manifest,
        families: family_records,
        records,
        summary,
    })
}

/// Mean of a value column over a two-way grouping, with per-cell counts.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotGrid {
    pub row_name: String,
    pub col_name: String,
    pub value_name: String,
    pub row_keys: Vec<String>,
    pub col_keys: Vec<String>,
    pub means: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

fn axis_sort(keys: &mut Vec<String>) {
    let numeric: Option<Vec<f64>> = keys.iter().map(|k| k.parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => keys.sort_by(|a, b| {
            a.parse::<f64>()
                .unwrap()
                .total_cmp(&b.parse::<f64>().unwrap())
        }),
        None => keys.sort(),
    }
    keys.dedup();
}

/// Missing values (`NA`) are skipped; empty cells come out as `NA`.
pub fn export_plot(table: &Table, rows: &str, cols: &str, value: &str) -> Result<PlotGrid> {
    let (ri, ci, vi) = (table.column(rows)?, table.column(cols)?, table.column(value)?);
    let mut row_keys: Vec<String> = table.rows.iter().map(|r| r[ri].clone()).collect();
    let mut col_keys: Vec<String> = table.rows.iter().map(|r| r[ci].clone()).collect();
    axis_sort(&mut row_keys);
    axis_sort(&mut col_keys);
    let mut sums = vec![vec![0.0; col_keys.len()]; row_keys.len()];
    let mut counts = vec![vec![0usize; col_keys.len()]; row_keys.len()];
    for r in &table.rows {
        let v = results::parse_f64(&r[vi])?;
        if v.is_nan() {
            continue;
        }
        let i = row_keys.iter().position(|k| *k == r[ri]).expect("key collected");
        let j = col_keys.iter().position(|k| *k == r[ci]).expect("key collected");
        sums[i][j] += v;
        counts[i][j] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| {
            s.iter()
                .zip(c)
                .map(|(&s, &n)| (n > 0).then(|| s / n as f64))
                .collect()
        })
        .collect();
    Ok(PlotGrid {
        row_name: rows.to_string(),
        col_name: cols.to_string(),
        value_name: value.to_string(),
        row_keys,
        col_keys,
        means,
        counts,
    })
}

impl PlotGrid {
    fn matrix_tsv<T>(&self, cells: &[Vec<T>], fmt: impl Fn(&T) -> String) -> String {
        let mut out = format!("{}\\{}", self.row_name, self.col_name);
        for c in &self.col_keys {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for (key, row) in self.row_keys.iter().zip(cells) {
            out.push_str(key);
            for v in row {
                out.push('\t');
                out.push_str(&fmt(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn means_tsv(&self) -> String {
        self.matrix_tsv(&self.means, |v| {
            v.map(results::fmt_f64).unwrap_or_else(|| results::NA.to_string())
        })
    }

    pub fn counts_tsv(&self) -> String {
        self.matrix_tsv(&self.counts, |n| n.to_string())
    }

    pub fn mean(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.row_keys.iter().position(|k| k == row)?;
        let j = self.col_keys.iter().position(|k| k == col)?;
        self.means[i][j]
    }
}

/// Axis pairings exported by default, each for `kl_bits` and `H_bits`.
pub const DEFAULT_PAIRINGS: [(&str, &str); 3] = [("|Q|", "R"), ("|Σ|", "R"), ("D", "R")];
pub const DEFAULT_VALUES: [&str; 2] = ["kl_bits", "H_bits"];

/// File stem for a grid, e.g. `kl_bits__Q_x_R`.
pub fn plot_file_stem(rows: &str, cols: &str, value: &str) -> String {
    let clean = |s: &str| -> String {
        s.replace('Σ', "Sigma")
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' })
            .collect::<String>()
            .trim_matches('_')
            .to_string()
    };
    format!("{}__{}_x_{}", clean(value), clean(rows), clean(cols))
}
