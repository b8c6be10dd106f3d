//! Results table: one row per (automaton, model) cell.
//!
//! Tab-separated, header row, `.` decimal separator, `NA` for missing values.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 12] = [
    "automaton_id",
    "model_id",
    "D",
    "|Q|",
    "|Σ|",
    "|Q||Σ|",
    "R",
    "exp_len",
    "min(|Q|,|Σ|+1)",
    "H_bits",
    "kl_bits",
    "kl_stderr_bits",
];

pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub automaton_id: String,
    pub model_id: String,
    pub hidden: usize,
    pub num_states: usize,
    pub alphabet_size: usize,
    pub rank: usize,
    pub expected_length: f64,
    pub entropy_bits: f64,
    pub kl_bits: f64,
    pub kl_stderr_bits: f64,
}

impl EvalRecord {
    pub fn transitions(&self) -> usize {
        self.num_states * self.alphabet_size
    }

    pub fn rank_bound(&self) -> usize {
        self.num_states.min(self.alphabet_size + 1)
    }
}

/// A generic TSV table with string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Table("missing header row".into()))?
            .split('\t')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split('\t').map(str::to_string).collect();
            if row.len() != header.len() {
                return Err(Error::Table(format!(
                    "row {} has {} fields, header has {}",
                    i + 2,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }
}

pub fn to_tsv(records: &[EvalRecord]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.automaton_id,
            r.model_id,
            r.hidden,
            r.num_states,
            r.alphabet_size,
            r.transitions(),
            r.rank,
            fmt_f64(r.expected_length),
            r.rank_bound(),
            fmt_f64(r.entropy_bits),
            fmt_f64(r.kl_bits),
            fmt_f64(r.kl_stderr_bits),
        );
    }
    out
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        NA.to_string()
    } else {
        format!("{v}")
    }
}

pub fn parse_f64(cell: &str) -> Result<f64> {
    if cell == NA {
        return Ok(f64::NAN);
    }
    cell.parse()
        .map_err(|_| Error::Table(format!("not a number: {cell:?}")))
}

pub fn from_tsv(text: &str) -> Result<Vec<EvalRecord>> {
    let table = Table::parse(text)?;
    let idx = COLUMNS
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    let int = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Table(format!("not an integer: {s:?}")))
    };
    table
        .rows
        .iter()
        .map(|row| {
            let f = |i: usize| row[idx[i]].as_str();
            Ok(EvalRecord {
                automaton_id: f(0).to_string(),
                model_id: f(1).to_string(),
                hidden: int(f(2))?,
                num_states: int(f(3))?,
                alphabet_size: int(f(4))?,
                rank: int(f(6))?,
                expected_length: parse_f64(f(7))?,
                entropy_bits: parse_f64(f(9))?,
                kl_bits: parse_f64(f(10))?,
                kl_stderr_bits: parse_f64(f(11))?,
            })
        })
        .collect()
}

pub fn load(path: &Path) -> Result<Vec<EvalRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_tsv(&text)
}
