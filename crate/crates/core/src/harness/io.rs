//! Dataset files: one row per (query, document).
//!
//! TSV columns are `query_id doc_id relevance score_retrieval score_rank`,
//! with an optional header line. JSONL rows are objects with the same keys.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::{DocRecord, QueryRecord};

pub const COLUMNS: [&str; 5] = ["query_id", "doc_id", "relevance", "score_retrieval", "score_rank"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Jsonl,
}

impl Format {
    /// `.jsonl`/`.json` map to JSONL, anything else to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Self::Jsonl,
            _ => Self::Tsv,
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Self::Tsv),
            "jsonl" => Ok(Self::Jsonl),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    query_id: String,
    doc_id: String,
    relevance: i64,
    score_retrieval: f64,
    score_rank: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DatasetSummary {
    pub rows: usize,
    pub queries: usize,
}

/// Groups rows by query in order of first appearance.
#[derive(Default)]
struct Grouper {
    index: HashMap<String, usize>,
    queries: Vec<QueryRecord>,
    rows: usize,
}

impl Grouper {
    fn push(&mut self, line: usize, row: Row) -> Result<()> {
        let data_err = |msg: String| Error::Data { line, msg };
        if row.relevance < 0 {
            return Err(data_err(format!("negative relevance {}", row.relevance)));
        }
        let relevance = u32::try_from(row.relevance)
            .map_err(|_| data_err(format!("relevance {} too large", row.relevance)))?;
        let doc = DocRecord::new(row.doc_id, relevance, row.score_retrieval, row.score_rank);
        doc.validate().map_err(|e| data_err(e.to_string()))?;
        let qi = match self.index.get(&row.query_id) {
            Some(&i) => i,
            None => {
                self.index.insert(row.query_id.clone(), self.queries.len());
                self.queries.push(QueryRecord { query_id: row.query_id, docs: Vec::new() });
                self.queries.len() - 1
            }
        };
        let q = &mut self.queries[qi];
        if q.docs.iter().any(|d| d.doc_id == doc.doc_id) {
            return Err(data_err(format!("duplicate doc_id {} in query {}", doc.doc_id, q.query_id)));
        }
        q.docs.push(doc);
        self.rows += 1;
        Ok(())
    }

    fn finish(self) -> (Vec<QueryRecord>, DatasetSummary) {
        let summary = DatasetSummary { rows: self.rows, queries: self.queries.len() };
        (self.queries, summary)
    }
}

pub fn read_tsv<R: std::io::Read>(reader: R) -> Result<(Vec<QueryRecord>, DatasetSummary)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut g = Grouper::default();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data {
            line: e.position().map_or(i + 1, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if i == 0 && rec.get(0) == Some(COLUMNS[0]) {
            continue;
        }
        if rec.len() != COLUMNS.len() {
            return Err(Error::Data {
                line,
                msg: format!("expected {} tab-separated fields, found {}", COLUMNS.len(), rec.len()),
            });
        }
        let row: Row = rec
            .deserialize(Some(&csv::StringRecord::from(COLUMNS.to_vec())))
            .map_err(|e| Error::Data { line, msg: e.to_string() })?;
        g.push(line, row)?;
    }
    Ok(g.finish())
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<(Vec<QueryRecord>, DatasetSummary)> {
    let mut g = Grouper::default();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&text).map_err(|e| Error::Data { line: line_no, msg: e.to_string() })?;
        g.push(line_no, row)?;
    }
    Ok(g.finish())
}

pub fn load_dataset(path: &Path, format: Format) -> Result<(Vec<QueryRecord>, DatasetSummary)> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let out = match format {
        Format::Tsv => read_tsv(reader),
        Format::Jsonl => read_jsonl(reader),
    }?;
    if out.0.is_empty() {
        return Err(Error::Data { line: 0, msg: format!("{} contains no rows", path.display()) });
    }
    Ok(out)
}

pub fn write_tsv<W: Write>(mut w: W, queries: &[QueryRecord]) -> Result<()> {
    writeln!(w, "{}", COLUMNS.join("\t"))?;
    for q in queries {
        for d in &q.docs {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                q.query_id, d.doc_id, d.relevance, d.score_retrieval, d.score_rank
            )?;
        }
    }
    Ok(())
}

pub fn write_jsonl<W: Write>(mut w: W, queries: &[QueryRecord]) -> Result<()> {
    for q in queries {
        for d in &q.docs {
            let row = serde_json::json!({
                "query_id": q.query_id,
                "doc_id": d.doc_id,
                "relevance": d.relevance,
                "score_retrieval": d.score_retrieval,
                "score_rank": d.score_rank,
            });
            writeln!(w, "{row}")?;
        }
    }
    Ok(())
}

pub fn write_dataset<W: Write>(w: W, queries: &[QueryRecord], format: Format) -> Result<()> {
    match format {
        Format::Tsv => write_tsv(w, queries),
        Format::Jsonl => write_jsonl(w, queries),
    }
}
