//! Benchmark runner: P@5, P@3, P@1 and MRR per pipeline, macro-averaged over queries.
//!
//! Benchmark file (TSV, `#` comments, header row required):
//! `query_id  modality  text`.
//! Judgments file (TSV, header row required):
//! `query_id  doc_id  page_no  block_id  relevant`, with an empty `block_id`
//! for page (text) units and `relevant` one of `0`/`1`.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::index::IndexSnapshot;
use crate::model::Modality;
use crate::ranking::{RankedList, UnitId};
use crate::retrieval::{Engine, Query, SearchError};

/// Depth every benchmark query is run at.
pub const BENCHMARK_K: usize = 5;
pub const DEFAULT_PIPELINES: [&str; 3] = ["keyword", "embedding", "hybrid"];
const DEFAULT_BENCHMARK: &str = include_str!("../data/benchmark.tsv");

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("duplicate query id `{0}`")]
    DuplicateQuery(String),
    #[error("duplicate judgment for query `{query_id}`, unit {unit_id}")]
    DuplicateJudgment { query_id: String, unit_id: UnitId },
    #[error("line {line}: no indexed unit for {doc_id} page {page_no} block {block_id:?}")]
    UnknownUnit {
        line: u64,
        doc_id: String,
        page_no: u32,
        block_id: Option<String>,
    },
    #[error("query `{query_id}` ({pipeline}): {source}")]
    Search {
        query_id: String,
        pipeline: String,
        #[source]
        source: Box<SearchError>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkQuery {
    pub query_id: String,
    pub modality: Modality,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub query_id: String,
    pub unit_id: UnitId,
    pub relevant: bool,
}

/// Relevance labels of one query. Unjudged units are not relevant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueryJudgments {
    relevant: HashSet<UnitId>,
}

impl QueryJudgments {
    pub fn relevant<I: IntoIterator<Item = UnitId>>(ids: I) -> Self {
        QueryJudgments {
            relevant: ids.into_iter().collect(),
        }
    }

    pub fn is_relevant(&self, unit: UnitId) -> bool {
        self.relevant.contains(&unit)
    }
}

/// All judgments, at most one per `(query_id, unit_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Judgments {
    by_query: HashMap<String, HashMap<UnitId, bool>>,
}

impl Judgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query_id: &str, unit_id: UnitId, relevant: bool) -> Result<(), EvalError> {
        let q = self.by_query.entry(query_id.to_owned()).or_default();
        if q.contains_key(&unit_id) {
            return Err(EvalError::DuplicateJudgment {
                query_id: query_id.to_owned(),
                unit_id,
            });
        }
        q.insert(unit_id, relevant);
        Ok(())
    }

    pub fn from_judgments(items: impl IntoIterator<Item = Judgment>) -> Result<Self, EvalError> {
        let mut j = Judgments::new();
        for item in items {
            j.insert(&item.query_id, item.unit_id, item.relevant)?;
        }
        Ok(j)
    }

    pub fn for_query(&self, query_id: &str) -> QueryJudgments {
        QueryJudgments::relevant(
            self.by_query
                .get(query_id)
                .into_iter()
                .flatten()
                .filter(|(_, r)| **r)
                .map(|(u, _)| *u),
        )
    }

    pub fn len(&self) -> usize {
        self.by_query.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parses a judgments TSV, resolving `(doc_id, page_no, block_id)` against `snapshot`.
    pub fn parse(src: &str, snapshot: &IndexSnapshot) -> Result<Self, EvalError> {
        let mut judgments = Judgments::new();
        for record in tsv_reader(src).records() {
            let record = record.map_err(csv_error)?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |i: usize| record.get(i).unwrap_or("").trim();
            let page_no: u32 = field(2).parse().map_err(|_| EvalError::Parse {
                line,
                message: format!("page_no `{}` is not a number", field(2)),
            })?;
            let relevant = match field(4) {
                "0" => false,
                "1" => true,
                other => {
                    return Err(EvalError::Parse {
                        line,
                        message: format!("relevance must be 0 or 1, got `{other}`"),
                    })
                }
            };
            let block_id = Some(field(3)).filter(|b| !b.is_empty());
            let unit = snapshot
                .find_unit(field(1), page_no, block_id)
                .ok_or_else(|| EvalError::UnknownUnit {
                    line,
                    doc_id: field(1).to_owned(),
                    page_no,
                    block_id: block_id.map(str::to_owned),
                })?;
            judgments.insert(field(0), unit, relevant)?;
        }
        Ok(judgments)
    }

    pub fn from_file(path: &Path, snapshot: &IndexSnapshot) -> Result<Self, EvalError> {
        Self::parse(&read(path)?, snapshot)
    }
}

fn tsv_reader(src: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(src.as_bytes())
}

fn csv_error(e: csv::Error) -> EvalError {
    EvalError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    }
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn parse_benchmark(src: &str) -> Result<Vec<BenchmarkQuery>, EvalError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in tsv_reader(src).records() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let modality = field(1).parse::<Modality>().map_err(|e| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if field(0).is_empty() || field(2).is_empty() {
            return Err(EvalError::Parse {
                line,
                message: "query_id and text must be non-empty".into(),
            });
        }
        if !seen.insert(field(0).to_owned()) {
            return Err(EvalError::DuplicateQuery(field(0).to_owned()));
        }
        out.push(BenchmarkQuery {
            query_id: field(0).to_owned(),
            modality,
            text: field(2).to_owned(),
        });
    }
    Ok(out)
}

/// The shipped 30-query benchmark.
pub fn default_benchmark() -> Vec<BenchmarkQuery> {
    parse_benchmark(DEFAULT_BENCHMARK).expect("shipped benchmark parses")
}

pub fn load_benchmark(path: &Path) -> Result<Vec<BenchmarkQuery>, EvalError> {
    parse_benchmark(&read(path)?)
}

/// Relevant units among the first `min(k, len)` results, divided by `k`.
///
/// # Panics
/// If `k` is zero.
pub fn precision_at_k(ranked: &RankedList, judgments: &QueryJudgments, k: usize) -> f64 {
    assert!(k > 0, "precision_at_k needs k >= 1");
    let hits = ranked.unit_ids().take(k).filter(|u| judgments.is_relevant(*u)).count();
    hits as f64 / k as f64
}

/// `1 / rank` of the first relevant result, 0 if there is none.
pub fn reciprocal_rank(ranked: &RankedList, judgments: &QueryJudgments) -> f64 {
    ranked
        .iter()
        .find(|e| judgments.is_relevant(e.unit_id))
        .map_or(0.0, |e| 1.0 / e.rank as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p_at_5: f64,
    pub p_at_3: f64,
    pub p_at_1: f64,
    pub mrr: f64,
}

impl Metrics {
    pub fn of(ranked: &RankedList, judgments: &QueryJudgments) -> Self {
        Metrics {
            p_at_5: precision_at_k(ranked, judgments, 5),
            p_at_3: precision_at_k(ranked, judgments, 3),
            p_at_1: precision_at_k(ranked, judgments, 1),
            mrr: reciprocal_rank(ranked, judgments),
        }
    }

    pub fn mean(items: &[Metrics]) -> Self {
        if items.is_empty() {
            return Metrics::default();
        }
        let n = items.len() as f64;
        let sum = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics {
            p_at_5: sum(|m| m.p_at_5),
            p_at_3: sum(|m| m.p_at_3),
            p_at_1: sum(|m| m.p_at_1),
            mrr: sum(|m| m.mrr),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query_id: String,
    pub modality: Modality,
    pub metrics: Metrics,
    pub results: Vec<UnitId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub pipeline: String,
    pub metrics: Metrics,
    pub queries: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub num_queries: usize,
    pub pipelines: Vec<PipelineReport>,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn pipeline(&self, name: &str) -> Option<&PipelineReport> {
        self.pipelines.iter().find(|p| p.pipeline == name)
    }

    /// Plain-text table, one row per pipeline.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>6} {:>6} {:>6} {:>6}", "pipeline", "P@5", "P@3", "P@1", "MRR");
        for p in &self.pipelines {
            let m = &p.metrics;
            let _ = writeln!(
                out,
                "{:<12} {:>6.3} {:>6.3} {:>6.3} {:>6.3}",
                p.pipeline, m.p_at_5, m.p_at_3, m.p_at_1, m.mrr
            );
        }
        let _ = writeln!(out, "({} queries, k={})", self.num_queries, self.k);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs the three default pipelines over every query at k=5.
pub fn run_benchmark(queries: &[BenchmarkQuery], judgments: &Judgments, engine: &Engine) -> Result<MetricsReport, EvalError> {
    run_benchmark_with(queries, judgments, engine, &DEFAULT_PIPELINES)
}

/// Pipelines run concurrently; the report is assembled in `pipelines` and query order.
///
/// A query whose modality has no vector store scores zero with a warning.
pub fn run_benchmark_with(
    queries: &[BenchmarkQuery],
    judgments: &Judgments,
    engine: &Engine,
    pipelines: &[&str],
) -> Result<MetricsReport, EvalError> {
    let runs: Vec<Result<(PipelineReport, Vec<String>), EvalError>> = std::thread::scope(|s| {
        let handles: Vec<_> = pipelines
            .iter()
            .map(|&name| s.spawn(move || run_pipeline(queries, judgments, engine, name)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("benchmark worker panicked"))
            .collect()
    });
    let mut report = MetricsReport {
        k: BENCHMARK_K,
        num_queries: queries.len(),
        ..Default::default()
    };
    for run in runs {
        let (pipeline, warnings) = run?;
        report.pipelines.push(pipeline);
        report.warnings.extend(warnings);
    }
    Ok(report)
}

fn run_pipeline(
    queries: &[BenchmarkQuery],
    judgments: &Judgments,
    engine: &Engine,
    pipeline: &str,
) -> Result<(PipelineReport, Vec<String>), EvalError> {
    let mut outcomes = Vec::with_capacity(queries.len());
    let mut warnings = Vec::new();
    for bq in queries {
        let err = |source: SearchError| EvalError::Search {
            query_id: bq.query_id.clone(),
            pipeline: pipeline.to_owned(),
            source: Box::new(source),
        };
        let q = Query::new(bq.text.clone(), bq.modality, pipeline, BENCHMARK_K).map_err(err)?;
        let ranked = match engine.search(&q) {
            Ok(r) => r,
            Err(SearchError::MissingStore(m)) => {
                let msg = format!("{pipeline}/{}: no {m} vector store, scored as zero", bq.query_id);
                warn!("{msg}");
                warnings.push(msg);
                RankedList::default()
            }
            Err(e) => return Err(err(e)),
        };
        outcomes.push(QueryOutcome {
            query_id: bq.query_id.clone(),
            modality: bq.modality,
            metrics: Metrics::of(&ranked, &judgments.for_query(&bq.query_id)),
            results: ranked.unit_ids().collect(),
        });
    }
    let per_query: Vec<Metrics> = outcomes.iter().map(|o| o.metrics).collect();
    Ok((
        PipelineReport {
            pipeline: pipeline.to_owned(),
            metrics: Metrics::mean(&per_query),
            queries: outcomes,
        },
        warnings,
    ))
}
