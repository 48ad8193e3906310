//! Canonical run and model tables, and the numeric date encoding.
//!
//! Runs CSV header: `model_id,task_id,task_family,human_minutes,success`
//! with optional `attempt` and `weight` columns. Models CSV header:
//! `model_id,release_date,is_sota,k_thinking`. JSONL inputs use the same
//! field names, one object per line.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod synthetic;

pub const RUN_COLUMNS: [&str; 5] = ["model_id", "task_id", "task_family", "human_minutes", "success"];
pub const MODEL_COLUMNS: [&str; 4] = ["model_id", "release_date", "is_sota", "k_thinking"];

/// Metadata for the fifteen frontier models used by the trend analysis.
pub const REFERENCE_SOTA_MODELS_CSV: &str = include_str!("../data/sota_models.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: human_minutes must be positive (got {value})")]
    NonPositiveDifficulty { row: usize, value: f64 },
    #[error("row {row}: success must be 0 or 1 (got `{value}`)")]
    NonBinarySuccess { row: usize, value: String },
    #[error("row {row}: duplicate (model_id, task_id, attempt)")]
    DuplicateRun { row: usize },
    #[error("row {row}: unparseable date `{value}`")]
    UnparseableDate { row: usize, value: String },
    #[error("duplicate model_id `{0}`")]
    DuplicateModel(String),
    #[error("invalid date `{0}`")]
    InvalidDate(String),
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("{0}")]
    Io(String),
}

impl From<csv::Error> for DatasetError {
    fn from(e: csv::Error) -> Self {
        DatasetError::Io(e.to_string())
    }
}

impl From<std::io::Error> for DatasetError {
    fn from(e: std::io::Error) -> Self {
        DatasetError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskFamily {
    Hcast,
    ReBench,
    Swaa,
    Other,
}

impl TaskFamily {
    pub fn parse(s: &str) -> Self {
        let norm: String = s.trim().to_ascii_uppercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match norm.as_str() {
            "HCAST" => TaskFamily::Hcast,
            "REBENCH" => TaskFamily::ReBench,
            "SWAA" => TaskFamily::Swaa,
            _ => TaskFamily::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskFamily::Hcast => "HCAST",
            TaskFamily::ReBench => "RE_BENCH",
            TaskFamily::Swaa => "SWAA",
            TaskFamily::Other => "OTHER",
        }
    }
}

impl fmt::Display for TaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluation outcome of a model on a task.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub model_id: String,
    pub task_id: String,
    pub task_family: TaskFamily,
    /// Human expert completion time in minutes; the task difficulty.
    pub human_minutes: f64,
    pub success: bool,
    /// Zero-based attempt index among runs sharing (model_id, task_id).
    pub attempt: u32,
    pub weight: f64,
}

/// A rejected input row and why.
#[derive(Debug, Clone, PartialEq)]
pub struct RowReject {
    pub row: usize,
    pub error: DatasetError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTable {
    pub records: Vec<RunRecord>,
    pub rejects: Vec<RowReject>,
    /// Number of data rows read (excluding header and blank lines).
    pub input_rows: usize,
}

impl RunTable {
    pub fn from_records(records: Vec<RunRecord>) -> Self {
        let input_rows = records.len();
        RunTable { records, rejects: Vec::new(), input_rows }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Runs of one model, in input order.
    pub fn for_model<'a>(&'a self, model_id: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.records.iter().filter(move |r| r.model_id == model_id)
    }

    pub fn distinct_tasks(&self) -> usize {
        self.records.iter().map(|r| r.task_id.as_str()).collect::<HashSet<_>>().len()
    }

    pub fn has_weights(&self) -> bool {
        self.records.iter().any(|r| r.weight != 1.0)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let weighted = self.has_weights();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = RUN_COLUMNS.to_vec();
        header.push("attempt");
        if weighted {
            header.push("weight");
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.model_id.clone(),
                r.task_id.clone(),
                r.task_family.to_string(),
                r.human_minutes.to_string(),
                if r.success { "1".into() } else { "0".into() },
                r.attempt.to_string(),
            ];
            if weighted {
                row.push(r.weight.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

impl InputFormat {
    /// Guess from a file name; anything ending in `.jsonl`/`.json` is JSONL.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => InputFormat::Jsonl,
            _ => InputFormat::Csv,
        }
    }
}

/// Field accessor over either a CSV row or a JSON object.
trait RawRow {
    fn get(&self, key: &str) -> Option<String>;
}

struct CsvRow<'a> {
    index: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
}

impl RawRow for CsvRow<'_> {
    fn get(&self, key: &str) -> Option<String> {
        self.index.get(key).and_then(|&i| self.record.get(i)).map(|s| s.trim().to_string())
    }
}

impl RawRow for serde_json::Map<String, serde_json::Value> {
    fn get(&self, key: &str) -> Option<String> {
        match serde_json::Map::get(self, key)? {
            serde_json::Value::String(s) => Some(s.trim().to_string()),
            serde_json::Value::Null => None,
            serde_json::Value::Bool(b) => Some(if *b { "1".into() } else { "0".into() }),
            v => Some(v.to_string()),
        }
    }
}

fn parse_flag(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "1.0" | "true" | "yes" => Some(true),
        "0" | "0.0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Column names for one run-table dialect.
struct RunFields {
    model_id: &'static str,
    task_id: &'static str,
    task_family: &'static str,
    human_minutes: &'static str,
    success: &'static str,
    attempt: &'static str,
    weight: Option<&'static str>,
}

const CANONICAL_FIELDS: RunFields = RunFields {
    model_id: "model_id",
    task_id: "task_id",
    task_family: "task_family",
    human_minutes: "human_minutes",
    success: "success",
    attempt: "attempt",
    weight: Some("weight"),
};

/// Field names used by the public eval-analysis run dumps (`all_runs.jsonl`).
const METR_FIELDS: RunFields = RunFields {
    model_id: "alias",
    task_id: "task_id",
    task_family: "task_source",
    human_minutes: "human_minutes",
    success: "score_binarized",
    attempt: "run_id",
    weight: None,
};

struct RunBuilder<'f> {
    fields: &'f RunFields,
    table: RunTable,
    seen_labels: HashSet<(String, String, String)>,
    attempts: HashMap<(String, String), u32>,
}

impl<'f> RunBuilder<'f> {
    fn new(fields: &'f RunFields) -> Self {
        Self { fields, table: RunTable::default(), seen_labels: HashSet::new(), attempts: HashMap::new() }
    }

    fn push(&mut self, row: usize, raw: &dyn RawRow) {
        self.table.input_rows += 1;
        match self.parse(row, raw) {
            Ok(rec) => self.table.records.push(rec),
            Err(error) => self.table.rejects.push(RowReject { row, error }),
        }
    }

    fn parse(&mut self, row: usize, raw: &dyn RawRow) -> Result<RunRecord, DatasetError> {
        let f = self.fields;
        let required = |key: &str| -> Result<String, DatasetError> {
            raw.get(key).filter(|s| !s.is_empty()).ok_or_else(|| DatasetError::Malformed { row, message: format!("empty `{key}`") })
        };
        let model_id = required(f.model_id)?;
        let task_id = required(f.task_id)?;
        let task_family = TaskFamily::parse(&raw.get(f.task_family).unwrap_or_default());
        let minutes_raw = required(f.human_minutes)?;
        let human_minutes: f64 = minutes_raw
            .parse()
            .map_err(|_| DatasetError::Malformed { row, message: format!("human_minutes `{minutes_raw}` is not a number") })?;
        if !(human_minutes > 0.0) || !human_minutes.is_finite() {
            return Err(DatasetError::NonPositiveDifficulty { row, value: human_minutes });
        }
        let success_raw = raw.get(f.success).unwrap_or_default();
        let success = parse_flag(&success_raw).ok_or(DatasetError::NonBinarySuccess { row, value: success_raw })?;
        let weight = match f.weight.and_then(|k| raw.get(k)).filter(|s| !s.is_empty()) {
            None => 1.0,
            Some(w) => match w.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => v,
                _ => return Err(DatasetError::Malformed { row, message: format!("weight `{w}` must be positive") }),
            },
        };
        if let Some(label) = raw.get(f.attempt).filter(|s| !s.is_empty()) {
            if !self.seen_labels.insert((model_id.clone(), task_id.clone(), label)) {
                return Err(DatasetError::DuplicateRun { row });
            }
        }
        let counter = self.attempts.entry((model_id.clone(), task_id.clone())).or_insert(0);
        let attempt = *counter;
        *counter += 1;
        Ok(RunRecord { model_id, task_id, task_family, human_minutes, success, attempt, weight })
    }
}

fn csv_header_index<R: Read>(reader: &mut csv::Reader<R>) -> Result<HashMap<String, usize>, DatasetError> {
    Ok(reader.headers()?.iter().enumerate().map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i)).collect())
}

fn parse_runs_with<R: Read>(source: R, format: InputFormat, fields: &RunFields) -> Result<RunTable, DatasetError> {
    let required = [fields.model_id, fields.task_id, fields.task_family, fields.human_minutes, fields.success];
    let mut builder = RunBuilder::new(fields);
    match format {
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
            let index = csv_header_index(&mut reader)?;
            if let Some(missing) = required.iter().find(|c| !index.contains_key(**c)) {
                return Err(DatasetError::MissingColumn(missing.to_string()));
            }
            for (i, record) in reader.records().enumerate() {
                let row = i + 1;
                match record {
                    Ok(record) => builder.push(row, &CsvRow { index: &index, record: &record }),
                    Err(e) => {
                        builder.table.input_rows += 1;
                        builder.table.rejects.push(RowReject { row, error: DatasetError::Malformed { row, message: e.to_string() } });
                    }
                }
            }
        }
        InputFormat::Jsonl => {
            let mut row = 0;
            for line in BufReader::new(source).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                row += 1;
                match serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&line) {
                    Ok(obj) => {
                        if let Some(missing) = required.iter().find(|c| !obj.contains_key(**c)) {
                            if row == 1 {
                                return Err(DatasetError::MissingColumn(missing.to_string()));
                            }
                            builder.table.input_rows += 1;
                            builder.table.rejects.push(RowReject {
                                row,
                                error: DatasetError::Malformed { row, message: format!("missing field `{missing}`") },
                            });
                            continue;
                        }
                        builder.push(row, &obj);
                    }
                    Err(e) => {
                        builder.table.input_rows += 1;
                        builder.table.rejects.push(RowReject { row, error: DatasetError::Malformed { row, message: e.to_string() } });
                    }
                }
            }
        }
    }
    Ok(builder.table)
}

/// Parses a canonical run table. Row-level problems are collected in
/// [`RunTable::rejects`]; only a missing required column fails the whole parse.
pub fn parse_runs<R: Read>(source: R, format: InputFormat) -> Result<RunTable, DatasetError> {
    parse_runs_with(source, format, &CANONICAL_FIELDS)
}

/// Converts a run dump in the public eval-analysis layout (JSONL with
/// `alias`, `task_id`, `task_source`, `human_minutes`, `score_binarized`,
/// `run_id`) into a canonical table.
pub fn parse_metr_runs<R: Read>(source: R) -> Result<RunTable, DatasetError> {
    parse_runs_with(source, InputFormat::Jsonl, &METR_FIELDS)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub release_date: NaiveDate,
    pub is_sota: bool,
    /// Reasoning post-training present and active.
    pub k_thinking: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelTable {
    pub records: Vec<ModelRecord>,
}

pub fn parse_iso_date(s: &str) -> Result<NaiveDate, DatasetError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| DatasetError::InvalidDate(s.to_string()))
}

impl ModelTable {
    pub fn new(records: Vec<ModelRecord>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::new();
        for r in &records {
            if !seen.insert(r.model_id.as_str()) {
                return Err(DatasetError::DuplicateModel(r.model_id.clone()));
            }
        }
        Ok(ModelTable { records })
    }

    /// The bundled frontier-model metadata.
    pub fn reference_sota() -> Self {
        parse_models(REFERENCE_SOTA_MODELS_CSV.as_bytes(), InputFormat::Csv).expect("bundled model table is valid")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, model_id: &str) -> Option<&ModelRecord> {
        self.records.iter().find(|m| m.model_id == model_id)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ModelRecord> {
        self.records.iter()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(MODEL_COLUMNS)?;
        for m in &self.records {
            w.write_record([
                m.model_id.as_str(),
                &m.release_date.format("%Y-%m-%d").to_string(),
                if m.is_sota { "1" } else { "0" },
                if m.k_thinking { "1" } else { "0" },
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn model_from_raw(row: usize, raw: &dyn RawRow) -> Result<ModelRecord, DatasetError> {
    let model_id =
        raw.get("model_id").filter(|s| !s.is_empty()).ok_or_else(|| DatasetError::Malformed { row, message: "empty `model_id`".into() })?;
    let date_raw = raw.get("release_date").unwrap_or_default();
    let release_date = parse_iso_date(&date_raw).map_err(|_| DatasetError::UnparseableDate { row, value: date_raw })?;
    let flag = |key: &str| -> Result<bool, DatasetError> {
        let v = raw.get(key).unwrap_or_default();
        parse_flag(&v).ok_or_else(|| DatasetError::Malformed { row, message: format!("`{key}` must be 0 or 1 (got `{v}`)") })
    };
    Ok(ModelRecord { model_id, release_date, is_sota: flag("is_sota")?, k_thinking: flag("k_thinking")? })
}

/// Parses model metadata. Any bad row fails the parse.
pub fn parse_models<R: Read>(source: R, format: InputFormat) -> Result<ModelTable, DatasetError> {
    let mut records = Vec::new();
    match format {
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
            let index = csv_header_index(&mut reader)?;
            if let Some(missing) = MODEL_COLUMNS.iter().find(|c| !index.contains_key(**c)) {
                return Err(DatasetError::MissingColumn(missing.to_string()));
            }
            for (i, record) in reader.records().enumerate() {
                let record = record?;
                records.push(model_from_raw(i + 1, &CsvRow { index: &index, record: &record })?);
            }
        }
        InputFormat::Jsonl => {
            let mut row = 0;
            for line in BufReader::new(source).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                row += 1;
                let obj: serde_json::Map<String, serde_json::Value> =
                    serde_json::from_str(&line).map_err(|e| DatasetError::Malformed { row, message: e.to_string() })?;
                if let Some(missing) = MODEL_COLUMNS.iter().find(|c| !obj.contains_key(**c)) {
                    return Err(DatasetError::MissingColumn(missing.to_string()));
                }
                records.push(model_from_raw(row, &obj)?);
            }
        }
    }
    ModelTable::new(records)
}

/// SOTA-flagged records sorted by release date (stable for ties).
pub fn filter_sota(models: &ModelTable) -> ModelTable {
    let mut records: Vec<ModelRecord> = models.records.iter().filter(|m| m.is_sota).cloned().collect();
    records.sort_by_key(|m| m.release_date);
    ModelTable { records }
}

/// Affine map from calendar dates to reals: `units_per_year` units per Julian
/// year (365.25 days), zero at `epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScale {
    pub epoch: NaiveDate,
    pub units_per_year: f64,
}

pub const DAYS_PER_YEAR: f64 = 365.25;

impl Default for TimeScale {
    fn default() -> Self {
        TimeScale { epoch: NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(), units_per_year: 1.0 }
    }
}

impl TimeScale {
    pub fn new(epoch: NaiveDate, units_per_year: f64) -> Result<Self, DatasetError> {
        if !(units_per_year > 0.0) || !units_per_year.is_finite() {
            return Err(DatasetError::Malformed { row: 0, message: "units_per_year must be positive".into() });
        }
        Ok(TimeScale { epoch, units_per_year })
    }

    pub fn encode(&self, date: NaiveDate) -> f64 {
        (date - self.epoch).num_days() as f64 / DAYS_PER_YEAR * self.units_per_year
    }

    pub fn encode_str(&self, date: &str) -> Result<f64, DatasetError> {
        Ok(self.encode(parse_iso_date(date)?))
    }

    /// Inverse of [`TimeScale::encode`], rounding to the nearest day (halves
    /// away from zero). Saturates at the representable date range.
    pub fn decode(&self, x: f64) -> NaiveDate {
        let days = (x * DAYS_PER_YEAR / self.units_per_year).round();
        if !days.is_finite() {
            return if days > 0.0 { NaiveDate::MAX } else { NaiveDate::MIN };
        }
        let days = days.clamp(-1e9, 1e9) as i64;
        self.epoch.checked_add_signed(Duration::days(days)).unwrap_or(if days > 0 { NaiveDate::MAX } else { NaiveDate::MIN })
    }

    /// Length of one day in encoded units.
    pub fn day(&self) -> f64 {
        self.units_per_year / DAYS_PER_YEAR
    }
}

pub fn encode_date(scale: &TimeScale, date: NaiveDate) -> f64 {
    scale.encode(date)
}

pub fn decode_date(scale: &TimeScale, x: f64) -> NaiveDate {
    scale.decode(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        parse_iso_date(s).unwrap()
    }

    const THREE_ROWS: &str = "model_id,task_id,task_family,human_minutes,success\n\
        m1,t1,HCAST,5.5,1\n\
        m1,t2,SWAA,0.1,0\n\
        m2,t1,RE-Bench,480,1\n";

    #[test]
    fn parses_well_formed_csv() {
        let t = parse_runs(THREE_ROWS.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.rejects.is_empty());
        assert_eq!(t.records[2].task_family, TaskFamily::ReBench);
        assert_eq!(t.records[1].task_family, TaskFamily::Swaa);
        assert!(!t.records[1].success);
        assert_eq!(t.records[0].weight, 1.0);
    }

    #[test]
    fn zero_minutes_is_rejected() {
        let src = "model_id,task_id,task_family,human_minutes,success\nm,t,HCAST,0,1\nm,t2,HCAST,3,1\n";
        let t = parse_runs(src.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.rejects[0].error, DatasetError::NonPositiveDifficulty { row: 1, value: 0.0 });
    }

    #[test]
    fn non_binary_success_is_rejected() {
        let src = "model_id,task_id,task_family,human_minutes,success\nm,t,HCAST,2,0.5\n";
        let t = parse_runs(src.as_bytes(), InputFormat::Csv).unwrap();
        assert!(matches!(t.rejects[0].error, DatasetError::NonBinarySuccess { row: 1, .. }));
    }

    #[test]
    fn missing_column_names_the_column() {
        let src = "model_id,task_id,human_minutes,success\nm,t,2,1\n";
        assert_eq!(parse_runs(src.as_bytes(), InputFormat::Csv).unwrap_err(), DatasetError::MissingColumn("task_family".into()));
    }

    #[test]
    fn duplicate_attempt_labels_are_rejected_and_repeats_kept() {
        let src = "model_id,task_id,task_family,human_minutes,success,attempt\n\
            m,t,HCAST,2,1,a\nm,t,HCAST,2,0,b\nm,t,HCAST,2,0,a\n";
        let t = parse_runs(src.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.records[1].attempt, 1);
        assert_eq!(t.rejects[0].error, DatasetError::DuplicateRun { row: 3 });

        // Without labels, repeated pairs are separate observations.
        let src = "model_id,task_id,task_family,human_minutes,success\nm,t,HCAST,2,1\nm,t,HCAST,2,0\n";
        let t = parse_runs(src.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t.records[0].attempt, t.records[1].attempt), (0, 1));
    }

    #[test]
    fn jsonl_mirrors_csv() {
        let src = r#"{"model_id":"m1","task_id":"t1","task_family":"HCAST","human_minutes":5.5,"success":1}
{"model_id":"m1","task_id":"t2","task_family":"SWAA","human_minutes":"0.1","success":false}

{"model_id":"m2","task_id":"t1","task_family":"RE_BENCH","human_minutes":480,"success":true}
"#;
        let j = parse_runs(src.as_bytes(), InputFormat::Jsonl).unwrap();
        let c = parse_runs(THREE_ROWS.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(j, c);
    }

    #[test]
    fn metr_layout_converts() {
        let src = r#"{"alias":"GPT-4","task_id":"a/b","task_source":"HCAST","human_minutes":12.0,"score_binarized":1,"run_id":"r1","score_cont":0.9}
{"alias":"GPT-4","task_id":"a/b","task_source":"HCAST","human_minutes":12.0,"score_binarized":0,"run_id":"r2"}
"#;
        let t = parse_metr_runs(src.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.records[0].model_id, "GPT-4");
        assert_eq!(t.records[1].attempt, 1);
    }

    #[test]
    fn reference_models_match_release_table() {
        let m = ModelTable::reference_sota();
        assert_eq!(m.len(), 15);
        assert_eq!(m.get("GPT-2").unwrap().release_date, d("2019-02-14"));
        assert_eq!(m.get("GPT-5").unwrap().release_date, d("2025-08-07"));
        assert_eq!(filter_sota(&m).len(), 15);
    }

    #[test]
    fn duplicate_model_is_rejected() {
        let src = "model_id,release_date,is_sota,k_thinking\nA,2020-01-01,1,0\nA,2021-01-01,0,0\n";
        assert_eq!(parse_models(src.as_bytes(), InputFormat::Csv).unwrap_err(), DatasetError::DuplicateModel("A".into()));
    }

    #[test]
    fn bad_date_is_reported_with_row() {
        let src = "model_id,release_date,is_sota,k_thinking\nA,2020-13-01,1,0\n";
        assert_eq!(
            parse_models(src.as_bytes(), InputFormat::Csv).unwrap_err(),
            DatasetError::UnparseableDate { row: 1, value: "2020-13-01".into() }
        );
    }

    #[test]
    fn filter_sota_sorts_and_is_idempotent() {
        let src = "model_id,release_date,is_sota,k_thinking\nB,2022-01-01,1,0\nX,2021-01-01,0,0\nA,2020-01-01,1,1\n";
        let m = parse_models(src.as_bytes(), InputFormat::Csv).unwrap();
        let s = filter_sota(&m);
        assert_eq!(s.records.iter().map(|r| r.model_id.as_str()).collect::<Vec<_>>(), ["A", "B"]);
        assert_eq!(filter_sota(&s), s);
        let none = ModelTable::new(vec![]).unwrap();
        assert!(filter_sota(&none).is_empty());
    }

    #[test]
    fn encode_examples() {
        let s = TimeScale::default();
        assert_eq!(s.encode(d("2019-01-01")), 0.0);
        // Day counts: 2019 has 365 days; Jan (31) + 13 = 44.
        assert!((s.encode(d("2020-01-01")) - 365.0 / 365.25).abs() < 1e-15);
        assert!((s.encode(d("2020-01-01")) - 0.999316).abs() < 1e-6);
        assert!((s.encode(d("2019-02-14")) - 44.0 / 365.25).abs() < 1e-15);
        assert!(s.encode(d("2018-12-31")) < 0.0);
        assert!(s.encode_str("2019-02-30").is_err());
    }

    #[test]
    fn decode_examples() {
        let s = TimeScale::default();
        assert_eq!(s.decode(0.0), d("2019-01-01"));
        assert_eq!(s.decode(s.encode(d("2025-06-06"))), d("2025-06-06"));
        // 0.5 y = 182.625 days -> 183 days after the epoch.
        assert_eq!(s.decode(0.5), d("2019-07-03"));
        assert_eq!(s.decode(f64::INFINITY), NaiveDate::MAX);
    }

    proptest! {
        #[test]
        fn date_round_trip(days in -40_000i64..40_000) {
            let s = TimeScale::default();
            let date = s.epoch + Duration::days(days);
            prop_assert_eq!(s.decode(s.encode(date)), date);
        }

        #[test]
        fn encode_is_monotone(a in -40_000i64..40_000, gap in 1i64..5000) {
            let s = TimeScale::default();
            let d1 = s.epoch + Duration::days(a);
            let d2 = d1 + Duration::days(gap);
            prop_assert!(s.encode(d1) < s.encode(d2));
        }

        #[test]
        fn ingestion_totals_balance(rows in proptest::collection::vec((0u8..4, -2.0f64..50.0, 0u8..3), 0..40)) {
            let mut src = String::from("model_id,task_id,task_family,human_minutes,success\n");
            for (i, (m, t, s)) in rows.iter().enumerate() {
                src.push_str(&format!("m{m},t{i},HCAST,{t},{s}\n"));
            }
            let table = parse_runs(src.as_bytes(), InputFormat::Csv).unwrap();
            prop_assert_eq!(table.len() + table.rejects.len(), rows.len());
            prop_assert_eq!(table.input_rows, rows.len());
        }
    }
}
