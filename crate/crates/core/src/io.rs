//! Dataset files (CSV with a header row, or JSON lines) and model files.
//!
//! Required columns are `prediction` (decimal in `[0, 1]`) and `label`
//! (`0`/`1`), plus one column per configured field. `timestamp` (integer
//! epoch seconds) is optional. Other columns are carried through untouched so
//! `apply` can append its output to the original rows.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dataset::{Dataset, FieldSpec, Sample, MISSING};
use crate::error::{CalibError, Result};
use crate::pipeline::{Pipeline, Stage};

pub const MODEL_VERSION: &str = "confcal/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    /// `.jsonl` / `.ndjson` / `.json` are JSON lines; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => Format::Jsonl,
            _ => Format::Csv,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(CalibError::Config(format!("unknown format {other:?}"))),
        }
    }
}

/// Column names used when reading a dataset.
#[derive(Debug, Clone)]
pub struct Columns {
    pub prediction: String,
    pub label: String,
    pub timestamp: String,
}

impl Default for Columns {
    fn default() -> Self {
        Self { prediction: "prediction".into(), label: "label".into(), timestamp: "timestamp".into() }
    }
}

/// Rows exactly as read, for writing back with extra columns.
#[derive(Debug, Clone)]
pub enum Records {
    Csv { headers: csv::StringRecord, rows: Vec<csv::StringRecord> },
    Jsonl(Vec<Map<String, Value>>),
}

fn parse_prediction(raw: &str, line: usize) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| CalibError::Parse { line, message: format!("prediction {raw:?} is not a number") })?;
    if !(0.0..=1.0).contains(&v) {
        return Err(CalibError::Parse { line, message: format!("prediction {v} outside [0, 1]") });
    }
    Ok(v)
}

fn parse_label(raw: &str, line: usize) -> Result<bool> {
    match raw.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CalibError::Parse { line, message: format!("label must be 0 or 1, got {other:?}") }),
    }
}

fn parse_timestamp(raw: &str, line: usize) -> Result<Option<i64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| CalibError::Parse { line, message: format!("timestamp {raw:?} is not an integer") })
}

pub fn read_csv<R: Read>(reader: R, spec: &FieldSpec, columns: &Columns) -> Result<(Dataset, Records)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(CalibError::Data("empty file".into()));
    }
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| find(name).ok_or_else(|| CalibError::Data(format!("missing column {name:?}")));
    let pred_col = require(&columns.prediction)?;
    let label_col = require(&columns.label)?;
    let ts_col = find(&columns.timestamp);
    let field_cols = spec.names().iter().map(|f| require(f)).collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(i + 2, |p| p.line() as usize);
        let cell = |c: usize| record.get(c).unwrap_or("");
        let prediction = parse_prediction(cell(pred_col), line)?;
        let label = parse_label(cell(label_col), line)?;
        let timestamp = match ts_col {
            Some(c) => parse_timestamp(cell(c), line)?,
            None => None,
        };
        let values = field_cols.iter().map(|&c| cell(c).to_string()).collect();
        samples.push(Sample { prediction, label, values, timestamp });
        rows.push(record);
    }
    if samples.is_empty() {
        return Err(CalibError::Data("file has no data rows".into()));
    }
    Ok((Dataset::new(spec.clone(), samples)?, Records::Csv { headers, rows }))
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

pub fn read_jsonl<R: BufRead>(reader: R, spec: &FieldSpec, columns: &Columns) -> Result<(Dataset, Records)> {
    let mut samples = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = serde_json::from_str(&line)
            .map_err(|e| CalibError::Parse { line: line_no, message: e.to_string() })?;
        let get = |name: &str| {
            obj.get(name)
                .ok_or_else(|| CalibError::Parse { line: line_no, message: format!("missing key {name:?}") })
        };
        let prediction = match get(&columns.prediction)? {
            Value::Number(n) => parse_prediction(&n.to_string(), line_no)?,
            Value::String(s) => parse_prediction(s, line_no)?,
            other => {
                return Err(CalibError::Parse { line: line_no, message: format!("prediction {other} is not a number") })
            }
        };
        let label = match get(&columns.label)? {
            Value::Bool(b) => *b,
            other => parse_label(&json_scalar(other).unwrap_or_default(), line_no)?,
        };
        let timestamp = match obj.get(&columns.timestamp) {
            None | Some(Value::Null) => None,
            Some(v) => parse_timestamp(&json_scalar(v).unwrap_or_default(), line_no)?,
        };
        let mut values = Vec::with_capacity(spec.len());
        for f in spec.names() {
            let v = get(f)?;
            values.push(json_scalar(v).unwrap_or_else(|| MISSING.to_string()));
        }
        samples.push(Sample { prediction, label, values, timestamp });
        rows.push(obj);
    }
    if samples.is_empty() {
        return Err(CalibError::Data("file has no data rows".into()));
    }
    Ok((Dataset::new(spec.clone(), samples)?, Records::Jsonl(rows)))
}

/// Reads a dataset file, picking the format from the extension unless given.
pub fn read_dataset(
    path: &Path,
    format: Option<Format>,
    spec: &FieldSpec,
    columns: &Columns,
) -> Result<(Dataset, Records)> {
    let file = File::open(path)?;
    match format.unwrap_or_else(|| Format::from_path(path)) {
        Format::Csv => read_csv(BufReader::new(file), spec, columns),
        Format::Jsonl => read_jsonl(BufReader::new(file), spec, columns),
    }
}

/// Shortest decimal that parses back to exactly `v`.
pub fn format_prob(v: f64) -> String {
    format!("{v}")
}

/// Writes `records` with an extra column (replaced if it already exists).
pub fn write_with_column<W: Write>(records: &Records, column: &str, values: &[f64], out: W) -> Result<()> {
    match records {
        Records::Csv { headers, rows } => {
            if rows.len() != values.len() {
                return Err(CalibError::Data("row and value counts differ".into()));
            }
            let existing = headers.iter().position(|h| h == column);
            let mut w = csv::Writer::from_writer(out);
            let mut header: Vec<&str> = headers.iter().collect();
            if existing.is_none() {
                header.push(column);
            }
            w.write_record(&header)?;
            for (row, &v) in rows.iter().zip(values) {
                let formatted = format_prob(v);
                let mut cells: Vec<&str> = row.iter().collect();
                cells.resize(headers.len(), "");
                match existing {
                    Some(c) => cells[c] = &formatted,
                    None => cells.push(&formatted),
                }
                w.write_record(&cells)?;
            }
            w.flush()?;
        }
        Records::Jsonl(rows) => {
            if rows.len() != values.len() {
                return Err(CalibError::Data("row and value counts differ".into()));
            }
            let mut out = out;
            for (row, &v) in rows.iter().zip(values) {
                let mut row = row.clone();
                row.insert(column.to_string(), Value::from(v));
                serde_json::to_writer(&mut out, &row)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Writes a dataset in CSV with columns `prediction,label,<fields...>[,timestamp]`.
pub fn write_dataset_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let with_ts = dataset.samples().iter().any(|s| s.timestamp.is_some());
    let mut header = vec!["prediction".to_string(), "label".to_string()];
    header.extend(dataset.spec().names().iter().cloned());
    if with_ts {
        header.push("timestamp".into());
    }
    w.write_record(&header)?;
    for s in dataset.samples() {
        let mut row = vec![format_prob(s.prediction), if s.label { "1" } else { "0" }.to_string()];
        row.extend(s.values.iter().cloned());
        if with_ts {
            row.push(s.timestamp.map(|t| t.to_string()).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// What a model file holds.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Stage(Stage),
    Pipeline(Vec<Stage>),
}

/// Versioned model container: `{"version": "confcal/1", "kind": ..., "payload": ...}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub body: ModelBody,
}

#[derive(Serialize, Deserialize)]
struct RawModelFile {
    version: String,
    kind: String,
    payload: Value,
}

impl ModelFile {
    pub fn new(body: ModelBody) -> Self {
        Self { body }
    }

    /// Single-stage pipelines are stored as that stage.
    pub fn from_pipeline(pipeline: Pipeline) -> Self {
        let mut stages = pipeline.stages;
        if stages.len() == 1 {
            Self::new(ModelBody::Stage(stages.remove(0)))
        } else {
            Self::new(ModelBody::Pipeline(stages))
        }
    }

    pub fn pipeline(&self) -> Pipeline {
        match &self.body {
            ModelBody::Stage(s) => Pipeline::single(s.clone()),
            ModelBody::Pipeline(stages) => Pipeline { stages: stages.clone() },
        }
    }

    pub fn kind(&self) -> &'static str {
        match &self.body {
            ModelBody::Stage(s) => s.kind(),
            ModelBody::Pipeline(_) => "pipeline",
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let (kind, payload) = match &self.body {
            ModelBody::Stage(s) => {
                let mut tagged = serde_json::to_value(s)?;
                let payload = tagged["payload"].take();
                (s.kind().to_string(), payload)
            }
            ModelBody::Pipeline(stages) => ("pipeline".to_string(), serde_json::to_value(stages)?),
        };
        let raw = RawModelFile { version: MODEL_VERSION.to_string(), kind, payload };
        let mut text = serde_json::to_string_pretty(&raw)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawModelFile = serde_json::from_str(text)?;
        if raw.version != MODEL_VERSION {
            return Err(CalibError::Version(raw.version));
        }
        let body = if raw.kind == "pipeline" {
            ModelBody::Pipeline(serde_json::from_value(raw.payload)?)
        } else {
            let tagged = serde_json::json!({ "kind": raw.kind, "payload": raw.payload });
            ModelBody::Stage(serde_json::from_value(tagged)?)
        };
        let file = Self { body };
        for stage in file.pipeline().stages {
            stage.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
