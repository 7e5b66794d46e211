//! Line-delimited JSON datasets.
//!
//! An optional first line declares the schema:
//!
//! ```text
//! {"schema":{"task":"reg","modalities":[{"name":"visual","dim":8},...]}}
//! ```
//!
//! and every following line holds one sample:
//!
//! ```text
//! {"id":"s0","modalities":{"visual":[..],"textual":[..]},"target":{"kind":"reg","value":0.3}}
//! ```
//!
//! A modality key that is absent (or `null`) marks that modality missing.
//! Targets are `{"kind":"cls","label":true}`, `{"kind":"reg","value":x}` or
//! `{"kind":"tmp","values":[..],"timestamps":[..]}`. Without a header the
//! schema is inferred: modalities in order of first appearance, widths from
//! their first occurrence, task from the first target.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use mmfuse_core::data::{Dataset, MultimodalSample, PopularityTarget, SequenceTarget, TaskKind};
use mmfuse_core::poe::ModalitySpec;
use mmfuse_core::synth::SynthMeta;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    schema: Schema,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Schema {
    task: TaskKind,
    modalities: Vec<ModalitySpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    #[serde(default)]
    modalities: Map<String, Value>,
    target: TargetRecord,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum TargetRecord {
    #[serde(rename = "cls")]
    Cls { label: bool },
    #[serde(rename = "reg")]
    Reg { value: f64 },
    #[serde(rename = "tmp")]
    Tmp {
        values: Vec<f64>,
        timestamps: Vec<f64>,
    },
}

impl TargetRecord {
    fn kind(&self) -> TaskKind {
        match self {
            TargetRecord::Cls { .. } => TaskKind::Classification,
            TargetRecord::Reg { .. } => TaskKind::Regression,
            TargetRecord::Tmp { .. } => TaskKind::Temporal,
        }
    }

    fn into_target(self) -> std::result::Result<PopularityTarget, String> {
        match self {
            TargetRecord::Cls { label } => Ok(PopularityTarget::Binary(label)),
            TargetRecord::Reg { value } => Ok(PopularityTarget::Scalar(value)),
            TargetRecord::Tmp { values, timestamps } => SequenceTarget::new(values, timestamps)
                .map(PopularityTarget::Sequence)
                .map_err(|e| e.to_string()),
        }
    }

    fn from_target(t: &PopularityTarget) -> Self {
        match t {
            PopularityTarget::Binary(label) => TargetRecord::Cls { label: *label },
            PopularityTarget::Scalar(value) => TargetRecord::Reg { value: *value },
            PopularityTarget::Sequence(s) => TargetRecord::Tmp {
                values: s.values.clone(),
                timestamps: s.timestamps.clone(),
            },
        }
    }
}

fn parse_features(value: &Value) -> std::result::Result<Option<Vec<f64>>, String> {
    match value {
        Value::Null => Ok(None),
        Value::Array(items) => items
            .iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| format!("feature value {v} is not a number"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Some),
        other => Err(format!(
            "feature vector must be an array or null, got {other}"
        )),
    }
}

/// Reads a dataset from any buffered reader; `path` is only used in errors.
pub fn read_dataset_from<R: BufRead>(reader: R, path: &Path) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| CliError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut records: Vec<(usize, Record)> = Vec::new();
    let mut schema: Option<Schema> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let is_header = value.get("schema").is_some();
        if is_header {
            if schema.is_some() || !records.is_empty() {
                return Err(parse_err(
                    lineno,
                    String::from("schema header must be the first record"),
                ));
            }
            let h: Header =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            schema = Some(h.schema);
        } else {
            let r: Record =
                serde_json::from_value(value).map_err(|e| parse_err(lineno, e.to_string()))?;
            records.push((lineno, r));
        }
    }

    let schema = match schema {
        Some(s) => s,
        None => infer_schema(&records).map_err(|(line, msg)| parse_err(line, msg))?,
    };
    let mut dataset =
        Dataset::new(schema.modalities, schema.task).map_err(|e| parse_err(1, e.to_string()))?;

    for (lineno, record) in records {
        let mut features = vec![None; dataset.modalities().len()];
        for (name, value) in &record.modalities {
            let idx = dataset
                .modality_index(name)
                .ok_or_else(|| parse_err(lineno, format!("unknown modality `{name}`")))?;
            features[idx] = parse_features(value)
                .map_err(|m| parse_err(lineno, format!("modality `{name}`: {m}")))?;
        }
        let target = record
            .target
            .into_target()
            .map_err(|m| parse_err(lineno, m))?;
        let sample = MultimodalSample {
            id: record.id,
            features,
            target,
        };
        dataset
            .push(sample)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
    }
    Ok(dataset)
}

fn infer_schema(records: &[(usize, Record)]) -> std::result::Result<Schema, (usize, String)> {
    let Some((_, first)) = records.first() else {
        // an empty file is a valid, empty dataset
        return Ok(Schema {
            task: TaskKind::Regression,
            modalities: Vec::new(),
        });
    };
    let task = first.target.kind();
    let mut modalities: Vec<ModalitySpec> = Vec::new();
    for (lineno, r) in records {
        for (name, value) in &r.modalities {
            if modalities.iter().any(|m| &m.name == name) {
                continue;
            }
            if let Value::Array(items) = value {
                modalities.push(ModalitySpec {
                    name: name.clone(),
                    dim: items.len(),
                });
            } else if !value.is_null() {
                return Err((
                    *lineno,
                    format!("modality `{name}` must be an array or null"),
                ));
            }
        }
    }
    Ok(Schema { task, modalities })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_dataset_from(BufReader::new(file), path)
}

/// Writes the schema header followed by one line per sample.
pub fn write_dataset_to<W: Write>(dataset: &Dataset, mut w: W) -> std::io::Result<()> {
    let header = Header {
        schema: Schema {
            task: dataset.task(),
            modalities: dataset.modalities().to_vec(),
        },
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for s in dataset.samples() {
        let mut modalities = Map::new();
        for (spec, f) in dataset.modalities().iter().zip(&s.features) {
            if let Some(f) = f {
                modalities.insert(spec.name.clone(), serde_json::to_value(f)?);
            }
        }
        let record = Record {
            id: s.id.clone(),
            modalities,
            target: TargetRecord::from_target(&s.target),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_dataset_to(dataset, BufWriter::new(file)).map_err(io_err(path))
}

pub fn write_synth_meta(meta: &SynthMeta, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, meta).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

pub fn read_synth_meta(path: impl AsRef<Path>) -> Result<SynthMeta> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
