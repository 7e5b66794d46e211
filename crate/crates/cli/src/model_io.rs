//! JSON model files.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so a saved model reloads to bitwise-identical parameters.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use mmfuse_core::data::StandardizationStats;
use mmfuse_core::decoders::TimeScaler;
use mmfuse_core::model::{Model, ModelSpec};
use mmfuse_core::nn::{ParamStore, Parameterized};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const FORMAT: &str = "mmfuse-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    spec: ModelSpec,
    time_scaler: TimeScaler,
    feature_stats: Option<StandardizationStats>,
    params: ParamStore,
}

pub fn model_to_string(model: &Model) -> String {
    let file = ModelFile {
        format: String::from(FORMAT),
        version: VERSION,
        spec: model.spec().clone(),
        time_scaler: model.time_scaler(),
        feature_stats: model.feature_stats().cloned(),
        params: model.params().clone(),
    };
    serde_json::to_string_pretty(&file).expect("model contents are finite and serializable")
}

pub fn model_from_str(text: &str, path: &Path) -> Result<Model> {
    let fmt_err = |message: String| CliError::Format {
        path: path.to_path_buf(),
        message,
    };
    let file: ModelFile = serde_json::from_str(text).map_err(|e| fmt_err(e.to_string()))?;
    if file.format != FORMAT {
        return Err(fmt_err(format!(
            "not a model file (format `{}`)",
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(fmt_err(format!(
            "unsupported model version {}",
            file.version
        )));
    }
    Ok(Model::from_parts(
        file.spec,
        file.time_scaler,
        file.feature_stats,
        &file.params,
    )?)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    w.write_all(model_to_string(model).as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(io_err(path))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    let mut text = String::new();
    std::io::Read::read_to_string(&mut BufReader::new(file), &mut text).map_err(io_err(path))?;
    model_from_str(&text, path)
}
