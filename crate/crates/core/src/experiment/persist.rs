//! Model files: JSON objects `{format_version, kind, payload}`.
//!
//! Floats are written in shortest round-trip form, so a loaded model predicts
//! bit-for-bit what the saved one did.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use super::ensembles::HourlyEnsemble;
use crate::boosting::BoostedModel;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::linear::ElasticNetModel;
use crate::submodels::{ArimaModel, ElmModel, LstmModel, NusvrModel};
use crate::tree::RegressionTree;

pub const FORMAT_VERSION: u32 = 1;

/// A model type with a stable `kind` tag in model files.
pub trait Persist: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

macro_rules! persist {
    ($($ty:ty => $kind:literal),* $(,)?) => {
        $(impl Persist for $ty {
            const KIND: &'static str = $kind;
        })*
    };
}

persist! {
    RegressionTree => "regression_tree",
    Forest => "forest",
    ElasticNetModel => "elasticnet",
    BoostedModel => "boosted",
    ArimaModel => "arima",
    NusvrModel => "nusvr",
    ElmModel => "elm",
    LstmModel => "lstm",
    HourlyEnsemble => "hourly_ensemble",
}

pub fn to_json<T: Persist>(model: &T) -> Result<String> {
    let payload = serde_json::to_value(model).map_err(|e| Error::CorruptFile(format!("cannot encode: {e}")))?;
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "kind": T::KIND,
        "payload": payload,
    });
    Ok(doc.to_string())
}

pub fn from_json<T: Persist>(text: &str) -> Result<T> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::CorruptFile(e.to_string()))?;
    let version = doc
        .get("format_version")
        .ok_or_else(|| Error::CorruptFile("missing `format_version`".into()))?;
    if version.as_u64() != Some(u64::from(FORMAT_VERSION)) {
        let found = match version {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        return Err(Error::VersionMismatch {
            found,
            expected: FORMAT_VERSION,
        });
    }
    let kind = doc
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::CorruptFile("missing `kind`".into()))?;
    if kind != T::KIND {
        return Err(Error::CorruptFile(format!("expected a `{}` model, found `{kind}`", T::KIND)));
    }
    let payload = doc
        .get("payload")
        .ok_or_else(|| Error::CorruptFile("missing `payload`".into()))?;
    T::deserialize(payload).map_err(|e| Error::CorruptFile(format!("bad `{kind}` payload: {e}")))
}

pub fn save_model<T: Persist>(model: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Persist>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
