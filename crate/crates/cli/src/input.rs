//! Input files of `dax explain`.

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Deserialize;

use dax_core::data::tokenize;
use dax_core::error::Error;
use dax_core::instances::{encode_record, InstanceKind};
use dax_core::nn::{Input, NeuralGraph};

/// One of `{"text": ...}`, `{"tokens": [...]}`, `{"values": [...]}` or
/// `{"record": {"feature": "value", ...}}`.
#[derive(Debug, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum InputFile {
    Text { text: String },
    Tokens { tokens: Vec<usize> },
    Values { values: Vec<f64> },
    Record { record: BTreeMap<String, String> },
}

pub fn load(net: &NeuralGraph<f64>, kind: InstanceKind, text: &str) -> Result<Input<f64>> {
    let file: InputFile = serde_json::from_str(text).map_err(Error::from)?;
    let meta = net.metadata();
    let mismatch = |what: &str| Error::InvalidArgument(format!("{what} input does not fit a {} model", kind.name()));
    Ok(match (file, kind) {
        (InputFile::Text { text }, InstanceKind::TextCnn) => {
            let vocab = meta.vocab.as_ref().ok_or_else(|| mismatch("text"))?;
            Input::Tokens(tokenize(vocab, &text)?)
        }
        (InputFile::Tokens { tokens }, InstanceKind::TextCnn) => Input::Tokens(tokens),
        (InputFile::Values { values }, InstanceKind::ImageCnn | InstanceKind::TabularFfnn | InstanceKind::Toy) => {
            Input::Values(values)
        }
        (InputFile::Record { record }, InstanceKind::TabularFfnn) => {
            let columns = meta.features.as_ref().ok_or_else(|| mismatch("record"))?;
            Input::Values(encode_record(columns, &record)?)
        }
        (InputFile::Text { .. }, _) => return Err(mismatch("text").into()),
        (InputFile::Tokens { .. }, _) => return Err(mismatch("token").into()),
        (InputFile::Values { .. }, _) => return Err(mismatch("value").into()),
        (InputFile::Record { .. }, _) => return Err(mismatch("record").into()),
    })
}
