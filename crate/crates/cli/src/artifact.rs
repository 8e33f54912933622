//! On-disk artifacts. Every file the CLI writes carries a `meta` block so it
//! can be traced back to the model, corpus and seed that produced it.

use std::path::Path;

use anyhow::{Context, Result};
use emosteer::EmotionVectorSet;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub model_id: String,
    pub corpus_hash: String,
    pub seed: u64,
    pub tool: String,
}

impl Meta {
    pub fn new(model_id: impl Into<String>, corpus_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            model_id: model_id.into(),
            corpus_hash: corpus_hash.into(),
            seed,
            tool: concat!("emosteer ", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub meta: Meta,
    pub data: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(meta: Meta, data: T) -> Self {
        Self { meta, data }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serialises");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json())
    }
}

impl<T: DeserializeOwned> Artifact<T> {
    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Reads a vector set written either by `extract` (wrapped) or by the core
/// library directly (bare).
pub fn read_vector_set(path: &Path) -> Result<(Option<Meta>, EmotionVectorSet)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let set = match serde_json::from_str::<Artifact<EmotionVectorSet>>(&text) {
        Ok(a) => (Some(a.meta), a.data),
        Err(_) => (
            None,
            EmotionVectorSet::from_json(&text)
                .with_context(|| format!("parsing {}", path.display()))?,
        ),
    };
    set.1
        .validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(set)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
