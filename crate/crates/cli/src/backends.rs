//! Backend selection file shared by `eval run` and `corpus augment`.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chatir_core::backends::remote::VQA_URL_ENV;
use chatir_core::backends::{AnswererRef, EmbedderRef, QuestionerRef};
use serde::{Deserialize, Serialize};

/// TOML with optional `[embedder]`, `[questioner]` and `[answerer]` tables,
/// each tagged by `kind`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedder: Option<EmbedderRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub questioner: Option<QuestionerRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answerer: Option<AnswererRef>,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl BackendsFile {
    /// Reads the file, resolves relative paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut file: Self = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        match &mut file.answerer {
            Some(AnswererRef::Oracle { table }) => rebase(base, table),
            Some(AnswererRef::Recorded { dataset }) => rebase(base, dataset),
            Some(AnswererRef::Vqa { images: Some(images), .. }) => rebase(base, images),
            _ => {}
        }
        file.apply_env(|k| std::env::var(k).ok());
        Ok(file)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(AnswererRef::Vqa { endpoint, .. }) = &mut self.answerer {
            if let Some(url) = lookup(VQA_URL_ENV) {
                endpoint.base_url = url;
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("backend refs serialize")
    }
}
