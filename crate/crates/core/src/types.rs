//! Shared domain types: language tags and discrete unit/token sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Language tag, e.g. `"l1"`, `"de"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Language(String);

impl Language {
    pub fn new(tag: impl Into<String>) -> Self {
        Language(tag.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for Language {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Language {
    fn from(s: &str) -> Self {
        Language::new(s)
    }
}

/// A sequence of discrete unit ids, optionally with per-unit run lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnitSequence {
    pub units: Vec<u32>,
    pub language: Language,
    /// Present after run-length encoding; same length as `units`, entries >= 1.
    pub durations: Option<Vec<u32>>,
}

impl UnitSequence {
    pub fn new(units: Vec<u32>, language: Language) -> Self {
        UnitSequence {
            units,
            language,
            durations: None,
        }
    }

    pub fn with_durations(units: Vec<u32>, durations: Vec<u32>, language: Language) -> Result<Self> {
        if durations.len() != units.len() {
            return Err(Error::Input(format!(
                "durations length {} does not match units length {}",
                durations.len(),
                units.len()
            )));
        }
        if durations.iter().any(|&d| d == 0) {
            return Err(Error::Input("durations must all be >= 1".into()));
        }
        Ok(UnitSequence {
            units,
            language,
            durations: Some(durations),
        })
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

/// A sequence of tokenizer token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<u32>,
    pub language: Language,
}

impl TokenSequence {
    pub fn new(tokens: Vec<u32>, language: Language) -> Self {
        TokenSequence { tokens, language }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
