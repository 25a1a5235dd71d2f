//! Fixed vocabularies shared by every stage: vocalization classes,
//! recording environments and dataset folds.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of vocalization classes.
pub const NUM_CLASSES: usize = 5;

/// One of the five judgment categories offered to annotators.
///
/// The declaration order is the canonical ordering used for every matrix
/// row/column and every tie-break in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    Crying,
    Laughing,
    Canonical,
    NonCanonical,
    Junk,
}

impl LabelClass {
    pub const ALL: [LabelClass; NUM_CLASSES] = [
        LabelClass::Crying,
        LabelClass::Laughing,
        LabelClass::Canonical,
        LabelClass::NonCanonical,
        LabelClass::Junk,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::Crying => "crying",
            LabelClass::Laughing => "laughing",
            LabelClass::Canonical => "canonical",
            LabelClass::NonCanonical => "non_canonical",
            LabelClass::Junk => "junk",
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseVocabError {
    pub kind: &'static str,
    pub value: String,
}

impl FromStr for LabelClass {
    type Err = ParseVocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseVocabError {
                kind: "label",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Urban,
    Rural,
}

impl Environment {
    pub fn as_str(self) -> &'static str {
        match self {
            Environment::Urban => "urban",
            Environment::Rural => "rural",
        }
    }
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Environment {
    type Err = ParseVocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "urban" => Ok(Environment::Urban),
            "rural" => Ok(Environment::Rural),
            _ => Err(ParseVocabError {
                kind: "environment",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fold {
    Train,
    Dev,
    Test,
}

impl Fold {
    pub const ALL: [Fold; 3] = [Fold::Train, Fold::Dev, Fold::Test];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fold::Train => "train",
            Fold::Dev => "dev",
            Fold::Test => "test",
        }
    }
}

impl fmt::Display for Fold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fold {
    type Err = ParseVocabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Fold::Train),
            "dev" => Ok(Fold::Dev),
            "test" => Ok(Fold::Test),
            _ => Err(ParseVocabError {
                kind: "fold",
                value: s.to_string(),
            }),
        }
    }
}
