use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Phoneme,
    Syllable,
    Word,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Phoneme, Granularity::Syllable, Granularity::Word];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Phoneme => "phoneme",
            Granularity::Syllable => "syllable",
            Granularity::Word => "word",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phoneme" => Ok(Granularity::Phoneme),
            "syllable" => Ok(Granularity::Syllable),
            "word" => Ok(Granularity::Word),
            other => Err(Error::InvalidConfig(format!("unknown granularity `{other}`"))),
        }
    }
}

/// One time-aligned speech unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedUnit {
    pub label: String,
    pub granularity: Granularity,
    pub start_s: f64,
    pub end_s: f64,
    pub confidence: f64,
}

impl AlignedUnit {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn offset(mut self, by_s: f64) -> Self {
        self.start_s += by_s;
        self.end_s += by_s;
        self
    }
}

/// Composes a coarser unit spanning `parts` (first start to last end, mean confidence).
pub(crate) fn compose(label: String, granularity: Granularity, parts: &[AlignedUnit]) -> AlignedUnit {
    debug_assert!(!parts.is_empty());
    let confidence = parts.iter().map(|u| u.confidence).sum::<f64>() / parts.len() as f64;
    AlignedUnit {
        label,
        granularity,
        start_s: parts[0].start_s,
        end_s: parts[parts.len() - 1].end_s,
        confidence,
    }
}
