use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Sampling step budget. Models with an adaptive solver report `Dynamic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Steps {
    Fixed(u32),
    Dynamic,
}

impl fmt::Display for Steps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Steps::Fixed(n) => write!(f, "{n}"),
            Steps::Dynamic => f.write_str("dynamic"),
        }
    }
}

impl FromStr for Steps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("dynamic") || t.eq_ignore_ascii_case("dyn") {
            return Ok(Steps::Dynamic);
        }
        match t.parse::<u32>() {
            Ok(n) if n >= 1 => Ok(Steps::Fixed(n)),
            _ => Err(Error::InvalidInput(format!(
                "steps must be a positive integer or \"dynamic\", got `{s}`"
            ))),
        }
    }
}

impl Serialize for Steps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Steps::Fixed(n) => s.serialize_u32(*n),
            Steps::Dynamic => s.serialize_str("dynamic"),
        }
    }
}

impl<'de> Deserialize<'de> for Steps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(n) if (1..=u32::MAX as u64).contains(&n) => Ok(Steps::Fixed(n as u32)),
            Raw::Int(n) => Err(serde::de::Error::custom(format!(
                "steps must be ≥ 1, got {n}"
            ))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Identity of one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub model: String,
    pub cfg: f64,
    pub steps: Steps,
    pub dataset: String,
    pub seed: u64,
}

impl RunKey {
    pub fn new(model: impl Into<String>, cfg: f64, steps: Steps, dataset: impl Into<String>, seed: u64) -> Self {
        Self {
            model: model.into(),
            cfg,
            steps,
            dataset: dataset.into(),
            seed,
        }
    }

    /// File-system safe rendering of the key.
    pub fn slug(&self) -> String {
        self.to_string()
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                    c
                } else {
                    '-'
                }
            })
            .collect()
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}__cfg{}__steps{}__{}__seed{}",
            self.model, self.cfg, self.steps, self.dataset, self.seed
        )
    }
}

impl Eq for RunKey {}

impl PartialOrd for RunKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic on the rendered key.
impl Ord for RunKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.to_string().cmp(&other.to_string())
    }
}
