use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::key::RunKey;
use crate::metrics::MetricReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricId {
    #[serde(rename = "FID")]
    Fid,
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "CLIP")]
    Clip,
    #[serde(rename = "PICK")]
    Pick,
}

impl MetricId {
    pub const ALL: [MetricId; 4] = [MetricId::Fid, MetricId::Is, MetricId::Clip, MetricId::Pick];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::Fid => "FID",
            MetricId::Is => "IS",
            MetricId::Clip => "CLIP",
            MetricId::Pick => "PICK",
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            MetricId::Fid => Orientation::LowerIsBetter,
            _ => Orientation::HigherIsBetter,
        }
    }

    pub fn value(self, report: &MetricReport) -> f64 {
        match self {
            MetricId::Fid => report.fid,
            MetricId::Is => report.is_mean,
            MetricId::Clip => report.clip_score,
            MetricId::Pick => report.pick_score,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "FID" => Ok(MetricId::Fid),
            "IS" | "IS_MEAN" => Ok(MetricId::Is),
            "CLIP" => Ok(MetricId::Clip),
            "PICK" => Ok(MetricId::Pick),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricBounds {
    pub min: f64,
    pub max: f64,
    pub orientation: Orientation,
}

/// Persisted per-metric normalization bounds (`bounds.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsRegistry {
    pub schema_version: u32,
    pub dataset: String,
    pub metrics: BTreeMap<MetricId, MetricBounds>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl BoundsRegistry {
    pub fn new(
        dataset: impl Into<String>,
        metrics: BTreeMap<MetricId, MetricBounds>,
        provenance: Vec<String>,
    ) -> Result<Self> {
        let reg = Self {
            schema_version: 1,
            dataset: dataset.into(),
            metrics,
            provenance,
        };
        reg.validate()?;
        Ok(reg)
    }

    /// Bounds measured over the ImageNet validation benchmark (all models,
    /// adaptive-step SiT runs excluded).
    pub fn imagenet_reference() -> Self {
        let b = |min, max, id: MetricId| {
            (
                id,
                MetricBounds {
                    min,
                    max,
                    orientation: id.orientation(),
                },
            )
        };
        Self {
            schema_version: 1,
            dataset: "imagenet".into(),
            metrics: BTreeMap::from([
                b(2.61, 317.55, MetricId::Fid),
                b(1.53, 382.36, MetricId::Is),
                b(20.39, 32.10, MetricId::Clip),
                b(16.89, 22.13, MetricId::Pick),
            ]),
            provenance: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for id in MetricId::ALL {
            let b = self.metrics.get(&id).ok_or_else(|| Error::InvalidBounds {
                metric: id.to_string(),
                reason: "missing".into(),
            })?;
            if !(b.min.is_finite() && b.max.is_finite()) || b.max <= b.min {
                return Err(Error::InvalidBounds {
                    metric: id.to_string(),
                    reason: format!("max {} must exceed min {}", b.max, b.min),
                });
            }
            if b.orientation != id.orientation() {
                return Err(Error::InvalidBounds {
                    metric: id.to_string(),
                    reason: format!("orientation must be {:?}", id.orientation()),
                });
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let reg: Self = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        reg.validate()?;
        Ok(reg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, id: MetricId) -> Result<&MetricBounds> {
        self.metrics
            .get(&id)
            .ok_or_else(|| Error::UnknownMetric(id.to_string()))
    }

    /// Orientation-aware utility, floored at 0 and not capped above 1.
    pub fn normalize(&self, id: MetricId, value: f64) -> Result<f64> {
        let b = self.get(id)?;
        let range = b.max - b.min;
        let u = match b.orientation {
            Orientation::LowerIsBetter => (b.max - value) / range,
            Orientation::HigherIsBetter => (value - b.min) / range,
        };
        Ok(u.max(0.0))
    }

    pub fn normalize_by_name(&self, metric: &str, value: f64) -> Result<f64> {
        self.normalize(metric.parse()?, value)
    }
}

/// Per-metric min/max over the reports not listed in `exclusions`.
pub fn compute_bounds(
    dataset: &str,
    reports: &[(RunKey, MetricReport)],
    exclusions: &[RunKey],
) -> Result<BoundsRegistry> {
    let included: Vec<&(RunKey, MetricReport)> = reports
        .iter()
        .filter(|(k, _)| !exclusions.contains(k))
        .collect();
    if included.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: included.len(),
        });
    }
    let mut metrics = BTreeMap::new();
    for id in MetricId::ALL {
        let (min, max) = included.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, r)| {
            let v = id.value(r);
            (lo.min(v), hi.max(v))
        });
        metrics.insert(
            id,
            MetricBounds {
                min,
                max,
                orientation: id.orientation(),
            },
        );
    }
    let provenance = included.iter().map(|(k, _)| k.to_string()).collect();
    BoundsRegistry::new(dataset, metrics, provenance)
}
