use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Isotropic Gaussian endpoint `N(mean, scale² I)` of the flow at `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Target {
    pub mean: Point,
    pub scale: f64,
}

impl Target {
    pub fn new(mean: Point, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) || !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "toy target needs finite mean and positive scale, got {mean:?}, {scale}"
            )));
        }
        Ok(Self { mean, scale })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyClassSpec {
    pub class_id: u32,
    pub name: String,
    pub mean: Point,
    #[serde(deserialize_with = "isotropic_scale")]
    pub scale: f64,
    pub weight: f64,
}

impl ToyClassSpec {
    pub fn target(&self) -> Target {
        Target {
            mean: self.mean,
            scale: self.scale,
        }
    }
}

/// Accepts a scalar or a per-axis pair with equal entries.
fn isotropic_scale<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(f64),
        Axes([f64; 2]),
    }
    match Raw::deserialize(d)? {
        Raw::One(s) => Ok(s),
        Raw::Axes([a, b]) if a == b => Ok(a),
        Raw::Axes([a, b]) => Err(serde::de::Error::custom(format!(
            "anisotropic targets are not supported (scale {a} vs {b})"
        ))),
    }
}

/// A class-conditional mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyModel {
    pub classes: Vec<ToyClassSpec>,
}

impl ToyModel {
    pub fn new(classes: Vec<ToyClassSpec>) -> Result<Self> {
        let model = Self { classes };
        model.validate()?;
        Ok(model)
    }

    /// Four unit-scale classes on the corners of a square, equal weights.
    pub fn default_four() -> Self {
        let names = ["tench", "goldfish", "great white shark", "tiger shark"];
        let means = [[3.0, 3.0], [-3.0, 3.0], [-3.0, -3.0], [3.0, -3.0]];
        let classes = names
            .iter()
            .zip(means)
            .enumerate()
            .map(|(i, (name, mean))| ToyClassSpec {
                class_id: i as u32,
                name: name.to_string(),
                mean,
                scale: 1.0,
                weight: 0.25,
            })
            .collect();
        Self { classes }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let model: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::config("classes", "at least one class required"));
        }
        let mut total = 0.0;
        for (i, c) in self.classes.iter().enumerate() {
            Target::new(c.mean, c.scale)
                .map_err(|e| Error::config(format!("classes[{i}]"), e.to_string()))?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::config(format!("classes[{i}].weight"), "must be positive"));
            }
            if c.name.trim().is_empty() {
                return Err(Error::config(format!("classes[{i}].name"), "must be nonempty"));
            }
            if self.classes[..i].iter().any(|o| o.class_id == c.class_id) {
                return Err(Error::config(
                    format!("classes[{i}].class_id"),
                    format!("duplicate class id {}", c.class_id),
                ));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::config("classes", format!("weights sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn class(&self, class_id: u32) -> Result<&ToyClassSpec> {
        self.classes
            .iter()
            .find(|c| c.class_id == class_id)
            .ok_or_else(|| Error::InvalidInput(format!("toy model has no class {class_id}")))
    }

    /// Moment-matched isotropic Gaussian of the whole mixture.
    pub fn unconditional(&self) -> Target {
        let mut mean = [0.0; 2];
        for c in &self.classes {
            mean[0] += c.weight * c.mean[0];
            mean[1] += c.weight * c.mean[1];
        }
        let total_var: f64 = self
            .classes
            .iter()
            .map(|c| {
                let d0 = c.mean[0] - mean[0];
                let d1 = c.mean[1] - mean[1];
                c.weight * (2.0 * c.scale * c.scale + d0 * d0 + d1 * d1)
            })
            .sum();
        Target {
            mean,
            scale: (total_var / 2.0).sqrt(),
        }
    }

    /// Class posterior `p(k | x)` under the mixture, in class order.
    pub fn posterior(&self, x: Point) -> Vec<f64> {
        let logs: Vec<f64> = self
            .classes
            .iter()
            .map(|c| {
                let s2 = c.scale * c.scale;
                let d0 = x[0] - c.mean[0];
                let d1 = x[1] - c.mean[1];
                c.weight.ln() - (d0 * d0 + d1 * d1) / (2.0 * s2) - s2.ln()
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("flow time must lie in [0, 1), got {t}")));
    }
    Ok(())
}

/// Marginal velocity of the linear interpolant from `N(0, I)` to `target`.
pub fn conditional_velocity(x: Point, t: f64, target: &Target) -> Result<Point> {
    check_time(t)?;
    let s2 = target.scale * target.scale;
    let sigma = ((1.0 - t) * (1.0 - t) + t * t * s2).sqrt();
    let sigma_dot = (-(1.0 - t) + t * s2) / sigma;
    let k = sigma_dot / sigma;
    let m = target.mean;
    Ok([
        k * (x[0] - t * m[0]) + m[0],
        k * (x[1] - t * m[1]) + m[1],
    ])
}

/// Guided velocity `v_u + w (v_c - v_u)`; `w = 1` is the unguided baseline.
pub fn cfg_velocity(x: Point, t: f64, w: f64, cond: &Target, uncond: &Target) -> Result<Point> {
    let vc = conditional_velocity(x, t, cond)?;
    if w == 1.0 {
        return Ok(vc);
    }
    let vu = conditional_velocity(x, t, uncond)?;
    if w == 0.0 {
        return Ok(vu);
    }
    Ok([vu[0] + w * (vc[0] - vu[0]), vu[1] + w * (vc[1] - vu[1])])
}
