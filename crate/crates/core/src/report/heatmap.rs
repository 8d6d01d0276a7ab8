//! CFG × steps heatmaps. The CSV is canonical; the SVG is derived from it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::table::MetricRow;
use crate::composite::{mmhm, BoundsRegistry, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::harness::config::{DEFAULT_CFG_VALUES, DEFAULT_STEP_VALUES};
use crate::harness::protocol::read_json;
use crate::key::Steps;

pub const GRID_FILE: &str = "grid.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum HeatmapMetric {
    Fid,
    Is,
    Clip,
    Pick,
    Mmhm,
}

impl HeatmapMetric {
    pub const ALL: [HeatmapMetric; 5] = [
        HeatmapMetric::Fid,
        HeatmapMetric::Is,
        HeatmapMetric::Clip,
        HeatmapMetric::Pick,
        HeatmapMetric::Mmhm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeatmapMetric::Fid => "fid",
            HeatmapMetric::Is => "is",
            HeatmapMetric::Clip => "clip",
            HeatmapMetric::Pick => "pick",
            HeatmapMetric::Mmhm => "mmhm",
        }
    }

    fn title(self) -> &'static str {
        match self {
            HeatmapMetric::Fid => "FID (lower is better)",
            HeatmapMetric::Is => "Inception Score",
            HeatmapMetric::Clip => "CLIP Score",
            HeatmapMetric::Pick => "Pick Score",
            HeatmapMetric::Mmhm => "MMHM",
        }
    }

    fn lower_is_better(self) -> bool {
        self == HeatmapMetric::Fid
    }

    fn decimals(self) -> usize {
        if self == HeatmapMetric::Mmhm {
            3
        } else {
            2
        }
    }
}

/// Declared axes of a grid directory (`grid.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub cfg_values: Vec<f64>,
    pub step_values: Vec<Steps>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            cfg_values: DEFAULT_CFG_VALUES.to_vec(),
            step_values: DEFAULT_STEP_VALUES.iter().map(|s| Steps::Fixed(*s)).collect(),
        }
    }
}

impl GridAxes {
    pub fn load(path: &Path) -> Result<Self> {
        let axes: Self = read_json(path)?;
        axes.validate()?;
        Ok(axes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cfg_values.is_empty() || self.step_values.is_empty() {
            return Err(Error::Validation("heatmap axes must be nonempty".into()));
        }
        for (i, c) in self.cfg_values.iter().enumerate() {
            if !c.is_finite() || self.cfg_values[..i].contains(c) {
                return Err(Error::Validation(format!("bad or repeated cfg axis value {c}")));
            }
        }
        for (i, s) in self.step_values.iter().enumerate() {
            if self.step_values[..i].contains(s) {
                return Err(Error::Validation(format!("repeated steps axis value {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub metric: HeatmapMetric,
    pub model: String,
    pub dataset: String,
    pub axes: GridAxes,
    /// `cells[cfg][steps]`; `None` marks a missing cell.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl HeatmapGrid {
    pub fn present(&self) -> impl Iterator<Item = f64> + '_ {
        self.cells.iter().flatten().flatten().copied()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["cfg", "steps", "value"])?;
        for (ci, cfg) in self.axes.cfg_values.iter().enumerate() {
            for (si, steps) in self.axes.step_values.iter().enumerate() {
                let v = self.cells[ci][si].map(|v| v.to_string()).unwrap_or_default();
                w.write_record([cfg.to_string(), steps.to_string(), v])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn to_svg(&self) -> String {
        const CELL: f64 = 64.0;
        const LEFT: f64 = 70.0;
        const TOP: f64 = 56.0;
        let cols = self.axes.step_values.len() as f64;
        let rows = self.axes.cfg_values.len() as f64;
        let width = LEFT + cols * CELL + 20.0;
        let height = TOP + rows * CELL + 50.0;
        let (lo, hi) = self
            .present()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
        );
        s.push_str(concat!(
            r#"<defs><pattern id="hatch" width="8" height="8" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
            r##"<rect width="8" height="8" fill="#f4f4f4"/><line x1="0" y1="0" x2="0" y2="8" stroke="#999" stroke-width="2"/></pattern></defs>"##,
            "\n"
        ));
        let _ = writeln!(
            s,
            r#"<text x="{LEFT}" y="20" font-size="14" font-weight="bold">{} · {} · {}</text>"#,
            xml_escape(self.metric.title()),
            xml_escape(&self.model),
            xml_escape(&self.dataset)
        );
        for (si, steps) in self.axes.step_values.iter().enumerate() {
            let x = LEFT + (si as f64 + 0.5) * CELL;
            let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{steps}</text>"#, TOP - 8.0);
        }
        for (ci, cfg) in self.axes.cfg_values.iter().enumerate() {
            let y = TOP + (ci as f64 + 0.5) * CELL + 4.0;
            let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{cfg}</text>"#, LEFT - 8.0);
            for si in 0..self.axes.step_values.len() {
                let x = LEFT + si as f64 * CELL;
                let y0 = TOP + ci as f64 * CELL;
                match self.cells[ci][si] {
                    Some(v) => {
                        let mut t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                        if self.metric.lower_is_better() {
                            t = 1.0 - t;
                        }
                        let (fill, ink) = color(t);
                        let _ = writeln!(
                            s,
                            r##"<rect x="{x}" y="{y0}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#fff"/><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{:.*}</text>"##,
                            x + CELL / 2.0,
                            y0 + CELL / 2.0 + 4.0,
                            self.metric.decimals(),
                            v
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            r##"<rect x="{x}" y="{y0}" width="{CELL}" height="{CELL}" fill="url(#hatch)" stroke="#fff"/>"##
                        );
                    }
                }
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">steps</text>"#,
            LEFT + cols * CELL / 2.0,
            TOP + rows * CELL + 24.0
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">CFG</text>"#,
            TOP + rows * CELL / 2.0,
            TOP + rows * CELL / 2.0
        );
        s.push_str("</svg>\n");
        s
    }
}

/// Linear blend from a pale yellow (t = 0, worse) to a deep blue (t = 1,
/// better), with a text colour that stays readable.
fn color(t: f64) -> (String, &'static str) {
    let t = t.clamp(0.0, 1.0);
    let a = [255.0, 247.0, 188.0];
    let b = [8.0, 48.0, 107.0];
    let c: Vec<u8> = a.iter().zip(b).map(|(x, y)| (x + (y - x) * t).round() as u8).collect();
    (format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]), if t > 0.55 { "#fff" } else { "#000" })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One grid per metric for a single model on a single dataset. Rows off the
/// declared axes, repeated cells, or mixed models/datasets are errors.
pub fn build_heatmaps(rows: &[MetricRow], bounds: &BoundsRegistry, axes: &GridAxes) -> Result<Vec<HeatmapGrid>> {
    axes.validate()?;
    let first = rows
        .first()
        .ok_or_else(|| Error::InvalidInput("no metric rows for heatmap".into()))?;
    let mut cells: BTreeMap<(usize, usize), [f64; 5]> = BTreeMap::new();
    for r in rows {
        if r.model != first.model || r.dataset != first.dataset {
            return Err(Error::Validation(format!(
                "heatmap grid mixes {} / {} with {} / {}",
                first.model, first.dataset, r.model, r.dataset
            )));
        }
        let ci = axes.cfg_values.iter().position(|c| *c == r.cfg);
        let si = axes.step_values.iter().position(|s| *s == r.steps);
        let (Some(ci), Some(si)) = (ci, si) else {
            return Err(Error::Validation(format!(
                "cell (cfg {}, steps {}) is off the grid axes",
                r.cfg, r.steps
            )));
        };
        let m = mmhm(&r.report(), bounds, DEFAULT_EPSILON)?.value;
        if cells.insert((ci, si), [r.fid, r.is_mean, r.clip, r.pick, m]).is_some() {
            return Err(Error::Validation(format!("duplicate cell (cfg {}, steps {})", r.cfg, r.steps)));
        }
    }
    Ok(HeatmapMetric::ALL
        .iter()
        .enumerate()
        .map(|(k, metric)| HeatmapGrid {
            metric: *metric,
            model: first.model.clone(),
            dataset: first.dataset.clone(),
            axes: axes.clone(),
            cells: (0..axes.cfg_values.len())
                .map(|ci| {
                    (0..axes.step_values.len())
                        .map(|si| cells.get(&(ci, si)).map(|v| v[k]))
                        .collect()
                })
                .collect(),
        })
        .collect())
}

/// Writes `<metric>.csv` and `<metric>.svg` for every grid into `dir`.
pub fn write_heatmaps(grids: &[HeatmapGrid], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for g in grids {
        let csv = dir.join(format!("{}.csv", g.metric.name()));
        std::fs::write(&csv, g.to_csv()?).map_err(|e| Error::io(&csv, e))?;
        let svg = dir.join(format!("{}.svg", g.metric.name()));
        std::fs::write(&svg, g.to_svg()).map_err(|e| Error::io(&svg, e))?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}
