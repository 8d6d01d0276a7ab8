//! Metric rows in, scored benchmark tables out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::composite::{mmhm, BoundsRegistry, MmhmScore, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::harness::evaluate::RunReport;
use crate::key::{RunKey, Steps};
use crate::metrics::MetricReport;

pub const TABLE_COLUMNS: [&str; 11] = [
    "model", "steps", "cfg", "dataset", "fid", "is_mean", "is_std", "clip", "pick", "mmhm", "best_in_family",
];

/// Raw metrics for one (model, steps, cfg, dataset) configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub family: String,
    pub model: String,
    pub steps: Steps,
    pub cfg: f64,
    pub dataset: String,
    pub seed: u64,
    pub fid: f64,
    pub is_mean: f64,
    pub is_std: Option<f64>,
    pub clip: f64,
    pub pick: f64,
}

impl MetricRow {
    pub fn key(&self) -> RunKey {
        RunKey::new(&self.model, self.cfg, self.steps, &self.dataset, self.seed)
    }

    pub fn report(&self) -> MetricReport {
        MetricReport::new(self.fid, self.is_mean, self.is_std.unwrap_or(0.0), self.clip, self.pick)
    }

    pub fn from_run_report(r: &RunReport) -> Self {
        Self {
            family: r.family.clone(),
            model: r.key.model.clone(),
            steps: r.key.steps,
            cfg: r.key.cfg,
            dataset: r.key.dataset.clone(),
            seed: r.key.seed,
            fid: r.metrics.fid,
            is_mean: r.metrics.is_mean,
            is_std: Some(r.metrics.is_std),
            clip: r.metrics.clip_score,
            pick: r.metrics.pick_score,
        }
    }
}

/// Family defaults to the model name without a trailing `*`.
pub fn default_family(model: &str) -> String {
    model.trim_end_matches('*').trim().to_string()
}

#[derive(Deserialize)]
struct RawRow {
    #[serde(default)]
    family: Option<String>,
    model: String,
    steps: String,
    cfg: f64,
    dataset: String,
    #[serde(default)]
    seed: Option<u64>,
    fid: f64,
    is_mean: f64,
    #[serde(default)]
    is_std: Option<f64>,
    clip: f64,
    pick: f64,
}

/// Reads a metrics CSV. Columns beyond the known ones (a printed composite,
/// for instance) are ignored; the composite is always recomputed.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<RawRow>().enumerate() {
        let line = i + 2;
        let r = rec.map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        let steps = r
            .steps
            .parse()
            .map_err(|e| Error::parse(path, format!("line {line}: {e}")))?;
        rows.push(MetricRow {
            family: r.family.filter(|f| !f.is_empty()).unwrap_or_else(|| default_family(&r.model)),
            model: r.model,
            steps,
            cfg: r.cfg,
            dataset: r.dataset,
            seed: r.seed.unwrap_or(crate::harness::config::DEFAULT_SEED),
            fid: r.fid,
            is_mean: r.is_mean,
            is_std: r.is_std,
            clip: r.clip,
            pick: r.pick,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub metrics: MetricRow,
    pub mmhm: MmhmScore,
    pub best_in_family: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkTable {
    pub rows: Vec<TableRow>,
}

/// Scores every row against `bounds` and flags the full-precision MMHM
/// winner of each (family, dataset) group. Row order is preserved.
pub fn score_table(rows: &[MetricRow], bounds: &BoundsRegistry) -> Result<BenchmarkTable> {
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        out.push(TableRow {
            mmhm: mmhm(&r.report(), bounds, DEFAULT_EPSILON)?,
            metrics: r.clone(),
            best_in_family: false,
        });
    }
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry((&r.family, &r.dataset)).or_default().push(i);
    }
    // same order as `rank_configs`: MMHM desc, FID asc, key
    let better = |i: usize, j: usize| {
        out[j]
            .mmhm
            .value
            .total_cmp(&out[i].mmhm.value)
            .then_with(|| rows[i].fid.total_cmp(&rows[j].fid))
            .then_with(|| rows[i].key().cmp(&rows[j].key()))
            .is_lt()
    };
    let best: Vec<usize> = groups
        .values()
        .map(|idx| idx.iter().copied().reduce(|a, b| if better(b, a) { b } else { a }).unwrap_or(0))
        .collect();
    for i in best {
        out[i].best_in_family = true;
    }
    Ok(BenchmarkTable { rows: out })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchmarkTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_COLUMNS)?;
        for r in &self.rows {
            let m = &r.metrics;
            w.write_record([
                m.model.clone(),
                m.steps.to_string(),
                m.cfg.to_string(),
                m.dataset.clone(),
                m.fid.to_string(),
                m.is_mean.to_string(),
                opt(m.is_std),
                m.clip.to_string(),
                m.pick.to_string(),
                r.mmhm.value.to_string(),
                r.best_in_family.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    /// Aligned plain-text rendering; the best row of each family is starred.
    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 11]> = self
            .rows
            .iter()
            .map(|r| {
                let m = &r.metrics;
                [
                    m.model.clone(),
                    m.steps.to_string(),
                    m.cfg.to_string(),
                    m.dataset.clone(),
                    format!("{:.2}", m.fid),
                    format!("{:.2}", m.is_mean),
                    m.is_std.map(|s| format!("{s:.2}")).unwrap_or_else(|| "-".into()),
                    format!("{:.2}", m.clip),
                    format!("{:.2}", m.pick),
                    format!("{:.4}", r.mmhm.value),
                    if r.best_in_family { "*".into() } else { String::new() },
                ]
            })
            .collect();
        let mut width = TABLE_COLUMNS.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, row: &[String]| {
            let parts: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if i < 4 {
                        format!("{c:<w$}", w = width[i])
                    } else {
                        format!("{c:>w$}", w = width[i])
                    }
                })
                .collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        line(&mut s, &TABLE_COLUMNS.map(String::from));
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut s, &rule);
        for row in &cells {
            line(&mut s, row);
        }
        s
    }
}

/// Writes `table.csv` and `table.txt` into `dir`.
pub fn render_table(rows: &[MetricRow], bounds: &BoundsRegistry, dir: &Path) -> Result<BenchmarkTable> {
    let table = score_table(rows, bounds)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("table.csv");
    std::fs::write(&csv_path, table.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    let txt_path = dir.join("table.txt");
    std::fs::write(&txt_path, table.to_text()).map_err(|e| Error::io(&txt_path, e))?;
    Ok(table)
}
