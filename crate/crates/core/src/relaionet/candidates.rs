//! Threshold filtering and per-class ranking of matched captions.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::synset::{is_valid_wnid, CaptionMatch};
use crate::error::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.82;
pub const DEFAULT_CAP: usize = 70;

/// A metadata row after caption matching and similarity scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRow {
    pub caption: String,
    pub url: String,
    pub label: CaptionMatch,
    pub clip_sim: f64,
    pub nsfw: bool,
    pub shard_id: u32,
    pub row_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub caption: String,
    pub url: String,
    pub wnid: String,
    pub clip_sim: f64,
    pub nsfw_flag: bool,
    pub shard_id: u32,
    pub row_id: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rejection {
    Unmatched,
    Multi,
    Nsfw,
    BelowThreshold,
}

/// Keep-or-reject decision for one row. Similarity must strictly exceed `tau`.
pub fn screen(row: &ScoredRow, tau: f64) -> std::result::Result<CandidateRecord, Rejection> {
    let wnid = match &row.label {
        CaptionMatch::None => return Err(Rejection::Unmatched),
        CaptionMatch::Multi => return Err(Rejection::Multi),
        CaptionMatch::Wnid(w) => w,
    };
    if row.nsfw {
        return Err(Rejection::Nsfw);
    }
    if row.clip_sim.partial_cmp(&tau) != Some(Ordering::Greater) {
        return Err(Rejection::BelowThreshold);
    }
    Ok(CandidateRecord {
        caption: row.caption.clone(),
        url: row.url.clone(),
        wnid: wnid.clone(),
        clip_sim: row.clip_sim,
        nsfw_flag: false,
        shard_id: row.shard_id,
        row_id: row.row_id,
    })
}

pub fn filter_candidates(rows: &[ScoredRow], tau: f64) -> Vec<CandidateRecord> {
    rows.iter().filter_map(|r| screen(r, tau).ok()).collect()
}

/// Similarity descending, then url, shard and row ascending.
pub fn rank_order(a: &CandidateRecord, b: &CandidateRecord) -> Ordering {
    b.clip_sim
        .total_cmp(&a.clip_sim)
        .then_with(|| a.url.cmp(&b.url))
        .then_with(|| a.shard_id.cmp(&b.shard_id))
        .then_with(|| a.row_id.cmp(&b.row_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassManifest {
    pub wnid: String,
    pub cap: usize,
    pub candidates: Vec<CandidateRecord>,
}

/// Sort, keep the best record per url, truncate to `cap`.
fn compact(records: &mut Vec<CandidateRecord>, cap: usize) {
    records.sort_by(rank_order);
    let mut seen = std::collections::HashSet::new();
    records.retain(|r| seen.insert(r.url.clone()));
    records.truncate(cap);
}

pub fn rank_and_cap(wnid: &str, mut records: Vec<CandidateRecord>, cap: usize) -> Result<ClassManifest> {
    if !is_valid_wnid(wnid) {
        return Err(Error::InvalidInput(format!("bad wnid `{wnid}`")));
    }
    if let Some(r) = records.iter().find(|r| r.wnid != wnid) {
        return Err(Error::InvalidInput(format!("record for {} in class {wnid}", r.wnid)));
    }
    compact(&mut records, cap);
    Ok(ClassManifest {
        wnid: wnid.to_string(),
        cap,
        candidates: records,
    })
}

/// Streaming per-class top-K. Buffers are compacted once they reach twice
/// the cap, so memory stays at O(classes · cap) whatever the row count.
/// Merging two accumulators gives the same result as feeding one with both
/// inputs.
#[derive(Debug, Clone)]
pub struct TopK {
    cap: usize,
    classes: HashMap<String, Vec<CandidateRecord>>,
}

impl TopK {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            classes: HashMap::new(),
        }
    }

    pub fn push(&mut self, rec: CandidateRecord) {
        let cap = self.cap;
        let buf = self.classes.entry(rec.wnid.clone()).or_default();
        buf.push(rec);
        if buf.len() >= 2 * cap {
            compact(buf, cap);
        }
    }

    pub fn merge(mut self, other: TopK) -> TopK {
        for (_, recs) in other.classes {
            for r in recs {
                self.push(r);
            }
        }
        self
    }

    /// Final per-class manifests, ordered by wnid.
    pub fn finish(self) -> Vec<ClassManifest> {
        let cap = self.cap;
        let sorted: BTreeMap<String, Vec<CandidateRecord>> = self.classes.into_iter().collect();
        sorted
            .into_iter()
            .map(|(wnid, mut candidates)| {
                compact(&mut candidates, cap);
                ClassManifest { wnid, cap, candidates }
            })
            .collect()
    }
}
