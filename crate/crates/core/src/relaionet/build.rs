//! Candidate build: shards → matched, scored, filtered and capped classes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::candidates::{screen, ClassManifest, Rejection, ScoredRow, TopK, DEFAULT_CAP, DEFAULT_TAU};
use super::embed::{cosine, normalize, TextEmbedder, EMBED_BATCH};
use super::shard::{stream_shard, Malformed, RawRow};
use super::synset::{match_caption, synset_prompt, CaptionMatch, LemmaIndex, Synset};
use crate::error::{Error, Result};
use crate::harness::protocol::{read_json, write_json_atomic};

pub const CANDIDATES_FILE: &str = "candidates.json";
pub const BUILD_REPORT_FILE: &str = "build_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub tau: f64,
    pub cap: usize,
    pub top_n: usize,
    pub batch_size: usize,
    pub workers: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            cap: DEFAULT_CAP,
            top_n: 1000,
            batch_size: EMBED_BATCH,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardSummary {
    pub shard_id: u32,
    pub path: String,
    pub rows: u64,
    pub malformed: u64,
    pub malformed_by_kind: BTreeMap<String, u64>,
    pub unmatched: u64,
    pub multi: u64,
    pub nsfw: u64,
    pub below_threshold: u64,
    pub kept: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ShardSummary {
    fn reject(&mut self, r: Rejection) {
        match r {
            Rejection::Unmatched => self.unmatched += 1,
            Rejection::Multi => self.multi += 1,
            Rejection::Nsfw => self.nsfw += 1,
            Rejection::BelowThreshold => self.below_threshold += 1,
        }
    }

    fn malformed(&mut self, m: Malformed) {
        self.malformed += 1;
        let key = match m {
            Malformed::MissingCaption => "missing_caption",
            Malformed::MissingUrl => "missing_url",
            Malformed::BadNsfw => "bad_nsfw",
            Malformed::BadSimilarity => "bad_similarity",
            Malformed::Undecodable => "undecodable",
        };
        *self.malformed_by_kind.entry(key.into()).or_default() += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub schema_version: u32,
    pub options: BuildOptions,
    pub similarity_source: String,
    pub lemmas_mapped: usize,
    pub lemmas_excluded: usize,
    pub shards: Vec<ShardSummary>,
    pub rows: u64,
    pub malformed: u64,
    pub kept: u64,
    pub classes: usize,
    pub candidates: usize,
    /// Classes that had candidates but fell outside the top N.
    pub dropped_by_top_n: Vec<String>,
}

/// Where clip similarities come from.
pub enum Similarity<'a> {
    /// The shard's own similarity column.
    Metadata,
    /// Caption vs synset-prompt cosine from an embedding backend.
    Embedder(&'a dyn TextEmbedder),
}

type PromptEmbeddings<'a> = (BTreeMap<String, Vec<f64>>, &'a dyn TextEmbedder);

struct Scorer<'a> {
    index: &'a LemmaIndex,
    opts: &'a BuildOptions,
    /// Unit synset-prompt embeddings, when an embedder is used.
    prompts: Option<PromptEmbeddings<'a>>,
}

impl Scorer<'_> {
    fn shard(&self, shard_id: u32, path: &Path) -> (TopK, ShardSummary) {
        let mut top = TopK::new(self.opts.cap);
        let mut sum = ShardSummary {
            shard_id,
            path: path.display().to_string(),
            ..Default::default()
        };
        let mut pending: Vec<(u64, RawRow, String)> = Vec::new();
        let mut failed: Option<Error> = None;
        let res = stream_shard(path, |row_id, row| {
            sum.rows += 1;
            if failed.is_some() {
                return;
            }
            let row = match row {
                Ok(r) => r,
                Err(m) => return sum.malformed(m),
            };
            let label = match_caption(&row.caption, self.index);
            let needs_sim = matches!(label, CaptionMatch::Wnid(_)) && !row.nsfw;
            if !(needs_sim && self.prompts.is_some()) {
                let sim = match row.similarity {
                    Some(s) => s,
                    None if needs_sim => return sum.malformed(Malformed::BadSimilarity),
                    None => f64::NAN,
                };
                return self.keep(&mut top, &mut sum, row, label, sim, shard_id, row_id);
            }
            let CaptionMatch::Wnid(wnid) = label else { return };
            pending.push((row_id, row, wnid));
            if pending.len() >= self.opts.batch_size.max(1) {
                if let Err(e) = self.flush(&mut pending, &mut top, &mut sum, shard_id) {
                    failed = Some(e);
                }
            }
        });
        let res = res.and_then(|cols| {
            if let Some(e) = failed.take() {
                return Err(e);
            }
            if self.prompts.is_none() && !cols.has_similarity {
                return Err(Error::InvalidInput("shard has no similarity column and no embedder is configured".into()));
            }
            self.flush(&mut pending, &mut top, &mut sum, shard_id)
        });
        if let Err(e) = res {
            tracing::warn!(shard = %path.display(), error = %e, "shard failed");
            sum.error = Some(e.to_string());
            return (TopK::new(self.opts.cap), sum);
        }
        (top, sum)
    }

    #[allow(clippy::too_many_arguments)]
    fn keep(
        &self,
        top: &mut TopK,
        sum: &mut ShardSummary,
        row: RawRow,
        label: CaptionMatch,
        clip_sim: f64,
        shard_id: u32,
        row_id: u64,
    ) {
        let scored = ScoredRow {
            caption: row.caption,
            url: row.url,
            label,
            clip_sim,
            nsfw: row.nsfw,
            shard_id,
            row_id,
        };
        match screen(&scored, self.opts.tau) {
            Ok(c) => {
                sum.kept += 1;
                top.push(c);
            }
            Err(r) => sum.reject(r),
        }
    }

    fn flush(
        &self,
        pending: &mut Vec<(u64, RawRow, String)>,
        top: &mut TopK,
        sum: &mut ShardSummary,
        shard_id: u32,
    ) -> Result<()> {
        if pending.is_empty() {
            return Ok(());
        }
        let Some((prompts, embedder)) = &self.prompts else {
            return Ok(());
        };
        let texts: Vec<String> = pending.iter().map(|(_, r, _)| r.caption.clone()).collect();
        let embs = embedder.embed(&texts)?;
        if embs.len() != texts.len() {
            return Err(Error::DimensionMismatch("embedder returned wrong count".into()));
        }
        for ((row_id, row, wnid), e) in pending.drain(..).zip(embs) {
            let sim = cosine(&e, &prompts[&wnid]);
            self.keep(top, sum, row, CaptionMatch::Wnid(wnid), sim, shard_id, row_id);
        }
        Ok(())
    }
}

fn synset_embeddings(synsets: &[Synset], embedder: &dyn TextEmbedder, batch: usize) -> Result<BTreeMap<String, Vec<f64>>> {
    let prompts = synsets.iter().map(synset_prompt).collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for (chunk, syn) in prompts.chunks(batch.max(1)).zip(synsets.chunks(batch.max(1))) {
        let embs = embedder.embed(chunk)?;
        if embs.len() != chunk.len() {
            return Err(Error::DimensionMismatch("embedder returned wrong count".into()));
        }
        for (mut e, s) in embs.into_iter().zip(syn) {
            normalize(&mut e);
            out.insert(s.wnid.clone(), e);
        }
    }
    Ok(out)
}

/// Streams every shard, keeping per-class top-K candidates. Unreadable
/// shards are recorded in the report and skipped.
pub fn build_candidates(
    shards: &[PathBuf],
    synsets: &[Synset],
    opts: &BuildOptions,
    similarity: Similarity<'_>,
) -> Result<(Vec<ClassManifest>, BuildReport)> {
    super::synset::validate_synsets(synsets)?;
    if !(opts.tau.is_finite()) || opts.cap == 0 || opts.top_n == 0 {
        return Err(Error::InvalidInput("tau must be finite; cap and top_n positive".into()));
    }
    let index = LemmaIndex::build(synsets)?;
    let (prompts, source) = match similarity {
        Similarity::Metadata => (None, "metadata".to_string()),
        Similarity::Embedder(e) => (
            Some((synset_embeddings(synsets, e, opts.batch_size)?, e)),
            format!("embedder:{}", e.name()),
        ),
    };
    let scorer = Scorer {
        index: &index,
        opts,
        prompts,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))?;
    let results: Vec<(TopK, ShardSummary)> = pool.install(|| {
        shards
            .par_iter()
            .enumerate()
            .map(|(i, p)| scorer.shard(i as u32, p))
            .collect()
    });

    let mut top = TopK::new(opts.cap);
    let mut summaries = Vec::with_capacity(results.len());
    for (t, s) in results {
        top = top.merge(t);
        summaries.push(s);
    }
    let mut classes = top.finish();

    // top-N classes by candidate count, ties to the lower class index
    let class_index: BTreeMap<&str, u32> = synsets.iter().map(|s| (s.wnid.as_str(), s.class_index)).collect();
    let mut dropped = Vec::new();
    if classes.len() > opts.top_n {
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(classes[i].candidates.len()), class_index[classes[i].wnid.as_str()]));
        let keep: std::collections::BTreeSet<usize> = order[..opts.top_n].iter().copied().collect();
        let mut kept = Vec::new();
        for (i, c) in classes.into_iter().enumerate() {
            if keep.contains(&i) {
                kept.push(c);
            } else {
                dropped.push(c.wnid);
            }
        }
        classes = kept;
    }

    let report = BuildReport {
        schema_version: 1,
        options: *opts,
        similarity_source: source,
        lemmas_mapped: index.len(),
        lemmas_excluded: index.excluded().len(),
        rows: summaries.iter().map(|s| s.rows).sum(),
        malformed: summaries.iter().map(|s| s.malformed).sum(),
        kept: summaries.iter().map(|s| s.kept).sum(),
        shards: summaries,
        classes: classes.len(),
        candidates: classes.iter().map(|c| c.candidates.len()).sum(),
        dropped_by_top_n: dropped,
    };
    Ok((classes, report))
}

pub fn write_build_outputs(dir: &Path, classes: &[ClassManifest], report: &BuildReport) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json_atomic(&dir.join(CANDIDATES_FILE), &classes)?;
    write_json_atomic(&dir.join(BUILD_REPORT_FILE), report)
}

pub fn load_candidates(path: &Path) -> Result<Vec<ClassManifest>> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synsets() -> Vec<Synset> {
        let s = |wnid: &str, lemmas: &[&str], idx| Synset {
            wnid: wnid.into(),
            name: lemmas[0].into(),
            lemmas: lemmas.iter().map(|l| l.to_string()).collect(),
            definition: format!("def {idx}"),
            class_index: idx,
        };
        vec![
            s("n01440764", &["tench", "Tinca_tinca"], 0),
            s("n01443537", &["goldfish"], 1),
            s("n02012849", &["crane"], 134),
            s("n03126707", &["crane"], 517),
        ]
    }

    fn shard(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, format!("url,caption,nsfw,similarity\n{body}")).unwrap();
        p
    }

    #[test]
    fn counts_and_caps() {
        let dir = tempfile::tempdir().unwrap();
        let a = shard(
            dir.path(),
            "a.csv",
            "http://x/1,a tench,UNLIKELY,0.9\n\
             http://x/2,goldfish and tench,UNLIKELY,0.95\n\
             http://x/3,a crane,UNLIKELY,0.95\n\
             http://x/4,goldfish,NSFW,0.95\n\
             http://x/5,goldfish,UNLIKELY,0.82\n\
             ,goldfish,UNLIKELY,0.9\n\
             http://x/6,goldfish,UNLIKELY,0.83\n",
        );
        let b = shard(dir.path(), "b.csv", "http://x/7,tench,UNLIKELY,0.91\nhttp://x/1,tench,UNLIKELY,0.99\n");
        let missing = dir.path().join("gone.csv");
        let opts = BuildOptions { cap: 2, workers: 2, ..Default::default() };
        let (classes, report) = build_candidates(&[a, b, missing], &synsets(), &opts, Similarity::Metadata).unwrap();
        let s = &report.shards[0];
        assert_eq!((s.rows, s.malformed, s.multi, s.unmatched, s.nsfw, s.below_threshold, s.kept), (7, 1, 1, 1, 1, 1, 2));
        assert!(report.shards[2].error.is_some());
        assert_eq!(report.shards.len(), 3);
        let urls: Vec<Vec<(&str, f64)>> = classes
            .iter()
            .map(|c| c.candidates.iter().map(|r| (r.url.as_str(), r.clip_sim)).collect())
            .collect();
        assert_eq!(classes[0].wnid, "n01440764");
        assert_eq!(urls[0], [("http://x/1", 0.99), ("http://x/7", 0.91)]);
        assert_eq!(urls[1], [("http://x/6", 0.83)]);
    }

    #[test]
    fn top_n_keeps_biggest_classes() {
        let dir = tempfile::tempdir().unwrap();
        let a = shard(dir.path(), "a.csv", "http://x/1,tench,,0.9\nhttp://x/2,goldfish,,0.9\nhttp://x/3,goldfish,,0.9\n");
        let opts = BuildOptions { top_n: 1, ..Default::default() };
        let (classes, report) = build_candidates(&[a], &synsets(), &opts, Similarity::Metadata).unwrap();
        assert_eq!(classes.len(), 1);
        assert_eq!(classes[0].wnid, "n01443537");
        assert_eq!(report.dropped_by_top_n, ["n01440764"]);
    }

    struct Keyword;
    impl TextEmbedder for Keyword {
        fn name(&self) -> &str {
            "keyword"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
            assert!(texts.len() <= 2);
            Ok(texts
                .iter()
                .map(|t| vec![t.contains("tench") as u8 as f64, t.contains("goldfish") as u8 as f64, 0.3])
                .collect())
        }
    }

    #[test]
    fn embedder_scores_in_batches() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "url,caption\nhttp://x/1,tench\nhttp://x/2,goldfish\nhttp://x/3,tench\nhttp://x/4,nothing\n").unwrap();
        let opts = BuildOptions { batch_size: 2, ..Default::default() };
        let (classes, report) = build_candidates(&[p], &synsets(), &opts, Similarity::Embedder(&Keyword)).unwrap();
        assert_eq!(report.kept, 3);
        assert_eq!(classes.len(), 2);
        let sim = classes[0].candidates[0].clip_sim;
        // [1,0,.3] against the unit synset prompt embedding [1,0,.3]/|.|
        assert!((sim - 1.0).abs() < 1e-12);
    }
}
