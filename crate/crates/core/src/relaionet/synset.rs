//! Synsets, lemma normalization and caption matching.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label assigned to captions that name two or more classes.
pub const MULTI_SENTINEL: &str = "__multi__";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Synset {
    pub wnid: String,
    pub name: String,
    pub lemmas: Vec<String>,
    pub definition: String,
    pub class_index: u32,
}

pub fn is_valid_wnid(s: &str) -> bool {
    s.len() == 9 && s.starts_with('n') && s[1..].bytes().all(|b| b.is_ascii_digit())
}

impl Synset {
    pub fn validate(&self) -> Result<()> {
        if !is_valid_wnid(&self.wnid) {
            return Err(Error::Validation(format!("bad wnid `{}`", self.wnid)));
        }
        if self.lemmas.is_empty() || self.lemmas.iter().all(|l| normalize_lemma(l).is_empty()) {
            return Err(Error::Validation(format!("{} has no lemmas", self.wnid)));
        }
        if self.class_index > 999 {
            return Err(Error::Validation(format!(
                "{}: class_index {} outside 0..=999",
                self.wnid, self.class_index
            )));
        }
        Ok(())
    }
}

/// Reads `synsets.json` and checks wnids, lemmas and class-index uniqueness.
pub fn load_synsets(path: impl AsRef<Path>) -> Result<Vec<Synset>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let synsets: Vec<Synset> =
        serde_path_to_error::deserialize(de).map_err(|e| Error::parse(path, e))?;
    validate_synsets(&synsets)?;
    Ok(synsets)
}

pub fn validate_synsets(synsets: &[Synset]) -> Result<()> {
    let mut wnids = BTreeSet::new();
    let mut indices = BTreeSet::new();
    for s in synsets {
        s.validate()?;
        if !wnids.insert(s.wnid.as_str()) {
            return Err(Error::Validation(format!("duplicate wnid {}", s.wnid)));
        }
        if !indices.insert(s.class_index) {
            return Err(Error::Validation(format!("duplicate class_index {}", s.class_index)));
        }
    }
    Ok(())
}

/// Lowercase, underscores to spaces, whitespace trimmed and collapsed.
pub fn normalize_lemma(s: &str) -> String {
    s.to_lowercase()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Word tokens of a normalized string. Anything that is not alphanumeric is
/// a boundary, so "sports car," and "sports car" tokenize alike while
/// "sportscar" stays one token.
pub fn tokens(s: &str) -> Vec<String> {
    normalize_lemma(s)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn lemma_key(lemma: &str) -> String {
    tokens(lemma).join(" ")
}

/// Maps each lemma that belongs to exactly one synset to that synset.
#[derive(Debug, Clone, Default)]
pub struct LemmaIndex {
    mapped: HashMap<String, String>,
    excluded: BTreeSet<String>,
    max_tokens: usize,
}

impl LemmaIndex {
    pub fn build(synsets: &[Synset]) -> Result<Self> {
        let mut owners: BTreeMap<String, BTreeSet<&str>> = BTreeMap::new();
        let mut seen = BTreeSet::new();
        for s in synsets {
            if !seen.insert(s.wnid.as_str()) {
                return Err(Error::Validation(format!("duplicate wnid {}", s.wnid)));
            }
            for l in &s.lemmas {
                let key = lemma_key(l);
                if !key.is_empty() {
                    owners.entry(key).or_default().insert(&s.wnid);
                }
            }
        }
        let mut idx = LemmaIndex::default();
        for (lemma, wnids) in owners {
            if wnids.len() == 1 {
                idx.max_tokens = idx.max_tokens.max(lemma.split(' ').count());
                let w = wnids.into_iter().next().unwrap_or_default().to_string();
                idx.mapped.insert(lemma, w);
            } else {
                idx.excluded.insert(lemma);
            }
        }
        Ok(idx)
    }

    pub fn get(&self, lemma: &str) -> Option<&str> {
        self.mapped.get(&lemma_key(lemma)).map(String::as_str)
    }

    pub fn is_excluded(&self, lemma: &str) -> bool {
        self.excluded.contains(&lemma_key(lemma))
    }

    pub fn excluded(&self) -> &BTreeSet<String> {
        &self.excluded
    }

    pub fn mapped(&self) -> impl Iterator<Item = (&str, &str)> {
        self.mapped.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.mapped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapped.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CaptionMatch {
    None,
    Wnid(String),
    Multi,
}

impl fmt::Display for CaptionMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaptionMatch::None => f.write_str("none"),
            CaptionMatch::Wnid(w) => f.write_str(w),
            CaptionMatch::Multi => f.write_str(MULTI_SENTINEL),
        }
    }
}

/// Every lemma whose tokens occur contiguously in the caption contributes
/// its synset; one distinct synset is a match, two or more is `Multi`.
pub fn match_caption(caption: &str, index: &LemmaIndex) -> CaptionMatch {
    let toks = tokens(caption);
    let mut found: Option<&str> = None;
    let mut window = String::new();
    for start in 0..toks.len() {
        window.clear();
        for (n, tok) in toks[start..].iter().take(index.max_tokens).enumerate() {
            if n > 0 {
                window.push(' ');
            }
            window.push_str(tok);
            if let Some(w) = index.mapped.get(&window) {
                match found {
                    None => found = Some(w),
                    Some(prev) if prev != w => return CaptionMatch::Multi,
                    _ => {}
                }
            }
        }
    }
    found.map_or(CaptionMatch::None, |w| CaptionMatch::Wnid(w.to_string()))
}

/// Text used to embed a synset: `"{name} which is {definition}"`.
pub fn synset_prompt(s: &Synset) -> Result<String> {
    let name = s.name.trim();
    let def = s.definition.trim();
    if name.is_empty() || def.is_empty() {
        return Err(Error::InvalidInput(format!("{}: empty name or definition", s.wnid)));
    }
    Ok(format!("{name} which is {def}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn synset(wnid: &str, lemmas: &[&str], idx: u32) -> Synset {
        Synset {
            wnid: wnid.into(),
            name: lemmas[0].replace('_', " "),
            lemmas: lemmas.iter().map(|s| s.to_string()).collect(),
            definition: format!("thing {idx}"),
            class_index: idx,
        }
    }

    /// Independent matcher: for every lemma, scan every token window.
    fn brute_force(caption: &str, synsets: &[Synset]) -> CaptionMatch {
        let cap = tokens(caption);
        let mut count: BTreeMap<Vec<String>, BTreeSet<String>> = BTreeMap::new();
        for s in synsets {
            for l in &s.lemmas {
                let t = tokens(l);
                if !t.is_empty() {
                    count.entry(t).or_default().insert(s.wnid.clone());
                }
            }
        }
        let mut hits = BTreeSet::new();
        for (lemma, owners) in &count {
            if owners.len() != 1 {
                continue;
            }
            for i in 0..cap.len() {
                for j in i + 1..=cap.len() {
                    if &cap[i..j] == lemma.as_slice() {
                        hits.insert(owners.iter().next().unwrap().clone());
                    }
                }
            }
        }
        match hits.len() {
            0 => CaptionMatch::None,
            1 => CaptionMatch::Wnid(hits.into_iter().next().unwrap()),
            _ => CaptionMatch::Multi,
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_lemma("Golden_Retriever"), "golden retriever");
        assert_eq!(normalize_lemma("tench"), "tench");
        assert_eq!(normalize_lemma("  a__b \t c "), "a b c");
    }

    #[test]
    fn index_membership() {
        let s = [
            synset("n00000001", &["a", "b"], 0),
            synset("n00000002", &["b", "c"], 1),
            synset("n00000003", &["d"], 2),
        ];
        let idx = LemmaIndex::build(&s).unwrap();
        let mut mapped: Vec<_> = idx.mapped().map(|(l, _)| l.to_string()).collect();
        mapped.sort();
        assert_eq!(mapped, ["a", "c", "d"]);
        assert_eq!(idx.excluded().iter().collect::<Vec<_>>(), ["b"]);
        assert_eq!(idx.get("c"), Some("n00000002"));

        let dup = [synset("n00000001", &["a"], 0), synset("n00000001", &["b"], 1)];
        assert!(LemmaIndex::build(&dup).is_err());
    }

    #[test]
    fn caption_examples() {
        let s = [
            synset("n01443537", &["goldfish", "Carassius_auratus"], 1),
            synset("n04285008", &["sports_car", "sport_car"], 817),
            synset("n02012849", &["crane"], 134),
            synset("n03126707", &["crane"], 517),
        ];
        let idx = LemmaIndex::build(&s).unwrap();
        assert!(idx.is_excluded("crane"));
        assert_eq!(match_caption("my goldfish tank", &idx), CaptionMatch::Wnid("n01443537".into()));
        assert_eq!(match_caption("goldfish beside a sports car", &idx), CaptionMatch::Multi);
        assert_eq!(match_caption("crane at the harbor", &idx), CaptionMatch::None);
        assert_eq!(match_caption("sportscar show", &idx), CaptionMatch::None);
        assert_eq!(match_caption("Red SPORTS_CAR, parked", &idx), CaptionMatch::Wnid("n04285008".into()));
        assert_eq!(match_caption("", &idx), CaptionMatch::None);
    }

    #[test]
    fn prompts() {
        let mut s = synset("n01443537", &["goldfish"], 1);
        s.definition = "small golden fish".into();
        assert_eq!(synset_prompt(&s).unwrap(), "goldfish which is small golden fish");
        s.definition.clear();
        assert!(synset_prompt(&s).is_err());
    }

    #[test]
    fn synset_validation() {
        assert!(is_valid_wnid("n01440764"));
        assert!(!is_valid_wnid("n0144076"));
        assert!(!is_valid_wnid("x01440764"));
        let mut s = synset("n01440764", &["tench"], 0);
        s.class_index = 1000;
        assert!(s.validate().is_err());
        let a = synset("n01440764", &["tench"], 3);
        let b = synset("n01443537", &["goldfish"], 3);
        assert!(validate_synsets(&[a, b]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const WORDS: [&str; 8] = ["red", "fox", "sea", "lion", "car", "sports", "tank", "a"];

        fn vocab_synsets() -> Vec<Synset> {
            vec![
                synset("n00000001", &["red fox", "fox"], 0),
                synset("n00000002", &["sea lion"], 1),
                synset("n00000003", &["sports car", "car"], 2),
                synset("n00000004", &["lion", "tank"], 3),
                synset("n00000005", &["tank", "a red"], 4),
            ]
        }

        proptest! {
            #[test]
            fn normalize_idempotent(s in "\\PC{0,40}") {
                let once = normalize_lemma(&s);
                prop_assert_eq!(normalize_lemma(&once), once);
            }

            #[test]
            fn mapped_lemmas_have_one_owner(
                sets in proptest::collection::vec(proptest::collection::vec(0usize..6, 1..4), 1..8)
            ) {
                let synsets: Vec<Synset> = sets.iter().enumerate().map(|(i, ls)| Synset {
                    wnid: format!("n{:08}", i),
                    name: format!("s{i}"),
                    lemmas: ls.iter().map(|l| format!("L_{l}")).collect(),
                    definition: "d".into(),
                    class_index: i as u32,
                }).collect();
                let idx = LemmaIndex::build(&synsets).unwrap();
                for (lemma, wnid) in idx.mapped() {
                    let owners: Vec<&Synset> = synsets.iter()
                        .filter(|s| s.lemmas.iter().any(|l| normalize_lemma(l) == lemma))
                        .collect();
                    prop_assert_eq!(owners.len(), 1);
                    prop_assert_eq!(owners[0].wnid.as_str(), wnid);
                }
                for lemma in idx.excluded() {
                    prop_assert!(idx.get(lemma).is_none());
                }
            }

            #[test]
            fn agrees_with_brute_force(
                words in proptest::collection::vec((0usize..8, 0usize..4), 0..10)
            ) {
                let seps = [" ", "  ", ", ", "_"];
                let caption: String = words.iter()
                    .map(|(w, s)| format!("{}{}", WORDS[*w], seps[*s]))
                    .collect();
                let s = vocab_synsets();
                let idx = LemmaIndex::build(&s).unwrap();
                prop_assert_eq!(match_caption(&caption, &idx), brute_force(&caption, &s));
            }
        }
    }
}
