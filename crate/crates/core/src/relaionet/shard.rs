//! Row-streaming readers for metadata shards (parquet or CSV).
//!
//! Only the caption, url, nsfw and similarity columns are read. Parquet
//! rows are decoded one at a time through a projected row iterator, so
//! memory is bounded by the row-group size rather than the file size.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use parquet::file::reader::{FileReader, SerializedFileReader};
use parquet::record::Field;
use parquet::schema::types::Type;

use crate::error::{Error, Result};

pub const CAPTION_COLUMNS: [&str; 3] = ["caption", "TEXT", "text"];
pub const URL_COLUMNS: [&str; 2] = ["url", "URL"];
pub const NSFW_COLUMNS: [&str; 2] = ["nsfw", "NSFW"];
pub const SIMILARITY_COLUMNS: [&str; 3] = ["similarity", "SIMILARITY", "clip_sim"];

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub caption: String,
    pub url: String,
    pub nsfw: bool,
    pub similarity: Option<f64>,
}

/// Why a row was skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Malformed {
    MissingCaption,
    MissingUrl,
    BadNsfw,
    BadSimilarity,
    Undecodable,
}

pub type RowResult = std::result::Result<RawRow, Malformed>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShardFormat {
    Parquet,
    Csv,
}

impl ShardFormat {
    pub fn detect(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("parquet") | Some("pq") => Ok(ShardFormat::Parquet),
            Some("csv") => Ok(ShardFormat::Csv),
            _ => Err(Error::InvalidInput(format!(
                "{}: unknown shard format (expected .parquet or .csv)",
                path.display()
            ))),
        }
    }
}

/// Which optional columns a shard carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShardColumns {
    pub has_nsfw: bool,
    pub has_similarity: bool,
}

/// NSFW flag: LAION-style tags ("NSFW", "UNLIKELY", "UNSURE") or booleans.
/// Only an explicit NSFW tag or true value counts as flagged.
fn parse_nsfw(s: &str) -> std::result::Result<bool, Malformed> {
    match s.trim().to_ascii_uppercase().as_str() {
        "NSFW" | "TRUE" | "1" => Ok(true),
        "UNLIKELY" | "UNSURE" | "SFW" | "FALSE" | "0" | "" => Ok(false),
        _ => Err(Malformed::BadNsfw),
    }
}

fn finish_row(
    caption: Option<String>,
    url: Option<String>,
    nsfw: bool,
    similarity: Option<f64>,
) -> RowResult {
    let caption = caption.filter(|c| !c.trim().is_empty()).ok_or(Malformed::MissingCaption)?;
    let url = url
        .map(|u| u.trim().to_string())
        .filter(|u| !u.is_empty())
        .ok_or(Malformed::MissingUrl)?;
    if let Some(s) = similarity {
        if !s.is_finite() {
            return Err(Malformed::BadSimilarity);
        }
    }
    Ok(RawRow {
        caption,
        url,
        nsfw,
        similarity,
    })
}

fn pick<'a>(names: &[&'a str], aliases: &[&str]) -> Option<&'a str> {
    aliases.iter().find_map(|a| names.iter().find(|n| *n == a).copied())
}

/// Streams every row of a shard into `f(row_id, row)`. Returns the columns
/// found. Errors only when the shard itself cannot be opened or lacks the
/// caption/url columns.
pub fn stream_shard(path: &Path, f: impl FnMut(u64, RowResult)) -> Result<ShardColumns> {
    match ShardFormat::detect(path)? {
        ShardFormat::Parquet => stream_parquet(path, f),
        ShardFormat::Csv => stream_csv(path, f),
    }
}

fn field_str(f: &Field) -> std::result::Result<Option<String>, Malformed> {
    match f {
        Field::Null => Ok(None),
        Field::Str(s) => Ok(Some(s.clone())),
        Field::Bytes(b) => std::str::from_utf8(b.data())
            .map(|s| Some(s.to_string()))
            .map_err(|_| Malformed::Undecodable),
        _ => Err(Malformed::Undecodable),
    }
}

fn field_nsfw(f: &Field) -> std::result::Result<bool, Malformed> {
    match f {
        Field::Null => Ok(false),
        Field::Bool(b) => Ok(*b),
        Field::Str(s) => parse_nsfw(s),
        Field::Bytes(b) => parse_nsfw(std::str::from_utf8(b.data()).map_err(|_| Malformed::BadNsfw)?),
        _ => Err(Malformed::BadNsfw),
    }
}

fn field_f64(f: &Field) -> std::result::Result<Option<f64>, Malformed> {
    match f {
        Field::Null => Ok(None),
        Field::Float(x) => Ok(Some(*x as f64)),
        Field::Double(x) => Ok(Some(*x)),
        _ => Err(Malformed::BadSimilarity),
    }
}

fn stream_parquet(path: &Path, mut f: impl FnMut(u64, RowResult)) -> Result<ShardColumns> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = SerializedFileReader::new(file).map_err(|e| Error::parse(path, e))?;
    let root = reader.metadata().file_metadata().schema_descr().root_schema_ptr();
    let names: Vec<&str> = root.get_fields().iter().map(|t| t.name()).collect();
    let missing = |what: &str| Error::parse(path, format!("no {what} column"));
    let caption = pick(&names, &CAPTION_COLUMNS).ok_or_else(|| missing("caption"))?;
    let url = pick(&names, &URL_COLUMNS).ok_or_else(|| missing("url"))?;
    let nsfw = pick(&names, &NSFW_COLUMNS);
    let sim = pick(&names, &SIMILARITY_COLUMNS);
    let wanted: Vec<&str> = [Some(caption), Some(url), nsfw, sim].into_iter().flatten().collect();
    let fields: Vec<Arc<Type>> = root
        .get_fields()
        .iter()
        .filter(|t| wanted.contains(&t.name()))
        .cloned()
        .collect();
    let projection = Type::group_type_builder(root.name())
        .with_fields(fields)
        .build()
        .map_err(|e| Error::parse(path, e))?;
    let iter = reader
        .get_row_iter(Some(projection))
        .map_err(|e| Error::parse(path, e))?;
    for (i, row) in iter.enumerate() {
        let row = row.map_err(|e| Error::parse(path, format!("row {i}: {e}")))?;
        let mut c = Ok(None);
        let mut u = Ok(None);
        let mut n = Ok(false);
        let mut s = Ok(None);
        for (name, field) in row.get_column_iter() {
            let name = name.as_str();
            if name == caption {
                c = field_str(field);
            } else if name == url {
                u = field_str(field);
            } else if Some(name) == nsfw {
                n = field_nsfw(field);
            } else if Some(name) == sim {
                s = field_f64(field);
            }
        }
        let r = (|| finish_row(c?, u?, n?, s?))();
        f(i as u64, r);
    }
    Ok(ShardColumns {
        has_nsfw: nsfw.is_some(),
        has_similarity: sim.is_some(),
    })
}

fn stream_csv(path: &Path, mut f: impl FnMut(u64, RowResult)) -> Result<ShardColumns> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let headers = rdr.byte_headers().map_err(|e| Error::parse(path, e))?.clone();
    let names: Vec<String> = headers.iter().map(|h| String::from_utf8_lossy(h).trim().to_string()).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let col = |aliases: &[&str]| pick(&refs, aliases).and_then(|n| refs.iter().position(|r| *r == n));
    let missing = |what: &str| Error::parse(path, format!("no {what} column"));
    let caption = col(&CAPTION_COLUMNS).ok_or_else(|| missing("caption"))?;
    let url = col(&URL_COLUMNS).ok_or_else(|| missing("url"))?;
    let nsfw = col(&NSFW_COLUMNS);
    let sim = col(&SIMILARITY_COLUMNS);

    let mut rec = csv::ByteRecord::new();
    let mut i = 0u64;
    loop {
        match rdr.read_byte_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let text = |j: usize| rec.get(j).map(|b| std::str::from_utf8(b).map_err(|_| Malformed::Undecodable));
                let r = (|| {
                    if rec.len() != headers.len() {
                        return Err(Malformed::Undecodable);
                    }
                    let c = text(caption).transpose()?.map(str::to_string);
                    let u = text(url).transpose()?.map(str::to_string);
                    let n = match nsfw.and_then(text) {
                        Some(v) => parse_nsfw(v?)?,
                        None => false,
                    };
                    let s = match sim.and_then(text) {
                        Some(v) => {
                            let v = v?.trim();
                            if v.is_empty() {
                                None
                            } else {
                                Some(v.parse::<f64>().map_err(|_| Malformed::BadSimilarity)?)
                            }
                        }
                        None => None,
                    };
                    finish_row(c, u, n, s)
                })();
                f(i, r);
            }
            Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(Error::parse(path, e)),
            Err(_) => f(i, Err(Malformed::Undecodable)),
        }
        i += 1;
    }
    Ok(ShardColumns {
        has_nsfw: nsfw.is_some(),
        has_similarity: sim.is_some(),
    })
}
