//! Fixtures shared by the integration targets: synthetic metadata shards,
//! a synset list, and a local image server.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use parquet::data_type::{ByteArray, ByteArrayType, DoubleType};
use parquet::file::properties::WriterProperties;
use parquet::file::writer::SerializedFileWriter;
use parquet::schema::parser::parse_message_type;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const BIN: &str = env!("CARGO_BIN_EXE_genbench");

pub fn genbench(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("GENBENCH_LOG")
        .output()
        .expect("spawn genbench")
}

/// Runs the binary and panics with its stderr on a nonzero exit.
pub fn genbench_ok(args: &[&str]) -> String {
    let out = genbench(args);
    assert!(
        out.status.success(),
        "genbench {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Five classes; "crane" is shared by two of them and so never maps.
pub const SYNSETS_JSON: &str = r#"[
  {"wnid": "n01440764", "name": "tench", "lemmas": ["tench", "Tinca_tinca"], "definition": "freshwater fish", "class_index": 0},
  {"wnid": "n01443537", "name": "goldfish", "lemmas": ["goldfish", "Carassius_auratus"], "definition": "small golden fish", "class_index": 1},
  {"wnid": "n02012849", "name": "crane", "lemmas": ["crane"], "definition": "wading bird", "class_index": 2},
  {"wnid": "n03126707", "name": "crane", "lemmas": ["crane", "construction crane"], "definition": "lifting machine", "class_index": 3},
  {"wnid": "n04285008", "name": "sports car", "lemmas": ["sports_car", "sport_car"], "definition": "fast car", "class_index": 4}
]"#;

pub fn write_synsets(dir: &Path) -> PathBuf {
    let p = dir.join("synsets.json");
    std::fs::write(&p, SYNSETS_JSON).unwrap();
    p
}

const SUBJECTS: [&str; 9] = [
    "tench",
    "goldfish",
    "Tinca tinca",
    "crane",
    "construction crane",
    "sports car",
    "sport-car",
    "sportscar",
    "river",
];
const NSFW: [&str; 4] = ["UNLIKELY", "UNLIKELY", "UNSURE", "NSFW"];
const ROW_GROUP: usize = 20_000;

/// Writes a `rows`-row parquet metadata shard. Urls point at `base_url`;
/// every 97th row gets a url the server answers with 404.
pub fn write_shard(path: &Path, rows: usize, base_url: &str, seed: u64) {
    let schema = Arc::new(
        parse_message_type(
            "message laion { required binary caption (UTF8); required binary url (UTF8); \
             required binary NSFW (UTF8); required double similarity; }",
        )
        .unwrap(),
    );
    let props = WriterProperties::builder().build();
    let mut w = SerializedFileWriter::new(File::create(path).unwrap(), schema, Arc::new(props)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = 0;
    while start < rows {
        let n = ROW_GROUP.min(rows - start);
        let mut caption = Vec::with_capacity(n);
        let mut url = Vec::with_capacity(n);
        let mut nsfw = Vec::with_capacity(n);
        let mut sim = Vec::with_capacity(n);
        for i in start..start + n {
            let a = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
            let text = if rng.random_bool(0.1) {
                let b = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
                format!("{a} next to a {b}, photo {i}")
            } else {
                format!("A photo of a {a} #{i}")
            };
            caption.push(ByteArray::from(text.as_str()));
            let kind = if i % 97 == 0 { "dead" } else { "img" };
            url.push(ByteArray::from(format!("{base_url}/{kind}/{i}.jpg").as_str()));
            nsfw.push(ByteArray::from(NSFW[rng.random_range(0..NSFW.len())]));
            sim.push(rng.random_range(0.6..1.0));
        }
        let mut rg = w.next_row_group().unwrap();
        for col in [caption, url, nsfw] {
            let mut c = rg.next_column().unwrap().unwrap();
            c.typed::<ByteArrayType>().write_batch(&col, None, None).unwrap();
            c.close().unwrap();
        }
        let mut c = rg.next_column().unwrap().unwrap();
        c.typed::<DoubleType>().write_batch(&sim, None, None).unwrap();
        c.close().unwrap();
        rg.close().unwrap();
        start += n;
    }
    w.close().unwrap();
}

/// Deterministic payload for a served path.
pub fn image_bytes(path: &str) -> Vec<u8> {
    let mut v = b"\x89PNG\r\n\x1a\n".to_vec();
    v.extend_from_slice(&Sha256::digest(path.as_bytes()));
    v
}

/// Local HTTP server. `/img/*` is served, `/dead/*` is 404, and `/flaky/*`
/// answers 503 on the first request for each path.
pub struct ImageServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    hits: Arc<Mutex<HashMap<String, usize>>>,
    pub base_url: String,
}

impl ImageServer {
    pub fn start() -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let port = server.server_addr().to_ip().unwrap().port();
        let hits: Arc<Mutex<HashMap<String, usize>>> = Arc::default();
        let (s, h) = (server.clone(), hits.clone());
        let thread = std::thread::spawn(move || {
            for req in s.incoming_requests() {
                let path = req.url().to_string();
                let n = {
                    let mut h = h.lock().unwrap();
                    let n = h.entry(path.clone()).or_insert(0);
                    *n += 1;
                    *n
                };
                let resp = if path.starts_with("/img/") || (path.starts_with("/flaky/") && n > 1) {
                    let ct = tiny_http::Header::from_bytes("Content-Type", "image/png").unwrap();
                    tiny_http::Response::from_data(image_bytes(&path)).with_header(ct)
                } else if path.starts_with("/flaky/") {
                    tiny_http::Response::from_data(Vec::new()).with_status_code(503)
                } else {
                    tiny_http::Response::from_data(Vec::new()).with_status_code(404)
                };
                let _ = req.respond(resp);
            }
        });
        Self {
            server,
            thread: Some(thread),
            hits,
            base_url: format!("http://127.0.0.1:{port}"),
        }
    }

    pub fn requests(&self) -> usize {
        self.hits.lock().unwrap().values().sum()
    }
}

impl Drop for ImageServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
