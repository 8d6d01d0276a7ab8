mod common;

use std::time::Duration;

use genbench::relaionet::download::{
    download_and_finalize, image_id, DownloadOptions, Exclusion, ReasonCode,
};
use genbench::relaionet::{CandidateRecord, ClassManifest, Synset};

use common::*;

fn record(wnid: &str, url: String, row: u64) -> CandidateRecord {
    CandidateRecord {
        caption: format!("caption {row}"),
        url,
        wnid: wnid.into(),
        clip_sim: 0.9,
        nsfw_flag: false,
        shard_id: 0,
        row_id: row,
    }
}

fn opts() -> DownloadOptions {
    DownloadOptions {
        workers: 4,
        attempts: 3,
        backoff: Duration::from_millis(5),
        per_host_interval: Duration::ZERO,
        timeout: Duration::from_secs(5),
        ..Default::default()
    }
}

const TENCH: &str = "n01440764";
const GOLDFISH: &str = "n01443537";
const CAR: &str = "n04285008";

fn classes(base: &str) -> Vec<ClassManifest> {
    let url = |p: &str| format!("{base}{p}");
    vec![
        ClassManifest {
            wnid: TENCH.into(),
            cap: 70,
            candidates: vec![
                record(TENCH, url("/img/t1.jpg"), 1),
                record(TENCH, url("/img/t2.jpg"), 2),
                record(TENCH, url("/flaky/t3.jpg"), 3),
                record(TENCH, url("/dead/t4.jpg"), 4),
                record(TENCH, url("/img/shared.jpg"), 5),
            ],
        },
        ClassManifest {
            wnid: GOLDFISH.into(),
            cap: 70,
            candidates: vec![
                record(GOLDFISH, url("/img/g1.jpg"), 6),
                record(GOLDFISH, url("/img/shared.jpg"), 7),
            ],
        },
        ClassManifest {
            wnid: CAR.into(),
            cap: 70,
            candidates: vec![record(CAR, url("/img/c1.jpg"), 8)],
        },
    ]
}

#[test]
fn retries_exclusions_and_idempotence() {
    let server = ImageServer::start();
    let dir = tempfile::tempdir().unwrap();
    let synsets: Vec<Synset> = serde_json::from_str(SYNSETS_JSON).unwrap();
    let classes = classes(&server.base_url);
    let nsfw_id = image_id(&format!("{}/img/t2.jpg", server.base_url));
    let exclusions = vec![
        Exclusion { image_id: nsfw_id.clone(), reason: ReasonCode::Nsfw },
        Exclusion { image_id: CAR.into(), reason: ReasonCode::TextDominant },
        Exclusion { image_id: "ffffffffffffffff".into(), reason: ReasonCode::Nsfw },
    ];

    let (m1, r1) = download_and_finalize(&classes, &synsets, &exclusions, dir.path(), "mini", &opts()).unwrap();
    assert_eq!(r1.cross_class_duplicates.len(), 1);
    assert_eq!(r1.dead.len(), 1);
    assert!(r1.dead[0].url.ends_with("/dead/t4.jpg"));
    assert_eq!(r1.excluded_images.get("NSFW content"), Some(&1));
    assert_eq!(r1.excluded_classes.get("Text-dominant imagery"), Some(&vec![CAR.to_string()]));
    assert_eq!(r1.unknown_exclusion_ids, vec!["ffffffffffffffff".to_string()]);

    let ids = |wnid: &str| -> Vec<String> {
        m1.classes
            .iter()
            .find(|c| c.wnid == wnid)
            .map(|c| c.images.iter().map(|i| i.url.rsplit('/').next().unwrap().to_string()).collect())
            .unwrap_or_default()
    };
    // t2 excluded, t4 dead, shared dropped; the flaky url succeeds on retry
    assert_eq!(ids(TENCH), ["t1.jpg", "t3.jpg"]);
    assert_eq!(ids(GOLDFISH), ["g1.jpg"]);
    assert!(ids(CAR).is_empty());
    assert_eq!(m1.total, 3);
    for c in &m1.classes {
        for img in &c.images {
            let bytes = std::fs::read(dir.path().join(&img.file)).unwrap();
            let path = img.url.trim_start_matches(&server.base_url);
            assert_eq!(bytes, image_bytes(path));
        }
    }
    assert!(dir.path().join("dataset.json").is_file());

    let before = server.requests();
    let (m2, r2) = download_and_finalize(&classes, &synsets, &exclusions, dir.path(), "mini", &opts()).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(r2.fetched, 0);
    assert_eq!(r2.cached, 3);
    // only the dead url is asked for again
    assert_eq!(server.requests() - before, 1);
}

#[test]
fn unreachable_host_marks_urls_dead() {
    let dir = tempfile::tempdir().unwrap();
    let synsets: Vec<Synset> = serde_json::from_str(SYNSETS_JSON).unwrap();
    let classes = vec![ClassManifest {
        wnid: TENCH.into(),
        cap: 70,
        candidates: vec![record(TENCH, "http://127.0.0.1:9/img/x.jpg".into(), 1)],
    }];
    let o = DownloadOptions { attempts: 2, ..opts() };
    let (m, r) = download_and_finalize(&classes, &synsets, &[], dir.path(), "mini", &o).unwrap();
    assert_eq!(m.total, 0);
    assert_eq!(r.dead.len(), 1);
    assert_eq!(r.dropped_classes, vec![TENCH.to_string()]);
}
