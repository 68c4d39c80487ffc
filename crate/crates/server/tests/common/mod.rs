#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use litknow_core::embed::{SgnsConfig, WalkConfig};
use litknow_core::extractor::SpeciesLexicon;
use litknow_core::lexicon::{load_lexicon, Lexicon, Stoplist};
use litknow_core::pipeline::{Clock, FakeClock, Pipeline, PipelineConfig};
use litknow_server::{router, AppState};
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn lexicon() -> Lexicon {
    let text = fs::read_to_string(fixtures().join("lexicon.jsonl")).unwrap();
    load_lexicon(text.as_bytes(), &Stoplist::default()).unwrap()
}

pub fn small_config() -> PipelineConfig {
    PipelineConfig {
        walk: WalkConfig {
            walk_length: 20,
            walks_per_node: 6,
            ..WalkConfig::default()
        },
        sgns: SgnsConfig {
            dimension: 16,
            window: 5,
            epochs: 2,
            ..SgnsConfig::default()
        },
        ..PipelineConfig::default()
    }
}

pub fn clock() -> Arc<dyn Clock> {
    Arc::new(FakeClock::new(Utc.with_ymd_and_hms(2024, 1, 2, 16, 30, 0).unwrap()))
}

pub fn open_pipeline(dir: &Path, config: PipelineConfig) -> Pipeline {
    Pipeline::open(dir, &lexicon(), SpeciesLexicon::bundled(), config, clock()).unwrap()
}

pub fn copy_updates(names: &[&str], to: &Path) {
    fs::create_dir_all(to).unwrap();
    for n in names {
        fs::copy(fixtures().join("updates").join(n), to.join(n)).unwrap();
    }
}

pub const UPDATE_FILES: [&str; 3] = ["pubmed24n0001.jsonl", "pubmed24n0002.jsonl", "pubmed24n0003.xml"];

/// Serves `state` on an ephemeral local port from a background runtime.
pub fn spawn_server(state: AppState) -> String {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, router(state)).await.unwrap();
        });
    });
    format!("http://{addr}")
}

fn into_parts(r: Result<ureq::Response, ureq::Error>) -> (u16, String) {
    match r {
        Ok(resp) => (resp.status(), resp.into_string().unwrap()),
        Err(ureq::Error::Status(code, resp)) => (code, resp.into_string().unwrap()),
        Err(e) => panic!("transport error: {e}"),
    }
}

pub fn get_raw(url: &str) -> (u16, String) {
    into_parts(ureq::get(url).call())
}

pub fn get(url: &str) -> (u16, Value) {
    let (code, body) = get_raw(url);
    (code, serde_json::from_str(&body).unwrap())
}

pub fn post(url: &str, body: &str) -> (u16, Value) {
    let (code, body) = into_parts(ureq::post(url).set("Content-Type", "application/json").send_string(body));
    (code, serde_json::from_str(&body).unwrap())
}
