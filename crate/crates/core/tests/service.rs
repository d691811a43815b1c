//! The pipeline in service mode against an in-process HTTP service.

mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use distress_core::lexicon::Lexicon;
use distress_core::runner::{run, Stage};
use distress_core::scoring::{ScoringBackend, ServiceClient, StubBackend};
use serde_json::{json, Value};

/// Scores with lexicon stubs keyed by model version and finishes every
/// training job at once. Records `(method, path, body)` per request.
struct MockService {
    url: String,
    log: Arc<Mutex<Vec<(String, String, String)>>>,
}

struct Models {
    base: StubBackend,
    w2v: StubBackend,
}

fn read_request(stream: &TcpStream) -> Option<(String, String, String)> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let (method, path) = (parts.next()?.to_string(), parts.next()?.to_string());
    let mut length = 0;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).ok()?;
        if header.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).ok()?;
    Some((method, path, String::from_utf8(body).ok()?))
}

fn route(models: &Models, method: &str, path: &str, body: &str) -> (u16, Value) {
    match (method, path) {
        ("POST", "/v1/score") => {
            let req: Value = serde_json::from_str(body).unwrap();
            let sentences: Vec<String> = serde_json::from_value(req["sentences"].clone()).unwrap();
            let backend = match req["model_version"].as_str().unwrap() {
                "fin-base" | "fin-base-dapt" => &models.base,
                "w2v-base" => &models.w2v,
                other => return (404, json!({ "error": format!("unknown model {other}") })),
            };
            (200, json!({ "probs": backend.score_batch(&sentences).unwrap() }))
        }
        ("POST", "/v1/train") => (202, json!({ "job_id": "job-1" })),
        ("GET", "/v1/train/job-1") => (
            200,
            json!({ "job_id": "job-1", "status": "done", "model_version": "fin-base-dapt", "loss_per_step": [0.9, 0.4] }),
        ),
        ("GET", "/v1/models") => (
            200,
            json!({ "models": [
                { "model_version": "fin-base", "architecture": "bert-base", "max_sentence_tokens": 512 },
                { "model_version": "w2v-base", "architecture": "word2vec-lstm", "max_sentence_tokens": 50 },
            ] }),
        ),
        _ => (404, json!({ "error": "not found" })),
    }
}

impl MockService {
    fn start(lexicon: Lexicon) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let models = Arc::new(Models {
            base: StubBackend::new(lexicon.clone(), 0.5).unwrap(),
            w2v: StubBackend::new(lexicon, 1.0).unwrap(),
        });
        let log = Arc::new(Mutex::new(Vec::new()));
        let shared = Arc::clone(&log);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let (models, log) = (Arc::clone(&models), Arc::clone(&shared));
                std::thread::spawn(move || {
                    let Some((method, path, body)) = read_request(&stream) else { return };
                    let (status, reply) = route(&models, &method, &path, &body);
                    log.lock().unwrap().push((method, path, body));
                    let reply = reply.to_string();
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                        reply.len()
                    );
                });
            }
        });
        Self { url, log }
    }

    fn requests(&self) -> Vec<(String, String, String)> {
        self.log.lock().unwrap().clone()
    }
}

fn backend_table(url: &str) -> String {
    format!(
        "[backend]\nkind = \"service\"\nurl = \"{url}\"\nmodel_version = \"fin-base\"\n\
         w2v_model_version = \"w2v-base\"\nretries = 1\npoll_secs = 0\ntrain_timeout_secs = 30\n"
    )
}

#[test]
fn service_mode_runs_every_slot_and_one_training_job() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::generate(dir.path());
    let lexicon = Lexicon::load(data.join("lexicon/positive.txt"), data.join("lexicon/negative.txt")).unwrap();
    let service = MockService::start(lexicon);
    let cfg = common::config(
        dir.path(),
        &backend_table(&service.url),
        r#"["FIN", "FIN+DICT", "FIN+W2V", "FIN+BERT", "FIN+DAPT"]"#,
    );

    let outcome = run(cfg.clone()).unwrap();
    assert_eq!(outcome.failed_cells(), 0, "{:?}", outcome.manifest.cells);
    let versions = &outcome.manifest.model_versions;
    assert_eq!(versions["BERT"], "fin-base");
    assert_eq!(versions["W2V"], "w2v-base");
    assert_eq!(versions["DAPT"], "fin-base-dapt");

    let requests = service.requests();
    let trains: Vec<_> = requests.iter().filter(|r| r.0 == "POST" && r.1 == "/v1/train").collect();
    assert_eq!(trains.len(), 1);
    let train: Value = serde_json::from_str(&trains[0].2).unwrap();
    assert_eq!(train["base_model_version"], "fin-base");
    let lines: Vec<Value> =
        train["dataset"].as_str().unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let round = &outcome.manifest.adaptation.as_ref().unwrap().rounds[0];
    assert_eq!(lines.len(), round.n_reliable);
    assert!(lines.iter().all(|l| l["text"].is_string() && l["label"].as_u64().is_some_and(|c| c < 3)));
    assert!(requests.iter().any(|r| r.1 == "/v1/train/job-1"));

    let score_versions: Vec<String> = requests
        .iter()
        .filter(|r| r.1 == "/v1/score")
        .map(|r| serde_json::from_str::<Value>(&r.2).unwrap()["model_version"].as_str().unwrap().to_string())
        .collect();
    for v in ["fin-base", "w2v-base", "fin-base-dapt"] {
        assert!(score_versions.iter().any(|s| s == v), "no score calls for {v}");
    }

    // The adapted model and every score are cached: a rerun sends nothing
    // to the service.
    let before = service.requests().len();
    let second = run(cfg).unwrap();
    assert_eq!(service.requests().len(), before);
    let adapt = second.manifest.stages.iter().find(|t| t.stage == Stage::Adapt).unwrap();
    assert_eq!(adapt.cache_misses, 0);
}

#[test]
fn unknown_model_version_fails_only_that_slot() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::generate(dir.path());
    let lexicon = Lexicon::load(data.join("lexicon/positive.txt"), data.join("lexicon/negative.txt")).unwrap();
    let service = MockService::start(lexicon);
    let backend = backend_table(&service.url).replace("w2v-base", "w2v-missing");
    let cfg = common::config(dir.path(), &backend, r#"["FIN", "FIN+W2V", "FIN+BERT"]"#);

    let outcome = run(cfg).unwrap();
    for c in &outcome.manifest.cells {
        assert_eq!(c.ok, c.variable_set.to_string() != "FIN+W2V", "{c:?}");
    }
    let score = outcome.manifest.stages.iter().find(|t| t.stage == Stage::Score).unwrap();
    let err = score.error.as_deref().unwrap();
    assert!(err.contains("w2v-missing"), "{err}");
}

#[test]
fn model_registry_lists_both_models() {
    let service = MockService::start(Lexicon::sample());
    let models = ServiceClient::new(&service.url).models().unwrap();
    assert_eq!(models.len(), 2);
    assert_eq!(models[1].max_sentence_tokens, 50);
}
