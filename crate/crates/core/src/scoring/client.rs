//! Blocking client for the remote sentiment service.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{ScoringBackend, ScoringError};

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into()
}

/// Maps a finished exchange to either the body or a typed error. 5xx is
/// treated as transient, any other non-2xx status as a rejection.
fn check(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<String, ScoringError> {
    let mut resp = result.map_err(|e| ScoringError::BackendUnavailable(e.to_string()))?;
    let status = resp.status().as_u16();
    let body = resp.body_mut().read_to_string().map_err(|e| ScoringError::BackendUnavailable(e.to_string()))?;
    match status {
        200..=299 => Ok(body),
        500..=599 => Err(ScoringError::BackendUnavailable(format!("HTTP {status}: {body}"))),
        _ => Err(ScoringError::BackendRejected(format!("HTTP {status}: {body}"))),
    }
}

fn decode<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ScoringError> {
    serde_json::from_str(body).map_err(|e| ScoringError::BackendRejected(format!("malformed response: {e}")))
}

#[derive(Deserialize)]
struct ScoreResponse {
    probs: Vec<Vec<f64>>,
}

/// Decodes a `/v1/score` body and checks it has one 3-element row per
/// sentence. Simplex checks happen when rows become `ClassProbs`.
pub fn parse_score_response(body: &str, expected_rows: usize) -> Result<Vec<Vec<f64>>, ScoringError> {
    let resp: ScoreResponse = decode(body)?;
    if resp.probs.len() != expected_rows {
        return Err(ScoringError::BackendRejected(format!(
            "{} rows returned for {expected_rows} sentences",
            resp.probs.len()
        )));
    }
    if let Some(row) = resp.probs.iter().find(|r| r.len() != 3) {
        return Err(ScoringError::BackendRejected(format!("row of length {} in score response", row.len())));
    }
    Ok(resp.probs)
}

/// [`ScoringBackend`] over `POST /v1/score`.
#[derive(Debug, Clone)]
pub struct ServiceBackend {
    base_url: String,
    model_version: String,
    max_tokens: usize,
    retries: u32,
    retry_delay: Duration,
    agent: Agent,
}

impl ServiceBackend {
    pub const NAME: &'static str = "service";

    pub fn new(base_url: &str, model_version: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_version: model_version.to_string(),
            max_tokens: 512,
            retries: 2,
            retry_delay: Duration::from_millis(200),
            agent: agent(Duration::from_secs(120)),
        }
    }

    pub fn with_retries(mut self, retries: u32, delay: Duration) -> Self {
        self.retries = retries;
        self.retry_delay = delay;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = agent(timeout);
        self
    }

    /// Same endpoint and settings, different model.
    pub fn with_model_version(&self, model_version: &str) -> Self {
        Self { model_version: model_version.to_string(), ..self.clone() }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn with_max_sentence_tokens(mut self, n: usize) -> Self {
        self.max_tokens = n;
        self
    }

    fn score_once(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>, ScoringError> {
        let body = serde_json::json!({ "model_version": self.model_version, "sentences": sentences });
        let text = check(self.agent.post(format!("{}/v1/score", self.base_url)).send_json(&body))?;
        parse_score_response(&text, sentences.len())
    }
}

impl ScoringBackend for ServiceBackend {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn model_version(&self) -> &str {
        &self.model_version
    }

    fn max_sentence_tokens(&self) -> usize {
        self.max_tokens
    }

    fn score_batch(&self, sentences: &[String]) -> Result<Vec<Vec<f64>>, ScoringError> {
        let mut attempt = 0;
        loop {
            match self.score_once(sentences) {
                Err(e) if e.is_retriable() && attempt < self.retries => {
                    attempt += 1;
                    log::warn!("score request failed ({e}); retry {attempt}/{}", self.retries);
                    std::thread::sleep(self.retry_delay * attempt);
                }
                other => return other,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub base_model_version: String,
    /// JSON-lines training set, one `{"text", "label"}` object per line.
    pub dataset: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl TrainRequest {
    pub fn new(base_model_version: &str, dataset: String) -> Self {
        Self { base_model_version: base_model_version.to_string(), dataset, epochs: 2, batch_size: 32, learning_rate: 5e-5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Pending,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainJob {
    pub job_id: String,
    pub status: JobStatus,
    #[serde(default)]
    pub model_version: Option<String>,
    #[serde(default)]
    pub loss_per_step: Vec<f64>,
    #[serde(default)]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub model_version: String,
    pub architecture: String,
    pub max_sentence_tokens: usize,
}

#[derive(Deserialize)]
struct JobCreated {
    job_id: String,
}

#[derive(Deserialize)]
struct ModelList {
    models: Vec<ModelCard>,
}

/// Training and model-registry calls.
#[derive(Debug, Clone)]
pub struct ServiceClient {
    base_url: String,
    agent: Agent,
}

impl ServiceClient {
    pub fn new(base_url: &str) -> Self {
        Self { base_url: base_url.trim_end_matches('/').to_string(), agent: agent(Duration::from_secs(60)) }
    }

    /// Submits a fine-tuning job and returns its id.
    pub fn submit_training(&self, req: &TrainRequest) -> Result<String, ScoringError> {
        let body = check(self.agent.post(format!("{}/v1/train", self.base_url)).send_json(req))?;
        Ok(decode::<JobCreated>(&body)?.job_id)
    }

    pub fn job(&self, job_id: &str) -> Result<TrainJob, ScoringError> {
        decode(&check(self.agent.get(format!("{}/v1/train/{job_id}", self.base_url)).call())?)
    }

    pub fn models(&self) -> Result<Vec<ModelCard>, ScoringError> {
        Ok(decode::<ModelList>(&check(self.agent.get(format!("{}/v1/models", self.base_url)).call())?)?.models)
    }

    /// Polls until the job is terminal. A failed job becomes a `Training` error.
    pub fn wait_for_job(&self, job_id: &str, poll: Duration, timeout: Duration) -> Result<TrainJob, ScoringError> {
        let start = Instant::now();
        loop {
            let job = self.job(job_id)?;
            match job.status {
                JobStatus::Done => return Ok(job),
                JobStatus::Failed => {
                    return Err(ScoringError::Training(job.reason.unwrap_or_else(|| format!("job {job_id} failed"))))
                }
                _ if start.elapsed() >= timeout => {
                    return Err(ScoringError::BackendUnavailable(format!("job {job_id} still {:?}", job.status)))
                }
                _ => std::thread::sleep(poll),
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod mock {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;

    /// Serves the scripted `(status, body)` replies in order, one per
    /// connection, and records `(request line, body)` of each request.
    pub(crate) struct MockServer {
        pub url: String,
        pub requests: Arc<Mutex<Vec<(String, String)>>>,
        handle: Option<JoinHandle<()>>,
    }

    impl MockServer {
        pub(crate) fn start(replies: Vec<(u16, String)>) -> Self {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            let url = format!("http://{}", listener.local_addr().unwrap());
            let requests = Arc::new(Mutex::new(Vec::new()));
            let log = Arc::clone(&requests);
            let handle = std::thread::spawn(move || {
                for (status, body) in replies {
                    let (stream, _) = listener.accept().unwrap();
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    reader.read_line(&mut request_line).unwrap();
                    let mut length = 0;
                    loop {
                        let mut header = String::new();
                        reader.read_line(&mut header).unwrap();
                        if header.trim().is_empty() {
                            break;
                        }
                        if let Some((k, v)) = header.split_once(':') {
                            if k.eq_ignore_ascii_case("content-length") {
                                length = v.trim().parse().unwrap();
                            }
                        }
                    }
                    let mut buf = vec![0; length];
                    reader.read_exact(&mut buf).unwrap();
                    log.lock().unwrap().push((request_line.trim().to_string(), String::from_utf8(buf).unwrap()));
                    let mut stream = stream;
                    write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    )
                    .unwrap();
                }
            });
            Self { url, requests, handle: Some(handle) }
        }

        pub(crate) fn finish(mut self) -> Vec<(String, String)> {
            self.handle.take().unwrap().join().unwrap();
            self.requests.lock().unwrap().clone()
        }
    }
}
