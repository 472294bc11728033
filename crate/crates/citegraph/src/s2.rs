//! Paper metadata client: a rate-limited, retrying HTTP client over an
//! academic graph API with a permanent on-disk cache and an offline mode
//! that serves cache hits only. The cache layout is one canonical JSON file
//! per paper id, written atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::model::{canonical_json, PaperId, PaperRecord};
use crate::subgraph::RecordLookup;
use crate::{Error, Result};

/// Fetch behavior knobs.
#[derive(Debug, Clone)]
pub struct FetchPolicy {
    /// Upper bound on request rate; requests are spaced at 1/rps seconds.
    pub requests_per_second: f64,
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    pub cache_dir: PathBuf,
    /// When set, cache misses are errors instead of network calls.
    pub offline_only: bool,
}

impl FetchPolicy {
    pub fn offline(cache_dir: impl Into<PathBuf>) -> Self {
        FetchPolicy {
            requests_per_second: 1.0,
            max_retries: 3,
            cache_dir: cache_dir.into(),
            offline_only: true,
        }
    }

    pub fn online(cache_dir: impl Into<PathBuf>) -> Self {
        FetchPolicy { offline_only: false, ..FetchPolicy::offline(cache_dir) }
    }
}

/// Minimal HTTP response surface the client needs.
#[derive(Debug, Clone)]
pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

/// HTTP GET abstraction; swapped out in tests.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<TransportResponse>;
}

/// Real transport over a blocking HTTP client.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new() -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<TransportResponse> {
        let response = self.client.get(url).send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| Error::Transport(e.to_string()))?;
        Ok(TransportResponse { status, body })
    }
}

/// Spaces calls so consecutive requests sit at least 1/rps apart. Over any
/// window of w seconds this admits at most ceil(w * rps) + 1 requests.
struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(requests_per_second: f64) -> Self {
        let rps = requests_per_second.max(0.001);
        RateLimiter {
            min_interval: Duration::from_secs_f64(1.0 / rps),
            last: Mutex::new(None),
        }
    }

    fn wait(&self) {
        let mut last = self.last.lock().expect("rate limiter lock");
        let now = Instant::now();
        if let Some(previous) = *last {
            let earliest = previous + self.min_interval;
            if earliest > now {
                std::thread::sleep(earliest - now);
            }
        }
        *last = Some(Instant::now());
    }
}

/// Wire shapes for the upstream graph API.
#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApiPaper {
    paper_id: Option<String>,
    title: Option<String>,
    year: Option<i32>,
    venue: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    citation_count: Option<u64>,
    #[serde(default)]
    authors: Vec<ApiAuthor>,
    #[serde(default)]
    references: Vec<ApiRef>,
}

#[derive(Deserialize)]
struct ApiAuthor {
    name: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApiRef {
    paper_id: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ApiReferenceEdge {
    cited_paper: ApiPaper,
    #[serde(default)]
    is_influential: bool,
    #[serde(default)]
    contexts: Vec<String>,
}

#[derive(Deserialize)]
struct ApiReferencePage {
    #[serde(default)]
    data: Vec<ApiReferenceEdge>,
}

impl ApiPaper {
    fn into_record(self) -> Result<PaperRecord> {
        let id = PaperId::new(self.paper_id.unwrap_or_default())?;
        let mut reference_ids = Vec::new();
        let mut seen = BTreeSet::new();
        for reference in self.references {
            let Some(raw) = reference.paper_id else { continue };
            let Ok(ref_id) = PaperId::new(raw) else { continue };
            if ref_id != id && seen.insert(ref_id.clone()) {
                reference_ids.push(ref_id);
            }
        }
        Ok(PaperRecord {
            id,
            title: self.title.unwrap_or_default(),
            year: self.year,
            venue: self.venue.unwrap_or_default(),
            abstract_text: self.abstract_text.unwrap_or_default(),
            authors: self.authors.into_iter().filter_map(|a| a.name).collect(),
            global_cite_count: self.citation_count.unwrap_or(0),
            is_influential: false,
            contexts: Vec::new(),
            reference_ids,
            idea: None,
        })
    }
}

const PAPER_FIELDS: &str = "paperId,title,abstract,year,venue,citationCount,authors,references.paperId";
const REFERENCE_FIELDS: &str =
    "paperId,title,abstract,year,venue,citationCount,authors,isInfluential,contexts";

/// Metadata client: cache first, then rate-limited HTTP with exponential
/// backoff on transient failures.
pub struct S2Client {
    base_url: String,
    policy: FetchPolicy,
    transport: Box<dyn Transport>,
    limiter: RateLimiter,
    write_lock: Mutex<()>,
}

impl S2Client {
    pub fn new(base_url: impl Into<String>, policy: FetchPolicy, transport: Box<dyn Transport>) -> Self {
        let limiter = RateLimiter::new(policy.requests_per_second);
        S2Client {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            policy,
            transport,
            limiter,
            write_lock: Mutex::new(()),
        }
    }

    /// Offline client over an existing cache directory; never touches the
    /// network, so the transport is a stub that always fails.
    pub fn offline(cache_dir: impl Into<PathBuf>) -> Self {
        struct NoTransport;
        impl Transport for NoTransport {
            fn get(&self, _url: &str) -> Result<TransportResponse> {
                Err(Error::Transport("offline client has no transport".into()))
            }
        }
        S2Client::new("http://offline.invalid", FetchPolicy::offline(cache_dir), Box::new(NoTransport))
    }

    /// Cache file for an id: the id itself when filesystem-safe, otherwise
    /// its sha256 hex.
    pub fn cache_path(&self, id: &PaperId) -> PathBuf {
        let raw = id.as_str();
        let safe = !raw.is_empty()
            && raw.len() <= 128
            && raw.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
        let stem = if safe {
            raw.to_string()
        } else {
            let mut hasher = Sha256::new();
            hasher.update(raw.as_bytes());
            hex::encode(hasher.finalize())
        };
        self.policy.cache_dir.join(format!("{stem}.json"))
    }

    /// Writes a record into the cache atomically (temp file plus rename).
    pub fn store_record(&self, record: &PaperRecord) -> Result<()> {
        record.validate()?;
        let path = self.cache_path(&record.id);
        let json = canonical_json(record)?;
        let _guard = self.write_lock.lock().expect("cache write lock");
        std::fs::create_dir_all(&self.policy.cache_dir)
            .map_err(|e| Error::io(&self.policy.cache_dir, e))?;
        let mut temp = tempfile::NamedTempFile::new_in(&self.policy.cache_dir)
            .map_err(|e| Error::io(&self.policy.cache_dir, e))?;
        std::io::Write::write_all(&mut temp, json.as_bytes()).map_err(|e| Error::io(&path, e))?;
        temp.persist(&path).map_err(|e| Error::io(&path, e.error))?;
        Ok(())
    }

    fn load_cached(&self, id: &PaperId) -> Result<Option<PaperRecord>> {
        let path = self.cache_path(id);
        match std::fs::read_to_string(&path) {
            Ok(text) => {
                let record: PaperRecord = serde_json::from_str(&text)?;
                Ok(Some(record))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// GET with rate limiting and exponential backoff. 404 is terminal;
    /// 429 and 5xx retry up to the policy limit.
    fn get_with_retries(&self, url: &str) -> Result<String> {
        let mut last_error = String::new();
        for attempt in 0..=self.policy.max_retries {
            if attempt > 0 {
                let backoff = Duration::from_millis(250u64.saturating_mul(1 << (attempt - 1)));
                std::thread::sleep(backoff);
            }
            self.limiter.wait();
            match self.transport.get(url) {
                Ok(response) if response.status == 200 => return Ok(response.body),
                Ok(response) if response.status == 404 => {
                    return Err(Error::NotFound(url.to_string()));
                }
                Ok(response) if response.status == 429 || response.status >= 500 => {
                    last_error = format!("status {}", response.status);
                }
                Ok(response) => {
                    return Err(Error::Transport(format!("status {} for {url}", response.status)));
                }
                Err(Error::Transport(message)) => last_error = message,
                Err(other) => return Err(other),
            }
        }
        Err(Error::RetriesExhausted { attempts: self.policy.max_retries + 1, last: last_error })
    }

    /// Fetches one record, serving from cache when possible. Cache entries
    /// never expire; delete the file to refresh.
    pub fn fetch_record(&self, id: &PaperId) -> Result<PaperRecord> {
        if let Some(record) = self.load_cached(id)? {
            return Ok(record);
        }
        if self.policy.offline_only {
            return Err(Error::CacheMiss {
                id: id.to_string(),
                dir: self.policy.cache_dir.clone(),
            });
        }
        let url = format!("{}/graph/v1/paper/{}?fields={}", self.base_url, id, PAPER_FIELDS);
        let body = self.get_with_retries(&url)?;
        let api: ApiPaper = serde_json::from_str(&body)?;
        let record = api.into_record()?;
        if record.id != *id {
            // Upstream may resolve aliases; store under the requested id too.
            let mut aliased = record.clone();
            aliased.id = id.clone();
            self.store_record(&aliased)?;
            return Ok(aliased);
        }
        self.store_record(&record)?;
        Ok(record)
    }

    /// Fetches the seed's reference list with citation-pair properties
    /// (influence flag, citation contexts) attached to each record. The
    /// records are cached as seen from this seed.
    pub fn fetch_seed_references(&self, seed_id: &PaperId) -> Result<Vec<PaperRecord>> {
        if self.policy.offline_only {
            return Err(Error::CacheMiss {
                id: format!("{seed_id}/references"),
                dir: self.policy.cache_dir.clone(),
            });
        }
        let url = format!(
            "{}/graph/v1/paper/{}/references?fields={}&limit=1000",
            self.base_url, seed_id, REFERENCE_FIELDS
        );
        let body = self.get_with_retries(&url)?;
        let page: ApiReferencePage = serde_json::from_str(&body)?;
        let mut records = Vec::new();
        for edge in page.data {
            let Ok(mut record) = edge.cited_paper.into_record() else { continue };
            record.is_influential = edge.is_influential;
            record.contexts = edge.contexts;
            self.store_record(&record)?;
            records.push(record);
        }
        Ok(records)
    }
}

impl RecordLookup for S2Client {
    fn lookup(&self, id: &PaperId) -> Option<PaperRecord> {
        self.fetch_record(id).ok()
    }
}

/// Which pool members a reference builds on: the intersection of its own
/// reference list with the seed's reference set. Never contains the
/// reference itself.
pub fn mine_predecessors(reference: &PaperRecord, seed_refs: &BTreeSet<PaperId>) -> BTreeSet<PaperId> {
    reference
        .reference_ids
        .iter()
        .filter(|id| **id != reference.id && seed_refs.contains(*id))
        .cloned()
        .collect()
}

/// Loads every cached record in a directory, keyed by id. Used by offline
/// pipelines that treat the cache as their record store.
pub fn load_cache_dir(dir: &Path) -> Result<BTreeMap<PaperId, PaperRecord>> {
    let mut records = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let record: PaperRecord = serde_json::from_str(&text)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        records.insert(record.id.clone(), record);
    }
    Ok(records)
}
