//! LLM gateway: one chat-completion interface with an HTTP backend for real
//! runs and a deterministic scripted stub for offline work. On top of raw
//! completions it implements the three domain calls: strict five-field idea
//! extraction with one repair retry, pairwise judging with abstention on
//! malformed verdicts, and multi-sample candidate generation.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SamplingConfig;
use crate::model::FiveFieldIdea;
use crate::{Error, Result};

/// One chat completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: usize,
    pub num_samples: usize,
}

impl ChatRequest {
    /// Single-sample request with conservative decoding.
    pub fn deterministic(system_prompt: impl Into<String>, user_prompt: impl Into<String>) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            user_prompt: user_prompt.into(),
            temperature: 0.0,
            top_p: 1.0,
            max_output_tokens: 2048,
            num_samples: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::BadRequest("num_samples must be >= 1".into()));
        }
        if !(0.0 < self.top_p && self.top_p <= 1.0) {
            return Err(Error::BadRequest(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.temperature < 0.0 {
            return Err(Error::BadRequest(format!("temperature {} negative", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::BadRequest("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// A completed request: one reply per requested sample, plus how many
/// transient failures were retried along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub replies: Vec<String>,
    pub retries: u32,
}

/// Chat backend abstraction: one attempt, no retry logic.
pub trait ChatBackend: Send + Sync {
    fn complete_once(&self, request: &ChatRequest) -> Result<Vec<String>>;
    fn name(&self) -> String;
}

// ---------------------------------------------------------------------------
// HTTP backend

/// OpenAI-compatible chat completions backend.
pub struct HttpChatBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpChatBackend {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key,
            client,
        })
    }
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

impl ChatBackend for HttpChatBackend {
    fn complete_once(&self, request: &ChatRequest) -> Result<Vec<String>> {
        let url = format!("{}/chat/completions", self.base_url);
        let payload = serde_json::json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_output_tokens,
            "n": request.num_samples,
        });
        let mut builder = self.client.post(&url).json(&payload);
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let response = builder.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response.text().map_err(|e| Error::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(Error::Transport(format!("status {status}")));
        }
        if status != 200 {
            return Err(Error::MalformedReply(format!("status {status}: {body}")));
        }
        let parsed: ChatCompletionResponse =
            serde_json::from_str(&body).map_err(|e| Error::MalformedReply(e.to_string()))?;
        if parsed.choices.len() != request.num_samples {
            return Err(Error::Transport(format!(
                "expected {} samples, got {}",
                request.num_samples,
                parsed.choices.len()
            )));
        }
        Ok(parsed.choices.into_iter().map(|c| c.message.content).collect())
    }

    fn name(&self) -> String {
        format!("http:{}", self.model)
    }
}

// ---------------------------------------------------------------------------
// Scripted stub backend

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StubRule {
    /// All substrings must occur in the concatenated prompts.
    contains: Vec<String>,
    replies: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StubScript {
    #[serde(default)]
    rules: Vec<StubRule>,
    #[serde(default)]
    default: Vec<String>,
}

/// Deterministic offline backend replaying scripted replies.
///
/// The first rule whose substrings all occur in the request wins. Each rule
/// keeps a cursor: successive calls walk its reply list and the last reply
/// repeats once the list is exhausted, so a two-entry rule can script
/// "malformed once, then fixed" behavior.
pub struct StubBackend {
    script: StubScript,
    label: String,
    cursors: Mutex<BTreeMap<usize, usize>>,
}

/// Cursor slot for the default reply list.
const DEFAULT_SLOT: usize = usize::MAX;

impl StubBackend {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script: StubScript = serde_json::from_str(&text)
            .map_err(|e| Error::BadRequest(format!("stub script {}: {e}", path.display())))?;
        Ok(StubBackend {
            script,
            label: format!("stub:{}", path.display()),
            cursors: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn from_script_json(json: &str) -> Result<Self> {
        let script: StubScript =
            serde_json::from_str(json).map_err(|e| Error::BadRequest(format!("stub script: {e}")))?;
        Ok(StubBackend { script, label: "stub:inline".into(), cursors: Mutex::new(BTreeMap::new()) })
    }

    fn take(&self, slot: usize, replies: &[String], count: usize) -> Result<Vec<String>> {
        if replies.is_empty() {
            return Err(Error::MalformedReply("stub rule has no replies".into()));
        }
        let mut cursors = self.cursors.lock().expect("stub cursor lock");
        let cursor = cursors.entry(slot).or_insert(0);
        let mut out = Vec::with_capacity(count);
        for offset in 0..count {
            let index = (*cursor + offset).min(replies.len() - 1);
            out.push(replies[index].clone());
        }
        *cursor = (*cursor + count).min(replies.len());
        Ok(out)
    }
}

impl ChatBackend for StubBackend {
    fn complete_once(&self, request: &ChatRequest) -> Result<Vec<String>> {
        let haystack = format!("{}\n{}", request.system_prompt, request.user_prompt);
        for (index, rule) in self.script.rules.iter().enumerate() {
            if rule.contains.iter().all(|needle| haystack.contains(needle)) {
                return self.take(index, &rule.replies, request.num_samples);
            }
        }
        self.take(DEFAULT_SLOT, &self.script.default, request.num_samples)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Content-addressed judge stub: the verdict for each dimension is derived
/// from the sha256 of the user prompt, so identical prompts always judge
/// identically and swapped presentations get independent verdicts.
pub struct HashedJudgeBackend {
    dimensions: Vec<String>,
}

impl HashedJudgeBackend {
    pub fn new(dimensions: Vec<String>) -> Self {
        HashedJudgeBackend { dimensions }
    }
}

impl ChatBackend for HashedJudgeBackend {
    fn complete_once(&self, request: &ChatRequest) -> Result<Vec<String>> {
        let mut hasher = Sha256::new();
        hasher.update(request.user_prompt.as_bytes());
        let digest = hasher.finalize();
        let mut verdict = serde_json::Map::new();
        for (index, dimension) in self.dimensions.iter().enumerate() {
            let value = match digest[index % digest.len()] % 3 {
                0 => "A",
                1 => "B",
                _ => "tie",
            };
            verdict.insert(dimension.clone(), serde_json::Value::String(value.to_string()));
        }
        let reply = serde_json::Value::Object(verdict).to_string();
        Ok(vec![reply; request.num_samples])
    }

    fn name(&self) -> String {
        "stub-hash".into()
    }
}

// ---------------------------------------------------------------------------
// Reply parsing

/// Extracts a five-field idea from a model reply. Accepts raw JSON or JSON
/// wrapped in code fences or prose by slicing from the first `{` to the
/// last `}`.
pub fn parse_idea_reply(reply: &str) -> Result<FiveFieldIdea> {
    let trimmed = reply.trim();
    if let Ok(idea) = FiveFieldIdea::parse_json(trimmed) {
        return Ok(idea);
    }
    let start = trimmed
        .find('{')
        .ok_or_else(|| Error::MalformedReply("no JSON object in reply".into()))?;
    let end = trimmed
        .rfind('}')
        .ok_or_else(|| Error::MalformedReply("unterminated JSON object in reply".into()))?;
    if end <= start {
        return Err(Error::MalformedReply("no JSON object in reply".into()));
    }
    FiveFieldIdea::parse_json(&trimmed[start..=end])
        .map_err(|e| Error::MalformedReply(e.to_string()))
}

// ---------------------------------------------------------------------------
// Judge prompt

/// Versioned judge prompt. `{seed_context}`, `{idea_a}`, `{idea_b}`, and
/// `{dimensions}` are substituted at call time; the hash of the template
/// travels with every tournament result.
pub const JUDGE_TEMPLATE_VERSION: &str = "pairwise-judge-v1";

pub const JUDGE_TEMPLATE: &str = "You are comparing two candidate research ideas \
written for the same seed paper.

SEED CONTEXT:
{seed_context}

IDEA A:
{idea_a}

IDEA B:
{idea_b}

For each dimension, decide whether idea A or idea B is stronger, or call a tie.
Dimensions: {dimensions}

Reply with strict JSON only: one key per dimension, each value exactly \
\"A\", \"B\", or \"tie\". No commentary.";

/// Hex sha256 of the versioned judge template.
pub fn judge_template_hash() -> String {
    let mut hasher = Sha256::new();
    hasher.update(JUDGE_TEMPLATE_VERSION.as_bytes());
    hasher.update(b"\n");
    hasher.update(JUDGE_TEMPLATE.as_bytes());
    hex::encode(hasher.finalize())
}

fn render_judge_prompt(seed_context: &str, idea_a: &str, idea_b: &str, dimensions: &[String]) -> String {
    JUDGE_TEMPLATE
        .replace("{seed_context}", seed_context)
        .replace("{idea_a}", idea_a)
        .replace("{idea_b}", idea_b)
        .replace("{dimensions}", &dimensions.join(", "))
}

/// Per-dimension outcome from the first-listed idea's perspective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOutcome {
    FirstWins,
    Tie,
    SecondWins,
}

/// One judged presentation: outcomes aligned with the dimension list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub outcomes: Vec<PairOutcome>,
    /// True when the judge failed and the verdict is synthetic all-ties.
    pub abstained: bool,
}

fn parse_verdict(reply: &str, dimensions: &[String]) -> Result<Vec<PairOutcome>> {
    let trimmed = reply.trim();
    let start = trimmed.find('{').ok_or_else(|| Error::MalformedReply("no verdict object".into()))?;
    let end = trimmed.rfind('}').ok_or_else(|| Error::MalformedReply("no verdict object".into()))?;
    if end <= start {
        return Err(Error::MalformedReply("no verdict object".into()));
    }
    let value: serde_json::Value = serde_json::from_str(&trimmed[start..=end])
        .map_err(|e| Error::MalformedReply(e.to_string()))?;
    let object = value.as_object().ok_or_else(|| Error::MalformedReply("verdict is not an object".into()))?;
    let mut outcomes = Vec::with_capacity(dimensions.len());
    for dimension in dimensions {
        let raw = object
            .get(dimension)
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::MalformedReply(format!("missing dimension {dimension}")))?;
        let outcome = match raw.to_ascii_lowercase().as_str() {
            "a" => PairOutcome::FirstWins,
            "b" => PairOutcome::SecondWins,
            "tie" => PairOutcome::Tie,
            other => {
                return Err(Error::MalformedReply(format!(
                    "dimension {dimension} has invalid value {other}"
                )))
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------------------
// Gateway

const EXTRACTION_SYSTEM_PROMPT: &str = "You read research papers and distill each \
into a structured idea with exactly five fields. Reply with strict JSON only, \
using exactly these keys: \"Problem\", \"Existing Methods\", \"Motivation\", \
\"Proposed Method\", \"Experiment Plan\". Every value is a non-empty string. \
No markdown, no commentary.";

const GENERATION_SYSTEM_PROMPT: &str = "You propose the research idea of a paper \
given material about it. Reply with strict JSON only, using exactly these keys: \
\"Problem\", \"Existing Methods\", \"Motivation\", \"Proposed Method\", \
\"Experiment Plan\". Every value is a non-empty string. No markdown, no commentary.";

/// A generation batch: parsed candidates plus raw replies that failed to
/// parse, kept for the record rather than silently dropped.
#[derive(Debug, Clone)]
pub struct CandidateBatch {
    pub ideas: Vec<FiveFieldIdea>,
    pub failures: Vec<String>,
    pub sampling: SamplingConfig,
}

/// Retry-aware front end over a chat backend.
pub struct Gateway {
    backend: Box<dyn ChatBackend>,
    max_retries: u32,
    /// Sleep base between retries; zeroed in tests.
    retry_base: Duration,
}

impl Gateway {
    pub fn new(backend: Box<dyn ChatBackend>) -> Self {
        Gateway { backend, max_retries: 2, retry_base: Duration::from_millis(200) }
    }

    pub fn with_retries(mut self, max_retries: u32, retry_base: Duration) -> Self {
        self.max_retries = max_retries;
        self.retry_base = retry_base;
        self
    }

    pub fn backend_name(&self) -> String {
        self.backend.name()
    }

    /// Completes a request, retrying transient backend failures with
    /// exponential backoff. The retry count is reported, not hidden.
    pub fn complete(&self, request: &ChatRequest) -> Result<Completion> {
        request.validate()?;
        let mut retries = 0;
        loop {
            match self.backend.complete_once(request) {
                Ok(replies) => {
                    if replies.len() != request.num_samples {
                        return Err(Error::MalformedReply(format!(
                            "backend returned {} replies for {} samples",
                            replies.len(),
                            request.num_samples
                        )));
                    }
                    return Ok(Completion { replies, retries });
                }
                Err(e) if e.is_transient() && retries < self.max_retries => {
                    let backoff = self.retry_base.saturating_mul(1 << retries);
                    std::thread::sleep(backoff);
                    retries += 1;
                }
                Err(e) if e.is_transient() => {
                    return Err(Error::RetriesExhausted {
                        attempts: retries + 1,
                        last: e.to_string(),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Extracts a five-field idea from paper text. A malformed first reply
    /// triggers exactly one repair round quoting the bad reply; a second
    /// failure is a typed extraction error.
    pub fn extract_idea(&self, paper_text: &str) -> Result<FiveFieldIdea> {
        let request = ChatRequest::deterministic(EXTRACTION_SYSTEM_PROMPT, paper_text);
        let completion = self.complete(&request)?;
        let first_reply = &completion.replies[0];
        match parse_idea_reply(first_reply) {
            Ok(idea) => Ok(idea),
            Err(first_error) => {
                let repair_prompt = format!(
                    "Your previous reply was not a valid five-field JSON object \
                     ({first_error}). Reply again with strict JSON only.\n\n\
                     PREVIOUS REPLY:\n{first_reply}\n\nORIGINAL INPUT:\n{paper_text}"
                );
                let repair = ChatRequest::deterministic(EXTRACTION_SYSTEM_PROMPT, repair_prompt);
                let completion = self.complete(&repair)?;
                parse_idea_reply(&completion.replies[0])
                    .map_err(|e| Error::Extraction(format!("repair retry also failed: {e}")))
            }
        }
    }

    /// Judges one ordered presentation of two ideas. A malformed verdict is
    /// retried once; any further failure (parse or transport) abstains with
    /// flagged all-ties rather than aborting the run.
    pub fn judge_pair(
        &self,
        seed_context: &str,
        idea_first: &FiveFieldIdea,
        idea_second: &FiveFieldIdea,
        dimensions: &[String],
    ) -> Result<JudgeVerdict> {
        if dimensions.is_empty() {
            return Err(Error::BadTournament("no judge dimensions configured".into()));
        }
        let idea_a = serde_json::to_string_pretty(idea_first)?;
        let idea_b = serde_json::to_string_pretty(idea_second)?;
        let user_prompt = render_judge_prompt(seed_context, &idea_a, &idea_b, dimensions);
        let request = ChatRequest::deterministic(
            "You are a careful, impartial reviewer of research ideas.",
            user_prompt,
        );

        for _attempt in 0..2 {
            match self.complete(&request) {
                Ok(completion) => match parse_verdict(&completion.replies[0], dimensions) {
                    Ok(outcomes) => return Ok(JudgeVerdict { outcomes, abstained: false }),
                    Err(_) => continue,
                },
                Err(_) => continue,
            }
        }
        Ok(JudgeVerdict { outcomes: vec![PairOutcome::Tie; dimensions.len()], abstained: true })
    }

    /// Samples candidate ideas for one prompt with the configured sampling
    /// parameters. Unparseable replies are returned as recorded failures.
    pub fn generate_candidates(&self, prompt: &str, sampling: &SamplingConfig) -> Result<CandidateBatch> {
        let request = ChatRequest {
            system_prompt: GENERATION_SYSTEM_PROMPT.to_string(),
            user_prompt: prompt.to_string(),
            temperature: sampling.temperature,
            top_p: sampling.top_p,
            max_output_tokens: 2048,
            num_samples: sampling.num_candidates,
        };
        let completion = self.complete(&request)?;
        let mut ideas = Vec::new();
        let mut failures = Vec::new();
        for reply in completion.replies {
            match parse_idea_reply(&reply) {
                Ok(idea) => ideas.push(idea),
                Err(_) => failures.push(reply),
            }
        }
        Ok(CandidateBatch { ideas, failures, sampling: sampling.clone() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn idea(tag: &str) -> FiveFieldIdea {
        FiveFieldIdea {
            problem: format!("problem {tag}"),
            existing_methods: format!("existing {tag}"),
            motivation: format!("motivation {tag}"),
            proposed_method: format!("method {tag}"),
            experiment_plan: format!("plan {tag}"),
        }
    }

    fn idea_json(tag: &str) -> String {
        serde_json::to_string(&idea(tag)).unwrap()
    }

    fn gateway_over(script: &str) -> Gateway {
        Gateway::new(Box::new(StubBackend::from_script_json(script).unwrap()))
            .with_retries(2, Duration::ZERO)
    }

    #[test]
    fn request_validation_rejects_bad_parameters() {
        let mut request = ChatRequest::deterministic("s", "u");
        request.num_samples = 0;
        assert!(request.validate().is_err());
        request.num_samples = 1;
        request.top_p = 0.0;
        assert!(request.validate().is_err());
        request.top_p = 0.9;
        request.temperature = -0.1;
        assert!(request.validate().is_err());
    }

    #[test]
    fn parse_idea_handles_wrapper_styles() {
        let json = idea_json("x");
        let wrappers = [
            json.clone(),
            format!("```json\n{json}\n```"),
            format!("```\n{json}\n```"),
            format!("Here is the structured idea:\n{json}"),
            format!("{json}\nHope this helps!"),
        ];
        for wrapped in wrappers {
            let parsed = parse_idea_reply(&wrapped).unwrap();
            assert_eq!(parsed, idea("x"), "failed on: {wrapped}");
        }
    }

    #[test]
    fn parse_idea_rejects_garbage_and_wrong_keys() {
        assert!(parse_idea_reply("no json here").is_err());
        assert!(parse_idea_reply("{\"Problem\": \"only one\"}").is_err());
        let wrong = r#"{"problem":"p","Existing Methods":"e","Motivation":"m",
            "Proposed Method":"pm","Experiment Plan":"ep"}"#;
        assert!(parse_idea_reply(wrong).is_err(), "lowercase key must not pass");
    }

    #[test]
    fn stub_matches_first_rule_and_advances_cursor() {
        let script = r#"{"rules": [
                {"contains": ["alpha"], "replies": ["first", "second"]},
                {"contains": ["alp"], "replies": ["shadowed"]}
            ], "default": ["fallback"]}"#;
        let stub = StubBackend::from_script_json(script).unwrap();
        let request = |text: &str| ChatRequest::deterministic("sys", text);
        assert_eq!(stub.complete_once(&request("alpha one")).unwrap(), vec!["first"]);
        assert_eq!(stub.complete_once(&request("alpha two")).unwrap(), vec!["second"]);
        // Cursor saturates on the last reply.
        assert_eq!(stub.complete_once(&request("alpha three")).unwrap(), vec!["second"]);
        // A request matching only the later rule takes that rule.
        assert_eq!(stub.complete_once(&request("alp only")).unwrap(), vec!["shadowed"]);
        assert_eq!(stub.complete_once(&request("no hit")).unwrap(), vec!["fallback"]);
    }

    #[test]
    fn stub_serves_batches_for_multi_sample_requests() {
        let script = r#"{"rules": [{"contains": ["go"], "replies": ["r1", "r2", "r3"]}]}"#;
        let stub = StubBackend::from_script_json(script).unwrap();
        let mut request = ChatRequest::deterministic("s", "go");
        request.num_samples = 5;
        let replies = stub.complete_once(&request).unwrap();
        assert_eq!(replies, vec!["r1", "r2", "r3", "r3", "r3"]);
    }

    /// Backend that fails transiently N times before delegating to a stub.
    struct FlakyBackend {
        failures_left: AtomicU32,
        inner: StubBackend,
    }

    impl ChatBackend for FlakyBackend {
        fn complete_once(&self, request: &ChatRequest) -> Result<Vec<String>> {
            let left = self.failures_left.load(Ordering::SeqCst);
            if left > 0 {
                self.failures_left.store(left - 1, Ordering::SeqCst);
                return Err(Error::Transport("synthetic blip".into()));
            }
            self.inner.complete_once(request)
        }

        fn name(&self) -> String {
            "flaky".into()
        }
    }

    #[test]
    fn transient_failures_are_retried_and_counted() {
        let inner = StubBackend::from_script_json(r#"{"default": ["ok"]}"#).unwrap();
        let backend = FlakyBackend { failures_left: AtomicU32::new(2), inner };
        let gateway = Gateway::new(Box::new(backend)).with_retries(3, Duration::ZERO);
        let completion = gateway.complete(&ChatRequest::deterministic("s", "u")).unwrap();
        assert_eq!(completion.replies, vec!["ok"]);
        assert_eq!(completion.retries, 2);
    }

    #[test]
    fn retries_exhaust_into_typed_error() {
        let inner = StubBackend::from_script_json(r#"{"default": ["ok"]}"#).unwrap();
        let backend = FlakyBackend { failures_left: AtomicU32::new(10), inner };
        let gateway = Gateway::new(Box::new(backend)).with_retries(1, Duration::ZERO);
        let result = gateway.complete(&ChatRequest::deterministic("s", "u"));
        assert!(matches!(result, Err(Error::RetriesExhausted { attempts: 2, .. })));
    }

    #[test]
    fn extraction_repairs_a_malformed_first_reply() {
        let good = idea_json("fixed");
        let script = format!(
            r#"{{"rules": [{{"contains": ["TITLE: Flaky Paper"],
                "replies": ["not json at all", {}]}}]}}"#,
            serde_json::to_string(&good).unwrap()
        );
        let gateway = gateway_over(&script);
        let idea = gateway.extract_idea("TITLE: Flaky Paper\n\nBody text.").unwrap();
        assert_eq!(idea.problem, "problem fixed");
    }

    #[test]
    fn extraction_fails_after_two_bad_replies() {
        let script = r#"{"default": ["garbage one", "garbage two"]}"#;
        let gateway = gateway_over(script);
        let result = gateway.extract_idea("TITLE: Hopeless\n\nBody.");
        assert!(matches!(result, Err(Error::Extraction(_))));
    }

    fn dimensions() -> Vec<String> {
        ["novelty", "significance", "feasibility", "clarity", "effectiveness"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn judge_parses_verdicts_case_insensitively() {
        let verdict_json = r#"{"novelty": "A", "significance": "b", "feasibility": "TIE",
            "clarity": "tie", "effectiveness": "a"}"#;
        let outcomes = parse_verdict(verdict_json, &dimensions()).unwrap();
        assert_eq!(
            outcomes,
            vec![
                PairOutcome::FirstWins,
                PairOutcome::SecondWins,
                PairOutcome::Tie,
                PairOutcome::Tie,
                PairOutcome::FirstWins,
            ]
        );
    }

    #[test]
    fn judge_verdict_missing_dimension_is_malformed() {
        let verdict_json = r#"{"novelty": "A"}"#;
        assert!(parse_verdict(verdict_json, &dimensions()).is_err());
        let bad_value = r#"{"novelty": "A", "significance": "B", "feasibility": "maybe",
            "clarity": "tie", "effectiveness": "A"}"#;
        assert!(parse_verdict(bad_value, &dimensions()).is_err());
    }

    #[test]
    fn judge_abstains_after_two_malformed_replies() {
        let script = r#"{"default": ["not a verdict", "still not a verdict"]}"#;
        let gateway = gateway_over(script);
        let verdict = gateway.judge_pair("ctx", &idea("a"), &idea("b"), &dimensions()).unwrap();
        assert!(verdict.abstained);
        assert!(verdict.outcomes.iter().all(|o| *o == PairOutcome::Tie));
    }

    #[test]
    fn judge_recovers_when_retry_parses() {
        let verdict = r#"{"novelty": "A", "significance": "A", "feasibility": "A",
            "clarity": "A", "effectiveness": "A"}"#;
        let script = format!(
            r#"{{"default": ["malformed first", {}]}}"#,
            serde_json::to_string(verdict).unwrap()
        );
        let gateway = gateway_over(&script);
        let verdict = gateway.judge_pair("ctx", &idea("a"), &idea("b"), &dimensions()).unwrap();
        assert!(!verdict.abstained);
        assert!(verdict.outcomes.iter().all(|o| *o == PairOutcome::FirstWins));
    }

    #[test]
    fn hashed_judge_is_deterministic_and_order_sensitive() {
        let backend = HashedJudgeBackend::new(dimensions());
        let request_ab = ChatRequest::deterministic("s", "A then B");
        let request_ba = ChatRequest::deterministic("s", "B then A");
        let first = backend.complete_once(&request_ab).unwrap();
        let again = backend.complete_once(&request_ab).unwrap();
        assert_eq!(first, again);
        let swapped = backend.complete_once(&request_ba).unwrap();
        assert_ne!(first, swapped);
        assert!(parse_verdict(&first[0], &dimensions()).is_ok());
    }

    #[test]
    fn generation_uses_sampling_and_records_failures() {
        let mut replies = Vec::new();
        for index in 0..9 {
            replies.push(idea_json(&format!("c{index}")));
        }
        replies.push("broken".to_string());
        let script = serde_json::json!({
            "rules": [{"contains": ["seed prompt"], "replies": replies}]
        })
        .to_string();
        let gateway = gateway_over(&script);
        let sampling = SamplingConfig::default();
        let batch = gateway.generate_candidates("seed prompt text", &sampling).unwrap();
        assert_eq!(batch.ideas.len(), 9);
        assert_eq!(batch.failures, vec!["broken"]);
        assert_eq!(batch.sampling.num_candidates, 10);
        assert_eq!(batch.sampling.temperature, 0.9);
        assert_eq!(batch.sampling.top_p, 0.95);
    }

    #[test]
    fn judge_template_hash_is_stable() {
        let first = judge_template_hash();
        assert_eq!(first.len(), 64);
        assert_eq!(first, judge_template_hash());
    }
}
