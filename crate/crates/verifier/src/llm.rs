//! Chat-completions backend.
//!
//! Requests are `POST {model, messages, temperature}` with a bearer token read
//! from the environment; the answer is `choices[0].message.content`. HTTP 429,
//! 5xx, timeouts and transport errors are retried with jittered exponential
//! backoff. Other statuses fail immediately.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use appi_verify_core::backend::{AgentBackend, BackendError};
use appi_verify_core::domain::{AgentAnalysis, AgentRole, DataTransferAction};
use appi_verify_core::parse::parse_analysis;
use appi_verify_core::prompt::{
    describe_analyses, fill_placeholders, render_prompt, ChatMessage, PromptPayload, PromptTemplate, OUTPUT_INSTRUCTIONS,
    COORDINATOR_PROMPT,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::runtime::SynthesisModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_base_secs: f64,
    /// Minimum spacing between request starts; zero disables throttling.
    pub min_interval_secs: f64,
    pub max_in_flight: usize,
    /// Directory overriding the built-in prompt files.
    pub prompt_dir: Option<String>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".to_string(),
            model_name: "gpt-3.5-turbo".to_string(),
            api_key_env: "OPENAI_API_KEY".to_string(),
            temperature: 0.0,
            timeout_secs: 30.0,
            max_retries: 3,
            backoff_base_secs: 1.0,
            min_interval_secs: 0.0,
            max_in_flight: 8,
            prompt_dir: None,
        }
    }
}

impl LlmConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<(), BackendError> {
        let url = url_scheme_ok(&self.endpoint_url);
        if !url {
            return Err(BackendError::Config(format!("endpoint_url {:?} is not an http(s) URL", self.endpoint_url)));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(BackendError::Config("timeout must be positive".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        if self.backoff_base_secs < 0.0 || self.min_interval_secs < 0.0 {
            return Err(BackendError::Config("backoff and throttle intervals must be >= 0".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

fn url_scheme_ok(raw: &str) -> bool {
    match raw.parse::<ureq::http::Uri>() {
        Ok(uri) => matches!(uri.scheme_str(), Some("http" | "https")) && uri.host().is_some(),
        Err(_) => false,
    }
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().unwrap_or_else(|p| p.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
}

pub struct LlmClient {
    config: LlmConfig,
    api_key: String,
    agent: ureq::Agent,
    last_start: Mutex<Option<Instant>>,
    in_flight: InFlight,
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

impl LlmClient {
    /// Fails when the configuration is invalid or the API key variable is unset.
    pub fn new(config: LlmConfig) -> Result<Self, BackendError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = InFlight { count: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight };
        Ok(LlmClient { config, api_key, agent, last_start: Mutex::new(None), in_flight })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    /// Exact bytes posted for `payload`: compact JSON with `model`, `messages`, `temperature` in that order.
    pub fn request_body(&self, payload: &PromptPayload) -> Vec<u8> {
        let body = RequestBody { model: &self.config.model_name, messages: &payload.messages, temperature: self.config.temperature };
        serde_json::to_vec(&body).expect("request serializes")
    }

    fn throttle(&self) {
        if self.config.min_interval_secs <= 0.0 {
            return;
        }
        let interval = Duration::from_secs_f64(self.config.min_interval_secs);
        let mut last = self.last_start.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(prev) = *last {
            let ready = prev + interval;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }

    fn attempt(&self, body: &[u8]) -> Attempt {
        self.throttle();
        let response = self
            .agent
            .post(&self.config.endpoint_url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(body);
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("failed reading body: {e}")),
        };
        match status {
            200..=299 => match extract_content(&text) {
                Some(content) => Attempt::Done(content),
                None => Attempt::Fatal(format!("response without choices[0].message.content: {}", truncate(&text))),
            },
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {}", truncate(&text))),
            _ => Attempt::Fatal(format!("HTTP {status}: {}", truncate(&text))),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.backoff_base_secs * 2f64.powi(retry as i32);
        let jitter = rand::rng().random_range(0.5..=1.0);
        Duration::from_secs_f64(base * jitter)
    }
}

/// Sends `payload` and returns the assistant content, retrying transient failures.
pub fn call_model(client: &LlmClient, payload: &PromptPayload) -> Result<String, BackendError> {
    let _slot = client.in_flight.acquire();
    let body = client.request_body(payload);
    let attempts = client.config.max_retries + 1;
    let mut last = String::new();
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(client.backoff(attempt - 1));
        }
        match client.attempt(&body) {
            Attempt::Done(content) => return Ok(content),
            Attempt::Fatal(msg) => return Err(BackendError::Failed(msg)),
            Attempt::Retry(msg) => {
                log::debug!("attempt {} of {attempts} failed: {msg}", attempt + 1);
                last = msg;
            }
        }
    }
    Err(BackendError::Exhausted { attempts, last })
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_owned)
}

fn truncate(text: &str) -> &str {
    match text.char_indices().nth(200) {
        Some((i, _)) => &text[..i],
        None => text,
    }
}

/// Per-role templates plus the coordinator prompt.
#[derive(Debug, Clone)]
pub struct PromptSet {
    pub roles: BTreeMap<AgentRole, PromptTemplate>,
    pub coordinator: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        let roles = [AgentRole::LegalAnalyst, AgentRole::ContextAnalyzer, AgentRole::RiskAssessor, AgentRole::SingleAgent]
            .into_iter()
            .map(|r| (r, PromptTemplate::default_for(r)))
            .collect();
        PromptSet { roles, coordinator: coordinator_template(COORDINATOR_PROMPT.to_string()) }
    }
}

fn coordinator_template(system_text: String) -> PromptTemplate {
    PromptTemplate { role: AgentRole::SingleAgent, system_text, output_instructions: OUTPUT_INSTRUCTIONS.to_string() }
}

const PROMPT_FILES: [(&str, Option<AgentRole>); 6] = [
    ("legal_analyst.txt", Some(AgentRole::LegalAnalyst)),
    ("context_analyzer.txt", Some(AgentRole::ContextAnalyzer)),
    ("risk_assessor.txt", Some(AgentRole::RiskAssessor)),
    ("single_agent.txt", Some(AgentRole::SingleAgent)),
    ("coordinator.txt", None),
    ("output_instructions.txt", None),
];

impl PromptSet {
    /// Loads any of the known prompt files present in `dir`; missing files keep the built-in text.
    pub fn load(dir: &Path) -> Result<Self, BackendError> {
        let mut set = PromptSet::default();
        let read = |name: &str| -> Result<Option<String>, BackendError> {
            let path = dir.join(name);
            match std::fs::read_to_string(&path) {
                Ok(s) => Ok(Some(s)),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                Err(e) => Err(BackendError::Config(format!("cannot read {}: {e}", path.display()))),
            }
        };
        let instructions = read("output_instructions.txt")?;
        for (file, role) in PROMPT_FILES {
            let Some(text) = read(file)? else { continue };
            match role {
                Some(r) => set.roles.get_mut(&r).expect("all roles present").system_text = text,
                None if file == "coordinator.txt" => set.coordinator.system_text = text,
                None => {}
            }
        }
        if let Some(text) = instructions {
            for t in set.roles.values_mut().chain(std::iter::once(&mut set.coordinator)) {
                t.output_instructions = text.clone();
            }
        }
        for t in set.roles.values().chain(std::iter::once(&set.coordinator)) {
            t.validate().map_err(|e| BackendError::Config(format!("prompt template for {}: {e}", t.role)))?;
        }
        Ok(set)
    }
}

pub struct LlmBackend {
    client: LlmClient,
    prompts: PromptSet,
}

impl LlmBackend {
    pub fn new(config: LlmConfig) -> Result<Self, BackendError> {
        let prompts = match &config.prompt_dir {
            Some(dir) => PromptSet::load(Path::new(dir))?,
            None => PromptSet::default(),
        };
        Ok(LlmBackend { client: LlmClient::new(config)?, prompts })
    }

    pub fn with_prompts(mut self, prompts: PromptSet) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }
}

impl AgentBackend for LlmBackend {
    fn analyze(&self, role: AgentRole, action: &DataTransferAction) -> Result<AgentAnalysis, BackendError> {
        let template = &self.prompts.roles[&role];
        let payload = render_prompt(template, action).map_err(|e| BackendError::Config(e.to_string()))?;
        let raw = call_model(&self.client, &payload)?;
        Ok(parse_analysis(&raw, role))
    }

    fn kind(&self) -> &str {
        "llm"
    }
}

impl SynthesisModel for LlmBackend {
    fn synthesize(&self, action: &DataTransferAction, analyses: &[AgentAnalysis]) -> Result<AgentAnalysis, BackendError> {
        let t = &self.prompts.coordinator;
        let system = fill_placeholders(&t.system_text, action).map_err(|e| BackendError::Config(e.to_string()))?;
        let payload = PromptPayload {
            messages: vec![
                ChatMessage::system(system),
                ChatMessage::user(format!("Specialist analyses:\n{}", describe_analyses(analyses))),
                ChatMessage::user(t.output_instructions.clone()),
            ],
        };
        let raw = call_model(&self.client, &payload)?;
        Ok(parse_analysis(&raw, AgentRole::SingleAgent))
    }
}
