//! LLM-backed clue extraction.
//!
//! The model is prompted with the utterance and the vocabulary and must
//! answer with a JSON object `{target, relation, anchor}`. Tokens outside the
//! vocabulary are snapped to the nearest concept of their family when they
//! have an embedding.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use log::warn;
use serde_json::{json, Value};
use thiserror::Error;

use super::{family_for_key, ParseError, ParsedClues, CATEGORY_KEY};
use crate::vocab::{ConceptVocabulary, Family};

const DEFAULT_PROMPT: &str = include_str!("../../data/llm_prompt.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
    #[error("LLM response is not valid clue JSON: {0:?}")]
    MalformedResponse(String),
    #[error("LLM token {0:?} cannot be mapped to the vocabulary")]
    TokenUnmappable(String),
}

/// Sends a prompt, returns the raw completion text.
pub trait CompletionTransport: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<F> CompletionTransport for F
where
    F: Fn(&str) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self(prompt)
    }
}

/// Chat-completions style JSON-over-HTTP client.
#[derive(Clone, Debug)]
pub struct HttpTransport {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpTransport {
            endpoint: endpoint.into(),
            api_key: None,
            model: model.into(),
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads `R2G_LLM_ENDPOINT`, `R2G_LLM_API_KEY` and `R2G_LLM_MODEL`.
    pub fn from_env() -> Result<Self, LlmError> {
        let endpoint = std::env::var("R2G_LLM_ENDPOINT")
            .map_err(|_| LlmError::Unavailable("R2G_LLM_ENDPOINT is not set".into()))?;
        let model = std::env::var("R2G_LLM_MODEL").unwrap_or_else(|_| "default".into());
        let mut t = HttpTransport::new(endpoint, model);
        t.api_key = std::env::var("R2G_LLM_API_KEY").ok().filter(|k| !k.is_empty());
        Ok(t)
    }
}

impl CompletionTransport for HttpTransport {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut req = agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let resp = req.send_json(body).map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let raw = resp.into_string().map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let value: Value = serde_json::from_str(&raw).map_err(|_| LlmError::MalformedResponse(raw.clone()))?;
        if let Some(content) = value.pointer("/choices/0/message/content").and_then(Value::as_str) {
            return Ok(content.to_string());
        }
        if value.get("target").is_some() {
            return Ok(raw);
        }
        Err(LlmError::MalformedResponse(raw))
    }
}

#[derive(Clone, Debug)]
pub struct LlmClientConfig {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each later one.
    pub backoff_base: Duration,
    /// Prompt with `{utterance}`, `{categories}`, `{relations}` and
    /// `{attributes}` placeholders.
    pub prompt_template: String,
    /// Minimum similarity for snapping an out-of-vocabulary token.
    pub min_similarity: f64,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            max_attempts: 3,
            backoff_base: Duration::from_millis(250),
            prompt_template: DEFAULT_PROMPT.to_string(),
            min_similarity: 0.5,
        }
    }
}

impl LlmClientConfig {
    pub fn with_prompt_file(mut self, path: &Path) -> std::io::Result<Self> {
        self.prompt_template = std::fs::read_to_string(path)?;
        Ok(self)
    }

    pub fn render_prompt(&self, utterance: &str, vocab: &ConceptVocabulary) -> String {
        let attributes: Vec<String> = vocab
            .families()
            .iter()
            .filter_map(|f| match f {
                Family::Attribute(name) => Some(format!("{name}: {}", vocab.tokens_in(f).join(", "))),
                _ => None,
            })
            .collect();
        self.prompt_template
            .replace("{categories}", &vocab.tokens_in(&Family::Category).join(", "))
            .replace("{relations}", &vocab.tokens_in(&Family::Relation).join(", "))
            .replace("{attributes}", &attributes.join("; "))
            .replace("{utterance}", utterance)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmParse {
    pub clues: ParsedClues,
    pub warnings: Vec<String>,
    pub attempts: u32,
}

/// Prompts `transport` and validates the reply, retrying with exponential
/// backoff on transport failures and malformed replies.
pub fn parse_llm(
    utterance: &str,
    vocab: &ConceptVocabulary,
    transport: &dyn CompletionTransport,
    config: &LlmClientConfig,
) -> Result<LlmParse, ParseError> {
    if utterance.trim().is_empty() {
        return Err(ParseError::EmptyUtterance);
    }
    let prompt = config.render_prompt(utterance, vocab);
    let attempts = config.max_attempts.max(1);
    let mut last = LlmError::Unavailable("no attempt made".into());
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(config.backoff_base * 2u32.saturating_pow(attempt - 2));
        }
        let result = transport
            .complete(&prompt)
            .and_then(|raw| interpret_response(&raw, vocab, config.min_similarity));
        match result {
            Ok((clues, warnings)) => {
                return Ok(LlmParse {
                    clues,
                    warnings,
                    attempts: attempt,
                })
            }
            Err(e @ LlmError::TokenUnmappable(_)) => return Err(e.into()),
            Err(e) => {
                warn!("LLM attempt {attempt}/{attempts} failed: {e}");
                last = e;
            }
        }
    }
    Err(last.into())
}

/// Strips one surrounding code fence, if any.
fn strip_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Validates one completion and maps its tokens onto the vocabulary.
pub fn interpret_response(
    raw: &str,
    vocab: &ConceptVocabulary,
    min_similarity: f64,
) -> Result<(ParsedClues, Vec<String>), LlmError> {
    let malformed = || LlmError::MalformedResponse(raw.to_string());
    let value: Value = serde_json::from_str(strip_fence(raw)).map_err(|_| malformed())?;
    let obj = value.as_object().ok_or_else(malformed)?;
    let mut warnings = Vec::new();

    let mut side = |v: Option<&Value>, who: &str| -> Result<BTreeMap<String, String>, LlmError> {
        let mut out = BTreeMap::new();
        let map = match v {
            None | Some(Value::Null) => return Ok(out),
            Some(Value::Object(m)) => m,
            Some(_) => return Err(malformed()),
        };
        for (key, token) in map {
            let token = match token {
                Value::Null => continue,
                Value::String(s) if s.trim().is_empty() => continue,
                Value::String(s) => s.trim().to_lowercase(),
                _ => return Err(malformed()),
            };
            let key = key.trim().to_lowercase();
            let key = key.strip_prefix("attr:").unwrap_or(&key).to_string();
            let family = family_for_key(&key);
            if !vocab.has_family(&family) {
                let msg = format!("{who}: unknown family {key:?} dropped");
                warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            match resolve(vocab, &token, &family, min_similarity, &mut warnings) {
                Some(t) => {
                    out.insert(key, t);
                }
                None if who == "target" && key == CATEGORY_KEY => return Err(LlmError::TokenUnmappable(token)),
                None => {
                    let msg = format!("{who}: unmappable {key} token {token:?} dropped");
                    warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        Ok(out)
    };

    let target = side(obj.get("target"), "target")?;
    let anchor = side(obj.get("anchor"), "anchor")?;
    let relation = match obj.get("relation") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => {
            let token = s.trim().to_lowercase();
            let r = resolve(vocab, &token, &Family::Relation, min_similarity, &mut warnings);
            if r.is_none() {
                let msg = format!("unmappable relation {token:?} dropped");
                warn!("{msg}");
                warnings.push(msg);
            }
            r
        }
        Some(_) => return Err(malformed()),
    };
    if !target.contains_key(CATEGORY_KEY) {
        return Err(malformed());
    }
    Ok((ParsedClues { target, relation, anchor }, warnings))
}

fn resolve(
    vocab: &ConceptVocabulary,
    token: &str,
    family: &Family,
    min_similarity: f64,
    warnings: &mut Vec<String>,
) -> Option<String> {
    if vocab.family_of(token) == Some(family) {
        return Some(token.to_string());
    }
    let v = vocab.word_vector(token)?;
    let (concept, score) = vocab.nearest_concept(&v, Some(family)).ok()?;
    if score < min_similarity {
        return None;
    }
    let msg = format!("mapped {token:?} to {:?} (similarity {score:.3})", concept.token);
    warn!("{msg}");
    warnings.push(msg);
    Some(concept.token.clone())
}

#[cfg(test)]
mod tests {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::parser::parse_template;
    use crate::vocab::{load_vocabulary, ConceptManifest, EmbeddingTable, VocabConfig};

    fn fast() -> LlmClientConfig {
        LlmClientConfig {
            backoff_base: Duration::from_millis(1),
            ..LlmClientConfig::default()
        }
    }

    #[test]
    fn mock_round_trip_matches_template() {
        let v = ConceptVocabulary::builtin();
        let mock = |prompt: &str| {
            assert!(prompt.contains("the bag on the couch"));
            assert!(prompt.contains("next to"));
            Ok(r#"{"target": {"category": "bag"}, "relation": "on", "anchor": {"category": "couch"}}"#.to_string())
        };
        let out = parse_llm("the bag on the couch", &v, &mock, &fast()).unwrap();
        assert_eq!(out.clues, parse_template("the bag on the couch", &v).unwrap());
        assert_eq!(out.attempts, 1);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn retries_after_malformed_replies() {
        let v = ConceptVocabulary::builtin();
        let calls = AtomicUsize::new(0);
        let mock = |_: &str| {
            let n = calls.fetch_add(1, Ordering::SeqCst);
            Ok(match n {
                0 => "Sure! The target is the lamp.".to_string(),
                1 => "{\"target\": ".to_string(),
                _ => "```json\n{\"target\": {\"category\": \"lamp\"}, \"relation\": null, \"anchor\": {}}\n```".to_string(),
            })
        };
        let out = parse_llm("the lamp", &v, &mock, &fast()).unwrap();
        assert_eq!(out.attempts, 3);
        assert_eq!(out.clues.target_category(), Some("lamp"));
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let v = ConceptVocabulary::builtin();
        let calls = AtomicUsize::new(0);
        let mock = |_: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(LlmError::Unavailable("connection refused".into()))
        };
        let err = parse_llm("the lamp", &v, &mock, &fast()).unwrap_err();
        assert!(matches!(err, ParseError::Llm(LlmError::Unavailable(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let mock = |_: &str| Ok("no json here".to_string());
        let err = parse_llm("the lamp", &v, &mock, &fast()).unwrap_err();
        assert!(matches!(err, ParseError::Llm(LlmError::MalformedResponse(_))));
    }

    fn glove_like() -> ConceptVocabulary {
        let manifest = ConceptManifest::from_json(
            r#"{"dim": 4, "families": {"category": ["chair", "table"], "relation": ["next to", "on"]}}"#,
        )
        .unwrap();
        let table = EmbeddingTable::parse(
            "chair 1 0 0 0\n\
             table 0 1 0 0\n\
             next 0 0 1 0.2\n\
             to 0 0 0.8 0\n\
             on 0 0 0 1\n\
             adjacent 0 0 1 0.1\n\
             stool 0.9 0.1 0 0\n",
        )
        .unwrap();
        load_vocabulary(&manifest, &table, VocabConfig::default()).unwrap()
    }

    #[test]
    fn out_of_vocabulary_relation_snaps_to_nearest() {
        let v = glove_like();
        let reply = r#"{"target": {"category": "chair"}, "relation": "adjacent to", "anchor": {"category": "table"}}"#;
        let (clues, warnings) = interpret_response(reply, &v, 0.5).unwrap();
        assert_eq!(clues.relation.as_deref(), Some("next to"));
        assert_eq!(warnings.len(), 1);

        // oracle: cosine of mean("adjacent","to") with each relation concept
        let unit = |x: [f64; 4]| {
            let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            x.map(|a| a / n)
        };
        let adjacent = unit([0.0, 0.0, 1.0, 0.1]);
        let to = unit([0.0, 0.0, 0.8, 0.0]);
        let q: Vec<f64> = (0..4).map(|i| (adjacent[i] + to[i]) / 2.0).collect();
        let next_to = v.embedding("next to").unwrap();
        let on = v.embedding("on").unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        assert!(dot(&q, next_to) > dot(&q, on));
    }

    #[test]
    fn unmappable_tokens() {
        let v = glove_like();
        let reply = r#"{"target": {"category": "spaceship"}, "relation": "on", "anchor": {}}"#;
        assert_eq!(
            interpret_response(reply, &v, 0.5).unwrap_err(),
            LlmError::TokenUnmappable("spaceship".into())
        );
        let reply = r#"{"target": {"category": "stool"}, "relation": "orbiting", "anchor": {"category": "ufo"}}"#;
        let (clues, warnings) = interpret_response(reply, &v, 0.5).unwrap();
        assert_eq!(clues.target_category(), Some("chair"));
        assert_eq!(clues.relation, None);
        assert!(clues.anchor.is_empty());
        assert_eq!(warnings.len(), 3);
    }

    #[test]
    fn http_transport_against_local_server() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut length = 0;
            let mut auth = String::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if lower.starts_with("authorization:") {
                    auth = line.trim().to_string();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let request: Value = serde_json::from_slice(&body).unwrap();
            let content = r#"{"target": {"category": "bag"}, "relation": "on", "anchor": {"category": "couch"}}"#;
            let reply = json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
            (request, auth)
        });

        let mut transport = HttpTransport::new(format!("http://{addr}/v1/chat/completions"), "test-model");
        transport.api_key = Some("secret".into());
        let v = ConceptVocabulary::builtin();
        let out = parse_llm("the bag on the couch", &v, &transport, &fast()).unwrap();
        assert_eq!(out.clues.anchor_category(), Some("couch"));
        let (request, auth) = server.join().unwrap();
        assert_eq!(request["model"], "test-model");
        assert_eq!(auth, "Authorization: Bearer secret");
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let t = HttpTransport::new(format!("http://{addr}/"), "m");
        assert!(matches!(t.complete("x"), Err(LlmError::Unavailable(_))));
    }
}
