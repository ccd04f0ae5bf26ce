//! Chat-completions generator over HTTP.
//!
//! Endpoint and key come from `MEMRAG_LLM_ENDPOINT` and `MEMRAG_LLM_API_KEY`.
//! The request is `{"model", "messages", "temperature": 0}` and the answer is
//! read from `choices[0].message.content`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use memrag_core::generation::{GenerateError, Generator};
use serde_json::{json, Value};

pub const ENDPOINT_VAR: &str = "MEMRAG_LLM_ENDPOINT";
pub const API_KEY_VAR: &str = "MEMRAG_LLM_API_KEY";

pub const PROMPT_VERSION: &str = "v1";
const SYSTEM_PROMPT: &str = "You answer questions about the user from their recorded memories. \
Use only the memories given. Reply with one short sentence.";

/// `Q` first, then the memories numbered in selection order.
pub fn render_prompt(question: &str, memories: &[&str]) -> String {
    let mut s = format!("Question: {question}\nMemories:\n");
    if memories.is_empty() {
        s.push_str("(none)\n");
    }
    for (i, m) in memories.iter().enumerate() {
        s.push_str(&format!("{}. {m}\n", i + 1));
    }
    s.push_str("Answer:");
    s
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
    }

    fn release(&self) {
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteGenerator {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    retries: u32,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteGenerator {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, model: impl Into<String>, timeout: Duration, retries: u32, max_in_flight: usize) -> Self {
        RemoteGenerator {
            endpoint: endpoint.into(),
            api_key,
            model: model.into(),
            retries,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            gate: Gate { free: Mutex::new(max_in_flight.max(1)), cv: Condvar::new() },
        }
    }

    pub fn from_env(model: &str, timeout: Duration, retries: u32, max_in_flight: usize) -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_VAR).with_context(|| format!("{ENDPOINT_VAR} is not set"))?;
        let key = std::env::var(API_KEY_VAR).ok();
        Ok(RemoteGenerator::new(endpoint, key, model, timeout, retries, max_in_flight))
    }

    fn request_once(&self, body: &Value) -> std::result::Result<String, String> {
        let mut req = self.agent.post(&self.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(body.clone()).map_err(|e| e.to_string())?;
        let v: Value = resp.into_json().map_err(|e| e.to_string())?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(|s| s.trim().to_string())
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, question: &str, memories: &[&str]) -> std::result::Result<String, GenerateError> {
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": render_prompt(question, memories)},
            ],
        });
        self.gate.acquire();
        let mut last = String::new();
        let mut result = None;
        for _ in 0..=self.retries {
            match self.request_once(&body) {
                Ok(a) => {
                    result = Some(a);
                    break;
                }
                Err(e) => last = e,
            }
        }
        self.gate.release();
        match result {
            Some(a) if a.is_empty() => Err(GenerateError::EmptyAnswer),
            Some(a) => Ok(a),
            None => Err(GenerateError::Transport { retries: self.retries, message: last }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_puts_question_before_numbered_memories() {
        let p = render_prompt("When?", &["A.", "B."]);
        assert_eq!(p, "Question: When?\nMemories:\n1. A.\n2. B.\nAnswer:");
        assert!(render_prompt("When?", &[]).contains("(none)"));
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        let g = RemoteGenerator::new("http://127.0.0.1:9/", None, "m", Duration::from_millis(200), 1, 1);
        match g.generate("q", &[]) {
            Err(GenerateError::Transport { retries: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
