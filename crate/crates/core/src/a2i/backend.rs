//! Chat-completion backend abstraction.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("model error: {0}")]
    Model(String),
    #[error("backend misconfigured: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BackendIdentity {
    pub backend: String,
    pub model: String,
}

impl std::fmt::Display for BackendIdentity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.backend, self.model)
    }
}

/// A single-turn chat completion. Implementations must tolerate concurrent
/// calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError>;
    fn identity(&self) -> BackendIdentity;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        (**self).complete(prompt, temperature, max_tokens)
    }

    fn identity(&self) -> BackendIdentity {
        (**self).identity()
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        (**self).complete(prompt, temperature, max_tokens)
    }

    fn identity(&self) -> BackendIdentity {
        (**self).identity()
    }
}

/// What a [`FaultInjector`] does on a faulty attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Answer with prose that contains no JSON.
    Garbage,
    /// Fail with a transport error.
    Transport,
}

/// Wraps a backend and spoils the first `failures` attempts of every
/// distinct prompt.
pub struct FaultInjector<B> {
    inner: B,
    failures: usize,
    fault: Fault,
    attempts: Mutex<HashMap<String, usize>>,
}

impl<B: ChatBackend> FaultInjector<B> {
    pub fn new(inner: B, failures: usize, fault: Fault) -> Self {
        FaultInjector {
            inner,
            failures,
            fault,
            attempts: Mutex::new(HashMap::new()),
        }
    }

    /// Total attempts seen across all prompts.
    pub fn total_attempts(&self) -> usize {
        self.attempts.lock().expect("poisoned").values().sum()
    }
}

impl<B: ChatBackend> ChatBackend for FaultInjector<B> {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        let attempt = {
            let mut map = self.attempts.lock().expect("poisoned");
            let n = map.entry(prompt.to_string()).or_insert(0);
            *n += 1;
            *n
        };
        if attempt <= self.failures {
            return match self.fault {
                Fault::Garbage => Ok("I'm sorry, I could not work that out.".to_string()),
                Fault::Transport => Err(BackendError::Transport("injected fault".into())),
            };
        }
        self.inner.complete(prompt, temperature, max_tokens)
    }

    fn identity(&self) -> BackendIdentity {
        let inner = self.inner.identity();
        BackendIdentity {
            backend: format!("faulty({})", inner.backend),
            model: inner.model,
        }
    }
}
