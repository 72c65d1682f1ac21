//! Reply sources: the adapter client for external systems and the built-in retrieval bot.

use std::collections::HashSet;
use std::time::Duration;

use dialeval_core::autometrics::tokenize;
use dialeval_core::degradation::ResponseCorpus;
use dialeval_core::types::{Speaker, Utterance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persona: Option<Vec<String>>,
    /// Oldest first.
    pub history: Vec<Turn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterResponse {
    pub text: String,
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter request failed: {0}")]
    Transport(String),
    #[error("adapter returned status {0}")]
    Status(u16),
    #[error("adapter response does not conform: {0}")]
    NonConforming(String),
}

/// HTTP client for `POST {endpoint}/respond`, with one automatic retry.
#[derive(Debug, Clone)]
pub struct AdapterClient {
    client: reqwest::Client,
}

impl AdapterClient {
    pub fn new(timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds with default tls-free settings");
        Self { client }
    }

    pub async fn respond(&self, endpoint: &str, request: &AdapterRequest) -> Result<String, AdapterError> {
        match self.attempt(endpoint, request).await {
            Ok(text) => Ok(text),
            Err(_) => self.attempt(endpoint, request).await,
        }
    }

    async fn attempt(&self, endpoint: &str, request: &AdapterRequest) -> Result<String, AdapterError> {
        let url = format!("{}/respond", endpoint.trim_end_matches('/'));
        let resp = self
            .client
            .post(url)
            .json(request)
            .send()
            .await
            .map_err(|e| AdapterError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(AdapterError::Status(resp.status().as_u16()));
        }
        let body: AdapterResponse = resp
            .json()
            .await
            .map_err(|e| AdapterError::NonConforming(e.to_string()))?;
        if body.text.trim().is_empty() {
            return Err(AdapterError::NonConforming("empty text".into()));
        }
        Ok(body.text)
    }
}

pub fn adapter_request(persona: Option<&[String]>, history: &[Utterance]) -> AdapterRequest {
    AdapterRequest {
        persona: persona.map(<[String]>::to_vec),
        history: history
            .iter()
            .map(|u| Turn {
                speaker: u.speaker,
                text: u.text.clone(),
            })
            .collect(),
    }
}

/// Nearest neighbour over the corpus by token overlap with the last user input; replies
/// with the line that follows the match, so an ordered dialogue corpus yields a plausible
/// next turn.
#[derive(Debug, Clone)]
pub struct RetrievalBot {
    lines: Vec<String>,
    token_sets: Vec<HashSet<String>>,
}

impl RetrievalBot {
    pub fn new(corpus: &ResponseCorpus) -> Self {
        let lines: Vec<String> = corpus.lines().collect();
        let token_sets = lines.iter().map(|l| tokenize(l).into_iter().collect()).collect();
        Self { lines, token_sets }
    }

    pub fn reply(&self, history: &[Utterance]) -> String {
        let query: HashSet<String> = history
            .iter()
            .rev()
            .find(|u| u.speaker == Speaker::User)
            .map(|u| tokenize(&u.text).into_iter().collect())
            .unwrap_or_default();
        let best = self
            .token_sets
            .iter()
            .enumerate()
            .max_by_key(|(i, set)| (set.intersection(&query).count(), std::cmp::Reverse(*i)))
            .map_or(0, |(i, _)| i);
        self.lines[(best + 1) % self.lines.len()].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn user(text: &str) -> Utterance {
        Utterance {
            speaker: Speaker::User,
            text: text.into(),
            timestamp: 0,
        }
    }

    #[test]
    fn retrieval_follows_best_match() {
        let corpus = ResponseCorpus::from_text("do you like dogs ?\ni love my golden retriever .\nwhat about cats ?\n", "t").unwrap();
        let bot = RetrievalBot::new(&corpus);
        assert_eq!(bot.reply(&[user("Do you like dogs?")]), "i love my golden retriever .");
        assert_eq!(bot.reply(&[user("cats")]), "do you like dogs ?");
    }

    #[test]
    fn retrieval_without_overlap_is_deterministic() {
        let bot = RetrievalBot::new(&ResponseCorpus::bundled());
        let a = bot.reply(&[user("zzzz qqqq")]);
        assert_eq!(a, bot.reply(&[user("zzzz qqqq")]));
        assert!(!a.trim().is_empty());
    }

    #[test]
    fn request_wire_format() {
        let req = adapter_request(None, &[user("hi")]);
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            serde_json::json!({"history": [{"speaker": "user", "text": "hi"}]})
        );
    }
}
