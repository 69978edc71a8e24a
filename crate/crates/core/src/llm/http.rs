// Copyright 2026 the migratekit Authors
// SPDX-License-Identifier: Apache-2.0

//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendReply, ChatMessage, ChatRequest, LlmBackend, LlmError, TokenUsage};

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub struct HttpBackend {
    url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend {
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            client,
        })
    }
}

impl LlmBackend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let body = RequestBody {
            model: &self.model,
            temperature: request.temperature,
            messages: &request.messages,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(LlmError::Transport {
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let parsed: ResponseBody = resp.json().map_err(|e| LlmError::Transport {
            message: format!("malformed response body: {e}"),
            retryable: false,
        })?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::Transport {
                message: "response has no message content".into(),
                retryable: false,
            })?;
        Ok(BackendReply {
            text,
            usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
                requests: 1,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves one request with `status` and `reply`, handing back the raw
    /// request head and body.
    fn one_shot_server(status: &'static str, reply: &'static str) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
            tx.send((head, String::from_utf8(body).unwrap())).unwrap();
        });
        (format!("http://{addr}/v1"), rx)
    }

    fn request() -> ChatRequest {
        ChatRequest {
            temperature: 0.4,
            messages: vec![ChatMessage::user("hello")],
        }
    }

    #[test]
    fn sends_model_and_temperature_unchanged() {
        let (endpoint, rx) = one_shot_server(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"yes"}}],"usage":{"prompt_tokens":7,"completion_tokens":1}}"#,
        );
        let backend =
            HttpBackend::new(&endpoint, "gpt-3.5-turbo", Some("k-123".into()), Duration::from_secs(10)).unwrap();
        let reply = backend.chat(&request()).unwrap();
        assert_eq!(reply.text, "yes");
        assert_eq!(reply.usage.unwrap().prompt_tokens, 7);
        let (head, body) = rx.recv().unwrap();
        assert!(head.starts_with("POST /v1/chat/completions "));
        assert!(head.to_ascii_lowercase().contains("authorization: bearer k-123"));
        let body: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(body["model"], "gpt-3.5-turbo");
        assert_eq!(body["temperature"], 0.4);
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "hello");
    }

    #[test]
    fn server_errors_are_retryable_client_errors_are_not() {
        let (endpoint, _rx) = one_shot_server("503 Service Unavailable", "{}");
        let backend = HttpBackend::new(&endpoint, "m", None, Duration::from_secs(10)).unwrap();
        assert!(backend.chat(&request()).unwrap_err().is_retryable());
        let (endpoint, _rx) = one_shot_server("400 Bad Request", "{}");
        let backend = HttpBackend::new(&endpoint, "m", None, Duration::from_secs(10)).unwrap();
        assert!(!backend.chat(&request()).unwrap_err().is_retryable());
    }
}
