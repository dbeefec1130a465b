//! OpenAI-compatible HTTP backend (`/chat/completions`, `/embeddings`).

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Backend, BackendCompletion, CompletionRequest, TokenUsage};
use crate::error::{Error, Result};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

pub struct OpenAiBackend {
    base_url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    #[serde(default)]
    index: usize,
    embedding: Vec<f32>,
}

impl OpenAiBackend {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(OpenAiBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, path: &str, body: &B) -> Result<R> {
        let mut req = self.client.post(format!("{}{path}", self.base_url)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Error::Gateway(format!("POST {path}: {e}")))?;
        let status = resp.status();
        let raw = resp
            .text()
            .map_err(|e| Error::Gateway(format!("POST {path}: reading body: {e}")))?;
        if !status.is_success() {
            let snippet: String = raw.chars().take(300).collect();
            return Err(Error::Gateway(format!("POST {path}: HTTP {status}: {snippet}")));
        }
        serde_json::from_str(&raw)
            .map_err(|e| Error::Gateway(format!("POST {path}: malformed response: {e}")))
    }
}

impl Backend for OpenAiBackend {
    fn id(&self) -> &str {
        "openai-compatible"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<BackendCompletion> {
        let body = ChatBody {
            model: &req.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &req.text,
            }],
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let resp: ChatResponse = self.post("/chat/completions", &body)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let usage = resp.usage.map_or(TokenUsage::default(), |u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
        });
        Ok(BackendCompletion { text, usage })
    }

    fn embed(&self, model: &str, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let resp: EmbedResponse = self.post("/embeddings", &EmbedBody { model, input: texts })?;
        let mut data = resp.data;
        data.sort_by_key(|d| d.index);
        Ok(data.into_iter().map(|d| d.embedding).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve one canned HTTP response and hand back the raw request body.
    fn serve_once(status: &str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let status = status.to_string();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            let mut head = String::new();
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
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            write!(
                stream,
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            format!("{head}\n{}", String::from_utf8(buf).unwrap())
        });
        (format!("http://{addr}/v1"), handle)
    }

    fn request(text: &str) -> CompletionRequest {
        CompletionRequest {
            prompt: super::super::PromptName::QaAnswer,
            vars: Default::default(),
            text: text.into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 32,
        }
    }

    #[test]
    fn chat_wire_format() {
        let (url, handle) = serve_once(
            "200 OK",
            r#"{"choices":[{"message":{"role":"assistant","content":"Nicholas Bacon"}}],"usage":{"prompt_tokens":12,"completion_tokens":2}}"#,
        );
        let backend = OpenAiBackend::new(&url, Some("sk-test".into()), Duration::from_secs(5)).unwrap();
        let out = backend.complete(&request("who?")).unwrap();
        assert_eq!(out.text, "Nicholas Bacon");
        assert_eq!(out.usage.completion_tokens, 2);
        let seen = handle.join().unwrap();
        assert!(seen.starts_with("POST /v1/chat/completions"));
        assert!(seen.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let body: serde_json::Value =
            serde_json::from_str(seen.rsplit('\n').next().unwrap()).unwrap();
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "who?");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["max_tokens"], 32);
    }

    #[test]
    fn embeddings_reordered_by_index() {
        let (url, handle) = serve_once(
            "200 OK",
            r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#,
        );
        let backend = OpenAiBackend::new(&url, None, Duration::from_secs(5)).unwrap();
        let v = backend
            .embed("text-embedding-3-small", &["a".into(), "b".into()])
            .unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let seen = handle.join().unwrap();
        assert!(seen.starts_with("POST /v1/embeddings"));
        assert!(seen.contains(r#""input":["a","b"]"#));
    }

    #[test]
    fn http_errors_are_gateway_errors() {
        let (url, handle) = serve_once("429 Too Many Requests", r#"{"error":"slow down"}"#);
        let backend = OpenAiBackend::new(&url, None, Duration::from_secs(5)).unwrap();
        assert!(matches!(backend.complete(&request("q")), Err(Error::Gateway(_))));
        handle.join().unwrap();
    }
}
