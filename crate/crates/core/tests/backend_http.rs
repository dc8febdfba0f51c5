use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use groundcheck::backend::{
    BackendConfig, BackendError, ChatBackend, ChatRequest, Embedder, HttpFetcher, OpenAiCompatible, PageFetcher,
    VirtualClock,
};

#[derive(Debug, Clone)]
struct Request {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    body: String,
}

type Handler = dyn Fn(&Request, usize) -> (u16, &'static str, String) + Send + Sync;

/// Minimal HTTP/1.1 server: one request per connection, answered by `handler`
/// with the zero-based request number.
struct FakeServer {
    url: String,
    requests: Arc<Mutex<Vec<Request>>>,
}

impl FakeServer {
    fn start(handler: Box<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut headers = Vec::new();
                let mut length = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                        if k == "content-length" {
                            length = v.parse().unwrap();
                        }
                        headers.push((k, v));
                    }
                }
                let mut body = vec![0; length];
                reader.read_exact(&mut body).unwrap();
                let request = Request {
                    method,
                    path,
                    headers,
                    body: String::from_utf8(body).unwrap(),
                };
                let n = {
                    let mut log = log.lock().unwrap();
                    log.push(request.clone());
                    log.len() - 1
                };
                let (status, content_type, reply) = handler(&request, n);
                let head = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                    reply.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        Self { url, requests }
    }

    fn requests(&self) -> Vec<Request> {
        self.requests.lock().unwrap().clone()
    }
}

fn config(url: &str, key_env: &str) -> BackendConfig {
    BackendConfig {
        endpoint: format!("{url}/v1"),
        model: "test-model".into(),
        api_key_env: key_env.into(),
        timeout_secs: 10.0,
        max_retries: 3,
        backoff_ms: 100,
        ..BackendConfig::default()
    }
}

fn client(url: &str, key_env: &str) -> OpenAiCompatible {
    std::env::set_var(key_env, "secret-token");
    OpenAiCompatible::with_clock(config(url, key_env), Arc::new(VirtualClock::default())).unwrap()
}

fn completion(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn rate_limited_chat_is_retried_once() {
    let server = FakeServer::start(Box::new(|_, n| {
        if n == 0 {
            (429, "application/json", r#"{"error":"slow down"}"#.into())
        } else {
            (200, "application/json", completion("hello"))
        }
    }));
    let backend = client(&server.url, "GC_TEST_KEY_RETRY");
    let reply = backend.chat_complete(&ChatRequest::new("hi")).unwrap();
    assert_eq!(reply, "hello");
    let requests = server.requests();
    assert_eq!(requests.len(), 2);
    for r in &requests {
        assert_eq!(r.method, "POST");
        assert_eq!(r.path, "/v1/chat/completions");
        assert!(r.headers.contains(&("authorization".into(), "Bearer secret-token".into())));
        let body: serde_json::Value = serde_json::from_str(&r.body).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["content"], "hi");
    }
}

#[test]
fn persistent_server_errors_exhaust_retries() {
    let server = FakeServer::start(Box::new(|_, _| (503, "text/plain", "down".into())));
    let backend = client(&server.url, "GC_TEST_KEY_503");
    let err = backend.chat_complete(&ChatRequest::new("hi")).unwrap_err();
    assert!(matches!(err, BackendError::RetriesExhausted { attempts: 4, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 4);
}

#[test]
fn auth_failures_are_not_retried() {
    let server = FakeServer::start(Box::new(|_, _| (401, "application/json", "{}".into())));
    let backend = client(&server.url, "GC_TEST_KEY_401");
    let err = backend.chat_complete(&ChatRequest::new("hi")).unwrap_err();
    assert!(matches!(err, BackendError::Auth { status: 401, .. }), "{err:?}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn embeddings_are_batched_and_reordered_by_index() {
    let server = FakeServer::start(Box::new(|r, _| {
        let body: serde_json::Value = serde_json::from_str(&r.body).unwrap();
        let inputs = body["input"].as_array().unwrap();
        // answer in reverse order so the client must sort by index
        let data: Vec<_> = inputs
            .iter()
            .enumerate()
            .rev()
            .map(|(i, text)| {
                let n: f32 = text.as_str().unwrap().trim_start_matches("text ").parse().unwrap();
                serde_json::json!({"index": i, "embedding": [n, 1.0]})
            })
            .collect();
        (200, "application/json", serde_json::json!({"data": data}).to_string())
    }));
    let backend = client(&server.url, "GC_TEST_KEY_EMBED");
    let texts: Vec<String> = (0..1000).map(|i| format!("text {i}")).collect();
    let vectors = backend.embed_batch(&texts).unwrap();
    assert_eq!(vectors.len(), 1000);
    for (i, v) in vectors.iter().enumerate() {
        assert_eq!(v, &vec![i as f32, 1.0]);
    }
    let requests = server.requests();
    assert_eq!(requests.len(), 8);
    assert!(requests.iter().all(|r| r.path == "/v1/embeddings"));
    let sizes: Vec<usize> = requests
        .iter()
        .map(|r| serde_json::from_str::<serde_json::Value>(&r.body).unwrap()["input"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![128, 128, 128, 128, 128, 128, 128, 104]);
}

#[test]
fn inconsistent_embedding_dimensions_are_rejected() {
    let server = FakeServer::start(Box::new(|_, _| {
        (
            200,
            "application/json",
            r#"{"data":[{"index":0,"embedding":[1,2]},{"index":1,"embedding":[1,2,3]}]}"#.into(),
        )
    }));
    let backend = client(&server.url, "GC_TEST_KEY_DIM");
    let err = backend.embed_batch(&["a".into(), "b".into()]).unwrap_err();
    assert!(matches!(err, BackendError::DimensionMismatch { .. }), "{err:?}");
}

#[test]
fn missing_api_key_fails_before_any_request() {
    let server = FakeServer::start(Box::new(|_, _| (200, "application/json", completion("x"))));
    std::env::remove_var("GC_TEST_KEY_UNSET");
    let result = OpenAiCompatible::new(config(&server.url, "GC_TEST_KEY_UNSET"));
    assert!(matches!(result, Err(BackendError::Config(_))));
    std::thread::sleep(std::time::Duration::from_millis(50));
    assert!(server.requests().is_empty());
}

#[test]
fn page_fetcher_reports_status_and_content_type() {
    let server = FakeServer::start(Box::new(|r, _| match r.path.as_str() {
        "/page" => (200, "text/html; charset=utf-8", "<p>Hello</p>".into()),
        _ => (404, "text/plain", "missing".into()),
    }));
    let fetcher = HttpFetcher::default();
    let page = fetcher.fetch_page(&format!("{}/page", server.url)).unwrap();
    assert_eq!(page.status, 200);
    assert_eq!(page.content_type.as_deref(), Some("text/html; charset=utf-8"));
    assert_eq!(page.body, b"<p>Hello</p>");
    let missing = fetcher.fetch_page(&format!("{}/gone", server.url)).unwrap();
    assert_eq!(missing.status, 404);
    let get = &server.requests()[0];
    assert_eq!(get.method, "GET");
    assert!(get.headers.iter().any(|(k, v)| k == "user-agent" && v.starts_with("groundcheck/")));
}
