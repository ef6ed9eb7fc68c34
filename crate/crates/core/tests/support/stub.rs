//! Minimal recording chat-completions server for tests.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};

pub type Handler = Box<dyn Fn(&Value, usize) -> (u16, String) + Send + Sync>;

pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Value>>>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl StubServer {
    pub fn start(handler: Handler) -> StubServer {
        let server = tiny_http::Server::http("127.0.0.1:0").expect("bind stub");
        let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let (reqs, stop_flag) = (Arc::clone(&requests), Arc::clone(&stop));
        let worker = thread::spawn(move || {
            while !stop_flag.load(Ordering::SeqCst) {
                let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(20)) else {
                    continue;
                };
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let value: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                let count = {
                    let mut r = reqs.lock().unwrap();
                    r.push(value.clone());
                    r.len()
                };
                let (status, text) = handler(&value, count);
                let header =
                    tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let resp = tiny_http::Response::from_string(text)
                    .with_status_code(status)
                    .with_header(header);
                let _ = req.respond(resp);
            }
        });
        StubServer {
            url,
            requests,
            stop,
            worker: Some(worker),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

/// A chat-completions response body with the given message contents.
pub fn completion(contents: &[String]) -> String {
    let choices: Vec<Value> = contents
        .iter()
        .enumerate()
        .map(|(i, c)| json!({"index": i, "message": {"role": "assistant", "content": c}, "finish_reason": "stop"}))
        .collect();
    json!({"id": "stub", "object": "chat.completion", "choices": choices}).to_string()
}

/// Replies with `n` copies of a fenced program, honoring the requested `n`.
pub fn fenced_handler(program: &'static str) -> Handler {
    Box::new(move |body, _| {
        let n = body["n"].as_u64().unwrap_or(1) as usize;
        let text = format!("Here you go.\n```python\n{program}\n```\n");
        (200, completion(&vec![text; n]))
    })
}
