//! Minimal HTTP/1.1 stub for chat-completions requests.

#![allow(dead_code)]

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

#[derive(Default)]
struct Log {
    bodies: Vec<Value>,
    headers: Vec<HashMap<String, String>>,
}

pub struct StubServer {
    addr: std::net::SocketAddr,
    log: Arc<Mutex<Log>>,
}

impl StubServer {
    /// Serves every connection on its own thread; `handler` returns status and body.
    pub fn start(handler: impl Fn(&Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let log = Arc::new(Mutex::new(Log::default()));
        let handler: Arc<Handler> = Arc::new(handler);
        let shared = log.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { break };
                let (handler, log) = (handler.clone(), shared.clone());
                thread::spawn(move || serve(stream, &*handler, &log));
            }
        });
        Self { addr, log }
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.log.lock().unwrap().bodies.len()
    }

    pub fn requests(&self) -> Vec<Value> {
        self.log.lock().unwrap().bodies.clone()
    }

    pub fn headers(&self) -> Vec<HashMap<String, String>> {
        self.log.lock().unwrap().headers.clone()
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Log>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut headers = HashMap::new();
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.insert(k.trim().to_lowercase(), v.trim().to_string());
        }
    }
    let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    {
        let mut log = log.lock().unwrap();
        log.bodies.push(body.clone());
        log.headers.push(headers);
    }
    let (status, reply) = handler(&body);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} Stub\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
}

/// Reply whose first token carries `top` as its top log-probabilities.
pub fn logprob_reply(top: &[(&str, f64)]) -> String {
    let entries: Vec<Value> = top.iter().map(|(t, lp)| json!({"token": t, "logprob": lp})).collect();
    json!({
        "choices": [{
            "message": {"role": "assistant", "content": top[0].0},
            "logprobs": {"content": [{
                "token": top[0].0,
                "logprob": top[0].1,
                "top_logprobs": entries,
            }]}
        }]
    })
    .to_string()
}

pub fn chat_reply(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}
