//! Offline stand-ins for the vision endpoint: key-driven selectors and a
//! scripted HTTP server speaking just enough HTTP/1.1 for the client.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{penetration_at, Entrant, Result, Selector, Verdict};
use crate::hoiopt::HoiScene;
use crate::{sha256_hex, Vec3};

/// Picks the group member with the largest key; the first one wins ties.
pub struct KeySelector<F> {
    key: F,
}

impl<F: FnMut(&Entrant) -> f64> KeySelector<F> {
    pub fn new(key: F) -> Self {
        Self { key }
    }
}

impl<F: FnMut(&Entrant) -> f64> Selector for KeySelector<F> {
    fn select(&mut self, group: &[Entrant]) -> Result<Verdict> {
        let keys: Vec<f64> = group.iter().map(&mut self.key).collect();
        let mut best = 0;
        for (i, k) in keys.iter().enumerate() {
            if k.total_cmp(&keys[best]).is_gt() {
                best = i;
            }
        }
        Ok(Verdict { choice: best + 1, raw: format!("{{\"selection\": {}}}", best + 1), log: Vec::new() })
    }
}

/// Prefers the candidate nearest to `base`.
pub fn closest_to(base: Vec3) -> KeySelector<impl FnMut(&Entrant) -> f64> {
    KeySelector::new(move |e: &Entrant| -(e.translation - base).norm())
}

/// Prefers the candidate whose translation gives the lowest penetration loss.
pub fn penetration_greedy(scene: &HoiScene) -> KeySelector<impl FnMut(&Entrant) -> f64 + '_> {
    KeySelector::new(move |e: &Entrant| -penetration_at(scene, e.translation).unwrap_or(f64::INFINITY))
}

/// Plays back a fixed list of 1-based choices.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSelector {
    pub choices: Vec<usize>,
    pub next: usize,
}

impl Selector for ScriptedSelector {
    fn select(&mut self, _: &[Entrant]) -> Result<Verdict> {
        let c = *self
            .choices
            .get(self.next)
            .ok_or_else(|| super::RefineError::Protocol("script exhausted".into()))?;
        self.next += 1;
        Ok(Verdict { choice: c, raw: c.to_string(), log: Vec::new() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockReply {
    /// 200 with a chat completion whose message content is `text`.
    Content { text: String },
    Status { code: u16, body: String },
    /// Close the connection without answering.
    Drop,
}

impl MockReply {
    pub fn content(text: impl Into<String>) -> Self {
        Self::Content { text: text.into() }
    }
}

/// Replies keyed by the sha256 hex of the request body. Each key (and the
/// fallback) walks through its list and then repeats the last entry.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub routes: BTreeMap<String, Vec<MockReply>>,
    #[serde(default)]
    pub fallback: Vec<MockReply>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body_sha256: String,
    pub body: String,
}

#[derive(Default)]
struct ServerState {
    script: MockScript,
    cursors: BTreeMap<Option<String>, usize>,
    requests: Vec<RecordedRequest>,
}

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    state: Arc<Mutex<ServerState>>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port and serves requests one at a time.
    pub fn start(script: MockScript) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let state = Arc::new(Mutex::new(ServerState { script, ..Default::default() }));
        let handle = {
            let (stop, state) = (stop.clone(), state.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(s) = stream {
                        if let Err(e) = serve(s, &state) {
                            log::debug!("mock server: {e}");
                        }
                    }
                }
            })
        };
        Ok(Self { addr, stop, state, handle: Some(handle) })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap().requests.clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, state: &Mutex<ServerState>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_owned();
    let path = parts.next().unwrap_or_default().to_owned();
    let (mut length, mut authorization) = (0usize, None);
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_owned()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let hash = sha256_hex(&body);
    let reply = {
        let mut st = state.lock().unwrap();
        let key = st.script.routes.contains_key(&hash).then(|| hash.clone());
        let list = match &key {
            Some(k) => st.script.routes[k].clone(),
            None => st.script.fallback.clone(),
        };
        let cursor = st.cursors.entry(key).or_insert(0);
        let reply = list.get((*cursor).min(list.len().saturating_sub(1))).cloned();
        *cursor += 1;
        st.requests.push(RecordedRequest {
            method,
            path,
            authorization,
            body_sha256: hash,
            body: String::from_utf8_lossy(&body).into_owned(),
        });
        reply
    };
    let (code, text) = match reply {
        None => (404, "no scripted reply".to_owned()),
        Some(MockReply::Drop) => return Ok(()),
        Some(MockReply::Status { code, body }) => (code, body),
        Some(MockReply::Content { text }) => (
            200,
            json!({
                "id": "mock",
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]
            })
            .to_string(),
        ),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {code} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    out.flush()
}
