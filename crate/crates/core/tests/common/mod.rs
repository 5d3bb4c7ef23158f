//! Minimal HTTP/1.1 mock of the inpainting service.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use defurnish::image::{decode_png_rgb, encode_png, Image};

/// Color of the canned response image.
pub const CANNED: [u8; 3] = [90, 140, 60];

#[derive(Debug, Clone)]
pub enum Behavior {
    /// Solid `CANNED` image with the request's dimensions.
    Canned,
    /// First `n` requests answer `status`, later ones are canned.
    FailFirst { n: usize, status: u16 },
    /// Sleep before answering.
    Delay(Duration),
    /// Image one column wider than requested.
    WrongSize,
    /// 200 with an `{error}` body.
    ErrorBody(String),
    Status(u16),
}

#[derive(Default)]
struct State {
    requests: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    last_body: Mutex<Option<serde_json::Value>>,
    stop: AtomicBool,
}

pub struct MockServer {
    pub url: String,
    state: Arc<State>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let state = Arc::new(State::default());
        let st = state.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                if st.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let st = st.clone();
                let behavior = behavior.clone();
                std::thread::spawn(move || handle(stream, &behavior, &st));
            }
        });
        Self { url, state }
    }

    pub fn requests(&self) -> usize {
        self.state.requests.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn last_body(&self) -> Option<serde_json::Value> {
        self.state.last_body.lock().unwrap().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.state.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.url.trim_start_matches("http://"));
    }
}

fn respond(stream: &mut TcpStream, status: u16, body: &str) {
    let head = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(body.as_bytes());
    let _ = stream.flush();
}

fn handle(mut stream: TcpStream, behavior: &Behavior, st: &State) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() || request_line.is_empty() {
        return;
    }
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }

    if request_line.starts_with("GET /v1/health") {
        respond(&mut stream, 200, "{\"status\":\"ok\"}");
        return;
    }
    if !request_line.starts_with("POST /v1/inpaint") {
        respond(&mut stream, 404, "{\"error\":\"not found\"}");
        return;
    }

    let n = st.requests.fetch_add(1, Ordering::SeqCst);
    let now = st.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    st.max_in_flight.fetch_max(now, Ordering::SeqCst);

    let json: serde_json::Value = serde_json::from_slice(&body).unwrap_or_default();
    *st.last_body.lock().unwrap() = Some(json.clone());
    let dims = json["image_png_b64"]
        .as_str()
        .and_then(|s| B64.decode(s).ok())
        .and_then(|b| decode_png_rgb(&b).ok())
        .map(|img| (img.width, img.height));
    let canned = |extra: usize| {
        let (w, h) = dims.unwrap_or((8, 4));
        let mut img = Image::new(w + extra, h, 3, 0u8);
        for px in img.data.chunks_mut(3) {
            px.copy_from_slice(&CANNED);
        }
        format!("{{\"image_png_b64\":\"{}\"}}", B64.encode(encode_png(&img).unwrap()))
    };

    match behavior {
        Behavior::Canned => respond(&mut stream, 200, &canned(0)),
        Behavior::FailFirst { n: k, status } if n < *k => {
            respond(&mut stream, *status, "{\"error\":\"temporarily overloaded\"}")
        }
        Behavior::FailFirst { .. } => respond(&mut stream, 200, &canned(0)),
        Behavior::Delay(d) => {
            std::thread::sleep(*d);
            respond(&mut stream, 200, &canned(0));
        }
        Behavior::WrongSize => respond(&mut stream, 200, &canned(1)),
        Behavior::ErrorBody(m) => respond(&mut stream, 200, &format!("{{\"error\":{}}}", serde_json::Value::from(m.as_str()))),
        Behavior::Status(s) => respond(&mut stream, *s, "{\"error\":\"nope\"}"),
    }
    st.in_flight.fetch_sub(1, Ordering::SeqCst);
}
