//! Socket front end for the store: a raw line-oriented ingest listener (the
//! modem's data channel speaks this) and a minimal HTTP/1.1 GET server for
//! queries and the status page.
//!
//! Built directly on `std::net` with one thread per connection. Accept loops
//! run nonblocking and poll a shared stop flag, so [`GatewayServer::stop`]
//! shuts the whole thing down within a few hundred milliseconds.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::page::render_status_page;
use super::store::GatewayStore;
use super::wire::encode_frame;

/// Per-connection read timeout; doubles as the stop-flag poll interval.
const POLL_INTERVAL: Duration = Duration::from_millis(200);
/// Upper bound on an HTTP request head.
const MAX_REQUEST_HEAD: usize = 8192;

pub struct GatewayServer {
    store: Arc<Mutex<GatewayStore>>,
    stop: Arc<AtomicBool>,
    accept_threads: Vec<JoinHandle<()>>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    ingest_addr: SocketAddr,
    http_addr: SocketAddr,
}

impl GatewayServer {
    /// Bind both listeners and start serving. Pass port 0 to let the OS pick;
    /// the bound addresses are available via [`ingest_addr`](Self::ingest_addr)
    /// and [`http_addr`](Self::http_addr).
    pub fn start(store: GatewayStore, ingest: &str, http: &str) -> io::Result<GatewayServer> {
        let ingest_listener = TcpListener::bind(ingest)?;
        let http_listener = TcpListener::bind(http)?;
        let ingest_addr = ingest_listener.local_addr()?;
        let http_addr = http_listener.local_addr()?;
        ingest_listener.set_nonblocking(true)?;
        http_listener.set_nonblocking(true)?;

        let store = Arc::new(Mutex::new(store));
        let stop = Arc::new(AtomicBool::new(false));
        let workers: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));

        let accept_threads = vec![
            spawn_accept_loop(
                ingest_listener,
                store.clone(),
                stop.clone(),
                workers.clone(),
                serve_ingest,
            ),
            spawn_accept_loop(
                http_listener,
                store.clone(),
                stop.clone(),
                workers.clone(),
                serve_http,
            ),
        ];

        Ok(GatewayServer {
            store,
            stop,
            accept_threads,
            workers,
            ingest_addr,
            http_addr,
        })
    }

    /// Convenience for tests and the in-process harness: ephemeral ports on
    /// the loopback interface.
    pub fn start_local(store: GatewayStore) -> io::Result<GatewayServer> {
        GatewayServer::start(store, "127.0.0.1:0", "127.0.0.1:0")
    }

    pub fn ingest_addr(&self) -> SocketAddr {
        self.ingest_addr
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    /// Shared handle to the store, for inspection while the server runs.
    pub fn store(&self) -> Arc<Mutex<GatewayStore>> {
        self.store.clone()
    }

    /// Signal all loops to finish and join them.
    pub fn stop(mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for handle in self.accept_threads.drain(..) {
            let _ = handle.join();
        }
        let workers = std::mem::take(&mut *self.workers.lock().unwrap());
        for handle in workers {
            let _ = handle.join();
        }
    }
}

fn spawn_accept_loop(
    listener: TcpListener,
    store: Arc<Mutex<GatewayStore>>,
    stop: Arc<AtomicBool>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
    serve: fn(TcpStream, Arc<Mutex<GatewayStore>>, Arc<AtomicBool>),
) -> JoinHandle<()> {
    thread::spawn(move || loop {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        match listener.accept() {
            Ok((stream, _)) => {
                if stream.set_nonblocking(false).is_err()
                    || stream.set_read_timeout(Some(POLL_INTERVAL)).is_err()
                {
                    continue;
                }
                let store = store.clone();
                let stop_flag = stop.clone();
                let handle = thread::spawn(move || serve(stream, store, stop_flag));
                let mut workers = workers.lock().unwrap();
                workers.retain(|h| !h.is_finished());
                workers.push(handle);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(_) => break,
        }
    })
}

/// One frame per line in, one `ACK`/`ERR` line out. A bad frame is reported
/// and skipped; only EOF, a write failure, or shutdown ends the connection.
fn serve_ingest(stream: TcpStream, store: Arc<Mutex<GatewayStore>>, stop: Arc<AtomicBool>) {
    let Ok(read_half) = stream.try_clone() else {
        return;
    };
    let mut reader = BufReader::new(read_half);
    let mut writer = stream;
    let mut line: Vec<u8> = Vec::new();
    loop {
        match reader.read_until(b'\n', &mut line) {
            Ok(0) => break,
            Ok(_) => {
                if line.last() != Some(&b'\n') {
                    // Unterminated tail at EOF: not a frame.
                    break;
                }
                let reply = store.lock().unwrap().ingest_reply(&line);
                line.clear();
                if writer.write_all(&reply).is_err() {
                    break;
                }
            }
            Err(e) if would_block(&e) => {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
            }
            Err(_) => break,
        }
    }
}

fn would_block(e: &io::Error) -> bool {
    matches!(
        e.kind(),
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
    )
}

/// Serve exactly one GET request, then close (`Connection: close`).
fn serve_http(mut stream: TcpStream, store: Arc<Mutex<GatewayStore>>, stop: Arc<AtomicBool>) {
    let mut head = Vec::new();
    let mut chunk = [0u8; 1024];
    let complete = loop {
        if head.windows(4).any(|w| w == b"\r\n\r\n") {
            break true;
        }
        if head.len() > MAX_REQUEST_HEAD {
            break false;
        }
        match stream.read(&mut chunk) {
            Ok(0) => break false,
            Ok(n) => head.extend_from_slice(&chunk[..n]),
            Err(e) if would_block(&e) => {
                if stop.load(Ordering::Relaxed) {
                    return;
                }
            }
            Err(_) => return,
        }
    };
    if !complete {
        let _ = stream.write_all(&http_response(
            400,
            "Bad Request",
            "text/plain",
            b"bad request\n",
        ));
        return;
    }

    let request_line = head
        .split(|&b| b == b'\r')
        .next()
        .map(|l| String::from_utf8_lossy(l).into_owned())
        .unwrap_or_default();
    let mut parts = request_line.split(' ');
    let method = parts.next().unwrap_or("");
    let target = parts.next().unwrap_or("");

    let response = if method != "GET" {
        http_response(405, "Method Not Allowed", "text/plain", b"GET only\n")
    } else {
        route(target, &store)
    };
    let _ = stream.write_all(&response);
}

fn route(target: &str, store: &Arc<Mutex<GatewayStore>>) -> Vec<u8> {
    let (path, query) = match target.split_once('?') {
        Some((p, q)) => (p, q),
        None => (target, ""),
    };
    let store = store.lock().unwrap();
    match path {
        "/" => http_response(
            200,
            "OK",
            "text/html; charset=utf-8",
            render_status_page(&store).as_bytes(),
        ),
        "/devices" => {
            let body = serde_json::to_vec(&store.device_ids()).expect("device list serializes");
            http_response(200, "OK", "application/json", &body)
        }
        _ => {
            if let Some(id) = path.strip_prefix("/latest/") {
                match store.query_latest(id) {
                    Some(record) => {
                        http_response(200, "OK", "application/json", &encode_frame(record))
                    }
                    None => http_response(404, "Not Found", "text/plain", b"no such device\n"),
                }
            } else if let Some(id) = path.strip_prefix("/alarms/") {
                route_alarms(&store, id, query)
            } else {
                http_response(404, "Not Found", "text/plain", b"no such path\n")
            }
        }
    }
}

fn route_alarms(store: &GatewayStore, id: &str, query: &str) -> Vec<u8> {
    let mut from_ms = 0u64;
    let mut to_ms = u64::MAX;
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (key, value) = match pair.split_once('=') {
            Some(kv) => kv,
            None => (pair, ""),
        };
        let parsed = match value.parse::<u64>() {
            Ok(v) => v,
            Err(_) if value.is_empty() => continue, // "from=&to=" keeps defaults
            Err(_) => {
                return http_response(400, "Bad Request", "text/plain", b"bad query value\n");
            }
        };
        match key {
            "from" => from_ms = parsed,
            "to" => to_ms = parsed,
            _ => return http_response(400, "Bad Request", "text/plain", b"unknown query key\n"),
        }
    }
    match store.query_alarm_episodes(id, from_ms, to_ms) {
        Ok(episodes) => {
            let body = serde_json::to_vec(&episodes).expect("episodes serialize");
            http_response(200, "OK", "application/json", &body)
        }
        Err(e) => http_response(
            400,
            "Bad Request",
            "text/plain",
            format!("{e}\n").as_bytes(),
        ),
    }
}

fn http_response(status: u16, reason: &str, content_type: &str, body: &[u8]) -> Vec<u8> {
    let mut out = format!(
        "HTTP/1.1 {status} {reason}\r\nContent-Type: {content_type}\r\n\
         Content-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )
    .into_bytes();
    out.extend_from_slice(body);
    out
}
