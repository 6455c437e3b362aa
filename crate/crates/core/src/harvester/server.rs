use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use log::debug;

use super::transport::{FixtureTransport, Transport};
use super::Query;

/// Minimal local HTTP count endpoint backed by a [`FixtureTransport`].
///
/// Answers `GET /count?entity=..&keyword=..&year=..` with `{"count": n}`, or
/// 404 when the fixture has no such cell. Stops when dropped.
pub struct FixtureServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start(fixture: FixtureTransport) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&stop);
        let fixture = Arc::new(fixture);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let fixture = Arc::clone(&fixture);
                    std::thread::spawn(move || {
                        if let Err(e) = serve(stream, &fixture) {
                            debug!("fixture server connection error: {e}");
                        }
                    });
                }
            }
        });
        Ok(Self {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// URL template suitable for [`super::UrlTemplateTransport`].
    pub fn url_template(&self) -> String {
        format!(
            "http://{}/count?entity={{entity}}&keyword={{keyword}}&year={{year}}&affiliation={{affiliation}}",
            self.addr
        )
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, fixture: &FixtureTransport) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("");
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let params: HashMap<String, String> = url::form_urlencoded::parse(query.as_bytes()).into_owned().collect();
    let (status, body) = match (path, params.get("entity"), params.get("keyword"), params.get("year")) {
        ("/count", Some(e), Some(k), Some(y)) => match y.parse::<i32>() {
            Ok(year) => {
                let q = Query::new(k, e, params.get("affiliation").map_or("", String::as_str), year);
                match fixture.fetch(&q) {
                    Ok(n) => ("200 OK", format!("{{\"count\": {n}}}")),
                    Err(_) => ("404 Not Found", "{\"error\": \"no such cell\"}".to_string()),
                }
            }
            Err(_) => ("400 Bad Request", "{\"error\": \"bad year\"}".to_string()),
        },
        _ => ("400 Bad Request", "{\"error\": \"bad request\"}".to_string()),
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    out.flush()
}
