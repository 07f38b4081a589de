//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use image::{Rgb, RgbImage};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn white(w: u32, h: u32) -> RgbImage {
    RgbImage::from_pixel(w, h, Rgb([255, 255, 255]))
}

pub const VALID: &str = "```latex\n\\begin{tikzpicture}\n\\node (a) at (0,0) {A};\n\\node (b) at (2,0) {B};\n\\draw[->] (a) -- (b);\n\\end{tikzpicture}\n```";
pub const INVALID: &str = "```latex\n\\begin{tikzpicture}\n\\node (a) at (0,0) {A}\n\\end{tikzpicture}\n```";

pub struct Request {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl Request {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Minimal HTTP/1.1 server answering each connection with `handler`.
pub struct MockServer {
    pub url: String,
    hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&Request) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handler = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let counter = counter.clone();
                let handler = handler.clone();
                thread::spawn(move || {
                    let Some(req) = read_request(&mut stream) else { return };
                    counter.fetch_add(1, Ordering::SeqCst);
                    let (status, body) = handler(&req);
                    let resp = format!(
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    let _ = stream.write_all(resp.as_bytes());
                });
            }
        });
        MockServer { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<Request> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_string(), v.trim().to_string()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request {
        method,
        path,
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

/// A loopback address nothing listens on.
pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    drop(l);
    url
}

/// A random but well-formed diagram: `n` nodes with optional styles and a
/// few edges, from a seeded generator.
pub fn random_diagram(rng: &mut impl rand::Rng) -> String {
    let styles = ["", "[draw]", "[circle, draw]", "[rectangle, fill=blue!20]", "[draw, rounded corners]"];
    let labels = ["Start", "End", "Input", "Check", "Loop", "Out", "x", "y"];
    let n = rng.random_range(1..7);
    let mut s = String::from("\\begin{tikzpicture}\n");
    for i in 0..n {
        s.push_str(&format!(
            "\\node{} (n{i}) at ({},{}) {{{}}};\n",
            styles[rng.random_range(0..styles.len())],
            rng.random_range(0..5),
            rng.random_range(0..4),
            labels[rng.random_range(0..labels.len())]
        ));
    }
    for _ in 0..rng.random_range(0..n + 2) {
        let arrow = if rng.random_bool(0.5) { "[->]" } else { "" };
        s.push_str(&format!(
            "\\draw{arrow} (n{}) -- (n{});\n",
            rng.random_range(0..n),
            rng.random_range(0..n)
        ));
    }
    s.push_str("\\end{tikzpicture}\n");
    s
}

/// Levenshtein distance by the textbook full-table recurrence.
pub fn naive_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut impl rand::Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn gaussian_rows(rng: &mut impl rand::Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| normal(rng)).collect()).collect()
}

/// Random symmetric positive definite matrix `QQᵀ + εI`.
pub fn random_spd(rng: &mut impl rand::Rng, d: usize) -> nalgebra::DMatrix<f64> {
    let q = nalgebra::DMatrix::from_fn(d, d, |_, _| normal(rng));
    &q * q.transpose() + nalgebra::DMatrix::identity(d, d) * 1e-3
}

/// Backend replying from a fixed sequence, repeating the last entry.
/// Used where a reply must change between otherwise identical requests.
pub struct Sequence {
    name: String,
    replies: std::sync::Mutex<std::collections::VecDeque<String>>,
    calls: AtomicUsize,
}

impl Sequence {
    pub fn new(name: &str, replies: &[&str]) -> Self {
        assert!(!replies.is_empty());
        Sequence {
            name: name.into(),
            replies: std::sync::Mutex::new(replies.iter().map(|s| s.to_string()).collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl tikzbench::agent::ChatBackend for Sequence {
    fn name(&self) -> &str {
        &self.name
    }

    fn capabilities(&self) -> tikzbench::agent::Capabilities {
        tikzbench::agent::Capabilities { vision: true }
    }

    fn complete(&self, _: &tikzbench::agent::ChatRequest) -> Result<String, tikzbench::agent::BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut q = self.replies.lock().unwrap();
        Ok(if q.len() > 1 { q.pop_front().unwrap() } else { q[0].clone() })
    }
}

pub const ALIGNED: &str = r#"{"aligned": true, "rationale": "matches", "blame": null}"#;
pub const BLAME_GEN: &str = r#"{"aligned": false, "rationale": "missing arrow from A to B", "blame": "SketchToCode"}"#;
pub const BLAME_EDIT: &str = r#"{"aligned": false, "rationale": "label not changed", "blame": "EditingCode"}"#;

pub fn fast_tools(dir: &Path) -> tikzbench::orchestrator::Toolchain {
    let mut t = tikzbench::orchestrator::Toolchain::new(dir);
    t.compiler.mode = tikzbench::verify::CompilerMode::Fast;
    t
}

/// Every file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn corpus() -> PathBuf {
    fixtures().join("corpus")
}

fn images_in(body: &str) -> usize {
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    v["images"].as_array().map_or(0, Vec::len)
}

/// Deterministic fake of the feature service.
pub fn fake_sidecar(req: &Request) -> (u16, String) {
    match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/health") => (
            200,
            serde_json::json!({"status": "ok", "models": ["inception_pool3", "clip_image", "lpips"], "versions": {"lpips": "alex-0.1"}})
                .to_string(),
        ),
        ("POST", "/features") => {
            let v: serde_json::Value = serde_json::from_str(&req.body).unwrap();
            let dim = if v["model"] == "inception_pool3" { tikzbench::metrics::image::INCEPTION_POOL3_DIM } else { 8 };
            let n = images_in(&req.body);
            // vector depends only on the image bytes, so repeated calls agree
            let vectors: Vec<Vec<f64>> = v["images"]
                .as_array()
                .unwrap()
                .iter()
                .map(|img| {
                    let s = img.as_str().unwrap();
                    (0..dim).map(|i| ((s.len() + i) % 7) as f64 / 7.0).collect()
                })
                .collect();
            assert_eq!(vectors.len(), n);
            (200, serde_json::json!({"dim": dim, "vectors": vectors, "model_version": "fake-1"}).to_string())
        }
        ("POST", "/logits") => {
            let n = images_in(&req.body);
            let logits: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, 0.0, 1.0]).collect();
            (200, serde_json::json!({"logits": logits, "model_version": "fake-1"}).to_string())
        }
        ("POST", "/lpips") => {
            let v: serde_json::Value = serde_json::from_str(&req.body).unwrap();
            let value = if v["a"] == v["b"] { 0.0 } else { 0.25 };
            (200, serde_json::json!({"value": value, "model_version": "alex-0.1"}).to_string())
        }
        _ => (404, serde_json::json!({"error": "no such endpoint"}).to_string()),
    }
}

/// Reference answer shared by every record of the eval fixture.
pub const ANSWER: &str = "\\begin{tikzpicture}\n\\node (a) at (0,0) {A};\n\\node (b) at (2,0) {B};\n\\draw[->] (a) -- (b);\n\\end{tikzpicture}";

/// Four S2C test records named `sample-1` .. `sample-4`.
pub fn write_eval_set(dir: &std::path::Path) {
    std::fs::create_dir_all(dir.join("images")).unwrap();
    let mut lines = String::new();
    for i in 1..=4 {
        let mut img = image::RgbImage::from_pixel(80, 60, image::Rgb([255, 255, 255]));
        for x in 10..(20 + 10 * i) {
            img.put_pixel(x, 30, image::Rgb([0, 0, 0]));
        }
        img.save(dir.join(format!("images/sample-{i}.png"))).unwrap();
        let r = tikzbench::dataset::QueryRecord {
            id: format!("sample-{i}-s2c"),
            kind: tikzbench::dataset::QueryKind::S2C,
            query: format!("Draw diagram sample-{i} as TikZ."),
            image_path: Some(format!("images/sample-{i}.png")),
            answer: ANSWER.into(),
            category: tikzbench::dataset::DiagramCategory::Flowchart,
            provenance: format!("sample-{i}"),
            inspection: tikzbench::dataset::Inspection::Unreviewed,
        };
        lines.push_str(&serde_json::to_string(&r).unwrap());
        lines.push('\n');
    }
    std::fs::write(dir.join("test_s2c.jsonl"), lines).unwrap();
}
