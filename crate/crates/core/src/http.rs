//! Minimal blocking HTTP abstraction so fetchers can be driven by mocks.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use crate::error::{Error, Result};

pub const TIMEOUT_ENV: &str = "GEOSEG_HTTP_TIMEOUT_S";
pub const DEFAULT_TIMEOUT_S: u64 = 30;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Get,
    /// `application/x-www-form-urlencoded` body.
    PostForm(Vec<(String, String)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub method: Method,
    pub headers: Vec<(String, String)>,
}

impl HttpRequest {
    pub fn get(url: &str) -> Self {
        HttpRequest {
            url: url.to_string(),
            method: Method::Get,
            headers: Vec::new(),
        }
    }

    pub fn post_form(url: &str, form: &[(&str, &str)]) -> Self {
        HttpRequest {
            url: url.to_string(),
            method: Method::PostForm(form.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()),
            headers: Vec::new(),
        }
    }

    pub fn header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: Option<String>,
    pub retry_after_s: Option<u64>,
    pub body: Vec<u8>,
}

pub trait HttpTransport: Send + Sync {
    /// Transport-level failures are errors; any HTTP status is a response.
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse>;
}

pub fn timeout_from_env() -> Duration {
    let secs = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_TIMEOUT_S);
    Duration::from_secs(secs)
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("geoseg/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| Error::Config(format!("HTTP client: {e}")))?;
        Ok(ReqwestTransport { client })
    }

    pub fn from_env() -> Result<Self> {
        Self::new(timeout_from_env())
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse> {
        let mut builder = match &request.method {
            Method::Get => self.client.get(&request.url),
            Method::PostForm(form) => self.client.post(&request.url).form(form),
        };
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let fail = |e: reqwest::Error| Error::Http {
            url: request.url.clone(),
            reason: e.to_string(),
        };
        let resp = builder.send().map_err(fail)?;
        let header = |name: &str| {
            resp.headers()
                .get(name)
                .and_then(|v| v.to_str().ok())
                .map(str::to_string)
        };
        let content_type = header("content-type");
        let retry_after_s = header("retry-after").and_then(|v| v.trim().parse().ok());
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(fail)?.to_vec();
        Ok(HttpResponse {
            status,
            content_type,
            retry_after_s,
            body,
        })
    }
}

/// Wraps a transport and counts the requests passed through it.
pub struct CountingTransport<T> {
    pub inner: T,
    count: AtomicUsize,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport {
            inner,
            count: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

impl<T: HttpTransport> HttpTransport for CountingTransport<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}

/// Write `bytes` to `path` through a temporary file and rename, so readers
/// never observe a partial file.
pub(crate) fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    static SEQ: AtomicUsize = AtomicUsize::new(0);
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("part"),
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
