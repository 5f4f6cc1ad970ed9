//! Directory handshake with an external fine-model solver.
//!
//! For request `k` the driver writes `request_<k>/mesh.msh`, then
//! `request_<k>/request.json` (by rename, so its presence means the request
//! is complete). The responder writes `response.txt` and then the empty flag
//! file `done`. A field response holds one value per line in node order; a
//! rates response one value per outlet in marker order. Only simulations are
//! ever requested, never derivatives.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::msh::{read_msh, write_msh};
use crate::error::{Error, Result};
use crate::fem::space::{FeField, Family};
use crate::mesh::Mesh;
use crate::models::{ModelParams, ModelResponse};
use crate::par::Exec;

pub const POLL_INTERVAL: Duration = Duration::from_millis(100);

const MESH_FILE: &str = "mesh.msh";
const REQUEST_FILE: &str = "request.json";
const RESPONSE_FILE: &str = "response.txt";
const DONE_FILE: &str = "done";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub kind: String,
    pub outlets: Vec<i32>,
    pub params: ModelParams,
}

/// Driver side of the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalBackend {
    pub dir: PathBuf,
    pub timeout_s: f64,
}

impl ExternalBackend {
    pub fn new(dir: impl Into<PathBuf>, timeout_s: f64) -> Self {
        ExternalBackend { dir: dir.into(), timeout_s }
    }

    /// Posts one request and blocks until its response arrives.
    pub fn evaluate(&self, mesh: &Arc<Mesh>, params: &ModelParams) -> Result<ModelResponse> {
        std::fs::create_dir_all(&self.dir)?;
        let request_dir = next_request_dir(&self.dir);
        std::fs::create_dir(&request_dir)?;
        write_msh(request_dir.join(MESH_FILE), mesh)?;
        let request = Request { kind: params.kind().into(), outlets: params.outlets().to_vec(), params: params.clone() };
        let tmp = request_dir.join("request.json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(&request)?)?;
        std::fs::rename(&tmp, request_dir.join(REQUEST_FILE))?;

        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_s);
        while !request_dir.join(DONE_FILE).exists() {
            if Instant::now() >= deadline {
                return Err(Error::BackendTimeout { seconds: self.timeout_s, path: request_dir });
            }
            std::thread::sleep(POLL_INTERVAL);
        }
        let text = std::fs::read_to_string(request_dir.join(RESPONSE_FILE))?;
        parse_response(&text, mesh, &request)
    }
}

fn next_request_dir(dir: &Path) -> PathBuf {
    (0..).map(|k| dir.join(format!("request_{k}"))).find(|p| !p.exists()).expect("unbounded range")
}

fn parse_response(text: &str, mesh: &Arc<Mesh>, request: &Request) -> Result<ModelResponse> {
    let values = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(k, l)| l.trim().parse::<f64>().map_err(|_| Error::ProtocolError(format!("line {}: `{l}` is not a number", k + 1))))
        .collect::<Result<Vec<f64>>>()?;
    let expected = match request.kind.as_str() {
        "field" => mesh.n_nodes(),
        "rates" => request.outlets.len(),
        other => return Err(Error::ProtocolError(format!("unknown request kind `{other}`"))),
    };
    if values.len() != expected {
        return Err(Error::ProtocolError(format!("expected {expected} values, got {}", values.len())));
    }
    Ok(match request.kind.as_str() {
        "field" => ModelResponse::Field(FeField::new(Arc::clone(mesh), Family::P1, values)?),
        _ => ModelResponse::Rates(values),
    })
}

/// Response file contents; values in shortest round-trip form.
pub fn format_response(response: &ModelResponse) -> String {
    let values = match response {
        ModelResponse::Field(f) => f.values(),
        ModelResponse::Rates(r) => r.as_slice(),
    };
    values.iter().map(|v| format!("{v:?}\n")).collect()
}

/// Answers one complete request directory with the in-process solver.
pub fn serve_request(request_dir: &Path, exec: Exec) -> Result<()> {
    let text = std::fs::read_to_string(request_dir.join(REQUEST_FILE))?;
    let request: Request = serde_json::from_str(&text)?;
    if request.kind != request.params.kind() {
        return Err(Error::ProtocolError(format!("kind `{}` does not match the model", request.kind)));
    }
    let mesh = Arc::new(read_msh(request_dir.join(MESH_FILE))?);
    let response = request.params.respond(&mesh, exec)?;
    std::fs::write(request_dir.join(RESPONSE_FILE), format_response(&response))?;
    std::fs::write(request_dir.join(DONE_FILE), "")?;
    Ok(())
}

/// Pending request directories in index order.
pub fn pending_requests(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<(usize, PathBuf)> = Vec::new();
    if !dir.exists() {
        return Ok(Vec::new());
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let index = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("request_"))
            .and_then(|k| k.parse::<usize>().ok());
        if let Some(k) = index {
            if path.join(REQUEST_FILE).exists() && !path.join(DONE_FILE).exists() {
                found.push((k, path));
            }
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Responder loop: serves requests under `dir` until no new request has
/// appeared for `idle_timeout`. A request that fails is answered with an
/// empty response so the driver reports a protocol error instead of waiting.
pub fn serve(dir: &Path, idle_timeout: Duration, exec: Exec) -> Result<usize> {
    let mut served = 0;
    let mut last = Instant::now();
    loop {
        let pending = pending_requests(dir)?;
        if pending.is_empty() {
            if last.elapsed() >= idle_timeout {
                return Ok(served);
            }
            std::thread::sleep(POLL_INTERVAL);
            continue;
        }
        for request_dir in pending {
            if let Err(e) = serve_request(&request_dir, exec) {
                log::error!("request {} failed: {e}", request_dir.display());
                std::fs::write(request_dir.join(RESPONSE_FILE), "")?;
                std::fs::write(request_dir.join(DONE_FILE), "")?;
            }
            served += 1;
        }
        last = Instant::now();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::generate_disk_in_square;
    use crate::models::transmission::TransmissionParams;

    fn disk() -> Arc<Mesh> {
        Arc::new(generate_disk_in_square(0.2, 8).unwrap())
    }

    #[test]
    fn threaded_loopback_matches_in_process_solve() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().to_path_buf();
        let responder = std::thread::spawn(move || serve(&path, Duration::from_millis(1500), Exec::Sequential).unwrap());
        let mesh = disk();
        let params = ModelParams::Transmission(TransmissionParams::default());
        let backend = ExternalBackend::new(dir.path(), 30.0);
        let remote = backend.evaluate(&mesh, &params).unwrap();
        let local = params.respond(&mesh, Exec::Sequential).unwrap();
        match (remote, local) {
            (ModelResponse::Field(a), ModelResponse::Field(b)) => assert_eq!(a.values(), b.values()),
            _ => panic!("wrong kind"),
        }
        assert_eq!(responder.join().unwrap(), 1);
    }

    #[test]
    fn missing_responder_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ExternalBackend::new(dir.path(), 0.3);
        let params = ModelParams::Transmission(TransmissionParams::default());
        assert!(matches!(backend.evaluate(&disk(), &params), Err(Error::BackendTimeout { .. })));
    }

    #[test]
    fn wrong_line_count_is_a_protocol_error() {
        let mesh = disk();
        let request = Request { kind: "field".into(), outlets: vec![], params: ModelParams::Transmission(TransmissionParams::default()) };
        assert!(matches!(parse_response("1.0\n2.0\n", &mesh, &request), Err(Error::ProtocolError(_))));
        let rates = Request { kind: "rates".into(), outlets: vec![4, 5, 6], params: ModelParams::Flow(Default::default()) };
        assert!(matches!(parse_response("0.3\n0.3\n", &mesh, &rates), Err(Error::ProtocolError(_))));
        assert!(matches!(parse_response("0.3\nx\n0.3\n", &mesh, &rates), Err(Error::ProtocolError(_))));
        match parse_response("0.25\n0.5\n0.25\n", &mesh, &rates).unwrap() {
            ModelResponse::Rates(r) => assert_eq!(r, vec![0.25, 0.5, 0.25]),
            _ => panic!("wrong kind"),
        }
    }

    #[test]
    fn request_json_has_the_documented_fields() {
        let r = Request { kind: "rates".into(), outlets: vec![4, 5, 6], params: ModelParams::Flow(Default::default()) };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["kind"], "rates");
        assert_eq!(v["outlets"], serde_json::json!([4, 5, 6]));
        assert_eq!(v["params"]["model"], "flow");
        assert_eq!(v["params"]["reynolds"], 100.0);
    }
}
