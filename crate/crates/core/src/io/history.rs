//! Per-iteration run history as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HEADER: [&str; 5] = ["iter", "cost", "sigma", "coarse_iters", "wall_s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub iter: usize,
    pub cost: f64,
    pub sigma: f64,
    pub coarse_iters: usize,
    pub wall_s: f64,
}

/// CSV text; floats in shortest round-trip form.
pub fn format_history_csv(records: &[HistoryRecord]) -> String {
    let mut s = HEADER.join(",");
    s.push('\n');
    for r in records {
        s.push_str(&format!("{},{:?},{:?},{},{:?}\n", r.iter, r.cost, r.sigma, r.coarse_iters, r.wall_s));
    }
    s
}

pub fn write_history_csv(path: impl AsRef<Path>, records: &[HistoryRecord]) -> Result<()> {
    std::fs::write(path, format_history_csv(records))?;
    Ok(())
}

pub fn parse_history_csv(text: &str, origin: &str) -> Result<Vec<HistoryRecord>> {
    let mut lines = text.lines().enumerate();
    let err = |line: usize, message: String| Error::ParseError { path: origin.into(), line, message };
    match lines.next() {
        Some((_, h)) if h == HEADER.join(",") => {}
        _ => return Err(err(1, "missing history header".into())),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != HEADER.len() {
                return Err(err(k + 1, format!("expected {} fields", HEADER.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|_| err(k + 1, format!("bad integer `{s}`")));
            let real = |s: &str| s.parse::<f64>().map_err(|_| err(k + 1, format!("bad number `{s}`")));
            Ok(HistoryRecord { iter: int(f[0])?, cost: real(f[1])?, sigma: real(f[2])?, coarse_iters: int(f[3])?, wall_s: real(f[4])? })
        })
        .collect()
}

pub fn read_history_csv(path: impl AsRef<Path>) -> Result<Vec<HistoryRecord>> {
    let path = path.as_ref();
    parse_history_csv(&std::fs::read_to_string(path)?, &path.display().to_string())
}
