use std::time::Instant;

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;

/// What every command prints: the invocation, the resolved configuration,
/// result rows, a summary and the wall time.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub config: Value,
    pub rows: Vec<Value>,
    pub summary: Value,
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(started: Instant, config: impl Serialize, rows: Vec<Value>, summary: impl Serialize) -> Result<Self> {
        Ok(RunReport {
            command: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            rows,
            summary: serde_json::to_value(summary)?,
            wall_time_s: started.elapsed().as_secs_f64(),
        })
    }

    pub fn print_json(&self) -> Result<()> {
        println!("{}", serde_json::to_string_pretty(self)?);
        Ok(())
    }
}

pub fn to_rows<T: Serialize>(items: &[T]) -> Result<Vec<Value>> {
    items.iter().map(|r| Ok(serde_json::to_value(r)?)).collect()
}

/// Index of the largest logit, ties to the lower index.
pub fn argmax(logits: &[f64]) -> usize {
    top_k(logits, 1).first().map_or(0, |&(i, _)| i)
}

pub fn top_k(logits: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, logits[i])).collect()
}

pub fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{:.2}%", 100.0 * v))
}
