//! Versioned CSV tables.
//!
//! Line 1 is `# schema: bimax-<kind>/v1`, line 2 is `# config: <json>` with
//! the fully resolved config, line 3 is `# noise: <sampling model>`, then a
//! header and one row per record.

use crate::config::ExperimentConfig;
use crate::CliError;

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Empty for `None`.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub struct Table {
    preamble: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &str, cfg: &ExperimentConfig, noise: &str, header: &[&str]) -> Self {
        let config = serde_json::to_string(cfg).expect("config serializes");
        Self {
            preamble: format!("# schema: bimax-{kind}/v1\n# config: {config}\n# noise: {noise}\n"),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn finish(self) -> Result<String, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let body = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        let body = String::from_utf8(body).map_err(|e| CliError::Output(e.to_string()))?;
        Ok(self.preamble + &body)
    }
}

/// Splits an artifact into its comment preamble and the CSV body.
pub fn split_preamble(contents: &str) -> (Vec<&str>, &str) {
    let mut comments = Vec::new();
    let mut rest = contents;
    while let Some(line) = rest.strip_prefix('#') {
        let end = line.find('\n').map_or(line.len(), |i| i + 1);
        comments.push(line[..end].trim());
        rest = &line[end..];
    }
    (comments, rest)
}
