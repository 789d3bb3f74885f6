//! Output plumbing: CSV emission with a config-hash trailer, field files.

use phasewave::{Error, Field, Result};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

/// Hex SHA-256 of the effective config (post-override serialization), so a
/// report names exactly the experiment that produced it.
pub fn config_hash(effective_json: &str) -> String {
    let mut h = Sha256::new();
    h.update(effective_json.as_bytes());
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub struct RunCtx {
    pub out_dir: PathBuf,
    pub hash: String,
}

impl RunCtx {
    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Header row, data rows, then `# config_hash=<hex>`. Floats are written
    /// with the shortest round-trip formatting, so identical numbers give
    /// identical bytes.
    pub fn csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<()> {
        let cols = header.split(',').count();
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            if row.len() != cols {
                return Err(Error::Format(format!(
                    "csv {name}: row has {} cells under a {cols}-column header",
                    row.len()
                )));
            }
            text.push_str(&row.join(","));
            text.push('\n');
        }
        text.push_str("# config_hash=");
        text.push_str(&self.hash);
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn field(&self, name: &str, f: &Field) -> Result<()> {
        phasewave::io::write_field(self.path(name), f)
    }
}

pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e16) {
        // Display never switches to exponent form; these would print as
        // walls of zeros.
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn fmt_row(vals: &[f64]) -> Vec<String> {
    vals.iter().map(|&v| fmt(v)).collect()
}
