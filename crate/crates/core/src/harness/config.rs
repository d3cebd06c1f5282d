//! Plain-text `key=value` configuration files.

use crate::error::{invalid, Result};

/// Parses one `key=value` pair per line. Blank lines and lines starting with
/// `#` are skipped; keys and values are trimmed.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, line)| {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("config line {}: expected key=value, got `{}`", i + 1, line.trim())))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(invalid(format!("config line {}: empty key", i + 1)));
            }
            Ok((key.to_string(), value.trim().to_string()))
        })
        .collect()
}

/// The pairs as long command-line flags, `key` becoming `--key`.
pub fn config_to_args(pairs: &[(String, String)]) -> Vec<String> {
    pairs
        .iter()
        .flat_map(|(k, v)| [format!("--{}", k.trim_start_matches("--").replace('_', "-")), v.clone()])
        .collect()
}
