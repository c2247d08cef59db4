//! Key-value config files mirroring command-line flags.
//!
//! Each non-empty line is `key = value` (or `key value`); `#` starts a comment.
//! Keys are flag names without the leading dashes. A boolean flag is enabled
//! with `true` and left off with `false`.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => line.split_once(char::is_whitespace).map_or((line, ""), |(k, v)| (k, v.trim())),
        };
        let key = key.trim_start_matches('-');
        if key.is_empty() || key.contains(char::is_whitespace) {
            bail!("config line {}: malformed entry `{raw}`", n + 1);
        }
        entries.push((key.to_string(), value.to_string()));
    }
    Ok(entries)
}

fn flag_given(argv: &[String], key: &str) -> bool {
    let long = format!("--{key}");
    argv.iter().any(|a| *a == long || a.starts_with(&format!("{long}=")))
}

/// Appends config entries as flags; values already on the command line win.
pub fn merge(argv: Vec<String>) -> Result<Vec<String>> {
    let path = argv.iter().enumerate().find_map(|(k, a)| {
        a.strip_prefix("--config=")
            .map(str::to_string)
            .or_else(|| (a == "--config").then(|| argv.get(k + 1).cloned()).flatten())
    });
    let Some(path) = path else {
        return Ok(argv);
    };
    let text = fs::read_to_string(Path::new(&path)).with_context(|| format!("reading config `{path}`"))?;
    let mut merged = argv.clone();
    for (key, value) in parse(&text)? {
        if key == "config" || flag_given(&argv, &key) {
            continue;
        }
        match value.as_str() {
            "false" => {}
            "" | "true" => merged.push(format!("--{key}")),
            _ => {
                merged.push(format!("--{key}"));
                merged.push(value);
            }
        }
    }
    Ok(merged)
}
