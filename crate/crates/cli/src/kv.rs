//! Line-oriented `key = value` documents with optional `[section]` headers.
//! `#` starts a comment that runs to the end of the line. Shared by config
//! and weights files.

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub section: Option<String>,
    pub key: String,
    pub value: String,
}

pub fn parse(text: &str, origin: &str) -> Result<Vec<Entry>, CliError> {
    let mut section = None;
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::parse(origin, line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(CliError::parse(origin, line, "empty section name"));
            }
            section = Some(name.to_string());
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| CliError::parse(origin, line, "expected `key = value`"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::parse(origin, line, "missing key"));
        }
        if out.iter().any(|e| e.section == section && e.key == key) {
            return Err(CliError::parse(
                origin,
                line,
                format!("duplicate key `{key}`"),
            ));
        }
        out.push(Entry {
            line,
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

pub fn parse_f64(e: &Entry, origin: &str) -> Result<f64, CliError> {
    e.value
        .parse::<f64>()
        .map_err(|_| CliError::parse(origin, e.line, format!("`{}` is not a number", e.value)))
}

pub fn parse_usize(e: &Entry, origin: &str) -> Result<usize, CliError> {
    // accept integral floats such as 1e4
    if let Ok(v) = e.value.parse::<usize>() {
        return Ok(v);
    }
    match e.value.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as usize),
        _ => Err(CliError::parse(
            origin,
            e.line,
            format!("`{}` is not a non-negative integer", e.value),
        )),
    }
}

pub fn parse_bool(e: &Entry, origin: &str) -> Result<bool, CliError> {
    match e.value.as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        v => Err(CliError::parse(
            origin,
            e.line,
            format!("`{v}` is not a boolean"),
        )),
    }
}

pub fn parse_list(e: &Entry, origin: &str) -> Result<Vec<f64>, CliError> {
    let v = e.value.trim();
    let v = v
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .unwrap_or(v);
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|t| {
            t.trim().parse::<f64>().map_err(|_| {
                CliError::parse(origin, e.line, format!("`{}` is not a number", t.trim()))
            })
        })
        .collect()
}
