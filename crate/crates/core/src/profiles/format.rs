//! Sectioned `key = value` text format shared by cluster profiles and
//! environment specs.
//!
//! ```text
//! # comment
//! [cluster]
//! name = csic
//! module_loads = openmpi/4.0.1, cuda/11.0
//! default_mounts = /gpfs/data:/data, /scratch:/scratch
//! ```

use super::ProfileError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    /// Enclosing `[section]`, `None` before the first header.
    pub section: Option<String>,
    pub key: String,
    pub value: String,
    pub line: usize,
}

fn is_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ProfileError> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut section: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').map(str::trim).unwrap_or("");
            if !is_name(name) {
                return Err(ProfileError::Syntax {
                    line,
                    message: format!("malformed section header `{trimmed}`"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(ProfileError::Syntax {
                line,
                message: format!("expected `key = value`, found `{trimmed}`"),
            });
        };
        let key = key.trim();
        if !is_name(key) {
            return Err(ProfileError::Syntax {
                line,
                message: format!("invalid key `{key}` (keys are lowercase letters and `_`)"),
            });
        }
        if let Some(prev) = entries
            .iter()
            .find(|e| e.section == section && e.key == key)
        {
            return Err(ProfileError::Syntax {
                line,
                message: format!("duplicate key `{key}` (first set on line {})", prev.line),
            });
        }
        entries.push(Entry {
            section: section.clone(),
            key: key.to_string(),
            value: value.trim().to_string(),
            line,
        });
    }
    Ok(entries)
}

/// Split a comma-separated list, dropping surrounding whitespace. An empty
/// value is an empty list; empty items are kept so callers can reject them.
pub fn split_list(value: &str) -> Vec<String> {
    if value.trim().is_empty() {
        return Vec::new();
    }
    value.split(',').map(|s| s.trim().to_string()).collect()
}

/// Split `src:dst` on its single colon.
pub fn split_pair(item: &str) -> Option<(String, String)> {
    let (src, dst) = item.split_once(':')?;
    let (src, dst) = (src.trim(), dst.trim());
    if src.is_empty() || dst.is_empty() || dst.contains(':') {
        return None;
    }
    Some((src.to_string(), dst.to_string()))
}

pub fn render_list(items: &[String]) -> String {
    items.join(", ")
}

pub fn render_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(a, b)| format!("{a}:{b}"))
        .collect::<Vec<_>>()
        .join(", ")
}
