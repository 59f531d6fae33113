//! Container image references (`[registry/]repository[:tag][@digest]`).

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub const DEFAULT_REGISTRY: &str = "docker.io";
pub const DEFAULT_TAG: &str = "latest";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid image reference `{input}`: {reason}")]
pub struct ImageRefError {
    pub input: String,
    pub reason: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImageRef {
    /// Registry host, only when written in the reference itself.
    pub registry: Option<String>,
    pub repository: String,
    pub tag: Option<String>,
    pub digest: Option<String>,
}

fn valid_path_component(c: &str) -> bool {
    let bytes = c.as_bytes();
    if bytes.is_empty() {
        return false;
    }
    let alnum = |b: u8| b.is_ascii_lowercase() || b.is_ascii_digit();
    if !alnum(bytes[0]) || !alnum(bytes[bytes.len() - 1]) {
        return false;
    }
    bytes
        .iter()
        .all(|&b| alnum(b) || matches!(b, b'.' | b'_' | b'-'))
}

fn valid_tag(t: &str) -> bool {
    let bytes = t.as_bytes();
    !bytes.is_empty()
        && bytes.len() <= 128
        && (bytes[0].is_ascii_alphanumeric() || bytes[0] == b'_')
        && bytes
            .iter()
            .all(|&b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

fn valid_digest(d: &str) -> bool {
    match d.split_once(':') {
        Some((algo, hex)) => {
            !algo.is_empty()
                && algo
                    .bytes()
                    .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b"+._-".contains(&b))
                && hex.len() >= 32
                && hex.bytes().all(|b| b.is_ascii_hexdigit())
        }
        None => false,
    }
}

fn looks_like_registry(component: &str) -> bool {
    component.contains('.') || component.contains(':') || component == "localhost"
}

impl FromStr for ImageRef {
    type Err = ImageRefError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason| ImageRefError {
            input: s.to_string(),
            reason,
        };
        if s.is_empty() {
            return Err(err("empty reference"));
        }
        if s.chars().any(char::is_whitespace) {
            return Err(err("contains whitespace"));
        }

        let (rest, digest) = match s.split_once('@') {
            Some((r, d)) => {
                if !valid_digest(d) {
                    return Err(err("malformed digest"));
                }
                (r, Some(d.to_string()))
            }
            None => (s, None),
        };

        let mut components: Vec<&str> = rest.split('/').collect();
        let registry = if components.len() > 1 && looks_like_registry(components[0]) {
            Some(components.remove(0).to_string())
        } else {
            None
        };

        let last = components.pop().ok_or_else(|| err("missing repository"))?;
        let (last_name, tag) = match last.split_once(':') {
            Some((n, t)) => {
                if !valid_tag(t) {
                    return Err(err("malformed tag"));
                }
                (n, Some(t.to_string()))
            }
            None => (last, None),
        };
        components.push(last_name);
        if !components.iter().all(|c| valid_path_component(c)) {
            return Err(err("repository must be lowercase path components"));
        }

        Ok(ImageRef {
            registry,
            repository: components.join("/"),
            tag,
            digest,
        })
    }
}

impl ImageRef {
    /// True when the reference does not pin an exact image: no digest, and
    /// the tag is absent or `latest`.
    pub fn is_unpinned(&self) -> bool {
        self.digest.is_none() && self.tag.as_deref().map_or(true, |t| t == DEFAULT_TAG)
    }

    /// Fill in the implicit `latest` tag. Returns whether a tag was added.
    pub fn normalize(&mut self) -> bool {
        if self.tag.is_none() && self.digest.is_none() {
            self.tag = Some(DEFAULT_TAG.to_string());
            true
        } else {
            false
        }
    }

    pub fn with_tag(&self, tag: &str) -> ImageRef {
        ImageRef {
            tag: Some(tag.to_string()),
            digest: None,
            ..self.clone()
        }
    }

    /// Registry this reference resolves against, falling back to `default`.
    pub fn registry_or<'a>(&'a self, default: &'a str) -> &'a str {
        self.registry.as_deref().unwrap_or(default)
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(registry) = &self.registry {
            write!(f, "{registry}/")?;
        }
        f.write_str(&self.repository)?;
        if let Some(tag) = &self.tag {
            write!(f, ":{tag}")?;
        }
        if let Some(digest) = &self.digest {
            write!(f, "@{digest}")?;
        }
        Ok(())
    }
}
