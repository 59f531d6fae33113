use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid version `{input}`: expected MAJOR.MINOR or MAJOR.MINOR.PATCH")]
pub struct VersionParseError {
    pub input: String,
}

/// A `MAJOR.MINOR.PATCH` version number.
///
/// `MAJOR.MINOR` is accepted too; the patch is then 0 and `patch_specified`
/// is false, so matching can tell a stated `.0` from an omitted one. Equality,
/// ordering and hashing look at the numeric triple only. An unspecified patch
/// renders back as `MAJOR.MINOR`.
#[derive(Debug, Clone, Copy)]
pub struct SemVer {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
    pub patch_specified: bool,
}

impl SemVer {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        SemVer {
            major,
            minor,
            patch,
            patch_specified: true,
        }
    }

    pub const fn major_minor(major: u64, minor: u64) -> Self {
        SemVer {
            major,
            minor,
            patch: 0,
            patch_specified: false,
        }
    }

    fn triple(&self) -> (u64, u64, u64) {
        (self.major, self.minor, self.patch)
    }

    /// `MAJOR.MINOR`, the part encoded in image tags.
    pub fn series(&self) -> String {
        format!("{}.{}", self.major, self.minor)
    }
}

impl PartialEq for SemVer {
    fn eq(&self, other: &Self) -> bool {
        self.triple() == other.triple()
    }
}

impl Eq for SemVer {}

impl Hash for SemVer {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.triple().hash(state);
    }
}

impl PartialOrd for SemVer {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SemVer {
    fn cmp(&self, other: &Self) -> Ordering {
        self.triple().cmp(&other.triple())
    }
}

fn component(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl FromStr for SemVer {
    type Err = VersionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || VersionParseError {
            input: s.to_string(),
        };
        let parts: Vec<&str> = s.split('.').collect();
        match parts.as_slice() {
            [major, minor] => Ok(SemVer::major_minor(
                component(major).ok_or_else(err)?,
                component(minor).ok_or_else(err)?,
            )),
            [major, minor, patch] => Ok(SemVer::new(
                component(major).ok_or_else(err)?,
                component(minor).ok_or_else(err)?,
                component(patch).ok_or_else(err)?,
            )),
            _ => Err(err()),
        }
    }
}

impl fmt::Display for SemVer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.patch_specified {
            write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
        } else {
            write!(f, "{}.{}", self.major, self.minor)
        }
    }
}
