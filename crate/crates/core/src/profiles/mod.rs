//! Cluster profiles and environment specs.
//!
//! Both are declared in a small sectioned `key = value` format (see
//! [`format`]). A cluster profile describes what one HPC cluster offers: its
//! scheduler, GPU layout, OpenMPI version and the modules to load. An
//! environment spec describes the researcher's image and how its
//! OpenMPI/Horovod versions get reconciled with the cluster.

pub mod format;
mod image;
mod version;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use image::{ImageRef, ImageRefError, DEFAULT_REGISTRY, DEFAULT_TAG};
pub use version::{SemVer, VersionParseError};

use format::{parse_entries, render_list, render_pairs, split_list, split_pair, Entry};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing mandatory key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: {key}: {message}")]
    InvalidValue {
        key: String,
        line: usize,
        message: String,
    },
    #[error("{strategy} strategy: {message}")]
    Inconsistent { strategy: Strategy, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub message: String,
    pub line: Option<usize>,
}

impl ValidationIssue {
    fn warning(message: impl Into<String>, line: Option<usize>) -> Self {
        ValidationIssue {
            severity: Severity::Warning,
            message: message.into(),
            line,
        }
    }

    fn error(message: impl Into<String>) -> Self {
        ValidationIssue {
            severity: Severity::Error,
            message: message.into(),
            line: None,
        }
    }
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}: line {line}: {}", self.severity, self.message),
            None => write!(f, "{}: {}", self.severity, self.message),
        }
    }
}

/// A parsed value together with the non-fatal notes the parser produced
/// (unknown keys, normalized image references).
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub value: T,
    pub notes: Vec<ValidationIssue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheduler {
    Slurm,
    /// No batch system; jobs go to the in-process mock scheduler.
    None,
}

impl FromStr for Scheduler {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "slurm" => Ok(Scheduler::Slurm),
            "none" => Ok(Scheduler::None),
            other => Err(format!("unknown scheduler `{other}` (expected slurm or none)")),
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheduler::Slurm => "slurm",
            Scheduler::None => "none",
        })
    }
}

/// How the image's OpenMPI/Horovod versions are made to match the cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// One image variant per OpenMPI version, selected by tag.
    Tags,
    /// Prebuilt vendor image with fixed OpenMPI/Horovod versions.
    Ngc,
    /// Versions installed on first container start by the entrypoint script.
    Entrypoint,
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tags" => Ok(Strategy::Tags),
            "ngc" => Ok(Strategy::Ngc),
            "entrypoint" => Ok(Strategy::Entrypoint),
            other => Err(format!(
                "unknown strategy `{other}` (expected tags, ngc or entrypoint)"
            )),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Tags => "tags",
            Strategy::Ngc => "ngc",
            Strategy::Entrypoint => "entrypoint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PackageManager {
    #[default]
    Apt,
    Yum,
    Apk,
}

impl FromStr for PackageManager {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "apt" | "apt-get" => Ok(PackageManager::Apt),
            "yum" => Ok(PackageManager::Yum),
            "apk" => Ok(PackageManager::Apk),
            other => Err(format!("unknown package manager `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterProfile {
    pub name: String,
    pub scheduler: Scheduler,
    pub gpus_per_node: u32,
    pub gpu_nodes: u32,
    pub openmpi_version: SemVer,
    pub module_loads: Vec<String>,
    pub interconnect: String,
    /// Path to the udocker executable on the cluster.
    pub container_runtime_path: String,
    pub partition: Option<String>,
    pub account: Option<String>,
    pub default_walltime: Option<String>,
    /// `(host path, container path)` volumes mounted in every job.
    pub default_mounts: Vec<(String, String)>,
}

/// A named installer command run by the entrypoint script.
///
/// `command` may use the `{openmpi_version}`, `{openmpi_series}` and
/// `{horovod_version}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallerStep {
    pub name: String,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvironmentSpec {
    pub base_image: ImageRef,
    pub strategy: Strategy,
    pub openmpi_version: Option<SemVer>,
    pub horovod_version: String,
    pub system_packages: Vec<String>,
    pub package_manager: PackageManager,
    /// `(local path, image path)` pairs copied into the image.
    pub code_copies: Vec<(String, String)>,
    pub entrypoint_path: Option<String>,
    pub registry: String,
    /// Installer steps for the entrypoint script; empty means the built-in
    /// OpenMPI + Horovod recipe.
    pub installers: Vec<InstallerStep>,
}

impl EnvironmentSpec {
    /// Check the strategy/field consistency rules.
    pub fn check_strategy(&self) -> Result<(), ProfileError> {
        let inconsistent = |message: &str| ProfileError::Inconsistent {
            strategy: self.strategy,
            message: message.to_string(),
        };
        match self.strategy {
            Strategy::Tags if self.openmpi_version.is_some() => Err(inconsistent(
                "openmpi_version must be absent; the image tag is chosen per cluster OpenMPI version",
            )),
            Strategy::Ngc if self.openmpi_version.is_none() => Err(inconsistent(
                "openmpi_version is required; it is fixed by the prebuilt image and checked against the cluster",
            )),
            Strategy::Entrypoint if self.entrypoint_path.is_none() => Err(inconsistent(
                "entrypoint_path is required; the generated script is installed there",
            )),
            _ => Ok(()),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

/// Key lookup over the entries of the accepted sections.
struct Fields<'a> {
    entries: Vec<&'a Entry>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.entries.iter().copied().find(|e| e.key == key)
    }

    fn required(&self, key: &'static str) -> Result<&'a Entry, ProfileError> {
        self.get(key).ok_or(ProfileError::MissingKey(key))
    }

    fn optional(&self, key: &str) -> Option<&'a Entry> {
        self.get(key).filter(|e| !e.value.is_empty())
    }
}

fn invalid(entry: &Entry, message: impl Into<String>) -> ProfileError {
    ProfileError::InvalidValue {
        key: entry.key.clone(),
        line: entry.line,
        message: message.into(),
    }
}

fn parse_with<T, E: fmt::Display>(
    entry: &Entry,
    parse: impl FnOnce(&str) -> Result<T, E>,
) -> Result<T, ProfileError> {
    parse(&entry.value).map_err(|e| invalid(entry, e.to_string()))
}

fn positive_count(entry: &Entry) -> Result<u32, ProfileError> {
    let n: i64 = parse_with(entry, |v| v.parse::<i64>())?;
    if n < 1 {
        return Err(invalid(entry, format!("{} must be ≥ 1", entry.key)));
    }
    u32::try_from(n).map_err(|_| invalid(entry, "value too large"))
}

fn pairs(entry: &Entry) -> Result<Vec<(String, String)>, ProfileError> {
    split_list(&entry.value)
        .iter()
        .map(|item| {
            split_pair(item).ok_or_else(|| invalid(entry, format!("expected `src:dst`, found `{item}`")))
        })
        .collect()
}

fn word_list(entry: &Entry) -> Result<Vec<String>, ProfileError> {
    let items = split_list(&entry.value);
    for item in &items {
        if item.is_empty() {
            return Err(invalid(entry, "empty list entry"));
        }
        if item.chars().any(char::is_whitespace) {
            return Err(invalid(entry, format!("`{item}` contains whitespace")));
        }
    }
    Ok(items)
}

/// Split entries into the ones belonging to `sections` (top-level entries
/// count as the first section) and warnings for everything else.
fn select<'a>(
    entries: &'a [Entry],
    sections: &[&str],
    known_keys: &[&str],
    notes: &mut Vec<ValidationIssue>,
) -> Vec<&'a Entry> {
    let mut selected = Vec::new();
    for entry in entries {
        let section = entry.section.as_deref().unwrap_or(sections[0]);
        if section != sections[0] {
            if !sections.contains(&section) {
                notes.push(ValidationIssue::warning(
                    format!("unknown section `[{section}]`, key `{}` ignored", entry.key),
                    Some(entry.line),
                ));
            }
            continue;
        }
        if known_keys.contains(&entry.key.as_str()) {
            selected.push(entry);
        } else {
            notes.push(ValidationIssue::warning(
                format!("unknown key `{}` ignored", entry.key),
                Some(entry.line),
            ));
        }
    }
    selected
}

const CLUSTER_KEYS: &[&str] = &[
    "name",
    "scheduler",
    "gpus_per_node",
    "gpu_nodes",
    "openmpi_version",
    "module_loads",
    "interconnect",
    "container_runtime_path",
    "partition",
    "account",
    "default_walltime",
    "default_mounts",
];

pub fn parse_cluster_profile(text: &str) -> Result<Parsed<ClusterProfile>, ProfileError> {
    let entries = parse_entries(text)?;
    let mut notes = Vec::new();
    let fields = Fields {
        entries: select(&entries, &["cluster"], CLUSTER_KEYS, &mut notes),
    };

    let name_entry = fields.required("name")?;
    if !is_identifier(&name_entry.value) {
        return Err(invalid(name_entry, "name must be an identifier"));
    }
    let scheduler = parse_with(fields.required("scheduler")?, Scheduler::from_str)?;
    let gpus_per_node = positive_count(fields.required("gpus_per_node")?)?;
    let gpu_nodes = positive_count(fields.required("gpu_nodes")?)?;
    let openmpi_version = parse_with(fields.required("openmpi_version")?, SemVer::from_str)?;
    let runtime = fields.required("container_runtime_path")?;
    if runtime.value.is_empty() {
        return Err(invalid(runtime, "must not be empty"));
    }
    let module_loads = match fields.get("module_loads") {
        Some(e) => word_list(e)?,
        None => Vec::new(),
    };
    let default_mounts = match fields.get("default_mounts") {
        Some(e) => pairs(e)?,
        None => Vec::new(),
    };
    let default_walltime = match fields.optional("default_walltime") {
        Some(e) => {
            if !is_walltime(&e.value) {
                return Err(invalid(e, "expected HH:MM:SS"));
            }
            Some(e.value.clone())
        }
        None => None,
    };

    Ok(Parsed {
        value: ClusterProfile {
            name: name_entry.value.clone(),
            scheduler,
            gpus_per_node,
            gpu_nodes,
            openmpi_version,
            module_loads,
            interconnect: fields.get("interconnect").map(|e| e.value.clone()).unwrap_or_default(),
            container_runtime_path: runtime.value.clone(),
            partition: fields.optional("partition").map(|e| e.value.clone()),
            account: fields.optional("account").map(|e| e.value.clone()),
            default_walltime,
            default_mounts,
        },
        notes,
    })
}

/// `HH:MM:SS` with any number of hours and minutes/seconds below 60.
pub fn is_walltime(s: &str) -> bool {
    let parts: Vec<&str> = s.split(':').collect();
    let digits = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit());
    match parts.as_slice() {
        [h, m, sec] => {
            digits(h)
                && m.len() == 2
                && sec.len() == 2
                && digits(m)
                && digits(sec)
                && m.parse::<u32>().map_or(false, |v| v < 60)
                && sec.parse::<u32>().map_or(false, |v| v < 60)
        }
        _ => false,
    }
}

/// Render a profile in the canonical file format. Parsing the output yields
/// an equal profile.
pub fn render_cluster_profile(p: &ClusterProfile) -> String {
    let mut out = String::from("[cluster]\n");
    let mut kv = |k: &str, v: &str| {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(v);
        out.push('\n');
    };
    kv("name", &p.name);
    kv("scheduler", &p.scheduler.to_string());
    kv("gpus_per_node", &p.gpus_per_node.to_string());
    kv("gpu_nodes", &p.gpu_nodes.to_string());
    kv("openmpi_version", &p.openmpi_version.to_string());
    kv("module_loads", &render_list(&p.module_loads));
    kv("interconnect", &p.interconnect);
    kv("container_runtime_path", &p.container_runtime_path);
    if let Some(partition) = &p.partition {
        kv("partition", partition);
    }
    if let Some(account) = &p.account {
        kv("account", account);
    }
    if let Some(walltime) = &p.default_walltime {
        kv("default_walltime", walltime);
    }
    kv("default_mounts", &render_pairs(&p.default_mounts));
    out
}

pub fn validate_profile(p: &ClusterProfile) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if !is_identifier(&p.name) {
        issues.push(ValidationIssue::error("name must be a non-empty identifier"));
    }
    if p.gpus_per_node < 1 {
        issues.push(ValidationIssue::error("gpus_per_node must be ≥ 1"));
    }
    if p.gpu_nodes < 1 {
        issues.push(ValidationIssue::error("gpu_nodes must be ≥ 1"));
    }
    for (i, module) in p.module_loads.iter().enumerate() {
        if module.is_empty() {
            issues.push(ValidationIssue::error(format!("module_loads entry {} is empty", i + 1)));
        } else if module.chars().any(char::is_whitespace) {
            issues.push(ValidationIssue::error(format!(
                "module_loads entry `{module}` contains whitespace"
            )));
        }
    }
    if p.container_runtime_path.is_empty() {
        issues.push(ValidationIssue::error("container_runtime_path is empty"));
    } else if !p.container_runtime_path.starts_with(['/', '$', '~']) {
        issues.push(ValidationIssue::warning(
            format!(
                "container_runtime_path `{}` is relative; batch jobs may start in another directory",
                p.container_runtime_path
            ),
            None,
        ));
    }
    if let Some(w) = &p.default_walltime {
        if !is_walltime(w) {
            issues.push(ValidationIssue::error(format!("default_walltime `{w}` is not HH:MM:SS")));
        }
    }
    for (host, container) in &p.default_mounts {
        if host.is_empty() || container.is_empty() {
            issues.push(ValidationIssue::error("default_mounts entry with an empty side"));
        }
    }
    issues
}

const ENV_KEYS: &[&str] = &[
    "base_image",
    "strategy",
    "openmpi_version",
    "horovod_version",
    "system_packages",
    "package_manager",
    "code_copies",
    "entrypoint_path",
    "registry",
];

pub fn parse_env_spec(text: &str) -> Result<Parsed<EnvironmentSpec>, ProfileError> {
    let entries = parse_entries(text)?;
    let mut notes = Vec::new();
    let fields = Fields {
        entries: select(&entries, &["environment", "installers"], ENV_KEYS, &mut notes),
    };

    let image_entry = fields.required("base_image")?;
    let mut base_image = parse_with(image_entry, ImageRef::from_str)?;
    if base_image.normalize() {
        notes.push(ValidationIssue::warning(
            format!("base_image has no tag; using unpinned `{base_image}`"),
            Some(image_entry.line),
        ));
    } else if base_image.is_unpinned() {
        notes.push(ValidationIssue::warning(
            format!("base_image `{base_image}` uses the unpinned `latest` tag"),
            Some(image_entry.line),
        ));
    }

    let strategy = parse_with(fields.required("strategy")?, Strategy::from_str)?;
    let hvd = fields.required("horovod_version")?;
    if hvd.value.is_empty() || hvd.value.chars().any(char::is_whitespace) {
        return Err(invalid(hvd, "must be a single non-empty word"));
    }
    let openmpi_version = fields
        .optional("openmpi_version")
        .map(|e| parse_with(e, SemVer::from_str))
        .transpose()?;
    let entrypoint_path = match fields.optional("entrypoint_path") {
        Some(e) if !e.value.starts_with('/') => {
            return Err(invalid(e, "must be an absolute path inside the image"));
        }
        Some(e) => Some(e.value.clone()),
        None => None,
    };

    let installers = entries
        .iter()
        .filter(|e| e.section.as_deref() == Some("installers"))
        .map(|e| InstallerStep {
            name: e.key.clone(),
            command: e.value.clone(),
        })
        .collect();

    let spec = EnvironmentSpec {
        base_image,
        strategy,
        openmpi_version,
        horovod_version: hvd.value.clone(),
        system_packages: fields.get("system_packages").map(word_list).transpose()?.unwrap_or_default(),
        package_manager: fields
            .optional("package_manager")
            .map(|e| parse_with(e, PackageManager::from_str))
            .transpose()?
            .unwrap_or_default(),
        code_copies: fields.get("code_copies").map(pairs).transpose()?.unwrap_or_default(),
        entrypoint_path,
        registry: fields
            .optional("registry")
            .map(|e| e.value.clone())
            .unwrap_or_else(|| DEFAULT_REGISTRY.to_string()),
        installers,
    };
    spec.check_strategy()?;
    Ok(Parsed { value: spec, notes })
}
