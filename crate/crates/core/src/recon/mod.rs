//! Reconcile the image's OpenMPI/Horovod versions with a cluster's.
//!
//! Three strategies are supported:
//!
//! - **tags**: one image variant per OpenMPI series, tagged
//!   `ompi<MAJOR>.<MINOR>[-<variant>]`; the tag matching the cluster wins.
//! - **ngc**: a prebuilt image with fixed versions, checked against the
//!   cluster.
//! - **entrypoint**: a version-agnostic image whose entrypoint installs the
//!   cluster's OpenMPI and the requested Horovod on first start.

mod entrypoint;

use std::fmt;

use thiserror::Error;

use crate::profiles::{ClusterProfile, EnvironmentSpec, ImageRef, SemVer, Strategy, DEFAULT_REGISTRY};

pub use entrypoint::{
    builtin_installers, expand, generate_entrypoint, EntrypointConfig, Placeholders, DEFAULT_STATE_DIR,
    FALLBACK_SHELL, STATE_DIR_ENV,
};

/// OpenMPI version baked into the default `CMD` of entrypoint images whose
/// spec does not name one. Overridden at run time by the cluster's version.
pub const DEFAULT_OPENMPI_VERSION: SemVer = SemVer::new(4, 0, 1);

const TAG_PREFIX: &str = "ompi";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReconError {
    #[error("no tag for OpenMPI {wanted} (available: {})", if .available.is_empty() { "none".to_string() } else { .available.join(", ") })]
    NoMatchingTag { wanted: String, available: Vec<String> },
    #[error("image OpenMPI {image} does not match cluster OpenMPI {cluster}")]
    VersionMismatch { image: SemVer, cluster: SemVer },
    #[error("the tags strategy needs the list of available image tags")]
    MissingTags,
    #[error("{0}")]
    Spec(#[from] crate::profiles::ProfileError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconcilePlan {
    pub image_ref: String,
    /// Arguments appended after the container name on `udocker run`.
    pub runtime_args: Vec<String>,
    pub strategy_used: Strategy,
    pub match_note: String,
}

/// How two OpenMPI versions were found compatible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionMatch {
    /// Both sides state a patch and all three components agree.
    Exact,
    /// Same major.minor, patch unstated on at least one side.
    MajorMinor,
}

impl fmt::Display for VersionMatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VersionMatch::Exact => "exact match",
            VersionMatch::MajorMinor => "major.minor match",
        })
    }
}

/// The single compatibility predicate: equal major.minor, and equal patch
/// when both versions state one.
pub fn versions_match(image: &SemVer, cluster: &SemVer) -> Option<VersionMatch> {
    if (image.major, image.minor) != (cluster.major, cluster.minor) {
        return None;
    }
    if image.patch_specified && cluster.patch_specified {
        (image.patch == cluster.patch).then_some(VersionMatch::Exact)
    } else {
        Some(VersionMatch::MajorMinor)
    }
}

/// The tag naming an image variant built for `version`'s series.
pub fn encode_tag(version: &SemVer) -> String {
    format!("{TAG_PREFIX}{}.{}", version.major, version.minor)
}

/// Decode `ompi<MAJOR>.<MINOR>[-<variant>]` into the series and variant.
pub fn decode_tag(tag: &str) -> Option<((u64, u64), Option<&str>)> {
    let rest = tag.strip_prefix(TAG_PREFIX)?;
    let (version, variant) = match rest.split_once('-') {
        Some((v, var)) if !var.is_empty() => (v, Some(var)),
        Some(_) => return None,
        None => (rest, None),
    };
    let v: SemVer = version.parse().ok()?;
    if v.patch_specified {
        return None;
    }
    Some(((v.major, v.minor), variant))
}

/// Pick the tag whose encoded series equals the cluster's major.minor. With
/// several variants the lexicographically smallest tag wins. Tags outside the
/// naming convention are ignored.
pub fn select_tag<S: AsRef<str>>(available_tags: &[S], cluster_mpi: &SemVer) -> Result<String, ReconError> {
    let wanted = (cluster_mpi.major, cluster_mpi.minor);
    available_tags
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| decode_tag(t).is_some_and(|(series, _)| series == wanted))
        .min()
        .map(str::to_string)
        .ok_or_else(|| {
            let mut available: Vec<String> = available_tags
                .iter()
                .filter_map(|t| decode_tag(t.as_ref()))
                .map(|((major, minor), _)| format!("{major}.{minor}"))
                .collect();
            available.sort();
            available.dedup();
            ReconError::NoMatchingTag {
                wanted: cluster_mpi.series(),
                available,
            }
        })
}

/// The spec's image, qualified with its registry when that is not the
/// default public one.
pub fn resolve_image(spec: &EnvironmentSpec) -> ImageRef {
    let mut image = spec.base_image.clone();
    if image.registry.is_none() && spec.registry != DEFAULT_REGISTRY {
        image.registry = Some(spec.registry.clone());
    }
    image
}

/// `[openmpi_version, horovod_version]` baked into an entrypoint image's CMD.
pub fn default_version_args(spec: &EnvironmentSpec) -> [String; 2] {
    [
        spec.openmpi_version.unwrap_or(DEFAULT_OPENMPI_VERSION).to_string(),
        spec.horovod_version.clone(),
    ]
}

/// Decide which image to run on `cluster` and with which arguments.
/// Deterministic; the entrypoint strategy never looks at `available_tags`.
pub fn reconcile(
    spec: &EnvironmentSpec,
    cluster: &ClusterProfile,
    available_tags: Option<&[String]>,
) -> Result<ReconcilePlan, ReconError> {
    spec.check_strategy()?;
    let image = resolve_image(spec);
    let cluster_mpi = cluster.openmpi_version;

    match spec.strategy {
        Strategy::Tags => {
            let tags = available_tags.ok_or(ReconError::MissingTags)?;
            let tag = select_tag(tags, &cluster_mpi)?;
            Ok(ReconcilePlan {
                image_ref: image.with_tag(&tag).to_string(),
                runtime_args: Vec::new(),
                strategy_used: Strategy::Tags,
                match_note: format!("tag {tag} encodes cluster OpenMPI {}", cluster_mpi.series()),
            })
        }
        Strategy::Ngc => {
            let image_mpi = spec
                .openmpi_version
                .expect("check_strategy guarantees an ngc version");
            let kind = versions_match(&image_mpi, &cluster_mpi).ok_or(ReconError::VersionMismatch {
                image: image_mpi,
                cluster: cluster_mpi,
            })?;
            Ok(ReconcilePlan {
                image_ref: image.to_string(),
                runtime_args: Vec::new(),
                strategy_used: Strategy::Ngc,
                match_note: format!("{kind}: image OpenMPI {image_mpi}, cluster OpenMPI {cluster_mpi}"),
            })
        }
        Strategy::Entrypoint => Ok(ReconcilePlan {
            image_ref: image.to_string(),
            runtime_args: vec![cluster_mpi.to_string(), spec.horovod_version.clone()],
            strategy_used: Strategy::Entrypoint,
            match_note: format!("entrypoint installs cluster OpenMPI {cluster_mpi} on first start"),
        }),
    }
}
