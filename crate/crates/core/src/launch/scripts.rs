use super::{is_identifier, CommandLine, LaunchError};
use crate::profiles::Strategy;
use crate::recon::ReconcilePlan;
use crate::shell;

pub const DEFAULT_UDOCKER_URL: &str = "https://github.com/indigo-dc/udocker/releases/download/1.3.1/udocker-1.3.1.tar.gz";
pub const DEFAULT_INSTALL_PREFIX: &str = "$HOME/.local/udocker";

/// Commands that prepare a container on the cluster: pull, create, add the
/// host NVIDIA libraries, and for entrypoint images one run that installs
/// the cluster's OpenMPI/Horovod versions.
pub fn render_udocker_setup(recon: &ReconcilePlan, container_name: &str) -> Result<Vec<CommandLine>, LaunchError> {
    if !is_identifier(container_name) {
        return Err(LaunchError::Invalid {
            field: "container_name",
            message: format!("`{container_name}` is not an identifier"),
        });
    }
    let mut out = vec![
        CommandLine::new("udocker", &["pull", &recon.image_ref]),
        CommandLine::new("udocker", &["create", &format!("--name={container_name}"), &recon.image_ref]),
        CommandLine::new("udocker", &["setup", "--nvidia", container_name]),
    ];
    if recon.strategy_used == Strategy::Entrypoint {
        let mut args = vec!["run".to_string(), container_name.to_string()];
        args.extend(recon.runtime_args.iter().cloned());
        out.push(CommandLine::new("udocker", &args));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstallConfig {
    /// udocker release tarball.
    pub release_url: String,
    /// Install directory; may reference `$HOME`.
    pub prefix: String,
}

impl Default for InstallConfig {
    fn default() -> Self {
        InstallConfig {
            release_url: DEFAULT_UDOCKER_URL.to_string(),
            prefix: DEFAULT_INSTALL_PREFIX.to_string(),
        }
    }
}

/// POSIX sh script installing udocker for the calling user only.
pub fn render_install_script(config: &InstallConfig) -> String {
    let url = shell::quote(&config.release_url);
    let prefix = shell::quote(&config.prefix);
    format!(
        r#"#!/bin/sh
# Install udocker under a user-owned prefix.
set -eu

UDOCKER_URL={url}
PREFIX={prefix}

mkdir -p "$PREFIX"
TARBALL="$PREFIX/udocker.tar.gz"
curl -fsSL -o "$TARBALL" "$UDOCKER_URL" && tar -xzf "$TARBALL" -C "$PREFIX" --strip-components=1 && rm -f "$TARBALL"
chmod u+x "$PREFIX/udocker/udocker"
"$PREFIX/udocker/udocker" install

echo "udocker installed; add it to PATH with:"
echo "  export PATH=\"$PREFIX/udocker:\$PATH\""
"#
    )
}
