//! The first-start installer script used by the entrypoint strategy.

use crate::profiles::InstallerStep;

pub const DEFAULT_STATE_DIR: &str = "/opt/.hpcflow";
pub const STATE_DIR_ENV: &str = "HPCFLOW_STATE_DIR";
/// Command run when the container is started without one.
pub const FALLBACK_SHELL: &str = "/bin/bash";

const OPENMPI_RECIPE: &str = "cd /tmp \
&& wget -q https://download.open-mpi.org/release/open-mpi/v{openmpi_series}/openmpi-{openmpi_version}.tar.gz \
&& tar xzf openmpi-{openmpi_version}.tar.gz \
&& cd openmpi-{openmpi_version} \
&& ./configure --prefix=/usr/local \
&& make -j\"$(nproc)\" install \
&& ldconfig \
&& cd /tmp \
&& rm -rf /tmp/openmpi-{openmpi_version} /tmp/openmpi-{openmpi_version}.tar.gz";

const HOROVOD_RECIPE: &str = "HOROVOD_GPU_OPERATIONS=NCCL HOROVOD_WITH_MPI=1 \
pip install --no-cache-dir --force-reinstall horovod=={horovod_version}";

/// Build OpenMPI from the release tarball, then build Horovod against it.
pub fn builtin_installers() -> Vec<InstallerStep> {
    vec![
        InstallerStep {
            name: "openmpi".into(),
            command: OPENMPI_RECIPE.into(),
        },
        InstallerStep {
            name: "horovod".into(),
            command: HOROVOD_RECIPE.into(),
        },
    ]
}

/// What the version placeholders of an installer template expand to.
#[derive(Debug, Clone, Copy)]
pub struct Placeholders<'a> {
    pub openmpi_version: &'a str,
    pub openmpi_series: &'a str,
    pub horovod_version: &'a str,
}

pub fn expand(template: &str, p: &Placeholders<'_>) -> String {
    template
        .replace("{openmpi_version}", p.openmpi_version)
        .replace("{openmpi_series}", p.openmpi_series)
        .replace("{horovod_version}", p.horovod_version)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntrypointConfig {
    pub installers: Vec<InstallerStep>,
    pub state_dir: String,
}

impl Default for EntrypointConfig {
    fn default() -> Self {
        EntrypointConfig {
            installers: builtin_installers(),
            state_dir: DEFAULT_STATE_DIR.to_string(),
        }
    }
}

impl EntrypointConfig {
    /// Use `installers`, or the built-in recipe when the list is empty.
    pub fn with_installers(installers: &[InstallerStep]) -> Self {
        if installers.is_empty() {
            Self::default()
        } else {
            EntrypointConfig {
                installers: installers.to_vec(),
                ..Self::default()
            }
        }
    }
}

const SCRIPT_VARS: Placeholders<'static> = Placeholders {
    openmpi_version: "${OMPI_VERSION}",
    openmpi_series: "${OMPI_VERSION%.*}",
    horovod_version: "${HVD_VERSION}",
};

/// Render the entrypoint script. The output depends only on `config`.
///
/// Runtime contract:
/// - `$1` is the OpenMPI version and `$2` the Horovod version; without both
///   it prints usage on stderr and exits 2.
/// - If `$STATE_DIR/installed-<ompi>-<hvd>` exists the install is skipped.
/// - Otherwise each installer runs in a subshell (output on stderr); the
///   first failure exits with its status and leaves no marker. On success the
///   marker is written to a temporary file and renamed into place.
/// - Finally it execs `$3..`, or `/bin/bash` when no command was given.
pub fn generate_entrypoint(config: &EntrypointConfig) -> String {
    let mut s = String::new();
    s.push_str(
        "#!/bin/sh\n\
         # Container entrypoint generated by hpcflow.\n\
         #\n\
         # usage: <script> <openmpi_version> <horovod_version> [command...]\n\
         #\n\
         # Installs the requested OpenMPI and Horovod versions on the first start\n\
         # and records them in a marker file; later starts skip the install.\n\
         # Then runs the command, or an interactive shell when none is given.\n\
         \n\
         if [ \"$#\" -lt 2 ] || [ -z \"$1\" ] || [ -z \"$2\" ]; then\n\
         \x20   echo \"usage: $0 <openmpi_version> <horovod_version> [command...]\" >&2\n\
         \x20   exit 2\n\
         fi\n\
         \n\
         OMPI_VERSION=$1\n\
         HVD_VERSION=$2\n\
         shift 2\n\
         \n",
    );
    s.push_str(&format!(
        "STATE_DIR=${{{STATE_DIR_ENV}:-{}}}\n",
        config.state_dir
    ));
    s.push_str(
        "MARKER=\"$STATE_DIR/installed-$OMPI_VERSION-$HVD_VERSION\"\n\
         \n\
         if [ ! -e \"$MARKER\" ]; then\n\
         \x20   echo \"hpcflow: installing OpenMPI $OMPI_VERSION and Horovod $HVD_VERSION\" >&2\n",
    );
    for step in &config.installers {
        s.push_str(&format!("    # {}\n", step.name));
        s.push_str("    (\n");
        s.push_str(&expand(&step.command, &SCRIPT_VARS));
        s.push_str("\n    ) >&2 || exit $?\n");
    }
    s.push_str(
        "    mkdir -p \"$STATE_DIR\" || exit $?\n\
         \x20   TMP_MARKER=\"$MARKER.tmp.$$\"\n\
         \x20   printf '%s %s\\n' \"$OMPI_VERSION\" \"$HVD_VERSION\" > \"$TMP_MARKER\" || exit $?\n\
         \x20   mv -f \"$TMP_MARKER\" \"$MARKER\" || exit $?\n\
         fi\n\
         \n\
         if [ \"$#\" -eq 0 ]; then\n",
    );
    s.push_str(&format!("    exec {FALLBACK_SHELL}\nfi\nexec \"$@\"\n"));
    s
}
