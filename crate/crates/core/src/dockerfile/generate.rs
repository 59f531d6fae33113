use thiserror::Error;

use super::{DockerfileAst, Instruction, InstructionKind};
use crate::profiles::{EnvironmentSpec, PackageManager, ProfileError, Strategy};
use crate::recon::{default_version_args, expand, EntrypointConfig, Placeholders};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot generate Dockerfile: {0}")]
pub struct GenerateError(#[from] pub ProfileError);

/// Build argument carrying the OpenMPI version of a tag variant.
pub const OPENMPI_BUILD_ARG: &str = "OPENMPI_VERSION";

fn package_install(manager: PackageManager, packages: &[String]) -> String {
    let list = packages.join(" ");
    match manager {
        PackageManager::Apt => format!(
            "apt-get update && apt-get install -y --no-install-recommends {list} && rm -rf /var/lib/apt/lists/*"
        ),
        PackageManager::Yum => format!("yum install -y {list} && yum clean all && rm -rf /var/cache/yum"),
        PackageManager::Apk => format!("apk add --no-cache {list}"),
    }
}

fn copy(src: &str, dst: &str) -> Instruction {
    if src.contains(char::is_whitespace) || dst.contains(char::is_whitespace) {
        Instruction::exec(InstructionKind::Copy, &[src, dst])
    } else {
        Instruction::new(InstructionKind::Copy, format!("{src} {dst}"))
    }
}

/// File name the entrypoint script is written under next to the Dockerfile.
pub fn entrypoint_file_name(entrypoint_path: &str) -> &str {
    entrypoint_path.rsplit('/').next().filter(|s| !s.is_empty()).unwrap_or("entrypoint.sh")
}

/// Generate a single-stage Dockerfile for `spec`.
///
/// Layout: `FROM`; one `RUN` installing the system packages with cache
/// cleanup in the same layer; for the tags strategy an `ARG OPENMPI_VERSION`
/// and the OpenMPI/Horovod install steps (build each variant with
/// `--build-arg OPENMPI_VERSION=<x.y.z>`); one `COPY` per code copy; for the
/// entrypoint strategy the script `COPY`, a `chmod`, and exec-form
/// `ENTRYPOINT`/`CMD` with the default version arguments. Images of the ngc
/// strategy already carry both libraries and get no install steps.
pub fn generate_dockerfile(spec: &EnvironmentSpec) -> Result<DockerfileAst, GenerateError> {
    spec.check_strategy()?;
    let mut out = vec![Instruction::new(InstructionKind::From, spec.base_image.to_string())];

    if !spec.system_packages.is_empty() {
        out.push(Instruction::new(
            InstructionKind::Run,
            package_install(spec.package_manager, &spec.system_packages),
        ));
    }

    if spec.strategy == Strategy::Tags {
        out.push(Instruction::new(InstructionKind::Arg, OPENMPI_BUILD_ARG));
        let version = format!("${{{OPENMPI_BUILD_ARG}}}");
        let series = format!("${{{OPENMPI_BUILD_ARG}%.*}}");
        let vars = Placeholders {
            openmpi_version: &version,
            openmpi_series: &series,
            horovod_version: &spec.horovod_version,
        };
        for step in EntrypointConfig::with_installers(&spec.installers).installers {
            out.push(Instruction::new(InstructionKind::Run, expand(&step.command, &vars)));
        }
    }

    for (src, dst) in &spec.code_copies {
        out.push(copy(src, dst));
    }

    if spec.strategy == Strategy::Entrypoint {
        let path = spec
            .entrypoint_path
            .as_deref()
            .expect("check_strategy guarantees an entrypoint path");
        out.push(copy(entrypoint_file_name(path), path));
        out.push(Instruction::new(InstructionKind::Run, format!("chmod +x {path}")));
        out.push(Instruction::exec(InstructionKind::Entrypoint, &[path]));
        out.push(Instruction::exec(InstructionKind::Cmd, &default_version_args(spec)));
    }

    Ok(DockerfileAst::new(out))
}
