//! Job planning: mpirun arguments, the udocker command sequence, and the
//! Slurm batch script that ties them together.

mod privilege;
mod scripts;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::profiles::{is_walltime, ClusterProfile, Scheduler, Strategy};
use crate::recon::ReconcilePlan;
use crate::shell;

pub use privilege::{scan_privileged, PrivilegedUse};
pub use scripts::{render_install_script, render_udocker_setup, InstallConfig, DEFAULT_INSTALL_PREFIX, DEFAULT_UDOCKER_URL};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LaunchError {
    #[error("request needs {requested} {what} but the cluster has {available}")]
    CapacityExceeded {
        what: &'static str,
        requested: u32,
        available: u32,
    },
    #[error("an empty user command only works with the entrypoint strategy (got {0})")]
    EmptyCommand(Strategy),
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("cluster `{0}` has no batch scheduler; use the mock runtime (`hpcflow job mock-run`)")]
    NoScheduler(String),
}

fn invalid(field: &'static str, message: impl Into<String>) -> LaunchError {
    LaunchError::Invalid {
        field,
        message: message.into(),
    }
}

/// Container names: a letter or digit followed by letters, digits, `_`, `.`, `-`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphanumeric())
        && chars.all(|c| c.is_ascii_alphanumeric() || "_.-".contains(c))
}

fn is_env_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Container name derived from an image reference: the last repository
/// component and the tag, e.g. `org/multigpu:ompi4.0` → `multigpu-ompi4.0`.
pub fn container_name_for(image_ref: &str) -> String {
    let without_digest = image_ref.split('@').next().unwrap_or(image_ref);
    let last = without_digest.rsplit('/').next().unwrap_or(without_digest);
    let name: String = last
        .replace(':', "-")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.-".contains(c) { c } else { '-' })
        .collect();
    if is_identifier(&name) {
        name
    } else {
        format!("c{name}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRequest {
    pub nodes: u32,
    pub gpus_per_node: u32,
    pub container_name: String,
    pub image_ref: String,
    /// (host path, container path)
    pub workdir_mount: (String, String),
    pub user_command: Vec<String>,
    pub job_name: String,
    /// `HH:MM:SS`; the cluster's `default_walltime` when unset.
    pub walltime: Option<String>,
    pub extra_env: BTreeMap<String, String>,
}

impl JobRequest {
    /// A request for the plan's image with a derived container name and the
    /// current directory mounted at `/workspace`.
    pub fn new(recon: &ReconcilePlan, nodes: u32, gpus_per_node: u32, user_command: Vec<String>) -> Self {
        JobRequest {
            nodes,
            gpus_per_node,
            container_name: container_name_for(&recon.image_ref),
            image_ref: recon.image_ref.clone(),
            workdir_mount: ("$PWD".to_string(), "/workspace".to_string()),
            user_command,
            job_name: "hpcflow".to_string(),
            walltime: None,
            extra_env: BTreeMap::new(),
        }
    }
}

/// How an exported variable gets its value on the ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvValue {
    /// Exported with this value before the launch.
    Set(String),
    /// Forwarded from the launching shell as is.
    Passthrough,
}

/// How udocker maps the calling user into the container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UserMapping {
    /// `--hostauth --user=<user>`; `user` is usually the literal `$USER`.
    HostAuth { user: String },
    /// Run as udocker's default container user.
    Default,
}

/// Adjustable parts of the launch command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchTemplate {
    pub launcher: String,
    /// MCA transport selection. The default keeps GPU collectives on NCCL
    /// (chosen by Horovod) and sends the remaining MPI traffic through the
    /// ob1 PML with the legacy openib BTL disabled.
    pub transport_args: Vec<String>,
    pub user_mapping: UserMapping,
}

impl Default for LaunchTemplate {
    fn default() -> Self {
        LaunchTemplate {
            launcher: "mpirun".to_string(),
            transport_args: ["-mca", "pml", "ob1", "-mca", "btl", "^openib"]
                .map(String::from)
                .to_vec(),
            user_mapping: UserMapping::HostAuth {
                user: "$USER".to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchPlan {
    pub total_ranks: u32,
    pub slots_per_node: u32,
    pub nodes: u32,
    pub launcher: String,
    pub mpirun_args: Vec<String>,
    pub env_exports: BTreeMap<String, EnvValue>,
    pub container_runtime: String,
    pub udocker_run_args: Vec<String>,
    pub scheduler_directives: Vec<(String, String)>,
}

impl LaunchPlan {
    /// The launcher invocation as an argument vector.
    pub fn launch_command(&self) -> CommandLine {
        let mut args = self.mpirun_args.clone();
        args.push(self.container_runtime.clone());
        args.push("run".to_string());
        args.extend(self.udocker_run_args.iter().cloned());
        CommandLine {
            program: self.launcher.clone(),
            args,
        }
    }
}

/// One command of a transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandLine {
    pub program: String,
    pub args: Vec<String>,
}

impl CommandLine {
    pub fn new<S: AsRef<str>>(program: &str, args: &[S]) -> Self {
        CommandLine {
            program: program.to_string(),
            args: args.iter().map(|a| a.as_ref().to_string()).collect(),
        }
    }
}

impl fmt::Display for CommandLine {
    /// Shell-quoted, ready to paste into a terminal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&shell::quote(&self.program))?;
        for a in &self.args {
            write!(f, " {}", shell::quote(a))?;
        }
        Ok(())
    }
}

pub fn plan_launch(cluster: &ClusterProfile, recon: &ReconcilePlan, req: &JobRequest) -> Result<LaunchPlan, LaunchError> {
    plan_launch_with(cluster, recon, req, &LaunchTemplate::default())
}

/// Build the launch plan. One rank runs per GPU, so the plan has
/// `nodes × gpus_per_node` ranks placed `gpus_per_node` to a node.
pub fn plan_launch_with(
    cluster: &ClusterProfile,
    recon: &ReconcilePlan,
    req: &JobRequest,
    template: &LaunchTemplate,
) -> Result<LaunchPlan, LaunchError> {
    if req.nodes == 0 {
        return Err(invalid("nodes", "must be ≥ 1"));
    }
    if req.gpus_per_node == 0 {
        return Err(invalid("gpus_per_node", "must be ≥ 1"));
    }
    if req.nodes > cluster.gpu_nodes {
        return Err(LaunchError::CapacityExceeded {
            what: "nodes",
            requested: req.nodes,
            available: cluster.gpu_nodes,
        });
    }
    if req.gpus_per_node > cluster.gpus_per_node {
        return Err(LaunchError::CapacityExceeded {
            what: "GPUs per node",
            requested: req.gpus_per_node,
            available: cluster.gpus_per_node,
        });
    }
    if req.user_command.is_empty() && recon.strategy_used != Strategy::Entrypoint {
        return Err(LaunchError::EmptyCommand(recon.strategy_used));
    }
    if !is_identifier(&req.container_name) {
        return Err(invalid("container_name", format!("`{}` is not an identifier", req.container_name)));
    }
    if !is_identifier(&req.job_name) {
        return Err(invalid("job_name", format!("`{}` is not an identifier", req.job_name)));
    }
    let walltime = req.walltime.clone().or_else(|| cluster.default_walltime.clone());
    if let Some(w) = &walltime {
        if !is_walltime(w) {
            return Err(invalid("walltime", format!("`{w}` is not HH:MM:SS")));
        }
    }
    for (host, dst) in std::iter::once(&req.workdir_mount).chain(&cluster.default_mounts) {
        if host.is_empty() || dst.is_empty() || host.contains(':') || dst.contains(':') {
            return Err(invalid("mount", format!("`{host}:{dst}`")));
        }
    }

    let total_ranks = req.nodes * req.gpus_per_node;

    let mut env_exports = BTreeMap::new();
    env_exports.insert("NCCL_DEBUG".to_string(), EnvValue::Set("INFO".to_string()));
    env_exports.insert("PATH".to_string(), EnvValue::Passthrough);
    env_exports.insert("LD_LIBRARY_PATH".to_string(), EnvValue::Passthrough);
    for (k, v) in &req.extra_env {
        if !is_env_name(k) {
            return Err(invalid("extra_env", format!("`{k}` is not a variable name")));
        }
        env_exports.insert(k.clone(), EnvValue::Set(v.clone()));
    }

    let mut mpirun_args: Vec<String> = vec![
        "-np".into(),
        total_ranks.to_string(),
        "--map-by".into(),
        format!("ppr:{}:node", req.gpus_per_node),
        "-bind-to".into(),
        "none".into(),
    ];
    mpirun_args.extend(template.transport_args.iter().cloned());
    for name in env_exports.keys() {
        mpirun_args.push("-x".into());
        mpirun_args.push(name.clone());
    }

    let mut udocker_run_args = Vec::new();
    if let UserMapping::HostAuth { user } = &template.user_mapping {
        udocker_run_args.push("--hostauth".to_string());
        udocker_run_args.push(format!("--user={user}"));
    }
    for (host, dst) in std::iter::once(&req.workdir_mount).chain(&cluster.default_mounts) {
        udocker_run_args.push(format!("--volume={host}:{dst}"));
    }
    udocker_run_args.push(req.container_name.clone());
    udocker_run_args.extend(recon.runtime_args.iter().cloned());
    udocker_run_args.extend(req.user_command.iter().cloned());

    let mut scheduler_directives = vec![
        ("job-name".to_string(), req.job_name.clone()),
        ("nodes".to_string(), req.nodes.to_string()),
        ("ntasks-per-node".to_string(), req.gpus_per_node.to_string()),
        ("gres".to_string(), format!("gpu:{}", req.gpus_per_node)),
    ];
    if let Some(w) = walltime {
        scheduler_directives.push(("time".to_string(), w));
    }
    if let Some(p) = &cluster.partition {
        scheduler_directives.push(("partition".to_string(), p.clone()));
    }
    if let Some(a) = &cluster.account {
        scheduler_directives.push(("account".to_string(), a.clone()));
    }

    Ok(LaunchPlan {
        total_ranks,
        slots_per_node: req.gpus_per_node,
        nodes: req.nodes,
        launcher: template.launcher.clone(),
        mpirun_args,
        env_exports,
        container_runtime: cluster.container_runtime_path.clone(),
        udocker_run_args,
        scheduler_directives,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobScript {
    pub text: String,
    pub scheduler: Scheduler,
    pub plan: LaunchPlan,
}

/// Render the Slurm batch script: directives, module loads, exports, and a
/// single launcher line.
pub fn render_job_script(plan: &LaunchPlan, cluster: &ClusterProfile, req: &JobRequest) -> Result<JobScript, LaunchError> {
    if cluster.scheduler == Scheduler::None {
        return Err(LaunchError::NoScheduler(cluster.name.clone()));
    }
    Ok(script(plan, cluster, req, cluster.scheduler))
}

/// The same script for the mock scheduler, on any cluster.
pub fn render_mock_script(plan: &LaunchPlan, cluster: &ClusterProfile, req: &JobRequest) -> JobScript {
    script(plan, cluster, req, Scheduler::None)
}

fn script(plan: &LaunchPlan, cluster: &ClusterProfile, req: &JobRequest, scheduler: Scheduler) -> JobScript {
    debug_assert_eq!(req.nodes, plan.nodes);
    let mut text = String::from("#!/bin/bash\n");
    for (key, value) in &plan.scheduler_directives {
        text.push_str(&format!("#SBATCH --{key}={value}\n"));
    }
    text.push('\n');
    if !cluster.module_loads.is_empty() {
        for m in &cluster.module_loads {
            text.push_str(&format!("module load {}\n", shell::quote(m)));
        }
        text.push('\n');
    }
    let mut exported = false;
    for (name, value) in &plan.env_exports {
        if let EnvValue::Set(v) = value {
            text.push_str(&format!("export {name}={}\n", shell::quote(v)));
            exported = true;
        }
    }
    if exported {
        text.push('\n');
    }
    text.push_str(&plan.launch_command().to_string());
    text.push('\n');
    JobScript {
        text,
        scheduler,
        plan: plan.clone(),
    }
}
