use std::collections::BTreeMap;
use std::process::{Command, Stdio};

use super::RunnerError;
use crate::launch::{EnvValue, JobScript, LaunchPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobState {
    Pending,
    Running,
    Completed,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankResult {
    pub rank: u32,
    /// None when the process could not be started or was killed.
    pub exit_code: Option<i32>,
    pub env: BTreeMap<String, String>,
    pub error: Option<String>,
}

impl RankResult {
    pub fn succeeded(&self) -> bool {
        self.exit_code == Some(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankGridResult {
    pub ranks: Vec<RankResult>,
}

impl RankGridResult {
    pub fn success(&self) -> bool {
        self.ranks.iter().all(RankResult::succeeded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockJob {
    pub job_id: u64,
    pub state: JobState,
    pub script: JobScript,
    pub rank_results: Vec<RankResult>,
}

/// `KEY=VALUE` lines; other lines are ignored.
pub fn parse_env_snapshot(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .filter(|(k, _)| !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// OpenMPI's names for the rank variables.
pub fn openmpi_aliases() -> BTreeMap<String, String> {
    [
        ("OMPI_COMM_WORLD_RANK", "RANK"),
        ("OMPI_COMM_WORLD_SIZE", "SIZE"),
        ("OMPI_COMM_WORLD_LOCAL_RANK", "LOCAL_RANK"),
    ]
    .into_iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect()
}

pub fn mock_run_ranks(plan: &LaunchPlan, rank_command: &[String]) -> Result<RankGridResult, RunnerError> {
    mock_run_ranks_with(plan, rank_command, &BTreeMap::new())
}

/// Start one local process per rank, all at once, and wait for them.
///
/// Each rank sees `RANK`, `SIZE`, `LOCAL_RANK`, `NODE_INDEX`, the plan's
/// exports, and every `aliases` name set to the value of the variable it
/// maps to. Ranks fill node 0 first. A rank's stdout is read back as its
/// `KEY=VALUE` environment snapshot.
pub fn mock_run_ranks_with(
    plan: &LaunchPlan,
    rank_command: &[String],
    aliases: &BTreeMap<String, String>,
) -> Result<RankGridResult, RunnerError> {
    let (program, args) = rank_command.split_first().ok_or(RunnerError::EmptyRankCommand)?;
    let per_node = plan.slots_per_node.max(1);

    let mut exports: BTreeMap<String, String> = BTreeMap::new();
    for (name, value) in &plan.env_exports {
        match value {
            EnvValue::Set(v) => {
                exports.insert(name.clone(), v.clone());
            }
            EnvValue::Passthrough => {
                if let Ok(v) = std::env::var(name) {
                    exports.insert(name.clone(), v);
                }
            }
        }
    }

    let children: Vec<_> = (0..plan.total_ranks)
        .map(|rank| {
            let mut env = exports.clone();
            env.insert("RANK".into(), rank.to_string());
            env.insert("SIZE".into(), plan.total_ranks.to_string());
            env.insert("LOCAL_RANK".into(), (rank % per_node).to_string());
            env.insert("NODE_INDEX".into(), (rank / per_node).to_string());
            for (alias, target) in aliases {
                if let Some(v) = env.get(target).cloned() {
                    env.insert(alias.clone(), v);
                }
            }
            let child = Command::new(program)
                .args(args)
                .envs(&env)
                .stdin(Stdio::null())
                .stdout(Stdio::piped())
                .stderr(Stdio::piped())
                .spawn();
            (rank, child)
        })
        .collect();

    let ranks = children
        .into_iter()
        .map(|(rank, child)| match child.and_then(|c| c.wait_with_output()) {
            Ok(out) => RankResult {
                rank,
                exit_code: out.status.code(),
                env: parse_env_snapshot(&String::from_utf8_lossy(&out.stdout)),
                error: None,
            },
            Err(e) => RankResult {
                rank,
                exit_code: None,
                env: BTreeMap::new(),
                error: Some(e.to_string()),
            },
        })
        .collect();
    Ok(RankGridResult { ranks })
}

/// In-process stand-in for a batch system. Jobs advance one state per
/// `poll`: pending, running, then completed or failed once the ranks ran.
#[derive(Debug, Clone)]
pub struct MockScheduler {
    rank_command: Vec<String>,
    aliases: BTreeMap<String, String>,
    next_id: u64,
    jobs: BTreeMap<u64, MockJob>,
}

impl MockScheduler {
    /// `rank_command` replaces the container launch on every rank.
    pub fn new(rank_command: Vec<String>) -> Self {
        MockScheduler {
            rank_command,
            aliases: BTreeMap::new(),
            next_id: 1,
            jobs: BTreeMap::new(),
        }
    }

    pub fn with_aliases(mut self, aliases: BTreeMap<String, String>) -> Self {
        self.aliases = aliases;
        self
    }

    pub fn submit(&mut self, script: JobScript) -> Result<u64, RunnerError> {
        let prefix = format!("{} ", script.plan.launcher);
        let launchers = script.text.lines().filter(|l| l.starts_with(&prefix)).count();
        if launchers != 1 {
            return Err(RunnerError::LauncherLines(launchers));
        }
        let id = self.next_id;
        self.next_id += 1;
        self.jobs.insert(
            id,
            MockJob {
                job_id: id,
                state: JobState::Pending,
                script,
                rank_results: Vec::new(),
            },
        );
        Ok(id)
    }

    pub fn poll(&mut self, id: u64) -> Result<JobState, RunnerError> {
        let job = self.jobs.get_mut(&id).ok_or(RunnerError::UnknownJob(id))?;
        match job.state {
            JobState::Pending => job.state = JobState::Running,
            JobState::Running => {
                let grid = mock_run_ranks_with(&job.script.plan, &self.rank_command, &self.aliases)?;
                job.state = if grid.success() { JobState::Completed } else { JobState::Failed };
                job.rank_results = grid.ranks;
            }
            JobState::Completed | JobState::Failed => {}
        }
        Ok(job.state)
    }

    /// Poll until the job reaches a terminal state.
    pub fn wait(&mut self, id: u64) -> Result<JobState, RunnerError> {
        loop {
            let state = self.poll(id)?;
            if state.is_terminal() {
                return Ok(state);
            }
        }
    }

    pub fn job(&self, id: u64) -> Option<&MockJob> {
        self.jobs.get(&id)
    }
}
