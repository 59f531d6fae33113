//! Executing generated commands: for real, recorded, or against the mock
//! scheduler and a local rank grid.

mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::process::Command;

use thiserror::Error;

use crate::launch::{CommandLine, LaunchPlan};

pub use mock::{
    mock_run_ranks, mock_run_ranks_with, openmpi_aliases, parse_env_snapshot, JobState, MockJob, MockScheduler,
    RankGridResult, RankResult,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RunnerError {
    #[error("cannot start `{program}`: {message}")]
    Spawn { program: String, message: String },
    #[error("job script has {0} launcher lines, expected exactly one")]
    LauncherLines(usize),
    #[error("no job with id {0}")]
    UnknownJob(u64),
    #[error("rank command is empty")]
    EmptyRankCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecOutcome {
    pub exit_code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Something that receives commands. Every command handed to `execute` is
/// either recorded or run.
pub trait CommandExecutor {
    fn records_only(&self) -> bool;
    fn executes_locally(&self) -> bool;
    fn execute(&mut self, command: &CommandLine) -> Result<ExecOutcome, RunnerError>;
}

/// Keeps the commands and reports success for each.
#[derive(Debug, Clone, Default)]
pub struct RecordingExecutor {
    pub commands: Vec<CommandLine>,
}

impl CommandExecutor for RecordingExecutor {
    fn records_only(&self) -> bool {
        true
    }

    fn executes_locally(&self) -> bool {
        false
    }

    fn execute(&mut self, command: &CommandLine) -> Result<ExecOutcome, RunnerError> {
        self.commands.push(command.clone());
        Ok(ExecOutcome::default())
    }
}

/// Runs commands as child processes of this one, without a shell.
#[derive(Debug, Clone, Default)]
pub struct LocalExecutor {
    pub env: BTreeMap<String, String>,
}

impl CommandExecutor for LocalExecutor {
    fn records_only(&self) -> bool {
        false
    }

    fn executes_locally(&self) -> bool {
        true
    }

    fn execute(&mut self, command: &CommandLine) -> Result<ExecOutcome, RunnerError> {
        let out = Command::new(&command.program)
            .args(&command.args)
            .envs(&self.env)
            .output()
            .map_err(|e| RunnerError::Spawn {
                program: command.program.clone(),
                message: e.to_string(),
            })?;
        Ok(ExecOutcome {
            // killed by a signal
            exit_code: out.status.code().unwrap_or(128),
            stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
            stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
        })
    }
}

/// Execute `commands` in order, stopping after the first non-zero exit.
pub fn execute_all(executor: &mut dyn CommandExecutor, commands: &[CommandLine]) -> Result<Vec<ExecOutcome>, RunnerError> {
    let mut outcomes = Vec::new();
    for c in commands {
        let outcome = executor.execute(c)?;
        let failed = outcome.exit_code != 0;
        outcomes.push(outcome);
        if failed {
            break;
        }
    }
    Ok(outcomes)
}

/// Commands as an executor would receive them, one shell-quoted line each.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub commands: Vec<CommandLine>,
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.commands {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn dry_run(commands: &[CommandLine]) -> Transcript {
    Transcript {
        commands: commands.to_vec(),
    }
}

/// The launch step of a plan as a transcript.
pub fn dry_run_plan(plan: &LaunchPlan) -> Transcript {
    dry_run(&[plan.launch_command()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmds() -> Vec<CommandLine> {
        vec![
            CommandLine::new("udocker", &["pull", "img:1"]),
            CommandLine::new("udocker", &["create", "--name=c", "img:1"]),
        ]
    }

    #[test]
    fn dry_run_matches_recording() {
        let t = dry_run(&cmds());
        let mut rec = RecordingExecutor::default();
        execute_all(&mut rec, &cmds()).unwrap();
        assert_eq!(rec.commands, t.commands);
        assert_eq!(t.to_string(), "udocker pull img:1\nudocker create --name=c img:1\n");
        assert_eq!(dry_run(&cmds()).to_string(), t.to_string());
        assert_eq!(dry_run(&[]).to_string(), "");
        assert!(rec.records_only() && !rec.executes_locally());
    }

    #[test]
    fn local_executor_runs_and_stops_on_failure() {
        let mut exec = LocalExecutor::default();
        exec.env.insert("HPCFLOW_TEST".into(), "42".into());
        let commands = [
            CommandLine::new("sh", &["-c", "echo $HPCFLOW_TEST"]),
            CommandLine::new("sh", &["-c", "exit 3"]),
            CommandLine::new("sh", &["-c", "echo never"]),
        ];
        let out = execute_all(&mut exec, &commands).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].stdout, "42\n");
        assert_eq!(out[1].exit_code, 3);
        let err = exec.execute(&CommandLine::new("/nonexistent/prog", &[] as &[&str])).unwrap_err();
        assert!(matches!(err, RunnerError::Spawn { .. }));
    }
}
