//! `hpcflow`: build, check and launch containerized multi-GPU training jobs
//! on HPC clusters without administrator rights.
//!
//! Exit codes: 0 success, 1 bad input or failed operation, 2 usage error,
//! 3 lint errors present (`image lint` only).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "hpcflow", version, about = "Containerized distributed training on HPC clusters")]
struct Cli {
    #[command(subcommand)]
    noun: Noun,
}

#[derive(Subcommand)]
enum Noun {
    /// Cluster profiles
    #[command(subcommand)]
    Profile(ProfileVerb),
    /// Dockerfiles
    #[command(subcommand)]
    Image(ImageVerb),
    /// Batch jobs
    #[command(subcommand)]
    Job(JobVerb),
    /// Scaling predictions
    #[command(subcommand)]
    Perf(PerfVerb),
    /// Benchmark logs
    #[command(subcommand)]
    Bench(BenchVerb),
}

#[derive(Subcommand)]
enum ProfileVerb {
    /// Parse and check a cluster profile
    Validate {
        path: PathBuf,
        /// One `severity:line:message` line per issue
        #[arg(long)]
        machine: bool,
    },
}

#[derive(Subcommand)]
enum ImageVerb {
    /// Generate a Dockerfile (and entrypoint script) from an environment spec
    Gen {
        #[arg(long)]
        spec: PathBuf,
        /// Dockerfile path, or a directory to write `Dockerfile` into
        #[arg(long)]
        out: PathBuf,
        /// `kind=path` lines for the written files
        #[arg(long)]
        machine: bool,
    },
    /// Report Dockerfile smells
    Lint {
        path: PathBuf,
        /// One `rule_id:severity:line:message` line per finding
        #[arg(long)]
        machine: bool,
    },
}

#[derive(Args, Clone)]
struct JobArgs {
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    nodes: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    gpus_per_node: u32,
    /// Image tags available in the registry (tags strategy)
    #[arg(long, value_delimiter = ',')]
    tags: Vec<String>,
    #[arg(long, default_value = "hpcflow")]
    job_name: String,
    /// Container name; derived from the image when omitted
    #[arg(long)]
    container_name: Option<String>,
    /// HH:MM:SS; the profile's default_walltime when omitted
    #[arg(long)]
    walltime: Option<String>,
    /// Working directory mount as HOST:CONTAINER
    #[arg(long, default_value = "$PWD:/workspace")]
    mount: String,
    /// Extra environment for every rank, NAME=VALUE
    #[arg(long = "env")]
    env: Vec<String>,
    /// Command run inside the container on every rank
    #[arg(last = true)]
    command: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Setup,
    Launch,
    All,
}

#[derive(Subcommand)]
enum JobVerb {
    /// Write the batch script and the udocker setup script
    Gen {
        #[command(flatten)]
        job: JobArgs,
        /// Batch script path; the setup script goes next to it
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        machine: bool,
    },
    /// Print the commands a job would run, one per line
    DryRun {
        #[command(flatten)]
        job: JobArgs,
        #[arg(long, value_enum, default_value_t = Stage::All)]
        stage: Stage,
        #[arg(long)]
        machine: bool,
    },
    /// Run the job on the mock scheduler with local rank processes
    MockRun {
        #[command(flatten)]
        job: JobArgs,
        /// Program each rank runs instead of the container (split on spaces)
        #[arg(long, default_value = "env")]
        rank_command: String,
        /// CSV `rank,node_index,local_rank,exit_code`
        #[arg(long)]
        machine: bool,
    },
}

#[derive(Subcommand)]
enum PerfVerb {
    /// Predicted throughput and speedup over a range of GPU counts
    Predict(PredictArgs),
}

#[derive(Args)]
struct PredictArgs {
    /// Built-in model: inceptionv3, resnet50, resnet101 or all
    #[arg(long, conflicts_with = "params")]
    model: Option<String>,
    /// Parameter count of a custom model
    #[arg(long, requires = "batch")]
    params: Option<u64>,
    /// Batch size per GPU of a custom model
    #[arg(long)]
    batch: Option<u32>,
    #[arg(long, default_value_t = 4)]
    bytes_per_param: u64,
    /// Measured single-GPU throughput
    #[arg(long)]
    images_per_sec: f64,
    /// Inter-node bandwidth in bytes/second
    #[arg(long, required_unless_present = "ideal")]
    link_bandwidth: Option<f64>,
    /// Intra-node bandwidth in bytes/second; defaults to the link bandwidth
    #[arg(long)]
    intra_bandwidth: Option<f64>,
    /// Seconds per ring step
    #[arg(long, default_value_t = 0.0)]
    latency: f64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    gpus_per_node: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    min_gpus: u32,
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..))]
    max_gpus: u32,
    /// Free communication: the ideal speedup line
    #[arg(long)]
    ideal: bool,
    #[arg(long)]
    machine: bool,
}

#[derive(Subcommand)]
enum BenchVerb {
    /// Mean, 95% confidence interval and speedup per benchmark log
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        /// 1-GPU log to compare against, if not among the logs
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// CSV `gpus,mean,ci95,speedup`
        #[arg(long)]
        machine: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Noun::Perf(PerfVerb::Predict(args)) = &cli.noun {
        if args.min_gpus > args.max_gpus {
            Cli::command()
                .error(ErrorKind::ArgumentConflict, "--min-gpus is larger than --max-gpus")
                .exit();
        }
    }
    let result = match cli.noun {
        Noun::Profile(ProfileVerb::Validate { path, machine }) => commands::profile_validate(&path, machine),
        Noun::Image(ImageVerb::Gen { spec, out, machine }) => commands::image_gen(&spec, &out, machine),
        Noun::Image(ImageVerb::Lint { path, machine }) => commands::image_lint(&path, machine),
        Noun::Job(JobVerb::Gen { job, out, machine }) => commands::job_gen(&job, &out, machine),
        Noun::Job(JobVerb::DryRun { job, stage, machine }) => commands::job_dry_run(&job, stage, machine),
        Noun::Job(JobVerb::MockRun {
            job,
            rank_command,
            machine,
        }) => commands::job_mock_run(&job, &rank_command, machine),
        Noun::Perf(PerfVerb::Predict(args)) => commands::perf_predict(&args),
        Noun::Bench(BenchVerb::Report {
            logs,
            warmup,
            baseline,
            machine,
        }) => commands::bench_report(&logs, warmup, baseline.as_deref(), machine),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
