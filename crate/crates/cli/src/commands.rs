use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};

use hpcflow_core::dockerfile::{entrypoint_file_name, generate_dockerfile, parse_dockerfile, render_dockerfile};
use hpcflow_core::launch::{
    plan_launch, render_job_script, render_mock_script, render_udocker_setup, CommandLine, JobRequest, LaunchPlan,
};
use hpcflow_core::lint::{lint, Severity};
use hpcflow_core::perf::{
    benchmark_models, parse_bench_log, predict, render_csv, speedup_table, summarize, BenchRun, ModelSpec,
    ScalingInputs,
};
use hpcflow_core::profiles::{
    parse_cluster_profile, parse_env_spec, validate_profile, ClusterProfile, EnvironmentSpec, ProfileError,
    Severity as IssueSeverity,
    Strategy,
};
use hpcflow_core::recon::{generate_entrypoint, reconcile, EntrypointConfig, ReconcilePlan};
use hpcflow_core::runner::{dry_run, JobState, MockScheduler};

use crate::{JobArgs, PredictArgs, Stage};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str, executable: bool) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?;
    #[cfg(unix)]
    if executable {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o755))
            .with_context(|| format!("cannot make {} executable", path.display()))?;
    }
    Ok(())
}

fn load_cluster(path: &Path) -> Result<ClusterProfile> {
    let parsed = parse_cluster_profile(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    for note in &parsed.notes {
        eprintln!("{}: {note}", path.display());
    }
    Ok(parsed.value)
}

fn load_spec(path: &Path) -> Result<EnvironmentSpec> {
    let parsed = parse_env_spec(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    for note in &parsed.notes {
        eprintln!("{}: {note}", path.display());
    }
    Ok(parsed.value)
}

pub fn profile_validate(path: &Path, machine: bool) -> Result<ExitCode> {
    let parsed = match parse_cluster_profile(&read(path)?) {
        Ok(parsed) => parsed,
        Err(e) if machine => {
            let line = match &e {
                ProfileError::Syntax { line, .. } | ProfileError::InvalidValue { line, .. } => line.to_string(),
                _ => String::new(),
            };
            println!("error:{line}:{e}");
            return Ok(ExitCode::from(1));
        }
        Err(e) => return Err(anyhow::Error::new(e).context(format!("in {}", path.display()))),
    };
    let mut issues = parsed.notes;
    issues.extend(validate_profile(&parsed.value));
    let errors = issues.iter().filter(|i| i.severity == IssueSeverity::Error).count();
    if machine {
        for i in &issues {
            let line = i.line.map(|l| l.to_string()).unwrap_or_default();
            println!("{}:{line}:{}", i.severity, i.message);
        }
    } else {
        for i in &issues {
            println!("{}: {i}", path.display());
        }
        let p = &parsed.value;
        let verdict = if errors == 0 { "valid" } else { "invalid" };
        println!(
            "profile `{}` {verdict}: {} GPU nodes × {} GPUs, OpenMPI {}, scheduler {}",
            p.name, p.gpu_nodes, p.gpus_per_node, p.openmpi_version, p.scheduler
        );
    }
    Ok(ExitCode::from(if errors == 0 { 0 } else { 1 }))
}

pub fn image_gen(spec_path: &Path, out: &Path, machine: bool) -> Result<ExitCode> {
    let spec = load_spec(spec_path)?;
    let ast = generate_dockerfile(&spec)?;
    let dockerfile = if out.is_dir() { out.join("Dockerfile") } else { out.to_path_buf() };
    write(&dockerfile, &render_dockerfile(&ast), false)?;
    let mut written = vec![("dockerfile", dockerfile.clone())];
    if spec.strategy == Strategy::Entrypoint {
        let path = spec.entrypoint_path.as_deref().unwrap_or_default();
        let script = dockerfile
            .parent()
            .unwrap_or(Path::new("."))
            .join(entrypoint_file_name(path));
        write(&script, &generate_entrypoint(&EntrypointConfig::with_installers(&spec.installers)), true)?;
        written.push(("entrypoint", script));
    }
    for (kind, path) in written {
        if machine {
            println!("{kind}={}", path.display());
        } else {
            println!("wrote {kind} {}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn image_lint(path: &Path, machine: bool) -> Result<ExitCode> {
    let ast = parse_dockerfile(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    let report = lint(&ast);
    for f in &report.findings {
        if machine {
            println!("{}", f.machine_line());
        } else {
            println!("{}:{}: {} [{}] {}", path.display(), f.line, f.severity, f.rule_id, f.message);
            println!("    fix: {}", f.suggestion);
        }
    }
    if !machine {
        println!(
            "{} error(s), {} warning(s), {} info",
            report.count(Severity::Error),
            report.count(Severity::Warning),
            report.count(Severity::Info)
        );
    }
    Ok(ExitCode::from(if report.has_errors() { 3 } else { 0 }))
}

struct Job {
    cluster: ClusterProfile,
    recon: ReconcilePlan,
    request: JobRequest,
    plan: LaunchPlan,
}

fn prepare_job(args: &JobArgs) -> Result<Job> {
    let cluster = load_cluster(&args.profile)?;
    let spec = load_spec(&args.spec)?;
    let tags = (!args.tags.is_empty()).then_some(args.tags.as_slice());
    let recon = reconcile(&spec, &cluster, tags)?;
    eprintln!("{}", recon.match_note);
    let mut request = JobRequest::new(&recon, args.nodes, args.gpus_per_node, args.command.clone());
    request.job_name = args.job_name.clone();
    request.walltime = args.walltime.clone();
    if let Some(name) = &args.container_name {
        request.container_name = name.clone();
    }
    let (host, dst) = args
        .mount
        .split_once(':')
        .ok_or_else(|| anyhow!("--mount `{}` is not HOST:CONTAINER", args.mount))?;
    request.workdir_mount = (host.to_string(), dst.to_string());
    let mut extra_env = BTreeMap::new();
    for pair in &args.env {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("--env `{pair}` is not NAME=VALUE"))?;
        extra_env.insert(k.to_string(), v.to_string());
    }
    request.extra_env = extra_env;
    let plan = plan_launch(&cluster, &recon, &request)?;
    Ok(Job {
        cluster,
        recon,
        request,
        plan,
    })
}

fn setup_path(script: &Path) -> PathBuf {
    let stem = script.file_stem().and_then(|s| s.to_str()).unwrap_or("job");
    script.with_file_name(format!("{stem}.setup.sh"))
}

pub fn job_gen(args: &JobArgs, out: &Path, machine: bool) -> Result<ExitCode> {
    let job = prepare_job(args)?;
    let script = render_job_script(&job.plan, &job.cluster, &job.request)?;
    let setup = render_udocker_setup(&job.recon, &job.request.container_name)?;
    let mut setup_text = String::from("#!/bin/sh\n# Prepare the container once before submitting the job.\nset -e\n");
    setup_text.push_str(&dry_run(&setup).to_string());
    write(out, &script.text, true)?;
    let setup_file = setup_path(out);
    write(&setup_file, &setup_text, true)?;
    if machine {
        println!("job_script={}\nsetup_script={}", out.display(), setup_file.display());
    } else {
        println!(
            "wrote {} ({} ranks on {} node(s)) and {}",
            out.display(),
            job.plan.total_ranks,
            job.plan.nodes,
            setup_file.display()
        );
        println!("submit with: sbatch {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

pub fn job_dry_run(args: &JobArgs, stage: Stage, _machine: bool) -> Result<ExitCode> {
    let job = prepare_job(args)?;
    let mut commands: Vec<CommandLine> = Vec::new();
    if stage != Stage::Launch {
        commands.extend(render_udocker_setup(&job.recon, &job.request.container_name)?);
    }
    if stage != Stage::Setup {
        commands.push(job.plan.launch_command());
    }
    // the transcript is already one command per line
    print!("{}", dry_run(&commands));
    Ok(ExitCode::SUCCESS)
}

pub fn job_mock_run(args: &JobArgs, rank_command: &str, machine: bool) -> Result<ExitCode> {
    let job = prepare_job(args)?;
    let rank_command: Vec<String> = rank_command.split_whitespace().map(str::to_string).collect();
    if rank_command.is_empty() {
        bail!("--rank-command is empty");
    }
    let script = render_mock_script(&job.plan, &job.cluster, &job.request);
    let mut scheduler = MockScheduler::new(rank_command);
    let id = scheduler.submit(script)?;
    let state = scheduler.wait(id)?;
    let finished = scheduler.job(id).expect("submitted job exists");
    if machine {
        println!("rank,node_index,local_rank,exit_code");
    } else {
        println!("job {id}: {} ranks", job.plan.total_ranks);
        println!("{:>5} {:>5} {:>6} {:>5}", "rank", "node", "local", "exit");
    }
    for r in &finished.rank_results {
        let get = |k: &str| r.env.get(k).cloned().unwrap_or_else(|| "?".to_string());
        let exit = r.exit_code.map(|c| c.to_string()).unwrap_or_else(|| "-".to_string());
        if machine {
            println!("{},{},{},{exit}", r.rank, get("NODE_INDEX"), get("LOCAL_RANK"));
        } else {
            println!("{:>5} {:>5} {:>6} {:>5}", r.rank, get("NODE_INDEX"), get("LOCAL_RANK"), exit);
        }
        if let Some(e) = &r.error {
            eprintln!("rank {}: {e}", r.rank);
        }
    }
    if state == JobState::Completed {
        if !machine {
            println!("job {id} completed");
        }
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("job {id} failed");
        Ok(ExitCode::from(1))
    }
}

fn models(args: &PredictArgs) -> Result<Vec<ModelSpec>> {
    if let Some(params) = args.params {
        let batch = args.batch.ok_or_else(|| anyhow!("--params needs --batch"))?;
        let mut m = ModelSpec::new("custom", params, batch);
        m.bytes_per_param = args.bytes_per_param;
        return Ok(vec![m]);
    }
    let name = args.model.as_deref().unwrap_or("all").to_ascii_lowercase();
    let all = benchmark_models();
    let mut chosen: Vec<ModelSpec> = all
        .into_iter()
        .filter(|m| name == "all" || m.name.to_ascii_lowercase() == name)
        .collect();
    if chosen.is_empty() {
        bail!("unknown model `{name}` (inceptionv3, resnet50, resnet101, all)");
    }
    for m in &mut chosen {
        m.bytes_per_param = args.bytes_per_param;
    }
    Ok(chosen)
}

pub fn perf_predict(args: &PredictArgs) -> Result<ExitCode> {
    let (link, intra, latency) = if args.ideal {
        (f64::INFINITY, f64::INFINITY, 0.0)
    } else {
        let link = args.link_bandwidth.expect("clap requires it without --ideal");
        (link, args.intra_bandwidth.unwrap_or(link), args.latency)
    };
    println!("model,gpus,images_per_sec,speedup,comm_seconds,comp_seconds");
    for model in models(args)? {
        let inputs = ScalingInputs {
            model: model.clone(),
            single_gpu_images_per_sec: args.images_per_sec,
            link_bandwidth: link,
            link_latency: latency,
            gpus_per_node: args.gpus_per_node,
            intra_node_bandwidth: intra,
        };
        for p in args.min_gpus..=args.max_gpus {
            let e = predict(&inputs, p)?;
            println!(
                "{},{p},{:.4},{:.4},{:.6},{:.6}",
                model.name, e.predicted_images_per_sec, e.speedup, e.comm_seconds_per_step, e.comp_seconds_per_step
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn bench_report(logs: &[PathBuf], warmup: usize, baseline: Option<&Path>, machine: bool) -> Result<ExitCode> {
    let load = |path: &Path| -> Result<BenchRun> {
        parse_bench_log(&read(path)?, warmup).with_context(|| format!("in {}", path.display()))
    };
    let mut runs = logs.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    if let Some(b) = baseline {
        let run = load(b)?;
        if run.gpus != 1 {
            bail!("baseline {} is a {}-GPU run", b.display(), run.gpus);
        }
        runs.retain(|r| r.gpus != 1);
        runs.push(run);
    }
    let rows = speedup_table(&runs)?;
    if machine {
        print!("{}", render_csv(&rows));
    } else {
        println!("{:>4} {:>4} {:>12} {:>10} {:>8}", "gpus", "n", "images/sec", "ci95 ±", "speedup");
        for row in &rows {
            let run = runs.iter().find(|r| r.gpus == row.gpus).expect("row comes from a run");
            let n = summarize(run, None)?.n;
            println!("{:>4} {:>4} {:>12.2} {:>10.2} {:>8.3}", row.gpus, n, row.mean, row.ci95, row.speedup);
        }
    }
    Ok(ExitCode::SUCCESS)
}
