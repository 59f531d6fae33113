//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output, Stdio};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;

use hpcflow_core::dockerfile::{
    generate_dockerfile, parse_dockerfile, render_dockerfile, DockerfileAst, Instruction, InstructionKind,
};
use hpcflow_core::launch::{
    plan_launch, render_install_script, render_job_script, render_mock_script, render_udocker_setup,
    scan_privileged, InstallConfig, JobRequest,
};
use hpcflow_core::lint::lint;
use hpcflow_core::perf::{
    benchmark_models, parse_bench_log, predict, summarize, BenchRun, ModelSpec, ScalingInputs,
};
use hpcflow_core::profiles::{parse_cluster_profile, parse_env_spec, ClusterProfile, EnvironmentSpec, InstallerStep};
use hpcflow_core::recon::{generate_entrypoint, reconcile, EntrypointConfig, STATE_DIR_ENV};
use hpcflow_core::runner::mock_run_ranks;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn cluster(name: &str) -> Result<ClusterProfile, String> {
    let text = read(&fixture(&format!("profiles/{name}.profile")))?;
    parse_cluster_profile(&text).map(|p| p.value).map_err(|e| e.to_string())
}

fn spec(name: &str) -> Result<EnvironmentSpec, String> {
    let text = read(&fixture(&format!("specs/{name}.env")))?;
    parse_env_spec(&text).map(|p| p.value).map_err(|e| e.to_string())
}

fn sample<S: Strategy>(runner: &mut TestRunner, strategy: &S) -> S::Value {
    strategy.new_tree(runner).expect("strategy generates").current()
}

fn lint_corpus() -> Result<Vec<PathBuf>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(fixture("lint"))
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "Dockerfile"))
        .collect();
    files.sort();
    Ok(files)
}

fn ac1() -> Check {
    let start = Instant::now();
    let files = lint_corpus()?;
    ensure(files.len() >= 10, || format!("only {} fixtures", files.len()))?;
    let mut labels_total = 0;
    for path in &files {
        let ast = parse_dockerfile(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut got: Vec<String> = lint(&ast)
            .findings
            .iter()
            .map(|f| format!("{}:{}", f.rule_id, f.line))
            .collect();
        got.sort();
        let mut want: Vec<String> = read(&path.with_extension("expected"))?.lines().map(str::to_string).collect();
        want.sort();
        labels_total += want.len();
        ensure(got == want, || format!("{}: got {got:?}, labelled {want:?}", path.display()))?;
    }

    let later = "FROM ubuntu:18.04\nRUN wget -P /tmp https://example.org/a.tar.gz\nRUN rm -f /tmp/a.tar.gz\n";
    let same = "FROM ubuntu:18.04\nRUN wget -P /tmp https://example.org/a.tar.gz && rm -f /tmp/a.tar.gz\n";
    let tf1 = |text: &str| -> Result<usize, String> {
        let ast = parse_dockerfile(text).map_err(|e| e.to_string())?;
        Ok(lint(&ast).findings.iter().filter(|f| f.rule_id == "TF1").count())
    };
    ensure(tf1(later)? == 1, || "TF1 missed a later-layer delete".into())?;
    ensure(tf1(same)? == 0, || "TF1 fired on a same-layer delete".into())?;

    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} fixtures, {labels_total} labels, 100% agreement, TF1 later/same layer 1/0, {elapsed:.2?} < 1s",
        files.len()
    ))
}

fn word() -> impl Strategy<Value = String> {
    "[a-z0-9_./=:-]{1,10}"
}

fn arb_instruction() -> impl Strategy<Value = Instruction> {
    let shell_kind = prop::sample::select(vec![
        InstructionKind::Run,
        InstructionKind::Copy,
        InstructionKind::Add,
        InstructionKind::Env,
        InstructionKind::Arg,
        InstructionKind::Workdir,
        InstructionKind::Entrypoint,
        InstructionKind::Cmd,
        InstructionKind::Expose,
        InstructionKind::User,
        InstructionKind::Label,
        InstructionKind::Volume,
    ]);
    let exec_kind = prop::sample::select(vec![
        InstructionKind::Run,
        InstructionKind::Cmd,
        InstructionKind::Entrypoint,
        InstructionKind::Copy,
    ]);
    prop_oneof![
        4 => (shell_kind, prop::collection::vec(word(), 1..5)).prop_map(|(k, w)| Instruction::new(k, w.join(" "))),
        2 => (exec_kind, prop::collection::vec("[a-z0-9 ./\"-]{0,8}", 0..4))
            .prop_map(|(k, toks)| Instruction::exec(k, &toks)),
        1 => "# [a-z0-9 ]{0,20}[a-z0-9]".prop_map(|c| Instruction::new(InstructionKind::Comment, c)),
    ]
}

fn arb_ast() -> impl Strategy<Value = DockerfileAst> {
    ("[a-z0-9]{1,8}(:[a-z0-9.]{1,6})?", prop::collection::vec(arb_instruction(), 0..12)).prop_map(|(image, body)| {
        let mut instructions = vec![Instruction::new(InstructionKind::From, image)];
        instructions.extend(body);
        DockerfileAst::new(instructions)
    })
}

fn fixed_point(ast: &DockerfileAst) -> Result<bool, String> {
    let once = parse_dockerfile(&render_dockerfile(ast)).map_err(|e| e.to_string())?;
    let twice = parse_dockerfile(&render_dockerfile(&once)).map_err(|e| e.to_string())?;
    Ok(once == twice && render_dockerfile(&once) == render_dockerfile(&twice))
}

fn ac2() -> Check {
    let files = lint_corpus()?;
    let mut mismatches = 0;
    for path in &files {
        let ast = parse_dockerfile(&read(path)?).map_err(|e| e.to_string())?;
        let again = parse_dockerfile(&render_dockerfile(&ast)).map_err(|e| e.to_string())?;
        if again != ast || !fixed_point(&ast)? {
            mismatches += 1;
        }
    }
    let mut runner = TestRunner::deterministic();
    let strategy = arb_ast();
    for _ in 0..200 {
        let ast = sample(&mut runner, &strategy);
        let once = parse_dockerfile(&render_dockerfile(&ast)).map_err(|e| e.to_string())?;
        if once != ast || !fixed_point(&ast)? {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    Ok(format!("{} corpus files + 200 random ASTs, 0 mismatches", files.len()))
}

fn entry(script: &Path, state: &Path, args: &[&str], stdin: &str) -> Result<Output, String> {
    use std::io::Write;
    let mut child = Command::new("sh")
        .arg(script)
        .args(args)
        .env(STATE_DIR_ENV, state)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    child
        .stdin
        .take()
        .expect("stdin is piped")
        .write_all(stdin.as_bytes())
        .map_err(|e| e.to_string())?;
    child.wait_with_output().map_err(|e| e.to_string())
}

fn ac3() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let log = dir.path().join("steps.log");
    let state = dir.path().join("state");
    let marker = state.join("installed-4.0.1-0.21.3");
    let stub = |name: &str, cmd: String| InstallerStep {
        name: name.into(),
        command: cmd,
    };
    let stubs = EntrypointConfig::with_installers(&[
        stub("openmpi", format!("echo openmpi-{{openmpi_version}} >> {}", log.display())),
        stub("horovod", format!("echo horovod-{{horovod_version}} >> {}", log.display())),
    ]);
    let script = dir.path().join("entry.sh");
    fs::write(&script, generate_entrypoint(&stubs)).map_err(|e| e.to_string())?;

    // first start: both installers in order, marker, then the command
    let probe = format!("test -e {} && echo command >> {}", marker.display(), log.display());
    let out = entry(&script, &state, &["4.0.1", "0.21.3", "sh", "-c", &probe], "")?;
    ensure(out.status.success(), || format!("first run failed: {out:?}"))?;
    let steps = read(&log)?;
    ensure(steps == "openmpi-4.0.1\nhorovod-0.21.3\ncommand\n", || format!("first run steps {steps:?}"))?;

    // second start: installers untouched
    let out = entry(&script, &state, &["4.0.1", "0.21.3", "sh", "-c", &probe], "")?;
    ensure(out.status.success(), || format!("second run failed: {out:?}"))?;
    let steps = read(&log)?;
    ensure(steps == "openmpi-4.0.1\nhorovod-0.21.3\ncommand\ncommand\n", || format!("second run steps {steps:?}"))?;

    for args in [&[][..], &["4.0.1"][..]] {
        let out = entry(&script, &dir.path().join("unused"), args, "")?;
        ensure(out.status.code() == Some(2), || format!("args {args:?} exited {:?}", out.status.code()))?;
    }

    // no command: the interactive shell reads our stdin
    let out = entry(&script, &state, &["4.0.1", "0.21.3"], "echo \"fallback $0\"\n")?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.success() && text == "fallback /bin/bash\n", || format!("fallback printed {text:?}"))?;

    let failing = EntrypointConfig::with_installers(&[
        stub("openmpi", "exit 7".into()),
        stub("horovod", format!("echo horovod >> {}", log.display())),
    ]);
    let bad_script = dir.path().join("bad.sh");
    let bad_state = dir.path().join("bad-state");
    fs::write(&bad_script, generate_entrypoint(&failing)).map_err(|e| e.to_string())?;
    let before = read(&log)?;
    let out = entry(&bad_script, &bad_state, &["4.0.1", "0.21.3", "true"], "")?;
    ensure(out.status.code() == Some(7), || format!("installer failure exited {:?}", out.status.code()))?;
    ensure(!bad_state.join("installed-4.0.1-0.21.3").exists(), || "marker written after failure".into())?;
    ensure(read(&log)? == before, || "ran past the failing installer".into())?;

    Ok("install+marker, skip on rerun, usage exit 2, /bin/bash fallback, failure exit 7 without marker".into())
}

fn request(recon: &hpcflow_core::recon::ReconcilePlan, cluster: &str) -> JobRequest {
    let words = |s: &str| s.split_whitespace().map(str::to_string).collect();
    let mut req = if cluster == "csic" {
        let mut r = JobRequest::new(
            recon,
            2,
            2,
            words("python /opt/benchmarks/tf_cnn_benchmarks.py --model=resnet50 --batch_size=256 --variable_update=horovod"),
        );
        r.job_name = "tf-benchmark".into();
        r
    } else {
        let mut r = JobRequest::new(recon, 1, 4, words("python /workspace/train.py --batch-size 32"));
        r.job_name = "downscaling".into();
        r
    };
    req.walltime = None;
    req
}

fn job_script(cluster_name: &str) -> Result<String, String> {
    let c = cluster(cluster_name)?;
    let recon = reconcile(&spec("benchmark")?, &c, None).map_err(|e| e.to_string())?;
    let req = request(&recon, cluster_name);
    let plan = plan_launch(&c, &recon, &req).map_err(|e| e.to_string())?;
    render_job_script(&plan, &c, &req).map(|s| s.text).map_err(|e| e.to_string())
}

fn np_of(c: &ClusterProfile, recon: &hpcflow_core::recon::ReconcilePlan, n: u32, g: u32) -> Result<(u32, String), String> {
    let req = JobRequest::new(recon, n, g, vec!["true".into()]);
    let plan = plan_launch(c, recon, &req).map_err(|e| e.to_string())?;
    let args = plan.launch_command().args;
    let pos = args.iter().position(|a| a == "-np").ok_or("no -np flag")?;
    Ok((plan.total_ranks, args[pos + 1].clone()))
}

fn ac4() -> Check {
    let csic = cluster("csic")?;
    let recon = reconcile(&spec("benchmark")?, &csic, None).map_err(|e| e.to_string())?;
    let mut big = csic.clone();
    big.gpu_nodes = 8;
    big.gpus_per_node = 8;
    for n in 1..=8 {
        for g in 1..=8 {
            let (ranks, np) = np_of(&big, &recon, n, g)?;
            ensure(ranks == n * g && np == (n * g).to_string(), || format!("{n}x{g}: {ranks} ranks, -np {np}"))?;
        }
    }
    ensure(np_of(&csic, &recon, 2, 2)?.1 == "4", || "2x2 is not -np 4".into())?;
    let mut six = csic.clone();
    six.gpu_nodes = 3;
    ensure(np_of(&six, &recon, 3, 2)?.1 == "6", || "3x2 is not -np 6".into())?;
    for name in ["csic", "forhlr2"] {
        let text = job_script(name)?;
        let golden = read(&fixture(&format!("golden/{name}_job.sh")))?;
        ensure(text == golden, || format!("{name} job script differs from golden file"))?;
        ensure(text == job_script(name)?, || format!("{name} job script is not stable"))?;
    }
    Ok("64 grids n*g ranks, 2x2 -np 4, 3x2 -np 6, csic+forhlr2 golden scripts byte-identical".into())
}

fn grid(c: &ClusterProfile, n: u32, g: u32) -> Result<Vec<(u32, u32, u32)>, String> {
    let mut c = c.clone();
    c.gpu_nodes = c.gpu_nodes.max(n);
    c.gpus_per_node = c.gpus_per_node.max(g);
    let recon = reconcile(&spec("benchmark")?, &c, None).map_err(|e| e.to_string())?;
    let plan = plan_launch(&c, &recon, &JobRequest::new(&recon, n, g, vec!["true".into()])).map_err(|e| e.to_string())?;
    let result = mock_run_ranks(&plan, &["env".to_string()]).map_err(|e| e.to_string())?;
    ensure(result.success(), || format!("{n}x{g}: a rank failed"))?;
    let var = |env: &BTreeMap<String, String>, k: &str| -> Result<u32, String> {
        env.get(k).and_then(|v| v.parse().ok()).ok_or(format!("rank lacks {k}"))
    };
    result
        .ranks
        .iter()
        .map(|r| Ok((var(&r.env, "RANK")?, var(&r.env, "LOCAL_RANK")?, var(&r.env, "NODE_INDEX")?)))
        .collect()
}

fn ac5() -> Check {
    let csic = cluster("csic")?;
    let cells = grid(&csic, 2, 2)?;
    let ranks: Vec<u32> = cells.iter().map(|c| c.0).collect();
    let locals: Vec<u32> = cells.iter().map(|c| c.1).collect();
    let nodes: Vec<u32> = cells.iter().map(|c| c.2).collect();
    ensure(ranks == [0, 1, 2, 3] && locals == [0, 1, 0, 1] && nodes == [0, 0, 1, 1], || format!("2x2 grid {cells:?}"))?;

    let mut runner = TestRunner::deterministic();
    let dims = (1u32..=4, 1u32..=4);
    let cases = 24;
    for _ in 0..cases {
        let (n, g) = sample(&mut runner, &dims);
        let cells = grid(&csic, n, g)?;
        let cover: BTreeSet<(u32, u32)> = cells.iter().map(|c| (c.2, c.1)).collect();
        let want: BTreeSet<(u32, u32)> = (0..n).flat_map(|a| (0..g).map(move |b| (a, b))).collect();
        ensure(cells.len() as u32 == n * g && cover == want, || format!("{n}x{g} cover {cover:?}"))?;
        let ranks: BTreeSet<u32> = cells.iter().map(|c| c.0).collect();
        ensure(ranks == (0..n * g).collect(), || format!("{n}x{g} ranks {ranks:?}"))?;
        ensure(cells.iter().all(|c| c.0 == c.2 * g + c.1), || format!("{n}x{g} rank order"))?;
    }
    Ok(format!("2x2 RANK 0..3 LOCAL_RANK 0,1,0,1 NODE_INDEX 0,0,1,1; {cases} random grids fully covered"))
}

fn inputs(model: ModelSpec, ips: f64, link: f64, latency: f64, gpn: u32) -> ScalingInputs {
    ScalingInputs {
        model,
        single_gpu_images_per_sec: ips,
        link_bandwidth: link,
        link_latency: latency,
        gpus_per_node: gpn,
        intra_node_bandwidth: link * 4.0,
    }
}

fn ac6() -> Check {
    let models = benchmark_models();
    let mut runner = TestRunner::deterministic();
    // cluster-scale inputs: 1 to 100 Gbit/s links, microsecond latencies
    let space = (0usize..3, 50.0f64..2000.0, 1.25e8f64..1.25e10, 0.0f64..5e-6, 1u32..=8);
    let mut failures = Vec::new();
    let (mut points, mut below_one, mut above_p) = (0, 0, 0);
    let mut example = None;
    for _ in 0..500 {
        let (m, ips, link, lat, gpn) = sample(&mut runner, &space);
        let inp = inputs(models[m].clone(), ips, link, lat, gpn);
        let one = predict(&inp, 1).map_err(|e| e.to_string())?;
        if one.speedup != 1.0 {
            failures.push(format!("speedup(1) = {}", one.speedup));
        }
        for p in 1..=64 {
            let s = predict(&inp, p).map_err(|e| e.to_string())?.speedup;
            points += 1;
            if s > f64::from(p) {
                above_p += 1;
            }
            if s < 1.0 {
                below_one += 1;
                example.get_or_insert(format!(
                    "{} at {ips:.0} img/s, {:.2} Gbit/s link, p={p}: S={s:.4}",
                    inp.model.name,
                    link * 8.0 / 1e9
                ));
            }
        }
        let ideal = ScalingInputs {
            intra_node_bandwidth: f64::INFINITY,
            ..inputs(models[m].clone(), ips, f64::INFINITY, 0.0, gpn)
        };
        for p in 1..=64 {
            let s = predict(&ideal, p).map_err(|e| e.to_string())?.speedup;
            if s != f64::from(p) {
                failures.push(format!("ideal p={p}: {s}"));
            }
        }
    }
    if above_p > 0 {
        failures.push(format!("S > p at {above_p} of {points} points"));
    }
    if let Some(example) = example {
        failures.push(format!("1 <= S violated at {below_one} of {points} points, e.g. {example}"));
    }

    let fixed: Vec<f64> = models
        .iter()
        .map(|m| {
            let model = ModelSpec::new(&m.name, m.param_count, 256);
            predict(&inputs(model, 360.0, 1.25e9, 2e-6, 2), 6).map(|e| e.speedup)
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    if !(fixed[0] > fixed[1] && fixed[1] > fixed[2]) {
        failures.push(format!("p=6 ordering broken: {fixed:?}"));
    }
    let summary = format!(
        "speedup(1)=1, S<=p and ideal S=p on {points} points, p=6 InceptionV3 {:.4} > ResNet50 {:.4} > ResNet101 {:.4}",
        fixed[0], fixed[1], fixed[2]
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(failures.join("; "))
    }
}

/// Student t density with integer `df`, normalised by the exact gamma ratio.
fn t_pdf(x: f64, df: u32) -> f64 {
    let pi = std::f64::consts::PI;
    // r(k) = Γ((k+1)/2) / Γ(k/2)
    let mut r = if df % 2 == 1 { 1.0 / pi.sqrt() } else { pi.sqrt() / 2.0 };
    let mut k = if df % 2 == 1 { 1 } else { 2 };
    while k < df {
        r *= f64::from(k + 1) / f64::from(k);
        k += 2;
    }
    let nu = f64::from(df);
    r / (nu * pi).sqrt() * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0)
}

/// P(0 ≤ T ≤ x) by composite Simpson.
fn t_mass(x: f64, df: u32) -> f64 {
    let steps = 20_000;
    let h = x / f64::from(steps);
    let mut sum = t_pdf(0.0, df) + t_pdf(x, df);
    for i in 1..steps {
        sum += t_pdf(f64::from(i) * h, df) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

fn t_quantile_975(df: u32) -> f64 {
    let (mut lo, mut hi) = (0.0, 20.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if t_mass(mid, df) < 0.475 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn oracle(samples: &[f64], quantiles: &mut BTreeMap<u32, f64>) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as u32;
    let t = *quantiles.entry(df).or_insert_with(|| t_quantile_975(df));
    (mean, t * var.sqrt() / (n as f64).sqrt())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn ac7() -> Check {
    let mut quantiles = BTreeMap::new();
    let mut runner = TestRunner::deterministic();
    let sets = prop::collection::vec(1.0f64..1000.0, 2..40);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let samples = sample(&mut runner, &sets);
        let run = BenchRun {
            label: "random".into(),
            gpus: 1,
            samples: samples.clone(),
            warmup_count: 0,
        };
        let got = summarize(&run, None).map_err(|e| e.to_string())?;
        let (mean, ci) = oracle(&samples, &mut quantiles);
        let err = rel(got.mean, mean).max(rel(got.ci95_half_width, ci));
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("{samples:?}: mean {} vs {mean}, ci {} vs {ci}", got.mean, got.ci95_half_width))?;
    }

    let worked = BenchRun {
        label: "worked".into(),
        gpus: 1,
        samples: vec![100.0, 102.0, 98.0, 101.0, 99.0, 100.0, 103.0, 97.0, 100.0, 100.0],
        warmup_count: 0,
    };
    let s = summarize(&worked, None).map_err(|e| e.to_string())?;
    ensure((s.mean - 100.0).abs() <= 1e-3 && (s.ci95_half_width - 1.262).abs() <= 1e-3, || {
        format!("worked example mean {} ci {}", s.mean, s.ci95_half_width)
    })?;

    for g in 1..=6 {
        let path = fixture(&format!("bench/resnet50_{g}gpu.log"));
        let text = read(&path)?;
        let run = parse_bench_log(&text, 10).map_err(|e| e.to_string())?;
        ensure(run.warmup_count == 10 && run.samples.len() == 10, || {
            format!("{}: {} warm-up, {} kept", path.display(), run.warmup_count, run.samples.len())
        })?;
        let values: Vec<f64> = text
            .lines()
            .filter_map(|l| l.strip_prefix("iter "))
            .filter_map(|l| l.split(':').nth(1))
            .filter_map(|v| v.trim().strip_suffix("images/sec"))
            .filter_map(|v| v.trim().parse().ok())
            .collect();
        ensure(values.len() == 20 && run.samples == values[10..], || format!("{}: kept the wrong iterations", path.display()))?;
    }
    Ok(format!(
        "1000 random sets worst rel err {worst:.1e} <= 1e-9, worked example mean {:.3} ci {:.4}, 6 logs 10+10",
        s.mean, s.ci95_half_width
    ))
}

fn ac8() -> Check {
    let mut scripts: Vec<(String, String)> = Vec::new();
    let bench = spec("benchmark")?;
    for name in ["csic", "forhlr2", "workstation"] {
        let c = cluster(name)?;
        let recon = reconcile(&bench, &c, None).map_err(|e| e.to_string())?;
        let req = JobRequest::new(&recon, 1, 1, vec!["python".into(), "train.py".into()]);
        let plan = plan_launch(&c, &recon, &req).map_err(|e| e.to_string())?;
        if let Ok(s) = render_job_script(&plan, &c, &req) {
            scripts.push((format!("{name} job script"), s.text));
        }
        scripts.push((format!("{name} mock script"), render_mock_script(&plan, &c, &req).text));
        let setup = render_udocker_setup(&recon, &req.container_name).map_err(|e| e.to_string())?;
        scripts.push((format!("{name} setup"), setup.iter().map(|c| format!("{c}\n")).collect()));
    }
    for name in ["benchmark", "ngc", "tags"] {
        let s = spec(name)?;
        let ast = generate_dockerfile(&s).map_err(|e| e.to_string())?;
        scripts.push((format!("{name} Dockerfile"), render_dockerfile(&ast)));
        scripts.push((
            format!("{name} entrypoint"),
            generate_entrypoint(&EntrypointConfig::with_installers(&s.installers)),
        ));
    }
    scripts.push(("udocker install".into(), render_install_script(&InstallConfig::default())));
    for (what, text) in &scripts {
        let hits = scan_privileged(text);
        ensure(hits.is_empty(), || format!("{what}: {hits:?}"))?;
    }
    let canary = scan_privileged("sudo make install\n");
    ensure(canary.len() == 1, || "scanner misses sudo".into())?;
    Ok(format!("{} generated scripts, 0 privileged commands", scripts.len()))
}

fn hpcflow(args: &[&str]) -> Result<Output, String> {
    Command::new(env!("CARGO_BIN_EXE_hpcflow")).args(args).output().map_err(|e| e.to_string())
}

fn ac9() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let profile = fixture("profiles/csic.profile").to_string_lossy().into_owned();
    let spec = fixture("specs/benchmark.env").to_string_lossy().into_owned();
    let dockerfile = d.join("Dockerfile").to_string_lossy().into_owned();
    let job = d.join("job.sh").to_string_lossy().into_owned();
    let job_args = ["--profile", &profile, "--spec", &spec, "--nodes", "2", "--gpus-per-node", "2"];
    let with = |head: &[&'static str], tail: &[&'static str]| -> Vec<String> {
        head.iter()
            .map(|s| s.to_string())
            .chain(job_args.iter().map(|s| s.to_string()))
            .chain(tail.iter().map(|s| s.to_string()))
            .collect()
    };
    let mut stages: Vec<(&str, Vec<String>)> = vec![
        ("profile validate", vec!["profile".into(), "validate".into(), profile.clone()]),
        ("image gen", vec!["image".into(), "gen".into(), "--spec".into(), spec.clone(), "--out".into(), dockerfile.clone()]),
        ("image lint", vec!["image".into(), "lint".into(), dockerfile.clone()]),
    ];
    let mut gen = with(&["job", "gen"], &[]);
    gen.extend(["--out".to_string(), job.clone(), "--".into(), "python".into(), "train.py".into()]);
    stages.push(("job gen", gen));
    stages.push(("job dry-run", with(&["job", "dry-run"], &["--", "python", "train.py"])));
    stages.push(("job mock-run", with(&["job", "mock-run"], &["--", "python", "train.py"])));

    let start = Instant::now();
    for (name, args) in &stages {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = hpcflow(&args)?;
        ensure(out.status.code() == Some(0), || {
            format!("{name} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    ensure(Path::new(&job).is_file(), || "no job script written".into())?;
    Ok(format!("{} stages exit 0 on csic in {elapsed:.2?} < 5s", stages.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
        ("AC8", ac8),
        ("AC9", ac9),
    ];
    let mut failed = 0;
    for (id, check) in criteria {
        match check() {
            Ok(detail) => println!("{id} PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
