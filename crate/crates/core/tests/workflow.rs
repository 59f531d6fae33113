use std::fs;
use std::path::{Path, PathBuf};

use hpcflow_core::dockerfile::{generate_dockerfile, parse_dockerfile, render_dockerfile};
use hpcflow_core::launch::{
    plan_launch, render_install_script, render_job_script, render_udocker_setup, scan_privileged, InstallConfig,
    JobRequest,
};
use hpcflow_core::lint::{lint, Severity};
use hpcflow_core::profiles::{parse_cluster_profile, parse_env_spec, ClusterProfile, EnvironmentSpec};
use hpcflow_core::recon::{generate_entrypoint, reconcile, EntrypointConfig, ReconError};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

fn cluster(name: &str) -> ClusterProfile {
    let parsed = parse_cluster_profile(&fs::read_to_string(fixture(&format!("profiles/{name}.profile"))).unwrap()).unwrap();
    assert!(parsed.notes.is_empty(), "{:?}", parsed.notes);
    parsed.value
}

fn spec(name: &str) -> EnvironmentSpec {
    parse_env_spec(&fs::read_to_string(fixture(&format!("specs/{name}.env"))).unwrap())
        .unwrap()
        .value
}

fn golden_request(cluster_name: &str) -> (u32, u32, Vec<String>, &'static str) {
    let words = |s: &str| s.split_whitespace().map(str::to_string).collect();
    match cluster_name {
        "csic" => (
            2,
            2,
            words("python /opt/benchmarks/tf_cnn_benchmarks.py --model=resnet50 --batch_size=256 --variable_update=horovod"),
            "tf-benchmark",
        ),
        _ => (1, 4, words("python /workspace/train.py --batch-size 32"), "downscaling"),
    }
}

fn job_script(cluster_name: &str) -> String {
    let c = cluster(cluster_name);
    let s = spec("benchmark");
    let recon = reconcile(&s, &c, None).unwrap();
    let (nodes, gpus, cmd, name) = golden_request(cluster_name);
    let mut req = JobRequest::new(&recon, nodes, gpus, cmd);
    req.job_name = name.to_string();
    let plan = plan_launch(&c, &recon, &req).unwrap();
    render_job_script(&plan, &c, &req).unwrap().text
}

fn check_golden(cluster_name: &str) {
    let path = fixture(&format!("golden/{cluster_name}_job.sh"));
    let text = job_script(cluster_name);
    if std::env::var_os("HPCFLOW_BLESS").is_some() {
        fs::write(&path, &text).unwrap();
    }
    assert_eq!(text, fs::read_to_string(&path).unwrap(), "golden {}", path.display());
    assert_eq!(text, job_script(cluster_name));
}

#[test]
fn csic_golden_job_script() {
    check_golden("csic");
    let text = job_script("csic");
    assert!(text.contains("#SBATCH --nodes=2\n"));
    assert!(text.contains("#SBATCH --gres=gpu:2\n"));
    assert!(text.contains("\nmpirun -np 4 "));
}

#[test]
fn forhlr2_golden_job_script() {
    check_golden("forhlr2");
    let text = job_script("forhlr2");
    assert!(text.contains("#SBATCH --account=hk-project-downscaling\n"));
    assert!(text.contains("module load compiler/gnu/10.2\nmodule load mpi/openmpi/4.0\n"));
    assert!(text.contains(" 4.0.5 0.21.3 python /workspace/train.py"));
}

#[test]
fn one_image_serves_both_clusters() {
    let s = spec("benchmark");
    let a = reconcile(&s, &cluster("csic"), None).unwrap();
    let b = reconcile(&s, &cluster("forhlr2"), None).unwrap();
    assert_eq!(a.image_ref, b.image_ref);
    assert_eq!(a.runtime_args, ["4.0.1", "0.21.3"]);
    assert_eq!(b.runtime_args, ["4.0.5", "0.21.3"]);
}

#[test]
fn ngc_image_fits_only_the_matching_cluster() {
    let s = spec("ngc");
    assert!(reconcile(&s, &cluster("forhlr2"), None).is_ok());
    let err = reconcile(&s, &cluster("csic"), None).unwrap_err();
    assert!(matches!(err, ReconError::VersionMismatch { .. }));
}

#[test]
fn tags_pick_the_cluster_series() {
    let s = spec("tags");
    let tags: Vec<String> = ["ompi3.1", "ompi4.0", "base"].iter().map(|t| t.to_string()).collect();
    let plan = reconcile(&s, &cluster("forhlr2"), Some(&tags)).unwrap();
    assert_eq!(plan.image_ref, "gonzabad/multigpu-horovod:ompi4.0");
}

#[test]
fn generated_artifacts_are_clean_and_unprivileged() {
    for name in ["benchmark", "ngc", "tags"] {
        let s = spec(name);
        let ast = generate_dockerfile(&s).unwrap();
        let text = render_dockerfile(&ast);
        let report = lint(&parse_dockerfile(&text).unwrap());
        assert!(report.findings.is_empty(), "{name}: {:?}", report.findings);
        assert_eq!(report.count(Severity::Error), 0);
    }
    let mut scripts = vec![
        job_script("csic"),
        job_script("forhlr2"),
        render_install_script(&InstallConfig::default()),
        generate_entrypoint(&EntrypointConfig::default()),
    ];
    let recon = reconcile(&spec("benchmark"), &cluster("csic"), None).unwrap();
    let setup = render_udocker_setup(&recon, "hvd").unwrap();
    scripts.push(setup.iter().map(|c| format!("{c}\n")).collect());
    for s in &scripts {
        assert!(scan_privileged(s).is_empty(), "{:?}", scan_privileged(s));
    }
}
