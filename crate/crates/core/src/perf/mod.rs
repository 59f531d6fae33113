//! Scaling predictions from a ring-allreduce cost model, and statistics over
//! benchmark logs.

mod bench;

use thiserror::Error;

pub use bench::{
    parse_bench_log, parse_bench_log_with, render_csv, speedup_table, summarize, BenchRun, BenchSummary,
    IterLog, LogGrammar, LogLine, SpeedupRow,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerfError {
    #[error("worker count must be ≥ 1")]
    ZeroWorkers,
    #[error("invalid {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("warm-up of {warmup} iterations leaves none of the {total} samples")]
    WarmupConsumesAll { warmup: usize, total: usize },
    #[error("no 1-GPU baseline run")]
    MissingBaseline,
    #[error("more than one run with {0} GPUs")]
    DuplicateGpus(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub param_count: u64,
    pub bytes_per_param: u64,
    pub batch_per_gpu: u32,
}

impl ModelSpec {
    /// fp32 parameters.
    pub fn new(name: &str, param_count: u64, batch_per_gpu: u32) -> Self {
        ModelSpec {
            name: name.to_string(),
            param_count,
            bytes_per_param: 4,
            batch_per_gpu,
        }
    }

    /// Bytes reduced across workers each step.
    pub fn payload_bytes(&self) -> u64 {
        self.param_count * self.bytes_per_param
    }
}

/// The three TensorFlow benchmark models: InceptionV3, ResNet50, ResNet101.
pub fn benchmark_models() -> [ModelSpec; 3] {
    [
        ModelSpec::new("InceptionV3", 23_851_784, 256),
        ModelSpec::new("ResNet50", 25_636_712, 256),
        ModelSpec::new("ResNet101", 44_707_176, 128),
    ]
}

/// Learning rate of the downscaling model on one GPU.
pub const DOWNSCALING_BASE_LR: f64 = 0.0001;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingInputs {
    pub model: ModelSpec,
    pub single_gpu_images_per_sec: f64,
    /// Inter-node bytes/second; `f64::INFINITY` for a free network.
    pub link_bandwidth: f64,
    /// Seconds per ring step.
    pub link_latency: f64,
    pub gpus_per_node: u32,
    /// Bytes/second between GPUs of one node.
    pub intra_node_bandwidth: f64,
}

impl ScalingInputs {
    pub fn validate(&self) -> Result<(), PerfError> {
        let bad = |field: &'static str, message: &str| {
            Err(PerfError::Invalid {
                field,
                message: message.to_string(),
            })
        };
        if self.model.param_count == 0 || self.model.bytes_per_param == 0 || self.model.batch_per_gpu == 0 {
            return bad("model", "param_count, bytes_per_param and batch_per_gpu must be positive");
        }
        if !(self.single_gpu_images_per_sec.is_finite() && self.single_gpu_images_per_sec > 0.0) {
            return bad("single_gpu_images_per_sec", "must be a positive number");
        }
        if !(self.link_bandwidth > 0.0) {
            return bad("link_bandwidth", "must be positive");
        }
        if !(self.intra_node_bandwidth >= self.link_bandwidth) {
            return bad("intra_node_bandwidth", "must be at least link_bandwidth");
        }
        if !(self.link_latency.is_finite() && self.link_latency >= 0.0) {
            return bad("link_latency", "must be a non-negative number");
        }
        if self.gpus_per_node == 0 {
            return bad("gpus_per_node", "must be ≥ 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingEstimate {
    pub p: u32,
    pub predicted_images_per_sec: f64,
    pub speedup: f64,
    pub comm_seconds_per_step: f64,
    pub comp_seconds_per_step: f64,
}

/// Bytes each worker sends in a ring allreduce of `payload` bytes over `p`
/// workers: `2(p-1)/p · payload` (reduce-scatter plus allgather).
pub fn allreduce_bytes(p: u32, payload: u64) -> Result<f64, PerfError> {
    if p == 0 {
        return Err(PerfError::ZeroWorkers);
    }
    let numerator = 2 * u128::from(p - 1) * u128::from(payload);
    Ok(numerator as f64 / f64::from(p))
}

/// Predicted throughput at `p` workers, one per GPU.
///
/// Each step computes a batch per GPU, then allreduces the gradients. The
/// ring runs at the intra-node bandwidth while all workers share a node and
/// at the link bandwidth once it crosses nodes; every one of its `2(p-1)`
/// steps pays the link latency.
pub fn predict(inputs: &ScalingInputs, p: u32) -> Result<ScalingEstimate, PerfError> {
    if p == 0 {
        return Err(PerfError::ZeroWorkers);
    }
    inputs.validate()?;
    let batch = f64::from(inputs.model.batch_per_gpu);
    let comp = batch / inputs.single_gpu_images_per_sec;
    let bandwidth = if p <= inputs.gpus_per_node {
        inputs.intra_node_bandwidth
    } else {
        inputs.link_bandwidth
    };
    let comm = if p == 1 {
        0.0
    } else {
        allreduce_bytes(p, inputs.model.payload_bytes())? / bandwidth + 2.0 * f64::from(p - 1) * inputs.link_latency
    };
    let pf = f64::from(p);
    Ok(ScalingEstimate {
        p,
        predicted_images_per_sec: pf * batch / (comp + comm),
        // relative to p = 1, where the step is pure compute
        speedup: pf * (comp / (comp + comm)),
        comm_seconds_per_step: comm,
        comp_seconds_per_step: comp,
    })
}

/// Linear learning-rate scaling with the number of GPUs.
pub fn scale_learning_rate(base_lr: f64, p: u32) -> f64 {
    base_lr * f64::from(p)
}
