use statrs::distribution::{ContinuousCDF, StudentsT};

use super::PerfError;

/// One benchmark session: throughput samples in iteration order.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub label: String,
    pub gpus: u32,
    /// images/sec after warm-up removal.
    pub samples: Vec<f64>,
    pub warmup_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSummary {
    pub mean: f64,
    /// Half-width of the Student-t 95% interval; 0 when undefined.
    pub ci95_half_width: f64,
    /// False for a single sample, where no interval exists.
    pub ci_defined: bool,
    pub n: usize,
    pub speedup_vs_baseline: Option<f64>,
}

/// What a log line holds.
#[derive(Debug, Clone, PartialEq)]
pub enum LogLine {
    Sample(f64),
    Meta { key: String, value: String },
    Skip,
}

/// A benchmark log format. Implement this to ingest other tools' output.
pub trait LogGrammar {
    fn classify(&self, line: &str) -> Result<LogLine, String>;
}

/// Reference log format:
///
/// ```text
/// # label=resnet50
/// # gpus=2
/// iter 1: 731.2 images/sec
/// ```
///
/// Blank lines and other `#` comments are skipped.
#[derive(Debug, Clone, Copy, Default)]
pub struct IterLog;

impl LogGrammar for IterLog {
    fn classify(&self, line: &str) -> Result<LogLine, String> {
        let line = line.trim();
        if line.is_empty() {
            return Ok(LogLine::Skip);
        }
        if let Some(comment) = line.strip_prefix('#') {
            return Ok(match comment.trim().split_once('=') {
                Some((k, v)) => LogLine::Meta {
                    key: k.trim().to_string(),
                    value: v.trim().to_string(),
                },
                None => LogLine::Skip,
            });
        }
        let expected = "expected `iter <k>: <value> images/sec`";
        let rest = line.strip_prefix("iter ").ok_or(expected)?;
        let (k, rest) = rest.split_once(':').ok_or(expected)?;
        k.trim().parse::<u64>().map_err(|_| format!("bad iteration number `{}`", k.trim()))?;
        let value = rest.trim().strip_suffix("images/sec").ok_or(expected)?.trim();
        let v: f64 = value.parse().map_err(|_| format!("bad throughput `{value}`"))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("throughput `{value}` is not a non-negative number"));
        }
        Ok(LogLine::Sample(v))
    }
}

pub fn parse_bench_log(text: &str, warmup_count: usize) -> Result<BenchRun, PerfError> {
    parse_bench_log_with(text, warmup_count, &IterLog)
}

/// Parse a log and drop the first `warmup_count` samples. `gpus` and
/// `label` come from metadata lines and default to 1 and "".
pub fn parse_bench_log_with(text: &str, warmup_count: usize, grammar: &dyn LogGrammar) -> Result<BenchRun, PerfError> {
    let mut samples = Vec::new();
    let mut label = String::new();
    let mut gpus = 1;
    for (idx, line) in text.lines().enumerate() {
        let err = |message: String| PerfError::Log { line: idx + 1, message };
        match grammar.classify(line).map_err(err)? {
            LogLine::Sample(v) => samples.push(v),
            LogLine::Meta { key, value } => match key.as_str() {
                "gpus" => {
                    gpus = value
                        .parse()
                        .ok()
                        .filter(|g| *g > 0)
                        .ok_or_else(|| err(format!("bad gpu count `{value}`")))?
                }
                "label" => label = value,
                _ => {}
            },
            LogLine::Skip => {}
        }
    }
    if warmup_count >= samples.len() {
        return Err(PerfError::WarmupConsumesAll {
            warmup: warmup_count,
            total: samples.len(),
        });
    }
    samples.drain(..warmup_count);
    Ok(BenchRun {
        label,
        gpus,
        samples,
        warmup_count,
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Mean and Student-t 95% confidence half-width `t(0.975, n-1) · s / √n`.
pub fn summarize(run: &BenchRun, baseline: Option<&BenchRun>) -> Result<BenchSummary, PerfError> {
    let n = run.samples.len();
    if n == 0 {
        return Err(PerfError::WarmupConsumesAll {
            warmup: run.warmup_count,
            total: run.warmup_count,
        });
    }
    let m = mean(&run.samples);
    let (ci, defined) = if n == 1 {
        (0.0, false)
    } else {
        let ss: f64 = run.samples.iter().map(|x| (x - m) * (x - m)).sum();
        let s = (ss / (n - 1) as f64).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("degrees of freedom are positive")
            .inverse_cdf(0.975);
        (t * s / (n as f64).sqrt(), true)
    };
    let speedup = match baseline {
        Some(b) if !b.samples.is_empty() => Some(m / mean(&b.samples)),
        _ => None,
    };
    Ok(BenchSummary {
        mean: m,
        ci95_half_width: ci,
        ci_defined: defined,
        n,
        speedup_vs_baseline: speedup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupRow {
    pub gpus: u32,
    pub mean: f64,
    pub ci95: f64,
    pub speedup: f64,
}

/// Speedup of each run over the single 1-GPU run, ordered by GPU count.
pub fn speedup_table(runs: &[BenchRun]) -> Result<Vec<SpeedupRow>, PerfError> {
    let mut sorted: Vec<&BenchRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.gpus);
    for pair in sorted.windows(2) {
        if pair[0].gpus == pair[1].gpus {
            return Err(PerfError::DuplicateGpus(pair[0].gpus));
        }
    }
    let baseline = *sorted.first().filter(|r| r.gpus == 1).ok_or(PerfError::MissingBaseline)?;
    sorted
        .iter()
        .map(|run| {
            let s = summarize(run, Some(baseline))?;
            Ok(SpeedupRow {
                gpus: run.gpus,
                mean: s.mean,
                ci95: s.ci95_half_width,
                // the baseline divides by itself
                speedup: if run.gpus == 1 { 1.0 } else { s.speedup_vs_baseline.unwrap_or(f64::NAN) },
            })
        })
        .collect()
}

/// `gpus,mean,ci95,speedup` with a header row.
pub fn render_csv(rows: &[SpeedupRow]) -> String {
    let mut out = String::from("gpus,mean,ci95,speedup\n");
    for r in rows {
        out.push_str(&format!("{},{:.4},{:.4},{:.4}\n", r.gpus, r.mean, r.ci95, r.speedup));
    }
    out
}
