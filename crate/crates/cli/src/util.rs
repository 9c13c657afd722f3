//! CLI plumbing: exit-code mapping, worker pool, output-path rules.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use cernet_core::error::Error as CoreError;

/// Exit-code convention: 0 success, 1 runtime/numeric failure,
/// 2 argument/schema error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::Argument(_) | CoreError::Schema(_) | CoreError::Json(_) => {
                CliError::Usage(err.to_string())
            }
            CoreError::Numeric(_) | CoreError::Io(_) => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Worker count for fan-out jobs, capped by CERNET_THREADS.
pub fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var("CERNET_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    cap.unwrap_or(hw).min(jobs.max(1))
}

/// Run `jobs` independent closures over a shared work queue; each result goes
/// to its own slot, so output order is independent of scheduling.
pub fn parallel_map<T, F>(jobs: usize, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
{
    let workers = worker_count(jobs);
    let slots: Mutex<Vec<Option<CliResult<T>>>> =
        Mutex::new((0..jobs).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let result = f(i);
                slots.lock().expect("worker slot lock")[i] = Some(result);
            });
        }
    });
    let mut out = Vec::with_capacity(jobs);
    for (i, slot) in slots.into_inner().expect("worker slots").into_iter().enumerate() {
        out.push(slot.unwrap_or_else(|| panic!("job {i} never ran"))?);
    }
    Ok(out)
}

/// A report directory must be empty (or missing) unless --force is given.
pub fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)?.next().is_some();
        if non_empty && !force {
            return Err(CliError::Usage(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                dir.display()
            )));
        }
    } else {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// A single output file must not exist unless --force is given.
pub fn prepare_out_file(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::Usage(format!(
            "output file {} already exists (pass --force to overwrite)",
            path.display()
        )));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
