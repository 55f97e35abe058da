use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::config::{ExperimentConfig, RunParams};
use crate::error::{HarnessError, Result};
use crate::record::{summary_csv, write_atomic, RunRecord};
use crate::suites;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Executes one seed of one parameter point.
pub fn run_one(params: &RunParams, seed: u64) -> Result<RunRecord> {
    let suite = suites::find(&params.experiment)
        .ok_or_else(|| HarnessError::Config(format!("unknown experiment \"{}\"", params.experiment)))?;
    let out = (suite.run)(params, seed)?;
    let mut header = vec![
        ("version".to_string(), VERSION.to_string()),
        ("experiment".to_string(), params.experiment.clone()),
        ("seed".to_string(), seed.to_string()),
        ("horizon".to_string(), params.horizon.to_string()),
        ("log_every".to_string(), params.log_every.to_string()),
    ];
    header.extend(params.values.iter().map(|(k, v)| (k.clone(), v.to_string())));
    Ok(RunRecord { header, series: out.series, summary: out.summary })
}

/// Runs every (point, seed) pair, writing `runs/<id>.csv` and `summary.csv`
/// under `out_dir`. Runs execute on up to `threads` workers; results do not
/// depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, overwrite: bool, threads: usize) -> Result<Vec<(String, RunRecord)>> {
    if out_dir.exists() {
        if !overwrite {
            return Err(HarnessError::OutputExists(out_dir.to_path_buf()));
        }
        fs::remove_dir_all(out_dir)?;
    }
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;

    let points = cfg.points();
    let jobs: Vec<(String, &RunParams, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(i, p)| cfg.seeds.iter().map(move |&s| (format!("p{i:03}_s{s}"), p, s)))
        .collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunRecord>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, params, seed)) = jobs.get(k) else { break };
                let rec = run_one(params, *seed)
                    .and_then(|r| r.write(&runs_dir.join(format!("{id}.csv"))).map(|_| r));
                results.lock().expect("no worker panicked")[k] = Some(rec);
            });
        }
    });

    let mut out = Vec::with_capacity(jobs.len());
    let mut rows = Vec::with_capacity(jobs.len());
    let swept: Vec<&str> = cfg.sweep.iter().map(|(k, _)| k.as_str()).collect();
    for ((id, params, seed), rec) in jobs.iter().zip(results.into_inner().expect("no worker panicked")) {
        let rec = rec.expect("every job ran")?;
        let mut cols = BTreeMap::new();
        cols.insert("seed".to_string(), seed.to_string());
        for k in &swept {
            cols.insert(k.to_string(), params.values[*k].to_string());
        }
        rows.push((id.clone(), cols, rec.summary.clone()));
        out.push((id.clone(), rec));
    }
    write_atomic(&out_dir.join("summary.csv"), summary_csv(&rows)?.as_bytes())?;
    Ok(out)
}
