//! Resumable training cells.
//!
//! A cell is one training run with its own directory under `<root>/runs/`.
//! A finished cell holds a `done` marker listing the SHA-256 of each
//! artifact; re-running a manifest skips every cell whose marker still
//! matches its files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use dwrl::checkpoint::sha256_hex;
use dwrl::demos::DemoSet;
use dwrl::trainer::{read_metrics_csv, save_policy, write_metrics_csv};
use dwrl::{Error, IterationMetrics, Result, TrainConfig, Trainer};

#[derive(Debug, Clone)]
pub struct Cell {
    pub key: String,
    pub config: TrainConfig,
    pub demos: Option<Arc<DemoSet>>,
    pub fixed_weights: Option<Vec<f64>>,
    pub dump_weights: bool,
}

impl Cell {
    pub fn new(key: impl Into<String>, config: TrainConfig, demos: Option<Arc<DemoSet>>) -> Self {
        Cell { key: key.into(), config, demos, fixed_weights: None, dump_weights: false }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: String,
    pub dir: PathBuf,
    pub metrics: Vec<IterationMetrics>,
    pub resumed: bool,
}

impl CellResult {
    pub fn weights_path(&self) -> PathBuf {
        self.dir.join(WEIGHTS_FILE)
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const DONE_FILE: &str = "done";
const FINGERPRINT: &str = "fingerprint";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn file_digest(path: &Path) -> Option<String> {
    fs::read(path).ok().map(|b| sha256_hex(&b))
}

pub fn cell_dir(root: &Path, key: &str) -> PathBuf {
    root.join("runs").join(key)
}

/// Digest of everything that determines a cell's output.
pub fn fingerprint(cell: &Cell) -> String {
    let mut text = cell.config.to_text();
    if let Some(d) = &cell.demos {
        text.push_str(&serde_json::to_string(&**d).expect("demonstrations serialize"));
    }
    if let Some(w) = &cell.fixed_weights {
        text.push_str(&format!("{w:?}"));
    }
    text.push_str(&format!("dump_weights={}", cell.dump_weights));
    sha256_hex(text.as_bytes())
}

/// True when the marker exists, was written for `expected` inputs, and every
/// listed artifact matches its digest.
pub fn is_complete(dir: &Path, expected: &str, need_weights: bool) -> bool {
    let Ok(marker) = fs::read_to_string(dir.join(DONE_FILE)) else {
        return false;
    };
    let mut lines = marker.lines();
    if lines.next() != Some(&format!("{FINGERPRINT} {expected}")) {
        return false;
    }
    let mut saw_weights = false;
    for line in lines {
        let Some((name, digest)) = line.split_once(' ') else {
            return false;
        };
        if file_digest(&dir.join(name)).as_deref() != Some(digest.trim()) {
            return false;
        }
        saw_weights |= name == WEIGHTS_FILE;
    }
    !need_weights || saw_weights
}

/// Runs a cell, or loads its metrics when a matching finished run exists.
pub fn run_cell(root: &Path, cell: &Cell) -> Result<CellResult> {
    let dir = cell_dir(root, &cell.key);
    let metrics_path = dir.join(METRICS_FILE);
    let print = fingerprint(cell);
    if is_complete(&dir, &print, cell.dump_weights) {
        return Ok(CellResult {
            key: cell.key.clone(),
            metrics: read_metrics_csv(&metrics_path)?,
            dir,
            resumed: true,
        });
    }
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    for stale in [DONE_FILE, METRICS_FILE, WEIGHTS_FILE] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_file(&p).map_err(io(&p))?;
        }
    }
    let mut config = cell.config.clone();
    if config.demo_path.is_none() && cell.demos.is_some() {
        config.demo_path = Some(PathBuf::from("<memory>"));
    }
    fs::write(dir.join("config.txt"), config.to_text()).map_err(io(&dir))?;
    let demos = cell.demos.as_deref().cloned();
    let mut trainer = Trainer::with_demos(config, demos)?.diagnostics_dir(&dir);
    if let Some(w) = &cell.fixed_weights {
        trainer = trainer.with_fixed_weights(w.clone())?;
    }
    if cell.dump_weights {
        trainer = trainer.dump_weights_to(dir.join(WEIGHTS_FILE));
    }
    trainer.run()?;
    write_metrics_csv(&metrics_path, trainer.metrics())?;
    save_policy(&dir.join("final.dwrl"), trainer.policy(), Some(trainer.value_net()))?;
    let mut marker = format!("{FINGERPRINT} {print}\n");
    for name in [METRICS_FILE, WEIGHTS_FILE] {
        if let Some(d) = file_digest(&dir.join(name)) {
            marker.push_str(&format!("{name} {d}\n"));
        }
    }
    fs::write(dir.join(DONE_FILE), marker).map_err(io(&dir))?;
    Ok(CellResult { key: cell.key.clone(), metrics: trainer.metrics().to_vec(), dir, resumed: false })
}

/// Worker count from `DWRL_THREADS`, else the machine's parallelism.
pub fn thread_budget() -> usize {
    std::env::var("DWRL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs cells on up to `threads` workers and returns results in input
/// order. The first failure stops new cells from starting; cells already
/// finished keep their artifacts.
pub fn run_cells(root: &Path, cells: &[Cell], threads: usize) -> Result<Vec<CellResult>> {
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<CellResult>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    let workers = threads.clamp(1, cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let r = run_cell(root, &cells[i]);
                match &r {
                    Ok(done) => log::info!(
                        "{} {} ({}/{})",
                        if done.resumed { "reused" } else { "finished" },
                        done.key,
                        i + 1,
                        cells.len()
                    ),
                    Err(e) => {
                        log::error!("{} failed: {e}", cells[i].key);
                        failed.store(true, Ordering::SeqCst);
                    }
                }
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    let slots = slots.into_inner().expect("result slots");
    if let Some(pos) = slots.iter().position(|s| matches!(s, Some(Err(_)))) {
        if let Some(Some(Err(e))) = slots.into_iter().nth(pos) {
            return Err(e);
        }
        unreachable!("position points at an error");
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.unwrap_or_else(|| Err(Error::State(format!("cell {} was never run", cells[i].key))))
        })
        .collect()
}
