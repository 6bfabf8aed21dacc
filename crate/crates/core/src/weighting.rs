//! Per-instance demonstration weights from the gap between the recorded
//! return-to-go `q` and the current value estimate `v`.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demos::{returns_to_go, DemoSet};
use crate::error::{Error, Result};
use crate::nn::MlpParams;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightForm {
    /// `1{q - v >= 0}`.
    OneZero,
    /// `max((q - v) / delta, 0)`.
    Linear { delta: f64 },
    /// `ln(max(q - v, 1))`.
    Log,
    /// Constant 1; every instance counts equally.
    Uniform,
}

impl WeightForm {
    pub fn linear(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Domain(format!("linear weight delta must be > 0, got {delta}")));
        }
        Ok(WeightForm::Linear { delta })
    }
}

impl Default for WeightForm {
    fn default() -> Self {
        WeightForm::Linear { delta: 10.0 }
    }
}

impl fmt::Display for WeightForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightForm::OneZero => write!(f, "onezero"),
            WeightForm::Linear { delta } => write!(f, "linear{delta}"),
            WeightForm::Log => write!(f, "log"),
            WeightForm::Uniform => write!(f, "uniform"),
        }
    }
}

impl FromStr for WeightForm {
    type Err = Error;

    /// Accepts `onezero`, `log`, `uniform`, `linear<delta>` and `linear:<delta>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "onezero" | "one-zero" | "indicator" => Ok(WeightForm::OneZero),
            "log" => Ok(WeightForm::Log),
            "uniform" | "none" => Ok(WeightForm::Uniform),
            "linear" => Ok(WeightForm::default()),
            other => {
                let rest = other
                    .strip_prefix("linear")
                    .map(|r| r.trim_start_matches([':', '=']))
                    .ok_or_else(|| Error::Config(format!("unknown weight form '{s}'")))?;
                let delta: f64 = rest
                    .parse()
                    .map_err(|_| Error::Config(format!("bad linear delta in '{s}'")))?;
                WeightForm::linear(delta).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }
}

pub fn compute_weight(q_sigma: f64, v_estimate: f64, form: WeightForm) -> Result<f64> {
    if !q_sigma.is_finite() || !v_estimate.is_finite() {
        return Err(Error::numeric(
            "compute_weight",
            format!("non-finite input q={q_sigma} v={v_estimate}"),
        ));
    }
    let gap = q_sigma - v_estimate;
    Ok(match form {
        WeightForm::OneZero => {
            if gap >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        WeightForm::Linear { delta } => (gap / delta).max(0.0),
        WeightForm::Log => gap.max(1.0).ln(),
        WeightForm::Uniform => 1.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub trajectory_id: String,
    pub step_index: usize,
    pub q_sigma: f64,
    pub v_estimate: f64,
    pub weight: f64,
    pub iteration: usize,
}

/// One record per instance, ordered by trajectory then step.
pub fn weigh_demoset(
    demos: &DemoSet,
    value_net: &MlpParams,
    form: WeightForm,
    iteration: usize,
) -> Result<Vec<WeightRecord>> {
    let obs_dim = demos
        .trajectories
        .first()
        .and_then(|t| t.instances.first())
        .map(|i| i.state.len())
        .unwrap_or(0);
    if value_net.input_dim() != obs_dim || value_net.raw_output_dim() != 1 {
        return Err(Error::Domain(format!(
            "value network maps {} -> {}, demonstrations have {obs_dim}-d states",
            value_net.input_dim(),
            value_net.raw_output_dim()
        )));
    }
    let states: Vec<&[f64]> = demos.instances().map(|(_, _, i)| i.state.as_slice()).collect();
    let values = value_net.forward(&Tensor::from_rows(&states)?)?;
    let mut out = Vec::with_capacity(states.len());
    let mut k = 0;
    for traj in &demos.trajectories {
        for (j, q) in returns_to_go(traj, demos.gamma).into_iter().enumerate() {
            let v = values.data()[k];
            k += 1;
            out.push(WeightRecord {
                trajectory_id: traj.id.clone(),
                step_index: j,
                q_sigma: q,
                v_estimate: v,
                weight: compute_weight(q, v, form)?,
                iteration,
            });
        }
    }
    Ok(out)
}

pub const WEIGHT_CSV_HEADER: &str = "iteration,trajectory_id,step_index,q_sigma,v_estimate,weight";

/// Appends records to a CSV, writing the header when the file is new.
pub fn append_weight_csv(path: &Path, records: &[WeightRecord]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    if fresh {
        buf.push_str(WEIGHT_CSV_HEADER);
        buf.push('\n');
    }
    for r in records {
        buf.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration, r.trajectory_id, r.step_index, r.q_sigma, r.v_estimate, r.weight
        ));
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_weight_csv(path: &Path) -> Result<Vec<WeightRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if k == 0 {
            if line.trim() != WEIGHT_CSV_HEADER {
                return Err(err(1, format!("unexpected header '{line}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(err(k + 1, format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| err(k + 1, format!("bad number '{s}'")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| err(k + 1, format!("bad integer '{s}'")))
        };
        out.push(WeightRecord {
            iteration: int(f[0])?,
            trajectory_id: f[1].to_string(),
            step_index: int(f[2])?,
            q_sigma: num(f[3])?,
            v_estimate: num(f[4])?,
            weight: num(f[5])?,
        });
    }
    Ok(out)
}
