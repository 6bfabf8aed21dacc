//! The four experiment protocols: method comparison, noise-ratio sweep,
//! weight-decile analysis and weight-form comparison.
//!
//! Every protocol expands a [`Manifest`] into training cells, runs them
//! through [`run_cells`], then writes CSV tables and renders figures from
//! those CSVs alone.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dwrl::demos::{self, DemoSet, NoiseModel, Sampling};
use dwrl::trainer::load_policy;
use dwrl::weighting::{read_weight_csv, WeightRecord};
use dwrl::{env, Error, IterationMetrics, Mode, Result, TrainConfig, WeightForm};

use crate::manifest::{Manifest, NoiseSource};
use crate::runner::{cell_dir, run_cells, thread_budget, Cell, CellResult, WEIGHTS_FILE};
use crate::stats::{curve_csv, improvement_ratio, mean_curve, summary_csv, MethodSummary, RunStats};
use crate::svg::{render_bars, render_csv_files, ChartOptions};

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.to_path_buf(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Config(format!("the manifest needs a '{what}' entry")))
}

fn load_demos(m: &Manifest) -> Result<Arc<DemoSet>> {
    let path = require(&m.demos, "demos")?;
    let d = demos::load(path)?;
    if d.env_id != m.env_id() {
        return Err(Error::Domain(format!(
            "{} holds {} demonstrations but the manifest targets {}",
            path.display(),
            d.env_id,
            m.env_id()
        )));
    }
    Ok(Arc::new(d))
}

fn lba_mode(base: &TrainConfig) -> Mode {
    match base.mode {
        Mode::Lba { pretrain_iters } => Mode::Lba { pretrain_iters },
        _ => Mode::Lba { pretrain_iters: TrainConfig::DEFAULT_LBA_PRETRAIN },
    }
}

/// Mode for a method label as used in cell keys and tables.
pub fn method_mode(label: &str, base: &TrainConfig) -> Result<Mode> {
    match label {
        "lba" => Ok(lba_mode(base)),
        other => other.parse(),
    }
}

fn config_for(m: &Manifest, mode: Mode, seed: u64, demo_path: Option<&Path>) -> TrainConfig {
    let mut c = m.base.clone();
    c.mode = mode;
    c.seed = seed;
    c.demo_path = if mode.needs_demos() { demo_path.map(Path::to_path_buf) } else { None };
    c
}

fn curve_figure(
    out: &Path,
    name: &str,
    title: &str,
    groups: &[(String, Vec<Vec<IterationMetrics>>)],
    reference: Option<(String, f64)>,
) -> Result<PathBuf> {
    let mut paths = Vec::new();
    let mut labels = Vec::new();
    for (label, runs) in groups {
        let p = out.join("curves").join(format!("{label}.csv"));
        write(&p, &curve_csv(&mean_curve(runs)))?;
        paths.push(p);
        labels.push(label.clone());
    }
    let svg = out.join(format!("{name}.svg"));
    let opts = ChartOptions {
        title: title.to_string(),
        x_label: "iteration".into(),
        y_label: "mean episode return".into(),
        reference,
    };
    render_csv_files(&paths, &labels, &opts, &svg)?;
    Ok(svg)
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub expert_mean: f64,
    pub summaries: Vec<MethodSummary>,
    /// `(method, seed) -> trace`.
    pub runs: HashMap<(String, u64), Vec<IterationMetrics>>,
    pub figure: PathBuf,
    pub summary_path: PathBuf,
}

pub const COMPARE_METHODS: [&str; 5] = ["rl-only", "il-only", "lba", "lfnd-now", "lfnd"];

/// Runs each method of `methods` for every seed on the manifest's demos.
pub fn run_compare_methods(m: &Manifest, methods: &[&str]) -> Result<CompareReport> {
    m.validate()?;
    let demo_set = load_demos(m)?;
    let demo_path = m.demos.clone();
    let mut cells = Vec::new();
    for &method in methods {
        let mode = method_mode(method, &m.base)?;
        for &seed in &m.seeds {
            let mut cell = Cell::new(
                format!("{method}-s{seed}"),
                config_for(m, mode, seed, demo_path.as_deref()),
                mode.needs_demos().then(|| demo_set.clone()),
            );
            cell.dump_weights = m.dump_weights && mode == Mode::Lfnd;
            cells.push(cell);
        }
    }
    let results = run_cells(&m.out_dir, &cells, thread_budget())?;
    let expert_mean = demos::demoset_stats(&demo_set).mean_return;
    let mut runs = HashMap::new();
    let mut groups = Vec::new();
    let mut summaries = Vec::new();
    let mut it = results.into_iter();
    for &method in methods {
        let traces: Vec<Vec<IterationMetrics>> = m.seeds.iter().map(|_| it.next().expect("one result per cell").metrics).collect();
        let stats: Vec<RunStats> = traces.iter().map(|t| RunStats::of(t)).collect();
        summaries.push(MethodSummary::from_runs(method, &stats));
        for (seed, t) in m.seeds.iter().zip(&traces) {
            runs.insert((method.to_string(), *seed), t.clone());
        }
        groups.push((method.to_string(), traces));
    }
    let summary_path = m.out_dir.join("summary.csv");
    write(&summary_path, &summary_csv(&summaries))?;
    write(&m.out_dir.join("expert.csv"), &format!("expert_mean_return\n{expert_mean}\n"))?;
    let figure = curve_figure(
        &m.out_dir,
        "compare",
        &format!("{}: method comparison", m.env_id()),
        &groups,
        Some(("Expert".into(), expert_mean)),
    )?;
    Ok(CompareReport { expert_mean, summaries, runs, figure, summary_path })
}

pub fn run_compare(m: &Manifest) -> Result<CompareReport> {
    run_compare_methods(m, &COMPARE_METHODS)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ratio: f64,
    pub baseline: String,
    pub lfnd_reward: f64,
    pub baseline_reward: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `(ratio label, method, seed) -> mean-over-iterations reward`.
    pub run_means: HashMap<(String, String, u64), f64>,
    pub table_path: PathBuf,
    pub figure: PathBuf,
}

pub fn ratio_label(r: f64) -> String {
    format!("{r:.2}")
}

pub const SWEEP_HEADER: &str = "ratio,baseline,lfnd_reward,baseline_reward,improvement_ratio";

fn noise_model(m: &Manifest, expert: &dwrl::nn::MlpParams) -> Result<NoiseModel> {
    Ok(match m.noise_source {
        NoiseSource::Immature => NoiseModel::ImmatureAgent(load_policy(require(&m.immature, "immature")?)?),
        NoiseSource::EpsilonRandom(epsilon) => NoiseModel::EpsilonRandom { demonstrator: expert.clone(), epsilon },
    })
}

/// Generates the clean demonstration set and its corrupted version per ratio.
pub fn sweep_demos(m: &Manifest) -> Result<Vec<(f64, PathBuf, Arc<DemoSet>)>> {
    let expert = load_policy(require(&m.expert, "expert")?)?;
    let model = noise_model(m, &expert)?;
    let mut environment = env::make(m.env_id())?;
    let clean = demos::generate_demos(
        &expert,
        environment.as_mut(),
        m.demo_count,
        m.demo_seed,
        m.demo_gamma,
        Sampling::Stochastic,
    )?;
    m.ratios
        .iter()
        .map(|&r| {
            let d = demos::corrupt(&clean, r, &model, environment.as_mut(), m.demo_seed.wrapping_add(1))?;
            let path = m.out_dir.join("demos").join(format!("ratio-{}.jsonl", ratio_label(r)));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.to_path_buf(), source: e })?;
            }
            demos::save(&d, &path)?;
            Ok((r, path, Arc::new(d)))
        })
        .collect()
}

pub fn run_noise_sweep(m: &Manifest) -> Result<SweepReport> {
    m.validate()?;
    let sets = sweep_demos(m)?;
    let mut cells = Vec::new();
    let mut index: Vec<(String, String, u64)> = Vec::new();
    for b in &m.baselines {
        method_mode(b, &m.base)?;
    }
    if m.baselines.iter().any(|b| b == "rl-only") {
        for &seed in &m.seeds {
            cells.push(Cell::new(format!("rl-only-s{seed}"), config_for(m, Mode::RlOnly, seed, None), None));
            index.push(("*".into(), "rl-only".into(), seed));
        }
    }
    for (r, path, set) in &sets {
        let methods = std::iter::once("lfnd").chain(m.baselines.iter().map(String::as_str).filter(|b| *b != "rl-only"));
        for method in methods {
            let mode = method_mode(method, &m.base)?;
            for &seed in &m.seeds {
                cells.push(Cell::new(
                    format!("r{}-{method}-s{seed}", ratio_label(*r)),
                    config_for(m, mode, seed, Some(path)),
                    Some(set.clone()),
                ));
                index.push((ratio_label(*r), method.to_string(), seed));
            }
        }
    }
    let results = run_cells(&m.out_dir, &cells, thread_budget())?;
    let mut run_means = HashMap::new();
    for (key, res) in index.into_iter().zip(&results) {
        run_means.insert(key, RunStats::of(&res.metrics).mean_over_iterations);
    }
    let seed_mean = |ratio: &str, method: &str| -> f64 {
        let key_ratio = if method == "rl-only" { "*" } else { ratio };
        let v: Vec<f64> = m
            .seeds
            .iter()
            .map(|s| run_means[&(key_ratio.to_string(), method.to_string(), *s)])
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut rows = Vec::new();
    for b in &m.baselines {
        for (r, _, _) in &sets {
            let label = ratio_label(*r);
            let lfnd_reward = seed_mean(&label, "lfnd");
            let baseline_reward = seed_mean(&label, b);
            rows.push(SweepRow {
                ratio: *r,
                baseline: b.clone(),
                lfnd_reward,
                baseline_reward,
                improvement: improvement_ratio(lfnd_reward, baseline_reward),
            });
        }
    }
    let mut table = format!("{SWEEP_HEADER}\n");
    for row in &rows {
        table.push_str(&format!(
            "{},{},{},{},{}\n",
            ratio_label(row.ratio),
            row.baseline,
            row.lfnd_reward,
            row.baseline_reward,
            row.improvement
        ));
    }
    let table_path = m.out_dir.join("noise_sweep.csv");
    write(&table_path, &table)?;
    let figure = render_sweep_figure(&table_path, &m.out_dir.join("noise_sweep.svg"))?;
    Ok(SweepReport { rows, run_means, table_path, figure })
}

/// Bar chart of improvement ratio per noise ratio, one bar per baseline,
/// read back from the sweep table.
pub fn render_sweep_figure(table: &Path, out_svg: &Path) -> Result<PathBuf> {
    let text = fs::read_to_string(table).map_err(|e| Error::Io { path: table.to_path_buf(), source: e })?;
    let mut categories: Vec<String> = Vec::new();
    let mut series: Vec<(String, Vec<f64>)> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::Parse { path: table.to_path_buf(), line: n + 1, message: "expected 5 fields".into() });
        }
        let v: f64 = f[4]
            .parse()
            .map_err(|_| Error::Parse { path: table.to_path_buf(), line: n + 1, message: format!("bad number '{}'", f[4]) })?;
        if !categories.iter().any(|c| c == f[0]) {
            categories.push(f[0].to_string());
        }
        match series.iter_mut().find(|(b, _)| b == f[1]) {
            Some((_, vals)) => vals.push(v),
            None => series.push((f[1].to_string(), vec![v])),
        }
    }
    let svg = render_bars(
        &categories,
        &series,
        &ChartOptions {
            title: "improvement ratio of lfnd over each baseline".into(),
            x_label: "noise ratio".into(),
            y_label: "improvement ratio".into(),
            reference: None,
        },
    )?;
    write(out_svg, &svg)?;
    Ok(out_svg.to_path_buf())
}

/// Average weight per instance over every dumped iteration, in
/// [`DemoSet::instances`] order.
pub fn average_weights(records: &[WeightRecord], demos: &DemoSet) -> Result<Vec<f64>> {
    let mut position = HashMap::new();
    for (k, (t, j, _)) in demos.instances().enumerate() {
        position.insert((demos.trajectories[t].id.as_str(), j), k);
    }
    let n = demos.instance_count();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for r in records {
        let k = *position.get(&(r.trajectory_id.as_str(), r.step_index)).ok_or_else(|| {
            Error::Domain(format!(
                "weight record for {} step {} does not match the demonstrations",
                r.trajectory_id, r.step_index
            ))
        })?;
        sum[k] += r.weight;
        count[k] += 1;
    }
    if let Some(k) = count.iter().position(|c| *c == 0) {
        return Err(Error::Domain(format!("no weight records for demonstration instance {k}")));
    }
    Ok(sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect())
}

/// Splits instance indices, sorted by increasing weight, into `groups`
/// contiguous groups whose sizes differ by at most one.
pub fn weight_groups(avg: &[f64], groups: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..avg.len()).collect();
    order.sort_by(|&a, &b| avg[a].total_cmp(&avg[b]).then(a.cmp(&b)));
    let (base, extra) = (avg.len() / groups, avg.len() % groups);
    let mut out = Vec::with_capacity(groups);
    let mut start = 0;
    for g in 0..groups {
        let size = base + usize::from(g >= groups - extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupRow {
    pub seed: u64,
    pub group: usize,
    pub size: usize,
    pub mean_weight: f64,
    pub noisy_fraction: f64,
    pub il_mean: f64,
    pub il_max: f64,
    pub il_final: f64,
}

#[derive(Debug, Clone)]
pub struct GroupReport {
    pub rows: Vec<GroupRow>,
    pub table_path: PathBuf,
    pub figure: PathBuf,
}

pub const GROUP_HEADER: &str = "seed,group,size,mean_weight,noisy_fraction,il_mean,il_max,il_final";

fn missing_dump(path: &Path) -> Error {
    Error::Config(format!(
        "weight dump {} not found; re-run the lfnd training with weight dumping enabled \
         (dwrl train --mode lfnd --dump-weights, or dump_weights = true in the manifest)",
        path.display()
    ))
}

pub fn run_weight_groups(m: &Manifest) -> Result<GroupReport> {
    m.validate()?;
    let demo_set = load_demos(m)?;
    let dumps: Vec<PathBuf> = match &m.weights {
        Some(p) => {
            if !p.exists() {
                return Err(missing_dump(p));
            }
            m.seeds.iter().map(|_| p.clone()).collect()
        }
        None => {
            let cells: Vec<Cell> = m
                .seeds
                .iter()
                .map(|&seed| {
                    let mut c = Cell::new(
                        format!("lfnd-s{seed}"),
                        config_for(m, Mode::Lfnd, seed, m.demos.as_deref()),
                        Some(demo_set.clone()),
                    );
                    c.dump_weights = true;
                    c
                })
                .collect();
            run_cells(&m.out_dir, &cells, thread_budget())?
                .iter()
                .map(CellResult::weights_path)
                .collect()
        }
    };
    let noisy: Vec<bool> = demo_set.instances().map(|(_, _, i)| i.is_noisy).collect();
    let mut plans = Vec::new();
    let mut cells = Vec::new();
    for (&seed, dump) in m.seeds.iter().zip(&dumps) {
        if !dump.exists() {
            return Err(missing_dump(dump));
        }
        let avg = average_weights(&read_weight_csv(dump)?, &demo_set)?;
        for (g, members) in weight_groups(&avg, m.groups).into_iter().enumerate() {
            let mut mask = vec![0.0; avg.len()];
            members.iter().for_each(|&k| mask[k] = 1.0);
            let mut config = config_for(m, Mode::IlOnly, seed, m.demos.as_deref());
            if let Some(n) = m.group_iterations {
                config.iterations = n;
            }
            let mut cell = Cell::new(format!("s{seed}-group{:02}", g + 1), config, Some(demo_set.clone()));
            cell.fixed_weights = Some(mask);
            cells.push(cell);
            let size = members.len().max(1) as f64;
            plans.push((
                seed,
                g + 1,
                members.len(),
                members.iter().map(|&k| avg[k]).sum::<f64>() / size,
                members.iter().filter(|&&k| noisy[k]).count() as f64 / size,
            ));
        }
    }
    let results = run_cells(&m.out_dir, &cells, thread_budget())?;
    let rows: Vec<GroupRow> = plans
        .into_iter()
        .zip(&results)
        .map(|((seed, group, size, mean_weight, noisy_fraction), r)| {
            let s = RunStats::of(&r.metrics);
            GroupRow {
                seed,
                group,
                size,
                mean_weight,
                noisy_fraction,
                il_mean: s.mean_over_iterations,
                il_max: s.max,
                il_final: s.final_return,
            }
        })
        .collect();
    let mut table = format!("{GROUP_HEADER}\n");
    for r in &rows {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.seed, r.group, r.size, r.mean_weight, r.noisy_fraction, r.il_mean, r.il_max, r.il_final
        ));
    }
    let table_path = m.out_dir.join("weight_groups.csv");
    write(&table_path, &table)?;
    let categories: Vec<String> = (1..=m.groups).map(|g| g.to_string()).collect();
    let per_group = |f: fn(&GroupRow) -> f64| -> Vec<f64> {
        (1..=m.groups)
            .map(|g| {
                let v: Vec<f64> = rows.iter().filter(|r| r.group == g).map(f).collect();
                v.iter().sum::<f64>() / v.len().max(1) as f64
            })
            .collect()
    };
    let svg = render_bars(
        &categories,
        &[
            ("IL mean reward".into(), per_group(|r| r.il_mean)),
            ("noisy fraction".into(), per_group(|r| r.noisy_fraction)),
        ],
        &ChartOptions {
            title: "imitation per weight group (1 = lowest weights)".into(),
            x_label: "weight group".into(),
            y_label: "value".into(),
            reference: None,
        },
    )?;
    let figure = m.out_dir.join("weight_groups.svg");
    write(&figure, &svg)?;
    Ok(GroupReport { rows, table_path, figure })
}

pub fn weight_form_variants() -> Vec<(String, WeightForm)> {
    vec![
        ("onezero".into(), WeightForm::OneZero),
        ("linear10".into(), WeightForm::Linear { delta: 10.0 }),
        ("linear20".into(), WeightForm::Linear { delta: 20.0 }),
        ("log".into(), WeightForm::Log),
    ]
}

#[derive(Debug, Clone)]
pub struct FormsReport {
    pub summaries: Vec<MethodSummary>,
    /// `(series label, seed) -> trace`; labels are `lfnd-<form>` and `rl-only`.
    pub runs: HashMap<(String, u64), Vec<IterationMetrics>>,
    pub summary_path: PathBuf,
    pub figure: PathBuf,
}

pub fn run_weight_forms(m: &Manifest) -> Result<FormsReport> {
    m.validate()?;
    let demo_set = load_demos(m)?;
    let mut labels: Vec<String> = Vec::new();
    let mut cells = Vec::new();
    for (name, form) in weight_form_variants() {
        let label = format!("lfnd-{name}");
        for &seed in &m.seeds {
            let mut config = config_for(m, Mode::Lfnd, seed, m.demos.as_deref());
            config.weight_form = form;
            let key = if form == m.base.weight_form {
                format!("lfnd-s{seed}")
            } else {
                format!("{label}-s{seed}")
            };
            let mut cell = Cell::new(key, config, Some(demo_set.clone()));
            cell.dump_weights = m.dump_weights;
            cells.push(cell);
        }
        labels.push(label);
    }
    for &seed in &m.seeds {
        cells.push(Cell::new(format!("rl-only-s{seed}"), config_for(m, Mode::RlOnly, seed, None), None));
    }
    labels.push("rl-only".into());
    let results = run_cells(&m.out_dir, &cells, thread_budget())?;
    let mut it = results.into_iter();
    let mut runs = HashMap::new();
    let mut summaries = Vec::new();
    let mut groups = Vec::new();
    for label in &labels {
        let traces: Vec<Vec<IterationMetrics>> = m.seeds.iter().map(|_| it.next().expect("one result per cell").metrics).collect();
        let stats: Vec<RunStats> = traces.iter().map(|t| RunStats::of(t)).collect();
        summaries.push(MethodSummary::from_runs(label, &stats));
        for (seed, t) in m.seeds.iter().zip(&traces) {
            runs.insert((label.clone(), *seed), t.clone());
        }
        groups.push((label.clone(), traces));
    }
    let summary_path = m.out_dir.join("summary.csv");
    write(&summary_path, &summary_csv(&summaries))?;
    let figure = curve_figure(&m.out_dir, "weight_forms", &format!("{}: weight forms", m.env_id()), &groups, None)?;
    Ok(FormsReport { summaries, runs, summary_path, figure })
}

/// Path of the weight dump a weight-groups run expects for `seed`.
pub fn expected_dump(m: &Manifest, seed: u64) -> PathBuf {
    cell_dir(&m.out_dir, &format!("lfnd-s{seed}")).join(WEIGHTS_FILE)
}
