use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dwrl::demos;
use dwrl::trainer::{save_policy, write_metrics_csv};
use dwrl::{Error, Mode, Result, TrainConfig, Trainer, WeightForm};
use dwrl_cli::experiments;
use dwrl_cli::expert::{self, DemoRequest};
use dwrl_cli::manifest::{parse_seeds, ExperimentKind, Manifest};
use dwrl_cli::svg::{render_csv_files, ChartOptions};

#[derive(Parser)]
#[command(name = "dwrl", version, about = "Learning from noisy demonstrations with adaptive instance weights")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an exploration-only demonstrator and an early snapshot of it.
    TrainExpert {
        #[command(flatten)]
        train: TrainArgs,
        /// Iteration at which the immature snapshot is saved.
        #[arg(long, default_value_t = 30)]
        immature_at: usize,
        #[arg(long, default_value = "expert")]
        out: PathBuf,
    },
    /// Roll out a demonstrator and optionally corrupt a fraction of trajectories.
    GenDemos {
        #[arg(long, default_value = "gridworld8")]
        env: String,
        #[arg(long)]
        expert: PathBuf,
        #[arg(long)]
        immature: Option<PathBuf>,
        /// Corrupt with epsilon-random actions instead of the immature snapshot.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single policy.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        weight_form: Option<String>,
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Append every iteration's instance weights to <out>/weights.csv.
        #[arg(long)]
        dump_weights: bool,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Compare all methods on one demonstration set.
    Compare(ExperimentArgs),
    /// Sweep the fraction of noisy trajectories.
    SweepNoise(ExperimentArgs),
    /// Imitate each decile of instances ranked by learned weight.
    WeightGroups(ExperimentArgs),
    /// Compare weight functions.
    WeightForms(ExperimentArgs),
    /// Render learning curves from metric CSV files.
    Render {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, default_value = "learning curves")]
        title: String,
        /// Horizontal reference line, as LABEL=VALUE.
        #[arg(long)]
        reference: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "gridworld8")]
    env: String,
    /// File of `key = value` training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment manifest (`key = value` lines).
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Extra `key=value` settings applied after the manifest.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn train_config(a: &TrainArgs) -> Result<TrainConfig> {
    let mut c = TrainConfig::for_env(&a.env);
    if let Some(p) = &a.config {
        c.apply_text(&read_text(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(n) = a.iterations {
        c.iterations = n;
    }
    Ok(c)
}

fn manifest(kind: ExperimentKind, a: &ExperimentArgs) -> Result<Manifest> {
    let mut m = match &a.manifest {
        Some(p) => Manifest::from_file(p, Some(kind))?,
        None => Manifest::new(kind, a.env.as_deref().unwrap_or("gridworld8")),
    };
    if a.manifest.is_some() {
        if let Some(env) = &a.env {
            if env != m.env_id() {
                return Err(Error::Config(format!(
                    "--env {env} conflicts with the manifest's env {}",
                    m.env_id()
                )));
            }
        }
    }
    if let Some(s) = &a.seeds {
        m.seeds = parse_seeds(s)?;
    }
    if let Some(d) = &a.demos {
        m.demos = Some(d.clone());
    }
    if let Some(o) = &a.out {
        m.out_dir = o.clone();
    }
    if let Some(n) = a.iterations {
        m.base.iterations = n;
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        m.set(k, v)?;
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainExpert { train, immature_at, out } => {
            let mut config = train_config(&train)?;
            config.mode = Mode::RlOnly;
            config.demo_path = None;
            config.validate()?;
            let r = expert::train_expert(&config, immature_at, &out)?;
            println!("expert {} (return {:.4})", r.expert_path.display(), r.expert_return);
            println!("immature {} (return {:.4})", r.immature_path.display(), r.immature_return);
        }
        Command::GenDemos { env, expert, immature, epsilon, count, noise_ratio, seed, gamma, out } => {
            if !(0.0..=1.0).contains(&noise_ratio) {
                return Err(Error::Config(format!("--noise-ratio {noise_ratio} outside [0, 1]")));
            }
            let set = expert::gen_demos(&DemoRequest {
                env_id: &env,
                expert: &expert,
                immature: immature.as_deref(),
                epsilon,
                count,
                noise_ratio,
                seed,
                gamma,
            })?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            demos::save(&set, &out)?;
            println!(
                "{} trajectories ({} noisy, {} instances), mean return {:.4} -> {}",
                set.len(),
                set.noisy_trajectory_count(),
                set.instance_count(),
                demos::demoset_stats(&set).mean_return,
                out.display()
            );
        }
        Command::Train { train, mode, weight_form, demos, dump_weights, out } => {
            let mut config = train_config(&train)?;
            if let Some(m) = mode {
                config.set("mode", &m)?;
            }
            if let Some(w) = weight_form {
                config.weight_form = w.parse::<WeightForm>()?;
            }
            if let Some(d) = demos {
                config.demo_path = Some(d);
            }
            if config.mode == Mode::RlOnly {
                config.demo_path = None;
            }
            config.validate()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            std::fs::write(out.join("config.txt"), config.to_text()).map_err(|e| Error::io(&out, e))?;
            let mut trainer = Trainer::new(config)?.diagnostics_dir(&out);
            if dump_weights {
                trainer = trainer.dump_weights_to(out.join("weights.csv"));
            }
            while !trainer.is_finished() {
                let m = trainer.step()?;
                log::info!("iteration {} return {:.4}", m.iteration, m.mean_episode_return);
            }
            write_metrics_csv(&out.join("metrics.csv"), trainer.metrics())?;
            save_policy(&out.join("final.dwrl"), trainer.policy(), Some(trainer.value_net()))?;
            let (mean, max) = dwrl::trainer::summarize_trace(trainer.metrics());
            println!("mean return {mean:.4}, max {max:.4} -> {}", out.display());
        }
        Command::Compare(a) => {
            let r = experiments::run_compare(&manifest(ExperimentKind::Compare, &a)?)?;
            println!("expert mean return {:.4}", r.expert_mean);
            for s in &r.summaries {
                println!("{:10} mean {:.4} ± {:.4}  max {:.4}", s.method, s.mean.0, s.mean.1, s.max.0);
            }
            println!("{} {}", r.summary_path.display(), r.figure.display());
        }
        Command::SweepNoise(a) => {
            let r = experiments::run_noise_sweep(&manifest(ExperimentKind::NoiseSweep, &a)?)?;
            println!("{} rows -> {} {}", r.rows.len(), r.table_path.display(), r.figure.display());
        }
        Command::WeightGroups(a) => {
            let r = experiments::run_weight_groups(&manifest(ExperimentKind::WeightGroups, &a)?)?;
            println!("{} rows -> {} {}", r.rows.len(), r.table_path.display(), r.figure.display());
        }
        Command::WeightForms(a) => {
            let r = experiments::run_weight_forms(&manifest(ExperimentKind::WeightForms, &a)?)?;
            for s in &r.summaries {
                println!("{:16} mean {:.4} ± {:.4}", s.method, s.mean.0, s.mean.1);
            }
            println!("{} {}", r.summary_path.display(), r.figure.display());
        }
        Command::Render { csv, labels, title, reference, out } => {
            let reference = reference
                .map(|r| {
                    let (l, v) = r
                        .split_once('=')
                        .ok_or_else(|| Error::Config(format!("--reference expects LABEL=VALUE, got '{r}'")))?;
                    let v: f64 = v.parse().map_err(|_| Error::Config(format!("bad reference value '{v}'")))?;
                    Ok::<_, Error>((l.to_string(), v))
                })
                .transpose()?;
            let opts = ChartOptions {
                title,
                x_label: "iteration".into(),
                y_label: "mean episode return".into(),
                reference,
            };
            render_csv_files(&csv, &labels, &opts, &out)?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 3 })
        }
    }
}
