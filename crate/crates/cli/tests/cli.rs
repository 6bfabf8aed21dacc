use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dwrl::trainer::read_metrics_csv;
use dwrl::weighting::{compute_weight, read_weight_csv};
use dwrl::WeightForm;

const SMALL: &str = "steps_per_iteration = 128
minibatch_size = 64
hidden = 16
eval_episodes = 2
epochs = 2
value_epochs = 2
";

fn dwrl(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dwrl"));
    c.args(args);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Trains a tiny expert and writes a 10-trajectory demo file with 5 noisy.
fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = dir.join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let ex = dir.join("expert");
    ok(&dwrl(
        &["train-expert", "--config", s(&cfg), "--iterations", "6", "--immature-at", "2", "--seed", "3", "--out", s(&ex)],
        &[],
    ));
    let demos = dir.join("demos.jsonl");
    let out = ok(&dwrl(
        &[
            "gen-demos",
            "--expert",
            s(&ex.join("expert.dwrl")),
            "--immature",
            s(&ex.join("immature.dwrl")),
            "--count",
            "10",
            "--noise-ratio",
            "0.5",
            "--out",
            s(&demos),
        ],
        &[],
    ));
    assert!(out.contains("10 trajectories (5 noisy"), "{out}");
    (cfg, demos)
}

fn manifest(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, format!("env = gridworld8\n{SMALL}iterations = 3\nseeds = 0..2\n{extra}")).unwrap();
    p
}

#[test]
fn exit_codes_distinguish_config_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dwrl(&["--help"], &[]).status.code(), Some(0));
    assert_eq!(dwrl(&["no-such-command"], &[]).status.code(), Some(2));
    assert_eq!(dwrl(&["train", "--env", "atari"], &[]).status.code(), Some(2));
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "learning_speed = 3\n").unwrap();
    let out = dwrl(&["train", "--config", s(&bad), "--mode", "rl-only"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
    let missing = dir.path().join("absent.jsonl");
    let out = dwrl(&["train", "--mode", "lfnd", "--demos", s(&missing), "--out", s(dir.path())], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(dwrl(&["render", "--out", "x.svg"], &[]).status.code(), Some(2));
}

#[test]
fn expert_training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, SMALL).unwrap();
    for run in ["a", "b"] {
        ok(&dwrl(
            &["train-expert", "--config", s(&cfg), "--iterations", "5", "--immature-at", "1", "--out", s(&dir.path().join(run))],
            &[],
        ));
    }
    for f in ["expert.dwrl", "immature.dwrl"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let bad = dwrl(&["train-expert", "--config", s(&cfg), "--iterations", "5", "--immature-at", "5"], &[]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn train_writes_metrics_and_weight_dump() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, demos) = setup(dir.path());
    let out = dir.path().join("run");
    ok(&dwrl(
        &[
            "train", "--config", s(&cfg), "--mode", "lfnd", "--weight-form", "onezero", "--demos", s(&demos),
            "--iterations", "3", "--dump-weights", "--out", s(&out),
        ],
        &[],
    ));
    assert_eq!(read_metrics_csv(&out.join("metrics.csv")).unwrap().len(), 3);
    let w = read_weight_csv(&out.join("weights.csv")).unwrap();
    assert!(w.iter().all(|r| r.weight == 0.0 || r.weight == 1.0));
}

#[test]
fn compare_summary_is_recomputable_and_runs_resume() {
    let dir = tempfile::tempdir().unwrap();
    let (_, demos) = setup(dir.path());
    let out = dir.path().join("cmp");
    let m = manifest(dir.path(), "cmp.manifest", &format!("demos = {}\nout = {}\n", s(&demos), s(&out)));
    ok(&dwrl(&["compare", "--manifest", s(&m)], &[("DWRL_THREADS", "2")]));
    let rows = csv_rows(&out.join("summary.csv"));
    let methods: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["rl-only", "il-only", "lba", "lfnd-now", "lfnd"]);
    for r in &rows {
        let runs: Vec<_> = (0..2)
            .map(|seed| read_metrics_csv(&out.join("runs").join(format!("{}-s{seed}", r[0])).join("metrics.csv")).unwrap())
            .collect();
        let means: Vec<f64> = runs.iter().map(|t| t.iter().map(|m| m.mean_episode_return).sum::<f64>() / t.len() as f64).collect();
        let maxes: Vec<f64> = runs.iter().map(|t| t.iter().map(|m| m.mean_episode_return).fold(f64::MIN, f64::max)).collect();
        let mean_of = |v: &[f64]| (v[0] + v[1]) / 2.0;
        assert!((r[2].parse::<f64>().unwrap() - mean_of(&means)).abs() < 1e-12);
        assert!((r[4].parse::<f64>().unwrap() - mean_of(&maxes)).abs() < 1e-12);
    }
    let expert = fs::read_to_string(out.join("expert.csv")).unwrap();
    let stats = dwrl::demos::demoset_stats(&dwrl::demos::load(&demos).unwrap());
    assert_eq!(expert.lines().nth(1).unwrap().parse::<f64>().unwrap(), stats.mean_return);
    let svg = fs::read_to_string(out.join("compare.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);
    assert!(svg.contains("class=\"reference\"") && svg.contains(">Expert<"));

    let before = fs::read(out.join("summary.csv")).unwrap();
    let again = dwrl(&["compare", "--manifest", s(&m)], &[("RUST_LOG", "info"), ("DWRL_THREADS", "1")]);
    ok(&again);
    let log = String::from_utf8_lossy(&again.stderr);
    assert_eq!(log.matches("reused").count(), 10, "{log}");
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), before);

    fs::write(out.join("runs/lfnd-s1/metrics.csv"), "tampered").unwrap();
    let third = dwrl(&["compare", "--manifest", s(&m)], &[("RUST_LOG", "info")]);
    ok(&third);
    let log = String::from_utf8_lossy(&third.stderr);
    assert_eq!(log.matches("reused").count(), 9, "{log}");
    assert_eq!(fs::read(out.join("summary.csv")).unwrap(), before);
}

#[test]
fn noise_sweep_emits_eleven_ratios_per_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = setup(dir.path());
    let _ = cfg;
    let out = dir.path().join("sweep");
    let ex = dir.path().join("expert");
    let m = manifest(
        dir.path(),
        "sweep.manifest",
        &format!(
            "expert = {}\nimmature = {}\nout = {}\nseeds = 0\niterations = 2\nbaselines = rl-only,il-only\n",
            s(&ex.join("expert.dwrl")),
            s(&ex.join("immature.dwrl")),
            s(&out)
        ),
    );
    ok(&dwrl(&["sweep-noise", "--manifest", s(&m)], &[]));
    let rows = csv_rows(&out.join("noise_sweep.csv"));
    for b in ["rl-only", "il-only"] {
        let ratios: Vec<&str> = rows.iter().filter(|r| r[1] == b).map(|r| r[0].as_str()).collect();
        assert_eq!(ratios.len(), 11);
        assert_eq!(ratios[0], "0.00");
        assert_eq!(ratios[10], "1.00");
    }
    let mean = |p: PathBuf| {
        let t = read_metrics_csv(&p).unwrap();
        t.iter().map(|m| m.mean_episode_return).sum::<f64>() / t.len() as f64
    };
    for r in &rows {
        let lfnd = mean(out.join("runs").join(format!("r{}-lfnd-s0", r[0])).join("metrics.csv"));
        let base_key = if r[1] == "rl-only" { "rl-only-s0".to_string() } else { format!("r{}-{}-s0", r[0], r[1]) };
        let base = mean(out.join("runs").join(base_key).join("metrics.csv"));
        assert_eq!(r[2].parse::<f64>().unwrap(), lfnd);
        assert_eq!(r[3].parse::<f64>().unwrap(), base);
        let ratio = (lfnd - base) / base.abs().max(1e-6);
        assert!((r[4].parse::<f64>().unwrap() - ratio).abs() < 1e-12);
    }
    let noisy: Vec<usize> = (0..=10)
        .map(|k| {
            dwrl::demos::load(&out.join("demos").join(format!("ratio-{:.2}.jsonl", k as f64 / 10.0)))
                .unwrap()
                .noisy_trajectory_count()
        })
        .collect();
    assert_eq!(noisy, (0..=10).collect::<Vec<_>>());
}

#[test]
fn weight_groups_need_a_dump_and_partition_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, demos) = setup(dir.path());
    let out = dir.path().join("groups");
    let absent = dir.path().join("nowhere.csv");
    let m = manifest(
        dir.path(),
        "missing.manifest",
        &format!("demos = {}\nweights = {}\nout = {}\n", s(&demos), s(&absent), s(&out)),
    );
    let res = dwrl(&["weight-groups", "--manifest", s(&m)], &[]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("re-run") && err.contains("--dump-weights"), "{err}");

    let m = manifest(
        dir.path(),
        "groups.manifest",
        &format!("demos = {}\nout = {}\nseeds = 0\ngroup_iterations = 2\n", s(&demos), s(&out)),
    );
    ok(&dwrl(&["weight-groups", "--manifest", s(&m)], &[]));
    let rows = csv_rows(&out.join("weight_groups.csv"));
    assert_eq!(rows.len(), 10);
    let sizes: Vec<usize> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    let n = dwrl::demos::load(&demos).unwrap().instance_count();
    assert_eq!(sizes.iter().sum::<usize>(), n);
    assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    let weights: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(weights[0] <= weights[9]);
    assert!(weights.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn weight_forms_emit_five_series_and_scale_linearly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, demos) = setup(dir.path());
    let out = dir.path().join("forms");
    let m = manifest(
        dir.path(),
        "forms.manifest",
        &format!("demos = {}\nout = {}\nseeds = 0\ndump_weights = true\n", s(&demos), s(&out)),
    );
    ok(&dwrl(&["weight-forms", "--manifest", s(&m)], &[]));
    let rows = csv_rows(&out.join("summary.csv"));
    assert_eq!(rows.len(), 5);
    let svg = fs::read_to_string(out.join("weight_forms.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);
    for name in ["lfnd-onezero", "lfnd-linear10", "lfnd-linear20", "lfnd-log", "rl-only"] {
        assert!(out.join("curves").join(format!("{name}.csv")).exists());
    }
    let l10 = read_weight_csv(&out.join("runs/lfnd-s0/weights.csv")).unwrap();
    let l20 = read_weight_csv(&out.join("runs/lfnd-linear20-s0/weights.csv")).unwrap();
    for r in &l10 {
        let half = compute_weight(r.q_sigma, r.v_estimate, WeightForm::Linear { delta: 20.0 }).unwrap();
        assert!((half - r.weight / 2.0).abs() < 1e-15);
    }
    for r in &l20 {
        let double = compute_weight(r.q_sigma, r.v_estimate, WeightForm::Linear { delta: 10.0 }).unwrap();
        assert!((double / 2.0 - r.weight).abs() < 1e-15);
    }
}

fn attr(svg: &str, name: &str) -> f64 {
    let key = format!("{name}=\"");
    let start = svg.find(&key).unwrap() + key.len();
    let end = start + svg[start..].find('"').unwrap();
    svg[start..end].parse().unwrap()
}

#[test]
fn render_is_a_pure_function_of_the_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(&a, "iteration,mean_episode_return\n1,-1.0\n5,0.5\n").unwrap();
    fs::write(&b, "iteration,mean_episode_return,std\n1,0.0,0\n3,2.0,0\n").unwrap();
    let out = dir.path().join("one.svg");
    ok(&dwrl(&["render", s(&a), "--out", s(&out)], &[]));
    let svg = fs::read_to_string(&out).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    let start = svg.find("points=\"").unwrap() + 8;
    let pts = &svg[start..start + svg[start..].find('"').unwrap()];
    assert_eq!(pts.split(' ').count(), 2);
    assert!(pts.split(' ').all(|p| p.split(',').count() == 2));

    let two = dir.path().join("two.svg");
    let args = ["render", s(&a), s(&b), "--labels", "a,b", "--reference", "Expert=3", "--out", s(&two)];
    ok(&dwrl(&args, &[]));
    let first = fs::read(&two).unwrap();
    let svg = String::from_utf8(first.clone()).unwrap();
    let (xlo, xhi, ylo, yhi) = (1.0, 5.0, -1.0, 3.0);
    let close = |v: f64, w: f64| (v - w).abs() < 1e-9;
    assert!(close(attr(&svg, "data-xmin"), xlo - 0.05 * (xhi - xlo)));
    assert!(close(attr(&svg, "data-xmax"), xhi + 0.05 * (xhi - xlo)));
    assert!(close(attr(&svg, "data-ymin"), ylo - 0.05 * (yhi - ylo)));
    assert!(close(attr(&svg, "data-ymax"), yhi + 0.05 * (yhi - ylo)));
    fs::remove_file(&two).unwrap();
    ok(&dwrl(&args, &[]));
    assert_eq!(fs::read(&two).unwrap(), first);

    fs::write(&b, "iteration,mean_episode_return\n1,0.0\n2,oops\n").unwrap();
    let res = dwrl(&["render", s(&b), "--out", s(&two)], &[]);
    assert_eq!(res.status.code(), Some(3));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("b.csv") && err.contains(":3"), "{err}");
}
