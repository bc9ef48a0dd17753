//! Subcommand implementations. Every error carries its process exit code.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use stlplan::controller::{sample_start, ControllerParams};
use stlplan::grad::{read_container, Container, ContainerError};
use stlplan::io::{atomic_write, write_json, write_jsonl};
use stlplan::planner::{embed_grid, mode_path, track_paths, PlannerParams, TrackJob};
use stlplan::sdf::{OccupancyMask, SignedDistanceField, AVOID_MAP};
use stlplan::sim::{generate_map, EnvConfig, TransitionCounter};
use stlplan::stl::{
    parse_spec, Bindings, CompiledFormula, LinearPredicate, SmoothingConfig, Trajectory,
};
use stlplan::trainer::{
    checkpoint_config, evaluate, latency_masks, measure_plan_latency, ConfigError, EvalReport,
    EvalSet, LatencyStats, Method, RunConfig, TaskName, TaskSpec, TrainError, Trainer,
};

use crate::plot::{line_chart, PlotSpec};

pub const EXIT_UNSATISFIED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl fmt::Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.to_string(),
        }
    }

    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn numeric(m: impl fmt::Display) -> Self {
        Self {
            code: EXIT_NUMERIC,
            message: m.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { ref path, .. } => Self {
                code: EXIT_IO,
                message: format!("{}: {e}", path.display()),
            },
            other => Self::usage(other),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::Io(_) | TrainError::Checkpoint(ContainerError::Io(_)) => EXIT_IO,
            TrainError::NonFinite { .. } | TrainError::Grad(_) | TrainError::Robustness(_) => {
                EXIT_NUMERIC
            }
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Globals {
    fn load_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

fn write_text(path: &Path, text: &str) -> CliResult {
    atomic_write(path, text.as_bytes()).map_err(|e| CliError::io(path, e))
}

fn write_json_file<T: Serialize>(path: &Path, v: &T) -> CliResult {
    write_json(path, v).map_err(|e| CliError::io(path, e))
}

fn write_jsonl_file<T: Serialize>(path: &Path, v: &[T]) -> CliResult {
    write_jsonl(path, v).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------- monitor

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionDef {
    center: [f64; 2],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearDef {
    a: [f64; 2],
    b: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDef {
    mask: PathBuf,
    extent: [f64; 2],
}

/// A standalone specification file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    formula: String,
    #[serde(default)]
    regions: BTreeMap<String, RegionDef>,
    #[serde(default)]
    linear: BTreeMap<String, LinearDef>,
    map: Option<MapDef>,
    beta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TrajLine {
    Point([f64; 2]),
    Path { waypoints: Vec<[f64; 2]> },
}

/// Either one trajectory of point lines or one trajectory per object line.
fn parse_trajectories(text: &str, path: &Path) -> CliResult<Vec<Vec<[f64; 2]>>> {
    let mut points = Vec::new();
    let mut paths = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TrajLine = serde_json::from_str(line)
            .map_err(|e| CliError::usage(format!("{}:{}: {e}", path.display(), k + 1)))?;
        match parsed {
            TrajLine::Point(p) => points.push(p),
            TrajLine::Path { waypoints } => paths.push(waypoints),
        }
    }
    if !points.is_empty() && !paths.is_empty() {
        return Err(CliError::usage(format!(
            "{}: mixes point lines and path objects",
            path.display()
        )));
    }
    if !points.is_empty() {
        paths.push(points);
    }
    if paths.is_empty() || paths.iter().any(|p| p.is_empty()) {
        return Err(CliError::usage(format!("{}: no waypoints", path.display())));
    }
    Ok(paths)
}

pub fn monitor(spec_path: &Path, traj_path: &Path, beta: Option<f64>) -> CliResult<u8> {
    let spec: SpecFile = serde_json::from_str(&read_text(spec_path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", spec_path.display())))?;
    let trajectories = parse_trajectories(&read_text(traj_path)?, traj_path)?;
    let mut b = Bindings::new();
    for (name, r) in &spec.regions {
        b.insert_region(name.clone(), r.center, r.radius);
    }
    for (name, l) in &spec.linear {
        b.insert(name.clone(), Arc::new(LinearPredicate::new(l.a, l.b)));
    }
    if let Some(m) = &spec.map {
        let p = spec_path.parent().unwrap_or(Path::new(".")).join(&m.mask);
        let mask = OccupancyMask::load(&p, m.extent).map_err(|e| match e {
            stlplan::sdf::MaskError::Io { .. } => CliError::io(&p, e),
            other => CliError::usage(format!("{}: {other}", p.display())),
        })?;
        b.insert(
            AVOID_MAP,
            Arc::new(SignedDistanceField::new(mask)).avoid_predicate(),
        );
    }
    let formula = parse_spec(&spec.formula, &b).map_err(CliError::usage)?;
    let compiled = CompiledFormula::new(&formula, &b).map_err(CliError::usage)?;
    let beta = beta.or(spec.beta).unwrap_or(10.0);
    let smoothing = SmoothingConfig::new(beta).map_err(CliError::usage)?;
    let mut all = true;
    for (k, pts) in trajectories.iter().enumerate() {
        let tau = Trajectory::new(pts.clone()).map_err(CliError::usage)?;
        let rho = compiled.robustness(&tau, 0).map_err(CliError::usage)?;
        let soft = match compiled.soft_robustness(&tau, 0, smoothing) {
            Ok(v) => format!("{v:.6}"),
            Err(e) => format!("unavailable ({e})"),
        };
        let ok = rho > 0.0;
        all &= ok;
        if trajectories.len() > 1 {
            println!("trajectory {k}");
        }
        println!("robustness: {rho:.6}");
        println!("verdict: {}", if ok { "satisfied" } else { "violated" });
        println!("soft robustness (beta {beta}): {soft}");
    }
    Ok(if all { 0 } else { EXIT_UNSATISFIED })
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub mode: Option<Method>,
    pub task: Option<TaskName>,
    pub budget: Option<u64>,
    pub resume: bool,
    pub unaligned: bool,
}

fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let suffix = if cfg.unaligned { "-unaligned" } else { "" };
    PathBuf::from("runs").join(format!(
        "{}-{}{}-s{}",
        cfg.task, cfg.method, suffix, cfg.seed
    ))
}

/// Config fields that may change when resuming.
fn resumable_view(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.schedule.budget = 0;
    c.out_dir = None;
    c
}

fn read_checkpoint(path: &Path) -> CliResult<Container> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_container(std::io::BufReader::new(f)).map_err(|e| match e {
        ContainerError::Io(_) => CliError::io(path, e),
        other => CliError::usage(format!("{}: {other}", path.display())),
    })
}

fn training_plot(t: &Trainer) -> String {
    let log = &t.log;
    let probe: Vec<(f64, f64)> = log
        .probes
        .iter()
        .map(|p| (p.transitions as f64, p.sr))
        .collect();
    let sat: Vec<(f64, f64)> = log
        .rows
        .iter()
        .filter(|r| r.phase == "planner")
        .map(|r| (r.transitions as f64, r.satisfied_fraction))
        .collect();
    let ctrl: Vec<(f64, f64)> = log
        .rows
        .iter()
        .filter(|r| r.phase == "controller")
        .map(|r| (r.transitions as f64, r.controller_success))
        .collect();
    line_chart(
        &format!("{} / {}", t.cfg.task, t.cfg.method),
        "transitions",
        "rate",
        &[
            ("probe SR", probe),
            ("planner satisfied fraction", sat),
            ("controller hop success", ctrl),
        ],
    )
}

fn write_progress(t: &Trainer, dir: &Path) -> CliResult {
    t.save(&dir.join("checkpoints/latest.ckpt"))?;
    write_text(&dir.join("metrics.csv"), &t.log.to_csv())
}

pub fn train(g: &Globals, args: &TrainArgs) -> CliResult {
    let mut cfg = g.load_config()?;
    if let Some(m) = args.mode {
        cfg.method = m;
    }
    if let Some(t) = args.task {
        cfg.task = t;
    }
    if let Some(b) = args.budget {
        cfg.schedule.budget = b;
    }
    if args.unaligned {
        cfg.unaligned = true;
    }
    let dir = cfg.out_dir.clone().unwrap_or_else(|| default_run_dir(&cfg));
    let ckpt = dir.join("checkpoints/latest.ckpt");
    let mut trainer = if args.resume {
        let c = read_checkpoint(&ckpt)?;
        let saved = checkpoint_config(&c)?;
        // Without an explicit config, resume the saved one with command-line overrides.
        if g.config.is_none() {
            let mut merged = saved.clone();
            merged.schedule.budget = args.budget.unwrap_or(saved.schedule.budget);
            merged.seed = g.seed.unwrap_or(saved.seed);
            merged.method = args.mode.unwrap_or(saved.method);
            merged.task = args.task.unwrap_or(saved.task);
            merged.unaligned = saved.unaligned || args.unaligned;
            cfg = merged;
        }
        if resumable_view(&cfg) != resumable_view(&saved) {
            return Err(CliError::usage(format!(
                "{} was written with a different configuration; only the budget may change on resume",
                ckpt.display()
            )));
        }
        cfg.validate()?;
        let mut t = Trainer::new(cfg)?;
        t.restore(&c)?;
        log::info!(
            "resumed {} at round {} ({} transitions)",
            ckpt.display(),
            t.round,
            t.transitions()
        );
        t
    } else {
        cfg.validate()?;
        Trainer::new(cfg)?
    };
    // The run directory is where the config lives; keep it out of checkpoints so
    // identical runs in different directories are byte-identical.
    trainer.cfg.out_dir = None;
    std::fs::create_dir_all(dir.join("checkpoints")).map_err(|e| CliError::io(&dir, e))?;
    write_json_file(&dir.join("config.json"), &trainer.cfg)?;
    if trainer.cfg.schedule.budget == 0 {
        trainer.save(&ckpt)?;
        println!("wrote initial checkpoint {}", ckpt.display());
        return Ok(());
    }
    let res = trainer.train(|t| {
        let last = t.log.probes.last();
        log::info!(
            "round {} transitions {} probe SR {}",
            t.round,
            t.transitions(),
            last.map_or("-".to_string(), |p| format!("{:.3}", p.sr))
        );
        write_progress(t, &dir).map_err(|e| TrainError::Io(std::io::Error::other(e.message)))
    });
    if let Err(e) = res {
        let e = CliError::from(e);
        if e.code == EXIT_NUMERIC {
            let diag = dir.join("checkpoints/diagnostic.ckpt");
            trainer.save(&diag)?;
            write_text(&dir.join("metrics.csv"), &trainer.log.to_csv())?;
            eprintln!("diagnostic checkpoint written to {}", diag.display());
        }
        return Err(e);
    }
    write_progress(&trainer, &dir)?;
    write_text(&dir.join("plots/training.svg"), &training_plot(&trainer))?;
    let set = EvalSet::new(
        &trainer.task,
        &trainer.cfg.env,
        trainer.cfg.planner.grid,
        trainer.cfg.eval.episodes,
        trainer.cfg.eval.seed,
    )
    .map_err(|e| CliError::usage(e))?;
    let report = evaluate(
        &trainer.planner,
        &trainer.controller,
        &set,
        &trainer.cfg.env,
    )
    .map_err(CliError::numeric)?;
    write_report(&dir, &report)?;
    write_episode_plots(
        &dir,
        &trainer.task,
        &trainer.cfg.env,
        &trainer.controller,
        &set,
        &report,
        4,
    )?;
    println!(
        "trained {} rounds, {} transitions",
        trainer.round,
        trainer.transitions()
    );
    print_report(&report);
    Ok(())
}

// ---------------------------------------------------------------- checkpoints

/// A trained planner/controller pair with the config it was trained under.
pub struct Pair {
    pub cfg: RunConfig,
    pub task: TaskSpec,
    pub planner: PlannerParams,
    pub controller: ControllerParams,
}

/// Settings that must agree between a checkpoint and a supplied config.
fn architecture_matches(a: &RunConfig, b: &RunConfig) -> bool {
    a.task == b.task
        && a.env == b.env
        && a.planner.horizon == b.planner.horizon
        && a.planner.grid == b.planner.grid
        && a.planner.encoder_hidden == b.planner.encoder_hidden
        && a.planner.embed_dim == b.planner.embed_dim
        && a.planner.decoder_hidden == b.planner.decoder_hidden
        && a.controller.hidden == b.controller.hidden
}

pub fn load_pair(g: &Globals, path: &Path) -> CliResult<Pair> {
    let c = read_checkpoint(path)?;
    let saved = checkpoint_config(&c)?;
    if let Some(p) = &g.config {
        let given = RunConfig::load(p)?;
        if !architecture_matches(&given, &saved) {
            return Err(CliError::usage(format!(
                "{} does not match the configuration in {}",
                path.display(),
                p.display()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut planner = PlannerParams::new(&saved.planner, saved.env.extent, &mut rng);
    let mut controller = ControllerParams::new(&saved.env, &saved.controller, &mut rng);
    let bad = |e: ContainerError| CliError::usage(format!("{}: {e}", path.display()));
    planner.load_from(&c).map_err(bad)?;
    controller.load_from(&c).map_err(bad)?;
    Ok(Pair {
        task: TaskSpec::library(saved.task, saved.planner.horizon),
        cfg: saved,
        planner,
        controller,
    })
}

// ---------------------------------------------------------------- eval

fn write_report(dir: &Path, report: &EvalReport) -> CliResult {
    #[derive(Serialize)]
    struct Summary {
        n: usize,
        successes: usize,
        sr: f64,
        sr_wilson95: (f64, f64),
        ttr: Option<f64>,
    }
    write_json_file(
        &dir.join("eval_report.json"),
        &Summary {
            n: report.n,
            successes: report.successes,
            sr: report.sr,
            sr_wilson95: report.wilson95(),
            ttr: report.ttr,
        },
    )?;
    write_jsonl_file(&dir.join("episodes.jsonl"), &report.episodes)
}

pub fn print_report(r: &EvalReport) {
    let (lo, hi) = r.wilson95();
    println!("SR {:.3} [{lo:.3}, {hi:.3}] (95% Wilson, n={})", r.sr, r.n);
    match r.ttr {
        Some(t) => println!("TtR {t:.2} s"),
        None => println!("TtR n/a (no successes)"),
    }
}

fn write_episode_plots(
    dir: &Path,
    task: &TaskSpec,
    env: &EnvConfig,
    controller: &ControllerParams,
    set: &EvalSet,
    report: &EvalReport,
    count: usize,
) -> CliResult {
    let count = count.min(report.episodes.len());
    let jobs: Vec<TrackJob> = (0..count)
        .map(|i| TrackJob {
            field: Arc::clone(&set.pool.get(i % set.pool.len()).field),
            waypoints: report.episodes[i].waypoints.clone(),
            theta0: set.headings[i],
        })
        .collect();
    let outcomes = track_paths(controller, &jobs, env, &TransitionCounter::new(), true);
    for (i, out) in outcomes.into_iter().enumerate() {
        let ep = &report.episodes[i];
        let spec = PlotSpec {
            extent: env.extent,
            mask: Some(set.pool.get(i % set.pool.len()).field.mask()),
            regions: task.regions.clone(),
            waypoints: ep.waypoints.clone(),
            trace: out.trace,
            title: format!(
                "{} episode {i}: robustness {:.3}, {}",
                task.name,
                ep.robustness,
                if ep.success { "success" } else { "failure" }
            ),
        };
        write_text(&dir.join(format!("plots/episode_{i}.svg")), &spec.to_svg())?;
    }
    Ok(())
}

pub fn eval(g: &Globals, checkpoint: &Path, episodes: Option<usize>) -> CliResult {
    let pair = load_pair(g, checkpoint)?;
    let n = episodes.unwrap_or(pair.cfg.eval.episodes);
    if n == 0 {
        return Err(CliError::usage("--episodes must be positive"));
    }
    let seed = g.seed.unwrap_or(pair.cfg.eval.seed);
    let set = EvalSet::new(&pair.task, &pair.cfg.env, pair.cfg.planner.grid, n, seed)
        .map_err(CliError::usage)?;
    let report = evaluate(&pair.planner, &pair.controller, &set, &pair.cfg.env)
        .map_err(CliError::numeric)?;
    let dir = g.out_dir();
    write_report(&dir, &report)?;
    print_report(&report);
    Ok(())
}

// ---------------------------------------------------------------- plan

#[derive(Serialize)]
struct PlanLine {
    index: usize,
    map_seed: Option<u64>,
    start: [f64; 2],
    waypoints: Vec<[f64; 2]>,
    robustness: f64,
    reached: bool,
    collisions: usize,
    steps: usize,
}

pub fn plan(g: &Globals, checkpoint: &Path, map: Option<&Path>, n: usize) -> CliResult {
    if n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let pair = load_pair(g, checkpoint)?;
    let env = &pair.cfg.env;
    let seed = g.seed.unwrap_or(pair.cfg.eval.seed);
    // (field, planner grid, map seed, start, heading) per path.
    let mut cases = Vec::with_capacity(n);
    match map {
        Some(p) => {
            let mask = OccupancyMask::load(p, env.extent).map_err(|e| match e {
                stlplan::sdf::MaskError::Io { .. } => CliError::io(p, e),
                other => CliError::usage(format!("{}: {other}", p.display())),
            })?;
            let grid = mask.downsample(pair.cfg.planner.grid);
            let field = Arc::new(SignedDistanceField::new(mask));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n {
                let start = sample_start(&pair.task.start_region, &mut rng);
                let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                cases.push((Arc::clone(&field), grid.clone(), None, start, heading));
            }
        }
        None => {
            let set = EvalSet::new(&pair.task, env, pair.cfg.planner.grid, n, seed)
                .map_err(CliError::usage)?;
            for i in 0..n {
                let e = set.pool.get(i);
                cases.push((
                    Arc::clone(&e.field),
                    e.grid.clone(),
                    Some(e.map.seed),
                    set.starts[i],
                    set.headings[i],
                ));
            }
        }
    }
    let mut lines = Vec::with_capacity(n);
    let mut jobs = Vec::with_capacity(n);
    for (i, (field, grid, map_seed, start, heading)) in cases.iter().enumerate() {
        let path = mode_path(&pair.planner, *start, &embed_grid(grid, &pair.planner));
        let spec = pair.task.compile(field).map_err(CliError::usage)?;
        let robustness = spec
            .robustness_points(&path.waypoints, 0)
            .map_err(CliError::numeric)?;
        jobs.push(TrackJob {
            field: Arc::clone(field),
            waypoints: path.waypoints.clone(),
            theta0: *heading,
        });
        lines.push(PlanLine {
            index: i,
            map_seed: *map_seed,
            start: *start,
            waypoints: path.waypoints,
            robustness,
            reached: false,
            collisions: 0,
            steps: 0,
        });
    }
    let outcomes = track_paths(
        &pair.controller,
        &jobs,
        env,
        &TransitionCounter::new(),
        true,
    );
    let dir = g.out_dir();
    for ((line, out), (field, ..)) in lines.iter_mut().zip(outcomes).zip(&cases) {
        line.reached = out.reached;
        line.collisions = out.collisions;
        line.steps = out.steps;
        let svg = PlotSpec {
            extent: env.extent,
            mask: Some(field.mask()),
            regions: pair.task.regions.clone(),
            waypoints: line.waypoints.clone(),
            trace: out.trace,
            title: format!(
                "{} plan {}: robustness {:.3}",
                pair.task.name, line.index, line.robustness
            ),
        }
        .to_svg();
        write_text(&dir.join(format!("plan_{}.svg", line.index)), &svg)?;
        println!(
            "path {}: robustness {:.6} {} reached={} collisions={} steps={}",
            line.index,
            line.robustness,
            if line.robustness > 0.0 {
                "satisfied"
            } else {
                "violated"
            },
            line.reached,
            line.collisions,
            line.steps
        );
    }
    write_jsonl_file(&dir.join("paths.jsonl"), &lines)
}

// ---------------------------------------------------------------- latency

#[derive(Serialize)]
struct LatencyReport {
    horizon: usize,
    obstacles_10: LatencyStats,
    obstacles_40: LatencyStats,
    p50_ratio: f64,
}

pub fn latency(g: &Globals, checkpoint: Option<&Path>, samples: usize, maps: usize) -> CliResult {
    if samples == 0 || maps == 0 {
        return Err(CliError::usage("--samples and --maps must be positive"));
    }
    let (env, planner) = match checkpoint {
        Some(p) => {
            let pair = load_pair(g, p)?;
            (pair.cfg.env, pair.planner)
        }
        None => {
            let cfg = g.load_config()?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let planner = PlannerParams::new(&cfg.planner, cfg.env.extent, &mut rng);
            (cfg.env, planner)
        }
    };
    let seed = g.seed.unwrap_or(0);
    let stats = |k: usize| -> CliResult<LatencyStats> {
        let masks = latency_masks(&env, k, maps, seed).map_err(CliError::usage)?;
        Ok(measure_plan_latency(&planner, &masks, samples))
    };
    let a = stats(10)?;
    let b = stats(40)?;
    let report = LatencyReport {
        horizon: planner.horizon,
        p50_ratio: b.p50 / a.p50,
        obstacles_10: a,
        obstacles_40: b,
    };
    for (k, s) in [(10, &report.obstacles_10), (40, &report.obstacles_40)] {
        println!(
            "{k:>2} obstacles: p50 {:.3} ms, p95 {:.3} ms, max {:.3} ms (n={})",
            s.p50 * 1e3,
            s.p95 * 1e3,
            s.max * 1e3,
            s.n
        );
    }
    println!("p50 ratio 40/10: {:.3}", report.p50_ratio);
    write_json_file(&g.out_dir().join("latency.json"), &report)
}

// ---------------------------------------------------------------- gen-maps

pub fn gen_maps(g: &Globals, count: usize, obstacles: Option<usize>) -> CliResult {
    let mut cfg = g.load_config()?;
    if let Some(k) = obstacles {
        cfg.env.obstacle_count = k;
        cfg.validate()?;
    }
    let task = TaskSpec::library(cfg.task, cfg.planner.horizon);
    let dir = g.out_dir();
    let mut maps = Vec::with_capacity(count);
    for k in 0..count as u64 {
        let m = generate_map(&cfg.env, cfg.seed + k, &task.reserved()).map_err(CliError::usage)?;
        let p = dir.join(format!("map_{}.png", m.seed));
        atomic_write(&p, &m.mask().to_png()).map_err(|e| CliError::io(&p, e))?;
        maps.push(m);
    }
    write_json_file(&dir.join("maps.json"), &maps)?;
    println!("wrote {count} maps to {}", dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_lines_accept_points_or_paths() {
        let p = Path::new("t.jsonl");
        assert_eq!(
            parse_trajectories("[0,1]\n[2,3]\n", p).unwrap(),
            vec![vec![[0.0, 1.0], [2.0, 3.0]]]
        );
        let two = parse_trajectories(
            "{\"waypoints\": [[0,0]]}\n\n{\"waypoints\": [[1,1],[2,2]]}\n",
            p,
        )
        .unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(
            parse_trajectories("[0,1]\n{\"waypoints\": [[0,0]]}\n", p)
                .unwrap_err()
                .code,
            EXIT_USAGE
        );
        assert_eq!(parse_trajectories("", p).unwrap_err().code, EXIT_USAGE);
        assert_eq!(parse_trajectories("[0,\n", p).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn resume_may_change_only_budget_and_out_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.schedule.budget = 7;
        b.out_dir = Some("x".into());
        assert_eq!(resumable_view(&a), resumable_view(&b));
        b.seed = 3;
        assert_ne!(resumable_view(&a), resumable_view(&b));
    }
}
