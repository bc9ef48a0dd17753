//! End-to-end acceptance checks. Each check prints one PASS/FAIL line; the process
//! fails if any check fails. Arguments that are check names or numbers select a subset.

use std::path::Path;
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stlplan::grad::{Tape, Var};
use stlplan::planner::{
    dscrl_loss, embed_grid, integrate, sample_path, PlannerBatch, PlannerConfig, PlannerParams,
};
use stlplan::sdf::{OccupancyMask, SignedDistanceField};
use stlplan::sim::{generate_map, EnvConfig};
use stlplan::stl::random::{random_formula, FormulaShape};
use stlplan::stl::{
    eval_bool, AggregationKind, Bindings, CircleRegion, CompiledFormula, Formula, LinearPredicate,
    SmoothingConfig, Trajectory,
};
use stlplan::trainer::{
    compare_with_oracle, evaluate, latency_masks, measure_plan_latency, random_instance, EvalSet,
    Method, RunConfig, TaskName, TaskSpec, Trainer, WaypointOptConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

// ---------------------------------------------------------------- shared

fn random_bindings() -> Bindings {
    Bindings::new()
        .with("a", Arc::new(LinearPredicate::new([1.0, 0.5], 0.1)))
        .with("b", Arc::new(LinearPredicate::new([-0.3, 1.0], -0.2)))
        .with("c", Arc::new(CircleRegion::new([0.2, -0.1], 0.8)))
        .with("d", Arc::new(CircleRegion::new([-0.5, 0.4], 0.6)))
}

fn random_case(rng: &mut ChaCha8Rng, shape: &FormulaShape) -> (Formula, Trajectory) {
    let f = random_formula(rng, shape);
    let len = f.horizon() + 1 + rng.random_range(0..3);
    let pts = (0..len)
        .map(|_| [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)])
        .collect();
    (f, Trajectory::new(pts).unwrap())
}

fn no_literals() -> FormulaShape {
    FormulaShape {
        literals: false,
        ..FormulaShape::default()
    }
}

/// Relative error with a floor on the denominator, so exact zeros compare absolutely.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1e-2)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

// ---------------------------------------------------------------- semantics

fn sign_soundness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let b = random_bindings();
    let shape = FormulaShape::default();
    let (mut checked, mut mismatches) = (0, 0);
    while checked < 1000 {
        let (f, tau) = random_case(&mut rng, &shape);
        let cf = CompiledFormula::new(&f, &b).unwrap();
        let r = cf.robustness(&tau, 0).unwrap();
        if r.abs() <= 1e-9 {
            continue;
        }
        checked += 1;
        if (r > 0.0) != eval_bool(&f, &b, &tau, 0).unwrap() {
            mismatches += 1;
        }
    }
    let dt = t0.elapsed();
    outcome(
        mismatches == 0 && dt < Duration::from_secs(10),
        format!("{mismatches} sign mismatches in {checked} pairs"),
    )
}

fn soft_bound() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    let b = random_bindings();
    let (mut nodes, mut violations) = (0usize, 0usize);
    for _ in 0..200 {
        let (f, tau) = random_case(&mut rng, &no_literals());
        let cf = CompiledFormula::new(&f, &b).unwrap();
        for beta in [1.0, 10.0, 100.0] {
            let (_, trace) = cf
                .soft_robustness_traced(&tau, 0, SmoothingConfig::new(beta).unwrap())
                .unwrap();
            for agg in &trace {
                nodes += 1;
                let (h, s) = (agg.hard(), agg.soft);
                let gap = (agg.values.len() as f64).ln() / beta;
                let ok = match agg.kind {
                    AggregationKind::Min => s <= h && h - gap <= s,
                    AggregationKind::Max => h <= s && s <= h + gap,
                };
                violations += !ok as usize;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{violations} violations over {nodes} aggregation nodes"),
    )
}

/// Worst relative error of the tape gradient of the smoothed robustness.
fn robustness_fd(f: &Formula, b: &Bindings, pts: &[[f64; 2]], beta: f64) -> f64 {
    let cf = CompiledFormula::new(f, b).unwrap();
    let cfg = SmoothingConfig::new(beta).unwrap();
    let tape = Tape::new();
    let vars: Vec<[Var; 2]> = pts
        .iter()
        .map(|p| [tape.scalar(p[0]), tape.scalar(p[1])])
        .collect();
    let out = cf.soft_robustness_tape(&tape, &vars, 0, cfg).unwrap();
    let grads = tape.backward(out).unwrap();
    let value = |p: Vec<[f64; 2]>| {
        cf.soft_robustness(&Trajectory::new(p).unwrap(), 0, cfg)
            .unwrap()
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..pts.len() {
        for d in 0..2 {
            let (mut up, mut dn) = (pts.to_vec(), pts.to_vec());
            up[i][d] += h;
            dn[i][d] -= h;
            let fd = (value(up) - value(dn)) / (2.0 * h);
            worst = worst.max(rel_err(grads.scalar(vars[i][d]), fd));
        }
    }
    worst
}

/// Worst relative error of `∂(−λ·mean φ)/∂θ` for a random small planner on random maps,
/// over a few entries of every parameter tensor, with the sampling noise held fixed.
fn lambda_term_fd(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let task = TaskSpec::library(TaskName::ALL[rng.random_range(0..5)], 20);
    let cfg = PlannerConfig {
        grid: 8,
        encoder_hidden: 12,
        embed_dim: 6,
        decoder_hidden: vec![16, 16],
        init_log_std: rng.random_range(-2.0..-0.5),
        ..PlannerConfig::default()
    };
    let env = EnvConfig::default();
    let p = PlannerParams::new(&cfg, env.extent, &mut rng);
    let (lambda, beta) = (rng.random_range(0.5..5.0), 10.0);
    let mut batch = PlannerBatch {
        grids: Vec::new(),
        starts: Vec::new(),
        raw: Vec::new(),
        advantages: Vec::new(),
    };
    let mut specs = Vec::new();
    for _ in 0..3 {
        let map = generate_map(&env, rng.random(), &task.reserved()).unwrap();
        let field = Arc::new(SignedDistanceField::new(map.mask().clone()));
        let grid = map.mask().downsample(cfg.grid);
        let x0 = stlplan::controller::sample_start(&task.start_region, &mut rng);
        let path = sample_path(&p, x0, &embed_grid(&grid, &p), &mut rng);
        batch.grids.push(grid);
        batch.starts.push(x0);
        batch.raw.push(path.raw);
        specs.push(task.compile(&field).unwrap());
    }
    let sig = p.sigma();
    let eps: Vec<Vec<f64>> = (0..batch.len())
        .map(|i| {
            let mu = p.means(&embed_grid(&batch.grids[i], &p), batch.starts[i]);
            (0..mu.len())
                .map(|j| (batch.raw[i][j] - mu[j]) / sig[j])
                .collect()
        })
        .collect();
    let value = |q: &PlannerParams| {
        let smoothing = SmoothingConfig::new(beta).unwrap();
        let s = q.sigma();
        let mut total = 0.0;
        for i in 0..batch.len() {
            let mu = q.means(&embed_grid(&batch.grids[i], q), batch.starts[i]);
            let raw: Vec<f64> = (0..mu.len()).map(|j| mu[j] + s[j] * eps[i][j]).collect();
            let tau = Trajectory::new(integrate(batch.starts[i], &raw, q.max_step)).unwrap();
            total += specs[i].soft_robustness(&tau, 0, smoothing).unwrap();
        }
        -lambda * total / batch.len() as f64
    };
    let tape = Tape::new();
    let refs: Vec<&CompiledFormula> = specs.iter().collect();
    let parts = dscrl_loss(&tape, &p, &batch, &refs, lambda, beta).unwrap();
    let grads = tape.backward(parts.loss).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (k, var) in parts.params.iter().enumerate() {
        let analytic: Array2<f64> = grads.wrt(*var);
        let (r, c) = analytic.dim();
        for _ in 0..3 {
            let idx = (rng.random_range(0..r), rng.random_range(0..c));
            let (mut up, mut dn) = (p.clone(), p.clone());
            up.params_mut()[k][idx] += h;
            dn.params_mut()[k][idx] -= h;
            let fd = (value(&up) - value(&dn)) / (2.0 * h);
            worst = worst.max(rel_err(analytic[idx], fd));
        }
    }
    worst
}

fn gradient_fidelity() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    let b = random_bindings();
    let mut worst_rho: f64 = 0.0;
    for _ in 0..50 {
        let (f, tau) = random_case(&mut rng, &no_literals());
        let beta = [1.0, 10.0][rng.random_range(0..2)];
        worst_rho = worst_rho.max(robustness_fd(&f, &b, tau.points(), beta));
    }
    let mut worst_lambda: f64 = 0.0;
    for seed in 0..50 {
        worst_lambda = worst_lambda.max(lambda_term_fd(seed));
    }
    let dt = t0.elapsed();
    let worst = worst_rho.max(worst_lambda);
    outcome(
        worst < 1e-4 && dt < Duration::from_secs(60),
        format!(
            "max rel. error {worst:.2e} (robustness {worst_rho:.2e}, planner lambda term {worst_lambda:.2e}) over 100 cases"
        ),
    )
}

// ---------------------------------------------------------------- sdf

fn sdf_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2027);
    let (mut cells, mut value_diffs, mut sign_errors) = (0, 0, 0);
    for k in 0..5 {
        let mask = if k < 3 {
            let env = EnvConfig {
                obstacle_count: 3 + 3 * k,
                ..EnvConfig::default()
            };
            generate_map(&env, rng.random(), &[])
                .unwrap()
                .mask()
                .clone()
        } else {
            let p = rng.random_range(0.05..0.3);
            OccupancyMask::from_fn(64, 64, [2.42, 2.42], |_, _| rng.random_bool(p)).unwrap()
        };
        let field = SignedDistanceField::new(mask.clone());
        let t = field.transform().clone();
        for j in 0..64 {
            for i in 0..64 {
                let g = t.to_world(i as i64, j as i64);
                let d = field.sdf(g);
                cells += 1;
                if d.to_bits() != field.sdf_brute_force(g).to_bits() {
                    value_diffs += 1;
                }
                let inside = mask.get(i, j);
                if (inside && d > 0.0) || (!inside && d <= 0.0) {
                    sign_errors += 1;
                }
            }
        }
    }
    let dt = t0.elapsed();
    outcome(
        value_diffs == 0 && sign_errors == 0 && dt < Duration::from_secs(30),
        format!("{cells} cell centres: {value_diffs} value differences, {sign_errors} sign errors"),
    )
}

// ---------------------------------------------------------------- oracle planning

fn planning_vs_oracle() -> Outcome {
    let t0 = Instant::now();
    let cfg = WaypointOptConfig::default();
    let (mut certified, mut solved, mut seed) = (0, 0, 0u64);
    let mut max_steps = 0;
    while certified < 50 {
        let (inst, mask) = random_instance(seed);
        seed += 1;
        let c = compare_with_oracle(&inst, &mask, 10, 10, &cfg).unwrap();
        if c.oracle.is_none() {
            continue;
        }
        certified += 1;
        max_steps = max_steps.max(c.steps);
        solved += (c.optimiser > 0.0) as usize;
    }
    let dt = t0.elapsed();
    let rate = solved as f64 / certified as f64;
    outcome(
        rate >= 0.9 && max_steps <= 2000 && dt < Duration::from_secs(600),
        format!(
            "{solved}/{certified} certified instances solved ({:.0}%), at most {max_steps} steps, {seed} instances drawn",
            rate * 100.0
        ),
    )
}

// ---------------------------------------------------------------- training study

const DESK: &str = include_str!("../../../configs/desk_cover.json");
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const EVAL_EPISODES: usize = 200;
const EVAL_SEED: u64 = 7_000;

#[derive(Debug, Clone)]
struct Run {
    sr: f64,
    ttr: Option<f64>,
    rounds: usize,
    transitions: u64,
    /// Transitions at the first probe reaching the SR threshold.
    to_threshold: Option<u64>,
}

struct Study {
    budget: u64,
    threshold: f64,
    aligned: Vec<Run>,
    unaligned: Vec<Run>,
    rm: Vec<Run>,
    rs: Vec<Run>,
}

fn train_one(cfg: RunConfig, label: &str) -> Run {
    let t0 = Instant::now();
    let mut t = Trainer::new(cfg.clone()).expect("trainer");
    t.train(|_| Ok(())).expect("training");
    let set = EvalSet::new(
        &t.task,
        &cfg.env,
        cfg.planner.grid,
        EVAL_EPISODES,
        EVAL_SEED,
    )
    .expect("eval set");
    let report = evaluate(&t.planner, &t.controller, &set, &cfg.env).expect("evaluation");
    let run = Run {
        sr: report.sr,
        ttr: report.ttr,
        rounds: t.round,
        transitions: t.transitions(),
        to_threshold: t.log.threshold_at,
    };
    eprintln!(
        "    {label} seed {}: SR {:.3}, TtR {}, {} rounds, {} transitions, threshold at {}, {}",
        cfg.seed,
        run.sr,
        run.ttr.map_or("n/a".into(), |v| format!("{v:.2}s")),
        run.rounds,
        run.transitions,
        run.to_threshold.map_or("never".into(), |v| v.to_string()),
        secs(t0.elapsed())
    );
    run
}

/// Aligned and unaligned DSCRL plus the RM and RS baselines on every seed. The
/// unaligned run gets as many rounds as its aligned twin; the baselines stop once
/// they reach the threshold.
fn study() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| {
        let base = RunConfig::from_json(DESK).expect("desk config");
        let mut s = Study {
            budget: base.schedule.budget,
            threshold: base.schedule.threshold_sr,
            aligned: Vec::new(),
            unaligned: Vec::new(),
            rm: Vec::new(),
            rs: Vec::new(),
        };
        for seed in SEEDS {
            let with = |f: &dyn Fn(&mut RunConfig)| {
                let mut c = base.clone();
                c.seed = seed;
                f(&mut c);
                c
            };
            let a = train_one(with(&|_| {}), "dscrl aligned");
            let rounds = a.rounds;
            s.aligned.push(a);
            s.unaligned.push(train_one(
                with(&|c| {
                    c.unaligned = true;
                    c.schedule.max_rounds = rounds;
                }),
                "dscrl unaligned",
            ));
            for (method, out) in [(Method::Rm, &mut s.rm), (Method::Rs, &mut s.rs)] {
                out.push(train_one(
                    with(&|c| {
                        c.method = method;
                        c.schedule.stop_at_threshold = true;
                    }),
                    &method.to_string(),
                ));
            }
        }
        s
    })
}

/// Median of five; `None` sorts last, as a run that never got there.
fn median<T: PartialOrd + Copy>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    v[v.len() / 2]
}

fn median_opt(v: Vec<Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = v.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[v.len() / 2]).filter(|m| m.is_finite())
}

fn fmt_opt(v: Option<f64>, unit: &str) -> String {
    v.map_or("none".into(), |v| format!("{v:.3}{unit}"))
}

fn end_to_end_dscrl() -> Outcome {
    let s = study();
    let sr = median(s.aligned.iter().map(|r| r.sr).collect());
    let all: Vec<String> = s.aligned.iter().map(|r| format!("{:.3}", r.sr)).collect();
    outcome(
        sr >= 0.85 && s.budget <= 2_000_000,
        format!(
            "median SR {sr:.3} over {} seeds (per seed {}), budget {}",
            SEEDS.len(),
            all.join(", "),
            s.budget
        ),
    )
}

fn sample_efficiency() -> Outcome {
    let s = study();
    let med = |runs: &[Run]| {
        median_opt(
            runs.iter()
                .map(|r| r.to_threshold.map(|v| v as f64))
                .collect(),
        )
    };
    let (d, m, r) = (med(&s.aligned), med(&s.rm), med(&s.rs));
    let lt = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        (None, _) => false,
    };
    outcome(
        lt(d, m) && lt(m, r),
        format!(
            "median transitions to SR {:.2}: DSCRL {}, RM {}, RS {} (none = not reached within {})",
            s.threshold,
            fmt_opt(d, ""),
            fmt_opt(m, ""),
            fmt_opt(r, ""),
            s.budget
        ),
    )
}

fn alignment_effect() -> Outcome {
    let s = study();
    let sr_a = median(s.aligned.iter().map(|r| r.sr).collect());
    let sr_u = median(s.unaligned.iter().map(|r| r.sr).collect());
    let ttr_a = median_opt(s.aligned.iter().map(|r| r.ttr).collect());
    let ttr_u = median_opt(s.unaligned.iter().map(|r| r.ttr).collect());
    let ttr_ok = match (ttr_a, ttr_u) {
        (Some(a), Some(u)) => a <= u,
        (Some(_), None) => true,
        (None, _) => false,
    };
    outcome(
        sr_a - sr_u >= 0.05 && ttr_ok,
        format!(
            "median SR aligned {sr_a:.3} vs unaligned {sr_u:.3} ({:+.1} pp), median TtR {} vs {}",
            (sr_a - sr_u) * 100.0,
            fmt_opt(ttr_a, "s"),
            fmt_opt(ttr_u, "s")
        ),
    )
}

// ---------------------------------------------------------------- latency

fn planner_latency() -> Outcome {
    let env = EnvConfig::default();
    let cfg = PlannerConfig::default();
    let p = PlannerParams::new(&cfg, env.extent, &mut ChaCha8Rng::seed_from_u64(0));
    let sparse = measure_plan_latency(&p, &latency_masks(&env, 10, 20, 0).unwrap(), 200);
    let dense = measure_plan_latency(&p, &latency_masks(&env, 40, 20, 0).unwrap(), 200);
    let ratio = dense.p50 / sparse.p50;
    let p95 = sparse.p95.max(dense.p95);
    outcome(
        p95 < 0.5 && ratio < 1.5,
        format!(
            "T={}: p95 {:.2} ms / {:.2} ms (10 / 40 obstacles), p50 ratio {ratio:.3}",
            cfg.horizon,
            sparse.p95 * 1e3,
            dense.p95 * 1e3
        ),
    )
}

// ---------------------------------------------------------------- determinism

const TINY: &str = r#"{
  "planner": {"grid": 8, "encoder_hidden": 16, "embed_dim": 8, "decoder_hidden": [32], "batch": 4, "return_batch": 2},
  "controller": {"hidden": [16], "rollout_steps": 256, "parallel_envs": 4},
  "schedule": {"budget": 4000, "controller_transitions_per_phase": 512, "planner_updates_per_phase": 3,
               "map_pool_size": 8, "probe_episodes": 6},
  "env": {"max_episode_steps": 150},
  "eval": {"episodes": 10}
}"#;

fn stlplan(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stlplan"))
        .args(args)
        .current_dir(dir)
        .env_remove("STLPLAN_LOG")
        .output()
        .expect("spawn stlplan")
}

/// Every deterministic command, run twice from scratch; all artifacts are compared
/// byte for byte.
fn determinism() -> Outcome {
    let mut diffs = Vec::new();
    let mut failures = Vec::new();
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::TempDir::new().unwrap()).collect();
    for d in &runs {
        let dir = d.path();
        std::fs::write(dir.join("tiny.json"), TINY).unwrap();
        std::fs::write(
            dir.join("spec.json"),
            r#"{"formula": "F[0,2] goal & G[0,2] avoid_map", "regions": {"goal": {"center": [1.2, 1.2], "radius": 0.3}}, "map": {"mask": "maps/map_7.png", "extent": [2.42, 2.42]}}"#,
        )
        .unwrap();
        std::fs::write(
            dir.join("traj.jsonl"),
            "[0.3, 0.3]\n[0.7, 0.7]\n[1.1, 1.1]\n",
        )
        .unwrap();
        let ck = "run/checkpoints/latest.ckpt";
        let cmds: [&[&str]; 6] = [
            &[
                "--seed",
                "7",
                "--out",
                "maps",
                "--threads",
                "1",
                "gen-maps",
                "--count",
                "3",
            ],
            &[
                "--config",
                "tiny.json",
                "--seed",
                "3",
                "--out",
                "run",
                "--threads",
                "1",
                "train",
            ],
            &[
                "--seed",
                "5",
                "--out",
                "eval",
                "--threads",
                "1",
                "eval",
                "--checkpoint",
                ck,
                "--episodes",
                "12",
            ],
            &[
                "--seed",
                "5",
                "--out",
                "plan",
                "--threads",
                "1",
                "plan",
                "--checkpoint",
                ck,
                "--n",
                "3",
            ],
            &["--threads", "1", "monitor", "spec.json", "traj.jsonl"],
            &[
                "--config",
                "tiny.json",
                "--seed",
                "3",
                "--out",
                "rm",
                "--threads",
                "1",
                "train",
                "--mode",
                "rm",
            ],
        ];
        let mut stdout = Vec::new();
        for c in cmds {
            let o = stlplan(dir, c);
            if !matches!(o.status.code(), Some(0) | Some(1)) {
                failures.push(format!(
                    "{c:?}: {}",
                    String::from_utf8_lossy(&o.stderr).trim()
                ));
            }
            stdout.push(o.stdout);
        }
        std::fs::write(dir.join("stdout.txt"), stdout.concat()).unwrap();
    }
    let files = [
        "stdout.txt",
        "maps/maps.json",
        "maps/map_7.png",
        "run/metrics.csv",
        "run/checkpoints/latest.ckpt",
        "run/eval_report.json",
        "run/episodes.jsonl",
        "eval/eval_report.json",
        "eval/episodes.jsonl",
        "plan/paths.jsonl",
        "plan/plan_0.svg",
        "rm/metrics.csv",
        "rm/checkpoints/latest.ckpt",
    ];
    for f in files {
        let a = std::fs::read(runs[0].path().join(f));
        let b = std::fs::read(runs[1].path().join(f));
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => diffs.push(f),
        }
    }
    outcome(
        diffs.is_empty() && failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} artifacts compared across two runs, differing: {diffs:?}",
                files.len()
            )
        } else {
            format!("command failures: {failures:?}")
        },
    )
}

// ---------------------------------------------------------------- driver

fn main() {
    let checks: [(usize, &str, Check); 10] = [
        (1, "sign_soundness", sign_soundness),
        (2, "soft_bound", soft_bound),
        (3, "gradient_fidelity", gradient_fidelity),
        (4, "sdf_oracle", sdf_oracle),
        (5, "planning_vs_oracle", planning_vs_oracle),
        (6, "end_to_end_dscrl", end_to_end_dscrl),
        (7, "sample_efficiency", sample_efficiency),
        (8, "alignment_effect", alignment_effect),
        (9, "planner_latency", planner_latency),
        (10, "determinism", determinism),
    ];
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let selected = |n: usize, name: &str| {
        filters.is_empty()
            || filters
                .iter()
                .any(|f| f == &n.to_string() || name.contains(f.as_str()))
    };
    let mut failed = Vec::new();
    for (n, name, check) in checks {
        if !selected(n, name) {
            continue;
        }
        let t0 = Instant::now();
        let o = check();
        println!(
            "[{n:>2}] {name}: {} ({}; {})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            secs(t0.elapsed())
        );
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
