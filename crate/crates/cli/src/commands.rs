use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Result};
use quddpm_core::analysis::{
    bound_report, grad_stats_haar, kendall_tau, kl_to_target, mmd_to_haar_analytic, slope, theorem2_check,
    HaarGradSettings, Theorem2Settings, KL_BINS,
};
use quddpm_core::config::RunConfig;
use quddpm_core::duddpm::Variant;
use quddpm_core::experiment::{
    calibrate_default, diffuse_near_zero, diffuse_targets, generation_trace, grad_stats_training, prepare_run,
    resolve_schedule, run_training,
};
use quddpm_core::random::RandomSource;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::{fmt_f64, fmt_opt, run_id, Output};

/// Register sizes and schedule of the full-scale configuration.
pub const FULL_GRID: [usize; 4] = [1, 4, 7, 10];
pub const FULL_CYCLES: usize = 30;
pub const FULL_EPOCHS: usize = 300;

/// Largest slope of log-variance against `n_data` accepted as exponential decay.
pub fn decay_slope_limit() -> f64 {
    -std::f64::consts::LN_2 + 0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Diffuse,
    Train,
    SweepBp,
    CheckTheorems,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Diffuse => "diffuse",
            Command::Train => "train",
            Command::SweepBp => "sweep-bp",
            Command::CheckTheorems => "check-theorems",
            Command::Calibrate => "calibrate",
        }
    }
}

/// Resolved inputs of one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    /// Explicit variant; commands covering both variants run both when unset.
    pub variant: Option<Variant>,
    pub full: bool,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(mut config: RunConfig, variant: Option<Variant>, full: bool, out_dir: PathBuf) -> Result<Self> {
        if full {
            config.n_data_grid = FULL_GRID.to_vec();
            config.cycles = FULL_CYCLES;
            config.epochs = FULL_EPOCHS;
        }
        if let Some(v) = variant {
            config.variant = v;
        }
        config.validate()?;
        Ok(Self { config, variant, full, out_dir })
    }

    fn variants(&self) -> Vec<Variant> {
        match self.variant {
            Some(v) => vec![v],
            None => vec![Variant::Original, Variant::Improved],
        }
    }

    fn source(&self, stream: u64) -> RandomSource {
        RandomSource::new(self.config.seed).child(stream)
    }
}

/// A named pass/fail outcome. Only hard checks decide the exit status.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub hard: bool,
    pub detail: String,
}

impl Check {
    fn hard(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, hard: true, detail }
    }

    fn soft(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.into(), pass, hard: false, detail }
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub run_id: String,
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().filter(|c| c.hard).all(|c| c.pass)
    }
}

struct Run {
    out: Output,
    files: Vec<PathBuf>,
    checks: Vec<Check>,
    derived: BTreeMap<String, Value>,
    wall_ms: BTreeMap<String, u128>,
}

impl Run {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.files.push(self.out.write_csv(name, header, rows)?);
        Ok(())
    }

    fn derive(&mut self, key: impl Into<String>, value: Value) {
        self.derived.insert(key.into(), value);
    }
}

/// Runs `command` and writes its tables plus `manifest.json`.
pub fn run(command: Command, ctx: &Context) -> Result<Report> {
    let config_json = serde_json::to_string(&ctx.config)?;
    let id = run_id(command.name(), &config_json);
    let out = Output::create(&ctx.out_dir, id.clone(), ctx.config.seed)?;
    let mut run = Run { out, files: Vec::new(), checks: Vec::new(), derived: BTreeMap::new(), wall_ms: BTreeMap::new() };
    let start = Instant::now();
    match command {
        Command::Diffuse => diffuse(ctx, &mut run)?,
        Command::Train => train(ctx, &mut run)?,
        Command::SweepBp => sweep_bp(ctx, &mut run)?,
        Command::CheckTheorems => check_theorems(ctx, &mut run)?,
        Command::Calibrate => calibrate(ctx, &mut run)?,
    }
    run.wall_ms.insert("total".into(), start.elapsed().as_millis());
    let manifest = json!({
        "run_id": id,
        "seed": ctx.config.seed,
        "command": command.name(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "full": ctx.full,
        "forward_angles": "fresh per member and step",
        "config": ctx.config,
        "derived": run.derived,
        "checks": run.checks,
        "wall_ms": run.wall_ms,
    });
    run.files.push(run.out.write_json("manifest.json", &manifest)?);
    Ok(Report { run_id: id, files: run.files, checks: run.checks })
}

fn diffuse(ctx: &Context, run: &mut Run) -> Result<()> {
    let cfg = &ctx.config;
    let mut rows = Vec::new();
    for variant in ctx.variants() {
        let schedule = resolve_schedule(cfg, variant)?;
        let trajectory = match variant {
            Variant::Original => diffuse_targets(cfg, &schedule)?,
            Variant::Improved => diffuse_near_zero(cfg, &schedule)?,
        };
        let mut values = Vec::with_capacity(trajectory.len());
        for (t, ens) in trajectory.iter().enumerate() {
            let est = mmd_to_haar_analytic(ens)?;
            values.push(est.value);
            let h = if t == 0 { None } else { Some(schedule.h[t - 1]) };
            rows.push(vec![variant.to_string(), t.to_string(), fmt_opt(h), fmt_f64(est.value), fmt_f64(est.stderr)]);
        }
        let last = *values.last().expect("T+1 rows");
        let steps: Vec<f64> = (0..values.len()).map(|t| t as f64).collect();
        let trend = kendall_tau(&steps, &values)?;
        run.derive(format!("{variant}_h_end"), json!(schedule.h_end));
        run.derive(format!("{variant}_kendall_tau"), json!(trend.tau));
        run.derive(format!("{variant}_kendall_p_decreasing"), json!(trend.p_decreasing));
        match variant {
            Variant::Original => {
                run.checks.push(Check::soft("original_endpoint_below_0.01", last < 0.01, fmt_f64(last)));
                run.checks.push(Check::soft(
                    "original_trend_decreasing",
                    trend.tau < 0.0 && trend.p_decreasing < 0.01,
                    format!("tau {} p {}", trend.tau, trend.p_decreasing),
                ));
            }
            Variant::Improved => run.checks.push(Check::hard(
                "improved_endpoint_above_floor",
                last >= cfg.distance_floor,
                format!("{} vs floor {}", last, cfg.distance_floor),
            )),
        }
    }
    run.csv("diffusion_mmd.csv", &["variant", "t", "h", "mmd_to_haar", "stderr"], &rows)
}

fn train(ctx: &Context, run: &mut Run) -> Result<()> {
    let cfg = &ctx.config;
    let variant = cfg.variant;
    let t0 = Instant::now();
    let prepared = prepare_run(cfg, variant)?;
    let outcome = run_training(cfg, &prepared, None)?;
    run.wall_ms.insert("train".into(), t0.elapsed().as_millis());
    let t1 = Instant::now();
    let trace = generation_trace(cfg, &outcome)?;
    run.wall_ms.insert("generate".into(), t1.elapsed().as_millis());

    let v = variant.to_string();
    let loss_rows: Vec<Vec<String>> = outcome
        .records
        .iter()
        .map(|r| vec![v.clone(), r.cycle.to_string(), r.epoch.to_string(), fmt_f64(r.loss)])
        .collect();
    let grad_rows: Vec<Vec<String>> = outcome
        .records
        .iter()
        .map(|r| {
            vec![
                v.clone(),
                r.cycle.to_string(),
                r.epoch.to_string(),
                fmt_f64(r.grad_l2),
                fmt_f64(r.grad_max_abs),
                fmt_f64(r.grad_mean_abs),
                r.n_params.to_string(),
            ]
        })
        .collect();
    let mut kl_rows = Vec::with_capacity(trace.len());
    for (step, ens) in trace.iter().enumerate() {
        let t = cfg.cycles - step;
        kl_rows.push(vec![
            v.clone(),
            step.to_string(),
            t.to_string(),
            fmt_f64(kl_to_target(ens, KL_BINS)?),
            fmt_f64(mmd_to_haar_analytic(ens)?.value),
        ]);
    }
    run.csv("loss.csv", &["variant", "cycle", "epoch", "loss"], &loss_rows)?;
    run.csv(
        "grads.csv",
        &["variant", "cycle", "epoch", "grad_l2", "grad_max_abs", "grad_mean_abs", "n_params"],
        &grad_rows,
    )?;
    run.csv("kl_per_step.csv", &["variant", "step", "t", "kl", "mmd_to_haar"], &kl_rows)?;

    let expected = cfg.cycles * cfg.epochs;
    run.checks.push(Check::hard(
        "record_count",
        outcome.records.len() == expected,
        format!("{} records, expected {expected}", outcome.records.len()),
    ));
    if let Some(last) = outcome.records.last() {
        run.checks.push(Check::soft("final_loss_below_0.01", last.loss < 0.01, fmt_f64(last.loss)));
    }
    run.derive("variant", json!(v));
    run.derive("schedule_h", json!(prepared.settings.schedule.h));
    run.derive("init", json!(prepared.settings.init));
    run.derive("real_endpoint_mmd_to_haar", json!(prepared.real_endpoint_mmd));
    run.derive("initial_mmd_to_haar", json!(prepared.initial_mmd));
    Ok(())
}

fn sweep_bp(ctx: &Context, run: &mut Run) -> Result<()> {
    let variants = ctx.variants();
    let grid = ctx.config.n_data_grid.clone();
    let mut rows = Vec::new();
    let mut table: BTreeMap<(String, usize), (f64, f64)> = BTreeMap::new();
    for &variant in &variants {
        for &n in &grid {
            let cfg = RunConfig { n_data: n, ..ctx.config.clone() };
            let t0 = Instant::now();
            let stats = grad_stats_training(&cfg, variant)?;
            run.wall_ms.insert(format!("{variant}_n{n}"), t0.elapsed().as_millis());
            let (lo, hi) = stats.cycle_range.expect("training stats carry a cycle range");
            rows.push(vec![
                variant.to_string(),
                n.to_string(),
                fmt_f64(stats.mean_abs_grad),
                fmt_f64(stats.stderr),
                stats.samples.to_string(),
                lo.to_string(),
                hi.to_string(),
            ]);
            table.insert((variant.to_string(), n), (stats.mean_abs_grad, stats.stderr));
        }
    }
    run.csv(
        "bp_sweep.csv",
        &["variant", "n_data", "mean_abs_grad", "stderr", "samples", "cycle_min", "cycle_max"],
        &rows,
    )?;
    run.checks.push(Check::hard(
        "one_row_per_variant_and_size",
        rows.len() == variants.len() * grid.len(),
        rows.len().to_string(),
    ));
    let ratio = |v: &str| -> Option<f64> {
        let first = table.get(&(v.to_string(), *grid.first()?))?.0;
        let last = table.get(&(v.to_string(), *grid.last()?))?.0;
        Some(last / first)
    };
    if variants.contains(&Variant::Original) {
        let o = Variant::Original.to_string();
        let decreasing = grid.windows(2).all(|w| {
            let (a, sa) = table[&(o.clone(), w[0])];
            let (b, sb) = table[&(o.clone(), w[1])];
            a - b > 2.0 * (sa * sa + sb * sb).sqrt()
        });
        run.checks.push(Check::soft("original_decreasing", decreasing, String::new()));
        let r = ratio(&o).expect("grid is non-empty");
        run.checks.push(Check::soft("original_ratio_below_0.1", r < 0.1, fmt_f64(r)));
        run.derive("original_ratio", json!(r));
        if variants.contains(&Variant::Improved) {
            let ri = ratio(&Variant::Improved.to_string()).expect("grid is non-empty");
            run.derive("improved_ratio", json!(ri));
            run.checks.push(Check::soft("improved_ratio_above_10x_original", ri > 10.0 * r, fmt_f64(ri / r)));
        }
    }
    Ok(())
}

fn check_theorems(ctx: &Context, run: &mut Run) -> Result<()> {
    let cfg = &ctx.config;
    let mut rows = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let t0 = Instant::now();
    for &n in &cfg.theorem1_grid {
        let settings =
            HaarGradSettings { n_data: n, n_layers: cfg.theorem1_layers, samples: cfg.theorem1_samples, param_index: 0 };
        let stats = grad_stats_haar(&settings, &ctx.source(1).child(n as u64))?;
        let rep = bound_report(&stats, 1);
        rows.push(vec![
            n.to_string(),
            rep.ensemble_size.to_string(),
            rep.samples.to_string(),
            fmt_f64(rep.empirical_mean),
            fmt_f64(rep.mean_stderr),
            fmt_f64(rep.empirical_variance),
            fmt_f64(rep.bound_theorem),
            fmt_f64(rep.bound_appendix),
            rep.mean_pass.to_string(),
            rep.appendix_pass.to_string(),
            rep.theorem_pass.to_string(),
        ]);
        run.checks.push(Check::hard(&format!("theorem1_mean_n{n}"), rep.mean_pass, fmt_f64(rep.empirical_mean)));
        run.checks.push(Check::hard(
            &format!("theorem1_appendix_bound_n{n}"),
            rep.appendix_pass,
            format!("{} <= {}", rep.empirical_variance, rep.bound_appendix),
        ));
        run.checks.push(Check::soft(
            &format!("theorem1_theorem_bound_n{n}"),
            rep.theorem_pass,
            format!("{} <= {}", rep.empirical_variance, rep.bound_theorem),
        ));
        xs.push(n as f64);
        ys.push(rep.empirical_variance.ln());
    }
    run.wall_ms.insert("theorem1".into(), t0.elapsed().as_millis());
    run.csv(
        "theorem1.csv",
        &[
            "n_data",
            "ensemble_size",
            "samples",
            "empirical_mean",
            "mean_stderr",
            "empirical_variance",
            "bound_theorem",
            "bound_appendix",
            "mean_pass",
            "appendix_pass",
            "theorem_pass",
        ],
        &rows,
    )?;
    if xs.len() >= 2 {
        let s = slope(&xs, &ys)?;
        run.derive("theorem1_log_variance_slope", json!(s));
        run.checks.push(Check::hard("theorem1_decay_slope", s <= decay_slope_limit(), fmt_f64(s)));
    }

    let t1 = Instant::now();
    let settings = Theorem2Settings {
        n_total: 2,
        n_layers: cfg.theorem2_layers,
        scales: vec![cfg.theorem2_scale; cfg.theorem2_layers],
        samples: cfg.theorem2_samples,
        instances: cfg.theorem2_instances,
        limit_scale: 1e-3,
        limit_tolerance: 1e-6,
    };
    let rep = theorem2_check(&settings, &ctx.source(2))?;
    run.wall_ms.insert("theorem2".into(), t1.elapsed().as_millis());
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                r.instance.to_string(),
                r.k.to_string(),
                r.generator.clone(),
                fmt_f64(r.grad0),
                fmt_f64(r.hessian_kk),
                fmt_f64(r.lhs),
                fmt_f64(r.stderr),
                fmt_f64(r.rhs),
                r.pass.to_string(),
                fmt_f64(r.limit_gap),
                r.limit_pass.to_string(),
            ]
        })
        .collect();
    run.csv(
        "theorem2.csv",
        &["instance", "k", "generator", "grad0", "hessian_kk", "lhs", "stderr", "rhs", "pass", "limit_gap", "limit_pass"],
        &rows,
    )?;
    let failures = rep.rows.iter().filter(|r| !r.pass).count();
    run.checks.push(Check::hard("theorem2_inequality", rep.all_pass, format!("{failures} failing instances")));
    run.checks.push(Check::hard("theorem2_small_angle_limit", rep.limit_pass, String::new()));
    Ok(())
}

fn calibrate(ctx: &Context, run: &mut Run) -> Result<()> {
    let cfg = &ctx.config;
    let variant = cfg.variant;
    let cal = calibrate_default(cfg, variant)?;
    let rows: Vec<Vec<String>> = cal
        .scan
        .iter()
        .map(|(h, m)| vec![variant.to_string(), fmt_f64(*h), fmt_f64(*m)])
        .collect();
    run.csv("calibration_scan.csv", &["variant", "h_end", "mmd_to_haar"], &rows)?;
    let flat = json!({
        "run_id": run.out.run_id,
        "seed": cfg.seed,
        "variant": variant,
        "n_data": cal.n_data,
        "cycles": cal.cycles,
        "h_start": cal.h_start,
        "h_end": cal.h_end,
        "target": cal.target,
        "achieved": cal.achieved,
        "iterations": cal.iterations,
        "monotone": cal.monotone,
        "converged": cal.converged,
    });
    run.files.push(run.out.write_json("calibration.json", &flat)?);
    let mut calibrated = cfg.clone();
    cal.apply(&mut calibrated);
    run.files.push(run.out.write_json("calibrated_config.json", &calibrated)?);
    run.checks.push(Check::hard("bracket_monotone", cal.monotone, String::new()));
    run.checks.push(Check::hard(
        "converged_within_10_percent",
        cal.converged,
        format!("{} vs target {}", cal.achieved, cal.target),
    ));
    if !cal.converged && cal.iterations > 20 {
        bail!("calibration exceeded 20 bisection steps");
    }
    Ok(())
}
