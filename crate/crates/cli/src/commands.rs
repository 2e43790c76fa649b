//! Subcommand implementations: each orchestrates core-library calls, writes
//! CSV/JSON artifacts atomically, and reports an exit code.
//!
//! Exit-code contract: `0` all verdicts pass, `1` a verdict failed, `2` a
//! standing hypothesis was unmet (diameter decay, nonempty regions, sign
//! preconditions), `3` no counterexample exists at the requested tolerances,
//! `64` the configuration was malformed or did not resolve. When several
//! experiments run in one invocation, hypothesis failures take precedence
//! over verdict failures.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use ergodiff_core::{
    build_counterexample, decay_check, eval_grid, gauge_orbit_oracle, gauge_supnorm,
    herman_check, trace_counterexample, unique_ergodicity_probe, Error as CoreError,
    run_tsd_at,
};

use crate::config::{ConfigError, ExperimentConfig, GaugeConfig};
use crate::output::{atomic_write, config_hash, decay_csv, to_sorted_json, RunSummary, Verdict};

/// Failures during command execution, each carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Core(CoreError),
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o failure: {e}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 64,
            CliError::Core(e) => match e {
                CoreError::HypothesisUnmet(_)
                | CoreError::ZeroMeasureRegion { .. }
                | CoreError::NegativeObservable { .. }
                | CoreError::ComplexObservable { .. }
                | CoreError::MissingHolderData => 2,
                CoreError::NoCounterexample(_) => 3,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// A resolved invocation: config after CLI overrides, plus output plumbing.
pub struct Invocation {
    pub config: ExperimentConfig,
    pub out_dir: PathBuf,
    pub stem: String,
    /// Canonical config text; its hash ties summaries to inputs.
    pub canonical: String,
}

impl Invocation {
    fn summary(
        &self,
        command: &str,
        verdicts: Vec<Verdict>,
        budgets: BTreeMap<String, f64>,
        artifacts: Vec<String>,
        t0: Instant,
    ) -> RunSummary {
        RunSummary {
            command: command.to_string(),
            config_hash: config_hash(&self.canonical),
            seeds: self.config.model.seed().into_iter().collect(),
            verdicts,
            tolerance_budgets: budgets,
            artifacts,
            wall_clock_seconds: t0.elapsed().as_secs_f64(),
        }
    }

    fn write_summary(&self, summary: &RunSummary) -> Result<()> {
        let text = to_sorted_json(summary)?;
        let name = format!("{}.summary.json", self.stem);
        atomic_write(&self.out_dir, &name, text.as_bytes())?;
        info!("wrote {}", self.out_dir.join(&name).display());
        Ok(())
    }
}

/// Outcome of the differentiation pipeline on one config: per-base-point
/// verdicts plus rendered artifacts, computed without touching the disk so
/// sweeps can evaluate combinations in parallel.
struct TsdOutcome {
    verdicts: Vec<Verdict>,
    budgets: BTreeMap<String, f64>,
    /// `(file name, contents)` pairs, written by the caller in order.
    files: Vec<(String, Vec<u8>)>,
    hypothesis_failed: bool,
}

/// Runs the decay gate and the differentiation trace for every base point.
fn tsd_outcome(cfg: &ExperimentConfig, stem: &str) -> Result<TsdOutcome> {
    let sys = cfg.system.build()?;
    let model = cfg.model.build(&sys)?;
    let schedule = cfg.schedule.build();
    let family = cfg.family.build();
    let bases = cfg.family.build_base_points(&sys)?;
    let f = cfg.observable.build()?;
    let w = cfg.weights.build()?;
    let seq = cfg.weights.sequence();
    let marks = cfg.window.marks()?;
    let tol = &cfg.tolerances;

    let mut verdicts = Vec::new();
    let mut files = Vec::new();
    let mut hypothesis_failed = false;
    let mut budgets = BTreeMap::from([
        ("bound-margin".to_string(), tol.bound_margin),
        ("decay-threshold".to_string(), tol.decay_threshold),
    ]);

    for (i, x0) in bases.iter().enumerate() {
        let report = decay_check(
            &sys,
            &schedule,
            &family,
            x0,
            &tol.decay_deltas,
            &marks,
            seq.as_ref(),
            tol.decay_threshold,
        )?;
        if i == 0 {
            files.push((format!("{stem}.decay.csv"), decay_csv(&report).into_bytes()));
        }
        if !report.pass {
            hypothesis_failed = true;
            verdicts.push(Verdict {
                name: format!("base-{i}-decay"),
                pass: false,
                detail: "diameter-decay hypothesis unmet: offending fractions do not vanish"
                    .to_string(),
                numbers: BTreeMap::from([(
                    "final-fraction".to_string(),
                    report.fraction(0, marks.len() - 1),
                )]),
            });
            continue;
        }
        let trace = run_tsd_at(&sys, &model, &schedule, &family, x0, &f, &w, &marks)?;
        let violations = trace.bound_violations(tol.bound_margin);
        let mut csv = Vec::new();
        trace
            .write_csv(&mut csv)
            .map_err(CliError::Core)?;
        files.push((format!("{stem}.base{i}.trace.csv"), csv));
        budgets.insert(format!("quad-tol-base-{i}"), trace.quad_tol);
        verdicts.push(Verdict {
            name: format!("base-{i}-dominance"),
            pass: violations.is_empty(),
            detail: if violations.is_empty() {
                format!("gap <= bound + quadrature tolerance at all {} marks", marks.len())
            } else {
                format!("bound violated at k = {violations:?}")
            },
            numbers: BTreeMap::from([
                ("max-gap".to_string(), trace.max_gap()),
                ("final-gap".to_string(), trace.final_gap()),
                ("quad-tol".to_string(), trace.quad_tol),
                ("violations".to_string(), violations.len() as f64),
            ]),
        });
    }
    Ok(TsdOutcome {
        verdicts,
        budgets,
        files,
        hypothesis_failed,
    })
}

fn exit_for(hypothesis_failed: bool, all_pass: bool) -> i32 {
    if hypothesis_failed {
        2
    } else if all_pass {
        0
    } else {
        1
    }
}

/// `run-tsd`: decay gate, trace per base point, dominance verdicts.
pub fn cmd_run_tsd(inv: &Invocation) -> Result<i32> {
    let t0 = Instant::now();
    let outcome = tsd_outcome(&inv.config, &inv.stem)?;
    let mut artifacts = Vec::new();
    for (name, bytes) in &outcome.files {
        atomic_write(&inv.out_dir, name, bytes)?;
        artifacts.push(name.clone());
    }
    let summary = inv.summary("run-tsd", outcome.verdicts, outcome.budgets, artifacts, t0);
    let code = exit_for(outcome.hypothesis_failed, summary.all_pass());
    inv.write_summary(&summary)?;
    Ok(code)
}

/// `gauge`: sup-norm estimate with the orbit oracle and optional constancy
/// and unique-ergodicity probes.
pub fn cmd_gauge(inv: &Invocation) -> Result<i32> {
    let t0 = Instant::now();
    let cfg = &inv.config;
    let gauge_cfg: &GaugeConfig = cfg.gauge.as_ref().ok_or_else(|| {
        ConfigError("gauge subcommand needs a [gauge] section (k, resolution)".into())
    })?;
    let sys = cfg.system.build()?;
    let f = cfg.observable.build()?;
    let grid = eval_grid(&sys, gauge_cfg.resolution)?;
    let estimate = gauge_supnorm(&sys, &f, gauge_cfg.k, &grid, None)?;

    let oracle = if gauge_cfg.orbit_period > 0 {
        match gauge_orbit_oracle(&sys, &f, gauge_cfg.orbit_period) {
            Ok(o) => Some(o),
            Err(CoreError::UnsupportedOracle) => {
                info!("periodic-orbit oracle unavailable for this system");
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };
    let herman = gauge_cfg
        .herman_tolerance
        .map(|tol| herman_check(&sys, &f, gauge_cfg.k, &grid, None, tol))
        .transpose()?;
    let ue = if gauge_cfg.ue {
        Some(unique_ergodicity_probe(
            &sys,
            gauge_cfg.k,
            &grid,
            0.05,
            0.05,
            gauge_cfg.orbit_period.clamp(1, 12),
        )?)
    } else {
        None
    };

    let mut numbers = BTreeMap::from([
        ("gamma-hat".to_string(), estimate.value),
        ("kernel-max".to_string(), estimate.kernel_max),
    ]);
    if let Some(o) = &oracle {
        numbers.insert("orbit-max-mean".to_string(), o.max_mean);
        numbers.insert("orbit-min-mean".to_string(), o.min_mean);
    }
    if let Some(h) = &herman {
        numbers.insert("average-spread".to_string(), h.average_spread);
    }
    let detail = format!(
        "gauge estimate {:.6} at k = {} over {} grid points{}{}",
        estimate.value,
        gauge_cfg.k,
        estimate.grid_size,
        oracle
            .as_ref()
            .map(|o| format!("; orbit lower bound {:.6}", o.max_mean))
            .unwrap_or_default(),
        herman
            .as_ref()
            .map(|h| format!(
                "; averages {} at tolerance {:.1e}",
                if h.passes { "constant" } else { "non-constant" },
                h.tolerance
            ))
            .unwrap_or_default(),
    );

    let report = serde_json::json!({
        "estimate": estimate,
        "orbit_oracle": oracle,
        "herman": herman,
        "ue": ue,
    });
    let report_name = format!("{}.gauge.json", inv.stem);
    atomic_write(&inv.out_dir, &report_name, to_sorted_json(&report)?.as_bytes())?;

    let verdicts = vec![Verdict {
        name: "gauge-estimate".to_string(),
        pass: true,
        detail,
        numbers,
    }];
    let budgets = estimate
        .tolerance_budget
        .map(|b| BTreeMap::from([("grid-discretization".to_string(), b)]))
        .unwrap_or_default();
    let summary = inv.summary("gauge", verdicts, budgets, vec![report_name], t0);
    inv.write_summary(&summary)?;
    Ok(0)
}

/// `counterexample`: builds the divergent-region plan, replays its trace,
/// and verifies the recorded oscillation and mass decline.
pub fn cmd_counterexample(inv: &Invocation) -> Result<i32> {
    let t0 = Instant::now();
    let cfg = &inv.config;
    let sys = cfg.system.build()?;
    let model = cfg.model.build(&sys)?;
    let schedule = cfg.schedule.build();
    let f = cfg.observable.build()?;
    let marks = cfg.window.marks()?;
    let (thresholds, shrink) = match &cfg.counterexample {
        Some(c) => (c.thresholds()?, c.shrink),
        None => (None, true),
    };
    let plan = match build_counterexample(
        &sys,
        &model,
        &schedule,
        &f,
        &marks,
        shrink,
        thresholds,
        cfg.tolerances.gate,
    ) {
        Ok(plan) => plan,
        Err(e @ (CoreError::NoCounterexample(_) | CoreError::HypothesisUnmet(_))) => {
            // Record the refusal as an artifact before exiting.
            let summary = inv.summary(
                "counterexample",
                vec![Verdict {
                    name: "construction".to_string(),
                    pass: false,
                    detail: e.to_string(),
                    numbers: BTreeMap::new(),
                }],
                BTreeMap::new(),
                Vec::new(),
                t0,
            );
            inv.write_summary(&summary)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let trace = trace_counterexample(&sys, &model, &schedule, &f, &plan)?;

    let mut files = Vec::new();
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).map_err(CliError::Core)?;
    files.push((format!("{}.trace.csv", inv.stem), csv));
    files.push((
        format!("{}.plan.json", inv.stem),
        to_sorted_json(&plan)?.into_bytes(),
    ));

    let oscillation = trace.tail_oscillation(0.5);
    let want = (plan.upper - plan.lower) - cfg.tolerances.gate;
    let mut verdicts = vec![Verdict {
        name: "oscillation".to_string(),
        pass: oscillation >= want,
        detail: format!(
            "tail oscillation {oscillation:.4} vs required {want:.4} \
             (thresholds {:.3}/{:.3}{})",
            plan.lower,
            plan.upper,
            if plan.reflected {
                "; observable reflected"
            } else {
                ""
            }
        ),
        numbers: BTreeMap::from([
            ("oscillation".to_string(), oscillation),
            ("lower".to_string(), plan.lower),
            ("upper".to_string(), plan.upper),
            ("gauge".to_string(), plan.gauge),
            ("mean".to_string(), plan.mean),
            ("start-index".to_string(), plan.start_index as f64),
        ]),
    }];
    if plan.shrink {
        let masses = plan.refined_masses();
        let capped = plan
            .steps
            .iter()
            .filter(|s| s.k >= 10)
            .all(|s| s.refined.as_ref().map_or(s.mass, |r| r.mass) <= 1.0 / s.k as f64 + 1e-15);
        verdicts.push(Verdict {
            name: "shrinking-mass".to_string(),
            pass: plan.masses_nonincreasing() && capped,
            detail: format!(
                "refined masses nonincreasing: {}, below 1/k from k = 10: {capped}",
                plan.masses_nonincreasing()
            ),
            numbers: BTreeMap::from([(
                "final-mass".to_string(),
                masses.last().copied().unwrap_or(f64::NAN),
            )]),
        });
    }

    let mut artifacts = Vec::new();
    for (name, bytes) in &files {
        atomic_write(&inv.out_dir, name, bytes)?;
        artifacts.push(name.clone());
    }
    let budgets = BTreeMap::from([("gate".to_string(), cfg.tolerances.gate)]);
    let summary = inv.summary("counterexample", verdicts, budgets, artifacts, t0);
    let code = if summary.all_pass() { 0 } else { 1 };
    inv.write_summary(&summary)?;
    Ok(code)
}

/// `decay-check`: the diameter-decay hypothesis test alone.
pub fn cmd_decay_check(inv: &Invocation) -> Result<i32> {
    let t0 = Instant::now();
    let cfg = &inv.config;
    let sys = cfg.system.build()?;
    let schedule = cfg.schedule.build();
    let family = cfg.family.build();
    let bases = cfg.family.build_base_points(&sys)?;
    let marks = cfg.window.marks()?;
    let seq = cfg.weights.sequence();
    let mut verdicts = Vec::new();
    let mut files = Vec::new();
    let mut all_pass = true;
    for (i, x0) in bases.iter().enumerate() {
        let report = decay_check(
            &sys,
            &schedule,
            &family,
            x0,
            &cfg.tolerances.decay_deltas,
            &marks,
            seq.as_ref(),
            cfg.tolerances.decay_threshold,
        )?;
        all_pass &= report.pass;
        files.push((format!("{}.base{i}.decay.csv", inv.stem), decay_csv(&report).into_bytes()));
        verdicts.push(Verdict {
            name: format!("base-{i}-decay"),
            pass: report.pass,
            detail: format!(
                "deltas {:?}, threshold {}: {}",
                report.deltas,
                report.threshold,
                if report.pass { "fractions vanish" } else { "fractions persist" }
            ),
            numbers: BTreeMap::from([(
                "final-fraction".to_string(),
                report.fraction(0, marks.len() - 1),
            )]),
        });
    }
    let mut artifacts = Vec::new();
    for (name, bytes) in &files {
        atomic_write(&inv.out_dir, name, bytes)?;
        artifacts.push(name.clone());
    }
    let budgets = BTreeMap::from([(
        "decay-threshold".to_string(),
        cfg.tolerances.decay_threshold,
    )]);
    let summary = inv.summary("decay-check", verdicts, budgets, artifacts, t0);
    inv.write_summary(&summary)?;
    Ok(if all_pass { 0 } else { 2 })
}

/// `sweep`: expands the `[sweep]` Cartesian grid and runs the whole
/// differentiation pipeline per combination, in parallel. Artifact bytes are
/// rendered inside each worker; files and the master summary are written
/// sequentially, so the thread count never changes any output.
pub fn cmd_sweep(inv: &Invocation) -> Result<i32> {
    let t0 = Instant::now();
    let combos = inv.config.expand_sweep()?;
    info!("sweep: {} combinations", combos.len());
    let results: Vec<(String, Result<TsdOutcome>)> = combos
        .par_iter()
        .enumerate()
        .map(|(j, (cfg, label))| {
            let stem = format!("{}.c{j}", inv.stem);
            (label.clone(), tsd_outcome(cfg, &stem))
        })
        .collect();

    let mut verdicts = Vec::new();
    let mut artifacts = Vec::new();
    let mut budgets = BTreeMap::new();
    let mut hypothesis_failed = false;
    for (j, (label, result)) in results.into_iter().enumerate() {
        let outcome = result?;
        hypothesis_failed |= outcome.hypothesis_failed;
        for (name, bytes) in &outcome.files {
            atomic_write(&inv.out_dir, name, bytes)?;
            artifacts.push(name.clone());
        }
        for v in outcome.verdicts {
            verdicts.push(Verdict {
                name: format!("c{j} {label} {}", v.name),
                ..v
            });
        }
        for (k, v) in outcome.budgets {
            budgets.insert(format!("c{j} {k}"), v);
        }
    }
    let summary = inv.summary("sweep", verdicts, budgets, artifacts, t0);
    let code = exit_for(hypothesis_failed, summary.all_pass());
    inv.write_summary(&summary)?;
    Ok(code)
}

/// Applies `--seed` and `--k-max` overrides to a parsed config.
pub fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    k_max: Option<usize>,
) {
    if let Some(seed) = seed {
        if cfg.model.override_seed(seed) {
            info!("seed override: {seed}");
        } else {
            warn!("--seed given but the measure backend is deterministic; ignored");
        }
    }
    if let Some(k_max) = k_max {
        cfg.window.k_max = Some(k_max);
        cfg.window.marks = None;
        info!("window override: k-max = {k_max}");
    }
}
