//! Labelled-fraction sweep runner and report emission (CSV + JSON data
//! files for plotting metric-vs-fraction curves per mode).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dialog_core::corpus::{Corpus, Split};
use dialog_core::eval::{evaluate, mean_std, MetricsReport};
use dialog_core::kb::EntityDb;
use dialog_core::training::{train, TrainMode, TrainingConfig};
use dialog_core::{Error, Result};

use crate::config::ExperimentPlan;

fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::Baseline => "baseline",
        TrainMode::Pseudo => "pseudo",
        TrainMode::Pi => "pi",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: TrainMode,
    pub fraction: f64,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<MetricsReport>,
    pub wall_secs: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub mode: TrainMode,
    pub fraction: f64,
    pub seeds: usize,
    pub failures: usize,
    pub joint_goal_accuracy_mean: f64,
    pub joint_goal_accuracy_std: f64,
    pub success_rate_mean: f64,
    pub success_rate_std: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRecord>,
}

/// Execute |modes| x |fractions| x |seeds| runs in a fixed order. A
/// failing run is recorded with its reason and the sweep continues.
pub fn run_sweep(
    plan: &ExperimentPlan,
    base: &TrainingConfig,
    corpus: &Corpus,
    db: &EntityDb,
    out_dir: &Path,
) -> Result<SweepReport> {
    plan.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let mut runs = Vec::new();
    for &mode in &plan.modes {
        for &fraction in &plan.fractions {
            for &seed in &plan.seeds {
                let mut cfg = base.clone();
                cfg.mode = mode;
                cfg.labelled_fraction = fraction;
                cfg.seed = seed;
                let start = std::time::Instant::now();
                let run = match run_one(&cfg, corpus, db, out_dir) {
                    Ok((checkpoint, metrics)) => RunRecord {
                        mode,
                        fraction,
                        seed,
                        checkpoint: Some(checkpoint),
                        metrics: Some(metrics),
                        wall_secs: start.elapsed().as_secs_f64(),
                        error: None,
                    },
                    Err(e) => RunRecord {
                        mode,
                        fraction,
                        seed,
                        checkpoint: None,
                        metrics: None,
                        wall_secs: start.elapsed().as_secs_f64(),
                        error: Some(e.to_string()),
                    },
                };
                runs.push(run);
            }
        }
    }
    let aggregates = aggregate(&runs);
    Ok(SweepReport { runs, aggregates })
}

fn run_one(
    cfg: &TrainingConfig,
    corpus: &Corpus,
    db: &EntityDb,
    out_dir: &Path,
) -> Result<(PathBuf, MetricsReport)> {
    let stem = format!(
        "{}_f{:.2}_s{}",
        mode_name(cfg.mode),
        cfg.labelled_fraction,
        cfg.seed
    );
    let log_path = out_dir.join(format!("{stem}.log.jsonl"));
    let mut log = std::fs::File::create(&log_path)?;
    let outcome = train(cfg, corpus, db, Some(&mut log))?;
    let checkpoint = out_dir.join(format!("{stem}.model.json"));
    outcome.model.save(&checkpoint)?;
    let metrics = evaluate(&outcome.model, corpus, db, Split::Test)?;
    Ok((checkpoint, metrics))
}

fn aggregate(runs: &[RunRecord]) -> Vec<AggregateRecord> {
    let mut keys: Vec<(TrainMode, f64)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|&(m, f)| m == r.mode && f == r.fraction) {
            keys.push((r.mode, r.fraction));
        }
    }
    keys.iter()
        .map(|&(mode, fraction)| {
            let group: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.mode == mode && r.fraction == fraction)
                .collect();
            let ok: Vec<&MetricsReport> =
                group.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let joint: Vec<f64> = ok.iter().map(|m| m.joint_goal_accuracy).collect();
            let success: Vec<f64> = ok.iter().map(|m| m.success_rate).collect();
            let (jm, js) = mean_std(&joint);
            let (sm, ss) = mean_std(&success);
            AggregateRecord {
                mode,
                fraction,
                seeds: group.len(),
                failures: group.len() - ok.len(),
                joint_goal_accuracy_mean: jm,
                joint_goal_accuracy_std: js,
                success_rate_mean: sm,
                success_rate_std: ss,
            }
        })
        .collect()
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

/// CSV with one `run` row per training run and one `aggregate` row per
/// (mode, fraction); stable column order, floats at 4 decimal places.
pub fn report_csv(report: &SweepReport) -> Result<String> {
    if report.runs.is_empty() {
        return Err(Error::Report("no runs to report".into()));
    }
    let mut out = String::from(
        "kind,mode,fraction,seed,joint_goal_accuracy,joint_goal_accuracy_std,success_rate,success_rate_std,wall_secs,error\n",
    );
    for r in &report.runs {
        let (joint, success) = match &r.metrics {
            Some(m) => (f4(m.joint_goal_accuracy), f4(m.success_rate)),
            None => (String::new(), String::new()),
        };
        out.push_str(&format!(
            "run,{},{},{},{},,{},,{},{}\n",
            mode_name(r.mode),
            f4(r.fraction),
            r.seed,
            joint,
            success,
            f4(r.wall_secs),
            r.error.clone().unwrap_or_default().replace(',', ";"),
        ));
    }
    for a in &report.aggregates {
        out.push_str(&format!(
            "aggregate,{},{},,{},{},{},{},,\n",
            mode_name(a.mode),
            f4(a.fraction),
            f4(a.joint_goal_accuracy_mean),
            f4(a.joint_goal_accuracy_std),
            f4(a.success_rate_mean),
            f4(a.success_rate_std),
        ));
    }
    Ok(out)
}

/// JSON report with the same rounding as the CSV.
pub fn report_json(report: &SweepReport) -> Result<String> {
    if report.runs.is_empty() {
        return Err(Error::Report("no runs to report".into()));
    }
    fn round4(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Number(n) => {
                if let Some(f) = n.as_f64() {
                    if f.fract() != 0.0 {
                        *v = serde_json::json!((f * 1e4).round() / 1e4);
                    }
                }
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(round4),
            serde_json::Value::Object(map) => map.values_mut().for_each(round4),
            _ => {}
        }
    }
    let mut value = serde_json::to_value(report)?;
    round4(&mut value);
    Ok(serde_json::to_string_pretty(&value)?)
}

/// Write both report files into `out_dir`.
pub fn write_reports(report: &SweepReport, out_dir: &Path) -> Result<()> {
    std::fs::write(out_dir.join("sweep.csv"), report_csv(report)?)?;
    std::fs::write(out_dir.join("sweep.json"), report_json(report)?)?;
    Ok(())
}
