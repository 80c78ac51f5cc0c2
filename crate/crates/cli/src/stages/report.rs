use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use pvae_core::metrics::{
    aggregate_trials, dataset_means, read_csv, Aggregate, MetricsRecord, Summary,
};
use serde::{Deserialize, Serialize};

use crate::config::{Config, Mode};
use crate::error::{CliError, Result};
use crate::layout::Layout;
use crate::manifest::RunManifest;
use crate::stages::{baselines, evaluate, fresh_dir};
use crate::svg::{bar_chart, Bar};

pub const SUMMARY: &str = "summary.csv";
pub const CHECKS: &str = "checks.csv";
pub const MARKDOWN: &str = "summary.md";

/// Toy acceptance thresholds.
pub const TOY_TV_MAX: f64 = 0.15;
pub const TOY_MODE_RANGE: (f64, f64) = (0.3, 0.7);
pub const TOY_NEAR_TRUTH_MIN: f64 = 0.9;

/// One line of the ordering / comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    /// `mean` (across trials), `trial` (single trial) or `report` (no verdict).
    pub scope: String,
    /// `pass`, `fail` or `report`.
    pub status: String,
    pub detail: String,
}

fn verdict(ok: bool) -> String {
    if ok { "pass" } else { "fail" }.to_string()
}

pub fn run(cfg: &Config, layout: &Layout) -> Result<RunManifest> {
    let start = Instant::now();
    let dir = layout.report();
    match cfg.mode {
        Mode::Foam => foam(cfg, layout, &dir)?,
        Mode::Toy => toy(layout, &dir)?,
    }
    let times = BTreeMap::from([("report".to_string(), start.elapsed().as_secs_f64())]);
    RunManifest::write("report", cfg, &dir, times)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_checks(path: &Path, checks: &[Check]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in checks {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Display order: baselines first, then the autoencoder rows.
fn rank(alg: &str) -> (usize, String) {
    let family = ["fbp", "sirt", "tv", "pvae"]
        .iter()
        .position(|f| alg.starts_with(&format!("{f}_")))
        .unwrap_or(4);
    let schedule = ["full", "uniform", "random"]
        .iter()
        .position(|s| alg.ends_with(s))
        .unwrap_or(3);
    (family * 4 + schedule, alg.to_string())
}

type Metric = (
    &'static str,
    &'static str,
    fn(&Aggregate) -> Summary,
    fn(&MetricsRecord) -> f64,
);

const METRICS: [Metric; 3] = [
    ("ssim", "SSIM", |a| a.ssim, |r| r.ssim),
    ("psnr_db", "PSNR (dB)", |a| a.psnr_db, |r| r.psnr_db),
    ("mse", "MSE", |a| a.mse, |r| r.mse),
];

/// Per-algorithm mean over trials of the per-trial dataset means.
pub fn summarize(records: &[MetricsRecord]) -> Result<(Vec<MetricsRecord>, Vec<Aggregate>)> {
    let per_trial = dataset_means(records);
    let mut agg = aggregate_trials(&per_trial)?;
    agg.sort_by_key(|a| rank(&a.algorithm));
    Ok((per_trial, agg))
}

/// Ordering checks on the across-trial means, each repeated per trial, plus
/// the report-only random-vs-uniform rows.
pub fn ordering_checks(per_trial: &[MetricsRecord], agg: &[Aggregate]) -> Vec<Check> {
    let find = |alg: &str| agg.iter().find(|a| a.algorithm == alg);
    let trial_value = |alg: &str, t: usize, f: fn(&MetricsRecord) -> f64| {
        let rows: Vec<&MetricsRecord> = per_trial.iter().filter(|r| r.algorithm == alg).collect();
        // Single-trial algorithms (the deterministic baselines) apply to every trial.
        rows.iter()
            .find(|r| r.trial == t)
            .or(if rows.len() == 1 { rows.first() } else { None })
            .map(|r| f(r))
    };
    let mut checks = Vec::new();
    type Rule = (
        &'static str,
        &'static str,
        &'static str,
        usize,
        fn(f64, f64) -> bool,
    );
    let rules: [Rule; 4] = [
        ("ssim", "fbp_full", ">=", 0, |a, b| a >= b),
        ("ssim", "pvae_uniform", ">", 0, |a, b| a > b),
        ("psnr_db", "pvae_uniform", ">", 1, |a, b| a > b),
        ("mse", "pvae_uniform", "<", 2, |a, b| a < b),
    ];
    for (metric, lhs, op, mi, cmp) in rules {
        let rhs = if lhs == "fbp_full" {
            "pvae_uniform"
        } else {
            "fbp_uniform"
        };
        let (Some(a), Some(b)) = (find(lhs), find(rhs)) else {
            continue;
        };
        let (get, row) = (METRICS[mi].2, METRICS[mi].3);
        let (va, vb) = (get(a).mean, get(b).mean);
        checks.push(Check {
            check: format!("{metric}: {lhs} {op} {rhs}"),
            scope: "mean".into(),
            status: verdict(cmp(va, vb)),
            detail: format!("{va:.4} vs {vb:.4}"),
        });
        let trials: Vec<usize> = {
            let mut t: Vec<usize> = per_trial
                .iter()
                .filter(|r| r.algorithm.starts_with("pvae_"))
                .map(|r| r.trial)
                .collect();
            t.sort_unstable();
            t.dedup();
            t
        };
        for t in trials {
            if let (Some(va), Some(vb)) = (trial_value(lhs, t, row), trial_value(rhs, t, row)) {
                checks.push(Check {
                    check: format!("{metric}: {lhs} {op} {rhs}"),
                    scope: format!("trial {t}"),
                    status: verdict(cmp(va, vb)),
                    detail: format!("{va:.4} vs {vb:.4}"),
                });
            }
        }
    }
    for family in ["pvae", "fbp"] {
        let (Some(r), Some(u)) = (
            find(&format!("{family}_random")),
            find(&format!("{family}_uniform")),
        ) else {
            continue;
        };
        let deltas: Vec<String> = METRICS
            .iter()
            .map(|(name, _, get, _)| format!("{name} {:+.4}", get(r).mean - get(u).mean))
            .collect();
        checks.push(Check {
            check: format!("random vs uniform angles: {family}_random - {family}_uniform"),
            scope: "report".into(),
            status: "report".into(),
            detail: deltas.join("; "),
        });
    }
    checks
}

fn foam(cfg: &Config, layout: &Layout, dir: &Path) -> Result<()> {
    let mut records = Vec::new();
    let mut sources = Vec::new();
    for path in [
        layout.baselines().join(baselines::METRICS),
        layout.evaluate().join(evaluate::METRICS),
    ] {
        if path.exists() {
            records.extend(read_csv(&path)?);
            sources.push(path);
        }
    }
    if records.is_empty() {
        return Err(CliError::Data(
            "no metrics records found; run `baselines` and/or `evaluate` first".into(),
        ));
    }
    fresh_dir(dir)?;
    let (per_trial, agg) = summarize(&records)?;

    let mut w = csv::Writer::from_path(dir.join(SUMMARY))?;
    w.write_record([
        "algorithm",
        "trials",
        "ssim_mean",
        "ssim_std",
        "psnr_db_mean",
        "psnr_db_std",
        "mse_mean",
        "mse_std",
    ])?;
    for a in &agg {
        w.write_record([
            a.algorithm.clone(),
            a.ssim.count.to_string(),
            a.ssim.mean.to_string(),
            a.ssim.std.to_string(),
            a.psnr_db.mean.to_string(),
            a.psnr_db.std.to_string(),
            a.mse.mean.to_string(),
            a.mse.std.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&dir.join(SUMMARY), e))?;

    let checks = ordering_checks(&per_trial, &agg);
    write_checks(&dir.join(CHECKS), &checks)?;

    for (key, label, get, _) in METRICS {
        let bars: Vec<Bar> = agg
            .iter()
            .map(|a| {
                let (group, series) = a.algorithm.split_once('_').unwrap_or((&a.algorithm, ""));
                Bar {
                    label: a.algorithm.clone(),
                    mean: get(a).mean,
                    std: get(a).std,
                    group: group.to_string(),
                    series: series.to_string(),
                }
            })
            .collect();
        write_text(
            &dir.join(format!("{key}.svg")),
            &bar_chart(&format!("{label}, mean ± std over trials"), label, &bars),
        )?;
    }

    let mut md = String::from("# Benchmark summary\n\n");
    let _ = writeln!(md, "| algorithm | trials | SSIM | PSNR (dB) | MSE |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for a in &agg {
        let _ = writeln!(
            md,
            "| {} | {} | {:.4} ± {:.4} | {:.2} ± {:.2} | {:.5} ± {:.5} |",
            a.algorithm,
            a.ssim.count,
            a.ssim.mean,
            a.ssim.std,
            a.psnr_db.mean,
            a.psnr_db.std,
            a.mse.mean,
            a.mse.std
        );
    }
    let _ = writeln!(
        md,
        "\n## Orderings\n\n| check | scope | status | values |\n|---|---|---|---|"
    );
    for c in &checks {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            c.check, c.scope, c.status, c.detail
        );
    }
    let _ = writeln!(md, "\n## Baseline parameters\n");
    for b in baselines::baselines(cfg) {
        let _ = writeln!(md, "- {}: {}", b.name, serde_json::to_string(&b.recon)?);
    }
    let _ = writeln!(md, "\n## Inputs\n");
    for s in &sources {
        let rel = s.strip_prefix(&layout.root).unwrap_or(s);
        let _ = writeln!(md, "- {}", rel.display());
    }
    write_text(&dir.join(MARKDOWN), &md)?;
    print!("{md}");
    Ok(())
}

pub fn read_toy_rows(path: &Path) -> Result<Vec<evaluate::ToyRow>> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "{} not found; run `evaluate` first",
            path.display()
        )));
    }
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<evaluate::ToyRow>, _>>()?;
    if rows.is_empty() {
        return Err(CliError::Data(format!("{} holds no rows", path.display())));
    }
    Ok(rows)
}

/// Verdicts for each toy case of one trial.
pub fn toy_checks(rows: &[evaluate::ToyRow]) -> Vec<Check> {
    let mut cases: BTreeMap<(usize, String), Vec<&evaluate::ToyRow>> = BTreeMap::new();
    for r in rows {
        cases.entry((r.trial, r.case.clone())).or_default().push(r);
    }
    let mut checks = Vec::new();
    for ((trial, case), px) in cases {
        let scope = format!("trial {trial}");
        let max_tv = px.iter().map(|r| r.tv).fold(0.0, f64::max);
        checks.push(Check {
            check: format!("{case}: per-pixel TV <= {TOY_TV_MAX}"),
            scope: scope.clone(),
            status: verdict(max_tv <= TOY_TV_MAX),
            detail: format!("max {max_tv:.4}"),
        });
        if px[0].angle == 1 {
            let (lo, hi) = TOY_MODE_RANGE;
            let masses: Vec<f64> = px
                .iter()
                .flat_map(|r| [r.mass_near_zero, r.mass_near_one])
                .collect();
            let ok = masses.iter().all(|m| (lo..=hi).contains(m));
            checks.push(Check {
                check: format!("{case}: both modes hold mass in [{lo}, {hi}]"),
                scope: scope.clone(),
                status: verdict(ok),
                detail: format!("{masses:.3?}"),
            });
        } else {
            let near: Vec<f64> = px.iter().map(|r| r.mass_near_truth).collect();
            let ok = near.iter().all(|m| *m >= TOY_NEAR_TRUTH_MIN);
            checks.push(Check {
                check: format!(
                    "{case}: mass within ±{} of truth >= {TOY_NEAR_TRUTH_MIN}",
                    evaluate::NEAR
                ),
                scope,
                status: verdict(ok),
                detail: format!("{near:.3?}"),
            });
        }
    }
    checks
}

fn toy(layout: &Layout, dir: &Path) -> Result<()> {
    let rows = read_toy_rows(&layout.evaluate().join(evaluate::TOY_ORACLE))?;
    fresh_dir(dir)?;
    let checks = toy_checks(&rows);
    write_checks(&dir.join(CHECKS), &checks)?;

    // Worst pixel per case, mean ± std over trials.
    let mut worst: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in &rows {
        let e = worst
            .entry(r.case.clone())
            .or_default()
            .entry(r.trial)
            .or_insert(0.0);
        *e = e.max(r.tv);
    }
    let bars = worst
        .iter()
        .map(|(case, per_trial)| {
            let values: Vec<f64> = per_trial.values().copied().collect();
            let s = Summary::of(&values)?;
            let angle = if case.ends_with("a0") {
                "angle 0"
            } else {
                "angle pi/2"
            };
            Ok(Bar {
                label: case.clone(),
                mean: s.mean,
                std: s.std,
                group: angle.to_string(),
                series: angle.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_text(
        &dir.join("toy_tv.svg"),
        &bar_chart(
            "Worst-pixel TV distance to the exact posterior",
            "TV",
            &bars,
        ),
    )?;

    let mut md = String::from(
        "# Toy posterior comparison\n\n| check | scope | status | values |\n|---|---|---|---|\n",
    );
    for c in &checks {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            c.check, c.scope, c.status, c.detail
        );
    }
    write_text(&dir.join(MARKDOWN), &md)?;
    print!("{md}");
    Ok(())
}
