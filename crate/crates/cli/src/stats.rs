use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use bundlesplit::recovery::RecoveryReport;
use serde::Serialize;

use crate::commands::{load_plan, PLAN_FILE, REPORT_FILE};
use crate::{CmdResult, Failure, StatsArgs};

/// Nearest-rank summary of a sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    pub count: usize,
    pub min: Option<f64>,
    pub p10: Option<f64>,
    pub p50: Option<f64>,
    pub p90: Option<f64>,
    pub max: Option<f64>,
}

/// Nearest-rank percentile of sorted data.
fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

impl Distribution {
    pub fn of(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Distribution {
            count: values.len(),
            min: values.first().copied(),
            p10: nearest_rank(&values, 10.0),
            p50: nearest_rank(&values, 50.0),
            p90: nearest_rank(&values, 90.0),
            max: values.last().copied(),
        }
    }
}

#[derive(Debug, Serialize)]
struct CorpusStats {
    schema: u32,
    plans: usize,
    median_saving_ratio: Option<f64>,
    saving_ratio: Distribution,
    base_bundle_bytes: Distribution,
    feature_bundle_bytes: Distribution,
    recovery_iterations_per_bundle: Distribution,
    /// Share of recovered bundles that needed at most 10 iterations.
    bundles_within_10_iterations: Option<f64>,
}

fn plan_dirs(root: &Path, out: &mut Vec<PathBuf>) -> Result<(), Failure> {
    if root.join(PLAN_FILE).is_file() {
        out.push(root.to_path_buf());
    }
    let mut children: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    children.sort();
    for child in children {
        plan_dirs(&child, out)?;
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> CmdResult {
    let mut dirs = Vec::new();
    plan_dirs(&args.plans, &mut dirs)?;
    let mut savings = Vec::new();
    let mut bases = Vec::new();
    let mut features = Vec::new();
    let mut iterations = Vec::new();
    for dir in &dirs {
        let plan = load_plan(dir)?;
        savings.push(plan.saving_ratio());
        bases.push(plan.base.size_bytes as f64);
        features.extend(plan.features.values().map(|f| f.size_bytes as f64));
        let report_path = dir.join(REPORT_FILE);
        if report_path.is_file() {
            let report: RecoveryReport = serde_json::from_slice(
                &fs::read(&report_path).with_context(|| report_path.display().to_string())?,
            )
            .with_context(|| format!("parsing {}", report_path.display()))?;
            iterations.extend(report.bundles.iter().map(|b| b.iterations as f64));
        }
    }
    let within = (!iterations.is_empty())
        .then(|| iterations.iter().filter(|&&i| i <= 10.0).count() as f64 / iterations.len() as f64);
    let saving_ratio = Distribution::of(savings);
    let stats = CorpusStats {
        schema: 1,
        plans: dirs.len(),
        median_saving_ratio: saving_ratio.p50,
        saving_ratio,
        base_bundle_bytes: Distribution::of(bases),
        feature_bundle_bytes: Distribution::of(features),
        recovery_iterations_per_bundle: Distribution::of(iterations),
        bundles_within_10_iterations: within,
    };
    let json = serde_json::to_string_pretty(&stats).context("encoding stats")?;
    match &args.out {
        Some(path) => fs::write(path, format!("{json}\n")).with_context(|| path.display().to_string())?,
        None => println!("{json}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let d = Distribution::of((1..=10).map(f64::from).collect());
        assert_eq!((d.p10, d.p50, d.p90), (Some(1.0), Some(5.0), Some(9.0)));
        let one = Distribution::of(vec![0.4]);
        assert_eq!((one.p10, one.p50, one.p90), (Some(0.4), Some(0.4), Some(0.4)));
        let none = Distribution::of(Vec::new());
        assert_eq!(none.count, 0);
        assert_eq!(none.p50, None);
    }
}
