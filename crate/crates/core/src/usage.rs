//! Usage logs and the metrics derived from them.
//!
//! Logs are CSV with the header `timestamp,user_id,app_id,activity`.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::AppPackage;

#[derive(Debug, Error)]
pub enum UsageError {
    #[error("malformed usage log: {0}")]
    MalformedLog(String),
    #[error("no visits to declared activities of `{0}`")]
    NoVisits(String),
    #[error("coverage must be in (0, 1], got {0}")]
    InvalidCoverage(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub timestamp: i64,
    pub user_id: String,
    pub app_id: String,
    pub activity: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageDataset {
    pub records: Vec<UsageRecord>,
}

const HEADER: [&str; 4] = ["timestamp", "user_id", "app_id", "activity"];

impl UsageDataset {
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, UsageError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| UsageError::MalformedLog(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != HEADER {
            return Err(UsageError::MalformedLog(format!(
                "expected header `{}`",
                HEADER.join(",")
            )));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize::<UsageRecord>() {
            let record = row.map_err(|e| UsageError::MalformedLog(e.to_string()))?;
            if record.activity.is_empty() {
                return Err(UsageError::MalformedLog("empty activity".into()));
            }
            records.push(record);
        }
        Ok(UsageDataset { records })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), UsageError> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        let err = |e: csv::Error| UsageError::MalformedLog(e.to_string());
        wtr.write_record(HEADER).map_err(err)?;
        for r in &self.records {
            wtr.serialize(r).map_err(err)?;
        }
        wtr.flush().map_err(|e| UsageError::MalformedLog(e.to_string()))
    }

    /// Records of `app` naming a declared activity.
    fn visits<'a>(&'a self, app: &'a AppPackage) -> impl Iterator<Item = &'a UsageRecord> + 'a {
        let declared = app.activities();
        let mut warned = BTreeSet::new();
        self.records
            .iter()
            .filter(move |r| r.app_id == app.app_id)
            .filter(move |r| {
                let known = declared.contains(&r.activity);
                if !known && warned.insert(r.activity.clone()) {
                    log::warn!("{}: ignoring undeclared activity `{}`", app.app_id, r.activity);
                }
                known
            })
    }
}

/// Share of declared activities visited at least once.
pub fn feature_usage_ratio(ds: &UsageDataset, app: &AppPackage) -> f64 {
    let declared = app.activities().len();
    if declared == 0 {
        return 0.0;
    }
    let visited: BTreeSet<&str> = ds.visits(app).map(|r| r.activity.as_str()).collect();
    visited.len() as f64 / declared as f64
}

/// Raw visits per declared activity.
pub fn visit_counts(ds: &UsageDataset, app: &AppPackage) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in ds.visits(app) {
        *counts.entry(r.activity.clone()).or_insert(0) += 1;
    }
    counts
}

/// Distinct users per visited activity.
pub fn user_counts(ds: &UsageDataset, app: &AppPackage) -> BTreeMap<String, u64> {
    let mut users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in ds.visits(app) {
        users.entry(&r.activity).or_default().insert(&r.user_id);
    }
    users
        .into_iter()
        .map(|(a, u)| (a.to_string(), u.len() as u64))
        .collect()
}

/// Distinct users of `app` in the log.
pub fn distinct_users(ds: &UsageDataset, app: &AppPackage) -> usize {
    ds.visits(app)
        .map(|r| r.user_id.as_str())
        .collect::<BTreeSet<_>>()
        .len()
}

/// Shannon entropy (nats) of the distribution proportional to `counts`.
/// Zero counts are ignored; an all-zero input has entropy 0.
pub fn entropy_from_counts(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let e: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum();
    e.max(0.0)
}

/// Entropy of visits over activities, weighting each activity by how many
/// distinct users opened it.
pub fn usage_entropy(ds: &UsageDataset, app: &AppPackage) -> Result<f64, UsageError> {
    let counts: Vec<u64> = user_counts(ds, app).into_values().collect();
    if counts.is_empty() {
        return Err(UsageError::NoVisits(app.app_id.clone()));
    }
    Ok(entropy_from_counts(&counts))
}

/// Most-visited activities covering `coverage` of all visits, plus the
/// launcher and welcome activities.
pub fn select_base_activities(
    ds: &UsageDataset,
    app: &AppPackage,
    coverage: f64,
) -> Result<BTreeSet<String>, UsageError> {
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(UsageError::InvalidCoverage(coverage));
    }
    let mut ranked: Vec<(String, u64)> = visit_counts(ds, app).into_iter().collect();
    ranked.sort_by(|(a, x), (b, y)| y.cmp(x).then_with(|| a.cmp(b)));
    let total: u64 = ranked.iter().map(|(_, c)| c).sum();

    let mut selected: BTreeSet<String> = app.welcome_activities();
    selected.insert(app.manifest.launcher_activity.clone());
    let mut cumulative = 0u64;
    for (activity, count) in ranked {
        if total == 0 || cumulative as f64 / total as f64 >= coverage {
            break;
        }
        cumulative += count;
        selected.insert(activity);
    }
    Ok(selected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::{ActivityDecl, ClassKind, ClassUnit, Manifest, MethodDef};

    fn app(n: usize) -> AppPackage {
        let names: Vec<String> = (0..n).map(|i| format!("A{i:02}")).collect();
        let mut activities: Vec<ActivityDecl> = names.iter().map(ActivityDecl::internal).collect();
        activities[n - 1].welcome = true;
        AppPackage::new(
            "u.app",
            1,
            Manifest {
                launcher_activity: names[0].clone(),
                activities,
                other_components: Vec::new(),
            },
            names
                .iter()
                .map(|a| ClassUnit::new(a, ClassKind::Activity, 1).with_method(MethodDef::new("onCreate")))
                .collect(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
        )
        .unwrap()
    }

    fn visits(pairs: &[(&str, &str)]) -> UsageDataset {
        UsageDataset {
            records: pairs
                .iter()
                .enumerate()
                .map(|(i, (user, activity))| UsageRecord {
                    timestamp: i as i64,
                    user_id: user.to_string(),
                    app_id: "u.app".into(),
                    activity: activity.to_string(),
                })
                .collect(),
        }
    }

    #[test]
    fn ratio_examples() {
        let app = app(15);
        let ds = visits(&[("u", "A00"), ("u", "A03"), ("v", "A03"), ("v", "A07")]);
        assert!((feature_usage_ratio(&ds, &app) - 0.2).abs() < 1e-15);
        assert_eq!(feature_usage_ratio(&UsageDataset::default(), &app), 0.0);
        let all: Vec<(&str, String)> = (0..15).map(|i| ("u", format!("A{i:02}"))).collect();
        let all: Vec<(&str, &str)> = all.iter().map(|(u, a)| (*u, a.as_str())).collect();
        assert_eq!(feature_usage_ratio(&visits(&all), &app), 1.0);
    }

    #[test]
    fn entropy_examples() {
        let app = app(4);
        let uniform = visits(&[("u", "A00"), ("v", "A01"), ("w", "A02"), ("x", "A03")]);
        assert!((usage_entropy(&uniform, &app).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(usage_entropy(&visits(&[("u", "A01"), ("u", "A01")]), &app).unwrap(), 0.0);
        let skew = visits(&[("u", "A00"), ("v", "A00"), ("u", "A01"), ("w", "A02"), ("w", "A02")]);
        assert!((usage_entropy(&skew, &app).unwrap() - 1.039720770839918).abs() < 1e-12);
        assert!(matches!(
            usage_entropy(&UsageDataset::default(), &app),
            Err(UsageError::NoVisits(_))
        ));
    }

    #[test]
    fn selection_examples() {
        let app = app(4);
        let mut pairs = vec![("u", "A01"); 8];
        pairs.push(("u", "A02"));
        pairs.push(("u", "A00"));
        let ds = visits(&pairs);
        let sel = select_base_activities(&ds, &app, 0.8).unwrap();
        assert_eq!(sel, ["A00", "A01", "A03"].iter().map(|s| s.to_string()).collect());
        let all = select_base_activities(&ds, &app, 1.0).unwrap();
        assert_eq!(all.len(), 4);
        let empty = select_base_activities(&UsageDataset::default(), &app, 0.5).unwrap();
        assert_eq!(empty, ["A00", "A03"].iter().map(|s| s.to_string()).collect());
        assert!(select_base_activities(&ds, &app, 0.0).is_err());
    }

    #[test]
    fn csv_roundtrip_and_header_check() {
        let ds = visits(&[("u", "A00"), ("v", "A01")]);
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"timestamp,user_id,app_id,activity\n"));
        assert_eq!(UsageDataset::read_csv(buf.as_slice()).unwrap(), ds);
        assert!(UsageDataset::read_csv(&b"a,b,c,d\n1,u,x,A\n"[..]).is_err());
    }

    #[test]
    fn undeclared_activities_are_ignored() {
        let app = app(2);
        let ds = visits(&[("u", "A00"), ("u", "Ghost")]);
        assert_eq!(user_counts(&ds, &app).len(), 1);
        assert_eq!(distinct_users(&ds, &app), 1);
    }
}
