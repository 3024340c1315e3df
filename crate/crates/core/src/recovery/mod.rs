//! Replay-driven repair of a decomposition.
//!
//! Static analysis misses dynamic calls, so a fresh decomposition can leave
//! classes and resources out of the bundles that need them. Recovery replays
//! scripts against the bundles in a simulator, and each faulting run names
//! exactly one missing item, which is added to the bundle of the activity
//! that was in the foreground. Scripts targeting base activities run first.
//!
//! The simulator is deliberately strict: while activity `a` is in the
//! foreground only the base bundle and `a`'s own feature bundle are visible.
//! A converged feature bundle therefore works no matter which other features
//! happen to be installed.

mod script;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{AppPackage, ClassUnit, LaunchSite, Manifest, ResourceItem};
use crate::decomposer::DecompositionPlan;
use crate::exec::{self, ExecError, ItemKind, MissingItem, Opened, Platform, TraceEvent};
use crate::vruntime::{resolve_intent, IntentObj, Registry};

pub use crate::exec::RunTrace;
pub use script::{parse_script, serialize_script, Action, ReplayScript};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecoveryError {
    #[error("malformed script at line {line}: {reason}")]
    MalformedScript { line: usize, reason: String },
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error("script `{0}` finished without reaching its target")]
    TargetNotReached(String),
    #[error("recovery exceeded {bound} iterations")]
    NonTermination { bound: usize },
}

impl From<ExecError<RecoveryError>> for RecoveryError {
    fn from(e: ExecError<RecoveryError>) -> Self {
        match e {
            ExecError::InvalidScript(msg) => RecoveryError::InvalidScript(msg),
            ExecError::Platform(e) => e,
        }
    }
}

struct ReplayPlatform<'a> {
    app: &'a AppPackage,
    plan: &'a DecompositionPlan,
    registry: Registry,
    stack: Vec<String>,
}

impl ReplayPlatform<'_> {
    fn visible(&self, context: &str, class: bool, name: &str) -> bool {
        let (in_base, feature) = if class {
            (
                self.plan.base.classes.contains(name),
                self.plan
                    .feature_for(context)
                    .is_some_and(|f| f.classes.contains(name)),
            )
        } else {
            (
                self.plan.base.resources.contains(name),
                self.plan
                    .feature_for(context)
                    .is_some_and(|f| f.resources.contains(name)),
            )
        };
        in_base || feature
    }
}

impl Platform for ReplayPlatform<'_> {
    type Error = RecoveryError;

    fn class(&self, context: &str, name: &str) -> Option<&ClassUnit> {
        self.visible(context, true, name)
            .then(|| self.app.classes.get(name))
            .flatten()
    }

    fn resource(&self, context: &str, id: &str) -> Option<&ResourceItem> {
        self.visible(context, false, id)
            .then(|| self.app.resources.get(id))
            .flatten()
    }

    fn manifest(&self) -> &Manifest {
        &self.app.manifest
    }

    fn top(&self) -> Option<&str> {
        self.stack.last().map(String::as_str)
    }

    fn open(&mut self, _from: &str, site: &LaunchSite) -> Result<Opened, RecoveryError> {
        resolve_intent(&self.registry, &IntentObj::from(&site.kind))
            .map(Opened::Target)
            .map_err(|e| RecoveryError::InvalidScript(e.to_string()))
    }

    fn push(&mut self, activity: &str) -> Result<(), RecoveryError> {
        self.stack.push(activity.to_string());
        Ok(())
    }

    fn pop(&mut self) {
        self.stack.pop();
    }

    fn record(&mut self, _events: Vec<TraceEvent>) {}
}

/// Replays `script` against the plan's bundles with the original code.
pub fn execute_script(
    app: &AppPackage,
    plan: &DecompositionPlan,
    script: &ReplayScript,
) -> Result<RunTrace, RecoveryError> {
    let mut platform = ReplayPlatform {
        app,
        plan,
        registry: Registry::from_manifest(&app.manifest),
        stack: Vec::new(),
    };
    Ok(exec::run_script(&mut platform, script)?)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRecovery {
    /// `base` or the feature activity.
    pub bundle: String,
    pub iterations: usize,
    pub added: Vec<MissingItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRecovery {
    pub name: String,
    pub target: String,
    pub iterations: usize,
}

/// Version-tagged `recovery-report.json` document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub schema: u32,
    pub app_id: String,
    pub total_iterations: usize,
    pub bundles: Vec<BundleRecovery>,
    pub scripts: Vec<ScriptRecovery>,
}

pub const BASE_BUNDLE: &str = "base";

fn add_item(plan: &mut DecompositionPlan, app: &AppPackage, item: &MissingItem, bundle: &str) {
    let name = item.name.clone();
    if bundle == BASE_BUNDLE {
        match item.kind {
            ItemKind::Class => {
                plan.base.classes.insert(name.clone());
            }
            ItemKind::Resource => {
                plan.base.resources.insert(name.clone());
            }
        }
        plan.base.recompute_size(app);
        for feature in plan.features.values_mut() {
            let removed = match item.kind {
                ItemKind::Class => feature.classes.remove(&name),
                ItemKind::Resource => feature.resources.remove(&name),
            };
            if removed {
                feature.recompute_size(app);
            }
        }
    } else if let Some(feature) = plan.features.get_mut(bundle) {
        match item.kind {
            ItemKind::Class => feature.classes.insert(name),
            ItemKind::Resource => feature.resources.insert(name),
        };
        feature.recompute_size(app);
    }
}

/// Replays every script until it runs clean, adding one missing item per
/// faulting run.
pub fn recover(
    app: &AppPackage,
    plan: &DecompositionPlan,
    scripts: &[ReplayScript],
) -> Result<(DecompositionPlan, RecoveryReport), RecoveryError> {
    let mut plan = plan.clone();
    let bound = app.classes.len() + app.resources.len();
    let mut bundles: BTreeMap<String, BundleRecovery> = std::iter::once(BASE_BUNDLE.to_string())
        .chain(plan.features.keys().cloned())
        .map(|b| {
            (
                b.clone(),
                BundleRecovery {
                    bundle: b,
                    ..BundleRecovery::default()
                },
            )
        })
        .collect();

    let mut ordered: Vec<&ReplayScript> = scripts.iter().collect();
    ordered.sort_by_key(|s| !plan.base_activities.contains(&s.target_activity));

    let mut total = 0;
    let mut script_reports = Vec::new();
    let mut seen: BTreeSet<(ItemKind, String, String)> = BTreeSet::new();
    for script in ordered {
        let mut iterations = 0;
        loop {
            let trace = execute_script(app, &plan, script)?;
            let Some(item) = trace.fault else {
                if !trace.reached_target {
                    return Err(RecoveryError::TargetNotReached(script.name.clone()));
                }
                break;
            };
            total += 1;
            iterations += 1;
            let context = trace.fault_context.unwrap_or_default();
            let bundle = if plan.feature_for(&context).is_some() {
                context
            } else {
                BASE_BUNDLE.to_string()
            };
            if total > bound || !seen.insert((item.kind, item.name.clone(), bundle.clone())) {
                return Err(RecoveryError::NonTermination { bound });
            }
            log::debug!("{}: adding {:?} `{}` to {bundle}", script.name, item.kind, item.name);
            add_item(&mut plan, app, &item, &bundle);
            let entry = bundles.entry(bundle.clone()).or_insert_with(|| BundleRecovery {
                bundle,
                ..BundleRecovery::default()
            });
            entry.iterations += 1;
            entry.added.push(item);
        }
        script_reports.push(ScriptRecovery {
            name: script.name.clone(),
            target: script.target_activity.clone(),
            iterations,
        });
    }

    let report = RecoveryReport {
        schema: 1,
        app_id: app.app_id.clone(),
        total_iterations: total,
        bundles: bundles.into_values().collect(),
        scripts: script_reports,
    };
    Ok((plan, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::app_model::MethodId;
    use crate::decomposer::{decompose, WhiteList};
    use crate::fixtures;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn worked_plan() -> (AppPackage, DecompositionPlan) {
        let app = fixtures::worked_example();
        let plan = decompose(&app, &set(&["A1", "A2"]), &WhiteList::default()).unwrap();
        (app, plan)
    }

    #[test]
    fn launch_faults_on_hidden_class() {
        let (app, plan) = worked_plan();
        let trace = execute_script(&app, &plan, &fixtures::worked_example_scripts()[0]).unwrap();
        assert_eq!(trace.fault, Some(MissingItem::class("C2", "C0.m")));
        assert_eq!(trace.fault_context.as_deref(), Some("A1"));
        assert!(!trace.reached_target);
    }

    #[test]
    fn recovery_adds_hidden_class_to_base_once() {
        let (app, plan) = worked_plan();
        let (recovered, report) = recover(&app, &plan, &fixtures::worked_example_scripts()).unwrap();
        assert_eq!(report.total_iterations, 1);
        assert_eq!(recovered.base.classes, set(&["A1", "A2", "C0", "C2", "S0"]));
        assert_eq!(recovered.base.size_bytes, 3_150);
        assert_eq!(recovered.features, plan.features);
        let base = report.bundles.iter().find(|b| b.bundle == BASE_BUNDLE).unwrap();
        assert_eq!(base.iterations, 1);
        assert_eq!(base.added, vec![MissingItem::class("C2", "C0.m")]);
        for script in fixtures::worked_example_scripts() {
            let trace = execute_script(&app, &recovered, &script).unwrap();
            assert!(trace.reached_target && trace.fault.is_none(), "{}", script.name);
        }
    }

    #[test]
    fn no_hidden_dependencies_means_no_iterations() {
        let app = fixtures::hidden_chain(0);
        let plan = decompose(&app, &set(&["Main"]), &WhiteList::default()).unwrap();
        let script = ReplayScript::new("launch", "Main", vec![Action::Launch]);
        let (recovered, report) = recover(&app, &plan, &[script]).unwrap();
        assert_eq!(report.total_iterations, 0);
        assert_eq!(recovered, plan);
    }

    #[test]
    fn k_hidden_classes_take_k_iterations() {
        for k in 1..=8 {
            let app = fixtures::hidden_chain(k);
            let plan = decompose(&app, &set(&["Main"]), &WhiteList::default()).unwrap();
            let script = ReplayScript::new("launch", "Main", vec![Action::Launch]);
            let (_, report) = recover(&app, &plan, &[script]).unwrap();
            assert_eq!(report.scripts[0].iterations, k);
        }
    }

    #[test]
    fn tapped_method_reports_missing_resource() {
        let mut app = fixtures::worked_example();
        app.resources
            .insert("raw/R9".into(), ResourceItem::new("raw/R9", 9));
        app.classes.get_mut("A2").unwrap().methods.push(
            crate::app_model::MethodDef::new("onShare").refer("raw/R9"),
        );
        app.validate().unwrap();
        let mut plan = decompose(&app, &set(&["A1", "A2"]), &WhiteList::default()).unwrap();
        plan.base.classes.insert("C2".into());
        // The static closure pulled R9 in; take it back out to model a
        // resource only reached at run time.
        plan.base.resources.remove("raw/R9");
        let script = ReplayScript::new(
            "share",
            "A2",
            vec![
                Action::Launch,
                Action::Navigate(0),
                Action::Tap(MethodId::new("A2", "onShare")),
            ],
        );
        let trace = execute_script(&app, &plan, &script).unwrap();
        assert_eq!(trace.fault, Some(MissingItem::resource("raw/R9", "A2.onShare")));
    }

    #[test]
    fn bad_navigation_index_is_invalid() {
        let (app, mut plan) = worked_plan();
        plan.base.classes.insert("C2".into());
        let script = ReplayScript::new("x", "A3", vec![Action::Launch, Action::Navigate(7)]);
        assert!(matches!(
            execute_script(&app, &plan, &script),
            Err(RecoveryError::InvalidScript(_))
        ));
    }

    #[test]
    fn feature_faults_go_to_the_feature() {
        // A3 reaches a hidden class that A1 never touches.
        let mut app = fixtures::worked_example();
        app.classes.insert(
            "C7".into(),
            ClassUnit::new("C7", crate::app_model::ClassKind::Pojo, 70)
                .with_method(crate::app_model::MethodDef::new("go")),
        );
        app.classes.get_mut("A3").unwrap().methods[0]
            .calls
            .push(crate::app_model::CallSite {
                target: MethodId::new("C7", "go"),
                dynamic: true,
            });
        app.validate().unwrap();
        let plan = decompose(&app, &set(&["A1", "A2"]), &WhiteList::default()).unwrap();
        let (recovered, report) = recover(&app, &plan, &fixtures::worked_example_scripts()).unwrap();
        assert_eq!(report.total_iterations, 2);
        assert!(recovered.base.classes.contains("C2"));
        assert!(recovered.features["A3"].classes.contains("C7"));
        assert!(!recovered.base.classes.contains("C7"));
        let a3 = report.bundles.iter().find(|b| b.bundle == "A3").unwrap();
        assert_eq!(a3.iterations, 1);
    }

    #[test]
    fn script_that_never_reaches_target_is_an_error() {
        let (app, plan) = worked_plan();
        let script = ReplayScript::new("x", "A3", vec![Action::Launch]);
        let mut full = plan.clone();
        full.base.classes.insert("C2".into());
        assert_eq!(
            recover(&app, &full, &[script]),
            Err(RecoveryError::TargetNotReached("x".into()))
        );
    }
}
