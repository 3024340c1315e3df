//! Base and feature bundle computation.
//!
//! The base bundle holds the selected activities with their related classes,
//! every service/receiver/provider (and the plain classes they reach), the
//! resources of all those classes, and every asset and opaque payload. Each
//! remaining activity gets a feature bundle: its related classes and their
//! resources, minus whatever the base already holds. Feature bundles are not
//! deduplicated against one another, so two features may carry the same
//! plain class.

mod bundle;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{total_size, AppPackage, ClassKind, LaunchKind};
use crate::graphs::{ClosureIndex, GraphError};

pub use bundle::{
    class_digest, pack_bundle, resource_digest, unpack_bundle, Bundle, BundleArchive, BundleKind,
    BundleMeta,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecomposeError {
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("invalid whitelist: {0}")]
    InvalidWhitelist(String),
    #[error("activity `{0}` is already in the base bundle")]
    ActivityInBase(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("bundle member `{0}` does not exist in the package")]
    UnknownMember(String),
    #[error("malformed archive: {0}")]
    MalformedArchive(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Base,
    Feature(String),
}

/// Classes and resources forced into a bundle regardless of analysis.
/// Entries without a scope go to the base bundle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhiteList {
    #[serde(default)]
    pub classes: BTreeSet<String>,
    #[serde(default)]
    pub resources: BTreeSet<String>,
    #[serde(default)]
    pub scope: BTreeMap<String, Scope>,
}

impl WhiteList {
    fn scope_of(&self, entry: &str) -> &Scope {
        self.scope.get(entry).unwrap_or(&Scope::Base)
    }

    fn scoped<'a>(
        &'a self,
        entries: &'a BTreeSet<String>,
        scope: &'a Scope,
    ) -> impl Iterator<Item = &'a String> + 'a {
        entries.iter().filter(move |e| self.scope_of(e) == scope)
    }

    pub fn validate(&self, app: &AppPackage) -> Result<(), DecomposeError> {
        for class in &self.classes {
            match app.class_kind(class) {
                None => {
                    return Err(DecomposeError::InvalidWhitelist(format!(
                        "unknown class `{class}`"
                    )))
                }
                Some(ClassKind::Activity) => {
                    return Err(DecomposeError::InvalidWhitelist(format!(
                        "`{class}` is an activity; select it instead"
                    )))
                }
                Some(_) => {}
            }
        }
        for res in &self.resources {
            if !app.resources.contains_key(res) {
                return Err(DecomposeError::InvalidWhitelist(format!(
                    "unknown resource `{res}`"
                )));
            }
        }
        for (entry, scope) in &self.scope {
            if !self.classes.contains(entry) && !self.resources.contains(entry) {
                return Err(DecomposeError::InvalidWhitelist(format!(
                    "scope given for unlisted entry `{entry}`"
                )));
            }
            if let Scope::Feature(activity) = scope {
                if app.class_kind(activity) != Some(ClassKind::Activity) {
                    return Err(DecomposeError::InvalidWhitelist(format!(
                        "scope names unknown activity `{activity}`"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseBundle {
    pub classes: BTreeSet<String>,
    pub resources: BTreeSet<String>,
    pub assets: BTreeSet<String>,
    pub other: BTreeSet<String>,
    pub size_bytes: u64,
}

impl BaseBundle {
    pub fn recompute_size(&mut self, app: &AppPackage) {
        self.size_bytes = app.class_size(&self.classes)
            + app.resource_size(&self.resources)
            + self
                .assets
                .iter()
                .filter_map(|a| app.assets.get(a))
                .map(|a| a.size_bytes)
                .sum::<u64>()
            + self
                .other
                .iter()
                .filter_map(|o| app.other.get(o))
                .map(|o| o.size_bytes)
                .sum::<u64>();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBundle {
    pub activity: String,
    pub classes: BTreeSet<String>,
    pub resources: BTreeSet<String>,
    pub size_bytes: u64,
}

impl FeatureBundle {
    pub fn recompute_size(&mut self, app: &AppPackage) {
        self.size_bytes = app.class_size(&self.classes) + app.resource_size(&self.resources);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionPlan {
    pub app_id: String,
    pub version: u64,
    pub base_activities: BTreeSet<String>,
    pub whitelist: WhiteList,
    pub base: BaseBundle,
    pub features: BTreeMap<String, FeatureBundle>,
    /// Total size of the undecomposed package.
    pub original_size: u64,
}

impl DecompositionPlan {
    /// `1 - base / original`; zero for an empty package.
    pub fn saving_ratio(&self) -> f64 {
        saving_ratio(self.base.size_bytes, self.original_size)
    }

    /// The activity whose bundle holds the code running in `activity`'s
    /// foreground context, or `None` for base activities.
    pub fn feature_for(&self, activity: &str) -> Option<&FeatureBundle> {
        if self.base_activities.contains(activity) {
            None
        } else {
            self.features.get(activity)
        }
    }
}

pub fn saving_ratio(base_bytes: u64, original_bytes: u64) -> f64 {
    if original_bytes == 0 {
        0.0
    } else {
        1.0 - base_bytes as f64 / original_bytes as f64
    }
}

/// Version-tagged `plan.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub schema: u32,
    #[serde(flatten)]
    pub plan: DecompositionPlan,
    pub base_size: u64,
    pub saving_ratio: f64,
}

impl PlanDocument {
    pub fn new(plan: DecompositionPlan) -> Self {
        PlanDocument {
            schema: 1,
            base_size: plan.base.size_bytes,
            saving_ratio: plan.saving_ratio(),
            plan,
        }
    }
}

/// Decomposition over one package with its closures computed once.
pub struct Decomposer<'a> {
    app: &'a AppPackage,
    index: ClosureIndex,
}

impl<'a> Decomposer<'a> {
    pub fn new(app: &'a AppPackage) -> Self {
        Decomposer {
            app,
            index: ClosureIndex::new(app),
        }
    }

    pub fn index(&self) -> &ClosureIndex {
        &self.index
    }

    pub fn validate_selection(&self, sel: &BTreeSet<String>) -> Result<(), DecomposeError> {
        for a in sel {
            if self.app.class_kind(a) != Some(ClassKind::Activity) {
                return Err(DecomposeError::InvalidSelection(format!(
                    "`{a}` is not an activity"
                )));
            }
        }
        let launcher = &self.app.manifest.launcher_activity;
        if !sel.contains(launcher) {
            return Err(DecomposeError::InvalidSelection(format!(
                "launcher `{launcher}` must be selected"
            )));
        }
        for w in self.app.manifest.welcome_activities() {
            if !sel.contains(w) {
                return Err(DecomposeError::InvalidSelection(format!(
                    "welcome activity `{w}` must be selected"
                )));
            }
        }
        Ok(())
    }

    pub fn base_bundle(
        &self,
        sel: &BTreeSet<String>,
        whitelist: &WhiteList,
    ) -> Result<BaseBundle, DecomposeError> {
        self.validate_selection(sel)?;
        whitelist.validate(self.app)?;
        let mut classes = BTreeSet::new();
        for a in sel {
            classes.extend(self.index.activity_classes(a)?.iter().cloned());
        }
        for (_, reached) in self.index.component_classes() {
            classes.extend(reached.iter().cloned());
        }
        classes.extend(whitelist.scoped(&whitelist.classes, &Scope::Base).cloned());
        let mut resources = self.index.resources_of_classes(&classes);
        resources.extend(
            self.index
                .resource_closure(whitelist.scoped(&whitelist.resources, &Scope::Base)),
        );
        let mut base = BaseBundle {
            classes,
            resources,
            assets: self.app.assets.keys().cloned().collect(),
            other: self.app.other.keys().cloned().collect(),
            size_bytes: 0,
        };
        base.recompute_size(self.app);
        Ok(base)
    }

    pub fn feature_bundle(
        &self,
        base: &BaseBundle,
        activity: &str,
        whitelist: &WhiteList,
    ) -> Result<FeatureBundle, DecomposeError> {
        let related = self.index.activity_classes(activity)?;
        if base.classes.contains(activity) {
            return Err(DecomposeError::ActivityInBase(activity.to_string()));
        }
        let scope = Scope::Feature(activity.to_string());
        let classes: BTreeSet<String> = related
            .iter()
            .chain(whitelist.scoped(&whitelist.classes, &scope))
            .filter(|c| !base.classes.contains(*c))
            .cloned()
            .collect();
        let mut resources = self.index.resources_of_classes(&classes);
        resources.extend(
            self.index
                .resource_closure(whitelist.scoped(&whitelist.resources, &scope)),
        );
        resources.retain(|r| !base.resources.contains(r));
        let mut feature = FeatureBundle {
            activity: activity.to_string(),
            classes,
            resources,
            size_bytes: 0,
        };
        feature.recompute_size(self.app);
        Ok(feature)
    }

    pub fn decompose(
        &self,
        sel: &BTreeSet<String>,
        whitelist: &WhiteList,
    ) -> Result<DecompositionPlan, DecomposeError> {
        let base = self.base_bundle(sel, whitelist)?;
        for scope in whitelist.scope.values() {
            if let Scope::Feature(a) = scope {
                if sel.contains(a) {
                    return Err(DecomposeError::InvalidWhitelist(format!(
                        "`{a}` is selected into the base and has no feature bundle"
                    )));
                }
            }
        }
        let mut features = BTreeMap::new();
        for activity in self.app.activities() {
            if sel.contains(&activity) {
                continue;
            }
            let feature = self.feature_bundle(&base, &activity, whitelist)?;
            features.insert(activity, feature);
        }
        Ok(DecompositionPlan {
            app_id: self.app.app_id.clone(),
            version: self.app.version,
            base_activities: sel.clone(),
            whitelist: whitelist.clone(),
            base,
            features,
            original_size: total_size(self.app),
        })
    }
}

pub fn compute_base_bundle(
    app: &AppPackage,
    sel: &BTreeSet<String>,
    whitelist: &WhiteList,
) -> Result<BaseBundle, DecomposeError> {
    Decomposer::new(app).base_bundle(sel, whitelist)
}

pub fn compute_feature_bundle(
    app: &AppPackage,
    base: &BaseBundle,
    activity: &str,
) -> Result<FeatureBundle, DecomposeError> {
    Decomposer::new(app).feature_bundle(base, activity, &WhiteList::default())
}

pub fn decompose(
    app: &AppPackage,
    sel: &BTreeSet<String>,
    whitelist: &WhiteList,
) -> Result<DecompositionPlan, DecomposeError> {
    Decomposer::new(app).decompose(sel, whitelist)
}

/// Marks every explicit launch of an activity outside the base selection as
/// hooked, so the runtime can fetch its bundle first. Implicit launches are
/// resolved at run time and stay untouched.
pub fn rewrite_launch_sites(app: &AppPackage, plan: &DecompositionPlan) -> AppPackage {
    let mut out = app.clone();
    for class in out.classes.values_mut() {
        for method in &mut class.methods {
            for site in &mut method.launches {
                if let LaunchKind::Explicit { target } = &site.kind {
                    if !plan.base_activities.contains(target) {
                        site.hooked = true;
                    }
                }
            }
        }
    }
    out
}
