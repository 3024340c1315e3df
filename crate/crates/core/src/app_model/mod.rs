//! Abstract application package.
//!
//! An [`AppPackage`] holds compiled classes (activities, other components and
//! plain classes), identifier-addressed resources, assets and opaque payloads.
//! Payload contents are never modeled; only `size_bytes` is carried.
//!
//! Packages are validated on construction, so every other module can assume
//! that call targets, resource references and manifest declarations resolve.

pub(crate) mod archive;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use archive::{parse_package, serialize_package};

/// Entry method run when an activity is created.
pub const ENTRY_METHOD: &str = "onCreate";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PackageError {
    #[error("malformed archive: {0}")]
    MalformedArchive(String),
    #[error("schema violation at `{entity}`: {reason}")]
    SchemaViolation { entity: String, reason: String },
}

impl PackageError {
    fn violation(entity: impl Into<String>, reason: impl Into<String>) -> Self {
        PackageError::SchemaViolation {
            entity: entity.into(),
            reason: reason.into(),
        }
    }
}

/// Fully qualified method identifier, `<class>.<method>`.
///
/// Class names may themselves contain dots; the method name is whatever
/// follows the last one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodId(String);

impl MethodId {
    pub fn new(class: &str, method: &str) -> Self {
        MethodId(format!("{class}.{method}"))
    }

    /// Parses `<class>.<method>`; both halves must be non-empty.
    pub fn parse(s: &str) -> Option<Self> {
        let (class, method) = s.rsplit_once('.')?;
        if class.is_empty() || method.is_empty() {
            return None;
        }
        Some(MethodId(s.to_string()))
    }

    pub fn class(&self) -> &str {
        self.0.rsplit_once('.').map_or("", |(c, _)| c)
    }

    pub fn method(&self) -> &str {
        self.0.rsplit_once('.').map_or(self.0.as_str(), |(_, m)| m)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassKind {
    Activity,
    Service,
    BroadcastReceiver,
    ContentProvider,
    Pojo,
}

impl ClassKind {
    /// Services, broadcast receivers and content providers.
    pub fn is_component(self) -> bool {
        matches!(
            self,
            ClassKind::Service | ClassKind::BroadcastReceiver | ClassKind::ContentProvider
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ComponentKind {
    Service,
    BroadcastReceiver,
    ContentProvider,
}

impl From<ComponentKind> for ClassKind {
    fn from(kind: ComponentKind) -> Self {
        match kind {
            ComponentKind::Service => ClassKind::Service,
            ComponentKind::BroadcastReceiver => ClassKind::BroadcastReceiver,
            ComponentKind::ContentProvider => ClassKind::ContentProvider,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentFilter {
    pub action: String,
    #[serde(default)]
    pub categories: BTreeSet<String>,
}

impl IntentFilter {
    /// Equal action and every requested category declared by the filter.
    pub fn matches(&self, action: &str, categories: &BTreeSet<String>) -> bool {
        self.action == action && categories.is_subset(&self.categories)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityDecl {
    pub class_name: String,
    #[serde(default)]
    pub intent_filters: Vec<IntentFilter>,
    #[serde(default)]
    pub welcome: bool,
}

impl ActivityDecl {
    pub fn internal(class_name: impl Into<String>) -> Self {
        ActivityDecl {
            class_name: class_name.into(),
            intent_filters: Vec::new(),
            welcome: false,
        }
    }

    pub fn matches(&self, action: &str, categories: &BTreeSet<String>) -> bool {
        self.intent_filters
            .iter()
            .any(|f| f.matches(action, categories))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDecl {
    pub class_name: String,
    pub kind: ComponentKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub launcher_activity: String,
    pub activities: Vec<ActivityDecl>,
    #[serde(default)]
    pub other_components: Vec<ComponentDecl>,
}

impl Manifest {
    pub fn activity(&self, class_name: &str) -> Option<&ActivityDecl> {
        self.activities.iter().find(|a| a.class_name == class_name)
    }

    /// Welcome activities in declaration order.
    pub fn welcome_activities(&self) -> impl Iterator<Item = &str> {
        self.activities
            .iter()
            .filter(|a| a.welcome)
            .map(|a| a.class_name.as_str())
    }

    fn normalize(&mut self) {
        self.activities
            .sort_by(|a, b| a.class_name.cmp(&b.class_name));
        self.other_components
            .sort_by(|a, b| a.class_name.cmp(&b.class_name));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSite {
    pub target: MethodId,
    /// Invisible to static analysis (reflection and the like).
    #[serde(default)]
    pub dynamic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LaunchKind {
    Explicit {
        target: String,
    },
    Implicit {
        action: String,
        #[serde(default)]
        categories: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchSite {
    #[serde(flatten)]
    pub kind: LaunchKind,
    #[serde(default)]
    pub hooked: bool,
}

impl LaunchSite {
    pub fn explicit(target: impl Into<String>) -> Self {
        LaunchSite {
            kind: LaunchKind::Explicit {
                target: target.into(),
            },
            hooked: false,
        }
    }

    pub fn implicit<I, S>(action: impl Into<String>, categories: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        LaunchSite {
            kind: LaunchKind::Implicit {
                action: action.into(),
                categories: categories.into_iter().map(Into::into).collect(),
            },
            hooked: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodDef {
    pub name: String,
    #[serde(default)]
    pub calls: Vec<CallSite>,
    #[serde(default)]
    pub resource_refs: Vec<String>,
    #[serde(default)]
    pub launches: Vec<LaunchSite>,
}

impl MethodDef {
    pub fn new(name: impl Into<String>) -> Self {
        MethodDef {
            name: name.into(),
            calls: Vec::new(),
            resource_refs: Vec::new(),
            launches: Vec::new(),
        }
    }

    pub fn call(mut self, class: &str, method: &str) -> Self {
        self.calls.push(CallSite {
            target: MethodId::new(class, method),
            dynamic: false,
        });
        self
    }

    pub fn call_dynamic(mut self, class: &str, method: &str) -> Self {
        self.calls.push(CallSite {
            target: MethodId::new(class, method),
            dynamic: true,
        });
        self
    }

    pub fn refer(mut self, resource: &str) -> Self {
        self.resource_refs.push(resource.to_string());
        self
    }

    pub fn launch(mut self, site: LaunchSite) -> Self {
        self.launches.push(site);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassUnit {
    pub name: String,
    pub kind: ClassKind,
    pub size_bytes: u64,
    #[serde(default)]
    pub methods: Vec<MethodDef>,
}

impl ClassUnit {
    pub fn new(name: impl Into<String>, kind: ClassKind, size_bytes: u64) -> Self {
        ClassUnit {
            name: name.into(),
            kind,
            size_bytes,
            methods: Vec::new(),
        }
    }

    pub fn with_method(mut self, method: MethodDef) -> Self {
        self.methods.push(method);
        self
    }

    pub fn method(&self, name: &str) -> Option<&MethodDef> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn method_ids(&self) -> impl Iterator<Item = MethodId> + '_ {
        self.methods.iter().map(|m| MethodId::new(&self.name, &m.name))
    }

    /// Launch sites of all methods, flattened in declaration order.
    pub fn launch_sites(&self) -> impl Iterator<Item = &LaunchSite> {
        self.methods.iter().flat_map(|m| m.launches.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceItem {
    /// `type/name`, e.g. `layout/activity_main`.
    pub id: String,
    pub size_bytes: u64,
    #[serde(default)]
    pub refs: Vec<String>,
}

impl ResourceItem {
    pub fn new(id: impl Into<String>, size_bytes: u64) -> Self {
        ResourceItem {
            id: id.into(),
            size_bytes,
            refs: Vec::new(),
        }
    }

    pub fn with_ref(mut self, target: &str) -> Self {
        self.refs.push(target.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetItem {
    pub path: String,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtherPayload {
    pub name: String,
    pub size_bytes: u64,
}

/// A validated application package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppPackage {
    pub app_id: String,
    pub version: u64,
    pub manifest: Manifest,
    pub classes: BTreeMap<String, ClassUnit>,
    pub resources: BTreeMap<String, ResourceItem>,
    pub assets: BTreeMap<String, AssetItem>,
    pub other: BTreeMap<String, OtherPayload>,
}

fn keyed<T>(
    items: Vec<T>,
    what: &str,
    key: impl Fn(&T) -> &str,
) -> Result<BTreeMap<String, T>, PackageError> {
    let mut map = BTreeMap::new();
    for item in items {
        let k = key(&item).to_string();
        if map.contains_key(&k) {
            return Err(PackageError::violation(k, format!("duplicate {what}")));
        }
        map.insert(k, item);
    }
    Ok(map)
}

impl AppPackage {
    /// Builds and validates a package. Top-level collections are keyed and
    /// sorted by name; manifest declarations are sorted by class name.
    pub fn new(
        app_id: impl Into<String>,
        version: u64,
        mut manifest: Manifest,
        classes: Vec<ClassUnit>,
        resources: Vec<ResourceItem>,
        assets: Vec<AssetItem>,
        other: Vec<OtherPayload>,
    ) -> Result<Self, PackageError> {
        manifest.normalize();
        let app = AppPackage {
            app_id: app_id.into(),
            version,
            manifest,
            classes: keyed(classes, "class name", |c| &c.name)?,
            resources: keyed(resources, "resource id", |r| &r.id)?,
            assets: keyed(assets, "asset path", |a| &a.path)?,
            other: keyed(other, "payload name", |o| &o.name)?,
        };
        app.validate()?;
        Ok(app)
    }

    pub fn validate(&self) -> Result<(), PackageError> {
        if self.app_id.is_empty() || self.app_id.contains(['/', ' ']) {
            return Err(PackageError::violation(&self.app_id, "invalid app id"));
        }
        for (key, class) in &self.classes {
            if key != &class.name {
                return Err(PackageError::violation(key, "class keyed under wrong name"));
            }
            self.validate_class(class)?;
        }
        for (key, res) in &self.resources {
            if key != &res.id {
                return Err(PackageError::violation(key, "resource keyed under wrong id"));
            }
            validate_resource_id(&res.id)?;
            for target in &res.refs {
                if target == &res.id {
                    return Err(PackageError::violation(&res.id, "resource refers to itself"));
                }
                if !self.resources.contains_key(target) {
                    return Err(PackageError::violation(
                        &res.id,
                        format!("reference to unknown resource `{target}`"),
                    ));
                }
            }
        }
        for (key, asset) in &self.assets {
            if key != &asset.path || asset.path.is_empty() {
                return Err(PackageError::violation(key, "invalid asset path"));
            }
        }
        for (key, other) in &self.other {
            if key != &other.name || other.name.is_empty() {
                return Err(PackageError::violation(key, "invalid payload name"));
            }
        }
        self.validate_manifest()
    }

    fn validate_class(&self, class: &ClassUnit) -> Result<(), PackageError> {
        if class.name.is_empty()
            || class.name.contains(['/', ' ', '#'])
            || class.name.starts_with('.')
            || class.name.ends_with('.')
        {
            return Err(PackageError::violation(&class.name, "invalid class name"));
        }
        let mut seen = BTreeSet::new();
        for method in &class.methods {
            let mid = MethodId::new(&class.name, &method.name);
            if method.name.is_empty() || method.name.contains(['.', ' ']) {
                return Err(PackageError::violation(mid.as_str(), "invalid method name"));
            }
            if !seen.insert(method.name.as_str()) {
                return Err(PackageError::violation(mid.as_str(), "duplicate method name"));
            }
            for call in &method.calls {
                if self.method(&call.target).is_none() {
                    return Err(PackageError::violation(
                        mid.as_str(),
                        format!("call to unknown method `{}`", call.target),
                    ));
                }
            }
            for r in &method.resource_refs {
                if !self.resources.contains_key(r) {
                    return Err(PackageError::violation(
                        mid.as_str(),
                        format!("reference to unknown resource `{r}`"),
                    ));
                }
            }
            for site in &method.launches {
                match &site.kind {
                    LaunchKind::Explicit { target } => {
                        if self.manifest.activity(target).is_none() {
                            return Err(PackageError::violation(
                                mid.as_str(),
                                format!("launch of undeclared activity `{target}`"),
                            ));
                        }
                    }
                    LaunchKind::Implicit { action, .. } => {
                        if action.is_empty() {
                            return Err(PackageError::violation(
                                mid.as_str(),
                                "implicit launch with empty action",
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_manifest(&self) -> Result<(), PackageError> {
        let m = &self.manifest;
        if m.activity(&m.launcher_activity).is_none() {
            return Err(PackageError::violation(
                &m.launcher_activity,
                "launcher activity not declared",
            ));
        }
        let mut declared = BTreeSet::new();
        for decl in &m.activities {
            if !declared.insert(decl.class_name.as_str()) {
                return Err(PackageError::violation(&decl.class_name, "declared twice"));
            }
            match self.classes.get(&decl.class_name) {
                Some(c) if c.kind == ClassKind::Activity => {}
                Some(_) => {
                    return Err(PackageError::violation(
                        &decl.class_name,
                        "declared as activity but class is not an activity",
                    ))
                }
                None => {
                    return Err(PackageError::violation(
                        &decl.class_name,
                        "declared activity has no class",
                    ))
                }
            }
            for filter in &decl.intent_filters {
                if filter.action.is_empty() {
                    return Err(PackageError::violation(
                        &decl.class_name,
                        "intent filter with empty action",
                    ));
                }
            }
        }
        for decl in &m.other_components {
            if !declared.insert(decl.class_name.as_str()) {
                return Err(PackageError::violation(&decl.class_name, "declared twice"));
            }
            match self.classes.get(&decl.class_name) {
                Some(c) if c.kind == ClassKind::from(decl.kind) => {}
                Some(_) => {
                    return Err(PackageError::violation(
                        &decl.class_name,
                        "component kind does not match class kind",
                    ))
                }
                None => {
                    return Err(PackageError::violation(
                        &decl.class_name,
                        "declared component has no class",
                    ))
                }
            }
        }
        for class in self.classes.values() {
            if class.kind != ClassKind::Pojo && !declared.contains(class.name.as_str()) {
                return Err(PackageError::violation(
                    &class.name,
                    "component class missing from manifest",
                ));
            }
        }
        Ok(())
    }

    pub fn method(&self, id: &MethodId) -> Option<&MethodDef> {
        self.classes.get(id.class())?.method(id.method())
    }

    pub fn class_kind(&self, name: &str) -> Option<ClassKind> {
        self.classes.get(name).map(|c| c.kind)
    }

    /// Activity class names, sorted.
    pub fn activities(&self) -> BTreeSet<String> {
        self.classes
            .values()
            .filter(|c| c.kind == ClassKind::Activity)
            .map(|c| c.name.clone())
            .collect()
    }

    /// Service, receiver and provider class names, sorted.
    pub fn components(&self) -> BTreeSet<String> {
        self.classes
            .values()
            .filter(|c| c.kind.is_component())
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn welcome_activities(&self) -> BTreeSet<String> {
        self.manifest
            .welcome_activities()
            .map(str::to_string)
            .collect()
    }

    pub fn class_size<'a>(&self, names: impl IntoIterator<Item = &'a String>) -> u64 {
        names
            .into_iter()
            .filter_map(|n| self.classes.get(n))
            .map(|c| c.size_bytes)
            .sum()
    }

    pub fn resource_size<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> u64 {
        ids.into_iter()
            .filter_map(|n| self.resources.get(n))
            .map(|r| r.size_bytes)
            .sum()
    }

    pub fn asset_size(&self) -> u64 {
        self.assets.values().map(|a| a.size_bytes).sum()
    }

    pub fn other_size(&self) -> u64 {
        self.other.values().map(|o| o.size_bytes).sum()
    }
}

/// Sum of `size_bytes` over classes, resources, assets and other payloads.
pub fn total_size(app: &AppPackage) -> u64 {
    app.class_size(app.classes.keys())
        + app.resource_size(app.resources.keys())
        + app.asset_size()
        + app.other_size()
}

fn validate_resource_id(id: &str) -> Result<(), PackageError> {
    match id.split_once('/') {
        Some((ty, name)) if !ty.is_empty() && !name.is_empty() && !name.contains('/') => Ok(()),
        _ => Err(PackageError::violation(id, "resource id must be `type/name`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn single_activity() -> AppPackage {
        AppPackage::new(
            "tiny",
            1,
            Manifest {
                launcher_activity: "Main".into(),
                activities: vec![ActivityDecl::internal("Main")],
                other_components: vec![],
            },
            vec![ClassUnit::new("Main", ClassKind::Activity, 100)],
            vec![],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn method_id_splits_on_last_dot() {
        let id = MethodId::parse("com.example.Main.onCreate").unwrap();
        assert_eq!(id.class(), "com.example.Main");
        assert_eq!(id.method(), "onCreate");
        assert!(MethodId::parse("noDot").is_none());
        assert!(MethodId::parse(".m").is_none());
        assert!(MethodId::parse("C.").is_none());
    }

    #[test]
    fn total_size_of_single_class() {
        assert_eq!(total_size(&single_activity()), 100);
    }

    #[test]
    fn total_size_of_worked_example() {
        assert_eq!(total_size(&fixtures::worked_example()), 3_900);
    }

    #[test]
    fn adding_an_asset_adds_its_size() {
        let app = fixtures::worked_example();
        let before = total_size(&app);
        let mut bigger = app.clone();
        bigger.assets.insert(
            "extra.bin".into(),
            AssetItem {
                path: "extra.bin".into(),
                size_bytes: 10,
            },
        );
        assert_eq!(total_size(&bigger), before + 10);
    }

    #[test]
    fn call_to_missing_class_is_rejected() {
        let err = AppPackage::new(
            "bad",
            1,
            Manifest {
                launcher_activity: "Main".into(),
                activities: vec![ActivityDecl::internal("Main")],
                other_components: vec![],
            },
            vec![ClassUnit::new("Main", ClassKind::Activity, 1)
                .with_method(MethodDef::new("onCreate").call("Ghost", "run"))],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(
            matches!(&err, PackageError::SchemaViolation { entity, .. } if entity == "Main.onCreate"),
            "{err}"
        );
    }

    #[test]
    fn launcher_must_be_declared() {
        let err = AppPackage::new(
            "bad",
            1,
            Manifest {
                launcher_activity: "Other".into(),
                activities: vec![ActivityDecl::internal("Main")],
                other_components: vec![],
            },
            vec![ClassUnit::new("Main", ClassKind::Activity, 1)],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, PackageError::SchemaViolation { .. }));
    }

    #[test]
    fn resource_self_reference_is_rejected() {
        let mut app = single_activity();
        app.resources.insert(
            "layout/a".into(),
            ResourceItem::new("layout/a", 1).with_ref("layout/a"),
        );
        assert!(app.validate().is_err());
    }

    #[test]
    fn resource_id_needs_type_and_name() {
        let mut app = single_activity();
        app.resources
            .insert("plain".into(), ResourceItem::new("plain", 1));
        assert!(app.validate().is_err());
    }

    #[test]
    fn undeclared_activity_class_is_rejected() {
        let mut app = single_activity();
        app.classes.insert(
            "Stray".into(),
            ClassUnit::new("Stray", ClassKind::Activity, 1),
        );
        assert!(app.validate().is_err());
    }

    #[test]
    fn duplicate_class_names_are_rejected() {
        let err = AppPackage::new(
            "dup",
            1,
            Manifest {
                launcher_activity: "Main".into(),
                activities: vec![ActivityDecl::internal("Main")],
                other_components: vec![],
            },
            vec![
                ClassUnit::new("Main", ClassKind::Activity, 1),
                ClassUnit::new("Main", ClassKind::Activity, 2),
            ],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, PackageError::SchemaViolation { .. }));
    }

    #[test]
    fn filter_matching_requires_category_superset() {
        let filter = IntentFilter {
            action: "VIEW".into(),
            categories: ["DEFAULT".to_string(), "BROWSABLE".to_string()].into(),
        };
        assert!(filter.matches("VIEW", &BTreeSet::new()));
        assert!(filter.matches("VIEW", &["DEFAULT".to_string()].into()));
        assert!(!filter.matches("VIEW", &["OTHER".to_string()].into()));
        assert!(!filter.matches("EDIT", &BTreeSet::new()));
    }
}
