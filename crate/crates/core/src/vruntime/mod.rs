//! Virtual runtime: installs a base bundle, runs activities inside stub
//! slots, and fetches feature bundles the first time one of their
//! activities is opened.

mod store;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{
    ActivityDecl, AppPackage, ClassUnit, LaunchKind, LaunchSite, Manifest, ResourceItem,
};
use crate::decomposer::{
    class_digest, resource_digest, unpack_bundle, BaseBundle, BundleArchive, BundleKind,
    FeatureBundle,
};
use crate::exec::{self, Callback, ExecError, MissingItem, Opened, Platform, RunTrace, Step, TraceEvent};
use crate::recovery::ReplayScript;

pub use store::{bundle_path, BundleStore, DirStore, HttpStore, MemoryStore, PlanStore};

pub const DEFAULT_STUB_SLOTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("bundle store unavailable: {0}")]
    StoreUnavailable(String),
    #[error("malformed bundle: {0}")]
    MalformedArchive(String),
    #[error("`{0}` is already installed")]
    AlreadyInstalled(String),
    #[error("`{0}` is not installed")]
    NotInstalled(String),
    #[error("`{0}` has no running activity")]
    NotRunning(String),
    #[error("all {capacity} stub slots are in use")]
    StubPoolExhausted { capacity: usize },
    #[error("no activity matches {0}")]
    NoMatchingActivity(String),
    #[error("resource `{0}` differs from the merged copy")]
    MergeConflict(String),
    #[error("class `{0}` differs from the loaded copy")]
    LoadConflict(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
}

impl From<ExecError<RuntimeError>> for RuntimeError {
    fn from(e: ExecError<RuntimeError>) -> Self {
        match e {
            ExecError::InvalidScript(msg) => RuntimeError::InvalidScript(msg),
            ExecError::Platform(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum IntentObj {
    Explicit {
        target: String,
    },
    Implicit {
        action: String,
        #[serde(default)]
        categories: BTreeSet<String>,
    },
}

impl From<&LaunchKind> for IntentObj {
    fn from(kind: &LaunchKind) -> Self {
        match kind {
            LaunchKind::Explicit { target } => IntentObj::Explicit {
                target: target.clone(),
            },
            LaunchKind::Implicit { action, categories } => IntentObj::Implicit {
                action: action.clone(),
                categories: categories.clone(),
            },
        }
    }
}

impl std::fmt::Display for IntentObj {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IntentObj::Explicit { target } => write!(f, "explicit intent for `{target}`"),
            IntentObj::Implicit { action, categories } => {
                write!(f, "implicit intent `{action}`")?;
                if !categories.is_empty() {
                    let cats: Vec<&str> = categories.iter().map(String::as_str).collect();
                    write!(f, " [{}]", cats.join(", "))?;
                }
                Ok(())
            }
        }
    }
}

/// Activities a virtual package service knows about.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Registry {
    activities: Vec<ActivityDecl>,
}

impl Registry {
    pub fn from_manifest(manifest: &Manifest) -> Self {
        Registry {
            activities: manifest.activities.clone(),
        }
    }

    pub fn register(&mut self, decl: ActivityDecl) {
        self.activities.retain(|a| a.class_name != decl.class_name);
        self.activities.push(decl);
    }
}

/// Explicit intents name their target; implicit ones go to the
/// lexicographically smallest matching activity.
pub fn resolve_intent(registry: &Registry, intent: &IntentObj) -> Result<String, RuntimeError> {
    let found = match intent {
        IntentObj::Explicit { target } => registry
            .activities
            .iter()
            .find(|a| &a.class_name == target)
            .map(|a| a.class_name.clone()),
        IntentObj::Implicit { action, categories } => registry
            .activities
            .iter()
            .filter(|a| a.matches(action, categories))
            .map(|a| a.class_name.clone())
            .min(),
    };
    found.ok_or_else(|| RuntimeError::NoMatchingActivity(intent.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubOccupant {
    pub app_id: String,
    pub activity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubPool {
    slots: Vec<Option<StubOccupant>>,
}

impl StubPool {
    pub fn new(capacity: usize) -> Self {
        StubPool {
            slots: vec![None; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn in_use(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn occupant(&self, slot: usize) -> Option<&StubOccupant> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    /// Takes the lowest free slot.
    pub fn allocate(&mut self, app_id: &str, activity: &str) -> Result<usize, RuntimeError> {
        let slot = self
            .slots
            .iter()
            .position(Option::is_none)
            .ok_or(RuntimeError::StubPoolExhausted {
                capacity: self.capacity(),
            })?;
        self.slots[slot] = Some(StubOccupant {
            app_id: app_id.to_string(),
            activity: activity.to_string(),
        });
        Ok(slot)
    }

    pub fn release(&mut self, slot: usize) {
        if let Some(s) = self.slots.get_mut(slot) {
            *s = None;
        }
    }
}

impl Default for StubPool {
    fn default() -> Self {
        StubPool::new(DEFAULT_STUB_SLOTS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackFrame {
    pub app_id: String,
    pub activity: String,
    pub stub_slot: usize,
}

/// A lifecycle callback delivered to a real activity hosted in a stub slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifecycleRecord {
    pub app_id: String,
    pub stub_slot: usize,
    pub activity: String,
    pub callback: Callback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fetch {
    pub activity: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub fetches: Vec<Fetch>,
    pub cold_starts: u64,
    pub warm_starts: u64,
    pub lifecycle_events: Vec<LifecycleRecord>,
    /// Bytes of resources merged into installed apps.
    pub merged_bytes: u64,
    pub faults: Vec<MissingItem>,
    #[serde(default)]
    pub prefetches: Vec<Fetch>,
}

impl RunMetrics {
    pub fn absorb(&mut self, other: RunMetrics) {
        self.fetches.extend(other.fetches);
        self.cold_starts += other.cold_starts;
        self.warm_starts += other.warm_starts;
        self.lifecycle_events.extend(other.lifecycle_events);
        self.merged_bytes += other.merged_bytes;
        self.faults.extend(other.faults);
        self.prefetches.extend(other.prefetches);
    }

    /// `(activity, callback)` pairs in delivery order.
    pub fn callbacks(&self) -> Vec<(String, Callback)> {
        self.lifecycle_events
            .iter()
            .map(|r| (r.activity.clone(), r.callback))
            .collect()
    }
}

/// Lifecycle events of a trace as `(activity, callback)` pairs.
pub fn callbacks(events: &[TraceEvent]) -> Vec<(String, Callback)> {
    events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Lifecycle { activity, callback } => Some((activity.clone(), *callback)),
            TraceEvent::Invoke { .. } => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "start", rename_all = "lowercase")]
pub enum Navigation {
    Warm,
    Cold { bytes: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstallState {
    pub app_id: String,
    pub version: u64,
    pub manifest: Manifest,
    pub base: BaseBundle,
    pub loaded_features: BTreeMap<String, FeatureBundle>,
    /// Resource id to content digest.
    pub merged_resources: BTreeMap<String, String>,
    /// Class name to content digest.
    pub loaded_classes: BTreeMap<String, String>,
    code: BTreeMap<String, ClassUnit>,
    resources: BTreeMap<String, ResourceItem>,
}

impl InstallState {
    fn from_base(archive: BundleArchive) -> Result<Self, RuntimeError> {
        let BundleArchive {
            meta,
            manifest,
            classes,
            resources,
            ..
        } = archive.clone();
        let manifest = manifest.ok_or_else(|| {
            RuntimeError::MalformedArchive("base bundle without manifest".into())
        })?;
        let base = match archive.bundle() {
            crate::decomposer::Bundle::Base(base) => base,
            crate::decomposer::Bundle::Feature(_) => {
                return Err(RuntimeError::MalformedArchive("expected a base bundle".into()))
            }
        };
        Ok(InstallState {
            app_id: meta.app_id,
            version: meta.version,
            manifest,
            base,
            loaded_features: BTreeMap::new(),
            merged_resources: resources
                .iter()
                .map(|r| (r.id.clone(), resource_digest(r)))
                .collect(),
            loaded_classes: classes
                .iter()
                .map(|c| (c.name.clone(), class_digest(c)))
                .collect(),
            code: classes.into_iter().map(|c| (c.name.clone(), c)).collect(),
            resources: resources.into_iter().map(|r| (r.id.clone(), r)).collect(),
        })
    }

    /// Base activities and activities of loaded features.
    pub fn is_local(&self, activity: &str) -> bool {
        self.base.classes.contains(activity) || self.loaded_features.contains_key(activity)
    }

    pub fn class(&self, name: &str) -> Option<&ClassUnit> {
        self.code.get(name)
    }

    pub fn resource(&self, id: &str) -> Option<&ResourceItem> {
        self.resources.get(id)
    }

    fn install_feature(&mut self, activity: &str, bytes: &[u8]) -> Result<u64, RuntimeError> {
        let archive =
            unpack_bundle(bytes).map_err(|e| RuntimeError::MalformedArchive(e.to_string()))?;
        if archive.meta.kind != BundleKind::Feature
            || archive.meta.activity.as_deref() != Some(activity)
            || archive.meta.app_id != self.app_id
        {
            return Err(RuntimeError::MalformedArchive(format!(
                "store returned the wrong bundle for `{activity}`"
            )));
        }
        check_resources(self, &archive)?;
        check_classes(self, &archive)?;
        let merged = merge_resources(self, &archive)?;
        load_code(self, &archive)?;
        if let crate::decomposer::Bundle::Feature(feature) = archive.bundle() {
            self.loaded_features.insert(activity.to_string(), feature);
        }
        Ok(merged)
    }
}

fn check_resources(state: &InstallState, feature: &BundleArchive) -> Result<(), RuntimeError> {
    for r in &feature.resources {
        if let Some(d) = state.merged_resources.get(&r.id) {
            if *d != resource_digest(r) {
                return Err(RuntimeError::MergeConflict(r.id.clone()));
            }
        }
    }
    Ok(())
}

fn check_classes(state: &InstallState, feature: &BundleArchive) -> Result<(), RuntimeError> {
    for c in &feature.classes {
        if let Some(d) = state.loaded_classes.get(&c.name) {
            if *d != class_digest(c) {
                return Err(RuntimeError::LoadConflict(c.name.clone()));
            }
        }
    }
    Ok(())
}

/// Merges a feature's resources; identical duplicates are skipped. Returns
/// the bytes newly merged.
pub fn merge_resources(state: &mut InstallState, feature: &BundleArchive) -> Result<u64, RuntimeError> {
    check_resources(state, feature)?;
    let mut merged = 0;
    for r in &feature.resources {
        if !state.merged_resources.contains_key(&r.id) {
            state.merged_resources.insert(r.id.clone(), resource_digest(r));
            state.resources.insert(r.id.clone(), r.clone());
            merged += r.size_bytes;
        }
    }
    Ok(merged)
}

/// Loads a feature's classes; identical duplicates are skipped. Returns the
/// number of classes newly loaded.
pub fn load_code(state: &mut InstallState, feature: &BundleArchive) -> Result<usize, RuntimeError> {
    check_classes(state, feature)?;
    let mut loaded = 0;
    for c in &feature.classes {
        if !state.loaded_classes.contains_key(&c.name) {
            state.loaded_classes.insert(c.name.clone(), class_digest(c));
            state.code.insert(c.name.clone(), c.clone());
            loaded += 1;
        }
    }
    Ok(loaded)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualDevice {
    pub installed_apps: BTreeMap<String, InstallState>,
    pub stub_pool: StubPool,
    pub activity_stack: Vec<StackFrame>,
    pub metrics: RunMetrics,
}

impl Default for VirtualDevice {
    fn default() -> Self {
        VirtualDevice::new()
    }
}

impl VirtualDevice {
    pub fn new() -> Self {
        VirtualDevice::with_stub_slots(DEFAULT_STUB_SLOTS)
    }

    pub fn with_stub_slots(slots: usize) -> Self {
        VirtualDevice {
            installed_apps: BTreeMap::new(),
            stub_pool: StubPool::new(slots),
            activity_stack: Vec::new(),
            metrics: RunMetrics::default(),
        }
    }

    pub fn state(&self, app_id: &str) -> Option<&InstallState> {
        self.installed_apps.get(app_id)
    }

    fn state_mut(&mut self, app_id: &str) -> Result<&mut InstallState, RuntimeError> {
        self.installed_apps
            .get_mut(app_id)
            .ok_or_else(|| RuntimeError::NotInstalled(app_id.to_string()))
    }

    pub fn install_base(
        &mut self,
        store: &dyn BundleStore,
        app_id: &str,
    ) -> Result<&InstallState, RuntimeError> {
        if self.installed_apps.contains_key(app_id) {
            return Err(RuntimeError::AlreadyInstalled(app_id.to_string()));
        }
        let bytes = store.get_base(app_id)?;
        let archive =
            unpack_bundle(&bytes).map_err(|e| RuntimeError::MalformedArchive(e.to_string()))?;
        if archive.meta.kind != BundleKind::Base || archive.meta.app_id != app_id {
            return Err(RuntimeError::MalformedArchive(format!(
                "store returned the wrong base bundle for `{app_id}`"
            )));
        }
        let state = InstallState::from_base(archive)?;
        log::info!(
            "installed {app_id}: {} classes, {} resources",
            state.loaded_classes.len(),
            state.merged_resources.len()
        );
        Ok(self.installed_apps.entry(app_id.to_string()).or_insert(state))
    }

    fn platform<'a>(&'a mut self, store: &'a dyn BundleStore, app_id: &str) -> DevicePlatform<'a> {
        DevicePlatform {
            device: self,
            store,
            app_id: app_id.to_string(),
            popped: None,
        }
    }

    /// Makes `activity` runnable, fetching its feature bundle if needed.
    fn ensure_local(
        &mut self,
        store: &dyn BundleStore,
        app_id: &str,
        activity: &str,
    ) -> Result<Navigation, RuntimeError> {
        let state = self.state_mut(app_id)?;
        if state.is_local(activity) {
            self.metrics.warm_starts += 1;
            return Ok(Navigation::Warm);
        }
        let bytes = store.get_feature(app_id, activity)?;
        let merged = state.install_feature(activity, &bytes)?;
        let fetched = bytes.len() as u64;
        log::debug!("{app_id}: cold start of {activity} ({fetched} bytes)");
        self.metrics.fetches.push(Fetch {
            activity: activity.to_string(),
            bytes: fetched,
        });
        self.metrics.cold_starts += 1;
        self.metrics.merged_bytes += merged;
        Ok(Navigation::Cold { bytes: fetched })
    }

    /// Shows the welcome activities and starts the launcher. Returns the
    /// lifecycle records emitted.
    pub fn launch_app(&mut self, app_id: &str) -> Result<Vec<LifecycleRecord>, RuntimeError> {
        self.state_mut(app_id)?;
        let before = self.metrics.lifecycle_events.len();
        let step = exec::launch(&mut self.platform(&store::NoStore, app_id))?;
        if let Step::Fault { item, .. } = step {
            self.metrics.faults.push(item);
        }
        Ok(self.metrics.lifecycle_events[before..].to_vec())
    }

    /// Opens the activity `intent` resolves to on top of the running app.
    pub fn navigate(
        &mut self,
        store: &dyn BundleStore,
        app_id: &str,
        intent: &IntentObj,
    ) -> Result<Navigation, RuntimeError> {
        let state = self.state_mut(app_id)?;
        let target = resolve_intent(&Registry::from_manifest(&state.manifest), intent)?;
        let from = match self.activity_stack.last() {
            Some(top) if top.app_id == app_id => top.activity.clone(),
            _ => return Err(RuntimeError::NotRunning(app_id.to_string())),
        };
        let nav = self.ensure_local(store, app_id, &target)?;
        if let Step::Fault { item, .. } = exec::start(&mut self.platform(store, app_id), &target, &from)? {
            self.metrics.faults.push(item);
        }
        Ok(nav)
    }

    /// Finishes the top activity; returns it, or `None` on an empty stack.
    pub fn back(&mut self) -> Option<String> {
        let app_id = self.activity_stack.last()?.app_id.clone();
        exec::finish_top(&mut self.platform(&store::NoStore, &app_id))
    }

    /// Fetches feature bundles ahead of use; returns how many were fetched.
    pub fn prefetch(
        &mut self,
        store: &dyn BundleStore,
        app_id: &str,
        activities: &[String],
    ) -> Result<usize, RuntimeError> {
        let mut fetched = 0;
        for activity in activities {
            let state = self.state_mut(app_id)?;
            if state.is_local(activity) {
                continue;
            }
            let bytes = store.get_feature(app_id, activity)?;
            let merged = state.install_feature(activity, &bytes)?;
            self.metrics.prefetches.push(Fetch {
                activity: activity.clone(),
                bytes: bytes.len() as u64,
            });
            self.metrics.merged_bytes += merged;
            fetched += 1;
        }
        Ok(fetched)
    }

    /// Drops every frame of `app_id` without delivering callbacks.
    pub fn close_app(&mut self, app_id: &str) {
        let pool = &mut self.stub_pool;
        self.activity_stack.retain(|f| {
            if f.app_id == app_id {
                pool.release(f.stub_slot);
                false
            } else {
                true
            }
        });
    }

    /// Replays `script` as one session of `app_id` and returns that
    /// session's metrics. The app's frames are closed afterwards.
    pub fn run_session(
        &mut self,
        store: &dyn BundleStore,
        app_id: &str,
        script: &ReplayScript,
    ) -> Result<RunMetrics, RuntimeError> {
        self.state_mut(app_id)?;
        let earlier = std::mem::take(&mut self.metrics);
        let result = exec::run_script(&mut self.platform(store, app_id), script);
        if let Ok(RunTrace {
            fault: Some(item), ..
        }) = &result
        {
            self.metrics.faults.push(item.clone());
        }
        self.close_app(app_id);
        let session = std::mem::replace(&mut self.metrics, earlier);
        self.metrics.absorb(session.clone());
        result?;
        Ok(session)
    }
}

struct DevicePlatform<'a> {
    device: &'a mut VirtualDevice,
    store: &'a dyn BundleStore,
    app_id: String,
    /// Last frame popped, for callbacks delivered after the pop.
    popped: Option<(String, usize)>,
}

impl DevicePlatform<'_> {
    fn state(&self) -> &InstallState {
        &self.device.installed_apps[&self.app_id]
    }

    fn slot_of(&self, activity: &str) -> usize {
        self.device
            .activity_stack
            .iter()
            .rev()
            .find(|f| f.app_id == self.app_id && f.activity == activity)
            .map(|f| f.stub_slot)
            .or_else(|| {
                self.popped
                    .as_ref()
                    .filter(|(a, _)| a == activity)
                    .map(|(_, s)| *s)
            })
            .unwrap_or(usize::MAX)
    }
}

impl Platform for DevicePlatform<'_> {
    type Error = RuntimeError;

    fn class(&self, _context: &str, name: &str) -> Option<&ClassUnit> {
        self.state().class(name)
    }

    fn resource(&self, _context: &str, id: &str) -> Option<&ResourceItem> {
        self.state().resource(id)
    }

    fn manifest(&self) -> &Manifest {
        &self.state().manifest
    }

    fn top(&self) -> Option<&str> {
        self.device
            .activity_stack
            .last()
            .filter(|f| f.app_id == self.app_id)
            .map(|f| f.activity.as_str())
    }

    fn open(&mut self, from: &str, site: &LaunchSite) -> Result<Opened, RuntimeError> {
        let state = self.state();
        let target = resolve_intent(
            &Registry::from_manifest(&state.manifest),
            &IntentObj::from(&site.kind),
        )?;
        let direct = matches!(site.kind, LaunchKind::Explicit { .. }) && !site.hooked;
        if direct && !state.is_local(&target) {
            // An unhooked explicit launch bypasses the runtime, so nothing
            // fetches the target's code.
            return Ok(Opened::Missing(MissingItem::class(&target, from)));
        }
        let app_id = self.app_id.clone();
        self.device.ensure_local(self.store, &app_id, &target)?;
        Ok(Opened::Target(target))
    }

    fn push(&mut self, activity: &str) -> Result<(), RuntimeError> {
        let slot = self.device.stub_pool.allocate(&self.app_id, activity)?;
        self.device.activity_stack.push(StackFrame {
            app_id: self.app_id.clone(),
            activity: activity.to_string(),
            stub_slot: slot,
        });
        Ok(())
    }

    fn pop(&mut self) {
        if let Some(frame) = self.device.activity_stack.pop() {
            self.device.stub_pool.release(frame.stub_slot);
            self.popped = Some((frame.activity, frame.stub_slot));
        }
    }

    fn record(&mut self, events: Vec<TraceEvent>) {
        for event in events {
            if let TraceEvent::Lifecycle { activity, callback } = event {
                let record = LifecycleRecord {
                    app_id: self.app_id.clone(),
                    stub_slot: self.slot_of(&activity),
                    activity,
                    callback,
                };
                self.device.metrics.lifecycle_events.push(record);
            }
        }
    }
}

/// A direct run of an undecomposed package.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectRun {
    pub trace: RunTrace,
    pub events: Vec<TraceEvent>,
}

struct DirectPlatform<'a> {
    app: &'a AppPackage,
    registry: Registry,
    stack: Vec<String>,
    events: Vec<TraceEvent>,
}

impl Platform for DirectPlatform<'_> {
    type Error = RuntimeError;

    fn class(&self, _context: &str, name: &str) -> Option<&ClassUnit> {
        self.app.classes.get(name)
    }

    fn resource(&self, _context: &str, id: &str) -> Option<&ResourceItem> {
        self.app.resources.get(id)
    }

    fn manifest(&self) -> &Manifest {
        &self.app.manifest
    }

    fn top(&self) -> Option<&str> {
        self.stack.last().map(String::as_str)
    }

    fn open(&mut self, _from: &str, site: &LaunchSite) -> Result<Opened, RuntimeError> {
        resolve_intent(&self.registry, &IntentObj::from(&site.kind)).map(Opened::Target)
    }

    fn push(&mut self, activity: &str) -> Result<(), RuntimeError> {
        self.stack.push(activity.to_string());
        Ok(())
    }

    fn pop(&mut self) {
        self.stack.pop();
    }

    fn record(&mut self, events: Vec<TraceEvent>) {
        self.events.extend(events);
    }
}

/// Runs `script` against the whole package with no bundles involved.
pub fn run_direct(app: &AppPackage, script: &ReplayScript) -> Result<DirectRun, RuntimeError> {
    let mut platform = DirectPlatform {
        app,
        registry: Registry::from_manifest(&app.manifest),
        stack: Vec::new(),
        events: Vec::new(),
    };
    let trace = exec::run_script(&mut platform, script)?;
    Ok(DirectRun {
        trace,
        events: platform.events,
    })
}
