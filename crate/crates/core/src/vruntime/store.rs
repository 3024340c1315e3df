//! Where bundle archives come from.
//!
//! Every store mirrors the HTTP layout:
//! `apps/{app_id}/base.abundle` and `apps/{app_id}/features/{activity}.abundle`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::RuntimeError;
use crate::app_model::AppPackage;
use crate::decomposer::{pack_bundle, Bundle, DecomposeError, DecompositionPlan};

pub trait BundleStore {
    fn get_base(&self, app_id: &str) -> Result<Vec<u8>, RuntimeError>;
    fn get_feature(&self, app_id: &str, activity: &str) -> Result<Vec<u8>, RuntimeError>;
}

/// Relative path of a bundle in the store layout.
pub fn bundle_path(app_id: &str, activity: Option<&str>) -> String {
    match activity {
        None => format!("apps/{app_id}/base.abundle"),
        Some(a) => format!("apps/{app_id}/features/{a}.abundle"),
    }
}

fn unavailable(what: impl std::fmt::Display) -> RuntimeError {
    RuntimeError::StoreUnavailable(what.to_string())
}

/// Names that could escape the store root.
fn safe_segment(s: &str) -> bool {
    !s.is_empty() && s != "." && s != ".." && !s.contains(['/', '\\'])
}

fn read_file(path: &Path) -> Result<Vec<u8>, RuntimeError> {
    fs::read(path).map_err(|e| unavailable(format!("{}: {e}", path.display())))
}

/// A directory laid out like the HTTP store.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirStore { root: root.into() }
    }
}

impl BundleStore for DirStore {
    fn get_base(&self, app_id: &str) -> Result<Vec<u8>, RuntimeError> {
        if !safe_segment(app_id) {
            return Err(unavailable(format!("bad app id `{app_id}`")));
        }
        read_file(&self.root.join(bundle_path(app_id, None)))
    }

    fn get_feature(&self, app_id: &str, activity: &str) -> Result<Vec<u8>, RuntimeError> {
        if !safe_segment(app_id) || !safe_segment(activity) {
            return Err(unavailable(format!("bad bundle `{app_id}/{activity}`")));
        }
        read_file(&self.root.join(bundle_path(app_id, Some(activity))))
    }
}

/// A single plan directory: `base.abundle` plus `features/<activity>.abundle`.
#[derive(Debug, Clone)]
pub struct PlanStore {
    app_id: String,
    dir: PathBuf,
}

impl PlanStore {
    pub fn new(app_id: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        PlanStore {
            app_id: app_id.into(),
            dir: dir.into(),
        }
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    /// File backing a store path, if it names one of this plan's bundles.
    pub fn file_for(&self, app_id: &str, activity: Option<&str>) -> Option<PathBuf> {
        if app_id != self.app_id {
            return None;
        }
        match activity {
            None => Some(self.dir.join("base.abundle")),
            Some(a) if safe_segment(a) => Some(self.dir.join("features").join(format!("{a}.abundle"))),
            Some(_) => None,
        }
    }

    fn get(&self, app_id: &str, activity: Option<&str>) -> Result<Vec<u8>, RuntimeError> {
        let path = self
            .file_for(app_id, activity)
            .ok_or_else(|| unavailable(bundle_path(app_id, activity)))?;
        read_file(&path)
    }
}

impl BundleStore for PlanStore {
    fn get_base(&self, app_id: &str) -> Result<Vec<u8>, RuntimeError> {
        self.get(app_id, None)
    }

    fn get_feature(&self, app_id: &str, activity: &str) -> Result<Vec<u8>, RuntimeError> {
        self.get(app_id, Some(activity))
    }
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    bundles: BTreeMap<String, Vec<u8>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, app_id: &str, activity: Option<&str>, bytes: Vec<u8>) {
        self.bundles.insert(bundle_path(app_id, activity), bytes);
    }

    /// Packs every bundle of `plan`; `app` should already carry rewritten
    /// launch sites.
    pub fn from_plan(app: &AppPackage, plan: &DecompositionPlan) -> Result<Self, DecomposeError> {
        let mut store = MemoryStore::new();
        store.insert(
            &plan.app_id,
            None,
            pack_bundle(&Bundle::Base(plan.base.clone()), app)?,
        );
        for (activity, feature) in &plan.features {
            store.insert(
                &plan.app_id,
                Some(activity),
                pack_bundle(&Bundle::Feature(feature.clone()), app)?,
            );
        }
        Ok(store)
    }

    pub fn bytes(&self, app_id: &str, activity: Option<&str>) -> Option<&[u8]> {
        self.bundles
            .get(&bundle_path(app_id, activity))
            .map(Vec::as_slice)
    }

    fn get(&self, app_id: &str, activity: Option<&str>) -> Result<Vec<u8>, RuntimeError> {
        self.bytes(app_id, activity)
            .map(<[u8]>::to_vec)
            .ok_or_else(|| unavailable(bundle_path(app_id, activity)))
    }
}

impl BundleStore for MemoryStore {
    fn get_base(&self, app_id: &str) -> Result<Vec<u8>, RuntimeError> {
        self.get(app_id, None)
    }

    fn get_feature(&self, app_id: &str, activity: &str) -> Result<Vec<u8>, RuntimeError> {
        self.get(app_id, Some(activity))
    }
}

/// Client for a remote store; any non-200 answer or transport failure is
/// `StoreUnavailable`.
#[derive(Debug, Clone)]
pub struct HttpStore {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpStore {
    pub fn new(base_url: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .into();
        HttpStore {
            base_url: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    fn get(&self, app_id: &str, activity: Option<&str>) -> Result<Vec<u8>, RuntimeError> {
        let url = format!("{}/{}", self.base_url, bundle_path(app_id, activity));
        log::debug!("GET {url}");
        let mut response = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| unavailable(format!("{url}: {e}")))?;
        response
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(|e| unavailable(format!("{url}: {e}")))
    }
}

impl BundleStore for HttpStore {
    fn get_base(&self, app_id: &str) -> Result<Vec<u8>, RuntimeError> {
        self.get(app_id, None)
    }

    fn get_feature(&self, app_id: &str, activity: &str) -> Result<Vec<u8>, RuntimeError> {
        self.get(app_id, Some(activity))
    }
}

/// Serves nothing.
pub(crate) struct NoStore;

impl BundleStore for NoStore {
    fn get_base(&self, app_id: &str) -> Result<Vec<u8>, RuntimeError> {
        Err(unavailable(bundle_path(app_id, None)))
    }

    fn get_feature(&self, app_id: &str, activity: &str) -> Result<Vec<u8>, RuntimeError> {
        Err(unavailable(bundle_path(app_id, Some(activity))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_store_rejects_traversal() {
        let dir = tempfile::tempdir().unwrap();
        let store = DirStore::new(dir.path());
        assert!(matches!(
            store.get_feature("app", ".."),
            Err(RuntimeError::StoreUnavailable(_))
        ));
        assert!(matches!(
            store.get_base("app"),
            Err(RuntimeError::StoreUnavailable(_))
        ));
    }

    #[test]
    fn dir_store_reads_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(bundle_path("app", Some("Feat")));
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, b"bytes").unwrap();
        assert_eq!(DirStore::new(dir.path()).get_feature("app", "Feat").unwrap(), b"bytes");
    }

    #[test]
    fn plan_store_only_serves_its_app() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("base.abundle"), b"b").unwrap();
        let store = PlanStore::new("app", dir.path());
        assert_eq!(store.get_base("app").unwrap(), b"b");
        assert!(store.get_base("other").is_err());
        assert!(store.get_feature("app", "Missing").is_err());
    }

    #[test]
    fn dead_http_store_is_unavailable() {
        let store = HttpStore::new("http://127.0.0.1:9");
        assert!(matches!(
            store.get_base("app"),
            Err(RuntimeError::StoreUnavailable(_))
        ));
    }
}
