//! `.apkg` reader and writer.

use serde::{Deserialize, Serialize};

use super::{
    ActivityDecl, AppPackage, AssetItem, ClassUnit, ComponentDecl, Manifest, OtherPayload,
    PackageError, ResourceItem,
};
use crate::container;

#[derive(Serialize, Deserialize)]
pub(crate) struct ManifestDoc {
    pub app_id: String,
    pub version: u64,
    pub launcher_activity: String,
    pub activities: Vec<ActivityDecl>,
    pub other_components: Vec<ComponentDecl>,
}

impl ManifestDoc {
    pub(crate) fn new(app_id: &str, version: u64, manifest: &Manifest) -> Self {
        ManifestDoc {
            app_id: app_id.to_string(),
            version,
            launcher_activity: manifest.launcher_activity.clone(),
            activities: manifest.activities.clone(),
            other_components: manifest.other_components.clone(),
        }
    }

    pub(crate) fn into_manifest(self) -> Manifest {
        Manifest {
            launcher_activity: self.launcher_activity,
            activities: self.activities,
            other_components: self.other_components,
        }
    }
}

pub(crate) fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("model types serialize infallibly")
}

pub(crate) fn from_json<T: for<'de> Deserialize<'de>>(
    entry: &str,
    bytes: &[u8],
) -> Result<T, PackageError> {
    serde_json::from_slice(bytes)
        .map_err(|e| PackageError::MalformedArchive(format!("{entry}: {e}")))
}

/// Deterministic archive bytes: all arrays are emitted in name order.
pub fn serialize_package(app: &AppPackage) -> Vec<u8> {
    let manifest = ManifestDoc::new(&app.app_id, app.version, &app.manifest);
    let classes: Vec<&ClassUnit> = app.classes.values().collect();
    let resources: Vec<&ResourceItem> = app.resources.values().collect();
    let assets: Vec<&AssetItem> = app.assets.values().collect();
    let other: Vec<&OtherPayload> = app.other.values().collect();
    container::write_entries(&[
        ("manifest.json", to_json(&manifest)),
        ("code.json", to_json(&classes)),
        ("res.json", to_json(&resources)),
        ("assets.json", to_json(&assets)),
        ("other.json", to_json(&other)),
    ])
}

pub fn parse_package(bytes: &[u8]) -> Result<AppPackage, PackageError> {
    let mut entries = container::read_entries(bytes).map_err(PackageError::MalformedArchive)?;
    let mut take = |name: &str| {
        container::take_entry(&mut entries, name).map_err(PackageError::MalformedArchive)
    };
    let manifest: ManifestDoc = from_json("manifest.json", &take("manifest.json")?)?;
    let classes: Vec<ClassUnit> = from_json("code.json", &take("code.json")?)?;
    let resources: Vec<ResourceItem> = from_json("res.json", &take("res.json")?)?;
    let assets: Vec<AssetItem> = from_json("assets.json", &take("assets.json")?)?;
    let other: Vec<OtherPayload> = from_json("other.json", &take("other.json")?)?;
    let app_id = manifest.app_id.clone();
    let version = manifest.version;
    AppPackage::new(
        app_id,
        version,
        manifest.into_manifest(),
        classes,
        resources,
        assets,
        other,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn roundtrip_worked_example() {
        let app = fixtures::worked_example();
        let bytes = serialize_package(&app);
        assert_eq!(bytes, serialize_package(&app));
        assert_eq!(parse_package(&bytes).unwrap(), app);
    }

    #[test]
    fn size_change_changes_bytes() {
        let app = fixtures::worked_example();
        let mut other = app.clone();
        other.classes.get_mut("C0").unwrap().size_bytes += 1;
        assert_ne!(serialize_package(&app), serialize_package(&other));
    }

    #[test]
    fn missing_entry_is_malformed() {
        let bytes = container::write_entries(&[("manifest.json", b"{}".to_vec())]);
        assert!(matches!(
            parse_package(&bytes),
            Err(PackageError::MalformedArchive(_))
        ));
    }

    #[test]
    fn dangling_call_is_schema_violation() {
        let app = fixtures::worked_example();
        let mut classes: Vec<ClassUnit> = app.classes.values().cloned().collect();
        let a1 = classes.iter_mut().find(|c| c.name == "A1").unwrap();
        a1.methods[0].calls.push(super::super::CallSite {
            target: super::super::MethodId::new("Nowhere", "run"),
            dynamic: false,
        });
        let manifest = ManifestDoc::new(&app.app_id, app.version, &app.manifest);
        let resources: Vec<&ResourceItem> = app.resources.values().collect();
        let bytes = container::write_entries(&[
            ("manifest.json", to_json(&manifest)),
            ("code.json", to_json(&classes)),
            ("res.json", to_json(&resources)),
            ("assets.json", b"[]".to_vec()),
            ("other.json", b"[]".to_vec()),
        ]);
        assert!(matches!(
            parse_package(&bytes),
            Err(PackageError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn minimal_archive_parses() {
        let bytes = container::write_entries(&[
            (
                "manifest.json",
                br#"{"app_id":"m","version":1,"launcher_activity":"Main",
                    "activities":[{"class_name":"Main","intent_filters":[],"welcome":false}],
                    "other_components":[]}"#
                    .to_vec(),
            ),
            (
                "code.json",
                br#"[{"name":"Main","kind":"Activity","size_bytes":10,"methods":[]}]"#.to_vec(),
            ),
            ("res.json", b"[]".to_vec()),
            ("assets.json", b"[]".to_vec()),
            ("other.json", b"[]".to_vec()),
        ]);
        let app = parse_package(&bytes).unwrap();
        assert_eq!(app.classes.len(), 1);
    }
}
