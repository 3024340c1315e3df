//! `.abundle` archives.
//!
//! `bundle.json` lists the bundle's members; `code.json` and `res.json`
//! carry the member records so a runtime can execute and digest them. Base
//! archives additionally carry `manifest.json`, `assets.json` and
//! `other.json`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BaseBundle, DecomposeError, FeatureBundle};
use crate::app_model::archive::{to_json, ManifestDoc};
use crate::app_model::{AppPackage, AssetItem, ClassUnit, Manifest, OtherPayload, ResourceItem};
use crate::container;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleKind {
    Base,
    Feature,
}

/// Contents of `bundle.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub kind: BundleKind,
    pub app_id: String,
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<String>,
    pub classes: Vec<String>,
    pub resources: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assets: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<Vec<String>>,
    pub size_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Bundle {
    Base(BaseBundle),
    Feature(FeatureBundle),
}

/// A parsed bundle archive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleArchive {
    pub meta: BundleMeta,
    /// Present in base archives only.
    pub manifest: Option<Manifest>,
    pub classes: Vec<ClassUnit>,
    pub resources: Vec<ResourceItem>,
    pub assets: Vec<AssetItem>,
    pub other: Vec<OtherPayload>,
}

impl BundleArchive {
    pub fn bundle(&self) -> Bundle {
        let classes = self.meta.classes.iter().cloned().collect();
        let resources = self.meta.resources.iter().cloned().collect();
        match self.meta.kind {
            BundleKind::Base => Bundle::Base(BaseBundle {
                classes,
                resources,
                assets: self.assets.iter().map(|a| a.path.clone()).collect(),
                other: self.other.iter().map(|o| o.name.clone()).collect(),
                size_bytes: self.meta.size_bytes,
            }),
            BundleKind::Feature => Bundle::Feature(FeatureBundle {
                activity: self.meta.activity.clone().unwrap_or_default(),
                classes,
                resources,
                size_bytes: self.meta.size_bytes,
            }),
        }
    }

    /// Sum of the member records' sizes.
    pub fn content_size(&self) -> u64 {
        self.classes.iter().map(|c| c.size_bytes).sum::<u64>()
            + self.resources.iter().map(|r| r.size_bytes).sum::<u64>()
            + self.assets.iter().map(|a| a.size_bytes).sum::<u64>()
            + self.other.iter().map(|o| o.size_bytes).sum::<u64>()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Content digest of a class record.
pub fn class_digest(class: &ClassUnit) -> String {
    sha256_hex(&serde_json::to_vec(class).expect("class serializes"))
}

pub fn resource_digest(resource: &ResourceItem) -> String {
    sha256_hex(&serde_json::to_vec(resource).expect("resource serializes"))
}

fn lookup<'a, T>(
    map: &'a std::collections::BTreeMap<String, T>,
    names: impl IntoIterator<Item = &'a String>,
) -> Result<Vec<&'a T>, DecomposeError> {
    names
        .into_iter()
        .map(|n| {
            map.get(n)
                .ok_or_else(|| DecomposeError::UnknownMember(n.clone()))
        })
        .collect()
}

pub fn pack_bundle(bundle: &Bundle, app: &AppPackage) -> Result<Vec<u8>, DecomposeError> {
    match bundle {
        Bundle::Base(base) => {
            let classes = lookup(&app.classes, &base.classes)?;
            let resources = lookup(&app.resources, &base.resources)?;
            let assets = lookup(&app.assets, &base.assets)?;
            let other = lookup(&app.other, &base.other)?;
            let meta = BundleMeta {
                kind: BundleKind::Base,
                app_id: app.app_id.clone(),
                version: app.version,
                activity: None,
                classes: base.classes.iter().cloned().collect(),
                resources: base.resources.iter().cloned().collect(),
                assets: Some(base.assets.iter().cloned().collect()),
                other: Some(base.other.iter().cloned().collect()),
                size_bytes: base.size_bytes,
            };
            let manifest = ManifestDoc::new(&app.app_id, app.version, &app.manifest);
            Ok(container::write_entries(&[
                ("bundle.json", to_json(&meta)),
                ("manifest.json", to_json(&manifest)),
                ("code.json", to_json(&classes)),
                ("res.json", to_json(&resources)),
                ("assets.json", to_json(&assets)),
                ("other.json", to_json(&other)),
            ]))
        }
        Bundle::Feature(feature) => {
            let classes = lookup(&app.classes, &feature.classes)?;
            let resources = lookup(&app.resources, &feature.resources)?;
            let meta = BundleMeta {
                kind: BundleKind::Feature,
                app_id: app.app_id.clone(),
                version: app.version,
                activity: Some(feature.activity.clone()),
                classes: feature.classes.iter().cloned().collect(),
                resources: feature.resources.iter().cloned().collect(),
                assets: None,
                other: None,
                size_bytes: feature.size_bytes,
            };
            Ok(container::write_entries(&[
                ("bundle.json", to_json(&meta)),
                ("code.json", to_json(&classes)),
                ("res.json", to_json(&resources)),
            ]))
        }
    }
}

fn malformed(msg: impl Into<String>) -> DecomposeError {
    DecomposeError::MalformedArchive(msg.into())
}

fn parse<T: for<'de> Deserialize<'de>>(entry: &str, bytes: &[u8]) -> Result<T, DecomposeError> {
    serde_json::from_slice(bytes).map_err(|e| malformed(format!("{entry}: {e}")))
}

fn names_match<'a>(
    what: &str,
    listed: impl IntoIterator<Item = &'a String>,
    records: impl IntoIterator<Item = &'a String>,
) -> Result<(), DecomposeError> {
    let listed: Vec<&String> = listed.into_iter().collect();
    let records: Vec<&String> = records.into_iter().collect();
    if listed != records {
        return Err(malformed(format!(
            "{what} listed in bundle.json do not match the records"
        )));
    }
    Ok(())
}

pub fn unpack_bundle(bytes: &[u8]) -> Result<BundleArchive, DecomposeError> {
    let mut entries = container::read_entries(bytes).map_err(malformed)?;
    let mut take = |name: &str| container::take_entry(&mut entries, name).map_err(malformed);
    let meta: BundleMeta = parse("bundle.json", &take("bundle.json")?)?;
    let classes: Vec<ClassUnit> = parse("code.json", &take("code.json")?)?;
    let resources: Vec<ResourceItem> = parse("res.json", &take("res.json")?)?;
    let (manifest, assets, other) = match meta.kind {
        BundleKind::Base => {
            let doc: ManifestDoc = parse("manifest.json", &take("manifest.json")?)?;
            if doc.app_id != meta.app_id {
                return Err(malformed("manifest app id differs from bundle.json"));
            }
            let assets: Vec<AssetItem> = parse("assets.json", &take("assets.json")?)?;
            let other: Vec<OtherPayload> = parse("other.json", &take("other.json")?)?;
            (Some(doc.into_manifest()), assets, other)
        }
        BundleKind::Feature => {
            if meta.activity.is_none() {
                return Err(malformed("feature bundle without activity"));
            }
            (None, Vec::new(), Vec::new())
        }
    };
    names_match("classes", &meta.classes, classes.iter().map(|c| &c.name))?;
    names_match("resources", &meta.resources, resources.iter().map(|r| &r.id))?;
    if let Some(listed) = &meta.assets {
        names_match("assets", listed, assets.iter().map(|a| &a.path))?;
    }
    if let Some(listed) = &meta.other {
        names_match("payloads", listed, other.iter().map(|o| &o.name))?;
    }
    let archive = BundleArchive {
        meta,
        manifest,
        classes,
        resources,
        assets,
        other,
    };
    if archive.content_size() != archive.meta.size_bytes {
        return Err(malformed("size_bytes disagrees with member records"));
    }
    Ok(archive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposer::{decompose, WhiteList};
    use crate::fixtures;
    use std::collections::BTreeSet;

    fn plan() -> (AppPackage, crate::decomposer::DecompositionPlan) {
        let app = fixtures::worked_example();
        let sel: BTreeSet<String> = ["A1", "A2"].iter().map(|s| s.to_string()).collect();
        let plan = decompose(&app, &sel, &WhiteList::default()).unwrap();
        (app, plan)
    }

    #[test]
    fn base_roundtrip() {
        let (app, plan) = plan();
        let bundle = Bundle::Base(plan.base.clone());
        let bytes = pack_bundle(&bundle, &app).unwrap();
        assert_eq!(bytes, pack_bundle(&bundle, &app).unwrap());
        let archive = unpack_bundle(&bytes).unwrap();
        assert_eq!(archive.bundle(), bundle);
        assert_eq!(archive.manifest.as_ref(), Some(&app.manifest));
        assert_eq!(archive.content_size(), 2_950);
    }

    #[test]
    fn feature_roundtrip() {
        let (app, plan) = plan();
        let bundle = Bundle::Feature(plan.features["A3"].clone());
        let archive = unpack_bundle(&pack_bundle(&bundle, &app).unwrap()).unwrap();
        assert_eq!(archive.bundle(), bundle);
        assert!(archive.manifest.is_none());
        assert_eq!(archive.meta.activity.as_deref(), Some("A3"));
    }

    #[test]
    fn empty_resource_feature() {
        let (app, _) = plan();
        let feature = FeatureBundle {
            activity: "A3".into(),
            classes: ["A3".to_string()].into(),
            resources: BTreeSet::new(),
            size_bytes: 400,
        };
        let archive = unpack_bundle(&pack_bundle(&Bundle::Feature(feature), &app).unwrap()).unwrap();
        assert!(archive.meta.resources.is_empty());
        assert!(archive.resources.is_empty());
    }

    #[test]
    fn unknown_member_is_rejected() {
        let (app, _) = plan();
        let feature = FeatureBundle {
            activity: "A3".into(),
            classes: ["Nope".to_string()].into(),
            resources: BTreeSet::new(),
            size_bytes: 0,
        };
        assert_eq!(
            pack_bundle(&Bundle::Feature(feature), &app),
            Err(DecomposeError::UnknownMember("Nope".into()))
        );
    }

    #[test]
    fn garbage_and_inconsistent_archives_are_malformed() {
        assert!(matches!(
            unpack_bundle(b"junk"),
            Err(DecomposeError::MalformedArchive(_))
        ));
        let bytes = container::write_entries(&[
            (
                "bundle.json",
                br#"{"kind":"feature","app_id":"x","version":1,"activity":"A","classes":["A"],"resources":[],"size_bytes":1}"#.to_vec(),
            ),
            ("code.json", b"[]".to_vec()),
            ("res.json", b"[]".to_vec()),
        ]);
        assert!(matches!(
            unpack_bundle(&bytes),
            Err(DecomposeError::MalformedArchive(_))
        ));
    }

    #[test]
    fn digests_track_content() {
        let app = fixtures::worked_example();
        let c0 = &app.classes["C0"];
        let mut changed = c0.clone();
        changed.size_bytes += 1;
        assert_eq!(class_digest(c0), class_digest(&c0.clone()));
        assert_ne!(class_digest(c0), class_digest(&changed));
    }
}
