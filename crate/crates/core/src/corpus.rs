//! Seeded generator for synthetic packages, replay scripts and usage logs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Zipf};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::app_model::{
    ActivityDecl, AppPackage, AssetItem, CallSite, ClassKind, ClassUnit, ComponentDecl,
    ComponentKind, IntentFilter, LaunchSite, Manifest, MethodDef, MethodId, OtherPayload,
    ResourceItem, ENTRY_METHOD,
};
use crate::recovery::{Action, ReplayScript};
use crate::usage::{UsageDataset, UsageRecord};
use crate::vruntime::{resolve_intent, IntentObj, Registry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("invalid corpus parameters: {0}")]
    InvalidParams(String),
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: u32,
    pub max: u32,
}

impl Span {
    pub const fn new(min: u32, max: u32) -> Self {
        Span { min, max }
    }

    fn sample(self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(self.min..=self.max) as usize
    }
}

/// Log-normal byte sizes, at least one byte.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDist {
    pub median: f64,
    pub sigma: f64,
}

impl SizeDist {
    fn sample(self, rng: &mut ChaCha8Rng) -> u64 {
        let d = LogNormal::new(self.median.ln(), self.sigma).expect("validated");
        (d.sample(rng).round() as u64).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusParams {
    pub seed: u64,
    pub activity_count: Span,
    pub pojo_count: Span,
    pub resource_count: Span,
    /// Services, receivers and providers.
    pub component_count: Span,
    pub asset_count: Span,
    pub payload_count: Span,
    /// Probability a POJO or resource reference goes to the shared pool
    /// rather than the activity's own partition.
    pub share_ratio: f64,
    pub dynamic_edge_rate: f64,
    /// Probability a launch site is an implicit intent.
    pub implicit_rate: f64,
    /// Probability the package has a welcome activity.
    pub welcome_rate: f64,
    /// Extra launch sites beyond the spanning tree, per activity.
    pub extra_launch_rate: f64,
    pub class_size: SizeDist,
    pub resource_size: SizeDist,
    pub asset_size: SizeDist,
    pub payload_size: SizeDist,
    pub zipf_exponent: f64,
    pub users: u32,
    pub visits_per_user: u32,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            seed: 7,
            activity_count: Span::new(3, 12),
            pojo_count: Span::new(4, 24),
            resource_count: Span::new(6, 40),
            component_count: Span::new(0, 3),
            asset_count: Span::new(0, 3),
            payload_count: Span::new(0, 2),
            share_ratio: 0.3,
            dynamic_edge_rate: 0.08,
            implicit_rate: 0.2,
            welcome_rate: 0.3,
            extra_launch_rate: 0.3,
            class_size: SizeDist {
                median: 4_000.0,
                sigma: 0.8,
            },
            resource_size: SizeDist {
                median: 6_000.0,
                sigma: 1.2,
            },
            asset_size: SizeDist {
                median: 50_000.0,
                sigma: 1.0,
            },
            payload_size: SizeDist {
                median: 200_000.0,
                sigma: 1.0,
            },
            zipf_exponent: 1.2,
            users: 20,
            visits_per_user: 30,
        }
    }
}

impl CorpusParams {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::InvalidParams(msg));
        for (name, span) in [
            ("activity_count", self.activity_count),
            ("pojo_count", self.pojo_count),
            ("resource_count", self.resource_count),
            ("component_count", self.component_count),
            ("asset_count", self.asset_count),
            ("payload_count", self.payload_count),
        ] {
            if span.min > span.max {
                return bad(format!("{name} range is empty"));
            }
        }
        if self.activity_count.min == 0 {
            return bad("activity_count must allow at least one activity".into());
        }
        for (name, rate) in [
            ("share_ratio", self.share_ratio),
            ("dynamic_edge_rate", self.dynamic_edge_rate),
            ("implicit_rate", self.implicit_rate),
            ("welcome_rate", self.welcome_rate),
            ("extra_launch_rate", self.extra_launch_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} must be in [0, 1]"));
            }
        }
        for (name, d) in [
            ("class_size", self.class_size),
            ("resource_size", self.resource_size),
            ("asset_size", self.asset_size),
            ("payload_size", self.payload_size),
        ] {
            if !(d.median.is_finite() && d.median >= 1.0 && d.sigma.is_finite() && d.sigma >= 0.0) {
                return bad(format!("{name} needs median >= 1 and sigma >= 0"));
            }
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be >= 0".into());
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

const RESOURCE_TYPES: [&str; 4] = ["layout", "drawable", "string", "raw"];

/// Picks from `own` unless the coin says share (or `own` is empty).
fn pick<'a>(rng: &mut ChaCha8Rng, share: f64, own: &'a [usize], all: &'a [usize]) -> Option<usize> {
    let pool = if own.is_empty() || rng.gen_bool(share) {
        all
    } else {
        own
    };
    pool.choose(rng).copied()
}

fn partition(rng: &mut ChaCha8Rng, n: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut out = vec![Vec::new(); parts];
    for (i, x) in idx.into_iter().enumerate() {
        out[i % parts].push(x);
    }
    out
}

/// Generates package `index`; the same inputs always give the same package.
pub fn gen_app(params: &CorpusParams, index: u64) -> Result<AppPackage, CorpusError> {
    params.validate()?;
    let rng = &mut params.rng(index.wrapping_mul(2));
    let share = params.share_ratio;
    let dynamic = params.dynamic_edge_rate;

    let n_act = params.activity_count.sample(rng);
    let n_pojo = params.pojo_count.sample(rng);
    let n_res = params.resource_count.sample(rng);
    let n_comp = params.component_count.sample(rng);

    let acts: Vec<String> = (0..n_act).map(|i| format!("Act{i:02}")).collect();
    let pojos: Vec<String> = (0..n_pojo).map(|i| format!("Pojo{i:02}")).collect();
    let res: Vec<String> = (0..n_res)
        .map(|i| format!("{}/res{i:02}", RESOURCE_TYPES[rng.gen_range(0..RESOURCE_TYPES.len())]))
        .collect();
    let all_pojos: Vec<usize> = (0..n_pojo).collect();
    let all_res: Vec<usize> = (0..n_res).collect();
    let pojo_parts = partition(rng, n_pojo, n_act);
    let res_parts = partition(rng, n_res, n_act);

    let call = |rng: &mut ChaCha8Rng, target: usize, method: &str| CallSite {
        target: MethodId::new(&pojos[target], method),
        dynamic: rng.gen_bool(dynamic),
    };
    // Every POJO has `run`; some also have `helper`.
    let has_helper: Vec<bool> = (0..n_pojo).map(|_| rng.gen_bool(0.4)).collect();
    let pojo_method = |rng: &mut ChaCha8Rng, target: usize| {
        if has_helper[target] && rng.gen_bool(0.5) {
            "helper"
        } else {
            "run"
        }
    };

    let mut resources = Vec::new();
    for (i, id) in res.iter().enumerate() {
        let mut item = ResourceItem::new(id, params.resource_size.sample(rng));
        for _ in 0..rng.gen_range(0..=2) {
            if rng.gen_bool(0.35) && n_res > 1 {
                let j = (i + rng.gen_range(1..n_res)) % n_res;
                if !item.refs.contains(&res[j]) {
                    item = item.with_ref(&res[j]);
                }
            }
        }
        resources.push(item);
    }

    let mut classes = Vec::new();
    let owner: BTreeMap<usize, usize> = pojo_parts
        .iter()
        .enumerate()
        .flat_map(|(a, ps)| ps.iter().map(move |&p| (p, a)))
        .collect();
    for (i, name) in pojos.iter().enumerate() {
        let own_pojos = &pojo_parts[owner[&i]];
        let own_res = &res_parts[owner[&i]];
        let mut methods = vec!["run"];
        if has_helper[i] {
            methods.push("helper");
        }
        let mut unit = ClassUnit::new(name, ClassKind::Pojo, params.class_size.sample(rng));
        for m in methods {
            let mut def = MethodDef::new(m);
            for _ in 0..rng.gen_range(0..=2) {
                if let Some(t) = pick(rng, share, own_pojos, &all_pojos).filter(|&t| t != i) {
                    let method = pojo_method(rng, t);
                    def.calls.push(call(rng, t, method));
                }
            }
            for _ in 0..rng.gen_range(0..=1) {
                if let Some(r) = pick(rng, share, own_res, &all_res) {
                    if !def.resource_refs.contains(&res[r]) {
                        def = def.refer(&res[r]);
                    }
                }
            }
            unit = unit.with_method(def);
        }
        classes.push(unit);
    }

    // Launch structure: a random spanning tree rooted at the launcher plus
    // a few extra edges.
    let mut launches: Vec<Vec<usize>> = vec![Vec::new(); n_act];
    for child in 1..n_act {
        let parent = rng.gen_range(0..child);
        launches[parent].push(child);
    }
    for (from, targets) in launches.iter_mut().enumerate() {
        if n_act > 1 && rng.gen_bool(params.extra_launch_rate) {
            let to = rng.gen_range(0..n_act);
            if to != from && to != 0 {
                targets.push(to);
            }
        }
    }
    let implicit: Vec<bool> = (0..n_act)
        .map(|i| i != 0 && rng.gen_bool(params.implicit_rate))
        .collect();
    let action_of = |i: usize| format!("gen.action.{}", acts[i].to_uppercase());
    let welcome = n_act > 1 && rng.gen_bool(params.welcome_rate);

    let mut decls = Vec::new();
    for (i, name) in acts.iter().enumerate() {
        let mut decl = ActivityDecl::internal(name);
        if i == 0 {
            decl.intent_filters.push(IntentFilter {
                action: "android.intent.action.MAIN".into(),
                categories: ["android.intent.category.LAUNCHER".to_string()].into(),
            });
        }
        if implicit[i] {
            decl.intent_filters.push(IntentFilter {
                action: action_of(i),
                categories: ["android.intent.category.DEFAULT".to_string()].into(),
            });
        }
        decl.welcome = welcome && i == 1;
        decls.push(decl);

        let own_pojos = &pojo_parts[i];
        let own_res = &res_parts[i];
        let mut create = MethodDef::new(ENTRY_METHOD);
        for _ in 0..rng.gen_range(1..=3) {
            if let Some(t) = pick(rng, share, own_pojos, &all_pojos) {
                let method = pojo_method(rng, t);
                let site = call(rng, t, method);
                if !create.calls.contains(&site) {
                    create.calls.push(site);
                }
            }
        }
        for _ in 0..rng.gen_range(1..=3) {
            if let Some(r) = pick(rng, share, own_res, &all_res) {
                if !create.resource_refs.contains(&res[r]) {
                    create = create.refer(&res[r]);
                }
            }
        }
        let mut unit =
            ClassUnit::new(name, ClassKind::Activity, params.class_size.sample(rng)).with_method(create);
        if !launches[i].is_empty() {
            let mut nav = MethodDef::new("onNavigate");
            for &to in &launches[i] {
                nav = nav.launch(if implicit[to] {
                    LaunchSite::implicit(action_of(to), Vec::<String>::new())
                } else {
                    LaunchSite::explicit(&acts[to])
                });
            }
            unit = unit.with_method(nav);
        }
        classes.push(unit);
    }

    let comp_kinds = [
        (ComponentKind::Service, "Svc", "onStartCommand"),
        (ComponentKind::BroadcastReceiver, "Recv", "onReceive"),
        (ComponentKind::ContentProvider, "Prov", "query"),
    ];
    let mut others = Vec::new();
    for i in 0..n_comp {
        let (kind, prefix, entry) = comp_kinds[rng.gen_range(0..comp_kinds.len())];
        let name = format!("{prefix}{i:02}");
        let mut def = MethodDef::new(entry);
        for _ in 0..rng.gen_range(0..=2) {
            if let Some(&t) = all_pojos.choose(rng) {
                let method = pojo_method(rng, t);
                let site = call(rng, t, method);
                if !def.calls.contains(&site) {
                    def.calls.push(site);
                }
            }
        }
        if let Some(&r) = all_res.choose(rng) {
            if rng.gen_bool(0.5) {
                def = def.refer(&res[r]);
            }
        }
        classes.push(
            ClassUnit::new(&name, kind.into(), params.class_size.sample(rng)).with_method(def),
        );
        others.push(ComponentDecl {
            class_name: name,
            kind,
        });
    }

    let assets = (0..params.asset_count.sample(rng))
        .map(|i| AssetItem {
            path: format!("assets/data{i:02}.bin"),
            size_bytes: params.asset_size.sample(rng),
        })
        .collect();
    let payloads = (0..params.payload_count.sample(rng))
        .map(|i| OtherPayload {
            name: format!("lib/libgen{i:02}.so"),
            size_bytes: params.payload_size.sample(rng),
        })
        .collect();

    let manifest = Manifest {
        launcher_activity: acts[0].clone(),
        activities: decls,
        other_components: others,
    };
    let app = AppPackage::new(
        format!("gen.app{index:04}"),
        1,
        manifest,
        classes,
        resources,
        assets,
        payloads,
    )
    .expect("generated package is valid");
    Ok(app)
}

/// One script per activity: launch, then follow the shortest chain of
/// launch sites from the launcher.
pub fn gen_scripts(app: &AppPackage) -> Vec<ReplayScript> {
    let registry = Registry::from_manifest(&app.manifest);
    let launcher = app.manifest.launcher_activity.clone();
    let mut paths: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    paths.insert(launcher.clone(), Vec::new());
    let mut queue = VecDeque::from([launcher]);
    while let Some(current) = queue.pop_front() {
        let Some(class) = app.classes.get(&current) else {
            continue;
        };
        let base = paths[&current].clone();
        for (i, site) in class.launch_sites().enumerate() {
            let Ok(target) = resolve_intent(&registry, &IntentObj::from(&site.kind)) else {
                continue;
            };
            if paths.contains_key(&target) {
                continue;
            }
            let mut path = base.clone();
            path.push(i);
            paths.insert(target.clone(), path);
            queue.push_back(target);
        }
    }
    // Welcome activities open during launch.
    for w in app.manifest.welcome_activities() {
        paths.insert(w.to_string(), Vec::new());
    }
    paths
        .into_iter()
        .map(|(target, path)| {
            let mut actions = vec![Action::Launch];
            actions.extend(path.into_iter().map(Action::Navigate));
            ReplayScript::new(target.clone(), target, actions)
        })
        .collect()
}

fn app_stream(app_id: &str) -> u64 {
    let digest = Sha256::digest(app_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes) | 1
}

/// Zipf-skewed visits over the package's activities.
pub fn gen_usage(params: &CorpusParams, app: &AppPackage) -> Result<UsageDataset, CorpusError> {
    params.validate()?;
    let rng = &mut params.rng(app_stream(&app.app_id));
    let mut ranked: Vec<String> = app.activities().into_iter().collect();
    ranked.shuffle(rng);
    let zipf = Zipf::new(ranked.len() as u64, params.zipf_exponent)
        .map_err(|e| CorpusError::InvalidParams(e.to_string()))?;
    let mut records = Vec::new();
    let mut t = 1_600_000_000i64;
    for u in 0..params.users {
        for _ in 0..params.visits_per_user {
            let rank: f64 = zipf.sample(rng);
            t += rng.gen_range(1..=300);
            records.push(UsageRecord {
                timestamp: t,
                user_id: format!("user{u:03}"),
                app_id: app.app_id.clone(),
                activity: ranked[rank as usize - 1].clone(),
            });
        }
    }
    Ok(UsageDataset { records })
}

/// Activities with at least one launch site, as a quick structural summary.
pub fn navigable_activities(app: &AppPackage) -> BTreeSet<String> {
    app.classes
        .values()
        .filter(|c| c.kind == ClassKind::Activity && c.launch_sites().next().is_some())
        .map(|c| c.name.clone())
        .collect()
}
