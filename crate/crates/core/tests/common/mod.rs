//! Brute-force reference implementations shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use bundlesplit::app_model::{AppPackage, ClassKind, MethodId};
use bundlesplit::corpus::{gen_app, CorpusParams, Span};
use bundlesplit::decomposer::DecompositionPlan;

/// Methods reachable from `roots` over static calls, by repeated sweeps
/// until nothing changes.
pub fn static_methods(app: &AppPackage, roots: BTreeSet<MethodId>) -> BTreeSet<MethodId> {
    let mut set = roots;
    loop {
        let mut next = set.clone();
        for m in &set {
            if let Some(def) = app.method(m) {
                for call in def.calls.iter().filter(|c| !c.dynamic) {
                    next.insert(call.target.clone());
                }
            }
        }
        if next == set {
            return set;
        }
        set = next;
    }
}

fn class_closure(app: &AppPackage, class: &str) -> BTreeSet<String> {
    let roots = app.classes[class].method_ids().collect();
    let mut out: BTreeSet<String> = static_methods(app, roots)
        .iter()
        .map(|m| m.class().to_string())
        .filter(|c| app.classes[c].kind == ClassKind::Pojo)
        .collect();
    out.insert(class.to_string());
    out
}

pub fn arcls(app: &AppPackage, activity: &str) -> BTreeSet<String> {
    class_closure(app, activity)
}

pub fn component_closure(app: &AppPackage, component: &str) -> BTreeSet<String> {
    class_closure(app, component)
}

pub fn resource_fixpoint(app: &AppPackage, roots: BTreeSet<String>) -> BTreeSet<String> {
    let mut set = roots;
    loop {
        let mut next = set.clone();
        for r in &set {
            next.extend(app.resources[r].refs.iter().cloned());
        }
        if next == set {
            return set;
        }
        set = next;
    }
}

pub fn crres(app: &AppPackage, class: &str) -> BTreeSet<String> {
    let direct = app.classes[class]
        .methods
        .iter()
        .flat_map(|m| m.resource_refs.iter().cloned())
        .collect();
    resource_fixpoint(app, direct)
}

pub fn params(seed: u64) -> CorpusParams {
    CorpusParams {
        seed,
        ..CorpusParams::default()
    }
}

/// Packages with at most 50 classes and 80 resources.
pub fn bounded_params(seed: u64) -> CorpusParams {
    CorpusParams {
        seed,
        activity_count: Span::new(1, 14),
        pojo_count: Span::new(0, 30),
        component_count: Span::new(0, 6),
        resource_count: Span::new(0, 80),
        share_ratio: 0.5,
        dynamic_edge_rate: 0.15,
        ..CorpusParams::default()
    }
}

pub fn app(seed: u64, index: u64) -> AppPackage {
    gen_app(&params(seed), index).expect("valid params")
}

/// Launcher, welcome activities and the activities picked by `mask`.
pub fn selection(app: &AppPackage, mask: u64) -> BTreeSet<String> {
    let mut sel: BTreeSet<String> = app
        .activities()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
        .map(|(_, a)| a)
        .collect();
    sel.insert(app.manifest.launcher_activity.clone());
    sel.extend(app.welcome_activities());
    sel
}

pub fn union_classes(plan: &DecompositionPlan) -> BTreeSet<String> {
    let mut all = plan.base.classes.clone();
    for f in plan.features.values() {
        all.extend(f.classes.iter().cloned());
    }
    all
}

pub fn union_resources(plan: &DecompositionPlan) -> BTreeSet<String> {
    let mut all = plan.base.resources.clone();
    for f in plan.features.values() {
        all.extend(f.resources.iter().cloned());
    }
    all
}

fn conservation_holds(app: &AppPackage, plan: &DecompositionPlan) -> bool {
    let mut class_copies: BTreeMap<&String, u64> = BTreeMap::new();
    let mut resource_copies: BTreeMap<&String, u64> = BTreeMap::new();
    for f in plan.features.values() {
        for c in &f.classes {
            *class_copies.entry(c).or_default() += 1;
        }
        for r in &f.resources {
            *resource_copies.entry(r).or_default() += 1;
        }
    }
    let duplicated: u64 = class_copies
        .iter()
        .map(|(c, n)| (n - 1) * app.classes[*c].size_bytes)
        .sum::<u64>()
        + resource_copies
            .iter()
            .map(|(r, n)| (n - 1) * app.resources[*r].size_bytes)
            .sum::<u64>();

    let mut classes = BTreeSet::new();
    for a in app.activities() {
        classes.extend(arcls(app, &a));
    }
    for c in app.components() {
        classes.extend(component_closure(app, &c));
    }
    let mut resources = BTreeSet::new();
    for c in &classes {
        resources.extend(crres(app, c));
    }
    let footprint =
        app.class_size(&classes) + app.resource_size(&resources) + app.asset_size() + app.other_size();

    let bundled: u64 =
        plan.base.size_bytes + plan.features.values().map(|f| f.size_bytes).sum::<u64>();
    classes == union_classes(plan)
        && resources == union_resources(plan)
        && bundled - duplicated == footprint
}

/// Every way `plan` breaks the partition rules for selection `sel`.
pub fn partition_violations(
    app: &AppPackage,
    sel: &BTreeSet<String>,
    plan: &DecompositionPlan,
) -> Vec<String> {
    let mut out = Vec::new();
    let expected: BTreeSet<String> = app.activities().difference(sel).cloned().collect();
    if plan.features.keys().cloned().collect::<BTreeSet<_>>() != expected {
        out.push("feature set".to_string());
    }
    for (a, f) in &plan.features {
        if !f.classes.is_disjoint(&plan.base.classes) || !f.resources.is_disjoint(&plan.base.resources) {
            out.push(format!("{a}: overlaps base"));
        }
        if !f.classes.contains(a) {
            out.push(format!("{a}: missing own class"));
        }
        let housed: BTreeSet<String> = plan.base.classes.union(&f.classes).cloned().collect();
        if !arcls(app, a).is_subset(&housed) {
            out.push(format!("{a}: closure not covered"));
        }
    }
    for a in sel {
        if !arcls(app, a).is_subset(&plan.base.classes) {
            out.push(format!("{a}: base closure not covered"));
        }
    }
    if !app.components().is_subset(&plan.base.classes) {
        out.push("components outside base".to_string());
    }
    if plan.base.assets != app.assets.keys().cloned().collect::<BTreeSet<_>>()
        || plan.base.other != app.other.keys().cloned().collect::<BTreeSet<_>>()
    {
        out.push("assets or payloads outside base".to_string());
    }
    if resource_fixpoint(app, plan.base.resources.clone()) != plan.base.resources {
        out.push("base resources not closed".to_string());
    }
    if !conservation_holds(app, plan) {
        out.push("conservation".to_string());
    }
    out
}
