//! Call graph, resource graph, class-to-resource references and the activity
//! transition graph, plus the two closures decomposition is built on:
//!
//! * activity-related classes: the activity plus every plain class owning a
//!   method reachable from one of the activity's methods;
//! * class-related resources: resources a class refers to directly, plus
//!   everything reachable from those through resource-to-resource references.
//!
//! Both closures are plain graph reachability. Traversal passes through
//! methods of any class, but only plain classes (and the activity itself) end
//! up in the activity closure; components and other activities are packaged
//! on their own.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::app_model::{AppPackage, ClassKind, LaunchKind, MethodId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown activity `{0}`")]
    UnknownActivity(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct CallEdge {
    pub from: MethodId,
    pub to: MethodId,
    pub dynamic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallGraph {
    nodes: BTreeSet<MethodId>,
    edges: BTreeSet<CallEdge>,
    successors: HashMap<MethodId, Vec<MethodId>>,
}

impl CallGraph {
    pub fn nodes(&self) -> &BTreeSet<MethodId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<CallEdge> {
        &self.edges
    }

    pub fn successors(&self, method: &MethodId) -> &[MethodId] {
        self.successors.get(method).map_or(&[], Vec::as_slice)
    }

    /// Every method reachable from `roots`, roots included.
    pub fn reachable_from<'a>(
        &self,
        roots: impl IntoIterator<Item = &'a MethodId>,
    ) -> BTreeSet<MethodId> {
        let mut seen: BTreeSet<MethodId> = BTreeSet::new();
        let mut queue: VecDeque<&MethodId> = VecDeque::new();
        for root in roots {
            if seen.insert(root.clone()) {
                queue.push_back(root);
            }
        }
        while let Some(m) = queue.pop_front() {
            for next in self.successors(m) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }
}

pub fn build_call_graph(app: &AppPackage, include_dynamic: bool) -> CallGraph {
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for class in app.classes.values() {
        for method in &class.methods {
            let from = MethodId::new(&class.name, &method.name);
            for call in &method.calls {
                if call.dynamic && !include_dynamic {
                    continue;
                }
                edges.insert(CallEdge {
                    from: from.clone(),
                    to: call.target.clone(),
                    dynamic: call.dynamic,
                });
            }
            nodes.insert(from);
        }
    }
    let mut successors: HashMap<MethodId, Vec<MethodId>> = HashMap::new();
    for edge in &edges {
        let list = successors.entry(edge.from.clone()).or_default();
        // A static and a dynamic call to the same target are two edges but
        // one successor.
        if list.last() != Some(&edge.to) {
            list.push(edge.to.clone());
        }
    }
    CallGraph {
        nodes,
        edges,
        successors,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceGraph {
    nodes: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
    successors: HashMap<String, Vec<String>>,
}

impl ResourceGraph {
    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(String, String)> {
        &self.edges
    }

    pub fn successors(&self, id: &str) -> &[String] {
        self.successors.get(id).map_or(&[], Vec::as_slice)
    }

    /// Resources reachable from `root` through one or more edges.
    pub fn reachable(&self, root: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([root]);
        while let Some(r) = queue.pop_front() {
            for next in self.successors(r) {
                if seen.insert(next.clone()) {
                    queue.push_back(next);
                }
            }
        }
        seen
    }
}

pub fn build_resource_graph(app: &AppPackage) -> ResourceGraph {
    let nodes: BTreeSet<String> = app.resources.keys().cloned().collect();
    let edges: BTreeSet<(String, String)> = app
        .resources
        .values()
        .flat_map(|r| r.refs.iter().map(|t| (r.id.clone(), t.clone())))
        .collect();
    let mut successors: HashMap<String, Vec<String>> = HashMap::new();
    for (from, to) in &edges {
        successors.entry(from.clone()).or_default().push(to.clone());
    }
    ResourceGraph {
        nodes,
        edges,
        successors,
    }
}

/// Direct class-to-resource references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferRelation {
    classes: BTreeSet<String>,
    pairs: BTreeSet<(String, String)>,
}

impl ReferRelation {
    pub fn pairs(&self) -> &BTreeSet<(String, String)> {
        &self.pairs
    }

    pub fn resources_of<'a>(&'a self, class: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.pairs
            .range((class.to_string(), String::new())..)
            .take_while(move |(c, _)| c == class)
            .map(|(_, r)| r)
    }
}

pub fn build_refer_relation(app: &AppPackage) -> ReferRelation {
    let pairs = app
        .classes
        .values()
        .flat_map(|c| {
            c.methods
                .iter()
                .flat_map(|m| m.resource_refs.iter())
                .map(|r| (c.name.clone(), r.clone()))
        })
        .collect();
    ReferRelation {
        classes: app.classes.keys().cloned().collect(),
        pairs,
    }
}

/// Plain classes owning a method reachable from any method of `class`.
fn reached_pojos(cg: &CallGraph, app: &AppPackage, class: &str) -> BTreeSet<String> {
    let roots: Vec<MethodId> = app
        .classes
        .get(class)
        .map(|c| c.method_ids().collect())
        .unwrap_or_default();
    cg.reachable_from(&roots)
        .iter()
        .map(MethodId::class)
        .filter(|c| app.class_kind(c) == Some(ClassKind::Pojo))
        .map(str::to_string)
        .collect()
}

/// The activity plus every plain class it reaches through the call graph.
pub fn activity_related_classes(
    cg: &CallGraph,
    app: &AppPackage,
    activity: &str,
) -> Result<BTreeSet<String>, GraphError> {
    if app.class_kind(activity) != Some(ClassKind::Activity) {
        return Err(GraphError::UnknownActivity(activity.to_string()));
    }
    let mut classes = reached_pojos(cg, app, activity);
    classes.insert(activity.to_string());
    Ok(classes)
}

/// A service, receiver or provider plus every plain class it reaches.
pub fn component_related_classes(
    cg: &CallGraph,
    app: &AppPackage,
    component: &str,
) -> Result<BTreeSet<String>, GraphError> {
    match app.class_kind(component) {
        Some(kind) if kind.is_component() => {}
        _ => return Err(GraphError::UnknownClass(component.to_string())),
    }
    let mut classes = reached_pojos(cg, app, component);
    classes.insert(component.to_string());
    Ok(classes)
}

/// Resources the class refers to, closed under resource references.
pub fn class_related_resources(
    rg: &ResourceGraph,
    refer: &ReferRelation,
    class: &str,
) -> Result<BTreeSet<String>, GraphError> {
    if !refer.classes.contains(class) {
        return Err(GraphError::UnknownClass(class.to_string()));
    }
    let mut out = BTreeSet::new();
    for r in refer.resources_of(class) {
        if out.insert(r.clone()) {
            out.extend(rg.reachable(r));
        }
    }
    Ok(out)
}

/// Closure of a set of resources under resource references, inputs included.
pub fn resource_closure<'a>(
    rg: &ResourceGraph,
    roots: impl IntoIterator<Item = &'a String>,
) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for r in roots {
        if out.insert(r.clone()) {
            out.extend(rg.reachable(r));
        }
    }
    out
}

/// Precomputed closures for one package over its static call graph.
#[derive(Debug, Clone)]
pub struct ClosureIndex {
    activity_classes: BTreeMap<String, BTreeSet<String>>,
    component_classes: BTreeMap<String, BTreeSet<String>>,
    class_resources: BTreeMap<String, BTreeSet<String>>,
    rg: ResourceGraph,
}

impl ClosureIndex {
    pub fn new(app: &AppPackage) -> Self {
        Self::with_call_graph(app, &build_call_graph(app, false))
    }

    pub fn with_call_graph(app: &AppPackage, cg: &CallGraph) -> Self {
        let rg = build_resource_graph(app);
        let refer = build_refer_relation(app);
        let activity_classes = app
            .activities()
            .into_iter()
            .map(|a| {
                let set = activity_related_classes(cg, app, &a).expect("activity exists");
                (a, set)
            })
            .collect();
        let component_classes = app
            .components()
            .into_iter()
            .map(|c| {
                let set = component_related_classes(cg, app, &c).expect("component exists");
                (c, set)
            })
            .collect();
        let class_resources = app
            .classes
            .keys()
            .map(|c| {
                let set = class_related_resources(&rg, &refer, c).expect("class exists");
                (c.clone(), set)
            })
            .collect();
        ClosureIndex {
            activity_classes,
            component_classes,
            class_resources,
            rg,
        }
    }

    pub fn activity_classes(&self, activity: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.activity_classes
            .get(activity)
            .ok_or_else(|| GraphError::UnknownActivity(activity.to_string()))
    }

    pub fn component_classes(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.component_classes.iter()
    }

    pub fn class_resources(&self, class: &str) -> Result<&BTreeSet<String>, GraphError> {
        self.class_resources
            .get(class)
            .ok_or_else(|| GraphError::UnknownClass(class.to_string()))
    }

    /// Union of class-related resources over `classes`.
    pub fn resources_of_classes<'a>(
        &self,
        classes: impl IntoIterator<Item = &'a String>,
    ) -> BTreeSet<String> {
        classes
            .into_iter()
            .filter_map(|c| self.class_resources.get(c))
            .flatten()
            .cloned()
            .collect()
    }

    pub fn resource_closure<'a>(&self, roots: impl IntoIterator<Item = &'a String>) -> BTreeSet<String> {
        resource_closure(&self.rg, roots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Via {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Transition {
    pub from: String,
    pub to: String,
    pub via: Via,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActivityTransitionGraph {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<Transition>,
}

impl ActivityTransitionGraph {
    pub fn successors<'a>(&'a self, activity: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.from == activity)
            .map(|e| e.to.as_str())
    }
}

/// Explicit launches give one edge; implicit launches give an edge to every
/// activity with a matching filter.
pub fn build_atg(app: &AppPackage) -> ActivityTransitionGraph {
    let nodes = app.activities();
    let mut edges = BTreeSet::new();
    for from in &nodes {
        let class = &app.classes[from];
        for site in class.launch_sites() {
            match &site.kind {
                LaunchKind::Explicit { target } => {
                    edges.insert(Transition {
                        from: from.clone(),
                        to: target.clone(),
                        via: Via::Explicit,
                    });
                }
                LaunchKind::Implicit { action, categories } => {
                    for decl in &app.manifest.activities {
                        if decl.matches(action, categories) {
                            edges.insert(Transition {
                                from: from.clone(),
                                to: decl.class_name.clone(),
                                via: Via::Implicit,
                            });
                        }
                    }
                }
            }
        }
    }
    ActivityTransitionGraph { nodes, edges }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActivityRole {
    /// No predecessor and no successor.
    Isolated,
    /// Predecessors only.
    ReceivingOnly,
    /// Both predecessors and successors.
    Mediate,
    /// Successors only.
    Source,
}

pub fn classify_activity(
    atg: &ActivityTransitionGraph,
    activity: &str,
) -> Result<ActivityRole, GraphError> {
    if !atg.nodes.contains(activity) {
        return Err(GraphError::UnknownActivity(activity.to_string()));
    }
    let has_in = atg.edges.iter().any(|e| e.to == activity);
    let has_out = atg.edges.iter().any(|e| e.from == activity);
    Ok(match (has_in, has_out) {
        (false, false) => ActivityRole::Isolated,
        (true, false) => ActivityRole::ReceivingOnly,
        (true, true) => ActivityRole::Mediate,
        (false, true) => ActivityRole::Source,
    })
}

/// Graphviz dump: one node per class and resource; class edges are labeled
/// `static` or `dynamic`.
pub fn to_dot(app: &AppPackage) -> String {
    let mut out = String::from("digraph package {\n");
    for class in app.classes.values() {
        let _ = writeln!(out, "  \"{}\" [shape=box, label=\"{} ({:?})\"];", class.name, class.name, class.kind);
    }
    for res in app.resources.keys() {
        let _ = writeln!(out, "  \"{res}\" [shape=ellipse];");
    }
    let mut class_edges: BTreeSet<(&str, &str, bool)> = BTreeSet::new();
    for class in app.classes.values() {
        for method in &class.methods {
            for call in &method.calls {
                if call.target.class() != class.name {
                    class_edges.insert((&class.name, call.target.class(), call.dynamic));
                }
            }
        }
    }
    for (from, to, dynamic) in class_edges {
        let label = if dynamic { "dynamic" } else { "static" };
        let style = if dynamic { ", style=dashed" } else { "" };
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\" [label=\"{label}\"{style}];");
    }
    for (class, res) in build_refer_relation(app).pairs() {
        let _ = writeln!(out, "  \"{class}\" -> \"{res}\" [label=\"refer\"];");
    }
    for (from, to) in build_resource_graph(app).edges() {
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
    }
    out.push_str("}\n");
    out
}
