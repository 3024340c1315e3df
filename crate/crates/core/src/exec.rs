//! Simulated execution shared by the replay simulator, the virtual runtime and
//! direct (undecomposed) execution.
//!
//! Invoking a method touches its resource references (and everything they
//! refer to), then runs its calls in order, static and dynamic alike. The
//! first class or resource the host cannot supply stops execution and is
//! reported as a [`MissingItem`]. Each method runs at most once per
//! invocation.
//!
//! Activities follow a small lifecycle: starting one pauses and stops the
//! current top, then emits `create`, runs the entry method, and emits
//! `start`/`resume`. Finishing one emits `pause`/`stop`/`destroy` and brings
//! the previous activity back with `restart`/`start`/`resume`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app_model::{ClassUnit, LaunchSite, Manifest, MethodId, ResourceItem, ENTRY_METHOD};
use crate::recovery::{Action, ReplayScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Callback {
    Create,
    Start,
    Resume,
    Pause,
    Stop,
    Restart,
    Destroy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Lifecycle { activity: String, callback: Callback },
    Invoke { method: MethodId },
}

impl TraceEvent {
    fn lifecycle(activity: &str, callback: Callback) -> Self {
        TraceEvent::Lifecycle {
            activity: activity.to_string(),
            callback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemKind {
    Class,
    Resource,
}

/// A class or resource execution needed but could not find.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MissingItem {
    pub kind: ItemKind,
    pub name: String,
    /// Method id or resource id that made the reference.
    pub raising_context: String,
}

impl MissingItem {
    pub fn class(name: &str, context: &str) -> Self {
        MissingItem {
            kind: ItemKind::Class,
            name: name.to_string(),
            raising_context: context.to_string(),
        }
    }

    pub fn resource(name: &str, context: &str) -> Self {
        MissingItem {
            kind: ItemKind::Resource,
            name: name.to_string(),
            raising_context: context.to_string(),
        }
    }
}

pub trait CodeView {
    fn class(&self, name: &str) -> Option<&ClassUnit>;
    fn resource(&self, id: &str) -> Option<&ResourceItem>;
}

impl CodeView for crate::app_model::AppPackage {
    fn class(&self, name: &str) -> Option<&ClassUnit> {
        self.classes.get(name)
    }

    fn resource(&self, id: &str) -> Option<&ResourceItem> {
        self.resources.get(id)
    }
}

struct Walker<'v, 'e> {
    view: &'v dyn CodeView,
    executed: HashSet<MethodId>,
    touched: HashSet<String>,
    events: &'e mut Vec<TraceEvent>,
}

impl<'v> Walker<'v, '_> {
    fn call(&mut self, method: &MethodId, caller: &str) -> Result<(), MissingItem> {
        if !self.executed.insert(method.clone()) {
            return Ok(());
        }
        let view = self.view;
        let def = view
            .class(method.class())
            .and_then(|c| c.method(method.method()))
            .ok_or_else(|| MissingItem::class(method.class(), caller))?;
        self.events.push(TraceEvent::Invoke {
            method: method.clone(),
        });
        for r in &def.resource_refs {
            self.touch(r, method.as_str())?;
        }
        for call in &def.calls {
            self.call(&call.target, method.as_str())?;
        }
        Ok(())
    }

    fn touch(&mut self, id: &str, context: &str) -> Result<(), MissingItem> {
        if !self.touched.insert(id.to_string()) {
            return Ok(());
        }
        let view = self.view;
        let res = view
            .resource(id)
            .ok_or_else(|| MissingItem::resource(id, context))?;
        for r in &res.refs {
            self.touch(r, id)?;
        }
        Ok(())
    }
}

/// Runs `method` and everything it calls.
pub fn invoke(
    view: &dyn CodeView,
    method: &MethodId,
    caller: &str,
    events: &mut Vec<TraceEvent>,
) -> Result<(), MissingItem> {
    Walker {
        view,
        executed: HashSet::new(),
        touched: HashSet::new(),
        events,
    }
    .call(method, caller)
}

/// Emits `create`, runs the entry method if the class has one, then emits
/// `start` and `resume`.
pub fn create_activity(
    view: &dyn CodeView,
    activity: &str,
    launched_from: &str,
    events: &mut Vec<TraceEvent>,
) -> Result<(), MissingItem> {
    let class = view
        .class(activity)
        .ok_or_else(|| MissingItem::class(activity, launched_from))?;
    events.push(TraceEvent::lifecycle(activity, Callback::Create));
    if class.method(ENTRY_METHOD).is_some() {
        invoke(view, &MethodId::new(activity, ENTRY_METHOD), activity, events)?;
    }
    events.push(TraceEvent::lifecycle(activity, Callback::Start));
    events.push(TraceEvent::lifecycle(activity, Callback::Resume));
    Ok(())
}

/// Outcome of an activity-start request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Opened {
    Target(String),
    Missing(MissingItem),
}

/// What a script driver needs from its environment.
pub trait Platform {
    type Error;

    /// Class visible while `context` is the foreground activity.
    fn class(&self, context: &str, name: &str) -> Option<&ClassUnit>;
    fn resource(&self, context: &str, id: &str) -> Option<&ResourceItem>;
    fn manifest(&self) -> &Manifest;
    fn top(&self) -> Option<&str>;
    /// Resolves `site` and makes its target runnable.
    fn open(&mut self, from: &str, site: &LaunchSite) -> Result<Opened, Self::Error>;
    fn push(&mut self, activity: &str) -> Result<(), Self::Error>;
    fn pop(&mut self);
    fn record(&mut self, events: Vec<TraceEvent>);
}

struct Scoped<'a, P: ?Sized> {
    platform: &'a P,
    context: &'a str,
}

impl<P: Platform + ?Sized> CodeView for Scoped<'_, P> {
    fn class(&self, name: &str) -> Option<&ClassUnit> {
        self.platform.class(self.context, name)
    }

    fn resource(&self, id: &str) -> Option<&ResourceItem> {
        self.platform.resource(self.context, id)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError<E> {
    #[error("invalid script: {0}")]
    InvalidScript(String),
    #[error(transparent)]
    Platform(E),
}

/// Result of one driver step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Completed; lists the activities created along the way.
    Done(Vec<String>),
    Fault { item: MissingItem, context: String },
}

pub fn start<P: Platform>(p: &mut P, activity: &str, from: &str) -> Result<Step, P::Error> {
    let mut events = Vec::new();
    if let Some(top) = p.top() {
        events.push(TraceEvent::lifecycle(top, Callback::Pause));
        events.push(TraceEvent::lifecycle(top, Callback::Stop));
    }
    p.push(activity)?;
    let result = create_activity(
        &Scoped {
            platform: &*p,
            context: activity,
        },
        activity,
        from,
        &mut events,
    );
    p.record(events);
    Ok(match result {
        Ok(()) => Step::Done(vec![activity.to_string()]),
        Err(item) => Step::Fault {
            item,
            context: activity.to_string(),
        },
    })
}

/// Finishes the top activity; returns it, or `None` on an empty stack.
pub fn finish_top<P: Platform>(p: &mut P) -> Option<String> {
    let top = p.top()?.to_string();
    let mut events = vec![
        TraceEvent::lifecycle(&top, Callback::Pause),
        TraceEvent::lifecycle(&top, Callback::Stop),
        TraceEvent::lifecycle(&top, Callback::Destroy),
    ];
    p.pop();
    if let Some(next) = p.top() {
        events.push(TraceEvent::lifecycle(next, Callback::Restart));
        events.push(TraceEvent::lifecycle(next, Callback::Start));
        events.push(TraceEvent::lifecycle(next, Callback::Resume));
    }
    p.record(events);
    Some(top)
}

/// Shows each welcome activity in declaration order (each finishes itself
/// once created), then starts the launcher.
pub fn launch<P: Platform>(p: &mut P) -> Result<Step, P::Error> {
    let manifest = p.manifest();
    let launcher = manifest.launcher_activity.clone();
    let welcome: Vec<String> = manifest
        .welcome_activities()
        .filter(|w| *w != launcher)
        .map(str::to_string)
        .collect();
    let mut created = Vec::new();
    for w in &welcome {
        match start(p, w, "<launch>")? {
            Step::Done(mut list) => created.append(&mut list),
            fault => return Ok(fault),
        }
        finish_top(p);
    }
    match start(p, &launcher, "<launch>")? {
        Step::Done(mut list) => {
            created.append(&mut list);
            Ok(Step::Done(created))
        }
        fault => Ok(fault),
    }
}

pub fn tap<P: Platform>(p: &mut P, method: &MethodId) -> Result<Step, ExecError<P::Error>> {
    let top = p
        .top()
        .ok_or_else(|| ExecError::InvalidScript("tap with no running activity".into()))?
        .to_string();
    let mut events = Vec::new();
    let result = invoke(
        &Scoped {
            platform: &*p,
            context: &top,
        },
        method,
        &top,
        &mut events,
    );
    p.record(events);
    Ok(match result {
        Ok(()) => Step::Done(Vec::new()),
        Err(item) => Step::Fault { item, context: top },
    })
}

/// Follows launch site `index` of the foreground activity.
pub fn follow<P: Platform>(p: &mut P, index: usize) -> Result<Step, ExecError<P::Error>> {
    let top = p
        .top()
        .ok_or_else(|| ExecError::InvalidScript("navigate with no running activity".into()))?
        .to_string();
    let site = p
        .class(&top, &top)
        .and_then(|c| c.launch_sites().nth(index).cloned())
        .ok_or_else(|| ExecError::InvalidScript(format!("`{top}` has no launch site {index}")))?;
    match p.open(&top, &site).map_err(ExecError::Platform)? {
        Opened::Target(target) => start(p, &target, &top).map_err(ExecError::Platform),
        Opened::Missing(item) => Ok(Step::Fault { item, context: top }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Faulted,
}

/// Record of one script run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub executed: Vec<(Action, Outcome)>,
    pub fault: Option<MissingItem>,
    /// Foreground activity whose code raised the fault.
    pub fault_context: Option<String>,
    pub reached_target: bool,
}

/// Runs `script` until it ends or the first missing item.
pub fn run_script<P: Platform>(
    p: &mut P,
    script: &ReplayScript,
) -> Result<RunTrace, ExecError<P::Error>> {
    let mut trace = RunTrace {
        executed: Vec::new(),
        fault: None,
        fault_context: None,
        reached_target: false,
    };
    for action in &script.actions {
        let step = match action {
            Action::Launch => launch(p).map_err(ExecError::Platform)?,
            Action::Tap(method) => tap(p, method)?,
            Action::Navigate(index) => follow(p, *index)?,
            Action::Back => {
                finish_top(p).ok_or_else(|| {
                    ExecError::InvalidScript("back with no running activity".into())
                })?;
                Step::Done(Vec::new())
            }
        };
        match step {
            Step::Done(created) => {
                trace.executed.push((action.clone(), Outcome::Completed));
                if created.iter().any(|a| a == &script.target_activity) {
                    trace.reached_target = true;
                }
            }
            Step::Fault { item, context } => {
                trace.executed.push((action.clone(), Outcome::Faulted));
                trace.fault = Some(item);
                trace.fault_context = Some(context);
                trace.reached_target = false;
                break;
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn invoke_follows_dynamic_calls() {
        let app = fixtures::worked_example();
        let mut events = Vec::new();
        invoke(&app, &MethodId::new("A1", "onCreate"), "A1", &mut events).unwrap();
        let methods: Vec<String> = events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Invoke { method } => Some(method.to_string()),
                _ => None,
            })
            .collect();
        assert_eq!(methods, ["A1.onCreate", "C0.m", "C2.run"]);
    }

    struct Without<'a>(&'a crate::app_model::AppPackage, &'a str);

    impl CodeView for Without<'_> {
        fn class(&self, name: &str) -> Option<&ClassUnit> {
            (name != self.1).then(|| self.0.classes.get(name)).flatten()
        }
        fn resource(&self, id: &str) -> Option<&ResourceItem> {
            (id != self.1).then(|| self.0.resources.get(id)).flatten()
        }
    }

    #[test]
    fn first_absent_class_is_reported() {
        let app = fixtures::worked_example();
        let err = invoke(
            &Without(&app, "C2"),
            &MethodId::new("A1", "onCreate"),
            "A1",
            &mut Vec::new(),
        )
        .unwrap_err();
        assert_eq!(err, MissingItem::class("C2", "C0.m"));
    }

    #[test]
    fn transitive_resource_reports_referencing_resource() {
        let app = fixtures::worked_example();
        let err = invoke(
            &Without(&app, fixtures::R3),
            &MethodId::new("A1", "onCreate"),
            "A1",
            &mut Vec::new(),
        )
        .unwrap_err();
        assert_eq!(err, MissingItem::resource(fixtures::R3, fixtures::R1));
    }

    #[test]
    fn create_emits_lifecycle_around_entry() {
        let app = fixtures::worked_example();
        let mut events = Vec::new();
        create_activity(&app, "A3", "A1", &mut events).unwrap();
        assert_eq!(
            events.first(),
            Some(&TraceEvent::lifecycle("A3", Callback::Create))
        );
        assert_eq!(
            &events[events.len() - 2..],
            &[
                TraceEvent::lifecycle("A3", Callback::Start),
                TraceEvent::lifecycle("A3", Callback::Resume)
            ]
        );
    }
}
