//! Small hand-built packages used by tests, the guide and the CLI's smoke runs.

use crate::app_model::{
    ActivityDecl, AppPackage, AssetItem, ClassKind, ClassUnit, ComponentDecl, ComponentKind,
    LaunchSite, Manifest, MethodDef, OtherPayload, ResourceItem,
};
use crate::recovery::{Action, ReplayScript};

pub const R1: &str = "layout/R1";
pub const R2: &str = "layout/R2";
pub const R3: &str = "drawable/R3";
pub const R4: &str = "layout/R4";

/// Three activities, one service, two plain classes and four resources.
///
/// * `A1` (launcher) calls `C0.m` and refers `R1`, which refers `R3`.
/// * `A2` calls `C0.m` and refers `R2`.
/// * `A3` calls `C0.m` and refers `R2` and `R4`.
/// * `C0.m` reaches `C2.run` only through a dynamic call.
/// * `A1.onClick` launches `A2` (site 0) and `A3` (site 1).
///
/// Declared sizes add up to 3,900 bytes.
pub fn worked_example() -> AppPackage {
    let classes = vec![
        ClassUnit::new("A1", ClassKind::Activity, 600)
            .with_method(MethodDef::new("onCreate").call("C0", "m").refer(R1))
            .with_method(
                MethodDef::new("onClick")
                    .launch(LaunchSite::explicit("A2"))
                    .launch(LaunchSite::explicit("A3")),
            ),
        ClassUnit::new("A2", ClassKind::Activity, 500)
            .with_method(MethodDef::new("onCreate").call("C0", "m").refer(R2)),
        ClassUnit::new("A3", ClassKind::Activity, 400).with_method(
            MethodDef::new("onCreate")
                .call("C0", "m")
                .refer(R2)
                .refer(R4),
        ),
        ClassUnit::new("C0", ClassKind::Pojo, 300)
            .with_method(MethodDef::new("m").call_dynamic("C2", "run")),
        ClassUnit::new("C2", ClassKind::Pojo, 200).with_method(MethodDef::new("run")),
        ClassUnit::new("S0", ClassKind::Service, 100).with_method(MethodDef::new("onStartCommand")),
    ];
    let resources = vec![
        ResourceItem::new(R1, 300).with_ref(R3),
        ResourceItem::new(R2, 250),
        ResourceItem::new(R3, 200),
        ResourceItem::new(R4, 350),
    ];
    AppPackage::new(
        "example.workflow",
        1,
        Manifest {
            launcher_activity: "A1".into(),
            activities: vec![
                ActivityDecl::internal("A1"),
                ActivityDecl::internal("A2"),
                ActivityDecl::internal("A3"),
            ],
            other_components: vec![ComponentDecl {
                class_name: "S0".into(),
                kind: ComponentKind::Service,
            }],
        },
        classes,
        resources,
        vec![AssetItem {
            path: "www/index.html".into(),
            size_bytes: 400,
        }],
        vec![OtherPayload {
            name: "lib/libnative.so".into(),
            size_bytes: 300,
        }],
    )
    .expect("worked example is valid")
}

/// Replay scripts for [`worked_example`]: one per activity.
pub fn worked_example_scripts() -> Vec<ReplayScript> {
    vec![
        ReplayScript::new("launch", "A1", vec![Action::Launch]),
        ReplayScript::new("a2", "A2", vec![Action::Launch, Action::Navigate(0)]),
        ReplayScript::new("a3", "A3", vec![Action::Launch, Action::Navigate(1)]),
    ]
}

/// A launcher whose `onCreate` reaches `hidden` plain classes one after the
/// other through dynamic calls only: `Main -> P0 ~> H1 ~> H2 ~> ... ~> Hk`.
///
/// Every `H` class is invisible to static analysis, so a replay of the launch
/// uncovers exactly one of them per run.
pub fn hidden_chain(hidden: usize) -> AppPackage {
    let mut classes = vec![
        ClassUnit::new("Main", ClassKind::Activity, 100)
            .with_method(MethodDef::new("onCreate").call("P0", "step")),
    ];
    let mut p0 = MethodDef::new("step");
    if hidden > 0 {
        p0 = p0.call_dynamic("H1", "step");
    }
    classes.push(ClassUnit::new("P0", ClassKind::Pojo, 50).with_method(p0));
    for i in 1..=hidden {
        let mut step = MethodDef::new("step");
        if i < hidden {
            step = step.call_dynamic(&format!("H{}", i + 1), "step");
        }
        classes.push(ClassUnit::new(format!("H{i}"), ClassKind::Pojo, 10).with_method(step));
    }
    AppPackage::new(
        format!("example.chain{hidden}"),
        1,
        Manifest {
            launcher_activity: "Main".into(),
            activities: vec![ActivityDecl::internal("Main")],
            other_components: vec![],
        },
        classes,
        vec![],
        vec![],
        vec![],
    )
    .expect("hidden chain is valid")
}
