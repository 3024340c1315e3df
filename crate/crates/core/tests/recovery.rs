mod common;

use std::collections::BTreeSet;

use bundlesplit::corpus::{gen_app, gen_scripts, CorpusParams};
use bundlesplit::decomposer::{decompose, WhiteList};
use bundlesplit::exec::ItemKind;
use bundlesplit::recovery::{execute_script, recover, RecoveryError};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recovery_converges_and_stays_partitioned(seed in any::<u64>(), index in 0u64..1_000, mask in any::<u64>()) {
        let app = common::app(seed, index);
        let sel = common::selection(&app, mask);
        let plan = decompose(&app, &sel, &WhiteList::default()).unwrap();
        let scripts = gen_scripts(&app);
        let (fixed, report) = recover(&app, &plan, &scripts).unwrap();

        for s in &scripts {
            let trace = execute_script(&app, &fixed, s).unwrap();
            prop_assert!(trace.reached_target && trace.fault.is_none(), "{}", s.name);
        }
        for f in fixed.features.values() {
            prop_assert!(f.classes.is_disjoint(&fixed.base.classes));
            prop_assert!(f.resources.is_disjoint(&fixed.base.resources));
        }
        // Every addition was named by a fault.
        let named: BTreeSet<(ItemKind, String)> = report
            .bundles
            .iter()
            .flat_map(|b| b.added.iter().map(|i| (i.kind, i.name.clone())))
            .collect();
        let grown_classes = common::union_classes(&fixed);
        let grown_resources = common::union_resources(&fixed);
        for c in grown_classes.difference(&common::union_classes(&plan)) {
            prop_assert!(named.contains(&(ItemKind::Class, c.clone())));
        }
        for r in grown_resources.difference(&common::union_resources(&plan)) {
            prop_assert!(named.contains(&(ItemKind::Resource, r.clone())));
        }
        let per_bundle: usize = report.bundles.iter().map(|b| b.iterations).sum();
        prop_assert_eq!(per_bundle, report.total_iterations);
        prop_assert!(report.total_iterations <= app.classes.len() + app.resources.len());
        prop_assert_eq!(fixed.base.size_bytes, app.class_size(&fixed.base.classes) + app.resource_size(&fixed.base.resources) + app.asset_size() + app.other_size());
    }

    #[test]
    fn static_complete_apps_need_no_recovery(seed in any::<u64>(), index in 0u64..1_000, mask in any::<u64>()) {
        let params = CorpusParams { seed, dynamic_edge_rate: 0.0, ..CorpusParams::default() };
        let app = gen_app(&params, index).unwrap();
        let sel = common::selection(&app, mask);
        let plan = decompose(&app, &sel, &WhiteList::default()).unwrap();
        let (fixed, report) = recover(&app, &plan, &gen_scripts(&app)).unwrap();
        prop_assert_eq!(report.total_iterations, 0);
        prop_assert_eq!(fixed, plan);
    }
}

#[test]
fn missing_target_is_reported() {
    let app = common::app(3, 3);
    let plan = decompose(&app, &app.activities(), &WhiteList::default()).unwrap();
    let mut script = gen_scripts(&app).remove(0);
    script.target_activity = "Nowhere".into();
    assert!(matches!(
        recover(&app, &plan, &[script]),
        Err(RecoveryError::TargetNotReached(_))
    ));
}
