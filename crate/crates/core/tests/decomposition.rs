mod common;

use std::collections::BTreeSet;

use bundlesplit::app_model::total_size;
use bundlesplit::corpus::gen_app;
use bundlesplit::decomposer::{decompose, rewrite_launch_sites, WhiteList};
use bundlesplit::graphs::ClosureIndex;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closures_match_fixpoint(seed in any::<u64>(), index in 0u64..1_000) {
        let app = gen_app(&common::bounded_params(seed), index).unwrap();
        let index = ClosureIndex::new(&app);
        for a in app.activities() {
            prop_assert_eq!(index.activity_classes(&a).unwrap(), &common::arcls(&app, &a));
        }
        for c in app.classes.keys() {
            prop_assert_eq!(index.class_resources(c).unwrap(), &common::crres(&app, c));
        }
    }

    #[test]
    fn partition_invariants(seed in any::<u64>(), index in 0u64..1_000, mask in any::<u64>()) {
        let app = common::app(seed, index);
        let sel = common::selection(&app, mask);
        let plan = decompose(&app, &sel, &WhiteList::default()).unwrap();

        let violations = common::partition_violations(&app, &sel, &plan);
        prop_assert!(violations.is_empty(), "{:?}", violations);
        prop_assert_eq!(plan.original_size, total_size(&app));
    }

    #[test]
    fn decomposition_is_deterministic(seed in any::<u64>(), index in 0u64..1_000, mask in any::<u64>()) {
        let app = common::app(seed, index);
        let sel = common::selection(&app, mask);
        prop_assert_eq!(
            decompose(&app, &sel, &WhiteList::default()).unwrap(),
            decompose(&app.clone(), &sel.clone(), &WhiteList::default()).unwrap()
        );
    }

    #[test]
    fn whitelist_never_loses_members(
        seed in any::<u64>(),
        index in 0u64..1_000,
        mask in any::<u64>(),
        pick in any::<u64>(),
    ) {
        let app = common::app(seed, index);
        let sel = common::selection(&app, mask);
        let before = decompose(&app, &sel, &WhiteList::default()).unwrap();
        let mut whitelist = WhiteList::default();
        for (i, c) in app.classes.values().filter(|c| c.kind == bundlesplit::app_model::ClassKind::Pojo).enumerate() {
            if pick >> (i % 64) & 1 == 1 {
                whitelist.classes.insert(c.name.clone());
            }
        }
        for (i, r) in app.resources.keys().enumerate() {
            if pick >> ((i + 17) % 64) & 1 == 1 {
                whitelist.resources.insert(r.clone());
            }
        }
        let after = decompose(&app, &sel, &whitelist).unwrap();
        prop_assert!(before.base.classes.is_subset(&after.base.classes));
        prop_assert!(before.base.resources.is_subset(&after.base.resources));
        prop_assert!(whitelist.classes.is_subset(&after.base.classes));
        prop_assert!(whitelist.resources.is_subset(&after.base.resources));
        for (a, f) in &before.features {
            let g = &after.features[a];
            prop_assert!(f.classes.iter().all(|c| g.classes.contains(c) || after.base.classes.contains(c)));
            prop_assert!(f.resources.iter().all(|r| g.resources.contains(r) || after.base.resources.contains(r)));
        }
    }

    #[test]
    fn rewrite_hooks_exactly_remote_explicit_launches(seed in any::<u64>(), index in 0u64..1_000, mask in any::<u64>()) {
        let app = common::app(seed, index);
        let sel = common::selection(&app, mask);
        let plan = decompose(&app, &sel, &WhiteList::default()).unwrap();
        let rewritten = rewrite_launch_sites(&app, &plan);
        for (name, class) in &app.classes {
            let new = &rewritten.classes[name];
            prop_assert_eq!(class.size_bytes, new.size_bytes);
            for (old, site) in class.launch_sites().zip(new.launch_sites()) {
                prop_assert_eq!(&old.kind, &site.kind);
                let expect = match &old.kind {
                    bundlesplit::app_model::LaunchKind::Explicit { target } => !sel.contains(target),
                    bundlesplit::app_model::LaunchKind::Implicit { .. } => old.hooked,
                };
                prop_assert_eq!(site.hooked, expect);
            }
        }
    }
}

#[test]
fn all_activities_selected_leaves_no_features() {
    let app = common::app(1, 4);
    let plan = decompose(&app, &app.activities(), &WhiteList::default()).unwrap();
    assert!(plan.features.is_empty());
    let referenced: BTreeSet<String> = plan
        .base
        .classes
        .iter()
        .flat_map(|c| common::crres(&app, c))
        .collect();
    assert_eq!(plan.base.resources, referenced);
}
