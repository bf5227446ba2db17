mod common;

use std::collections::BTreeSet;

use mpseg::taxonomy::{
    group_of_labels, subgroup_of_labels, subgroup_of_labels_with, vessel_group, RoutingVariant, SegmentClass,
    SubGroup, VesselGroup,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn as_str(g: SubGroup) -> &'static str {
    match g {
        SubGroup::Rca => "RCA",
        SubGroup::Lcx => "LCX",
        SubGroup::Lad => "LAD",
    }
}

#[test]
fn singletons_and_random_subsets_match_reference() {
    for c in SegmentClass::all() {
        let set = BTreeSet::from([c]);
        let names = BTreeSet::from([c.name()]);
        assert_eq!(as_str(subgroup_of_labels(&set).unwrap()), common::reference_route(&names));
        assert_eq!(group_of_labels(&set).unwrap(), vessel_group(c));
    }
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let all: Vec<SegmentClass> = SegmentClass::all().collect();
    for _ in 0..10_000 {
        let set: BTreeSet<SegmentClass> = loop {
            let s: BTreeSet<_> = all.iter().copied().filter(|_| r.random_bool(0.15)).collect();
            if !s.is_empty() {
                break s;
            }
        };
        let names: BTreeSet<&str> = set.iter().map(|c| c.name()).collect();
        assert_eq!(as_str(subgroup_of_labels(&set).unwrap()), common::reference_route(&names));
    }
}

#[test]
fn group_split() {
    let rca = SegmentClass::all().filter(|c| vessel_group(*c) == VesselGroup::Rca).count();
    assert_eq!((rca, SegmentClass::COUNT - rca), (8, 17));
}

proptest! {
    #[test]
    fn routing_is_set_semantic(ids in prop::collection::vec(1u32..=25, 1..10)) {
        let forward: BTreeSet<SegmentClass> = ids.iter().map(|&i| SegmentClass::from_id(i).unwrap()).collect();
        let backward: BTreeSet<SegmentClass> = ids.iter().rev().map(|&i| SegmentClass::from_id(i).unwrap()).collect();
        prop_assert_eq!(subgroup_of_labels(&forward).unwrap(), subgroup_of_labels(&backward).unwrap());
        let sub = subgroup_of_labels(&forward).unwrap();
        prop_assert_eq!(sub.group(), group_of_labels(&forward).unwrap());
        // The variant only ever moves LAD answers to LCX.
        let v = subgroup_of_labels_with(&forward, RoutingVariant::LcxIncludes12ab).unwrap();
        prop_assert!(v == sub || (sub == SubGroup::Lad && v == SubGroup::Lcx));
    }
}
