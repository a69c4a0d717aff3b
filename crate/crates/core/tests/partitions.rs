use std::collections::BTreeSet;

use obfs_core::partition::{
    enumerate_partitions, is_mesh, is_refinement, is_strict_refinement, labeled_partition_count,
    validate,
};
use obfs_core::{FeaturePartition, FeatureSet, ObfsError, PartitionCode, PartitionViolation};
use proptest::prelude::*;

/// Builds a partition of `{0..n}` from a block index and a label per feature
/// group (blocks that end up empty are dropped).
fn from_assignment(block_of: &[usize], good: &[bool]) -> FeaturePartition {
    let n = block_of.len();
    let (mut g, mut b) = (Vec::new(), Vec::new());
    for k in 0..n {
        let block: FeatureSet = (0..n).filter(|&f| block_of[f] == k).collect();
        if block.is_empty() {
            continue;
        }
        if good[k] {
            g.push(block);
        } else {
            b.push(block);
        }
    }
    FeaturePartition::new(g, b)
}

fn arb_partition(max: usize) -> impl Strategy<Value = FeaturePartition> {
    (1..=max).prop_flat_map(|n| {
        (
            prop::collection::vec(0..n, n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(a, g)| from_assignment(&a, &g))
    })
}

/// Every labeled partition of `{0..n}` by brute force over all block
/// assignments, deduplicated by canonical form.
fn brute_force(n: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut assign = vec![0usize; n];
    loop {
        for bits in 0u32..1 << n {
            let good: Vec<bool> = (0..n).map(|k| bits >> k & 1 == 1).collect();
            out.insert(from_assignment(&assign, &good).to_string());
        }
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            assign[i] += 1;
            if assign[i] < n {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn enumeration_matches_brute_force() {
    for n in 1..=6 {
        let listed: Vec<String> = enumerate_partitions(&FeatureSet::range(n))
            .unwrap()
            .map(|p| p.to_string())
            .collect();
        let unique: BTreeSet<String> = listed.iter().cloned().collect();
        assert_eq!(unique.len(), listed.len(), "duplicates at n = {n}");
        assert_eq!(unique, brute_force(n), "n = {n}");
        assert_eq!(listed.len() as u128, labeled_partition_count(n));
    }
}

#[test]
fn enumeration_is_deterministic_and_valid() {
    let u = FeatureSet::new([2, 5, 7]);
    let a: Vec<_> = enumerate_partitions(&u).unwrap().collect();
    let b: Vec<_> = enumerate_partitions(&u).unwrap().collect();
    assert_eq!(a, b);
    for p in &a {
        validate(p, &u).unwrap();
    }
    assert_eq!(a.len(), 22);
}

#[test]
fn refinement_implies_mesh_exhaustively() {
    for n in 1..=4 {
        let all: Vec<_> = enumerate_partitions(&FeatureSet::range(n))
            .unwrap()
            .collect();
        for p in &all {
            assert!(is_refinement(p, p).unwrap());
            assert!(!is_strict_refinement(p, p).unwrap());
            for q in &all {
                let r = is_refinement(p, q).unwrap();
                if r {
                    assert!(is_mesh(p, q).unwrap(), "{p} refines {q} but is not a mesh");
                }
                if r && is_refinement(q, p).unwrap() {
                    assert_eq!(p, q);
                }
            }
        }
    }
}

#[test]
fn literal_examples() {
    let p: FeaturePartition = "G:{0,1}|G:{3};B:{2}|B:{4,5}".parse().unwrap();
    assert_eq!(p.to_string(), "G:{0,1}|G:{3};B:{2}|B:{4,5}");
    assert_eq!(p.good_union(), FeatureSet::new([0, 1, 3]));
    let q: FeaturePartition = "G:{3}|G:{1,0};B:{5,4}|B:{2}".parse().unwrap();
    assert_eq!(p, q);
    let empty_good: FeaturePartition = ";B:{0}".parse().unwrap();
    assert_eq!(empty_good.to_string(), ";B:{0}");
}

#[test]
fn validation_names_the_problem() {
    let u = FeatureSet::range(3);
    let dup = FeaturePartition::new(vec![FeatureSet::new([0, 1])], vec![FeatureSet::new([1, 2])]);
    assert_eq!(
        validate(&dup, &u),
        Err(PartitionViolation::Duplicate { feature: 1 })
    );
    let missing = FeaturePartition::new(vec![FeatureSet::new([0])], vec![FeatureSet::new([2])]);
    assert_eq!(
        validate(&missing, &u),
        Err(PartitionViolation::Missing { feature: 1 })
    );
    let foreign = FeaturePartition::new(vec![FeatureSet::new([0, 1, 2, 3])], vec![]);
    assert_eq!(
        validate(&foreign, &u),
        Err(PartitionViolation::Foreign { feature: 3 })
    );
    let p: FeaturePartition = "G:{0};B:{1}".parse().unwrap();
    let q: FeaturePartition = "G:{0,1,2};".parse().unwrap();
    assert_eq!(is_mesh(&p, &q), Err(ObfsError::UniverseMismatch));
}

proptest! {
    #[test]
    fn canonical_form_is_idempotent(p in arb_partition(8)) {
        prop_assert_eq!(p.canonical(), p.canonical().canonical());
        prop_assert_eq!(&p.canonical(), &p);
    }

    #[test]
    fn literal_round_trips(p in arb_partition(10)) {
        let text = p.to_string();
        let back: FeaturePartition = text.parse().unwrap();
        prop_assert_eq!(&back, &p);
        prop_assert_eq!(back.to_string(), text);
    }

    #[test]
    fn codes_round_trip(p in arb_partition(12)) {
        let n = p.universe().len();
        let code = PartitionCode::from_partition(&p, n).unwrap();
        prop_assert_eq!(code.decode(n), p);
    }

    #[test]
    fn generated_partitions_are_valid(p in arb_partition(9)) {
        let n = p.universe().len();
        prop_assert!(validate(&p, &FeatureSet::range(n)).is_ok());
    }

    #[test]
    fn relabeling_preserves_structure(p in arb_partition(7), seed in any::<u64>()) {
        let n = p.universe().len();
        let mut map: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            map.swap(i, (s >> 33) as usize % (i + 1));
        }
        let q = p.relabel(&map);
        prop_assert!(validate(&q, &FeatureSet::range(n)).is_ok());
        prop_assert_eq!(q.block_count(), p.block_count());
        prop_assert_eq!(q.good_union().len(), p.good_union().len());
    }
}
