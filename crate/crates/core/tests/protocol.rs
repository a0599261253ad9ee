use proptest::prelude::*;

use hyperabm::protocol::{decode, encode, ComponentType, OperationVector, SolutionFile};
use hyperabm::registry::FnId;
use hyperabm::{KindId, MechanismDef, MechanismId, PropertyId, ValueKind};

fn value_kind() -> impl Strategy<Value = ValueKind> {
    prop::sample::select(ValueKind::ALL.to_vec())
}

fn op() -> impl Strategy<Value = OperationVector> {
    prop_oneof![
        (0usize..500, prop::option::of(0usize..20), prop::option::of(value_kind())).prop_map(|(p, k, v)| OperationVector::AlterNode {
            property: PropertyId(p),
            new_kind: k.map(KindId),
            new_value_kind: v,
        }),
        (0usize..500, 0usize..50).prop_map(|(m, f)| OperationVector::AlterEdge { mechanism: MechanismId(m), fn_ref: FnId(f) }),
        (0usize..20, value_kind()).prop_map(|(k, v)| OperationVector::AddNode { kind: KindId(k), value_kind: v }),
        (prop::collection::btree_set(0usize..100, 0..5), prop::collection::btree_set(100usize..200, 0..3), 0usize..50, any::<u8>())
            .prop_map(|(s, t, f, keys)| {
                let sources: Vec<PropertyId> = s.into_iter().map(PropertyId).collect();
                let grouping_keys = sources.iter().enumerate().filter(|(i, _)| keys >> i & 1 == 1).map(|(_, p)| *p).collect();
                OperationVector::AddEdge(MechanismDef {
                    sources,
                    targets: t.into_iter().map(PropertyId).collect(),
                    fn_ref: FnId(f),
                    grouping_keys,
                })
            }),
        (any::<bool>(), prop::collection::vec(any::<bool>(), 0..64)).prop_map(|(node, mask)| OperationVector::Eliminate {
            component: if node { ComponentType::Node } else { ComponentType::Hyperedge },
            mask,
        }),
        prop::collection::vec(0usize..100, 0..20).prop_map(|v| OperationVector::Reschedule(v.into_iter().map(MechanismId).collect())),
    ]
}

proptest! {
    #[test]
    fn operations_round_trip(op in op()) {
        let ints = encode(&op);
        prop_assert_eq!(ints[2] as usize, ints.len() - 3);
        prop_assert_eq!(decode(&ints).unwrap(), op);
    }

    #[test]
    fn truncated_operations_are_rejected(op in op(), cut in 1usize..4) {
        let ints = encode(&op);
        let keep = ints.len().saturating_sub(cut);
        prop_assert!(decode(&ints[..keep]).is_err());
    }

    #[test]
    fn solution_files_round_trip(ops in prop::collection::vec(op(), 0..6), fitness in prop::option::of(-1e6f64..1e6)) {
        let file = SolutionFile { operations: ops, fitness, ..SolutionFile::default() };
        prop_assert_eq!(SolutionFile::parse(&file.to_text()).unwrap(), file);
    }
}
