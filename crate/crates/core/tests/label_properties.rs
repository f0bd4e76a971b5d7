use proptest::prelude::*;

use semfuse_core::consensus::{aggregate, VoteConfig};
use semfuse_core::eval::{confusion, evaluate};
use semfuse_core::gravity::{compute_alignment, nearest_quarter, residual_angle, rotate_quarter, unrotate};
use semfuse_core::geometry::Pose;
use semfuse_core::grid::Grid;
use semfuse_core::labelspace::{apply_mapping, compose, LabelMap, LabelSpace, MappingTable};

use nalgebra::{UnitQuaternion, Vector3};

fn label_grid(max_id: u16) -> impl Strategy<Value = Grid<u16>> {
    (1usize..12, 1usize..12).prop_flat_map(move |(w, h)| {
        prop::collection::vec(0..=max_id, w * h).prop_map(move |v| Grid::from_vec(w, h, v).unwrap())
    })
}

fn table(source: &LabelSpace, target: &LabelSpace, picks: &[u16]) -> MappingTable {
    let n = target.max_id() + 1;
    MappingTable::new(source, target, (1..=source.max_id()).zip(picks.iter().map(|p| p % n))).unwrap()
}

proptest! {
    #[test]
    fn composed_mapping_equals_sequential_application(
        g in label_grid(6),
        a in prop::collection::vec(0u16..100, 6),
        b in prop::collection::vec(0u16..100, 4),
    ) {
        let (s1, s2, s3) = (
            LabelSpace::synthetic("a", 6),
            LabelSpace::synthetic("b", 4),
            LabelSpace::synthetic("c", 3),
        );
        let (m1, m2) = (table(&s1, &s2, &a), table(&s2, &s3, &b));
        let lm = LabelMap::new(g, "a");
        let step = apply_mapping(&m2, &apply_mapping(&m1, &lm).unwrap()).unwrap();
        let once = apply_mapping(&compose(&m1, &m2).unwrap(), &lm).unwrap();
        prop_assert_eq!(step, once);
    }

    #[test]
    fn identity_mapping_is_a_no_op(g in label_grid(5)) {
        let s = LabelSpace::synthetic("a", 5);
        let lm = LabelMap::new(g, "a");
        prop_assert_eq!(apply_mapping(&MappingTable::identity(&s), &lm).unwrap(), lm);
    }

    #[test]
    fn quarter_turns_round_trip(g in label_grid(u16::MAX), k in 0i64..4) {
        prop_assert_eq!(unrotate(&rotate_quarter(&g, k).unwrap(), k).unwrap(), g.clone());
        let mut r = g.clone();
        for _ in 0..4 {
            r = rotate_quarter(&r, k).unwrap();
        }
        prop_assert_eq!(r, g);
    }

    #[test]
    fn alignment_minimises_residual(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let q = nalgebra::Quaternion::new(w, x, y, z);
        prop_assume!(q.norm() > 1e-3);
        let pose = Pose::new(UnitQuaternion::from_quaternion(q), Vector3::zeros(), 0.0);
        let info = compute_alignment(&pose);
        prop_assert!(residual_angle(&info) <= std::f64::consts::FRAC_PI_4 + 1e-9);
        prop_assert_eq!(info.k, nearest_quarter(info.alpha));
    }

    #[test]
    fn consensus_ignores_source_order(
        maps in prop::collection::vec(prop::collection::vec(0u16..5, 12), 1..6),
        weights in prop::collection::vec(0.25f64..3.0, 6),
        min_votes in 0.0f64..3.0,
        rot in 0usize..6,
    ) {
        let preds: Vec<(String, LabelMap)> = maps
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("s{i}"), LabelMap::new(Grid::from_vec(4, 3, v.clone()).unwrap(), "x")))
            .collect();
        let cfg = VoteConfig {
            weights: preds.iter().zip(&weights).map(|((n, _), w)| (n.clone(), *w)).collect(),
            min_votes,
        };
        let a = aggregate(&preds, &cfg).unwrap();
        let mut rotated = preds.clone();
        rotated.rotate_left(rot % preds.len());
        rotated.reverse();
        prop_assert_eq!(aggregate(&rotated, &cfg).unwrap(), a.clone());
        // thresholds only ever remove labels
        let lax = aggregate(&preds, &VoteConfig { min_votes: 0.0, ..cfg.clone() }).unwrap();
        for (strict, loose) in a.top1.as_slice().iter().zip(lax.top1.as_slice()) {
            prop_assert!(*strict == 0 || strict == loose);
        }
    }

    #[test]
    fn metrics_ignore_element_order(
        pairs in prop::collection::vec((0u16..5, 0u16..5), 1..60),
        seed in any::<u64>(),
    ) {
        prop_assume!(pairs.iter().any(|p| p.0 != 0));
        let (g, p): (Vec<u16>, Vec<u16>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        for i in 0..n {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % n as u64) as usize);
        }
        let (g2, p2): (Vec<u16>, Vec<u16>) = shuffled.into_iter().unzip();
        prop_assert_eq!(confusion(&g, &p).unwrap(), confusion(&g2, &p2).unwrap());
        let m = evaluate(&g, &p, None).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.miou));
        prop_assert!((0.0..=1.0).contains(&m.tacc));
        let perfect = evaluate(&g, &g, None).unwrap();
        prop_assert_eq!(perfect.miou, 1.0);
        prop_assert_eq!(perfect.tacc, 1.0);
    }
}
