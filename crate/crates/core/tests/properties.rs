use std::f64::consts::PI;

use convgroups::dominant_set::{cluster, extract_dominant_set, symmetrize, DsConfig, Symmetrization};
use convgroups::eval::{auc, group_f1, GroupMatchConfig};
use convgroups::features::{build_features, FeatureScaler, FeatureTensor, PresenceMask, N_CHANNELS, PAD};
use convgroups::net::{forward, grad_check_fixture};
use convgroups::scene::{
    parse_scene_sequences, wrap_angle, write_scene_sequences, AffinityMatrix, Frame, GroupPartition, PersonState,
    SceneSequence,
};
use proptest::prelude::*;

fn unit_scaler() -> FeatureScaler {
    FeatureScaler {
        min: [0.0; N_CHANNELS],
        max: [1.0, 1.0, 100.0, 1.0, 1.0, 1.0],
    }
}

#[derive(Debug, Clone)]
struct RawPerson {
    present: bool,
    x: f64,
    y: f64,
    head: f64,
    body: Option<f64>,
}

fn raw_person() -> impl Strategy<Value = RawPerson> {
    (
        prop::bool::weighted(0.8),
        -10.0..10.0f64,
        -10.0..10.0f64,
        -PI..PI,
        prop::option::of(-PI..PI),
    )
        .prop_map(|(present, x, y, head, body)| RawPerson {
            present,
            x,
            y,
            head,
            body,
        })
}

/// `steps` frames of `n` people; person 0 is always present.
fn raw_scene(n: usize, steps: usize) -> impl Strategy<Value = Vec<Vec<RawPerson>>> {
    prop::collection::vec(prop::collection::vec(raw_person(), n), steps).prop_map(|mut frames| {
        for f in &mut frames {
            f[0].present = true;
        }
        frames
    })
}

fn scene_of(raw: &[Vec<RawPerson>], map: impl Fn(&RawPerson) -> (f64, f64, f64, Option<f64>)) -> SceneSequence {
    let n = raw[0].len();
    let frames = raw
        .iter()
        .enumerate()
        .map(|(t, people)| Frame {
            t: t as f64,
            persons: people
                .iter()
                .enumerate()
                .filter(|(_, p)| p.present)
                .map(|(id, p)| {
                    let (x, y, head, body) = map(p);
                    PersonState { id, x, y, head, body }
                })
                .collect(),
            groups: None,
        })
        .collect();
    let seq = SceneSequence {
        scene_id: "prop".into(),
        units: "m".into(),
        n,
        frames,
    };
    seq.validate().unwrap();
    seq
}

fn features(seq: &SceneSequence) -> (FeatureTensor, PresenceMask) {
    build_features(seq, 0, 0, seq.frames.len(), &unit_scaler()).unwrap()
}

fn circ_close(a: f64, b: f64) -> bool {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d) < 1e-9
}

/// Every frame's orientation resultant is comfortably non-zero.
fn well_conditioned(raw: &[Vec<RawPerson>]) -> bool {
    raw.iter().all(|f| {
        let (s, c) = f
            .iter()
            .filter(|p| p.present)
            .map(|p| p.body.unwrap_or(p.head))
            .fold((0.0, 0.0), |(s, c), a| (s + a.sin(), c + a.cos()));
        s.hypot(c) > 1e-3
    })
}

fn partition(labels: &[usize]) -> GroupPartition {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); labels.iter().max().map_or(0, |m| m + 1)];
    for (id, &l) in labels.iter().enumerate() {
        groups[l].push(id);
    }
    groups.retain(|g| !g.is_empty());
    GroupPartition::new(groups).unwrap()
}

fn symmetric(p: usize, vals: &[f64]) -> Vec<f64> {
    let mut a = vec![0.0; p * p];
    let mut k = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            a[i * p + j] = vals[k];
            a[j * p + i] = vals[k];
            k += 1;
        }
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotating_orientations_keeps_orientation_channels(raw in raw_scene(5, 3), delta in -PI..PI) {
        prop_assume!(well_conditioned(&raw));
        let base = features(&scene_of(&raw, |p| (p.x, p.y, p.head, p.body)));
        let turned = features(&scene_of(&raw, |p| {
            (p.x, p.y, wrap_angle(p.head + delta), p.body.map(|b| wrap_angle(b + delta)))
        }));
        prop_assert_eq!(&base.1, &turned.1);
        for (k, (a, b)) in base.0.values.iter().zip(&turned.0.values).enumerate() {
            let c = k % N_CHANNELS;
            if *a == PAD {
                prop_assert_eq!(*b, PAD);
            } else if c != 2 && c != 3 {
                prop_assert!(circ_close(*a, *b), "channel {}: {} vs {}", c, a, b);
            } else if c == 2 {
                prop_assert_eq!(*a, *b);
            }
        }
    }

    #[test]
    fn rotating_the_whole_scene_keeps_every_channel(raw in raw_scene(4, 3), delta in -PI..PI) {
        prop_assume!(well_conditioned(&raw));
        let (s, c) = delta.sin_cos();
        let base = features(&scene_of(&raw, |p| (p.x, p.y, p.head, p.body)));
        let turned = features(&scene_of(&raw, |p| {
            (c * p.x - s * p.y, s * p.x + c * p.y, wrap_angle(p.head + delta), p.body.map(|b| wrap_angle(b + delta)))
        }));
        for (k, (a, b)) in base.0.values.iter().zip(&turned.0.values).enumerate() {
            if k % N_CHANNELS == 2 {
                prop_assert!((a - b).abs() < 1e-9);
            } else {
                prop_assert!(circ_close(*a, *b), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn translation_keeps_distance_and_bearing(raw in raw_scene(5, 2), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let base = features(&scene_of(&raw, |p| (p.x, p.y, p.head, p.body)));
        let moved = features(&scene_of(&raw, |p| (p.x + dx, p.y + dy, p.head, p.body)));
        for (a, b) in base.0.values.iter().zip(&moved.0.values) {
            prop_assert!(circ_close(*a, *b) || (a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn mask_zero_iff_padded(raw in raw_scene(6, 4)) {
        let (t, m) = features(&scene_of(&raw, |p| (p.x, p.y, p.head, p.body)));
        for step in 0..t.steps {
            for slot in 0..t.slots {
                let v = t.at(step, slot);
                let padded = v.iter().all(|&x| x == PAD);
                prop_assert_eq!(!m.get(step, slot), padded);
                if m.get(step, slot) {
                    prop_assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
                }
            }
        }
    }

    #[test]
    fn permuting_others_permutes_outputs(seed in 0u64..1000, perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let (params, batch) = grad_check_fixture(seed, 6, 4, 5, 1);
        let s = &batch[0];
        let base = forward(&params, &s.features, &s.mask).unwrap();
        let mut f = s.features.clone();
        let mut m = s.mask.clone();
        for step in 0..f.steps {
            for (new, &old) in perm.iter().enumerate() {
                f.at_mut(step, new).copy_from_slice(s.features.at(step, old));
                m.set(step, new, s.mask.get(step, old));
            }
        }
        let out = forward(&params, &f, &m).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((out.affinities[new] - base.affinities[old]).abs() < 1e-12);
            prop_assert_eq!(out.valid[new], base.valid[old]);
        }
    }

    #[test]
    fn never_present_slots_do_not_leak(seed in 0u64..1000, junk in prop::collection::vec(-5.0..5.0f64, 4 * N_CHANNELS)) {
        let (params, batch) = grad_check_fixture(seed, 5, 4, 6, 1);
        let mut s = batch[0].clone();
        let hidden = 3;
        for step in 0..s.features.steps {
            s.mask.set(step, hidden, false);
            s.features.at_mut(step, hidden).fill(PAD);
        }
        let base = forward(&params, &s.features, &s.mask).unwrap();
        for step in 0..s.features.steps {
            s.features.at_mut(step, hidden).copy_from_slice(&junk[step * N_CHANNELS..(step + 1) * N_CHANNELS]);
        }
        let out = forward(&params, &s.features, &s.mask).unwrap();
        prop_assert!(!out.valid[hidden]);
        for j in (0..s.features.slots).filter(|&j| j != hidden) {
            prop_assert_eq!(out.affinities[j], base.affinities[j]);
        }
    }

    #[test]
    fn affinities_strictly_inside_unit_interval(seed in 0u64..10_000) {
        let (params, batch) = grad_check_fixture(seed, 6, 5, 8, 2);
        for s in &batch {
            let out = forward(&params, &s.features, &s.mask).unwrap();
            prop_assert!(out.affinities.iter().all(|&a| a > 0.0 && a < 1.0));
        }
    }

    #[test]
    fn scaling_keeps_dominant_set_support(p in 2usize..7, vals in prop::collection::vec(0.0..1.0f64, 15), gamma in 0.1..10.0f64) {
        let a = symmetric(p, &vals);
        let scaled: Vec<f64> = a.iter().map(|v| v * gamma).collect();
        let cfg = DsConfig::default();
        let x = extract_dominant_set(&a, p, &cfg).unwrap();
        let y = extract_dominant_set(&scaled, p, &cfg).unwrap();
        prop_assert_eq!(x.members, y.members);
    }

    #[test]
    fn clustering_is_a_deterministic_cover(p in 1usize..8, vals in prop::collection::vec(0.0..1.0f64, 64), strategy in 0usize..4) {
        let ids: Vec<usize> = (0..p).map(|i| 3 * i + 1).collect();
        let a = AffinityMatrix::from_fn(ids.clone(), |i, j| vals[i * 8 + j]).unwrap();
        let cfg = DsConfig { strategy: Symmetrization::ALL[strategy], ..DsConfig::default() };
        let first = cluster(&a, &cfg).unwrap();
        prop_assert_eq!(&first, &cluster(&a, &cfg).unwrap());
        let mut members: Vec<usize> = first.members().collect();
        members.sort();
        prop_assert_eq!(members, ids);
    }

    #[test]
    fn average_symmetrization_is_symmetric_and_idempotent(p in 1usize..8, vals in prop::collection::vec(0.0..1.0f64, 64)) {
        let a = AffinityMatrix::from_fn((0..p).collect(), |i, j| vals[i * 8 + j]).unwrap();
        let s = symmetrize(&a, Symmetrization::Average);
        for i in 0..p {
            for j in 0..p {
                prop_assert!((s.get(i, j) - s.get(j, i)).abs() <= 1e-15);
            }
        }
        prop_assert_eq!(symmetrize(&s, Symmetrization::Average), s);
    }

    #[test]
    fn full_match_f1_is_symmetric(x in prop::collection::vec(0usize..4, 9), y in prop::collection::vec(0usize..4, 9)) {
        let (a, b) = (partition(&x), partition(&y));
        let ab = group_f1(&a, &b, GroupMatchConfig::FULL);
        let ba = group_f1(&b, &a, GroupMatchConfig::FULL);
        prop_assert_eq!(ab.f1, ba.f1);
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert!((0.0..=1.0).contains(&ab.f1));
        let loose = group_f1(&a, &b, GroupMatchConfig::TWO_THIRDS);
        prop_assert!((0.0..=1.0).contains(&loose.f1));
    }

    #[test]
    fn auc_ignores_monotone_transforms(scores in prop::collection::vec(0.0..1.0f64, 2..60), bits in prop::collection::vec(any::<bool>(), 60)) {
        let mut labels: Vec<bool> = bits[..scores.len()].to_vec();
        labels[0] = true;
        labels[1] = false;
        let base = auc(&scores, &labels).unwrap();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + s.powi(3)).collect();
        prop_assert!((auc(&warped, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn scene_files_round_trip(raw in raw_scene(4, 3), labels in prop::collection::vec(0usize..3, 4)) {
        let mut seq = scene_of(&raw, |p| (p.x, p.y, p.head, p.body));
        for f in &mut seq.frames {
            let present: std::collections::BTreeSet<usize> = f.ids().into_iter().collect();
            f.groups = Some(partition(&labels).restrict(&present));
        }
        let mut buf = Vec::new();
        write_scene_sequences(std::slice::from_ref(&seq), &mut buf).unwrap();
        let back = parse_scene_sequences(std::str::from_utf8(&buf).unwrap()).unwrap();
        prop_assert_eq!(back, vec![seq]);
    }
}
