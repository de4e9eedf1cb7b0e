// SPDX-License-Identifier: Apache-2.0

use amdt_core::align::{
    adaptive_delta, apply_rigid, load_alignment, save_alignment, AlignError, FfdLattice, GainProfile,
    ModalityTransform, RigidTransform, TransformSet,
};
use amdt_core::compare::map_point;
use amdt_core::{Point3, Vec3};
use nalgebra::{Matrix3, UnitQuaternion};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Brute-force trivariate Bernstein sum, written from the textbook formula.
fn bernstein_sum(degree: [usize; 3], min: Point3, max: Point3, points: &[Point3], p: &Point3) -> Point3 {
    let [l, m, n] = degree;
    let local: Vec<f64> = (0..3)
        .map(|a| ((p[a] - min[a]) / (max[a] - min[a])).clamp(0.0, 1.0))
        .collect();
    let b = |deg: usize, i: usize, x: f64| binomial(deg, i) * x.powi(i as i32) * (1.0 - x).powi((deg - i) as i32);
    let mut acc = Vec3::zeros();
    for k in 0..=n {
        for j in 0..=m {
            for i in 0..=l {
                let w = b(l, i, local[0]) * b(m, j, local[1]) * b(n, k, local[2]);
                acc += points[i + (l + 1) * (j + (m + 1) * k)].coords * w;
            }
        }
    }
    Point3::from(acc)
}

fn random_point_in(rng: &mut impl Rng, min: Point3, max: Point3) -> Point3 {
    Point3::new(
        rng.random_range(min.x..=max.x),
        rng.random_range(min.y..=max.y),
        rng.random_range(min.z..=max.z),
    )
}

fn box_min() -> Point3 {
    Point3::new(-3.0, 1.0, 0.5)
}

fn box_max() -> Point3 {
    Point3::new(22.0, 26.0, 12.5)
}

#[test]
fn identity_lattice_reproduces_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for degree in [[1, 1, 1], [2, 3, 1], [3, 3, 3]] {
        let lattice = FfdLattice::undisplaced(degree, box_min(), box_max()).unwrap();
        for _ in 0..1000 {
            let p = random_point_in(&mut rng, box_min(), box_max());
            assert!((lattice.deform(&p) - p).norm() <= 1e-9);
        }
    }
}

#[test]
fn uniform_translation_and_affine_lattices() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base = FfdLattice::undisplaced([3, 2, 2], box_min(), box_max()).unwrap();
    let d = Vec3::new(0.7, -1.3, 2.1);
    let shifted = base.map_points(|p| p + d);
    let a = Matrix3::new(1.1, 0.2, -0.1, 0.05, 0.9, 0.3, -0.2, 0.1, 1.2);
    let b = Vec3::new(4.0, -2.0, 1.0);
    let affine = |p: &Point3| Point3::from(a * p.coords + b);
    let mapped = base.map_points(affine);
    for _ in 0..1000 {
        let p = random_point_in(&mut rng, box_min(), box_max());
        assert!((shifted.deform(&p) - (p + d)).norm() <= 1e-6);
        assert!((mapped.deform(&p) - affine(&base.deform(&p))).norm() <= 1e-6);
    }
}

#[test]
fn degree_two_corner_move_matches_bernstein_sum() {
    let (min, max) = (Point3::origin(), Point3::new(10.0, 10.0, 10.0));
    let lattice = FfdLattice::undisplaced([2, 2, 2], min, max).unwrap();
    let corner = lattice.control_point([2, 2, 2]);
    let moved = lattice.move_control_point([2, 2, 2], corner + Vec3::x()).unwrap();
    let centre = Point3::new(5.0, 5.0, 5.0);
    let oracle = bernstein_sum([2, 2, 2], min, max, moved.points(), &centre);
    let got = moved.deform(&centre);
    assert!((got - oracle).norm() <= 1e-12);
    // Corner weight at the centre is (1/4)³.
    assert!((got.x - (5.0 + 1.0 / 64.0)).abs() <= 1e-12);
}

#[test]
fn move_replay_keeps_last_write_per_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let original = FfdLattice::undisplaced([2, 2, 1], box_min(), box_max()).unwrap();
    let mut lattice = original.clone();
    let mut last = std::collections::BTreeMap::new();
    for _ in 0..10 {
        let index = [rng.random_range(0..3), rng.random_range(0..3), rng.random_range(0..2)];
        let p = random_point_in(&mut rng, box_min(), box_max());
        lattice = lattice.move_control_point(index, p).unwrap();
        last.insert(index, p);
    }
    let mut replayed = original.clone();
    for (index, p) in &last {
        replayed = replayed.move_control_point(*index, *p).unwrap();
    }
    assert_eq!(lattice, replayed);
    // Move then move back.
    let p = original.control_point([1, 1, 1]);
    let there = original
        .move_control_point([1, 1, 1], Point3::new(9.0, 9.0, 9.0))
        .unwrap();
    assert_eq!(there.move_control_point([1, 1, 1], p).unwrap(), original);
    assert_eq!(
        original.move_control_point([3, 0, 0], p),
        Err(AlignError::IndexOutOfRange {
            index: [3, 0, 0],
            degree: [2, 2, 1]
        })
    );
}

fn perturbed_lattice(rng: &mut impl Rng, fraction: f64) -> FfdLattice {
    let base = FfdLattice::undisplaced([2, 2, 2], box_min(), box_max()).unwrap();
    let extent = box_max() - box_min();
    let mut lattice = base.clone();
    for k in 0..3 {
        for j in 0..3 {
            for i in 0..3 {
                let p = base.control_point([i, j, k]);
                let d = Vec3::new(
                    rng.random_range(-1.0..1.0) * extent.x,
                    rng.random_range(-1.0..1.0) * extent.y,
                    rng.random_range(-1.0..1.0) * extent.z,
                ) * fraction;
                lattice = lattice.move_control_point([i, j, k], p + d).unwrap();
            }
        }
    }
    lattice
}

#[test]
fn document_round_trip_with_rigid_and_ffd() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lattice = perturbed_lattice(&mut rng, 0.04);
    let mut ts = TransformSet::new();
    let rot = UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1);
    let q = rot.quaternion();
    let rigid = RigidTransform::new(Vec3::new(1.0, 2.0, 3.0), [q.w, q.i, q.j, q.k], Vec3::repeat(1.5)).unwrap();
    ts.insert(
        "ct",
        ModalityTransform {
            rigid,
            ffd: Some(lattice.clone()),
        },
    );
    ts.insert("prescribed", ModalityTransform::default());
    let back = load_alignment(&save_alignment(&ts)).unwrap();
    assert_eq!(back.version(), ts.version());
    let before = ts.get("ct").unwrap();
    let after = back.get("ct").unwrap();
    for _ in 0..100 {
        let p = random_point_in(&mut rng, box_min(), box_max());
        let a = before.ffd.as_ref().unwrap().deform(&p);
        let b = after.ffd.as_ref().unwrap().deform(&p);
        assert!((a - b).norm() <= 1e-12);
        assert!((before.forward(&p) - after.forward(&p)).norm() <= 1e-12);
    }
    let missing = save_alignment(&ts).replacen("\"rotation\"", "\"rotatio\"", 1);
    assert_eq!(
        load_alignment(&missing),
        Err(AlignError::SchemaViolation("rotation".into()))
    );
}

#[test]
fn rigid_examples() {
    let p = Point3::new(1.0, 0.0, 0.0);
    assert_eq!(apply_rigid(&RigidTransform::identity(), &p), p);
    let t = RigidTransform::translation(Vec3::new(1.0, 2.0, 3.0));
    assert_eq!(apply_rigid(&t, &Point3::origin()), Point3::new(1.0, 2.0, 3.0));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let rz = RigidTransform::new(Vec3::zeros(), [h, 0.0, 0.0, h], Vec3::repeat(1.0)).unwrap();
    assert!((apply_rigid(&rz, &p) - Point3::new(0.0, 1.0, 0.0)).norm() <= 1e-9);
    assert!(RigidTransform::new(Vec3::zeros(), [1.0, 0.1, 0.0, 0.0], Vec3::repeat(1.0)).is_err());
    assert!(RigidTransform::new(Vec3::zeros(), [1.0, 0.0, 0.0, 0.0], Vec3::new(1.0, 0.0, 1.0)).is_err());
}

#[test]
fn gain_examples() {
    let profile = GainProfile::new(10.0, 110.0, 0.1).unwrap();
    assert!((profile.gain(60.0) - 0.55).abs() < 1e-12);
    let d = Vec3::new(1.0, -2.0, 0.5);
    assert_eq!(adaptive_delta(d, 200.0, &profile), d);
    assert_eq!(adaptive_delta(d, 0.0, &profile), d * 0.1);
    assert_eq!(GainProfile::default(), profile);
    assert!(GainProfile::new(10.0, 10.0, 0.5).is_err());
    assert!(GainProfile::new(0.0, 1.0, 0.0).is_err());
    assert!(GainProfile::new(0.0, 1.0, 1.5).is_err());
}

#[test]
fn mild_ffd_map_point_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ts = TransformSet::new();
    ts.insert(
        "images",
        ModalityTransform::rigid(RigidTransform::translation(Vec3::new(0.5, -0.25, 0.0))),
    );
    ts.insert(
        "ct",
        ModalityTransform {
            rigid: RigidTransform::translation(Vec3::new(0.1, 0.0, 0.2)),
            ffd: Some(perturbed_lattice(&mut rng, 0.045)),
        },
    );
    // Stay clear of the faces so the mapped point is inside the deformed box.
    let inset = Vec3::repeat(2.0);
    for _ in 0..100 {
        let p = random_point_in(&mut rng, box_min() + inset, box_max() - inset);
        let there = map_point(&ts, "ct", "images", &p).unwrap();
        let back = map_point(&ts, "images", "ct", &there).unwrap();
        assert!((back - p).norm() <= 1e-5, "{p} -> {there} -> {back}");
    }
}

fn unit_quaternion() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-3.2f64..3.2, -1.5f64..1.5, -3.2f64..3.2).prop_map(|(r, p, y)| UnitQuaternion::from_euler_angles(r, p, y))
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

proptest! {
    #[test]
    fn rigid_inverse_round_trip(q in unit_quaternion(), t in vec3(100.0), s in 0.1f64..10.0, p in vec3(100.0)) {
        let q = q.quaternion();
        let rigid = RigidTransform::new(t, [q.w, q.i, q.j, q.k], Vec3::repeat(s)).unwrap();
        let inv = rigid.inverse().unwrap();
        let p = Point3::from(p);
        prop_assert!((apply_rigid(&inv, &apply_rigid(&rigid, &p)) - p).norm() <= 1e-9);
    }

    #[test]
    fn gain_is_monotone_and_continuous(a in 0.0f64..300.0, b in 0.0f64..300.0) {
        let profile = GainProfile::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(profile.gain(lo) <= profile.gain(hi));
        // Lipschitz with slope (1 - g_min) / (v_ref - v_min).
        let slope = (1.0 - profile.g_min()) / (profile.v_ref() - profile.v_min());
        prop_assert!(profile.gain(hi) - profile.gain(lo) <= slope * (hi - lo) + 1e-12);
    }

    #[test]
    fn deform_matches_bernstein_sum(
        seed in any::<u64>(),
        l in 1usize..4, m in 1usize..4, n in 1usize..4,
        p in vec3(30.0),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = FfdLattice::undisplaced([l, m, n], box_min(), box_max()).unwrap();
        let points: Vec<Point3> = base
            .points()
            .iter()
            .map(|q| q + Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let lattice = FfdLattice::new([l, m, n], box_min(), box_max(), points).unwrap();
        let p = Point3::from(p);
        let oracle = bernstein_sum([l, m, n], box_min(), box_max(), lattice.points(), &p);
        prop_assert!((lattice.deform(&p) - oracle).norm() <= 1e-9);
    }
}
