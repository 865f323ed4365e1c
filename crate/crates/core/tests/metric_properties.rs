use hgraph::{Metric, Point};
use proptest::prelude::*;

fn point(n: usize) -> impl Strategy<Value = Point> {
    (prop::collection::vec(-10.0..10.0f64, 2 * n), -10.0..10.0f64)
        .prop_map(|(z, t)| Point::from_horizontal(&z, t).unwrap())
}

fn exact_metrics() -> [Metric; 2] {
    [Metric::Infinity, Metric::Koranyi]
}

/// Applies the U(n) element acting as a rotation by `theta[i]` in each
/// `(x_i, y_i)` plane.
fn rotate(p: &Point, theta: &[f64]) -> Point {
    let n = p.n();
    let mut x = p.x().to_vec();
    let mut y = p.y().to_vec();
    for i in 0..n {
        let (s, c) = theta[i].sin_cos();
        let (a, b) = (x[i], y[i]);
        x[i] = c * a - s * b;
        y[i] = s * a + c * b;
    }
    Point::new(&x, &y, p.t()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn norms_are_homogeneous(p in point(2), lambda in 0.01..50.0f64) {
        for m in exact_metrics() {
            let a = m.norm(&p.dilate(lambda).unwrap());
            let b = lambda * m.norm(&p);
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn norms_are_inversion_symmetric(p in point(3)) {
        for m in exact_metrics() {
            prop_assert_eq!(m.norm(&p), m.norm(&p.inverse()));
        }
    }

    #[test]
    fn norms_are_rotation_invariant(p in point(2), theta in prop::collection::vec(-3.2..3.2f64, 2)) {
        let q = rotate(&p, &theta);
        for m in exact_metrics() {
            let (a, b) = (m.norm(&p), m.norm(&q));
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn distances_are_left_invariant(r in point(1), p in point(1), q in point(1)) {
        for m in exact_metrics() {
            let a = m.distance(&(r * p), &(r * q)).unwrap();
            let b = m.distance(&p, &q).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0) * 100.0);
        }
    }

    #[test]
    fn triangle_inequality(p in point(2), q in point(2), r in point(2)) {
        for m in exact_metrics() {
            let pq = m.distance(&p, &q).unwrap();
            let qr = m.distance(&q, &r).unwrap();
            let pr = m.distance(&p, &r).unwrap();
            prop_assert!(pr <= pq + qr + 1e-9, "{m}: {pr} > {pq} + {qr}");
        }
    }
}

#[test]
fn dilation_of_distances() {
    let p = Point::new(&[0.3], &[-1.2], 0.4).unwrap();
    let q = Point::new(&[2.0], &[0.5], -3.0).unwrap();
    for m in exact_metrics() {
        let d = m.distance(&p, &q).unwrap();
        let d2 = m.distance(&p.dilate(3.0).unwrap(), &q.dilate(3.0).unwrap()).unwrap();
        assert!((d2 - 3.0 * d).abs() < 1e-12);
    }
}

#[test]
fn cc_dominates_horizontal_and_scaled_infinity() {
    let (c_low, _) =
        hgraph::metrics::equivalence_constants(&Metric::Infinity, &Metric::Koranyi, 1, 2000, 5)
            .unwrap();
    // clamped to 1 so the floor never exceeds d_∞ itself
    let c_low = c_low.min(1.0);
    let cc = Metric::cc();
    for p in [
        Point::new(&[1.0], &[0.5], 0.3).unwrap(),
        Point::new(&[0.0], &[0.2], -1.0).unwrap(),
        Point::new(&[-2.0], &[1.0], 4.0).unwrap(),
    ] {
        let v = cc.norm(&p);
        let floor = (c_low * Metric::Infinity.norm(&p)).max(p.horizontal_len());
        assert!(v >= floor - 1e-6, "{p:?}: {v} < {floor}");
    }
}
