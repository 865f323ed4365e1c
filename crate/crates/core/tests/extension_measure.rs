use hgraph::builtins::FunctionSpec;
use hgraph::diff::{estimate_differential, DiffOptions, Verdict};
use hgraph::extension::{cone_boundary, mcshane_extend, ConeBoundaryFn};
use hgraph::graph::lipschitz_constant;
use hgraph::measure::{ahlfors_profile, pushforward_ball_measure};
use hgraph::{Axis, Cone, Grid, Interpolation, Metric, Point, SampledFunction, Splitting};
use proptest::prelude::*;

fn s11() -> Splitting {
    Splitting::standard(1, 1).unwrap()
}

fn square(count: usize, half: f64) -> Grid {
    Grid::new(vec![Axis::new(-half, half, count).unwrap(); 2]).unwrap()
}

fn values(f: &SampledFunction) -> Vec<f64> {
    (0..f.node_count()).map(|i| f.value(i)[0]).collect()
}

fn lipschitz_spec() -> impl Strategy<Value = FunctionSpec> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(|m| FunctionSpec::IntrinsicLinear { matrix: vec![vec![m]] }),
        Just(FunctionSpec::VerticalCoordinate),
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(m, c)| FunctionSpec::BumpLinear { matrix: vec![vec![m]], c }),
        (0.5..3.0f64).prop_map(|beta| FunctionSpec::ConeBoundary {
            vertex: vec![0.0, 0.0, 0.0],
            beta
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn envelopes_sandwich_the_function(spec in lipschitz_spec(), stride in 1usize..7, slack in 1.0..2.0f64) {
        let inf = Metric::Infinity;
        let f = spec.build(&s11(), square(13, 1.0), &inf).unwrap();
        let l = lipschitz_constant(&f, &inf, None, false).unwrap().value.max(0.1) * slack;
        let e: Vec<bool> = (0..f.node_count()).map(|i| i % stride == 0).collect();
        let r = mcshane_extend(&f, &e, l, &inf).unwrap();
        let (phi, up, lo) = (values(&f), values(&r.upper), values(&r.lower));
        for i in 0..phi.len() {
            prop_assert!(lo[i] <= phi[i] + 1e-12 && phi[i] <= up[i] + 1e-12, "node {}", i);
            if e[i] {
                prop_assert!((up[i] - phi[i]).abs() <= 1e-12 && (lo[i] - phi[i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn envelopes_are_monotone_in_e(spec in lipschitz_spec(), seed in any::<u64>()) {
        let inf = Metric::Infinity;
        let f = spec.build(&s11(), square(11, 1.0), &inf).unwrap();
        let n = f.node_count();
        let l = lipschitz_constant(&f, &inf, None, false).unwrap().value.max(0.1);
        // E_0 ⊂ E_1 ⊂ E_2 by thresholding a fixed hash of the node index
        let key: Vec<u64> = (0..n as u64).map(|i| (i ^ seed).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 60).collect();
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        for cut in [2u64, 6, 11] {
            let e: Vec<bool> = key.iter().map(|&k| k < cut).collect();
            if e.iter().filter(|b| **b).count() < 2 {
                continue;
            }
            let r = mcshane_extend(&f, &e, l, &inf).unwrap();
            let (up, lo) = (values(&r.upper), values(&r.lower));
            if let Some((pu, pl)) = &prev {
                for i in 0..n {
                    prop_assert!(up[i] <= pu[i] + 1e-12 && lo[i] >= pl[i] - 1e-12);
                }
            }
            prev = Some((up, lo));
        }
    }

    #[test]
    fn cone_boundary_lies_on_the_cone(
        vx in -1.0..1.0f64, vy in -1.0..1.0f64, vt in -1.0..1.0f64,
        b in -2.0..2.0f64, t in -2.0..2.0f64, beta in 0.2..4.0f64,
    ) {
        let inf = Metric::Infinity;
        let s = s11();
        let vertex = Point::new(&[vx], &[vy], vt).unwrap();
        let g = ConeBoundaryFn::new(s.clone(), vertex, beta).unwrap();
        let w = [b, t];
        let a = cone_boundary(&g, &inf, &w).unwrap();
        let cone = Cone::new(&s, vertex, beta).unwrap();
        let at = |a: f64| s.embed_w(&w).unwrap() * s.embed_v(&[a]).unwrap();
        prop_assert!(cone.contains(&inf, &at(a + 1e-9)).unwrap());
        prop_assert!(cone.contains(&inf, &at(a + 1.0)).unwrap());
        let offset = g.w_offset(&inf, &w).unwrap();
        if offset > 1e-6 {
            prop_assert!(!cone.contains(&inf, &at(a - 1e-3 * offset / beta)).unwrap());
            prop_assert!(cone.contains(&inf, &at(g.lower(&inf, &w).unwrap() - 1e-9)).unwrap());
        }
    }

    #[test]
    fn cone_boundary_commutes_with_dilation(b in -2.0..2.0f64, t in -2.0..2.0f64, beta in 0.2..4.0f64, lambda in 0.1..5.0f64) {
        let inf = Metric::Infinity;
        let g = ConeBoundaryFn::new(s11(), Point::zero(1), beta).unwrap();
        let a = cone_boundary(&g, &inf, &[b, t]).unwrap();
        let da = cone_boundary(&g, &inf, &[lambda * b, lambda * lambda * t]).unwrap();
        prop_assert!((da - lambda * a).abs() <= 1e-12 * (1.0 + lambda * a.abs()));
    }

    #[test]
    fn linear_verdicts_are_translation_invariant(m in -2.0..2.0f64, i in 4usize..12, j in 4usize..12) {
        let inf = Metric::Infinity;
        let f = FunctionSpec::IntrinsicLinear { matrix: vec![vec![m]] }
            .build(&s11(), square(17, 1.0), &inf)
            .unwrap()
            .with_interpolation(Interpolation::Nearest);
        let h = 0.125;
        let base = [-1.0 + h * i as f64, -1.0 + h * j as f64];
        let radii = [4.0 * h, 3.0 * h, 2.0 * h];
        let at_base = estimate_differential(&f, &inf, &base, &radii, &DiffOptions::default()).unwrap();
        let at_zero = estimate_differential(&f, &inf, &[0.0, 0.0], &radii, &DiffOptions::default()).unwrap();
        prop_assert_eq!(at_base.verdict, Verdict::Consistent);
        prop_assert_eq!(at_zero.verdict, Verdict::Consistent);
        prop_assert!((at_base.matrix[0][0] - m).abs() < 1e-9);
        prop_assert!((at_base.matrix[0][0] - at_zero.matrix[0][0]).abs() < 1e-9);
    }
}

#[test]
fn flat_measure_scales_with_dilation() {
    // φ ≡ 0: δ_λ maps B(0, r) onto B(0, λr) and scales area by λ³
    let inf = Metric::Infinity;
    let f = FunctionSpec::Zero.build(&s11(), square(9, 2.0), &inf).unwrap();
    let o = Point::zero(1);
    let a = pushforward_ball_measure(&f, &inf, &o, 0.2, 200_000, 3).unwrap();
    let b = pushforward_ball_measure(&f, &inf, &o, 0.6, 200_000, 4).unwrap();
    let ratio = b.estimate / a.estimate;
    let sigma = ratio * ((a.stderr / a.estimate).powi(2) + (b.stderr / b.estimate).powi(2)).sqrt();
    assert!((ratio - 27.0).abs() <= 4.0 * sigma, "{ratio} ± {sigma}");
}

#[test]
fn measure_is_reproducible_and_seed_sensitive() {
    let inf = Metric::Infinity;
    let f = FunctionSpec::BumpLinear {
        matrix: vec![vec![0.5]],
        c: 0.5,
    }
    .build(&s11(), square(33, 2.0), &inf)
    .unwrap();
    let p = f.graph_point_at(&[0.25, 0.0]).unwrap();
    let a = pushforward_ball_measure(&f, &inf, &p, 0.3, 50_000, 7).unwrap();
    let b = pushforward_ball_measure(&f, &inf, &p, 0.3, 50_000, 7).unwrap();
    let c = pushforward_ball_measure(&f, &inf, &p, 0.3, 50_000, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.hits, c.hits);
}

#[test]
fn ahlfors_ratios_are_flat_for_linear_graphs() {
    // linear graphs are subgroups, so ball measure is exactly homogeneous
    let inf = Metric::Infinity;
    for m in [0.0, 0.7, -1.5] {
        let f = FunctionSpec::IntrinsicLinear { matrix: vec![vec![m]] }
            .build(&s11(), square(65, 2.0), &inf)
            .unwrap();
        let p = f.graph_point_at(&[0.0, 0.0]).unwrap();
        let prof = ahlfors_profile(&f, &inf, &p, &[0.05, 0.15, 0.5], 200_000, 11).unwrap();
        assert_eq!(prof.exponent, 3.0);
        for r in &prof.rows {
            let spread = (r.ratio - prof.rows[0].ratio).abs();
            assert!(spread <= 4.0 * (r.ratio_stderr + prof.rows[0].ratio_stderr), "m={m}: {:?}", prof.rows);
        }
    }
}

#[test]
fn ahlfors_needs_a_decade() {
    let inf = Metric::Infinity;
    let f = FunctionSpec::Zero.build(&s11(), square(9, 2.0), &inf).unwrap();
    assert!(ahlfors_profile(&f, &inf, &Point::zero(1), &[0.1, 0.5], 1000, 1).is_err());
}
