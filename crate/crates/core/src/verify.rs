//! Property suites of every module, collected into one serializable report.
//!
//! The report holds no timings or addresses, so two runs with the same seed
//! and options serialize to identical bytes whatever the worker count.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::builtins::FunctionSpec;
use crate::diff::{
    estimate_differential, pansu_schedule, shared_w_component_residual, verify_cone_characterization,
    ConeRadius, DiffOptions, IntrinsicLinearMap, TangentSubgroup, Verdict,
};
use crate::error::Result;
use crate::extension::{mcshane_extend, sandwich_harness};
use crate::graph::{classify_stepanov, lipschitz_constant, quasi_distance_check, StepanovOptions};
use crate::group::{group_axioms_check, Point};
use crate::measure::{ahlfors_profile, pushforward_ball_measure};
use crate::metrics::{equivalence_constants, triangle_check, Metric};
use crate::sampled::{Axis, Grid, Orientation, SampledFunction};
use crate::splitting::{norm_splitting_constant, projection_identities_check, Splitting};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    /// Random samples for the algebraic suites.
    pub samples: usize,
    /// Nodes per axis of the grids.
    pub grid: usize,
    /// Monte-Carlo samples per ball in the measure suites.
    pub measure_samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            samples: 100_000,
            grid: 33,
            measure_samples: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub module: String,
    pub passed: bool,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub options: VerifyOptions,
    pub passed: bool,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &SuiteResult> {
        self.suites.iter().filter(|s| !s.passed)
    }
}

struct Suite {
    r: SuiteResult,
}

impl Suite {
    fn new(module: &str, name: &str) -> Self {
        Suite {
            r: SuiteResult {
                name: name.to_string(),
                module: module.to_string(),
                passed: true,
                values: BTreeMap::new(),
                note: None,
            },
        }
    }

    fn value(mut self, key: &str, v: f64) -> Self {
        self.r.values.insert(key.to_string(), v);
        self
    }

    fn require(mut self, ok: bool) -> Self {
        self.r.passed &= ok;
        self
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.r.note = Some(s.into());
        self
    }

    fn done(self) -> SuiteResult {
        self.r
    }

    fn failed(module: &str, name: &str, e: crate::Error) -> SuiteResult {
        Suite::new(module, name).require(false).note(e.to_string()).done()
    }
}

fn square(count: usize, half: f64) -> Result<Grid> {
    Grid::new(vec![Axis::new(-half, half, count)?, Axis::new(-half, half, count)?])
}

fn s11() -> Splitting {
    Splitting::standard(1, 1).expect("standard splitting")
}

fn run_suite(module: &str, name: &str, f: impl FnOnce() -> Result<SuiteResult>) -> SuiteResult {
    f().unwrap_or_else(|e| Suite::failed(module, name, e))
}

/// Runs every suite; failures are recorded, not returned as errors.
pub fn verify(seed: u64, opts: &VerifyOptions) -> VerifyReport {
    let n_samples = opts.samples.max(1);
    let g = opts.grid.max(5) | 1;
    let inf = Metric::Infinity;
    let mut suites = Vec::new();

    for n in [1, 2] {
        suites.push(run_suite("group", &format!("axioms_n{n}"), || {
            let r = group_axioms_check(n, n_samples, seed)?;
            Ok(Suite::new("group", &format!("axioms_n{n}"))
                .value("associativity", r.associativity)
                .value("identity", r.identity)
                .value("inverse", r.inverse)
                .value("dilation_homomorphism", r.dilation_homomorphism)
                .value("dilation_composition", r.dilation_composition)
                .require(r.max() < 1e-12)
                .done())
        }));
    }

    for m in [Metric::Infinity, Metric::Koranyi] {
        let name = format!("triangle_{m}");
        suites.push(run_suite("metrics", &name, || {
            let r = triangle_check(&m, 2, n_samples, seed)?;
            Ok(Suite::new("metrics", &name)
                .value("violations", r.violations as f64)
                .value("worst_excess", r.worst_excess)
                .require(r.violations == 0)
                .done())
        }));
    }
    suites.push(run_suite("metrics", "equivalence_infinity_koranyi", || {
        let (lo, hi) = equivalence_constants(&Metric::Infinity, &Metric::Koranyi, 2, n_samples, seed)?;
        Ok(Suite::new("metrics", "equivalence_infinity_koranyi")
            .value("c_low", lo)
            .value("c_high", hi)
            .require(lo >= 1.0 - 1e-12 && hi <= 2f64.powf(0.25) + 1e-12)
            .done())
    }));

    for (n, k) in [(1, 1), (2, 1), (2, 2)] {
        let name = format!("projections_n{n}_k{k}");
        suites.push(run_suite("splitting", &name, || {
            let s = Splitting::standard(n, k)?;
            let r = projection_identities_check(&s, n_samples, seed);
            let c = norm_splitting_constant(&s, &inf, n_samples.min(20_000), seed)?;
            Ok(Suite::new("splitting", &name)
                .value("w_of_product", r.w_of_product)
                .value("v_of_product", r.v_of_product)
                .value("w_of_inverse", r.w_of_inverse)
                .value("v_of_inverse", r.v_of_inverse)
                .value("reconstruction", r.reconstruction)
                .value("norm_splitting_constant", c.constant)
                .value("upper_bound_excess", c.worst_upper_excess)
                .require(r.max() < 1e-10 && r.reconstruction < 1e-12 && c.constant.is_finite())
                .done())
        }));
    }

    suites.push(run_suite("graph", "lipschitz_oracle", || {
        let mut s = Suite::new("graph", "lipschitz_oracle");
        for m in [0.5, 1.0, 3.0] {
            let f = FunctionSpec::IntrinsicLinear { matrix: vec![vec![m]] }.build(&s11(), square(g, 1.0)?, &inf)?;
            let pruned = lipschitz_constant(&f, &inf, None, true)?;
            let full = lipschitz_constant(&f, &inf, None, false)?;
            s = s
                .value(&format!("m{m}"), pruned.value)
                .require(pruned.value >= 0.98 * m && pruned.value <= 1.001 * m)
                .require(pruned.value == full.value && pruned.witness == full.witness);
        }
        let c = FunctionSpec::Constant { value: vec![0.7] }.build(&s11(), square(g, 1.0)?, &inf)?;
        let lc = lipschitz_constant(&c, &inf, None, true)?;
        Ok(s.value("constant", lc.value).require(lc.value == 0.0).done())
    }));

    suites.push(run_suite("graph", "stepanov_coverage", || {
        let mut s = Suite::new("graph", "stepanov_coverage");
        for spec in [
            FunctionSpec::Zero,
            FunctionSpec::Constant { value: vec![-0.3] },
            FunctionSpec::IntrinsicLinear { matrix: vec![vec![0.75]] },
        ] {
            let f = spec.build(&s11(), square(g, 1.0)?, &inf)?;
            let rep = classify_stepanov(&f, &inf, &StepanovOptions::default())?;
            let cov = rep.coverage(&f);
            s = s.value(spec.name(), cov).require(cov == 1.0);
        }
        Ok(s.done())
    }));

    suites.push(run_suite("graph", "quasi_distance", || {
        let mut s = Suite::new("graph", "quasi_distance");
        for spec in lipschitz_builtins() {
            let f = spec.build(&s11(), square(g, 1.0)?, &inf)?;
            let q = quasi_distance_check(&f, &inf, n_samples, seed)?;
            let name = spec.name();
            s = s
                .value(&format!("{name}_quasi_constant"), q.quasi_constant)
                .value(&format!("{name}_ratio_min"), q.ratio_min)
                .value(&format!("{name}_ratio_max"), q.ratio_max)
                .require(q.quasi_constant.is_finite() && q.ratio_min >= 1e-3 && q.ratio_max <= 1e3);
        }
        Ok(s.done())
    }));

    suites.push(run_suite("diff", "linear_exactness", || {
        let m0 = IntrinsicLinearMap::new(s11(), &[vec![-1.25]])?;
        let f = m0.sample(square(g, 1.0)?)?;
        let h = 2.0 / (g - 1) as f64;
        let e = estimate_differential(&f, &inf, &[2.0 * h, h], &[4.0 * h, 3.0 * h, 2.0 * h], &DiffOptions::default())?;
        let err = (e.matrix[0][0] + 1.25).abs();
        let res = e.residuals.iter().copied().fold(0.0, f64::max);
        Ok(Suite::new("diff", "linear_exactness")
            .value("matrix_error", err)
            .value("max_residual", res)
            .require(err < 1e-9 && res < 1e-9 && e.verdict == Verdict::Consistent)
            .done())
    }));

    suites.push(run_suite("diff", "vertical_coordinate", || {
        let f = FunctionSpec::VerticalCoordinate.build(&s11(), square(g, 1.0)?, &inf)?;
        let radii = [0.8, 0.4, 0.2];
        let e = estimate_differential(&f, &inf, &[0.0, 0.0], &radii, &DiffOptions::default())?;
        let worst = radii
            .iter()
            .zip(&e.residuals)
            .map(|(r, res)| res / (r / 4.0))
            .fold(0.0, f64::max);
        Ok(Suite::new("diff", "vertical_coordinate")
            .value("matrix", e.matrix[0][0])
            .value("residual_over_quarter_radius", worst)
            .require(e.matrix[0][0].abs() < 1e-9 && worst <= 1.1)
            .done())
    }));

    suites.push(run_suite("diff", "tangent_and_cones", || {
        let map = IntrinsicLinearMap::new(s11(), &[vec![0.6]])?;
        let f = map.sample(square(g, 1.0)?)?;
        let t = TangentSubgroup::from_map(map.clone())?;
        let rows = verify_cone_characterization(&f, &inf, &[0.0, 0.0], &t, &[1.0, 0.5, 0.1])?;
        let full = rows.iter().all(|r| r.radius == ConeRadius::Full);
        let shared = shared_w_component_residual(&t, n_samples.min(20_000), seed);
        let sub = map.subgroup_residual(n_samples.min(20_000), seed);
        Ok(Suite::new("diff", "tangent_and_cones")
            .value("full_radius", full as u8 as f64)
            .value("shared_w_component", shared)
            .value("subgroup_residual", sub)
            .require(full && shared < 1e-10 && sub < 1e-10)
            .done())
    }));

    suites.push(run_suite("diff", "pansu_linear", || {
        let grid = Grid::new(vec![Axis::new(-1.0, 1.0, 129)?])?;
        let f = SampledFunction::from_fn(s11(), Orientation::VToW, grid, |a| vec![0.4 * a[0], -0.2 * a[0] * a[0]])?;
        let sched = pansu_schedule(&f, &[0.0], &[1.0], &[0.5, 0.25, 0.125, 0.0625])?;
        Ok(Suite::new("diff", "pansu_linear")
            .value("cauchy", sched.cauchy())
            .require(sched.cauchy() < 1e-9 && sched.quotients.iter().all(|q| q.is_some()))
            .done())
    }));

    suites.push(run_suite("extension", "mcshane", || {
        let f = FunctionSpec::IntrinsicLinear { matrix: vec![vec![0.8]] }.build(&s11(), square(g, 1.0)?, &inf)?;
        let all = vec![true; f.node_count()];
        let r = mcshane_extend(&f, &all, 1.0, &inf)?;
        let full_gap = (0..f.node_count())
            .map(|i| {
                (r.upper.value(i)[0] - f.value(i)[0])
                    .abs()
                    .max((r.lower.value(i)[0] - f.value(i)[0]).abs())
            })
            .fold(0.0, f64::max);
        // nested chain E_1 ⊂ E_2 ⊂ E_3 by stride
        let chain: Vec<Vec<bool>> = [8, 4, 2]
            .iter()
            .map(|&k| (0..f.node_count()).map(|i| i % k == 0).collect())
            .collect();
        let ext: Vec<_> = chain.iter().map(|e| mcshane_extend(&f, e, 1.0, &inf)).collect::<Result<_>>()?;
        let mut monotone = true;
        for w in ext.windows(2) {
            for i in 0..f.node_count() {
                monotone &= w[1].upper.value(i)[0] <= w[0].upper.value(i)[0] + 1e-12;
                monotone &= w[1].lower.value(i)[0] >= w[0].lower.value(i)[0] - 1e-12;
            }
        }
        let e_gap = ext.iter().map(|x| x.max_e_gap).fold(r.max_e_gap, f64::max);
        Ok(Suite::new("extension", "mcshane")
            .value("full_grid_gap", full_gap)
            .value("max_e_gap", e_gap)
            .value("monotone", monotone as u8 as f64)
            .value("lip_upper", r.lip_upper.value)
            .require(full_gap < 1e-12 && e_gap <= 1e-12 && monotone && r.lip_upper.value.is_finite())
            .done())
    }));

    suites.push(run_suite("extension", "sandwich", || {
        let grid = square(g, 1.0)?;
        let mid = FunctionSpec::IntrinsicLinear { matrix: vec![vec![0.5]] }.build(&s11(), grid.clone(), &inf)?;
        let up = FunctionSpec::BumpLinear { matrix: vec![vec![0.5]], c: 0.5 }.build(&s11(), grid.clone(), &inf)?;
        let lo = FunctionSpec::BumpLinear { matrix: vec![vec![0.5]], c: -0.5 }.build(&s11(), grid, &inf)?;
        let r = sandwich_harness(&lo, &mid, &up, &inf, &[0.0, 0.0], &[0.4, 0.2, 0.1], &DiffOptions::default())?;
        Ok(Suite::new("extension", "sandwich")
            .value("outer_gap", r.outer_gap)
            .value("outer_band", r.outer_band)
            .value("middle_offset", r.middle_offset)
            .value("middle_band", r.middle_band)
            .require(!r.violation)
            .done())
    }));

    suites.push(run_suite("measure", "flat_ball", || {
        let f = FunctionSpec::Zero.build(&s11(), square(9, 2.0)?, &inf)?;
        let r = 0.5;
        let a = pushforward_ball_measure(&f, &inf, &Point::zero(1), r, opts.measure_samples, seed)?;
        let b = pushforward_ball_measure(&f, &inf, &Point::zero(1), 2.0 * r, opts.measure_samples, seed ^ 1)?;
        let z = (a.estimate - r * r * r).abs() / a.stderr;
        let ratio = b.estimate / a.estimate;
        let sigma = ratio * ((a.stderr / a.estimate).powi(2) + (b.stderr / b.estimate).powi(2)).sqrt();
        Ok(Suite::new("measure", "flat_ball")
            .value("estimate", a.estimate)
            .value("z_score", z)
            .value("doubling_ratio", ratio)
            .value("doubling_sigma", sigma)
            .require(z <= 3.0 && (ratio - 8.0).abs() <= 3.0 * sigma)
            .done())
    }));

    suites.push(run_suite("measure", "ahlfors_band", || {
        let mut s = Suite::new("measure", "ahlfors_band");
        for spec in lipschitz_builtins() {
            let f = spec.build(&s11(), square(g, 2.0)?, &inf)?;
            let p = f.graph_point_at(&[0.0, 0.0])?;
            let prof = ahlfors_profile(&f, &inf, &p, &[0.05, 0.1, 0.2, 0.5], opts.measure_samples, seed)?;
            s = s.value(spec.name(), prof.band()).require(prof.band() < 20.0);
        }
        Ok(s.done())
    }));

    let passed = suites.iter().all(|s| s.passed);
    VerifyReport {
        seed,
        options: opts.clone(),
        passed,
        suites,
    }
}

/// Builtins with `n = k = 1` that are intrinsic Lipschitz on bounded domains.
pub fn lipschitz_builtins() -> Vec<FunctionSpec> {
    vec![
        FunctionSpec::Zero,
        FunctionSpec::Constant { value: vec![0.3] },
        FunctionSpec::IntrinsicLinear { matrix: vec![vec![1.5]] },
        FunctionSpec::VerticalCoordinate,
        FunctionSpec::ConeBoundary {
            vertex: vec![0.0, 0.0, 0.0],
            beta: 2.0,
        },
        FunctionSpec::BumpLinear {
            matrix: vec![vec![0.5]],
            c: 0.5,
        },
    ]
}
