//! Registry of named test functions `φ: W → V`.

use evalexpr::{build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::diff::IntrinsicLinearMap;
use crate::error::{invalid, Result};
use crate::extension::ConeBoundaryFn;
use crate::group::Point;
use crate::metrics::Metric;
use crate::sampled::{Grid, Interpolation, Orientation, SampledFunction};
use crate::splitting::Splitting;

/// Serializable description of a function, by builtin name and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Zero,
    Constant {
        value: Vec<f64>,
    },
    IntrinsicLinear {
        matrix: Vec<Vec<f64>>,
    },
    /// `φ(y, t) = t`, n = k = 1.
    VerticalCoordinate,
    /// `φ(y, t) = |y|^{1/2}`, n = k = 1.
    SqrtCusp,
    /// Upper boundary of the positive cone at `vertex` (coordinates
    /// `x_1..x_n, y_1..y_n, t`) with opening `beta`; k = 1.
    ConeBoundary {
        vertex: Vec<f64>,
        beta: f64,
    },
    /// `M·w_H + c·max(|w_H|², 4|t|)` on every component.
    BumpLinear {
        matrix: Vec<Vec<f64>>,
        c: f64,
    },
    /// One expression per V-component in the W-coordinates. Variables are
    /// `b0, b1, …` and `t`; for the standard splitting also `x{i}`, `y{i}`.
    Expression {
        components: Vec<String>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipStatus {
    /// Intrinsic Lipschitz on all of W.
    Global,
    /// Intrinsic Lipschitz on bounded domains.
    Local,
    /// Not intrinsic Lipschitz near some point.
    No,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuiltinInfo {
    pub name: &'static str,
    pub params: &'static str,
    pub requires: &'static str,
    pub lipschitz: LipStatus,
    pub lipschitz_note: &'static str,
    pub differentiability: &'static str,
}

pub fn list_builtins() -> Vec<BuiltinInfo> {
    vec![
        BuiltinInfo {
            name: "zero",
            params: "",
            requires: "any splitting",
            lipschitz: LipStatus::Global,
            lipschitz_note: "constant 0",
            differentiability: "everywhere, differential 0",
        },
        BuiltinInfo {
            name: "constant",
            params: "value: [k reals]",
            requires: "any splitting",
            lipschitz: LipStatus::Global,
            lipschitz_note: "constant 0",
            differentiability: "everywhere, differential 0",
        },
        BuiltinInfo {
            name: "intrinsic_linear",
            params: "matrix: k x (2n-k)",
            requires: "any splitting",
            lipschitz: LipStatus::Global,
            lipschitz_note: "graph is a homogeneous subgroup; for n = k = 1 under d_inf the constant is |m|",
            differentiability: "everywhere, differential equal to the matrix",
        },
        BuiltinInfo {
            name: "vertical_coordinate",
            params: "",
            requires: "n = 1, k = 1",
            lipschitz: LipStatus::Local,
            lipschitz_note: "pair ratios grow like |t|, bounded on bounded domains",
            differentiability: "differentiable at 0 with differential 0; residual |t|^{1/2}/2",
        },
        BuiltinInfo {
            name: "sqrt_cusp",
            params: "",
            requires: "n = 1, k = 1",
            lipschitz: LipStatus::No,
            lipschitz_note: "ratio |y|^{-1/2} diverges along y = 0",
            differentiability: "not differentiable on y = 0",
        },
        BuiltinInfo {
            name: "cone_boundary",
            params: "vertex: [x.., y.., t], beta > 0",
            requires: "k = 1",
            lipschitz: LipStatus::Global,
            lipschitz_note: "constant 1/beta",
            differentiability: "not differentiable at the vertex",
        },
        BuiltinInfo {
            name: "bump_linear",
            params: "matrix: k x (2n-k), c",
            requires: "any splitting",
            lipschitz: LipStatus::Local,
            lipschitz_note: "linear part plus a bump of second order at 0",
            differentiability: "differentiable at 0 with differential equal to the matrix",
        },
        BuiltinInfo {
            name: "expression",
            params: "components: [k expressions in b0.., t (x{i}, y{i} for the standard splitting)]",
            requires: "any splitting",
            lipschitz: LipStatus::Unknown,
            lipschitz_note: "measured only",
            differentiability: "measured only",
        },
    ]
}

/// Variable names of the W-coordinates, aliases included.
fn variable_names(s: &Splitting) -> Vec<Vec<String>> {
    let h = s.w_dim() - 1;
    let mut names: Vec<Vec<String>> = (0..h).map(|i| vec![format!("b{i}")]).collect();
    if s.is_standard() {
        let (n, k) = (s.n(), s.k());
        let alias = (k + 1..=n).map(|i| format!("x{i}")).chain((1..=n).map(|i| format!("y{i}")));
        for (slot, a) in names.iter_mut().zip(alias) {
            slot.push(a);
        }
    }
    names.push(vec!["t".to_string()]);
    names
}

struct Expressions {
    trees: Vec<Node<DefaultNumericTypes>>,
    names: Vec<Vec<String>>,
}

impl Expressions {
    fn compile(s: &Splitting, components: &[String]) -> Result<Self> {
        if components.len() != s.k() {
            return invalid(format!("function.components: need {} expressions, got {}", s.k(), components.len()));
        }
        let names = variable_names(s);
        let mut trees = Vec::new();
        for (i, src) in components.iter().enumerate() {
            let tree = build_operator_tree::<DefaultNumericTypes>(src)
                .map_err(|e| crate::Error::InvalidInput(format!("function.components[{i}]: {e}")))?;
            if let Some(v) = tree
                .iter_read_variable_identifiers()
                .find(|v| !names.iter().flatten().any(|n| n == v))
            {
                return invalid(format!("function.components[{i}]: unknown variable '{v}'"));
            }
            trees.push(tree);
        }
        Ok(Expressions { trees, names })
    }

    fn eval(&self, c: &[f64]) -> Result<Vec<f64>> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (names, v) in self.names.iter().zip(c) {
            for n in names {
                ctx.set_value(n.clone(), Value::Float(*v))
                    .map_err(|e| crate::Error::InvalidInput(e.to_string()))?;
            }
        }
        self.trees
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.eval_number_with_context(&ctx)
                    .map_err(|e| crate::Error::InvalidInput(format!("function.components[{i}]: {e}")))
            })
            .collect()
    }
}

fn require_heisenberg_one(s: &Splitting, name: &str) -> Result<()> {
    if s.n() != 1 || s.k() != 1 {
        return invalid(format!("function.name: '{name}' needs n = 1 and k = 1"));
    }
    Ok(())
}

impl FunctionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            FunctionSpec::Zero => "zero",
            FunctionSpec::Constant { .. } => "constant",
            FunctionSpec::IntrinsicLinear { .. } => "intrinsic_linear",
            FunctionSpec::VerticalCoordinate => "vertical_coordinate",
            FunctionSpec::SqrtCusp => "sqrt_cusp",
            FunctionSpec::ConeBoundary { .. } => "cone_boundary",
            FunctionSpec::BumpLinear { .. } => "bump_linear",
            FunctionSpec::Expression { .. } => "expression",
        }
    }

    pub fn info(&self) -> BuiltinInfo {
        list_builtins()
            .into_iter()
            .find(|b| b.name == self.name())
            .expect("every spec is registered")
    }

    /// Samples the function on `grid`. The metric only matters for
    /// `cone_boundary`.
    pub fn build(&self, s: &Splitting, grid: Grid, metric: &Metric) -> Result<SampledFunction> {
        let k = s.k();
        let sample = |f: &(dyn Fn(&[f64]) -> Vec<f64> + Sync)| {
            SampledFunction::from_fn(s.clone(), Orientation::WToV, grid.clone(), f)
        };
        match self {
            FunctionSpec::Zero => sample(&|_| vec![0.0; k]),
            FunctionSpec::Constant { value } => {
                if value.len() != k {
                    return invalid(format!("function.value: need {k} entries, got {}", value.len()));
                }
                sample(&|_| value.clone())
            }
            FunctionSpec::IntrinsicLinear { matrix } => {
                IntrinsicLinearMap::new(s.clone(), matrix)?.sample(grid)
            }
            FunctionSpec::VerticalCoordinate => {
                require_heisenberg_one(s, self.name())?;
                sample(&|c| vec![c[1]])
            }
            FunctionSpec::SqrtCusp => {
                require_heisenberg_one(s, self.name())?;
                sample(&|c| vec![c[0].abs().sqrt()])
            }
            FunctionSpec::ConeBoundary { vertex, beta } => {
                let gf = ConeBoundaryFn::new(s.clone(), Point::from_slice(vertex)?, *beta)?;
                let values: Result<Vec<f64>> = (0..grid.len())
                    .map(|i| gf.upper(metric, &grid.coords(i)))
                    .collect();
                SampledFunction::new(s.clone(), Orientation::WToV, grid, values?, None, Interpolation::default())
            }
            FunctionSpec::BumpLinear { matrix, c } => {
                if !c.is_finite() {
                    return invalid("function.c must be finite");
                }
                let map = IntrinsicLinearMap::new(s.clone(), matrix)?;
                let h = s.w_dim() - 1;
                sample(&|w| {
                    let z2: f64 = w[..h].iter().map(|v| v * v).sum();
                    let bump = c * z2.max(4.0 * w[h].abs());
                    let mut out = vec![0.0; k];
                    map.apply_into(w, &mut out);
                    out.iter_mut().for_each(|v| *v += bump);
                    out
                })
            }
            FunctionSpec::Expression { components } => {
                let ex = Expressions::compile(s, components)?;
                let mut values = Vec::with_capacity(grid.len() * k);
                for i in 0..grid.len() {
                    values.extend(ex.eval(&grid.coords(i))?);
                }
                SampledFunction::new(s.clone(), Orientation::WToV, grid, values, None, Interpolation::default())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampled::Axis;

    fn grid() -> Grid {
        Grid::new(vec![Axis::new(-1.0, 1.0, 5).unwrap(), Axis::new(-1.0, 1.0, 5).unwrap()]).unwrap()
    }

    #[test]
    fn registry_contents() {
        let all = list_builtins();
        for name in [
            "zero",
            "constant",
            "intrinsic_linear",
            "vertical_coordinate",
            "sqrt_cusp",
            "cone_boundary",
            "bump_linear",
        ] {
            assert!(all.iter().any(|b| b.name == name), "{name}");
        }
        let cusp = all.iter().find(|b| b.name == "sqrt_cusp").unwrap();
        assert_eq!(cusp.lipschitz, LipStatus::No);
        let vc = all.iter().find(|b| b.name == "vertical_coordinate").unwrap();
        assert!(vc.differentiability.contains("differential 0"));
    }

    #[test]
    fn spec_round_trip() {
        let specs = [
            FunctionSpec::Zero,
            FunctionSpec::IntrinsicLinear { matrix: vec![vec![0.5]] },
            FunctionSpec::ConeBoundary { vertex: vec![0.0, 0.0, 0.0], beta: 2.0 },
            FunctionSpec::Expression { components: vec!["y1^2 + t".into()] },
        ];
        for s in specs {
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<FunctionSpec>(&json).unwrap(), s);
        }
        assert!(serde_json::from_str::<FunctionSpec>(r#"{"name":"foo"}"#).is_err());
    }

    #[test]
    fn builds_values() {
        let s = Splitting::standard(1, 1).unwrap();
        let m = Metric::Infinity;
        let f = FunctionSpec::SqrtCusp.build(&s, grid(), &m).unwrap();
        assert_eq!(f.eval(&[0.5, 0.0]).unwrap(), vec![0.5f64.sqrt()]);
        let f = FunctionSpec::VerticalCoordinate.build(&s, grid(), &m).unwrap();
        assert_eq!(f.eval(&[0.5, -0.5]).unwrap(), vec![-0.5]);
        let f = FunctionSpec::Expression { components: vec!["2.0 * y1 + t * b0".into()] }
            .build(&s, grid(), &m)
            .unwrap();
        assert_eq!(f.eval(&[0.5, 1.0]).unwrap(), vec![1.5]);
        let f = FunctionSpec::BumpLinear { matrix: vec![vec![1.0]], c: 1.0 }.build(&s, grid(), &m).unwrap();
        assert_eq!(f.eval(&[0.5, 0.5]).unwrap(), vec![0.5 + 2.0]);
        let f = FunctionSpec::ConeBoundary { vertex: vec![0.0, 0.0, 0.0], beta: 2.0 }
            .build(&s, grid(), &m)
            .unwrap();
        assert_eq!(f.eval(&[1.0, 0.0]).unwrap(), vec![0.5]);
    }

    #[test]
    fn rejects_bad_specs() {
        let s2 = Splitting::standard(2, 1).unwrap();
        let g3 = Grid::new(vec![Axis::new(-1.0, 1.0, 3).unwrap(); 4]).unwrap();
        let m = Metric::Infinity;
        assert!(FunctionSpec::SqrtCusp.build(&s2, g3.clone(), &m).is_err());
        assert!(FunctionSpec::Constant { value: vec![1.0, 2.0] }.build(&s2, g3.clone(), &m).is_err());
        let e = FunctionSpec::Expression { components: vec!["q + 1".into()] }.build(&s2, g3, &m);
        assert!(e.unwrap_err().to_string().contains("unknown variable 'q'"));
    }
}
