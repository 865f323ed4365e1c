//! Run configuration, read from TOML or JSON.

use std::path::{Path, PathBuf};

use hgraph::builtins::FunctionSpec;
use hgraph::diff::DiffOptions;
use hgraph::verify::VerifyOptions;
use hgraph::{Axis, Grid, Interpolation, Metric, SplittingSpec, MAX_N};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Differential,
    Extend,
    Measure,
    Verify,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Differential => "differential",
            Task::Extend => "extend",
            Task::Measure => "measure",
            Task::Verify => "verify",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplittingConfig {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_frame: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_frame: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub j_max: u32,
    pub radii: Vec<f64>,
    pub cells: bool,
    pub global: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            j_max: 16,
            radii: Vec::new(),
            cells: false,
            global: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DifferentialConfig {
    /// W-coordinates of the base points; empty means the origin.
    pub base_points: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    pub alphas: Vec<f64>,
    pub tol: f64,
    pub decay: f64,
    pub exact_floor: f64,
}

impl Default for DifferentialConfig {
    fn default() -> Self {
        let d = DiffOptions::default();
        DifferentialConfig {
            base_points: Vec::new(),
            radii: vec![0.4, 0.2, 0.1],
            alphas: vec![1.0, 0.5, 0.1],
            tol: d.tol,
            decay: d.decay,
            exact_floor: d.exact_floor,
        }
    }
}

impl DifferentialConfig {
    pub fn options(&self) -> DiffOptions {
        DiffOptions {
            tol: self.tol,
            decay: self.decay,
            exact_floor: self.exact_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendConfig {
    pub lipschitz: f64,
    /// E is every `stride`-th node (flat index).
    pub stride: usize,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        ExtendConfig {
            lipschitz: 1.0,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// W-coordinates of the ball center's base; empty means the origin.
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    pub samples: usize,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            center: Vec::new(),
            radii: vec![0.05, 0.1, 0.2, 0.5],
            samples: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub n: usize,
    pub splitting: SplittingConfig,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<FunctionSpec>,
    #[serde(default)]
    pub grid: Vec<Axis>,
    #[serde(default)]
    pub interpolation: Interpolation,
    #[serde(default)]
    pub tasks: Vec<Task>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub differential: DifferentialConfig,
    #[serde(default)]
    pub extend: ExtendConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub verify: VerifyOptions,
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{name}: {msg}"))
}

fn finite_all(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(field(name, "values must be finite"));
    }
    Ok(())
}

fn positive_all(name: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(field(name, "values must be positive and finite"));
    }
    Ok(())
}

impl RunConfig {
    pub fn minimal(n: usize, k: usize, function: FunctionSpec, grid: Vec<Axis>, seed: u64) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            n,
            splitting: SplittingConfig {
                k,
                v_frame: None,
                w_frame: None,
            },
            metric: Metric::Infinity,
            function: Some(function),
            grid,
            interpolation: Interpolation::default(),
            tasks: Vec::new(),
            seed,
            output: None,
            classify: ClassifyConfig::default(),
            differential: DifferentialConfig::default(),
            extend: ExtendConfig::default(),
            measure: MeasureConfig::default(),
            verify: VerifyOptions::default(),
        }
    }

    pub fn splitting_spec(&self) -> SplittingSpec {
        SplittingSpec {
            n: self.n,
            k: self.splitting.k,
            v_frame: self.splitting.v_frame.clone(),
            w_frame: self.splitting.w_frame.clone(),
        }
    }

    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        let cfg: RunConfig = if json {
            serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?
        } else {
            toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?
        };
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("config: cannot read {}: {e}", path.display())))?;
        let json = path.extension().is_some_and(|e| e == "json");
        RunConfig::parse(&text, json)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field that the tasks rely on.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.n == 0 || self.n > MAX_N {
            return Err(field("n", format!("must be in 1..={MAX_N}")));
        }
        let s = self.splitting_spec().build().map_err(|e| field("splitting", e))?;
        if let Metric::CarnotCaratheodory(p) = &self.metric {
            p.validate().map_err(|e| field("metric", e))?;
        }
        let needs_function = self.tasks.iter().any(|t| *t != Task::Verify);
        if needs_function {
            let Some(f) = &self.function else {
                return Err(field("function", "required by the selected tasks"));
            };
            let grid = Grid::new(self.grid.clone()).map_err(|e| field("grid", e))?;
            if grid.dim() != s.w_dim() {
                return Err(field("grid", format!("needs {} axes, got {}", s.w_dim(), grid.dim())));
            }
            f.build(&s, grid, &self.metric).map_err(|e| {
                let msg = e.to_string();
                if msg.contains("function.") {
                    CliError::Validation(msg.replace("invalid input: ", ""))
                } else {
                    field("function", msg)
                }
            })?;
        }
        let c = &self.classify;
        if c.j_max == 0 {
            return Err(field("classify.j_max", "must be positive"));
        }
        positive_all("classify.radii", &c.radii)?;
        let d = &self.differential;
        for (i, b) in d.base_points.iter().enumerate() {
            finite_all(&format!("differential.base_points[{i}]"), b)?;
            if b.len() != s.w_dim() {
                return Err(field(
                    &format!("differential.base_points[{i}]"),
                    format!("needs {} coordinates", s.w_dim()),
                ));
            }
        }
        positive_all("differential.radii", &d.radii)?;
        if d.radii.is_empty() || d.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(field("differential.radii", "must be non-empty and strictly decreasing"));
        }
        if d.alphas.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
            return Err(field("differential.alphas", "values must be nonnegative and finite"));
        }
        positive_all("differential.tol", &[d.tol, d.decay])?;
        if !(d.exact_floor >= 0.0) {
            return Err(field("differential.exact_floor", "must be nonnegative"));
        }
        positive_all("extend.lipschitz", &[self.extend.lipschitz])?;
        if self.extend.stride == 0 {
            return Err(field("extend.stride", "must be positive"));
        }
        let m = &self.measure;
        finite_all("measure.center", &m.center)?;
        if !m.center.is_empty() && m.center.len() != s.w_dim() {
            return Err(field("measure.center", format!("needs {} coordinates", s.w_dim())));
        }
        positive_all("measure.radii", &m.radii)?;
        if m.samples == 0 {
            return Err(field("measure.samples", "must be positive"));
        }
        if self.verify.samples == 0 || self.verify.measure_samples == 0 {
            return Err(field("verify", "sample counts must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        let mut c = RunConfig::minimal(
            1,
            1,
            FunctionSpec::IntrinsicLinear { matrix: vec![vec![0.5]] },
            vec![Axis::new(-1.0, 1.0, 9).unwrap(); 2],
            7,
        );
        c.tasks = vec![Task::Classify, Task::Measure];
        c
    }

    #[test]
    fn toml_and_json_round_trip() {
        let c = sample();
        assert_eq!(RunConfig::parse(&c.to_toml(), false).unwrap(), c);
        assert_eq!(RunConfig::parse(&c.to_json(), true).unwrap(), c);
        let mut cc = c.clone();
        cc.metric = Metric::cc();
        assert_eq!(RunConfig::parse(&cc.to_toml(), false).unwrap(), cc);
    }

    #[test]
    fn minimal_toml() {
        let text = r#"
schema_version = 1
n = 1
seed = 3
tasks = ["classify"]
splitting = { k = 1 }
function = { name = "zero" }
grid = [{ min = -1.0, max = 1.0, count = 5 }, { min = -1.0, max = 1.0, count = 5 }]
"#;
        let c = RunConfig::parse(text, false).unwrap();
        c.validate().unwrap();
        assert_eq!(c.metric, Metric::Infinity);
    }

    #[test]
    fn validation_names_fields() {
        let mut c = sample();
        c.grid.pop();
        assert!(c.validate().unwrap_err().to_string().contains("grid"));
        let mut c = sample();
        c.differential.radii = vec![0.1, 0.2];
        assert!(c.validate().unwrap_err().to_string().contains("differential.radii"));
        let mut c = sample();
        c.function = Some(FunctionSpec::SqrtCusp);
        c.n = 2;
        c.grid = vec![Axis::new(-1.0, 1.0, 3).unwrap(); 4];
        assert!(c.validate().unwrap_err().to_string().contains("function"));
        let text = sample().to_toml().replace("intrinsic_linear", "foo");
        assert!(RunConfig::parse(&text, false).is_err());
        let text = sample().to_toml().replace("seed = 7\n", "");
        assert!(RunConfig::parse(&text, false).unwrap_err().to_string().contains("seed"));
    }
}
