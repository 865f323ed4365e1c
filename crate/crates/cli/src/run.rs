//! Task execution and output files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use hgraph::diff::{estimate_differential, tangent_subgroup, verify_cone_characterization, ConeRow, DiffEstimate};
use hgraph::extension::mcshane_extend;
use hgraph::graph::{classify_stepanov, StepanovOptions};
use hgraph::measure::{ahlfors_profile, pushforward_ball_measure};
use hgraph::verify::verify;
use hgraph::{homogeneous_dim, Error, Grid, Orientation, SampledFunction, Splitting};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Task};
use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Extra input files, as given.
    pub inputs: Vec<String>,
    pub files: Vec<String>,
    pub failures: Vec<String>,
    pub started_unix: u64,
    pub wall_seconds: f64,
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Out {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn coord_header(prefix: &str, d: usize) -> Vec<String> {
    (0..d).map(|i| format!("{prefix}{i}")).collect()
}

fn task_err(task: Task, e: Error) -> String {
    format!("{}: {e}", task.name())
}

fn build_function(cfg: &RunConfig, s: &Splitting) -> Result<SampledFunction, CliError> {
    let spec = cfg
        .function
        .as_ref()
        .ok_or_else(|| CliError::Validation("function: required by the selected tasks".into()))?;
    let grid = Grid::new(cfg.grid.clone()).map_err(|e| CliError::Validation(format!("grid: {e}")))?;
    let f = spec
        .build(s, grid, &cfg.metric)
        .map_err(|e| CliError::Validation(format!("function: {e}")))?;
    Ok(f.with_interpolation(cfg.interpolation))
}

/// Runs every task of `cfg`, writing outputs into `out`. Task failures are
/// listed in the manifest; only validation and i/o problems return `Err`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Manifest, CliError> {
    cfg.validate()?;
    if cfg.tasks.is_empty() {
        return Err(CliError::Validation("tasks: at least one task is required".into()));
    }
    if cfg.tasks.contains(&Task::Extend) && cfg.splitting.k != 1 {
        return Err(CliError::Validation("splitting.k: the extend task needs k = 1".into()));
    }
    let started = Instant::now();
    let s = cfg.splitting_spec().build().map_err(|e| CliError::Validation(format!("splitting: {e}")))?;
    let f = if cfg.tasks.iter().any(|t| *t != Task::Verify) {
        Some(build_function(cfg, &s)?)
    } else {
        None
    };
    let mut o = Out::new(out)?;
    let mut failures = Vec::new();
    for &task in &cfg.tasks {
        let res = match task {
            Task::Classify => classify(cfg, f.as_ref().unwrap(), &mut o),
            Task::Differential => differential(cfg, &s, f.as_ref().unwrap(), &mut o),
            Task::Extend => {
                let f = f.as_ref().unwrap();
                let e: Vec<bool> = (0..f.node_count())
                    .map(|i| i % cfg.extend.stride == 0 && f.is_active(i))
                    .collect();
                extend(cfg, f, &e, &mut o)
            }
            Task::Measure => measure(cfg, f.as_ref().unwrap(), &mut o),
            Task::Verify => verify_task(cfg, &mut o),
        };
        match res {
            Ok(Some(msg)) => failures.push(msg),
            Ok(None) => {}
            Err(TaskError::Cli(e)) => return Err(e),
            Err(TaskError::Lib(e)) => failures.push(task_err(task, e)),
        }
    }
    finish(cfg, o, Vec::new(), failures, started)
}

fn finish(
    cfg: &RunConfig,
    mut o: Out,
    inputs: Vec<String>,
    failures: Vec<String>,
    started: Instant,
) -> Result<Manifest, CliError> {
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut m = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        inputs,
        files: o.files.clone(),
        failures,
        started_unix,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    m.files.push("manifest.json".into());
    o.json("manifest.json", &m)?;
    Ok(m)
}

enum TaskError {
    Cli(CliError),
    Lib(Error),
}

impl From<CliError> for TaskError {
    fn from(e: CliError) -> Self {
        TaskError::Cli(e)
    }
}

impl From<Error> for TaskError {
    fn from(e: Error) -> Self {
        TaskError::Lib(e)
    }
}

/// `Ok(Some(msg))` marks a task that ran but did not pass.
type TaskResult = Result<Option<String>, TaskError>;

fn classify(cfg: &RunConfig, f: &SampledFunction, o: &mut Out) -> TaskResult {
    let c = &cfg.classify;
    let opts = StepanovOptions {
        j_max: c.j_max,
        radii: c.radii.clone(),
        cells: c.cells,
        global: c.global,
    };
    let rep = classify_stepanov(f, &cfg.metric, &opts)?;
    let d = f.domain_dim();
    let mut header = vec!["node".to_string()];
    header.extend(coord_header("w", d));
    header.extend(coord_header("value", f.value_dim()));
    header.push("active".into());
    header.push("label".into());
    header.extend(c.radii.iter().map(|r| format!("lip_r{r}")));
    let rows: Vec<Vec<String>> = (0..f.node_count())
        .map(|i| {
            let mut r = vec![i.to_string()];
            r.extend(f.node_coords(i).into_iter().map(num));
            r.extend(f.value(i).iter().copied().map(num));
            r.push((f.is_active(i) as u8).to_string());
            r.push(rep.labels[i].map(|j| j.to_string()).unwrap_or_default());
            if let Some(p) = rep.profiles.get(i) {
                r.extend(p.iter().copied().map(num));
            }
            r
        })
        .collect();
    o.csv("classify.csv", &header, &rows)?;
    let mut histogram = BTreeMap::new();
    for l in rep.labels.iter().flatten() {
        *histogram.entry(format!("C_{l}")).or_insert(0usize) += 1;
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        j_max: u32,
        active: usize,
        coverage: f64,
        labels: BTreeMap<String, usize>,
        global: Option<&'a hgraph::graph::LipConstant>,
        cells: &'a [hgraph::graph::CjCells],
    }
    o.json(
        "classify.json",
        &Summary {
            j_max: rep.j_max,
            active: f.active_count(),
            coverage: rep.coverage(f),
            labels: histogram,
            global: rep.global.as_ref(),
            cells: &rep.cells,
        },
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct DiffEntry {
    base: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<DiffEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tangent_frame: Option<Vec<Vec<f64>>>,
    cones: Vec<ConeRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn differential(cfg: &RunConfig, s: &Splitting, f: &SampledFunction, o: &mut Out) -> TaskResult {
    let d = &cfg.differential;
    let bases = if d.base_points.is_empty() {
        vec![vec![0.0; f.domain_dim()]]
    } else {
        d.base_points.clone()
    };
    let opts = d.options();
    let mut entries = Vec::new();
    let mut header = vec!["base".to_string()];
    header.extend(coord_header("w", f.domain_dim()));
    header.extend(["radius", "ball_size", "residual", "verdict"].map(String::from));
    let mut rows = Vec::new();
    let mut errors = 0;
    for (bi, b) in bases.iter().enumerate() {
        let mut entry = DiffEntry {
            base: b.clone(),
            estimate: None,
            tangent_frame: None,
            cones: Vec::new(),
            error: None,
        };
        match estimate_differential(f, &cfg.metric, b, &d.radii, &opts) {
            Ok(est) => {
                for (ri, r) in est.radii.iter().enumerate() {
                    let mut row = vec![bi.to_string()];
                    row.extend(b.iter().copied().map(num));
                    row.push(num(*r));
                    row.push(est.ball_sizes[ri].to_string());
                    row.push(num(est.residuals[ri]));
                    row.push(verdict_name(&est));
                    rows.push(row);
                }
                match tangent_subgroup(s, &est)
                    .and_then(|t| Ok((verify_cone_characterization(f, &cfg.metric, b, &t, &d.alphas)?, t)))
                {
                    Ok((cones, t)) => {
                        entry.cones = cones;
                        entry.tangent_frame = Some(t.frame);
                    }
                    Err(e) => entry.error = Some(e.to_string()),
                }
                entry.estimate = Some(est);
            }
            Err(e) => {
                errors += 1;
                entry.error = Some(e.to_string());
            }
        }
        entries.push(entry);
    }
    o.csv("differential.csv", &header, &rows)?;
    o.json("differential.json", &entries)?;
    Ok((errors > 0).then(|| format!("differential: {errors} base point(s) could not be estimated")))
}

fn verdict_name(e: &DiffEstimate) -> String {
    serde_json::to_value(e.verdict)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

fn extend(cfg: &RunConfig, f: &SampledFunction, e: &[bool], o: &mut Out) -> TaskResult {
    let r = mcshane_extend(f, e, cfg.extend.lipschitz, &cfg.metric)?;
    let mut header = vec!["node".to_string()];
    header.extend(coord_header("w", f.domain_dim()));
    header.extend(["in_e", "value", "lower", "upper"].map(String::from));
    let rows: Vec<Vec<String>> = (0..f.node_count())
        .map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(f.node_coords(i).into_iter().map(num));
            row.push((e[i] as u8).to_string());
            row.push(if f.is_active(i) { num(f.value(i)[0]) } else { String::new() });
            row.push(num(r.lower.value(i)[0]));
            row.push(num(r.upper.value(i)[0]));
            row
        })
        .collect();
    o.csv("extension.csv", &header, &rows)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        declared: f64,
        e_nodes: usize,
        lip_e: Option<&'a hgraph::graph::LipConstant>,
        lip_upper: &'a hgraph::graph::LipConstant,
        lip_lower: &'a hgraph::graph::LipConstant,
        max_e_gap: f64,
    }
    o.json(
        "extension.json",
        &Summary {
            declared: r.declared,
            e_nodes: e.iter().filter(|b| **b).count(),
            lip_e: r.lip_e.as_ref(),
            lip_upper: &r.lip_upper,
            lip_lower: &r.lip_lower,
            max_e_gap: r.max_e_gap,
        },
    )?;
    Ok(None)
}

#[derive(Serialize)]
struct MeasureRow {
    radius: f64,
    hits: Option<u64>,
    estimate: f64,
    stderr: f64,
    ratio: f64,
    ratio_stderr: f64,
    clipped: Option<bool>,
    enlarged: Option<bool>,
}

fn measure(cfg: &RunConfig, f: &SampledFunction, o: &mut Out) -> TaskResult {
    let m = &cfg.measure;
    let center = if m.center.is_empty() {
        vec![0.0; f.domain_dim()]
    } else {
        m.center.clone()
    };
    let p = f.graph_point_at(&center)?;
    let s = f.splitting();
    let exponent = (homogeneous_dim(s.n()) - s.k()) as f64;
    let lo = m.radii.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = m.radii.iter().copied().fold(0.0, f64::max);
    let rows: Vec<MeasureRow> = if hi >= 10.0 * lo {
        let prof = ahlfors_profile(f, &cfg.metric, &p, &m.radii, m.samples, cfg.seed)?;
        prof.rows
            .into_iter()
            .map(|r| MeasureRow {
                radius: r.radius,
                hits: None,
                estimate: r.estimate,
                stderr: r.stderr,
                ratio: r.ratio,
                ratio_stderr: r.ratio_stderr,
                clipped: None,
                enlarged: None,
            })
            .collect()
    } else {
        let mut rows = Vec::new();
        for &r in &m.radii {
            let e = pushforward_ball_measure(f, &cfg.metric, &p, r, m.samples, cfg.seed)?;
            let norm = (2.0 * r).powf(exponent);
            rows.push(MeasureRow {
                radius: r,
                hits: Some(e.hits),
                estimate: e.estimate,
                stderr: e.stderr,
                ratio: e.estimate / norm,
                ratio_stderr: e.stderr / norm,
                clipped: Some(e.clipped),
                enlarged: Some(e.enlarged),
            });
        }
        rows
    };
    let header = ["radius", "estimate", "stderr", "ratio", "ratio_stderr"].map(String::from);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.radius), num(r.estimate), num(r.stderr), num(r.ratio), num(r.ratio_stderr)])
        .collect();
    o.csv("measure.csv", &header, &table)?;
    #[derive(Serialize)]
    struct Summary<'a> {
        center: Vec<f64>,
        exponent: f64,
        samples: usize,
        rows: &'a [MeasureRow],
    }
    o.json(
        "measure.json",
        &Summary {
            center,
            exponent,
            samples: m.samples,
            rows: &rows,
        },
    )?;
    Ok(None)
}

fn verify_task(cfg: &RunConfig, o: &mut Out) -> TaskResult {
    let rep = verify(cfg.seed, &cfg.verify);
    o.json("verify_report.json", &rep)?;
    let failed: Vec<&str> = rep.failures().map(|s| s.name.as_str()).collect();
    Ok((!failed.is_empty()).then(|| format!("verify: failing suites {}", failed.join(", "))))
}

/// Inputs of the standalone extension command.
pub struct ExtendInputs<'a> {
    pub mask: &'a Path,
    pub values: &'a Path,
    pub lipschitz: f64,
}

fn read_node_table(path: &Path, column: &str, nodes: usize) -> Result<Vec<Option<String>>, CliError> {
    let name = path.display().to_string();
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
    let headers = r.headers().map_err(|e| CliError::Validation(format!("{name}: {e}")))?.clone();
    let node_col = headers.iter().position(|h| h == "node");
    let val_col = headers.iter().position(|h| h == column);
    let (Some(nc), Some(vc)) = (node_col, val_col) else {
        return Err(CliError::Validation(format!("{name}: expected columns 'node' and '{column}'")));
    };
    let mut out = vec![None; nodes];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        let node: usize = rec
            .get(nc)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Validation(format!("{name}: row {}: bad node index", line + 1)))?;
        if node >= nodes {
            return Err(CliError::Validation(format!(
                "{name}: row {}: node {node} outside the grid of {nodes} nodes",
                line + 1
            )));
        }
        out[node] = rec.get(vc).map(|s| s.trim().to_string());
    }
    Ok(out)
}

/// McShane extension of values given on a node subset of the configured
/// grid. Values outside the mask are ignored.
pub fn run_extend(cfg: &RunConfig, inputs: &ExtendInputs<'_>, out: &Path) -> Result<Manifest, CliError> {
    let started = Instant::now();
    if !(inputs.lipschitz > 0.0) || !inputs.lipschitz.is_finite() {
        return Err(CliError::Validation("lipschitz: must be positive and finite".into()));
    }
    if cfg.splitting.k != 1 {
        return Err(CliError::Validation("splitting.k: extension needs k = 1".into()));
    }
    let s = cfg.splitting_spec().build().map_err(|e| CliError::Validation(format!("splitting: {e}")))?;
    let grid = Grid::new(cfg.grid.clone()).map_err(|e| CliError::Validation(format!("grid: {e}")))?;
    if grid.dim() != s.w_dim() {
        return Err(CliError::Validation(format!("grid: needs {} axes, got {}", s.w_dim(), grid.dim())));
    }
    let nodes = grid.len();
    let mask = read_node_table(inputs.mask, "in_e", nodes)?;
    let vals = read_node_table(inputs.values, "value", nodes)?;
    let mut e = vec![false; nodes];
    let mut values = vec![0.0; nodes];
    for i in 0..nodes {
        e[i] = match mask[i].as_deref() {
            None | Some("0") | Some("false") | Some("") => false,
            Some("1") | Some("true") => true,
            Some(other) => {
                return Err(CliError::Validation(format!(
                    "{}: node {i}: in_e must be 0/1, got '{other}'",
                    inputs.mask.display()
                )))
            }
        };
        if e[i] {
            let v: f64 = vals[i]
                .as_deref()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| CliError::Validation(format!("{}: node {i}: missing value", inputs.values.display())))?;
            if !v.is_finite() {
                return Err(CliError::Validation(format!(
                    "{}: node {i}: value must be finite",
                    inputs.values.display()
                )));
            }
            values[i] = v;
        }
    }
    if !e.iter().any(|b| *b) {
        return Err(CliError::Validation(format!("{}: no node is in E", inputs.mask.display())));
    }
    let f = SampledFunction::new(s, Orientation::WToV, grid, values, None, cfg.interpolation)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let mut cfg = cfg.clone();
    cfg.extend.lipschitz = inputs.lipschitz;
    cfg.tasks = vec![Task::Extend];
    let mut o = Out::new(out)?;
    let mut failures = Vec::new();
    match extend(&cfg, &f, &e, &mut o) {
        Ok(_) => {}
        Err(TaskError::Cli(e)) => return Err(e),
        Err(TaskError::Lib(e)) => failures.push(task_err(Task::Extend, e)),
    }
    let inputs = vec![inputs.mask.display().to_string(), inputs.values.display().to_string()];
    finish(&cfg, o, inputs, failures, started)
}
