use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hgraph::builtins::list_builtins;
use hgraph::Metric;
use hgraph_cli::config::{RunConfig, Task};
use hgraph_cli::{run, run_extend, CliError, ExtendInputs, Manifest};

#[derive(Parser)]
#[command(name = "hgraph", version, about = "Intrinsic graphs in Heisenberg groups")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// infinity, koranyi or cc.
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the tasks listed in the config.
    Run(Common),
    /// Extend values given on a node subset of the configured grid.
    Extend {
        #[command(flatten)]
        common: Common,
        /// CSV with columns node,in_e.
        #[arg(long)]
        mask: PathBuf,
        /// CSV with columns node,value.
        #[arg(long)]
        values: PathBuf,
        #[arg(long)]
        lipschitz: f64,
    },
    /// Run the built-in self-checks.
    Verify(Common),
    /// Print the built-in functions as JSON.
    ListBuiltins,
}

fn load(c: &Common, require_config: bool) -> Result<RunConfig, CliError> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None if require_config => return Err(CliError::Validation("config: --config is required".into())),
        None => {
            let mut cfg = RunConfig::minimal(1, 1, hgraph::builtins::FunctionSpec::Zero, Vec::new(), 0);
            cfg.function = None;
            cfg
        }
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.clone());
    }
    if let Some(m) = &c.metric {
        cfg.metric = match m.as_str() {
            "infinity" => Metric::Infinity,
            "koranyi" => Metric::Koranyi,
            "cc" => Metric::cc(),
            other => return Err(CliError::Validation(format!("metric: unknown metric '{other}'"))),
        };
    }
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(CliError::Validation("threads: must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("hgraph-out"))
}

fn report(m: Manifest) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    for f in &m.files {
        let _ = writeln!(out, "wrote {f}");
    }
    if m.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Task(m.failures.join("; ")))
    }
}

fn main_inner(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Run(c) => {
            let cfg = load(&c, true)?;
            report(run(&cfg, &out_dir(&cfg))?)
        }
        Cmd::Verify(c) => {
            let mut cfg = load(&c, false)?;
            cfg.tasks = vec![Task::Verify];
            report(run(&cfg, &out_dir(&cfg))?)
        }
        Cmd::Extend {
            common,
            mask,
            values,
            lipschitz,
        } => {
            let cfg = load(&common, true)?;
            let inputs = ExtendInputs {
                mask: &mask,
                values: &values,
                lipschitz,
            };
            report(run_extend(&cfg, &inputs, &out_dir(&cfg))?)
        }
        Cmd::ListBuiltins => {
            let text = serde_json::to_string_pretty(&list_builtins()).map_err(|e| CliError::Io(e.to_string()))?;
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hgraph: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
