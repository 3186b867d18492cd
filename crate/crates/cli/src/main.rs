use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ppsd::analytic::SpeedupParams;
use ppsd::harness::{self, ExperimentConfig, SweepAxis, SweepRow, SweepSpec};
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "ppsd", version, about = "Early-exit speculative decoding simulator")]
struct Cli {
    /// Default directory for result files when no explicit path is given.
    #[arg(long, global = true, env = "PPSD_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form quantities for one operating point.
    Analytic {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 5)]
        gamma: u32,
        #[arg(long)]
        n_layers: usize,
        #[arg(long)]
        exit_depth: usize,
    },
    /// Run one simulation and emit its result row.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Print the resolved configuration instead of running.
        #[arg(long)]
        dump_config: bool,
    },
    /// Run a one- or two-parameter sweep.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Swept parameter, e.g. `gamma=1..32` or `alpha=0,0.5,1`. Repeat for a second axis.
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// Decode with the toy model and compare against plain decoding.
    Decode {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated prompt token ids; a seeded random prompt otherwise.
        #[arg(long, value_delimiter = ',')]
        prompt: Option<Vec<u32>>,
        /// Reject every draft.
        #[arg(long)]
        force_reject: bool,
        /// Fail when the output differs from plain decoding.
        #[arg(long)]
        check: bool,
    },
    /// Run one simulation and emit its event trace.
    Trace {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Every experiment field as a flag; flags override values from `--config`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML file whose keys are the experiment field names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    n_layers: Option<u64>,
    #[arg(long)]
    exit_depth: Option<u64>,
    #[arg(long)]
    exit_stage: Option<u64>,
    #[arg(long)]
    gamma: Option<u64>,
    #[arg(long)]
    oracle: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    vocab: Option<u64>,
    #[arg(long)]
    lm_seed: Option<u64>,
    #[arg(long, visible_alias = "max-tokens")]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hop_latency: Option<u64>,
    #[arg(long)]
    cache_reuse: bool,
    #[arg(long)]
    steady_state: bool,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl ConfigArgs {
    fn read_file(&self) -> Result<Table> {
        match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                text.parse::<Table>()
                    .with_context(|| format!("parsing {}", path.display()))
            }
            None => Ok(Table::new()),
        }
    }

    fn overlay(&self, table: &mut Table) -> Result<()> {
        fn int(table: &mut Table, key: &str, v: Option<u64>) -> Result<()> {
            if let Some(v) = v {
                let v = i64::try_from(v).with_context(|| format!("`{key}` is too large"))?;
                table.insert(key.into(), Value::Integer(v));
            }
            Ok(())
        }
        fn set(table: &mut Table, key: &str, v: Option<Value>) {
            if let Some(v) = v {
                table.insert(key.into(), v);
            }
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| Value::String(p.display().to_string()));
        set(table, "regime", self.regime.clone().map(Value::String));
        set(table, "oracle", self.oracle.clone().map(Value::String));
        set(table, "alpha", self.alpha.map(Value::Float));
        set(table, "beta", self.beta.map(Value::Float));
        set(table, "output", path(&self.output));
        set(table, "trace", path(&self.trace));
        int(table, "n_layers", self.n_layers)?;
        int(table, "exit_depth", self.exit_depth)?;
        int(table, "exit_stage", self.exit_stage)?;
        int(table, "gamma", self.gamma)?;
        int(table, "vocab", self.vocab)?;
        int(table, "lm_seed", self.lm_seed)?;
        int(table, "horizon", self.horizon)?;
        int(table, "seed", self.seed)?;
        int(table, "hop_latency", self.hop_latency)?;
        if self.cache_reuse {
            table.insert("cache_reuse".into(), Value::Boolean(true));
        }
        if self.steady_state {
            table.insert("steady_state".into(), Value::Boolean(true));
        }
        if !table.contains_key("oracle") {
            table.insert("oracle".into(), Value::String("bernoulli".into()));
        }
        if !table.contains_key("seed") {
            table.insert("seed".into(), Value::Integer(0));
        }
        Ok(())
    }

    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut table = self.read_file()?;
        self.overlay(&mut table)?;
        to_experiment(table)
    }
}

fn to_experiment(table: Table) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = Value::Table(table).try_into().context("invalid configuration")?;
    config.validate()?;
    Ok(config)
}

fn default_path(explicit: &Option<PathBuf>, out_dir: &Option<PathBuf>, name: &str) -> Option<PathBuf> {
    explicit.clone().or_else(|| out_dir.as_ref().map(|d| d.join(name)))
}

fn write_csv_or_stdout(path: Option<&Path>, rows: &[SweepRow]) -> Result<()> {
    match path {
        Some(p) => harness::write_rows_to_path(p, rows)?,
        None => harness::write_rows(io::stdout().lock(), rows)?,
    }
    Ok(())
}

fn write_trace(path: &Path, trace: &ppsd::pipesim::EventTrace) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    trace.write_csv(File::create(path).with_context(|| format!("creating {}", path.display()))?)?;
    Ok(())
}

fn cmd_run(args: &ConfigArgs, dump_config: bool, out_dir: &Option<PathBuf>) -> Result<()> {
    let mut config = args.experiment()?;
    if dump_config {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    config.output = default_path(&config.output, out_dir, "run.csv");
    let outcome = harness::execute(&config)?;
    harness::write_rows(io::stdout().lock(), std::slice::from_ref(&outcome.row))?;
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs, axes: &[String], out_dir: &Option<PathBuf>) -> Result<()> {
    let mut table = args.read_file()?;
    let (mut base, mut spec_axes) = match table.remove("base") {
        Some(Value::Table(base)) => {
            let axes = match table.remove("axes") {
                Some(v) => v.try_into::<Vec<SweepAxis>>().context("invalid `axes`")?,
                None => Vec::new(),
            };
            if let Some(key) = table.keys().next() {
                bail!("unknown sweep key `{key}`");
            }
            (base, axes)
        }
        Some(_) => bail!("`base` must be a table"),
        None => (table, Vec::new()),
    };
    for axis in axes {
        spec_axes.push(SweepAxis::parse(axis)?);
    }
    args.overlay(&mut base)?;
    // Cells fill in the swept field, so the base alone need not be valid.
    let base: ExperimentConfig = Value::Table(base).try_into().context("invalid configuration")?;
    let spec = SweepSpec { base, axes: spec_axes };
    let rows = harness::sweep(&spec)?;
    let path = default_path(&spec.base.output, out_dir, "sweep.csv");
    write_csv_or_stdout(path.as_deref(), &rows)
}

fn cmd_trace(args: &ConfigArgs, out_dir: &Option<PathBuf>) -> Result<()> {
    let config = args.experiment()?;
    let outcome = harness::run(&config, true)?;
    let trace = outcome.trace.expect("trace requested");
    if let Some(path) = &config.output {
        harness::write_rows_to_path(path, std::slice::from_ref(&outcome.row))?;
    }
    match default_path(&config.trace, out_dir, "trace.csv") {
        Some(path) => write_trace(&path, &trace),
        None => Ok(trace.write_csv(io::stdout().lock())?),
    }
}

fn join(tokens: &[u32]) -> String {
    tokens.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn cmd_decode(args: &ConfigArgs, prompt: Option<&[u32]>, force_reject: bool, check: bool) -> Result<ExitCode> {
    let config = args.experiment()?;
    let report = harness::decode(&config, prompt, force_reject)?;
    if let Some(path) = &config.trace {
        write_trace(path, &report.trace)?;
    }
    let m = &report.metrics;
    let mut out = io::stdout().lock();
    writeln!(out, "prompt: {}", join(&report.prompt))?;
    writeln!(out, "tokens: {}", join(&report.tokens))?;
    writeln!(out, "reference: {}", join(&report.reference))?;
    writeln!(out, "matches_reference: {}", report.matches_reference())?;
    writeln!(
        out,
        "ticks: {} accepts: {} rejects: {} speedup: {:.4}",
        m.ticks, m.accepts, m.rejects, m.speedup_vs_ar
    )?;
    if check && !report.matches_reference() {
        eprintln!("error: decoded tokens differ from plain decoding");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Analytic {
            alpha,
            gamma,
            n_layers,
            exit_depth,
        } => SpeedupParams::new(*alpha, *gamma, *n_layers, *exit_depth)
            .and_then(|p| harness::analytic_report(&p))
            .map(|report| {
                print!("{report}");
                ExitCode::SUCCESS
            })
            .map_err(Into::into),
        Command::Run { config, dump_config } => cmd_run(config, *dump_config, &cli.out_dir).map(|_| ExitCode::SUCCESS),
        Command::Sweep { config, axes } => cmd_sweep(config, axes, &cli.out_dir).map(|_| ExitCode::SUCCESS),
        Command::Decode {
            config,
            prompt,
            force_reject,
            check,
        } => cmd_decode(config, prompt.as_deref(), *force_reject, *check),
        Command::Trace { config } => cmd_trace(config, &cli.out_dir).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
