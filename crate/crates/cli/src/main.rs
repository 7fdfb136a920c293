use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tandem_core::run_sim;
use tq::config::{self, preset, read_entries, Entry};
use tq::{build_config, read_csv, render_plot, run_sweep, table, write_csv, Metric, PlotSpec, RunConfig};

#[derive(Parser)]
#[command(name = "tq", version, about = "Tandem queue with blocking and feedback: solve, sweep, simulate, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single parameter point with one or more methods
    Solve(ModelArgs),
    /// Sweep one parameter and write a CSV table
    Sweep(SweepArgs),
    /// Simulate a single parameter point
    Simulate(ModelArgs),
    /// Render a sweep CSV as an SVG line chart
    Plot(PlotArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    /// Probability that a station-2 completion rejoins queue 1
    #[arg(long)]
    p_fb: Option<f64>,
    /// Station-2 capacity that blocks station 1
    #[arg(long)]
    n: Option<usize>,
    /// First-buffer capacity, or `inf`
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated: exact, geometric, hybrid, oracle, sim or all
    #[arg(long, visible_alias = "methods")]
    method: Option<String>,
    /// Levels kept by the truncated oracle
    #[arg(long)]
    j_max: Option<usize>,
    /// Explicit boundary levels of the hybrid method
    #[arg(long)]
    m_boundary: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated events including warmup
    #[arg(long)]
    events: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    batches: Option<usize>,
    /// Output CSV file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Built-in grid: capacity, feedback, threshold, load or threshold-load
    #[arg(long)]
    preset: Option<String>,
    /// sigma, p_fb, n_threshold or k_capacity
    #[arg(long)]
    sweep_param: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    to: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Parameter held at several values, one series each
    #[arg(long)]
    series_param: Option<String>,
    /// Comma-separated series values
    #[arg(long)]
    series_values: Option<String>,
}

#[derive(Args)]
struct PlotArgs {
    /// Sweep CSV to read
    input: PathBuf,
    /// Output SVG file
    #[arg(long)]
    out: PathBuf,
    /// Column on the vertical axis
    #[arg(long, default_value = "mql1")]
    y: String,
    #[arg(long)]
    title: Option<String>,
}

impl ModelArgs {
    fn flags(&self) -> Vec<Entry> {
        let mut v = Vec::new();
        let mut push = |k: &str, val: Option<String>| {
            if let Some(val) = val {
                v.push(Entry::flag(k, val));
            }
        };
        push("sigma", self.sigma.map(|x| x.to_string()));
        push("mu1", self.mu1.map(|x| x.to_string()));
        push("mu2", self.mu2.map(|x| x.to_string()));
        push("p-fb", self.p_fb.map(|x| x.to_string()));
        push("n", self.n.map(|x| x.to_string()));
        push("k", self.k.clone());
        push("method", self.method.clone());
        push("j-max", self.j_max.map(|x| x.to_string()));
        push("m-boundary", self.m_boundary.map(|x| x.to_string()));
        push("seed", self.seed.map(|x| x.to_string()));
        push("events", self.events.map(|x| x.to_string()));
        push("warmup", self.warmup.map(|x| x.to_string()));
        push("batches", self.batches.map(|x| x.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        v
    }
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(pre: Vec<Entry>, file: Option<&PathBuf>, flags: Vec<Entry>) -> Result<RunConfig, Failure> {
    let mut entries = pre;
    if let Some(f) = file {
        entries.extend(read_entries(f)?);
    }
    entries.extend(flags);
    Ok(build_config(&entries)?)
}

fn emit(cfg: &RunConfig, rows: &[tq::Row]) -> Result<(), Failure> {
    match &cfg.out {
        Some(path) => write_csv(path, rows).map_err(|e| Failure::Usage(e.to_string())),
        None => {
            print!("{}", table::to_string(rows));
            Ok(())
        }
    }
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.10}"))
}

fn solve(args: &ModelArgs) -> Result<(), Failure> {
    let cfg = load(Vec::new(), args.config.as_ref(), args.flags())?;
    if cfg.sweep.is_some() || cfg.series.is_some() {
        return Err(Failure::Usage("solve takes a single point; use `tq sweep` for grids".into()));
    }
    let rows = run_sweep(&cfg);
    if cfg.out.is_some() {
        emit(&cfg, &rows)?;
    }
    println!(
        "{:<10} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}",
        "method", "gamma", "mql1", "mql2", "blocking", "throughput", "loss"
    );
    for r in &rows {
        println!(
            "{:<10} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}",
            r.method,
            show(r.gamma),
            show(r.mql1),
            show(r.mql2),
            show(r.blocking_prob),
            show(r.throughput),
            show(r.loss_rate)
        );
    }
    let failures: Vec<String> = rows
        .iter()
        .filter_map(|r| match (&r.error, r.stable) {
            (Some(e), _) => Some(format!("{}: {e}", r.method)),
            (None, false) => Some(format!("{}: parameters are unstable", r.method)),
            _ => None,
        })
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(failures.join("\n")))
    }
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let pre = match &args.preset {
        Some(name) => preset(name).ok_or_else(|| {
            Failure::Usage(format!("unknown preset `{name}` (expected one of {})", config::PRESETS.join(", ")))
        })?,
        None => Vec::new(),
    };
    let mut flags = args.model.flags();
    let mut push = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            flags.push(Entry::flag(k, v));
        }
    };
    push("sweep-param", args.sweep_param.clone());
    push("from", args.from.map(|x| x.to_string()));
    push("to", args.to.map(|x| x.to_string()));
    push("steps", args.steps.map(|x| x.to_string()));
    push("series-param", args.series_param.clone());
    push("series-values", args.series_values.clone());
    let cfg = load(pre, args.model.config.as_ref(), flags)?;
    if cfg.sweep.is_none() {
        return Err(Failure::Usage("sweep needs `sweep_param`, `from`, `to` and `steps` or a preset".into()));
    }
    let rows = run_sweep(&cfg);
    emit(&cfg, &rows)
}

fn simulate(args: &ModelArgs) -> Result<(), Failure> {
    let cfg = load(Vec::new(), args.config.as_ref(), args.flags())?;
    if cfg.sweep.is_some() || cfg.series.is_some() {
        return Err(Failure::Usage("simulate takes a single point".into()));
    }
    let m = &cfg.model;
    let point = tq::Point {
        sigma: m.sigma.expect("sigma is required without a sweep"),
        mu1: m.mu1,
        mu2: m.mu2,
        p_fb: m.p_fb,
        n_threshold: m.n_threshold,
        k_capacity: m.k_capacity,
    };
    let p = point.params().map_err(Failure::Usage)?;
    let est = run_sim(&p, &cfg.sim).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("events {}  simulated time {:.3}", est.events, est.elapsed);
    let line = |name: &str, e: &tandem_core::sim::Estimate| println!("{name:<14} {:.8} +- {:.8}", e.mean, e.half_width);
    line("mql1", &est.mql1);
    line("mql2", &est.mql2);
    line("blocking_prob", &est.blocking_prob);
    line("throughput", &est.throughput);
    if let Some(l) = &est.loss_rate {
        line("loss_rate", l);
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<(), Failure> {
    let y: Metric = args.y.parse().map_err(Failure::Usage)?;
    let rows = read_csv(&args.input).map_err(|e| Failure::Usage(e.to_string()))?;
    let spec = PlotSpec { y, title: args.title.clone(), ..PlotSpec::default() };
    let svg = render_plot(&rows, &spec).map_err(|e| Failure::Usage(e.to_string()))?;
    std::fs::write(&args.out, svg).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", args.out.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Simulate(a) => simulate(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}
