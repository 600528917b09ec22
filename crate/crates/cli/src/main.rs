mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rmssd::recmodel::Model;
use rmssd::ev_engine::Device;
use rmssd::sim::{compare, resolve_kernels, run, traces_csv, Comparison, KernelChoice, Metrics, Scenario};
use rmssd::Error;

use config::ScenarioConfig;

/// In-storage recommendation inference simulator and kernel-size explorer.
#[derive(Debug, Parser)]
#[command(name = "rmssd", version, arg_required_else_help = true)]
struct Cli {
    /// Print the full default configuration document and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Clone, clap::Args)]
struct Output {
    /// Directory for report files (created if missing).
    #[arg(long, default_value = "rmssd-out")]
    out: PathBuf,
    /// Standard-output format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Print nothing on standard output.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one scenario; writes metrics.json and traces.csv.
    Run {
        config: PathBuf,
        /// Workload seed (overrides scenario.seed).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Run the kernel search only and print the outcome as JSON.
    Search { config: PathBuf },
    /// Simulate several scenarios and report ratios against the first.
    Compare {
        #[arg(num_args = 2.., required = true)]
        configs: Vec<PathBuf>,
        /// Workload seed for every scenario (overrides scenario.seed).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
    /// Check a configuration without simulating.
    Validate { config: PathBuf },
}

/// A failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Infeasible { .. } => 3,
            Error::Config(_)
            | Error::InvalidParam(_)
            | Error::Kernel { .. }
            | Error::Shape { .. }
            | Error::Extent(_)
            | Error::IndexOutOfRange { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn internal(context: &str, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{context}: {e}"),
    }
}

fn load(path: &Path) -> Result<(ScenarioConfig, Scenario), Failure> {
    let cfg = ScenarioConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = cfg.scenario(base)?;
    Ok((cfg, scenario))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| internal(&dir.display().to_string(), e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| internal(&path.display().to_string(), e))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

const METRICS_CSV_HEADER: &str =
    "scenario,mode,model,seed,completed,throughput_qps,p50_ns,p95_ns,p99_ns,max_ns,mean_ns,flash_page_reads,miss_rate,events";

fn metrics_csv_row(m: &Metrics) -> String {
    let l = &m.latency;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        m.scenario,
        m.mode,
        m.model,
        m.seed,
        m.completed,
        m.throughput_qps,
        l.p50_ns,
        l.p95_ns,
        l.p99_ns,
        l.max_ns,
        l.mean_ns,
        m.flash_page_reads,
        m.miss_rate.map(|r| r.to_string()).unwrap_or_default(),
        m.events
    )
}

fn metrics_text(m: &Metrics) -> String {
    let l = &m.latency;
    let mut s = format!(
        "{} [{}] model {} seed {}\n  completed {}/{} ({} in flight) in {:.3} ms\n  throughput {:.1} q/s\n  latency us: p50 {:.2}  p95 {:.2}  p99 {:.2}  max {:.2}\n",
        m.scenario,
        m.mode,
        m.model,
        m.seed,
        m.completed,
        m.queries,
        m.in_flight,
        m.horizon_ns / 1e6,
        m.throughput_qps,
        l.p50_ns / 1e3,
        l.p95_ns / 1e3,
        l.p99_ns / 1e3,
        l.max_ns / 1e3
    );
    if let Some(r) = m.miss_rate {
        s += &format!("  dram miss rate {:.4}, flash page reads {}\n", r, m.flash_page_reads);
    }
    if let Some(res) = &m.resources {
        s += &format!("  batch {}, dsp {:.0}, lut {:.0}\n", m.batch, res.dsp, res.lut);
    }
    s += &format!(
        "  functional: {} checked, {} mismatches, max rel err {:.2e}\n",
        m.functional.checked, m.functional.mismatches, m.functional.max_rel_err
    );
    s
}

fn cmd_run(path: &Path, seed: Option<u64>, out: &Output) -> Result<(), Failure> {
    let (cfg, scenario) = load(path)?;
    let r = run(&scenario, seed.unwrap_or(cfg.scenario.seed))?;
    write(&out.out, "metrics.json", &json(&r.metrics))?;
    write(&out.out, "traces.csv", &traces_csv(&r.traces))?;
    if !out.quiet {
        match out.format {
            Format::Json => print!("{}", json(&r.metrics)),
            Format::Csv => println!("{METRICS_CSV_HEADER}\n{}", metrics_csv_row(&r.metrics)),
            Format::Text => print!("{}", metrics_text(&r.metrics)),
        }
    }
    Ok(())
}

fn cmd_search(path: &Path) -> Result<(), Failure> {
    let (_, s) = load(path)?;
    let model = Model::random(s.model.clone(), s.weight_seed);
    let device = Device::provision(&model, s.geometry, s.placement)?;
    let auto = Scenario {
        kernels: KernelChoice::Auto,
        ..s
    };
    let (_, _, outcome) = resolve_kernels(&auto, &model, &device)?;
    print!("{}", json(&outcome.expect("auto kernels run the search")));
    Ok(())
}

fn comparison_csv(c: &Comparison) -> String {
    let mut s = String::from("scenario,mode,throughput_qps,p50_ns,p99_ns,throughput_ratio,p50_ratio,p99_ratio,p99_reduction_pct\n");
    for r in &c.rows {
        s += &format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.scenario, r.mode, r.throughput_qps, r.p50_ns, r.p99_ns, r.throughput_ratio, r.p50_ratio, r.p99_ratio, r.p99_reduction_pct
        );
    }
    s
}

fn cmd_compare(paths: &[PathBuf], seed: Option<u64>, out: &Output) -> Result<(), Failure> {
    let loaded = paths.iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let results: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = loaded
            .iter()
            .map(|(cfg, s)| scope.spawn(move || run(s, seed.unwrap_or(cfg.scenario.seed))))
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread")).collect()
    });
    let metrics = results
        .into_iter()
        .map(|r| r.map(|o| o.metrics))
        .collect::<Result<Vec<_>, _>>()?;
    let c = compare(&metrics)?;
    write(&out.out, "comparison.json", &json(&c))?;
    write(&out.out, "comparison.txt", &c.to_text())?;
    if !out.quiet {
        match out.format {
            Format::Json => print!("{}", json(&c)),
            Format::Csv => print!("{}", comparison_csv(&c)),
            Format::Text => print!("{}", c.to_text()),
        }
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), Failure> {
    let (_, s) = load(path)?;
    println!("ok: {}", s.name);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.print_defaults {
        print!("{}", ScenarioConfig::defaults_toml());
        return ExitCode::SUCCESS;
    }
    let result = match &cli.command {
        None => {
            eprintln!("no command given; see --help");
            return ExitCode::from(2);
        }
        Some(Command::Run { config, seed, output }) => cmd_run(config, *seed, output),
        Some(Command::Search { config }) => cmd_search(config),
        Some(Command::Compare { configs, seed, output }) => cmd_compare(configs, *seed, output),
        Some(Command::Validate { config }) => cmd_validate(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rmssd: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
