use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ucpqkd::harness::{emit, load_scenario, run, run_sweep, EmitOptions, RunOptions, SweepSpec, SweepTable};
use ucpqkd::Error;

const DEFAULT_OUT_DIR: &str = "ucpqkd-out";

#[derive(Parser, Debug)]
#[command(name = "ucpqkd", version, about = "Monte-Carlo simulator of an upconversion-protected time-bin QKD receiver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario and write report.json plus CSVs.
    Simulate(SimulateArgs),
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Default output directory when neither --out nor output.dir is set.
    #[arg(long = "default-out", env = "UCPQKD_OUT_DIR", hide = true)]
    env_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cycles: Option<u64>,
    /// Parameter scan, e.g. `attack.peak_power_w=1e-5:1e-3:5`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long)]
    emit_lwi_chart: bool,
    #[arg(long)]
    emit_cycles: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn simulate(args: SimulateArgs) -> Result<bool, Error> {
    let mut cfg = load_scenario(&args.scenario)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.cycles {
        cfg.n_cycles = n;
    }
    let sweep: Option<SweepSpec> = args.sweep.as_deref().map(str::parse).transpose()?;
    let emit_cycles = args.emit_cycles || cfg.output.emit_cycles;
    let opts = RunOptions {
        workers: args.workers,
        keep_records: emit_cycles,
    };
    let dir = args
        .out
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .or(args.env_out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));

    let mut out = run(&cfg, &opts)?;
    if let Some(scan) = &sweep {
        let rows = run_sweep(&cfg, scan, &opts)?;
        out.report.sweep = Some(SweepTable {
            key: scan.key.clone(),
            rows,
        });
    }
    let emitted = emit(
        &out,
        &cfg,
        &dir,
        EmitOptions {
            lwi_chart: args.emit_lwi_chart || cfg.output.emit_lwi_chart,
            cycles: emit_cycles,
            timing: true,
        },
    )?;

    let r = &out.report;
    println!(
        "cycles {}/{}{}  sifted {} ({:.4e} bps)  qber {}  alarms {}",
        r.n_cycles_run,
        r.n_cycles_requested,
        if r.partial { " (partial)" } else { "" },
        r.sifted_bits,
        r.sifted_rate_bps,
        r.qber.map_or("n/a".to_string(), |q| format!("{q:.5}")),
        r.total_alarms(),
    );
    for f in &emitted.files {
        println!("wrote {}", f.display());
    }
    eprintln!(
        "wall clock {:.3} s, {:.3e} cycles/s, {} workers",
        out.timing.wall_clock_s, out.timing.cycles_per_s, out.timing.workers
    );
    let sweep_alarms = r
        .sweep
        .as_ref()
        .is_some_and(|s| s.rows.iter().any(|row| row.alarm_prob > 0.0));
    Ok(r.total_alarms() > 0 || sweep_alarms)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
