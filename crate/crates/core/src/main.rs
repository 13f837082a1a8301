use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cognitive_uav::config::{load_config, Config};
use cognitive_uav::experiment::{run_to_dir, sweep, Axis, Scheme, Starts, SWEEP_FILE};
use cognitive_uav::report::Status;
use cognitive_uav::units::watt_to_dbm;

/// Trajectory and power design for a cognitive UAV link.
#[derive(Parser)]
#[command(name = "cuav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scheme and write trace.csv, summary.json and convergence.csv.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "joint")]
        scheme: Scheme,
    },
    /// Run all four schemes over a list of T, Gamma or P values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "T")]
        axis: Axis,
        /// Comma-separated. Gamma and P accept W, mW or dBm.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Concurrent sweep points (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Check a config file and print the resolved scenario.
    Validate {
        #[arg(long, default_value = "paper_iv")]
        config: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `paper_iv` for the bundled one.
    #[arg(long, default_value = "paper_iv")]
    config: PathBuf,
    #[arg(long, env = "UAVCOG_OUT_DIR", default_value = "out")]
    out: PathBuf,
    /// Seed for the perturbed joint starts.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Joint-scheme starts; the first is always the straight line.
    #[arg(long, default_value_t = 1)]
    starts: usize,
    #[arg(long)]
    tol_outer: Option<f64>,
    #[arg(long)]
    tol_sca: Option<f64>,
    #[arg(long)]
    tol_dual: Option<f64>,
    #[arg(long)]
    tol_feasibility: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let mut cfg = load_config(&self.config)?;
        let o = &mut cfg.options;
        if let Some(v) = self.tol_outer {
            o.outer_tol = v;
        }
        if let Some(v) = self.tol_sca {
            o.sca_tol = v;
        }
        if let Some(v) = self.tol_dual {
            o.dual_tol = v;
        }
        if let Some(v) = self.tol_feasibility {
            o.feasibility_tol = v;
        }
        o.validate()?;
        Ok(cfg)
    }

    fn starts(&self) -> Starts {
        Starts { count: self.starts.max(1), seed: self.seed }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { common, scheme } => {
            let cfg = common.load()?;
            let summary = run_to_dir(&common.out, scheme, &cfg.scenario, &cfg.options, common.starts())?;
            match (summary.status, summary.avg_rate_bpshz) {
                (Status::Ok, Some(rate)) => {
                    println!("{scheme}: {rate} bps/Hz -> {}", common.out.display());
                    Ok(ExitCode::SUCCESS)
                }
                _ => {
                    let why = summary.error.as_deref().unwrap_or("solution violates a constraint");
                    eprintln!("{scheme} failed: {why} (see {})", common.out.display());
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Command::Sweep { common, axis, values, workers } => {
            let cfg = common.load()?;
            let values = values
                .iter()
                .map(|v| axis.parse_value(v))
                .collect::<Result<Vec<f64>>>()?;
            let rows = sweep(
                &common.out,
                axis,
                &values,
                &cfg.scenario,
                cfg.explicit_slots,
                &cfg.options,
                common.starts(),
                workers,
            )
            .context("sweep")?;
            for r in &rows {
                let rate = r.summary.avg_rate_bpshz.map_or("-".to_string(), |x| format!("{x:.6}"));
                println!("{}={:<10} {:<15} {rate}", axis.as_str(), r.value, r.scheme.as_str());
            }
            let failed = rows.iter().filter(|r| r.summary.status != Status::Ok).count();
            if failed > 0 {
                eprintln!("{failed} of {} points did not produce a feasible solution", rows.len());
            }
            println!("table: {}", common.out.join(SWEEP_FILE).display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let s = &cfg.scenario;
            println!("scenario {}", s.fingerprint());
            println!("  slots      {} x {} s", s.num_slots, s.slot_duration());
            println!("  altitude   {} m, speed {} m/s", s.altitude, s.max_speed);
            println!("  power      {} W ({:.2} dBm)", s.avg_power_limit, watt_to_dbm(s.avg_power_limit));
            println!("  SR         ({}, {})", s.sr_pos.x, s.sr_pos.y);
            for (k, (p, g)) in s.pr_positions.iter().zip(&s.it_limits).enumerate() {
                println!("  PR{}        ({}, {}), cap {g} W ({:.2} dBm)", k + 1, p.x, p.y, watt_to_dbm(*g));
            }
            println!("  path       ({}, {}) -> ({}, {})", s.q_init.x, s.q_init.y, s.q_final.x, s.q_final.y);
            Ok(ExitCode::SUCCESS)
        }
    }
}
