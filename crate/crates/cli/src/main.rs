use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use manikin::sim::{replay, run_scenario, CommandLog, Summary, TraceWriter, World};
use manikin::verify;
use manikin_cli::{load_scenario, spawn_server, ServeOptions};

#[derive(Parser)]
#[command(name = "manikin", version, about = "Passive manikin simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario offline and print its summary.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Write the CSV trace here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a scenario field, e.g. `--set dt=0.005` or `--set tasks.0.stiffness=200`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Serve a live session over a websocket.
    Serve {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Address to listen on.
        #[arg(long, default_value = "127.0.0.1:8765")]
        addr: String,
        /// Override a scenario field.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Write the session's command log here on Ctrl-C.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Replay a recorded command log headless and write the trace.
    Replay {
        /// Scenario the log was recorded against.
        scenario: String,
        /// Command log written by `serve --log`.
        log: PathBuf,
        /// Write the CSV trace here.
        #[arg(long)]
        out: PathBuf,
        /// Override a scenario field, as when serving.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run the acceptance suite on the bundled scenarios.
    Verify,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<ExitCode> {
    match cmd {
        Cmd::Run {
            scenario,
            out,
            set,
            json,
        } => {
            let s = load_scenario(&scenario, &set)?;
            let summary = match out {
                Some(path) => {
                    let file = File::create(&path)
                        .with_context(|| format!("creating {}", path.display()))?;
                    let layout = World::new(&s)?.layout().clone();
                    let mut w =
                        TraceWriter::new(BufWriter::new(file), &layout, &s.file.name, &s.hash)?;
                    let summary = run_scenario(&s, Some(&mut w))?;
                    w.finish()?;
                    summary
                }
                None => run_scenario::<std::io::Sink>(&s, None)?,
            };
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print_summary(&summary);
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve {
            scenario,
            addr,
            set,
            speed,
            log,
        } => {
            let s = load_scenario(&scenario, &set)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let handle = spawn_server(
                    s,
                    &addr,
                    ServeOptions {
                        speed,
                        ..ServeOptions::default()
                    },
                )
                .await?;
                eprintln!("serving on ws://{}", handle.addr);
                tokio::signal::ctrl_c().await?;
                let session_log = handle.shutdown().await?;
                if let Some(path) = log {
                    std::fs::write(&path, serde_json::to_string_pretty(&session_log)?)
                        .with_context(|| format!("writing {}", path.display()))?;
                    eprintln!("command log written to {}", path.display());
                }
                Ok::<_, anyhow::Error>(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay {
            scenario,
            log,
            out,
            set,
        } => {
            let s = load_scenario(&scenario, &set)?;
            let text = std::fs::read_to_string(&log)
                .with_context(|| format!("reading {}", log.display()))?;
            let log: CommandLog = serde_json::from_str(&text).context("parsing the command log")?;
            let rows = replay(&s, &log)?;
            let layout = World::new(&s)?.layout().clone();
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut w = TraceWriter::new(BufWriter::new(file), &layout, &s.file.name, &s.hash)?;
            for row in &rows {
                w.write(row)?;
            }
            w.finish()?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Verify => {
            let reports = verify::run_all();
            for r in &reports {
                println!("{r}");
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            println!(
                "{} of {} criteria passed",
                reports.len() - failed,
                reports.len()
            );
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn print_summary(s: &Summary) {
    println!("scenario        {} ({})", s.scenario, &s.hash[..12]);
    println!("steps           {} (t = {:.3} s)", s.steps, s.final_time);
    println!("max penetration {:.3e} m", s.max_penetration);
    for a in &s.axes {
        println!(
            "axis {:<10} max {:.4} rad, rms {:.4} rad, settled max {:.4} rad",
            a.name, a.max, a.rms, a.max_settled
        );
    }
    println!(
        "min total energy {:.6} J (beta^2 = {:.6} J)",
        s.min_total_energy, s.beta_sq
    );
    match s.violated_at {
        Some(t) => println!("passivity       violated at t = {t:.3} s"),
        None => println!("passivity       passive so far"),
    }
    println!(
        "wall clock      {:.3} s ({:.1} us/step)",
        s.wall_seconds, s.mean_step_micros
    );
}
