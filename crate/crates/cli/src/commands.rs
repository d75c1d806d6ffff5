//! Subcommand implementations behind the `symctl` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use symctl_core::detector::build_detector_nfa;

use crate::config::{load_config, Method};
use crate::error::{CliError, CliResult};
use crate::pipeline::{abstract_model, read_controller, read_model, synthesize, write_controller, write_model};
use crate::simulate::{emit_csv, load_trace, monitor_spec, replay, simulate};

#[derive(Debug, Parser)]
#[command(name = "symctl", about = "Symbolic output-feedback controller synthesis for sampled systems", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the symbolic model of a case study.
    Abstract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize a controller stack on a symbolic model.
    Synthesize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// direct, knowledge, observer or detector; defaults to `synthesis.method`.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the detector automaton and report detectability.
    DetectCheck {
        #[arg(long)]
        model: PathBuf,
        /// Also write the automaton and its analysis here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate the closed loop and write a CSV trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        controller: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a trace against the configured specification.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Replay the trace against this controller and its model as well.
        #[arg(long)]
        controller: Option<PathBuf>,
    },
}

/// Run a command, printing a summary to stdout. Returns the exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Abstract { config, out } => {
            let cfg = load_config(&config)?;
            let t = Instant::now();
            let model = abstract_model(&cfg)?;
            write_model(&model, &out)?;
            let s = model.stats();
            println!("states {}", s.states);
            println!("inputs {}", s.inputs);
            println!("outputs {}", s.outputs);
            println!("transitions {}", s.transitions);
            println!("seconds {:.3}", t.elapsed().as_secs_f64());
            Ok(0)
        }
        Command::Synthesize { model, config, method, out } => {
            let cfg = load_config(&config)?;
            let method = match method.as_deref() {
                Some(m) => Method::parse(m).ok_or_else(|| CliError::Config { line: 0, msg: format!("unknown method `{m}`") })?,
                None => cfg.method.ok_or_else(|| CliError::Config {
                    line: 0,
                    msg: "no method given on the command line or in synthesis.method".into(),
                })?,
            };
            let m = read_model(&model)?;
            let abs = std::fs::canonicalize(&model).unwrap_or(model);
            let s = synthesize(&m, &cfg, method, &abs)?;
            write_controller(&s, &out)?;
            print!("{}", s.meta.to_text());
            Ok(0)
        }
        Command::DetectCheck { model, out } => {
            let m = read_model(&model)?;
            let nfa = build_detector_nfa(&m.system);
            let r = nfa.analyze();
            println!("states {}", r.states);
            println!("transitions {}", r.transitions);
            println!("limit {}", r.limit.count_ones(..));
            println!("detectable {}", r.detectable);
            println!("tt {}", r.transient_period);
            if let Some((q, lasso)) = &r.witness {
                println!("witness {q} stem {:?} cycle {:?} tail {:?}", lasso.stem, lasso.cycle, lasso.tail);
            }
            if let Some(path) = out {
                std::fs::write(&path, nfa.to_text(&r)).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
            }
            Ok(if r.detectable { 0 } else { 2 })
        }
        Command::Simulate { config, controller, out } => {
            let cfg = load_config(&config)?;
            let loaded = read_controller(&controller)?;
            let outcome = simulate(&cfg, &loaded)?;
            emit_csv(&outcome.trace, loaded.model.state_grid.dim(), loaded.model.input_grid.dim(), &out)?;
            println!("records {}", outcome.trace.len());
            match outcome.refusal {
                Some(msg) => {
                    eprintln!("refused: {msg}");
                    Ok(4)
                }
                None => Ok(0),
            }
        }
        Command::Check { trace, config, controller } => check(&trace, &config, controller.as_deref()),
    }
}

fn check(trace: &Path, config: &Path, controller: Option<&Path>) -> CliResult<i32> {
    let cfg = load_config(config)?;
    let records = load_trace(trace)?;
    if records.is_empty() {
        return Err(CliError::Trace { line: 2, msg: "trace has no records".into() });
    }
    let ys: Vec<f64> = records.iter().map(|r| r.y).collect();
    let v = monitor_spec(&ys, &cfg);
    println!("verdict {}", if v.pass { "pass" } else { "fail" });
    if let Some(i) = v.violation {
        println!("violation {i}");
    }
    if !v.holds.is_empty() {
        let h: Vec<String> = v.holds.iter().map(|h| h.to_string()).collect();
        println!("holds {}", h.join(" "));
    }
    let mut ok = v.pass;
    if let Some(c) = controller {
        let loaded = read_controller(c)?;
        match replay(&records, &loaded) {
            Ok(r) => println!("replay pass {}", r.steps),
            Err(e) => {
                println!("replay fail {e}");
                ok = false;
            }
        }
    }
    Ok(if ok { 0 } else { 1 })
}
