//! Closed-loop simulation, trace files, specification monitors and the
//! behavioural replay against the abstract model.

use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use symctl_core::abstraction::SymbolicModel;
use symctl_core::detector::{kappa_input, pending_observation, DetectorRuntime};
use symctl_core::dynamics::integrate_rk4;
use symctl_core::knowledge::{GameController, KnowledgeGame};
use symctl_core::observer::{observer_init, observer_step, LinearPlant, ObserverSpec};
use symctl_core::synthesis::ControllerRun;
use symctl_core::Error;

use crate::config::{CaseStudyConfig, Method, SpecKind};
use crate::error::{CliError, CliResult};
use crate::pipeline::{builtin, check_model_matches, initial_knowledge, linear_plant, observer_spec, LoadedController};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Prefix,
    Kappa,
    Active,
    Refused,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Prefix => "prefix",
            Mode::Kappa => "kappa",
            Mode::Active => "active",
            Mode::Refused => "refused",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "prefix" => Some(Mode::Prefix),
            "kappa" => Some(Mode::Kappa),
            "active" => Some(Mode::Active),
            "refused" => Some(Mode::Refused),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub time: f64,
    pub x: Vec<f64>,
    pub y: f64,
    /// `None` when the output left the quantizer domain.
    pub yq: Option<u32>,
    /// Knowledge-set size, or the state estimate joined by `;`.
    pub aux: String,
    /// `None` on the diagnostic record of a refusal.
    pub u: Option<Vec<f64>>,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: Vec<TraceRecord>,
    pub refusal: Option<String>,
}

enum Stack<'a> {
    Direct(ControllerRun<'a>),
    Knowledge(GameController<'a>),
    Observer {
        spec: ObserverSpec,
        plant: LinearPlant,
        run: ControllerRun<'a>,
        xhat0: DVector<f64>,
        xhat: Option<DVector<f64>>,
        blind: u32,
        last: Option<u32>,
    },
    Detector {
        runtime: DetectorRuntime,
        run: ControllerRun<'a>,
        prefix: &'a [u32],
        used: usize,
        last: Option<u32>,
    },
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| sig12(*x)).collect::<Vec<_>>().join(";")
}

impl<'a> Stack<'a> {
    fn step(&mut self, model: &'a SymbolicModel, y: f64, yq: u32) -> symctl_core::Result<(u32, String, Mode)> {
        let sys = &model.system;
        match self {
            Stack::Direct(run) => Ok((run.step(yq)?, String::new(), Mode::Active)),
            Stack::Knowledge(gc) => {
                let u = gc.step(yq)?;
                let size = gc.knowledge().map_or(0, |k| k.count_ones(..));
                Ok((u, size.to_string(), Mode::Active))
            }
            Stack::Observer { spec, plant, run, xhat0, xhat, blind, last } => {
                let (est, first) = match (xhat.as_ref(), *last) {
                    (Some(prev), Some(u)) => {
                        let uv = DVector::from_vec(model.input_value(u));
                        (observer_step(spec, plant, prev, &uv, y), false)
                    }
                    _ => (observer_init(spec, plant, xhat0, y), true),
                };
                let aux = join(est.as_slice());
                let u = if first {
                    *blind
                } else {
                    let cell = model
                        .state_grid
                        .quantize(est.as_slice())
                        .map_err(|_| Error::Refusal("state estimate left the state grid".into()))?;
                    run.step(cell as u32)?
                };
                *xhat = Some(est);
                *last = Some(u);
                Ok((u, aux, if first { Mode::Prefix } else { Mode::Active }))
            }
            Stack::Detector { runtime, run, prefix, used, last } => {
                let obs = runtime.step(sys, *last, yq)?.unwrap_or_else(|| pending_observation(sys));
                let size = runtime.knowledge.as_ref().map_or(0, |k| k.count_ones(..)).to_string();
                let mut u = run.step(obs)?;
                let mut mode = Mode::Active;
                if u == kappa_input(sys) {
                    u = *prefix
                        .get(*used)
                        .ok_or_else(|| Error::Refusal("state still undetected after the prefix word".into()))?;
                    *used += 1;
                    mode = Mode::Prefix;
                }
                *last = Some(u);
                Ok((u, size, mode))
            }
        }
    }
}

/// Run the closed loop for `cfg.simulation.steps` records.
pub fn simulate(cfg: &CaseStudyConfig, loaded: &LoadedController) -> CliResult<SimOutcome> {
    let model = &loaded.model;
    check_model_matches(model, cfg)?;
    let plant_model = builtin(cfg)?;
    let dynamics = plant_model.dynamics();
    let method = loaded.meta.method.expect("validated meta");
    let mut stack = match method {
        Method::Direct => Stack::Direct(ControllerRun::new(&loaded.controller)),
        Method::Knowledge => {
            let game = loaded.game.as_ref().ok_or_else(|| CliError::Config { line: 0, msg: "missing knowledge game".into() })?;
            Stack::Knowledge(GameController::new(&loaded.controller, &model.system, game, initial_knowledge(loaded)))
        }
        Method::Observer => {
            let plant = linear_plant(cfg, &plant_model)?;
            let spec = observer_spec(cfg, &plant, Some(&loaded.meta.gain))?;
            let xhat0 = cfg
                .simulation
                .xhat0
                .clone()
                .ok_or_else(|| CliError::Config { line: 0, msg: "the observer method needs simulation.xhat0".into() })?;
            let blind = loaded
                .meta
                .blind_input
                .ok_or_else(|| CliError::Config { line: 0, msg: "controller meta lacks the blind input".into() })?;
            Stack::Observer {
                spec,
                plant,
                run: ControllerRun::new(&loaded.controller),
                xhat0: DVector::from_vec(xhat0),
                xhat: None,
                blind,
                last: None,
            }
        }
        Method::Detector => Stack::Detector {
            runtime: DetectorRuntime::new(),
            run: ControllerRun::new(&loaded.controller),
            prefix: &loaded.meta.prefix,
            used: 0,
            last: None,
        },
    };
    let tau = model.params.tau;
    let coord = model.output_relation.coordinate();
    let mut x = cfg.simulation.x0.clone();
    let mut trace = Vec::with_capacity(cfg.simulation.steps);
    for step in 0..cfg.simulation.steps {
        let y = x[coord];
        let time = step as f64 * tau;
        let yq = model.output_relation.z(y).ok();
        let res = match yq {
            None => Err(Error::Refusal(format!("output {y} outside the quantizer domain"))),
            Some(s) => stack.step(model, y, s),
        };
        match res {
            Ok((u, aux, mode)) => {
                let uv = model.input_value(u);
                trace.push(TraceRecord { step, time, x: x.clone(), y, yq, aux, u: Some(uv.clone()), mode });
                x = integrate_rk4(dynamics, &x, &uv, tau, model.params.substeps)?;
            }
            Err(e @ (Error::Refusal(_) | Error::Inconsistent(_))) => {
                let msg = e.to_string();
                trace.push(TraceRecord { step, time, x, y, yq, aux: msg.clone(), u: None, mode: Mode::Refused });
                return Ok(SimOutcome { trace, refusal: Some(msg) });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(SimOutcome { trace, refusal: None })
}

/// Shortest decimal that rounds to `v` at 12 significant digits.
pub fn sig12(v: f64) -> String {
    let r: f64 = format!("{v:.11e}").parse().expect("formatted float");
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

fn header(n: usize, m: usize) -> Vec<String> {
    let mut h = vec!["step".to_string(), "time".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend(["y", "yq", "aux"].map(String::from));
    if m == 1 {
        h.push("u".into());
    } else {
        h.extend((1..=m).map(|i| format!("u{i}")));
    }
    h.push("mode".into());
    h
}

pub fn write_trace<W: std::io::Write>(out: W, trace: &[TraceRecord], n: usize, m: usize) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n, m))?;
    for r in trace {
        let mut row = vec![r.step.to_string(), sig12(r.time)];
        row.extend(r.x.iter().map(|v| sig12(*v)));
        row.push(sig12(r.y));
        row.push(r.yq.map(|s| s.to_string()).unwrap_or_default());
        row.push(r.aux.clone());
        match &r.u {
            Some(u) => row.extend(u.iter().map(|v| sig12(*v))),
            None => row.extend(std::iter::repeat(String::new()).take(m)),
        }
        row.push(r.mode.name().to_string());
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn emit_csv(trace: &[TraceRecord], n: usize, m: usize, path: &Path) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    let mut buf = std::io::BufWriter::new(file);
    write_trace(&mut buf, trace, n, m)?;
    buf.flush().map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

pub fn read_trace<R: std::io::Read>(input: R) -> CliResult<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let h: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let n = h.iter().filter(|c| c.starts_with('x')).count();
    let m = h.len().checked_sub(n + 6).filter(|&m| m >= 1).ok_or(CliError::Trace { line: 1, msg: "too few columns".into() })?;
    if h != header(n, m) {
        return Err(CliError::Trace { line: 1, msg: format!("unexpected header {h:?}") });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: &str| CliError::Trace { line, msg: msg.to_string() };
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number `{s}`")));
        let step = rec[0].parse::<usize>().map_err(|_| bad("bad step"))?;
        let time = f(&rec[1])?;
        let x = (0..n).map(|k| f(&rec[2 + k])).collect::<CliResult<Vec<_>>>()?;
        let y = f(&rec[2 + n])?;
        let yq = match &rec[3 + n] {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| bad("bad symbol"))?),
        };
        let aux = rec[4 + n].to_string();
        let ucols: Vec<&str> = (0..m).map(|k| &rec[5 + n + k]).collect();
        let u = if ucols.iter().all(|s| s.is_empty()) {
            None
        } else {
            Some(ucols.iter().map(|s| f(s)).collect::<CliResult<Vec<_>>>()?)
        };
        let mode = Mode::parse(&rec[5 + n + m]).ok_or_else(|| bad("bad mode"))?;
        out.push(TraceRecord { step, time, x, y, yq, aux, u, mode });
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> CliResult<Vec<TraceRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    read_trace(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub pass: bool,
    /// First violating index; the trace length when a reach obligation is
    /// never met.
    pub violation: Option<usize>,
    /// Completed holds per target (recurrence only).
    pub holds: Vec<usize>,
}

fn in_any(y: f64, ivs: &[(f64, f64)]) -> bool {
    ivs.iter().any(|&(a, b)| a <= y && y <= b)
}

/// Check a finite output sequence against the concrete specification.
pub fn monitor_spec(ys: &[f64], cfg: &CaseStudyConfig) -> Verdict {
    let s = &cfg.spec;
    let t = &s.targets;
    let done = |violation: Option<usize>| Verdict { pass: violation.is_none(), violation, holds: vec![] };
    match s.kind {
        SpecKind::Safe => done(ys.iter().position(|&y| !in_any(y, t))),
        SpecKind::Reach => done(if ys.iter().any(|&y| in_any(y, t)) { None } else { Some(ys.len()) }),
        SpecKind::SafeBounded => {
            let (a, b) = s.horizon.expect("validated");
            done(ys.iter().enumerate().position(|(k, &y)| k >= a && k <= b && !in_any(y, t)))
        }
        SpecKind::ReachBounded => {
            let (a, b) = s.horizon.expect("validated");
            let hit = ys.iter().enumerate().any(|(k, &y)| k >= a && k <= b && in_any(y, t));
            done(if hit { None } else { Some(ys.len().min(b + 1)) })
        }
        SpecKind::RecurrenceHold => {
            let mut holds = vec![0usize; t.len()];
            let (mut i, mut c) = (0usize, 0usize);
            for &y in ys {
                let (a, b) = t[i];
                if a <= y && y <= b {
                    c += 1;
                    if c == s.hold {
                        holds[i] += 1;
                        i = (i + 1) % t.len();
                        c = 0;
                    }
                } else {
                    c = 0;
                }
            }
            let pass = !ys.is_empty() && holds.iter().all(|&h| h >= s.min_cycles);
            Verdict { pass, violation: (!pass).then_some(ys.len()), holds }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub steps: usize,
    /// Knowledge-set size after each step.
    pub knowledge: Vec<usize>,
}

fn replay_err(step: usize, msg: impl std::fmt::Display) -> CliError {
    Error::Inconsistent(format!("replay step {step}: {msg}")).into()
}

/// Replay a trace against the abstract closed loop: every abstract symbol
/// must be the quantized output, the (symbol, input) sequence must be
/// generated by some run of the abstract model, and every applied input must
/// be the one the controller stack picks from the abstract information
/// alone (the estimate cell for the observer stack).
pub fn replay(trace: &[TraceRecord], loaded: &LoadedController) -> CliResult<ReplayReport> {
    let model = &loaded.model;
    let sys = &model.system;
    let method = loaded.meta.method.expect("validated meta");
    let mut k: Option<symctl_core::StateSet> = None;
    let mut last_u: Option<u32> = None;
    let mut sizes = Vec::new();
    let mut run = ControllerRun::new(&loaded.controller);
    let mut runtime = DetectorRuntime::new();
    let mut prefix_used = 0;
    let mut game_ctrl = loaded
        .game
        .as_ref()
        .map(|g: &KnowledgeGame| GameController::new(&loaded.controller, sys, g, initial_knowledge(loaded)));
    for r in trace {
        let i = r.step;
        let yq = r.yq.ok_or_else(|| replay_err(i, "missing symbol"))?;
        // trace values carry 12 significant digits, so boundary points may
        // round onto the neighbouring cell
        let d = 1e-9 * r.y.abs().max(1.0);
        let z = |v: f64| model.output_relation.z(v).ok();
        if ![z(r.y), z(r.y - d), z(r.y + d)].contains(&Some(yq)) {
            return Err(replay_err(i, format!("symbol {yq} is not Z({})", r.y)));
        }
        let next = match (k.take(), last_u) {
            (None, _) => {
                let mut s = sys.full_set();
                sys.filter_output(&mut s, yq);
                s
            }
            (Some(prev), Some(u)) => {
                let mut s = sys.post_set(&prev, u);
                sys.filter_output(&mut s, yq);
                s
            }
            (Some(_), None) => unreachable!(),
        };
        if next.is_clear() {
            return Err(replay_err(i, format!("symbol {yq} cannot follow under the abstract model")));
        }
        sizes.push(next.count_ones(..));
        k = Some(next);
        if r.mode == Mode::Refused {
            break;
        }
        let uv = r.u.as_ref().ok_or_else(|| replay_err(i, "missing input"))?;
        let u = model
            .input_grid
            .quantize(uv)
            .map_err(|_| replay_err(i, "input outside the input grid"))? as u32;
        if model.input_value(u).iter().zip(uv).any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0)) {
            return Err(replay_err(i, "input is not a grid point"));
        }
        let expected = match method {
            Method::Direct => run.step(yq)?,
            Method::Knowledge => game_ctrl.as_mut().expect("knowledge game").step(yq)?,
            Method::Observer => {
                if i == 0 {
                    loaded.meta.blind_input.ok_or_else(|| replay_err(i, "no blind input"))?
                } else {
                    let est: Vec<f64> = r
                        .aux
                        .split(';')
                        .map(|s| s.parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| replay_err(i, "bad estimate"))?;
                    let cells = nearby_cells(&model.state_grid, &est);
                    if cells.is_empty() {
                        return Err(replay_err(i, "estimate off grid"));
                    }
                    // the first candidate cell whose decision matches
                    let mem = run.memory;
                    let hit = cells.iter().find(|&&c| loaded.controller.decide(mem, c) == Some(u)).copied();
                    run.step(hit.unwrap_or(cells[0]))?
                }
            }
            Method::Detector => {
                let obs = runtime.step(sys, last_u, yq)?.unwrap_or_else(|| pending_observation(sys));
                let d = run.step(obs)?;
                if d == kappa_input(sys) {
                    prefix_used += 1;
                    *loaded.meta.prefix.get(prefix_used - 1).ok_or_else(|| replay_err(i, "prefix exhausted"))?
                } else {
                    d
                }
            }
        };
        if expected != u {
            return Err(replay_err(i, format!("applied input {u}, the abstract loop picks {expected}")));
        }
        last_u = Some(u);
    }
    Ok(ReplayReport { steps: sizes.len(), knowledge: sizes })
}

/// Cells of all points within a rounding tolerance of `x`.
fn nearby_cells(grid: &symctl_core::grid::GridQuantizer, x: &[f64]) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    for code in 0..3usize.pow(x.len() as u32) {
        let mut c = code;
        let p: Vec<f64> = x
            .iter()
            .map(|v| {
                let shift = [0.0, 1.0, -1.0][c % 3];
                c /= 3;
                v + shift * 1e-9 * v.abs().max(1.0)
            })
            .collect();
        if let Ok(cell) = grid.quantize(&p) {
            if !out.contains(&(cell as u32)) {
                out.push(cell as u32);
            }
        }
    }
    out
}
