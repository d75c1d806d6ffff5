//! Config-driven abstraction and synthesis, and the on-disk artifacts.
//!
//! A model `M` is the transition system text plus `M.meta` (grid sidecar).
//! A controller `C` is the controller text plus `C.meta`; the knowledge
//! method also writes the game as `C.kgame` (knowledge sets) and
//! `C.kgame.sys` (game transition system).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use symctl_core::abstraction::{build_symbolic_model, ModelTag, SymbolicModel};
use symctl_core::detector::{build_detector_nfa, search_prefix, wrap_controller_cm, DetectorReport, PrefixMode};
use symctl_core::grid::{build_input_grid, build_state_grid, GridQuantizer, Rect};
use symctl_core::knowledge::{solve_knowledge_from, KnowledgeGame};
use symctl_core::observer::{blind_period_plan, default_poles, design_luenberger, monte_carlo_error, LinearPlant, ObserverSpec};
use symctl_core::output::{build_output_relation, OutputRelation};
use symctl_core::synthesis::{solve, Controller, Spec};
use symctl_core::system::set_from;
use symctl_core::{Error, FiniteSystem};

use crate::config::{CaseStudyConfig, Method, SpecKind};
use crate::error::{CliError, CliResult};
use crate::registry::{instantiate, BuiltinModel};

pub const MC_RUNS: usize = 1000;
pub const MC_STEPS: usize = 100;

pub fn state_grid(cfg: &CaseStudyConfig) -> CliResult<GridQuantizer> {
    Ok(build_state_grid(&cfg.state_lower, &cfg.state_upper, &cfg.state_eta, cfg.convention)?)
}

pub fn output_relation(cfg: &CaseStudyConfig, sg: &GridQuantizer) -> CliResult<OutputRelation> {
    let o = &cfg.output;
    let og = build_state_grid(&[o.lower], &[o.upper], &[o.eta], o.convention)?;
    Ok(build_output_relation(sg, &og, o.coordinate)?)
}

pub fn builtin(cfg: &CaseStudyConfig) -> CliResult<BuiltinModel> {
    instantiate(&cfg.model_id, &cfg.model_params)
}

pub fn abstract_model(cfg: &CaseStudyConfig) -> CliResult<SymbolicModel> {
    let model = builtin(cfg)?;
    let sg = state_grid(cfg)?;
    let ig = build_input_grid(&cfg.input_lower, &cfg.input_upper, &cfg.input_eta)?;
    let rel = output_relation(cfg, &sg)?;
    let tag = ModelTag { id: model.id.clone(), params: model.params.clone() };
    Ok(build_symbolic_model(model.dynamics(), &sg, &ig, &rel, cfg.abstraction, tag)?)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })
}

pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_model(model: &SymbolicModel, path: &Path) -> CliResult<()> {
    write(path, &model.system.to_text())?;
    write(&with_suffix(path, ".meta"), &model.sidecar_text())
}

pub fn read_model(path: &Path) -> CliResult<SymbolicModel> {
    let artifact = |source| CliError::Artifact { path: path.display().to_string(), source };
    let system = FiniteSystem::from_text(&read(path)?).map_err(artifact)?;
    let meta_path = with_suffix(path, ".meta");
    SymbolicModel::from_parts(system, &read(&meta_path)?)
        .map_err(|source| CliError::Artifact { path: meta_path.display().to_string(), source })
}

/// The model must have been abstracted from this configuration.
pub fn check_model_matches(model: &SymbolicModel, cfg: &CaseStudyConfig) -> CliResult<()> {
    let fresh_sg = state_grid(cfg)?;
    let ig = build_input_grid(&cfg.input_lower, &cfg.input_upper, &cfg.input_eta)?;
    let rel = output_relation(cfg, &fresh_sg)?;
    let m = builtin(cfg)?;
    let same = model.tag.id == m.id
        && model.tag.params == m.params
        && model.state_grid == fresh_sg
        && model.input_grid == ig
        && model.output_relation.state_map() == rel.state_map()
        && model.params.tau == cfg.abstraction.tau
        && model.params.epsilon == cfg.abstraction.epsilon;
    if same {
        Ok(())
    } else {
        Err(CliError::Config { line: 0, msg: "model file was not abstracted from this configuration".into() })
    }
}

/// Snap the concrete spec intervals onto output symbols.
pub fn symbolic_spec(cfg: &CaseStudyConfig, rel: &OutputRelation) -> CliResult<Spec> {
    let s = &cfg.spec;
    let snapped = s
        .targets
        .iter()
        .map(|&(lo, hi)| rel.snap_interval(lo, hi, s.snap))
        .collect::<symctl_core::Result<Vec<_>>>()?;
    let union = || {
        let mut u: Vec<u32> = snapped.iter().flatten().copied().collect();
        u.sort_unstable();
        u.dedup();
        u
    };
    Ok(match s.kind {
        SpecKind::Safe => Spec::Safe(union()),
        SpecKind::Reach => Spec::Reach(union()),
        SpecKind::SafeBounded => {
            let (a, b) = s.horizon.expect("validated");
            Spec::SafeBounded { set: union(), a, b }
        }
        SpecKind::ReachBounded => {
            let (a, b) = s.horizon.expect("validated");
            Spec::ReachBounded { set: union(), a, b }
        }
        SpecKind::RecurrenceHold => Spec::RecurrenceHold { targets: snapped, hold: s.hold },
    })
}

/// Measured plant of a linear builtin model, with C selecting the output
/// coordinate.
pub fn linear_plant(cfg: &CaseStudyConfig, model: &BuiltinModel) -> CliResult<LinearPlant> {
    let (a, b) = model.linear().ok_or_else(|| CliError::Config {
        line: 0,
        msg: format!("the observer method needs a linear model, `{}` is not", model.id),
    })?;
    let n = a.nrows();
    let mut c = DMatrix::zeros(1, n);
    c[(0, cfg.output.coordinate)] = 1.0;
    Ok(LinearPlant::new(a.clone(), b.clone(), c, cfg.abstraction.tau)?)
}

pub fn observer_spec(cfg: &CaseStudyConfig, plant: &LinearPlant, meta_gain: Option<&[f64]>) -> CliResult<ObserverSpec> {
    let eps = cfg.observer_epsilon.unwrap_or(cfg.abstraction.epsilon);
    if eps != cfg.abstraction.epsilon {
        return Err(CliError::Config {
            line: 0,
            msg: format!("observer.epsilon {eps} differs from abstraction.epsilon {}", cfg.abstraction.epsilon),
        });
    }
    let poles = cfg.observer_poles.clone().unwrap_or_else(|| default_poles(plant.dim()));
    let spec = design_luenberger(plant, &poles, eps)?;
    if let Some(g) = meta_gain {
        if g.len() != spec.gain.len() || g.iter().zip(spec.gain.iter()).any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0)) {
            return Err(CliError::Config { line: 0, msg: "stored observer gain does not match the configuration".into() });
        }
    }
    Ok(spec)
}

/// Facts about a synthesized controller needed to run it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerMeta {
    pub method: Option<Method>,
    pub model: PathBuf,
    pub domain_size: usize,
    pub transient_period: Option<usize>,
    pub prefix: Vec<u32>,
    pub prefix_start: Option<String>,
    pub nfa_states: Option<usize>,
    pub nfa_transitions: Option<usize>,
    pub blind_input: Option<u32>,
    pub blind_cells: Option<usize>,
    pub gain: Vec<f64>,
    pub mc_error: Option<f64>,
    pub game_states: Option<usize>,
    /// Initial knowledge of the knowledge controller; every cell when absent.
    pub initial: Option<Vec<u32>>,
}

impl ControllerMeta {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method {}", self.method.map_or("none", Method::name));
        let _ = writeln!(s, "model {}", self.model.display());
        let _ = writeln!(s, "domain {}", self.domain_size);
        let opt = |s: &mut String, k: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} {v}");
            }
        };
        opt(&mut s, "tt", self.transient_period.map(|v| v.to_string()));
        if self.transient_period.is_some() {
            let w: Vec<String> = self.prefix.iter().map(|u| u.to_string()).collect();
            let _ = writeln!(s, "prefix {}", w.join(" "));
        }
        opt(&mut s, "prefix.start", self.prefix_start.clone());
        opt(&mut s, "nfa.states", self.nfa_states.map(|v| v.to_string()));
        opt(&mut s, "nfa.transitions", self.nfa_transitions.map(|v| v.to_string()));
        opt(&mut s, "blind.input", self.blind_input.map(|v| v.to_string()));
        opt(&mut s, "blind.cells", self.blind_cells.map(|v| v.to_string()));
        if !self.gain.is_empty() {
            let g: Vec<String> = self.gain.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "observer.gain {}", g.join(" "));
        }
        opt(&mut s, "observer.mc_error", self.mc_error.map(|v| format!("{v:?}")));
        opt(&mut s, "game.states", self.game_states.map(|v| v.to_string()));
        if let Some(init) = &self.initial {
            let w: Vec<String> = init.iter().map(|u| u.to_string()).collect();
            let _ = writeln!(s, "knowledge.initial {}", w.join(" "));
        }
        s
    }

    pub fn from_text(text: &str) -> symctl_core::Result<ControllerMeta> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut m = ControllerMeta::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let raw = raw.trim();
            if raw.is_empty() {
                continue;
            }
            let (k, v) = raw.split_once(' ').unwrap_or((raw, ""));
            let v = v.trim();
            let int = |v: &str| v.parse::<usize>().map_err(|_| perr(line, format!("bad integer for `{k}`")));
            let float = |v: &str| v.parse::<f64>().map_err(|_| perr(line, format!("bad number for `{k}`")));
            match k {
                "method" => m.method = Method::parse(v),
                "model" => m.model = PathBuf::from(v),
                "domain" => m.domain_size = int(v)?,
                "tt" => m.transient_period = Some(int(v)?),
                "prefix" => {
                    m.prefix = v.split_whitespace().map(|t| int(t).map(|x| x as u32)).collect::<Result<_, _>>()?;
                }
                "prefix.start" => m.prefix_start = Some(v.to_string()),
                "nfa.states" => m.nfa_states = Some(int(v)?),
                "nfa.transitions" => m.nfa_transitions = Some(int(v)?),
                "blind.input" => m.blind_input = Some(int(v)? as u32),
                "blind.cells" => m.blind_cells = Some(int(v)?),
                "observer.gain" => m.gain = v.split_whitespace().map(float).collect::<Result<_, _>>()?,
                "observer.mc_error" => m.mc_error = Some(float(v)?),
                "game.states" => m.game_states = Some(int(v)?),
                "knowledge.initial" => {
                    m.initial = Some(v.split_whitespace().map(|t| int(t).map(|x| x as u32)).collect::<Result<_, _>>()?);
                }
                _ => return Err(perr(line, format!("unknown key `{k}`"))),
            }
        }
        if m.method.is_none() {
            return Err(perr(0, "controller meta lacks a method".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct Synthesized {
    pub controller: Controller,
    pub meta: ControllerMeta,
    pub game: Option<KnowledgeGame>,
    pub detector: Option<DetectorReport>,
}

fn x0_cell(model: &SymbolicModel, cfg: &CaseStudyConfig) -> CliResult<u32> {
    let c = model
        .state_grid
        .quantize(&cfg.simulation.x0)
        .map_err(|_| Error::Domain("simulation.x0 lies outside the state grid".into()))?;
    Ok(c as u32)
}

/// Initial knowledge recorded in the controller meta.
pub fn initial_knowledge(loaded: &LoadedController) -> symctl_core::StateSet {
    let sys = &loaded.model.system;
    match &loaded.meta.initial {
        Some(cells) => set_from(sys.num_states(), cells.iter().copied()),
        None => sys.initial_states().clone(),
    }
}

/// Prefix for the detector stack: every run from `start` must end in the
/// controller domain after `len` steps. All cells first, then the cell of
/// the configured initial state.
fn detector_prefix(
    model: &SymbolicModel,
    cfg: &CaseStudyConfig,
    len: usize,
    cq: &Controller,
) -> CliResult<(Vec<u32>, String)> {
    let sys = &model.system;
    let domain = set_from(sys.num_states(), cq.domain.iter().copied());
    let candidates = model.inputs_by_magnitude();
    match search_prefix(sys, len, &domain, PrefixMode::Reach, &sys.full_set(), &candidates, cfg.max_prefix) {
        Ok(p) => return Ok((p.word, "all".into())),
        Err(Error::NotFound(_)) => {}
        Err(e) => return Err(e.into()),
    }
    let x0 = x0_cell(model, cfg)?;
    let start = set_from(sys.num_states(), [x0]);
    let p = search_prefix(sys, len, &domain, PrefixMode::Reach, &start, &candidates, cfg.max_prefix)?;
    Ok((p.word, format!("x0 {x0}")))
}

pub fn synthesize(model: &SymbolicModel, cfg: &CaseStudyConfig, method: Method, model_path: &Path) -> CliResult<Synthesized> {
    check_model_matches(model, cfg)?;
    let spec = symbolic_spec(cfg, &model.output_relation)?;
    let sys = &model.system;
    let mut meta = ControllerMeta { method: Some(method), model: model_path.to_path_buf(), ..Default::default() };
    let mut game = None;
    let mut detector = None;
    let controller = match method {
        Method::Direct => {
            let map = sys.output_map();
            let mut seen = vec![false; sys.num_outputs()];
            for &y in map {
                if std::mem::replace(&mut seen[y as usize], true) {
                    return Err(CliError::Config {
                        line: 0,
                        msg: "the direct method needs an injective output map; use knowledge, observer or detector".into(),
                    });
                }
            }
            let c = solve(sys, &spec)?;
            meta.domain_size = c.domain.len();
            c.relabel_observations(map, sys.num_outputs())?
        }
        Method::Knowledge => {
            let s0 = if cfg.knowledge_from_x0 {
                let cell = x0_cell(model, cfg)?;
                meta.initial = Some(vec![cell]);
                set_from(sys.num_states(), [cell])
            } else {
                sys.initial_states().clone()
            };
            let (g, c) = solve_knowledge_from(sys, &s0, &spec, cfg.knowledge_cap)?;
            meta.domain_size = c.domain.len();
            meta.game_states = Some(g.num_states());
            game = Some(g);
            c
        }
        Method::Observer => {
            let m = builtin(cfg)?;
            let plant = linear_plant(cfg, &m)?;
            let ospec = observer_spec(cfg, &plant, None)?;
            let dom = Rect::new(cfg.state_lower.clone(), cfg.state_upper.clone());
            let inputs = Rect::new(cfg.input_lower.clone(), cfg.input_upper.clone());
            meta.mc_error = Some(monte_carlo_error(&ospec, &plant, &dom, &inputs, MC_RUNS, MC_STEPS, cfg.simulation.seed));
            meta.gain = ospec.gain.iter().copied().collect();
            let c = solve(sys, &spec)?;
            let plan = blind_period_plan(sys, &c.domain, &model.inputs_by_magnitude())?;
            meta.blind_input = Some(plan.input);
            meta.blind_cells = Some(plan.cells.len());
            meta.domain_size = c.domain.len();
            c
        }
        Method::Detector => {
            let report = build_detector_nfa(sys).analyze();
            meta.nfa_states = Some(report.states);
            meta.nfa_transitions = Some(report.transitions);
            if !report.detectable {
                return Err(Error::Precondition("the abstract model is not detectable".into()).into());
            }
            let cq = solve(sys, &spec)?;
            let (word, start) = detector_prefix(model, cfg, report.transient_period, &cq)?;
            meta.transient_period = Some(report.transient_period);
            meta.prefix = word;
            meta.prefix_start = Some(start);
            meta.domain_size = cq.domain.len();
            detector = Some(report);
            wrap_controller_cm(&cq)
        }
    };
    Ok(Synthesized { controller, meta, game, detector })
}

pub fn write_controller(s: &Synthesized, path: &Path) -> CliResult<()> {
    write(path, &s.controller.to_text())?;
    write(&with_suffix(path, ".meta"), &s.meta.to_text())?;
    if let Some(g) = &s.game {
        write(&with_suffix(path, ".kgame"), &g.sidecar_text())?;
        write(&with_suffix(path, ".kgame.sys"), &g.system.to_text())?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LoadedController {
    pub controller: Controller,
    pub meta: ControllerMeta,
    pub model: SymbolicModel,
    pub game: Option<KnowledgeGame>,
}

/// Load `C`, its meta, the model it refers to and, for the knowledge method,
/// the game.
pub fn read_controller(path: &Path) -> CliResult<LoadedController> {
    let artifact = |p: &Path| {
        let p = p.display().to_string();
        move |source| CliError::Artifact { path: p, source }
    };
    let controller = Controller::from_text(&read(path)?).map_err(artifact(path))?;
    let meta_path = with_suffix(path, ".meta");
    let meta = ControllerMeta::from_text(&read(&meta_path)?).map_err(artifact(&meta_path))?;
    let model_path = if meta.model.is_relative() {
        path.parent().unwrap_or(Path::new(".")).join(&meta.model)
    } else {
        meta.model.clone()
    };
    let model = read_model(&model_path)?;
    let game = if meta.method == Some(Method::Knowledge) {
        let sys_path = with_suffix(path, ".kgame.sys");
        let side_path = with_suffix(path, ".kgame");
        let gsys = FiniteSystem::from_text(&read(&sys_path)?).map_err(artifact(&sys_path))?;
        Some(KnowledgeGame::from_parts(gsys, &model.system, &read(&side_path)?).map_err(artifact(&side_path))?)
    } else {
        None
    };
    Ok(LoadedController { controller, meta, model, game })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_round_trip() {
        let m = ControllerMeta {
            method: Some(Method::Detector),
            model: PathBuf::from("out/pendulum.model"),
            domain_size: 17,
            transient_period: Some(2),
            prefix: vec![10, 10],
            prefix_start: Some("all".into()),
            nfa_states: Some(60),
            nfa_transitions: Some(1485),
            ..Default::default()
        };
        assert_eq!(ControllerMeta::from_text(&m.to_text()).unwrap(), m);
        let o = ControllerMeta {
            method: Some(Method::Observer),
            model: PathBuf::from("/tmp/m"),
            blind_input: Some(5),
            blind_cells: Some(100),
            gain: vec![1.0, 20.0],
            mc_error: Some(1e-13),
            initial: Some(vec![3, 9]),
            ..Default::default()
        };
        assert_eq!(ControllerMeta::from_text(&o.to_text()).unwrap(), o);
        let t = ControllerMeta { transient_period: Some(0), ..o };
        assert_eq!(ControllerMeta::from_text(&t.to_text()).unwrap(), t);
        assert!(ControllerMeta::from_text("model x\n").is_err());
        assert!(ControllerMeta::from_text("method direct\ncolour red\n").is_err());
    }
}
