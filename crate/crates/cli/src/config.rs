//! Case-study configuration: flat `section.key = value` lines, arrays in
//! brackets, `#` comments.

use std::collections::BTreeMap;
use std::path::Path;

use symctl_core::abstraction::{AbstractionParams, ReachMethod};
use symctl_core::grid::Convention;
use symctl_core::output::Snap;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Num(f64),
    Word(String),
    List(Vec<Value>),
}

impl Value {
    fn describe(&self) -> &'static str {
        match self {
            Value::Num(_) => "number",
            Value::Word(_) => "word",
            Value::List(_) => "list",
        }
    }
}

fn parse_value(s: &str) -> Result<Value, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("missing value".into());
    }
    let (v, rest) = parse_inner(s)?;
    if !rest.trim().is_empty() {
        return Err(format!("trailing text `{}`", rest.trim()));
    }
    Ok(v)
}

fn parse_inner(s: &str) -> Result<(Value, &str), String> {
    let s = s.trim_start();
    if let Some(mut rest) = s.strip_prefix('[') {
        let mut items = Vec::new();
        loop {
            rest = rest.trim_start();
            if let Some(r) = rest.strip_prefix(']') {
                return Ok((Value::List(items), r));
            }
            if !items.is_empty() {
                rest = rest.strip_prefix(',').ok_or("expected `,` or `]`")?;
            }
            let (v, r) = parse_inner(rest)?;
            items.push(v);
            rest = r;
        }
    }
    if let Some(body) = s.strip_prefix('"') {
        let end = body.find('"').ok_or("unterminated string")?;
        return Ok((Value::Word(body[..end].to_string()), &body[end + 1..]));
    }
    let end = s.find([',', ']']).unwrap_or(s.len());
    let tok = s[..end].trim();
    if tok.is_empty() {
        return Err("empty list element".into());
    }
    let v = match tok.parse::<f64>() {
        Ok(x) if x.is_finite() => Value::Num(x),
        Ok(_) => return Err(format!("`{tok}` is not finite")),
        Err(_) => Value::Word(tok.to_string()),
    };
    Ok((v, &s[end..]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Knowledge,
    Observer,
    Detector,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "direct" => Some(Method::Direct),
            "knowledge" => Some(Method::Knowledge),
            "observer" => Some(Method::Observer),
            "detector" => Some(Method::Detector),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Knowledge => "knowledge",
            Method::Observer => "observer",
            Method::Detector => "detector",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Safe,
    Reach,
    SafeBounded,
    ReachBounded,
    RecurrenceHold,
}

impl SpecKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "safe" => Some(SpecKind::Safe),
            "reach" => Some(SpecKind::Reach),
            "safe_bounded" => Some(SpecKind::SafeBounded),
            "reach_bounded" => Some(SpecKind::ReachBounded),
            "recurrence_hold" => Some(SpecKind::RecurrenceHold),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecConfig {
    pub kind: SpecKind,
    /// Concrete output intervals. Safe/Reach use their union.
    pub targets: Vec<(f64, f64)>,
    pub hold: usize,
    pub horizon: Option<(usize, usize)>,
    pub snap: Snap,
    pub min_cycles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub coordinate: usize,
    pub eta: f64,
    pub convention: Convention,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub x0: Vec<f64>,
    pub xhat0: Option<Vec<f64>>,
    pub steps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseStudyConfig {
    pub model_id: String,
    pub model_params: Vec<(String, f64)>,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub state_eta: Vec<f64>,
    pub convention: Convention,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub input_eta: Vec<f64>,
    pub abstraction: AbstractionParams,
    pub output: OutputConfig,
    pub spec: SpecConfig,
    pub method: Option<Method>,
    pub observer_poles: Option<Vec<f64>>,
    pub observer_epsilon: Option<f64>,
    pub max_prefix: usize,
    pub knowledge_cap: usize,
    /// Start the knowledge game from the cell of `simulation.x0` instead of
    /// every cell.
    pub knowledge_from_x0: bool,
    pub simulation: SimulationConfig,
}

struct Entry {
    line: usize,
    value: Value,
    used: bool,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

fn invalid(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config { line, msg: msg.into() }
}

impl Table {
    fn take(&mut self, key: &str) -> Option<(usize, Value)> {
        self.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn required(&mut self, key: &str) -> CliResult<(usize, Value)> {
        self.take(key).ok_or_else(|| invalid(0, format!("missing required key `{key}`")))
    }

    fn num(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::Num(x))) => Ok(Some(x)),
            Some((l, v)) => Err(invalid(l, format!("`{key}` must be a number, got a {}", v.describe()))),
        }
    }

    fn count(&mut self, key: &str) -> CliResult<Option<usize>> {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        match self.num(key)? {
            None => Ok(None),
            Some(x) if x >= 0.0 && x.fract() == 0.0 => Ok(Some(x as usize)),
            Some(x) => Err(invalid(line, format!("`{key}` must be a nonnegative integer, got {x}"))),
        }
    }

    fn word(&mut self, key: &str) -> CliResult<Option<(usize, String)>> {
        match self.take(key) {
            None => Ok(None),
            Some((l, Value::Word(w))) => Ok(Some((l, w))),
            Some((l, v)) => Err(invalid(l, format!("`{key}` must be a word, got a {}", v.describe()))),
        }
    }

    fn vector(&mut self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some((_, Value::Num(x))) => Ok(Some(vec![x])),
            Some((l, Value::List(items))) => items
                .into_iter()
                .map(|v| match v {
                    Value::Num(x) => Ok(x),
                    other => Err(invalid(l, format!("`{key}` must hold numbers, found a {}", other.describe()))),
                })
                .collect::<CliResult<Vec<_>>>()
                .map(Some),
            Some((l, v)) => Err(invalid(l, format!("`{key}` must be a list of numbers, got a {}", v.describe()))),
        }
    }

    fn required_vector(&mut self, key: &str) -> CliResult<Vec<f64>> {
        self.vector(key)?.ok_or_else(|| invalid(0, format!("missing required key `{key}`")))
    }

    fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }
}

pub fn parse_config(text: &str) -> CliResult<CaseStudyConfig> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| invalid(line, "expected `section.key = value`"))?;
        let key = key.trim();
        if !key.contains('.') || key.split('.').any(|p| p.is_empty()) {
            return Err(invalid(line, format!("key `{key}` is not of the form section.key")));
        }
        let value = parse_value(value).map_err(|m| invalid(line, m))?;
        if entries.insert(key.to_string(), Entry { line, value, used: false }).is_some() {
            return Err(invalid(line, format!("duplicate key `{key}`")));
        }
    }
    let mut t = Table { entries };

    let (_, model_id) = t.word("model.id")?.ok_or_else(|| invalid(0, "missing required key `model.id`"))?;
    let param_keys: Vec<String> = t
        .entries
        .keys()
        .filter(|k| k.starts_with("model.") && *k != "model.id")
        .cloned()
        .collect();
    let mut model_params = Vec::new();
    for k in param_keys {
        let v = t.num(&k)?.expect("key present");
        model_params.push((k["model.".len()..].to_string(), v));
    }

    let state_lower = t.required_vector("state.lower")?;
    let state_upper = t.required_vector("state.upper")?;
    let state_eta = t.required_vector("state.eta")?;
    let n = state_lower.len();
    if state_upper.len() != n || state_eta.len() != n || n == 0 {
        return Err(invalid(t.line_of("state.eta"), "state.lower, state.upper and state.eta need equal nonzero length"));
    }
    let convention = match t.word("state.convention")? {
        None => Convention::Centered,
        Some((l, w)) => Convention::parse(&w).ok_or_else(|| invalid(l, format!("unknown convention `{w}`")))?,
    };

    let input_lower = t.required_vector("input.lower")?;
    let input_upper = t.required_vector("input.upper")?;
    let input_eta = t.required_vector("input.eta")?;
    if input_upper.len() != input_lower.len() || input_eta.len() != input_lower.len() || input_lower.is_empty() {
        return Err(invalid(t.line_of("input.eta"), "input.lower, input.upper and input.eta need equal nonzero length"));
    }

    let tau = t.num("abstraction.tau")?.ok_or_else(|| invalid(0, "missing required key `abstraction.tau`"))?;
    if !(tau > 0.0) {
        return Err(invalid(t.line_of("abstraction.tau"), "abstraction.tau must be positive"));
    }
    let mut abstraction = AbstractionParams::new(tau);
    if let Some(e) = t.num("abstraction.epsilon")? {
        if e < 0.0 {
            return Err(invalid(t.line_of("abstraction.epsilon"), "abstraction.epsilon must be nonnegative"));
        }
        abstraction.epsilon = e;
    }
    if let Some(s) = t.count("abstraction.substeps")? {
        if s == 0 {
            return Err(invalid(t.line_of("abstraction.substeps"), "abstraction.substeps must be at least 1"));
        }
        abstraction.substeps = s;
    }
    if let Some((l, w)) = t.word("abstraction.reach")? {
        abstraction.method = ReachMethod::parse(&w).ok_or_else(|| invalid(l, format!("unknown reach method `{w}`")))?;
    }

    let coordinate = t.count("output.coordinate")?.unwrap_or(0);
    if coordinate >= n {
        return Err(invalid(t.line_of("output.coordinate"), format!("output.coordinate {coordinate} exceeds the state dimension")));
    }
    let out_eta = t.num("output.eta")?.ok_or_else(|| invalid(0, "missing required key `output.eta`"))?;
    let out_conv = match t.word("output.convention")? {
        None => convention,
        Some((l, w)) => Convention::parse(&w).ok_or_else(|| invalid(l, format!("unknown convention `{w}`")))?,
    };
    let output = OutputConfig {
        coordinate,
        eta: out_eta,
        convention: out_conv,
        lower: t.num("output.lower")?.unwrap_or(state_lower[coordinate]),
        upper: t.num("output.upper")?.unwrap_or(state_upper[coordinate]),
    };

    let (kl, kind) = t.word("spec.kind")?.ok_or_else(|| invalid(0, "missing required key `spec.kind`"))?;
    let kind = SpecKind::parse(&kind).ok_or_else(|| invalid(kl, format!("unknown spec kind `{kind}`")))?;
    let (tl, tv) = t.required("spec.targets")?;
    let targets = parse_intervals(tl, tv)?;
    let hold = t.count("spec.hold")?.unwrap_or(1);
    let horizon = match t.vector("spec.horizon")? {
        None => None,
        Some(v) if v.len() == 2 && v.iter().all(|x| *x >= 0.0 && x.fract() == 0.0) => Some((v[0] as usize, v[1] as usize)),
        Some(_) => return Err(invalid(t.line_of("spec.horizon"), "spec.horizon must be [a, b] with integers")),
    };
    let snap = match t.word("spec.snap")? {
        None => Snap::Inner,
        Some((l, w)) => Snap::parse(&w).ok_or_else(|| invalid(l, format!("unknown snap mode `{w}`")))?,
    };
    let min_cycles = t.count("spec.min_cycles")?.unwrap_or(3);
    match kind {
        SpecKind::SafeBounded | SpecKind::ReachBounded if horizon.is_none() => {
            return Err(invalid(kl, "bounded specifications need spec.horizon"));
        }
        SpecKind::RecurrenceHold if hold == 0 => {
            return Err(invalid(t.line_of("spec.hold"), "spec.hold must be at least 1"));
        }
        _ => {}
    }
    let spec = SpecConfig { kind, targets, hold, horizon, snap, min_cycles };

    let method = match t.word("synthesis.method")? {
        None => None,
        Some((l, w)) => Some(Method::parse(&w).ok_or_else(|| invalid(l, format!("unknown method `{w}`")))?),
    };
    let observer_poles = t.vector("observer.poles")?;
    let observer_epsilon = t.num("observer.epsilon")?;
    let max_prefix = t.count("detector.max_prefix")?.unwrap_or(symctl_core::detector::DEFAULT_MAX_PREFIX);
    let knowledge_cap = t.count("knowledge.cap")?.unwrap_or(symctl_core::knowledge::DEFAULT_CAP);

    let knowledge_from_x0 = match t.word("knowledge.initial")? {
        None => false,
        Some((_, w)) if w == "all" => false,
        Some((_, w)) if w == "x0" => true,
        Some((l, w)) => return Err(invalid(l, format!("knowledge.initial must be `all` or `x0`, got `{w}`"))),
    };

    let x0 = t.required_vector("simulation.x0")?;
    if x0.len() != n {
        return Err(invalid(t.line_of("simulation.x0"), "simulation.x0 has the wrong dimension"));
    }
    let xhat0 = t.vector("simulation.xhat0")?;
    if xhat0.as_ref().is_some_and(|v| v.len() != n) {
        return Err(invalid(t.line_of("simulation.xhat0"), "simulation.xhat0 has the wrong dimension"));
    }
    let steps = t.count("simulation.steps")?.ok_or_else(|| invalid(0, "missing required key `simulation.steps`"))?;
    let seed = t.count("simulation.seed")?.unwrap_or(0) as u64;

    if let Some((k, e)) = t.entries.iter().find(|(_, e)| !e.used) {
        return Err(invalid(e.line, format!("unknown key `{k}`")));
    }
    Ok(CaseStudyConfig {
        model_id,
        model_params,
        state_lower,
        state_upper,
        state_eta,
        convention,
        input_lower,
        input_upper,
        input_eta,
        abstraction,
        output,
        spec,
        method,
        observer_poles,
        observer_epsilon,
        max_prefix,
        knowledge_cap,
        knowledge_from_x0,
        simulation: SimulationConfig { x0, xhat0, steps, seed },
    })
}

fn parse_intervals(line: usize, v: Value) -> CliResult<Vec<(f64, f64)>> {
    let pair = |v: &Value| -> CliResult<(f64, f64)> {
        match v {
            Value::List(p) => match p.as_slice() {
                [Value::Num(a), Value::Num(b)] if a <= b => Ok((*a, *b)),
                _ => Err(invalid(line, "each target must be [lo, hi] with lo ≤ hi")),
            },
            _ => Err(invalid(line, "each target must be [lo, hi]")),
        }
    };
    match &v {
        Value::List(items) if items.iter().all(|i| matches!(i, Value::Num(_))) => Ok(vec![pair(&v)?]),
        Value::List(items) if !items.is_empty() => items.iter().map(pair).collect(),
        _ => Err(invalid(line, "spec.targets must be [lo, hi] or a list of such intervals")),
    }
}

pub fn load_config(path: &Path) -> CliResult<CaseStudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    parse_config(&text)
}
