use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::OutOfDomain;
use crate::output::OutputRelation;

/// Marker for an undefined decision.
pub const NO_INPUT: u32 = u32::MAX;

/// Finite-memory controller. At memory `m` and observation `o` it emits
/// `decision(m, o)` and moves to `update(m, o)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Controller {
    n_memory: usize,
    n_obs: usize,
    n_inputs: usize,
    initial_memory: u32,
    decision: Vec<u32>,
    allowed: Vec<Vec<u32>>,
    update: Vec<u32>,
    /// Model states from which the closed loop satisfies the specification.
    pub domain: Vec<u32>,
}

impl Controller {
    pub fn new(n_memory: usize, n_obs: usize, initial_memory: u32, n_inputs: usize) -> Self {
        let k = n_memory * n_obs;
        Controller {
            n_memory,
            n_obs,
            n_inputs,
            initial_memory,
            decision: vec![NO_INPUT; k],
            allowed: vec![Vec::new(); k],
            update: (0..k).map(|i| (i / n_obs.max(1)) as u32).collect(),
            domain: Vec::new(),
        }
    }

    pub fn num_memory(&self) -> usize {
        self.n_memory
    }

    pub fn num_observations(&self) -> usize {
        self.n_obs
    }

    pub fn num_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn initial_memory(&self) -> u32 {
        self.initial_memory
    }

    fn idx(&self, m: u32, o: u32) -> Option<usize> {
        ((m as usize) < self.n_memory && (o as usize) < self.n_obs).then(|| m as usize * self.n_obs + o as usize)
    }

    /// Record the permissive input list; the emitted input is its lowest id.
    pub fn set(&mut self, m: u32, o: u32, mut allowed: Vec<u32>) {
        let i = self.idx(m, o).expect("controller index in range");
        allowed.sort_unstable();
        allowed.dedup();
        self.decision[i] = allowed.first().copied().unwrap_or(NO_INPUT);
        self.allowed[i] = allowed;
    }

    pub fn set_update(&mut self, m: u32, o: u32, m2: u32) {
        let i = self.idx(m, o).expect("controller index in range");
        self.update[i] = m2;
    }

    pub fn decide(&self, m: u32, o: u32) -> Option<u32> {
        self.idx(m, o).map(|i| self.decision[i]).filter(|&u| u != NO_INPUT)
    }

    pub fn allowed(&self, m: u32, o: u32) -> &[u32] {
        self.idx(m, o).map(|i| self.allowed[i].as_slice()).unwrap_or(&[])
    }

    pub fn next_memory(&self, m: u32, o: u32) -> u32 {
        self.idx(m, o).map(|i| self.update[i]).unwrap_or(m)
    }

    pub fn in_domain(&self, x: u32) -> bool {
        self.domain.binary_search(&x).is_ok()
    }

    /// Rename observations through `map` (old observation → new id). Used to
    /// turn a state-observing controller into a symbol-observing one when the
    /// output map is injective.
    pub fn relabel_observations(&self, map: &[u32], n_new: usize) -> Result<Controller> {
        if map.len() != self.n_obs {
            return Err(Error::Config("relabelling must cover every observation".into()));
        }
        let mut c = Controller::new(self.n_memory, n_new, self.initial_memory, self.n_inputs);
        let mut seen = vec![false; n_new];
        for (o, &o2) in map.iter().enumerate() {
            if o2 as usize >= n_new || seen[o2 as usize] {
                return Err(Error::Config(format!("observation relabelling is not injective at {o}")));
            }
            seen[o2 as usize] = true;
            for m in 0..self.n_memory as u32 {
                c.set(m, o2, self.allowed(m, o as u32).to_vec());
                c.set_update(m, o2, self.next_memory(m, o as u32));
            }
        }
        c.domain = self.domain.clone();
        Ok(c)
    }

    /// Text form: `memstates`, `observations`, `inputs`, `init`, then `d m o u`
    /// decisions, `a m o u...` permissive lists, `g m o m'` memory moves
    /// (omitted when the memory stays), and `domain x ...`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "memstates {}", self.n_memory);
        let _ = writeln!(s, "observations {}", self.n_obs);
        let _ = writeln!(s, "inputs {}", self.n_inputs);
        let _ = writeln!(s, "init {}", self.initial_memory);
        for m in 0..self.n_memory as u32 {
            for o in 0..self.n_obs as u32 {
                let i = m as usize * self.n_obs + o as usize;
                if self.decision[i] != NO_INPUT {
                    let _ = writeln!(s, "d {m} {o} {}", self.decision[i]);
                    if self.allowed[i].len() > 1 {
                        s.push_str(&format!("a {m} {o}"));
                        for u in &self.allowed[i] {
                            let _ = write!(s, " {u}");
                        }
                        s.push('\n');
                    }
                }
                if self.update[i] != m {
                    let _ = writeln!(s, "g {m} {o} {}", self.update[i]);
                }
            }
        }
        s.push_str("domain");
        for x in &self.domain {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Controller> {
        let mut head = [None::<usize>; 4];
        let mut c: Option<Controller> = None;
        for (i, line) in text.lines().enumerate() {
            let ln = i + 1;
            let mut it = line.split_whitespace();
            let Some(key) = it.next() else { continue };
            if key.starts_with('#') {
                continue;
            }
            let nums: Vec<u32> = it
                .map(|t| t.parse::<u32>().map_err(|_| Error::parse(ln, format!("bad integer `{t}`"))))
                .collect::<Result<_>>()?;
            let h = match key {
                "memstates" => Some(0),
                "observations" => Some(1),
                "inputs" => Some(2),
                "init" => Some(3),
                _ => None,
            };
            if let Some(k) = h {
                if nums.len() != 1 {
                    return Err(Error::parse(ln, format!("`{key}` takes one value")));
                }
                head[k] = Some(nums[0] as usize);
                continue;
            }
            let ctrl = match (&mut c, head) {
                (Some(c), _) => c,
                (None, [Some(m), Some(o), Some(u), Some(init)]) => c.insert(Controller::new(m, o, init as u32, u)),
                _ => return Err(Error::parse(ln, "header must precede body lines")),
            };
            let check = |ctrl: &Controller, m: u32, o: u32| {
                ctrl.idx(m, o).ok_or_else(|| Error::parse(ln, "memory or observation out of range"))
            };
            match (key, nums.as_slice()) {
                ("d", &[m, o, u]) => {
                    let i = check(ctrl, m, o)?;
                    if u as usize >= ctrl.n_inputs {
                        return Err(Error::parse(ln, "input out of range"));
                    }
                    ctrl.decision[i] = u;
                    if ctrl.allowed[i].is_empty() {
                        ctrl.allowed[i] = vec![u];
                    }
                }
                ("a", [m, o, us @ ..]) if !us.is_empty() => {
                    let i = check(ctrl, *m, *o)?;
                    ctrl.allowed[i] = us.to_vec();
                }
                ("g", &[m, o, m2]) => {
                    let i = check(ctrl, m, o)?;
                    if m2 as usize >= ctrl.n_memory {
                        return Err(Error::parse(ln, "memory out of range"));
                    }
                    ctrl.update[i] = m2;
                }
                ("domain", xs) => ctrl.domain = xs.to_vec(),
                _ => return Err(Error::parse(ln, format!("unrecognised line `{line}`"))),
            }
        }
        c.ok_or_else(|| Error::parse(0, "missing controller header"))
    }
}

/// A controller together with its current memory.
#[derive(Debug, Clone)]
pub struct ControllerRun<'a> {
    pub ctrl: &'a Controller,
    pub memory: u32,
}

impl<'a> ControllerRun<'a> {
    pub fn new(ctrl: &'a Controller) -> Self {
        ControllerRun {
            ctrl,
            memory: ctrl.initial_memory,
        }
    }

    pub fn step(&mut self, o: u32) -> Result<u32> {
        let u = self.ctrl.decide(self.memory, o).ok_or_else(|| {
            Error::Refusal(format!("no decision for observation {o} at memory {}", self.memory))
        })?;
        self.memory = self.ctrl.next_memory(self.memory, o);
        Ok(u)
    }
}

/// C ∘ Z: concrete output through the static quantizer, then through a
/// controller observing output symbols.
#[derive(Debug, Clone)]
pub struct RefinedController<'a> {
    run: ControllerRun<'a>,
    rel: &'a OutputRelation,
}

impl<'a> RefinedController<'a> {
    pub fn new(ctrl: &'a Controller, rel: &'a OutputRelation) -> Self {
        RefinedController {
            run: ControllerRun::new(ctrl),
            rel,
        }
    }

    pub fn memory(&self) -> u32 {
        self.run.memory
    }

    /// Returns the symbol and the input id.
    pub fn step(&mut self, y: f64) -> Result<(u32, u32)> {
        let s = self
            .rel
            .z(y)
            .map_err(|OutOfDomain| Error::Refusal(format!("output {y} outside the quantizer domain")))?;
        Ok((s, self.run.step(s)?))
    }
}
