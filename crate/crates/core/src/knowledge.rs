//! Knowledge-set tracking and the perfect-information knowledge game.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::synthesis::{self, Controller, ControllerRun, Spec};
use crate::system::{FiniteSystem, StateSet, SystemBuilder};

pub const DEFAULT_CAP: usize = 2_000_000;

/// `Post_u(s) ∩ H⁻¹(y)`; `None` when the observation is inconsistent with the
/// model.
pub fn knowledge_update(model: &FiniteSystem, s: &StateSet, u: u32, y: u32) -> Result<Option<StateSet>> {
    if u as usize >= model.num_inputs() {
        return Err(Error::InvalidId { kind: "input", id: u as usize, len: model.num_inputs() });
    }
    if let Some(x) = s.ones().find(|&x| model.succ(x as u32, u).is_empty()) {
        return Err(Error::Precondition(format!("input {u} is not admissible at member {x}")));
    }
    let mut next = model.post_set(s, u);
    model.filter_output(&mut next, y);
    Ok((!next.is_clear()).then_some(next))
}

/// `s0 ∩ H⁻¹(y)` for the first observation.
pub fn refine_initial(model: &FiniteSystem, s0: &StateSet, y: u32) -> Option<StateSet> {
    let mut k = s0.clone();
    k.grow(model.num_states());
    model.filter_output(&mut k, y);
    (!k.is_clear()).then_some(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGame {
    /// Game over knowledge ids; outputs are the ids themselves.
    pub system: FiniteSystem,
    states: Vec<StateSet>,
    index: HashMap<StateSet, u32>,
    /// Model output shared by the members of each knowledge state.
    symbol: Vec<u32>,
}

impl KnowledgeGame {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn knowledge(&self, id: u32) -> &StateSet {
        &self.states[id as usize]
    }

    pub fn knowledge_states(&self) -> &[StateSet] {
        &self.states
    }

    pub fn symbol(&self, id: u32) -> u32 {
        self.symbol[id as usize]
    }

    pub fn id_of(&self, k: &StateSet) -> Option<u32> {
        self.index.get(k).copied()
    }

    /// One `k id hexbits` line per knowledge state. Hex digit j holds members
    /// 4j..4j+3, least significant bit first.
    pub fn sidecar_text(&self) -> String {
        let mut s = String::new();
        for (i, k) in self.states.iter().enumerate() {
            let _ = writeln!(s, "k {i} {}", to_hex(k));
        }
        s
    }

    pub fn from_parts(system: FiniteSystem, model: &FiniteSystem, sidecar: &str) -> Result<KnowledgeGame> {
        let mut states = Vec::new();
        for (i, line) in sidecar.lines().enumerate() {
            let ln = i + 1;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                [] => continue,
                ["k", id, hex] => {
                    let id: usize = id.parse().map_err(|_| Error::parse(ln, "bad knowledge id"))?;
                    if id != states.len() {
                        return Err(Error::parse(ln, "knowledge ids must be consecutive from 0"));
                    }
                    states.push(from_hex(hex, model.num_states()).map_err(|m| Error::parse(ln, m))?);
                }
                _ => return Err(Error::parse(ln, format!("unrecognised line `{line}`"))),
            }
        }
        if states.len() != system.num_states() {
            return Err(Error::Inconsistent(format!(
                "sidecar lists {} knowledge states, game has {}",
                states.len(),
                system.num_states()
            )));
        }
        let symbol = states
            .iter()
            .map(|k| common_output(model, k))
            .collect::<Result<Vec<u32>>>()?;
        let index = states.iter().cloned().zip(0u32..).collect();
        Ok(KnowledgeGame { system, states, index, symbol })
    }
}

fn common_output(model: &FiniteSystem, k: &StateSet) -> Result<u32> {
    let mut it = k.ones().map(|x| model.output_map()[x]);
    let y = it.next().ok_or_else(|| Error::Inconsistent("empty knowledge state".into()))?;
    if it.any(|y2| y2 != y) {
        return Err(Error::Inconsistent("knowledge state mixes outputs".into()));
    }
    Ok(y)
}

fn to_hex(k: &StateSet) -> String {
    let nibbles = k.len().div_ceil(4).max(1);
    (0..nibbles)
        .map(|j| {
            let v = (0..4).filter(|b| k.contains(4 * j + b)).fold(0u32, |a, b| a | 1 << b);
            char::from_digit(v, 16).unwrap()
        })
        .collect()
}

fn from_hex(hex: &str, n: usize) -> std::result::Result<StateSet, String> {
    let mut k = StateSet::with_capacity(n);
    for (j, c) in hex.chars().enumerate() {
        let v = c.to_digit(16).ok_or_else(|| format!("bad hex digit `{c}`"))?;
        for b in 0..4 {
            if v >> b & 1 == 1 {
                let x = 4 * j + b;
                if x >= n {
                    return Err(format!("member {x} out of range"));
                }
                k.insert(x);
            }
        }
    }
    if k.is_clear() {
        return Err("empty knowledge state".into());
    }
    Ok(k)
}

/// Breadth-first subset construction from `s0` refined by each possible first
/// observation.
pub fn build_knowledge_game(model: &FiniteSystem, s0: &StateSet, cap: usize) -> Result<KnowledgeGame> {
    if s0.is_clear() {
        return Err(Error::Precondition("initial knowledge must be nonempty".into()));
    }
    let mut states: Vec<StateSet> = Vec::new();
    let mut index: HashMap<StateSet, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut edges: Vec<(u32, u32, u32)> = Vec::new();
    let mut initial = Vec::new();
    let mut intern = |k: StateSet, states: &mut Vec<StateSet>, queue: &mut VecDeque<u32>| -> Result<u32> {
        if let Some(&id) = index.get(&k) {
            return Ok(id);
        }
        if states.len() >= cap {
            return Err(Error::Resource(format!(
                "more than {cap} reachable knowledge states; use coarser grids"
            )));
        }
        let id = states.len() as u32;
        index.insert(k.clone(), id);
        states.push(k);
        queue.push_back(id);
        Ok(id)
    };
    for y in 0..model.num_outputs() as u32 {
        if let Some(k) = refine_initial(model, s0, y) {
            initial.push(intern(k, &mut states, &mut queue)?);
        }
    }
    while let Some(id) = queue.pop_front() {
        let k = states[id as usize].clone();
        for u in 0..model.num_inputs() as u32 {
            if k.ones().any(|x| model.succ(x as u32, u).is_empty()) {
                continue;
            }
            let mut by_output: BTreeMap<u32, StateSet> = BTreeMap::new();
            for x in k.ones() {
                for &x2 in model.succ(x as u32, u) {
                    by_output
                        .entry(model.output_map()[x2 as usize])
                        .or_insert_with(|| StateSet::with_capacity(model.num_states()))
                        .insert(x2 as usize);
                }
            }
            for (_, k2) in by_output {
                let id2 = intern(k2, &mut states, &mut queue)?;
                edges.push((id, u, id2));
            }
        }
    }
    let n = states.len();
    let mut b = SystemBuilder::new(n, model.num_inputs(), n)
        .initial(initial)
        .output_map((0..n as u32).collect());
    for (a, u, c) in edges {
        b.add(a, u, c);
    }
    let system = b.build()?;
    let symbol = states.iter().map(|k| common_output(model, k)).collect::<Result<Vec<u32>>>()?;
    Ok(KnowledgeGame { system, states, index, symbol })
}

/// Knowledge states all of whose members have an output in `set`.
pub fn lift_set(model: &FiniteSystem, knowledge: &[StateSet], set: &[u32]) -> Vec<u32> {
    knowledge
        .iter()
        .enumerate()
        .filter(|(_, k)| k.ones().all(|x| set.contains(&model.output_map()[x])))
        .map(|(i, _)| i as u32)
        .collect()
}

/// Universal lifting of a Safe or Reach specification to game outputs.
pub fn lift_spec(model: &FiniteSystem, game: &KnowledgeGame, spec: &Spec) -> Result<Spec> {
    spec.validate(model)?;
    let lift = |s: &[u32]| lift_set(model, &game.states, s);
    match spec {
        Spec::Safe(s) => Ok(Spec::Safe(lift(s))),
        Spec::Reach(s) => Ok(Spec::Reach(lift(s))),
        other => Err(Error::Config(format!("knowledge games support safe and reach specifications, not {other:?}"))),
    }
}

/// Build the game, lift the specification and solve it.
pub fn solve_knowledge(model: &FiniteSystem, spec: &Spec, cap: usize) -> Result<(KnowledgeGame, Controller)> {
    solve_knowledge_from(model, model.initial_states(), spec, cap)
}

/// As [`solve_knowledge`], with the initial knowledge given explicitly.
pub fn solve_knowledge_from(model: &FiniteSystem, s0: &StateSet, spec: &Spec, cap: usize) -> Result<(KnowledgeGame, Controller)> {
    let game = build_knowledge_game(model, s0, cap)?;
    let lifted = lift_spec(model, &game, spec)?;
    let set = match &lifted {
        Spec::Safe(s) | Spec::Reach(s) => s,
        _ => unreachable!(),
    };
    if set.is_empty() {
        return Err(Error::NoController("no knowledge state satisfies the specification".into()));
    }
    let ctrl = synthesis::solve(&game.system, &lifted)?;
    Ok((game, ctrl))
}

/// Game strategy with the model embedded for knowledge tracking.
#[derive(Debug, Clone)]
pub struct GameController<'a> {
    model: &'a FiniteSystem,
    game: &'a KnowledgeGame,
    run: ControllerRun<'a>,
    s0: StateSet,
    knowledge: Option<StateSet>,
    current_input: Option<u32>,
}

impl<'a> GameController<'a> {
    pub fn new(strategy: &'a Controller, model: &'a FiniteSystem, game: &'a KnowledgeGame, s0: StateSet) -> Self {
        GameController {
            model,
            game,
            run: ControllerRun::new(strategy),
            s0,
            knowledge: None,
            current_input: None,
        }
    }

    pub fn knowledge(&self) -> Option<&StateSet> {
        self.knowledge.as_ref()
    }

    pub fn current_input(&self) -> Option<u32> {
        self.current_input
    }

    /// Feed the next model output; returns the input to apply.
    pub fn step(&mut self, y: u32) -> Result<u32> {
        let k = match (&self.knowledge, self.current_input) {
            (Some(k), Some(u)) => knowledge_update(self.model, k, u, y)?,
            _ => refine_initial(self.model, &self.s0, y),
        }
        .ok_or_else(|| Error::Inconsistent(format!("observation {y} contradicts the tracked knowledge")))?;
        let id = self
            .game
            .id_of(&k)
            .ok_or_else(|| Error::Refusal("knowledge state is not part of the game".into()))?;
        let u = self.run.step(id)?;
        self.knowledge = Some(k);
        self.current_input = Some(u);
        Ok(u)
    }
}

#[cfg(test)]
mod tests;
