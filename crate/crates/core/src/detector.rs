//! Detectability analysis of symbolic models: the pair-tracking NFA, its limit
//! points and transient period, runtime state detection and the controller
//! wrappers used while the state is not yet known.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{Error, Result};
use crate::synthesis::Controller;
use crate::system::{FiniteSystem, StateSet};

/// Edge label: `None` input stands for the initial φ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label {
    pub input: Option<u32>,
    pub output: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorNfa {
    /// Members of each NFA state; state 0 is ⋄ with no members, every other
    /// state holds one or two model states in increasing order.
    pub states: Vec<Vec<u32>>,
    /// Sorted `(src, label, dst)` triples.
    pub edges: Vec<(u32, Label, u32)>,
}

pub const DIAMOND: u32 = 0;

fn subsets(p: &[u32]) -> Vec<Vec<u32>> {
    if p.len() == 1 {
        return vec![p.to_vec()];
    }
    let mut out = Vec::with_capacity(p.len() * (p.len() - 1) / 2);
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            out.push(vec![p[i], p[j]]);
        }
    }
    out
}

fn group_by_output(sys: &FiniteSystem, mut xs: Vec<u32>) -> Vec<(u32, Vec<u32>)> {
    xs.sort_unstable();
    xs.dedup();
    let mut groups: Vec<(u32, Vec<u32>)> = Vec::new();
    let mut by: HashMap<u32, usize> = HashMap::new();
    for x in xs {
        let y = sys.output_map()[x as usize];
        let i = *by.entry(y).or_insert_with(|| {
            groups.push((y, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(x);
    }
    groups.sort_by_key(|g| g.0);
    groups
}

/// Seed ⋄ with the singleton or all 2-subsets of every output class, then
/// expand each state under every (input, output) label until no new state
/// appears.
pub fn build_detector_nfa(sys: &FiniteSystem) -> DetectorNfa {
    let mut states: Vec<Vec<u32>> = vec![Vec::new()];
    let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut edges = Vec::new();
    let mut queue = VecDeque::new();
    let mut intern = |s: Vec<u32>, states: &mut Vec<Vec<u32>>, queue: &mut VecDeque<u32>| -> u32 {
        *index.entry(s.clone()).or_insert_with(|| {
            states.push(s);
            queue.push_back(states.len() as u32 - 1);
            states.len() as u32 - 1
        })
    };
    for (y, xs) in group_by_output(sys, (0..sys.num_states() as u32).collect()) {
        for s in subsets(&xs) {
            let id = intern(s, &mut states, &mut queue);
            edges.push((DIAMOND, Label { input: None, output: y }, id));
        }
    }
    while let Some(q) = queue.pop_front() {
        let members = states[q as usize].clone();
        for u in 0..sys.num_inputs() as u32 {
            let post: Vec<u32> = members.iter().flat_map(|&x| sys.succ(x, u).iter().copied()).collect();
            for (y, p) in group_by_output(sys, post) {
                for s in subsets(&p) {
                    let id = intern(s, &mut states, &mut queue);
                    edges.push((q, Label { input: Some(u), output: y }, id));
                }
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    DetectorNfa { states, edges }
}

/// States reachable from a cycle (nontrivial SCC or self-loop) in the graph
/// with `n` nodes and the given edges.
pub fn limit_points_graph(n: usize, edges: &[(u32, u32)]) -> FixedBitSet {
    let mut g = DiGraph::<(), ()>::with_capacity(n, edges.len());
    for _ in 0..n {
        g.add_node(());
    }
    let mut adj = vec![Vec::new(); n];
    let mut self_loop = FixedBitSet::with_capacity(n);
    for &(a, b) in edges {
        g.add_edge(NodeIndex::new(a as usize), NodeIndex::new(b as usize), ());
        adj[a as usize].push(b);
        if a == b {
            self_loop.insert(a as usize);
        }
    }
    let mut lp = FixedBitSet::with_capacity(n);
    let mut stack = Vec::new();
    for comp in tarjan_scc(&g) {
        if comp.len() > 1 || self_loop.contains(comp[0].index()) {
            for v in comp {
                if !lp.put(v.index()) {
                    stack.push(v.index() as u32);
                }
            }
        }
    }
    while let Some(v) = stack.pop() {
        for &w in &adj[v as usize] {
            if !lp.put(w as usize) {
                stack.push(w);
            }
        }
    }
    lp
}

/// 0 when every successor of `root` is a limit point, otherwise one plus the
/// longest path (in edges) through non-limit states starting at a non-limit
/// successor of `root`. Non-limit states lie on no cycle, so this is a DAG
/// longest path.
pub fn transient_period_graph(n: usize, edges: &[(u32, u32)], root: u32, limit: &FixedBitSet) -> usize {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a as usize].push(b);
    }
    let mut memo: Vec<Option<usize>> = vec![None; n];
    // iterative post-order DFS over non-limit states
    let longest = |start: u32, memo: &mut Vec<Option<usize>>| -> usize {
        let mut stack = vec![(start, false)];
        while let Some((v, done)) = stack.pop() {
            if memo[v as usize].is_some() {
                continue;
            }
            if done {
                let best = adj[v as usize]
                    .iter()
                    .filter(|&&w| !limit.contains(w as usize))
                    .map(|&w| memo[w as usize].unwrap() + 1)
                    .max()
                    .unwrap_or(0);
                memo[v as usize] = Some(best);
            } else {
                stack.push((v, true));
                for &w in &adj[v as usize] {
                    if !limit.contains(w as usize) && memo[w as usize].is_none() {
                        stack.push((w, false));
                    }
                }
            }
        }
        memo[start as usize].unwrap()
    };
    let mut tt = 0;
    for &z in &adj[root as usize] {
        if !limit.contains(z as usize) {
            tt = tt.max(longest(z, &mut memo) + 1);
        }
    }
    tt
}

/// Shortest path from `from` to `to`; with `nonempty` the path has at least
/// one edge, so `from == to` asks for a cycle.
fn bfs_path(adj: &[Vec<u32>], from: u32, to: u32, nonempty: bool) -> Option<Vec<u32>> {
    if !nonempty && from == to {
        return Some(vec![from]);
    }
    let mut prev = vec![u32::MAX; adj.len()];
    let mut seen = FixedBitSet::with_capacity(adj.len());
    let mut queue = VecDeque::new();
    if nonempty {
        for &w in &adj[from as usize] {
            if !seen.put(w as usize) {
                prev[w as usize] = from;
                queue.push_back(w);
            }
        }
    } else {
        seen.insert(from as usize);
        queue.push_back(from);
    }
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![to];
            let mut cur = to;
            loop {
                let p = prev[cur as usize];
                path.push(p);
                if p == from {
                    break;
                }
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &w in &adj[v as usize] {
            if !seen.put(w as usize) {
                prev[w as usize] = v;
                queue.push_back(w);
            }
        }
    }
    None
}

/// Path ⋄ → c, a cycle through c, and a path c → witness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lasso {
    pub stem: Vec<u32>,
    pub cycle: Vec<u32>,
    pub tail: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorReport {
    pub states: usize,
    pub transitions: usize,
    pub limit: FixedBitSet,
    pub transient_period: usize,
    pub detectable: bool,
    /// A two-member limit state and a lasso reaching it, when not detectable.
    pub witness: Option<(u32, Lasso)>,
}

impl DetectorNfa {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.edges.len()
    }

    fn plain_edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<(u32, u32)> = self.edges.iter().map(|&(a, _, b)| (a, b)).collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn limit_points(&self) -> FixedBitSet {
        limit_points_graph(self.num_states(), &self.plain_edges())
    }

    pub fn transient_period(&self, limit: &FixedBitSet) -> usize {
        transient_period_graph(self.num_states(), &self.plain_edges(), DIAMOND, limit)
    }

    fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_states()];
        for (a, b) in self.plain_edges() {
            adj[a as usize].push(b);
        }
        adj
    }

    fn lasso_to(&self, target: u32) -> Option<Lasso> {
        let adj = self.adjacency();
        for c in 0..self.num_states() as u32 {
            let Some(cycle) = bfs_path(&adj, c, c, true) else { continue };
            if let Some(tail) = bfs_path(&adj, c, target, false) {
                return Some(Lasso { stem: bfs_path(&adj, DIAMOND, c, false)?, cycle, tail });
            }
        }
        None
    }

    /// Detectable iff every limit point is a singleton.
    pub fn is_detectable(&self, limit: &FixedBitSet) -> (bool, Option<(u32, Lasso)>) {
        match limit.ones().find(|&q| self.states[q].len() == 2) {
            None => (true, None),
            Some(q) => (false, self.lasso_to(q as u32).map(|l| (q as u32, l))),
        }
    }

    pub fn analyze(&self) -> DetectorReport {
        let limit = self.limit_points();
        let transient_period = self.transient_period(&limit);
        let (detectable, witness) = self.is_detectable(&limit);
        DetectorReport {
            states: self.num_states(),
            transitions: self.num_transitions(),
            limit,
            transient_period,
            detectable,
            witness,
        }
    }

    /// Lines `n id size members...`, `e src u y dst` (u is `phi` for the
    /// initial label), `limit id...` and `Tt k`.
    pub fn to_text(&self, report: &DetectorReport) -> String {
        let mut s = String::new();
        for (i, m) in self.states.iter().enumerate() {
            let _ = write!(s, "n {i} {}", m.len());
            for x in m {
                let _ = write!(s, " {x}");
            }
            s.push('\n');
        }
        for (a, l, b) in &self.edges {
            match l.input {
                None => {
                    let _ = writeln!(s, "e {a} phi {} {b}", l.output);
                }
                Some(u) => {
                    let _ = writeln!(s, "e {a} {u} {} {b}", l.output);
                }
            }
        }
        s.push_str("limit");
        for q in report.limit.ones() {
            let _ = write!(s, " {q}");
        }
        s.push('\n');
        let _ = writeln!(s, "Tt {}", report.transient_period);
        s
    }
}

/// Exact knowledge tracking with a latched detection flag.
#[derive(Debug, Clone, Default)]
pub struct DetectorRuntime {
    pub knowledge: Option<StateSet>,
    pub detected: bool,
    pub last_input: Option<u32>,
}

impl DetectorRuntime {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feed the input applied since the previous call (`None` on the first
    /// call) and the new output. Returns the detected state, or `None` for p.
    pub fn step(&mut self, sys: &FiniteSystem, u: Option<u32>, y: u32) -> Result<Option<u32>> {
        if y as usize >= sys.num_outputs() {
            return Err(Error::InvalidId { kind: "output", id: y as usize, len: sys.num_outputs() });
        }
        let mut k = match (&self.knowledge, u) {
            (None, None) => sys.full_set(),
            (Some(k), Some(u)) => {
                if u as usize >= sys.num_inputs() {
                    return Err(Error::InvalidId { kind: "input", id: u as usize, len: sys.num_inputs() });
                }
                sys.post_set(k, u)
            }
            (None, Some(_)) => return Err(Error::Precondition("the first detector step takes no input".into())),
            (Some(_), None) => return Err(Error::Precondition("only the first detector step omits the input".into())),
        };
        sys.filter_output(&mut k, y);
        if k.is_clear() {
            return Err(Error::Inconsistent(format!("output {y} is impossible under the model")));
        }
        let out = (k.count_ones(..) == 1).then(|| k.ones().next().unwrap() as u32);
        self.detected |= out.is_some();
        self.knowledge = Some(k);
        self.last_input = u;
        Ok(out)
    }
}

/// Observation id of the detector's "not yet detected" output p in the
/// wrapped controller.
pub fn pending_observation(sys: &FiniteSystem) -> u32 {
    sys.num_states() as u32
}

/// Input id of κ (no decision yet) in the wrapped controller.
pub fn kappa_input(sys: &FiniteSystem) -> u32 {
    sys.num_inputs() as u32
}

/// C_m: emit κ while observing p; on the first detected state switch for
/// good to `cq` (started at its initial memory). Memory 0 is the waiting
/// mode, memory 1 + m is `cq` at memory m.
pub fn wrap_controller_cm(cq: &Controller) -> Controller {
    let n_obs = cq.num_observations();
    let kappa = cq.num_inputs() as u32;
    let p = n_obs as u32;
    let mut c = Controller::new(cq.num_memory() + 1, n_obs + 1, 0, cq.num_inputs() + 1);
    c.set(0, p, vec![kappa]);
    for x in 0..n_obs as u32 {
        let m0 = cq.initial_memory();
        if cq.decide(m0, x).is_some() {
            c.set(0, x, cq.allowed(m0, x).to_vec());
            c.set_update(0, x, 1 + cq.next_memory(m0, x));
        }
        for m in 0..cq.num_memory() as u32 {
            if cq.decide(m, x).is_some() {
                c.set(1 + m, x, cq.allowed(m, x).to_vec());
            }
            c.set_update(1 + m, x, 1 + cq.next_memory(m, x));
        }
    }
    c.domain = cq.domain.clone();
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefixMode {
    /// Every run stays in the domain at every step.
    Safe,
    /// Every run ends in the domain.
    Reach,
}

/// Open-loop input word applied while the state is not yet detected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixController {
    pub word: Vec<u32>,
}

pub const DEFAULT_MAX_PREFIX: usize = 6;

/// First word of `len` inputs, in the order induced by `candidates` (first
/// position varying slowest), under which every abstract run from `start`
/// stays non-blocking and meets `mode` with respect to `domain`.
pub fn search_prefix(
    sys: &FiniteSystem,
    len: usize,
    domain: &StateSet,
    mode: PrefixMode,
    start: &StateSet,
    candidates: &[u32],
    max_len: usize,
) -> Result<PrefixController> {
    if len > max_len {
        return Err(Error::Config(format!("prefix length {len} exceeds the bound {max_len}")));
    }
    if let Some(&u) = candidates.iter().find(|&&u| u as usize >= sys.num_inputs()) {
        return Err(Error::InvalidId { kind: "input", id: u as usize, len: sys.num_inputs() });
    }
    let inside = |s: &StateSet| s.ones().all(|x| domain.contains(x));
    if start.is_clear() {
        return Err(Error::Precondition("prefix start set is empty".into()));
    }
    if mode == PrefixMode::Safe && !inside(start) {
        return Err(Error::NotFound("start set is not inside the controller domain".into()));
    }
    fn dfs(
        sys: &FiniteSystem,
        set: &StateSet,
        left: usize,
        word: &mut Vec<u32>,
        ok_step: &dyn Fn(&StateSet, bool) -> bool,
        candidates: &[u32],
    ) -> bool {
        if left == 0 {
            return ok_step(set, true);
        }
        for &u in candidates {
            if set.ones().any(|x| sys.succ(x as u32, u).is_empty()) {
                continue;
            }
            let next = sys.post_set(set, u);
            if !ok_step(&next, left == 1) {
                continue;
            }
            word.push(u);
            if dfs(sys, &next, left - 1, word, ok_step, candidates) {
                return true;
            }
            word.pop();
        }
        false
    }
    let ok_step = |s: &StateSet, last: bool| match mode {
        PrefixMode::Safe => inside(s),
        PrefixMode::Reach => !last || inside(s),
    };
    let mut word = Vec::new();
    if dfs(sys, start, len, &mut word, &ok_step, candidates) {
        Ok(PrefixController { word })
    } else {
        Err(Error::NotFound(format!("no input word of length {len} meets the prefix requirement")))
    }
}
