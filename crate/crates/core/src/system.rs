//! Finite transition systems with dense integer ids.
//!
//! Successor sets are stored per (state, input) pair in a compressed row
//! layout; the reverse index and output preimages are built on first use.

use std::fmt::Write as _;
use std::sync::OnceLock;

use fixedbitset::FixedBitSet;

use crate::error::{Error, Result};

pub type StateSet = FixedBitSet;

#[derive(Debug)]
pub struct FiniteSystem {
    n_states: usize,
    n_inputs: usize,
    n_outputs: usize,
    initial: StateSet,
    output_map: Vec<u32>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    preds: OnceLock<Predecessors>,
    preimages: OnceLock<Vec<Vec<u32>>>,
}

#[derive(Debug)]
struct Predecessors {
    offsets: Vec<usize>,
    entries: Vec<(u32, u32)>,
}

impl Clone for FiniteSystem {
    fn clone(&self) -> Self {
        FiniteSystem {
            n_states: self.n_states,
            n_inputs: self.n_inputs,
            n_outputs: self.n_outputs,
            initial: self.initial.clone(),
            output_map: self.output_map.clone(),
            offsets: self.offsets.clone(),
            targets: self.targets.clone(),
            preds: OnceLock::new(),
            preimages: OnceLock::new(),
        }
    }
}

impl PartialEq for FiniteSystem {
    fn eq(&self, other: &Self) -> bool {
        self.n_states == other.n_states
            && self.n_inputs == other.n_inputs
            && self.n_outputs == other.n_outputs
            && self.initial == other.initial
            && self.output_map == other.output_map
            && self.offsets == other.offsets
            && self.targets == other.targets
    }
}

impl Eq for FiniteSystem {}

/// Collects transitions in any order; `build` sorts and deduplicates.
#[derive(Debug, Clone)]
pub struct SystemBuilder {
    n_states: usize,
    n_inputs: usize,
    n_outputs: usize,
    initial: Vec<u32>,
    output_map: Vec<u32>,
    triples: Vec<(u32, u32, u32)>,
}

impl SystemBuilder {
    pub fn new(n_states: usize, n_inputs: usize, n_outputs: usize) -> Self {
        SystemBuilder {
            n_states,
            n_inputs,
            n_outputs,
            initial: Vec::new(),
            output_map: vec![0; n_states],
            triples: Vec::new(),
        }
    }

    pub fn initial(mut self, states: impl IntoIterator<Item = u32>) -> Self {
        self.initial.extend(states);
        self
    }

    pub fn all_initial(mut self) -> Self {
        self.initial = (0..self.n_states as u32).collect();
        self
    }

    pub fn output_map(mut self, map: Vec<u32>) -> Self {
        self.output_map = map;
        self
    }

    pub fn set_output(&mut self, x: u32, y: u32) {
        self.output_map[x as usize] = y;
    }

    pub fn add(&mut self, x: u32, u: u32, x2: u32) {
        self.triples.push((x, u, x2));
    }

    pub fn transition(mut self, x: u32, u: u32, x2: u32) -> Self {
        self.add(x, u, x2);
        self
    }

    pub fn build(mut self) -> Result<FiniteSystem> {
        if self.n_states == 0 || self.n_inputs == 0 || self.n_outputs == 0 {
            return Err(Error::Domain("state, input and output sets must be nonempty".into()));
        }
        if self.initial.is_empty() {
            return Err(Error::Domain("initial state set must be nonempty".into()));
        }
        if self.output_map.len() != self.n_states {
            return Err(Error::Domain(format!(
                "output map has {} entries for {} states",
                self.output_map.len(),
                self.n_states
            )));
        }
        for &y in &self.output_map {
            check_id("output", y as usize, self.n_outputs)?;
        }
        let mut initial = FixedBitSet::with_capacity(self.n_states);
        for &x in &self.initial {
            check_id("state", x as usize, self.n_states)?;
            initial.insert(x as usize);
        }
        for &(x, u, x2) in &self.triples {
            check_id("state", x as usize, self.n_states)?;
            check_id("input", u as usize, self.n_inputs)?;
            check_id("state", x2 as usize, self.n_states)?;
        }
        self.triples.sort_unstable();
        self.triples.dedup();
        let rows = self.n_states * self.n_inputs;
        let mut offsets = vec![0usize; rows + 1];
        for &(x, u, _) in &self.triples {
            offsets[x as usize * self.n_inputs + u as usize + 1] += 1;
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        let targets = self.triples.iter().map(|t| t.2).collect();
        Ok(FiniteSystem {
            n_states: self.n_states,
            n_inputs: self.n_inputs,
            n_outputs: self.n_outputs,
            initial,
            output_map: self.output_map,
            offsets,
            targets,
            preds: OnceLock::new(),
            preimages: OnceLock::new(),
        })
    }
}

fn check_id(kind: &'static str, id: usize, len: usize) -> Result<()> {
    if id < len {
        Ok(())
    } else {
        Err(Error::InvalidId { kind, id, len })
    }
}

impl FiniteSystem {
    /// Assemble directly from sorted, deduplicated successor rows indexed by
    /// `x * n_inputs + u`.
    pub fn from_rows(
        n_states: usize,
        n_inputs: usize,
        n_outputs: usize,
        initial: StateSet,
        output_map: Vec<u32>,
        rows: Vec<Vec<u32>>,
    ) -> Result<FiniteSystem> {
        if n_states == 0 || n_inputs == 0 || n_outputs == 0 {
            return Err(Error::Domain("state, input and output sets must be nonempty".into()));
        }
        if rows.len() != n_states * n_inputs || output_map.len() != n_states {
            return Err(Error::Domain("row or output map size mismatch".into()));
        }
        if initial.len() != n_states || initial.count_ones(..) == 0 {
            return Err(Error::Domain("initial state set must be a nonempty subset".into()));
        }
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0);
        let total: usize = rows.iter().map(Vec::len).sum();
        let mut targets = Vec::with_capacity(total);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0] < w[1]));
            for &x in &row {
                check_id("state", x as usize, n_states)?;
            }
            targets.extend(row);
            offsets.push(targets.len());
        }
        for &y in &output_map {
            check_id("output", y as usize, n_outputs)?;
        }
        Ok(FiniteSystem {
            n_states,
            n_inputs,
            n_outputs,
            initial,
            output_map,
            offsets,
            targets,
            preds: OnceLock::new(),
            preimages: OnceLock::new(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.n_states
    }

    pub fn num_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn num_transitions(&self) -> usize {
        self.targets.len()
    }

    pub fn initial_states(&self) -> &StateSet {
        &self.initial
    }

    pub fn output_map(&self) -> &[u32] {
        &self.output_map
    }

    pub fn empty_set(&self) -> StateSet {
        FixedBitSet::with_capacity(self.n_states)
    }

    pub fn full_set(&self) -> StateSet {
        let mut s = self.empty_set();
        s.insert_range(..);
        s
    }

    pub fn output(&self, x: u32) -> Result<u32> {
        check_id("state", x as usize, self.n_states)?;
        Ok(self.output_map[x as usize])
    }

    /// Successors without id validation; callers guarantee valid ids.
    #[inline]
    pub fn succ(&self, x: u32, u: u32) -> &[u32] {
        let r = x as usize * self.n_inputs + u as usize;
        &self.targets[self.offsets[r]..self.offsets[r + 1]]
    }

    pub fn post(&self, x: u32, u: u32) -> Result<&[u32]> {
        check_id("state", x as usize, self.n_states)?;
        check_id("input", u as usize, self.n_inputs)?;
        Ok(self.succ(x, u))
    }

    pub fn admissible_inputs(&self, x: u32) -> Result<Vec<u32>> {
        check_id("state", x as usize, self.n_states)?;
        Ok((0..self.n_inputs as u32)
            .filter(|&u| !self.succ(x, u).is_empty())
            .collect())
    }

    #[inline]
    pub fn is_admissible(&self, x: u32, u: u32) -> bool {
        !self.succ(x, u).is_empty()
    }

    /// H⁻¹(y) as a sorted list.
    pub fn preimage(&self, y: u32) -> &[u32] {
        let pre = self.preimages.get_or_init(|| {
            let mut pre = vec![Vec::new(); self.n_outputs];
            for (x, &y) in self.output_map.iter().enumerate() {
                pre[y as usize].push(x as u32);
            }
            pre
        });
        pre.get(y as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn preimage_set(&self, y: u32) -> StateSet {
        let mut s = self.empty_set();
        for &x in self.preimage(y) {
            s.insert(x as usize);
        }
        s
    }

    pub fn output_admissible_inputs(&self, y: u32) -> Result<Vec<u32>> {
        check_id("output", y as usize, self.n_outputs)?;
        let pre = self.preimage(y);
        if pre.is_empty() {
            return Err(Error::Domain(format!("output {y} has no preimage state")));
        }
        Ok((0..self.n_inputs as u32)
            .filter(|&u| pre.iter().all(|&x| self.is_admissible(x, u)))
            .collect())
    }

    pub fn output_post(&self, y: u32, u: u32) -> Result<Vec<u32>> {
        if !self.output_admissible_inputs(y)?.contains(&u) {
            return Err(Error::Precondition(format!(
                "input {u} is not admissible for output {y}"
            )));
        }
        let mut ys: Vec<u32> = self
            .preimage(y)
            .iter()
            .flat_map(|&x| self.succ(x, u).iter().map(|&x2| self.output_map[x2 as usize]))
            .collect();
        ys.sort_unstable();
        ys.dedup();
        Ok(ys)
    }

    /// Union of u-successors of a state set.
    pub fn post_set(&self, s: &StateSet, u: u32) -> StateSet {
        let mut out = self.empty_set();
        for x in s.ones() {
            for &x2 in self.succ(x as u32, u) {
                out.insert(x2 as usize);
            }
        }
        out
    }

    pub fn filter_output(&self, s: &mut StateSet, y: u32) {
        let keep: Vec<usize> = s.ones().filter(|&x| self.output_map[x] != y).collect();
        for x in keep {
            s.set(x, false);
        }
    }

    /// States reachable from `from` along `alpha` whose visited outputs match
    /// `beta` element-wise.
    pub fn alpha_beta_post(&self, from: &StateSet, alpha: &[u32], beta: &[u32]) -> Result<StateSet> {
        if beta.len() != alpha.len() + 1 {
            return Err(Error::Domain(format!(
                "output word length {} must be input word length {} plus one",
                beta.len(),
                alpha.len()
            )));
        }
        for &u in alpha {
            check_id("input", u as usize, self.n_inputs)?;
        }
        let mut cur = from.clone();
        cur.grow(self.n_states);
        self.filter_output(&mut cur, beta[0]);
        for (i, &u) in alpha.iter().enumerate() {
            cur = self.post_set(&cur, u);
            self.filter_output(&mut cur, beta[i + 1]);
        }
        Ok(cur)
    }

    /// Reverse index: all (x, u) with x' ∈ post(x, u).
    pub fn predecessors(&self, x2: u32) -> &[(u32, u32)] {
        let p = self.preds.get_or_init(|| {
            let mut counts = vec![0usize; self.n_states + 1];
            for &t in &self.targets {
                counts[t as usize + 1] += 1;
            }
            for i in 0..self.n_states {
                counts[i + 1] += counts[i];
            }
            let mut fill = counts.clone();
            let mut entries = vec![(0u32, 0u32); self.targets.len()];
            for x in 0..self.n_states {
                for u in 0..self.n_inputs {
                    for &t in self.succ(x as u32, u as u32) {
                        entries[fill[t as usize]] = (x as u32, u as u32);
                        fill[t as usize] += 1;
                    }
                }
            }
            Predecessors {
                offsets: counts,
                entries,
            }
        });
        let i = x2 as usize;
        &p.entries[p.offsets[i]..p.offsets[i + 1]]
    }

    pub fn transitions(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.n_states as u32).flat_map(move |x| {
            (0..self.n_inputs as u32)
                .flat_map(move |u| self.succ(x, u).iter().map(move |&x2| (x, u, x2)))
        })
    }

    /// True when every (state, input) pair has a successor.
    pub fn is_total(&self) -> bool {
        (0..self.n_states as u32)
            .all(|x| (0..self.n_inputs as u32).all(|u| self.is_admissible(x, u)))
    }

    /// Flat text format: header lines `states`, `inputs`, `outputs`,
    /// `initial`, one `outmap x y` per state, one `t x u x'` per transition.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 + self.targets.len() * 16);
        let _ = writeln!(s, "states {}", self.n_states);
        let _ = writeln!(s, "inputs {}", self.n_inputs);
        let _ = writeln!(s, "outputs {}", self.n_outputs);
        s.push_str("initial");
        for x in self.initial.ones() {
            let _ = write!(s, " {x}");
        }
        s.push('\n');
        for (x, y) in self.output_map.iter().enumerate() {
            let _ = writeln!(s, "outmap {x} {y}");
        }
        for (x, u, x2) in self.transitions() {
            let _ = writeln!(s, "t {x} {u} {x2}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<FiniteSystem> {
        let mut n = [None::<usize>; 3];
        let mut builder: Option<SystemBuilder> = None;
        let mut initial = Vec::new();
        let mut outmap_seen = 0usize;
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            let nums: Vec<usize> = it
                .map(|t| t.parse::<usize>().map_err(|_| Error::parse(lineno, format!("bad integer `{t}`"))))
                .collect::<Result<_>>()?;
            let idx = match key {
                "states" => Some(0),
                "inputs" => Some(1),
                "outputs" => Some(2),
                _ => None,
            };
            if let Some(k) = idx {
                if nums.len() != 1 {
                    return Err(Error::parse(lineno, format!("`{key}` takes one count")));
                }
                n[k] = Some(nums[0]);
                continue;
            }
            let b = match (&mut builder, n) {
                (Some(b), _) => b,
                (None, [Some(a), Some(b), Some(c)]) => builder.insert(SystemBuilder::new(a, b, c)),
                _ => return Err(Error::parse(lineno, "header must precede body lines")),
            };
            match (key, nums.as_slice()) {
                ("initial", xs) => initial.extend(xs.iter().map(|&x| x as u32)),
                ("outmap", &[x, y]) => {
                    if x >= b.n_states {
                        return Err(Error::parse(lineno, format!("state {x} out of range")));
                    }
                    b.set_output(x as u32, y as u32);
                    outmap_seen += 1;
                }
                ("t", &[x, u, x2]) => b.add(x as u32, u as u32, x2 as u32),
                _ => return Err(Error::parse(lineno, format!("unrecognised line `{line}`"))),
            }
        }
        let b = builder.ok_or_else(|| Error::parse(0, "missing header"))?;
        if outmap_seen != b.n_states {
            return Err(Error::parse(0, format!("{outmap_seen} outmap lines for {} states", b.n_states)));
        }
        b.initial(initial).build()
    }
}

pub fn set_from(n: usize, xs: impl IntoIterator<Item = u32>) -> StateSet {
    let mut s = FixedBitSet::with_capacity(n);
    for x in xs {
        s.insert(x as usize);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Internal,
    External,
}

/// A finite run prefix: `points` holds states (internal) or outputs
/// (external), `inputs` the inputs between them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPrefix {
    pub kind: RunKind,
    pub points: Vec<u32>,
    pub inputs: Vec<u32>,
}

impl RunPrefix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Internal: starts in an initial state and follows transitions.
    /// External: the output projection of some internal run.
    pub fn is_run_of(&self, sys: &FiniteSystem) -> bool {
        if self.points.len() != self.inputs.len() + 1 {
            return false;
        }
        match self.kind {
            RunKind::Internal => {
                let x0 = self.points[0] as usize;
                x0 < sys.num_states()
                    && sys.initial_states().contains(x0)
                    && self.points.windows(2).zip(&self.inputs).all(|(w, &u)| {
                        (u as usize) < sys.num_inputs() && sys.succ(w[0], u).contains(&w[1])
                    })
            }
            RunKind::External => {
                if self.inputs.iter().any(|&u| u as usize >= sys.num_inputs()) {
                    return false;
                }
                sys.alpha_beta_post(sys.initial_states(), &self.inputs, &self.points)
                    .map(|s| s.count_ones(..) > 0)
                    .unwrap_or(false)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteSystem {
        SystemBuilder::new(2, 1, 2)
            .initial([0])
            .output_map(vec![0, 1])
            .transition(0, 0, 1)
            .build()
            .unwrap()
    }

    #[test]
    fn post_singleton_and_empty() {
        let s = two_state();
        assert_eq!(s.post(0, 0).unwrap(), &[1]);
        assert!(s.post(1, 0).unwrap().is_empty());
        assert!(matches!(s.post(2, 0), Err(Error::InvalidId { .. })));
    }

    #[test]
    fn admissible_and_output_admissible() {
        let s = SystemBuilder::new(2, 3, 1)
            .all_initial()
            .transition(0, 0, 0)
            .transition(0, 1, 1)
            .transition(1, 1, 0)
            .transition(1, 2, 1)
            .build()
            .unwrap();
        assert_eq!(s.admissible_inputs(0).unwrap(), vec![0, 1]);
        assert_eq!(s.admissible_inputs(1).unwrap(), vec![1, 2]);
        assert_eq!(s.output_admissible_inputs(0).unwrap(), vec![1]);
    }

    #[test]
    fn output_post_two_preimages() {
        let s = SystemBuilder::new(4, 1, 3)
            .all_initial()
            .output_map(vec![0, 0, 1, 2])
            .transition(0, 0, 2)
            .transition(1, 0, 3)
            .transition(2, 0, 2)
            .transition(3, 0, 3)
            .build()
            .unwrap();
        assert_eq!(s.output_post(0, 0).unwrap(), vec![1, 2]);
        assert_eq!(s.output_post(1, 0).unwrap(), vec![1]);
    }

    #[test]
    fn empty_preimage_is_domain_error() {
        let s = two_state();
        let s2 = SystemBuilder::new(1, 1, 2).all_initial().build().unwrap();
        assert!(s.output_admissible_inputs(1).is_ok());
        assert!(matches!(s2.output_admissible_inputs(1), Err(Error::Domain(_))));
    }

    #[test]
    fn alpha_beta_zero_step() {
        let s = two_state();
        let all = s.full_set();
        let r = s.alpha_beta_post(&all, &[], &[1]).unwrap();
        assert_eq!(r.ones().collect::<Vec<_>>(), vec![1]);
        assert!(s.alpha_beta_post(&all, &[0], &[1, 1]).unwrap().is_clear());
        assert!(matches!(s.alpha_beta_post(&all, &[0], &[0]), Err(Error::Domain(_))));
    }

    #[test]
    fn predecessors_match_forward() {
        let s = SystemBuilder::new(3, 2, 1)
            .all_initial()
            .transition(0, 0, 1)
            .transition(0, 1, 1)
            .transition(2, 1, 1)
            .transition(1, 0, 0)
            .build()
            .unwrap();
        assert_eq!(s.predecessors(1), &[(0, 0), (0, 1), (2, 1)]);
        assert_eq!(s.predecessors(0), &[(1, 0)]);
        assert!(s.predecessors(2).is_empty());
    }

    #[test]
    fn text_round_trip() {
        let s = SystemBuilder::new(3, 2, 2)
            .initial([0, 2])
            .output_map(vec![0, 1, 1])
            .transition(0, 0, 1)
            .transition(1, 1, 2)
            .transition(2, 1, 0)
            .build()
            .unwrap();
        let t = s.to_text();
        assert_eq!(FiniteSystem::from_text(&t).unwrap(), s);
        assert!(t.starts_with("states 3\ninputs 2\noutputs 2\ninitial 0 2\n"));
    }

    #[test]
    fn text_errors_carry_line() {
        let err = FiniteSystem::from_text("states 1\ninputs 1\noutputs 1\ninitial 0\noutmap 0 0\nq 1\n")
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }));
    }

    #[test]
    fn run_prefix_validation() {
        let s = two_state();
        let r = RunPrefix { kind: RunKind::Internal, points: vec![0, 1], inputs: vec![0] };
        assert!(r.is_run_of(&s));
        let r = RunPrefix { kind: RunKind::Internal, points: vec![1, 0], inputs: vec![0] };
        assert!(!r.is_run_of(&s));
        let r = RunPrefix { kind: RunKind::External, points: vec![0, 1], inputs: vec![0] };
        assert!(r.is_run_of(&s));
    }
}
