use fixedbitset::FixedBitSet;

use crate::system::{FiniteSystem, StateSet};

/// Maximal controlled-invariant subset of `safe`: every kept state has an
/// input whose successors are nonempty and all kept.
pub fn safe_fixpoint(sys: &FiniteSystem, safe: &StateSet) -> StateSet {
    let n = sys.num_states();
    let m = sys.num_inputs();
    let mut w = safe.clone();
    w.grow(n);
    let mut bad = vec![0u32; n * m];
    let mut good = vec![0u32; n];
    let mut queue = Vec::new();
    for x in 0..n {
        if !w.contains(x) {
            continue;
        }
        for u in 0..m {
            let p = sys.succ(x as u32, u as u32);
            let b = p.iter().filter(|&&v| !w.contains(v as usize)).count() as u32;
            bad[x * m + u] = if p.is_empty() { u32::MAX } else { b };
            if !p.is_empty() && b == 0 {
                good[x] += 1;
            }
        }
        if good[x] == 0 {
            queue.push(x);
        }
    }
    while let Some(x) = queue.pop() {
        if !w.contains(x) {
            continue;
        }
        w.set(x, false);
        for &(p, u) in sys.predecessors(x as u32) {
            let (p, u) = (p as usize, u as usize);
            if !w.contains(p) {
                continue;
            }
            let k = p * m + u;
            if bad[k] == 0 {
                good[p] -= 1;
                if good[p] == 0 {
                    queue.push(p);
                }
            }
            bad[k] = bad[k].saturating_add(1);
        }
    }
    w
}

#[derive(Debug, Clone)]
pub struct Attractor {
    pub set: StateSet,
    /// Attractor level per state; `u32::MAX` outside the set.
    pub rank: Vec<u32>,
}

/// Least fixed point of `target ∪ CPre(·)`, optionally restricted to
/// `within`. Level k + 1 holds the states first forced into levels ≤ k.
pub fn attractor(sys: &FiniteSystem, target: &StateSet, within: Option<&StateSet>) -> Attractor {
    let n = sys.num_states();
    let m = sys.num_inputs();
    let allowed = |x: usize| within.map_or(true, |w| w.contains(x));
    let mut count: Vec<u32> = (0..n * m)
        .map(|k| sys.succ((k / m) as u32, (k % m) as u32).len() as u32)
        .collect();
    let mut set = FixedBitSet::with_capacity(n);
    let mut rank = vec![u32::MAX; n];
    let mut layer: Vec<usize> = target.ones().filter(|&x| x < n && allowed(x)).collect();
    for &x in &layer {
        set.insert(x);
        rank[x] = 0;
    }
    let mut level = 0u32;
    while !layer.is_empty() {
        let mut next = Vec::new();
        for &y in &layer {
            for &(p, u) in sys.predecessors(y as u32) {
                let k = p as usize * m + u as usize;
                count[k] -= 1;
                if count[k] == 0 && !set.contains(p as usize) && allowed(p as usize) {
                    set.insert(p as usize);
                    rank[p as usize] = level + 1;
                    next.push(p as usize);
                }
            }
        }
        level += 1;
        layer = next;
    }
    Attractor { set, rank }
}

/// Büchi game: the states from which the controller can visit `acc`
/// infinitely often, plus per-state permissive input lists (empty outside
/// the winning region).
pub fn buchi(sys: &FiniteSystem, acc: &StateSet) -> (StateSet, Vec<Vec<u32>>) {
    let n = sys.num_states();
    let m = sys.num_inputs() as u32;
    let mut z = sys.full_set();
    let inside = |x: usize, w: &StateSet, u: u32| {
        let p = sys.succ(x as u32, u);
        !p.is_empty() && p.iter().all(|&v| w.contains(v as usize))
    };
    loop {
        let mut b = sys.empty_set();
        for x in acc.ones() {
            if z.contains(x) && (0..m).any(|u| inside(x, &z, u)) {
                b.insert(x);
            }
        }
        let att = attractor(sys, &b, Some(&z));
        if att.set == z {
            let mut strat = vec![Vec::new(); n];
            for x in z.ones() {
                let r = att.rank[x];
                strat[x] = (0..m)
                    .filter(|&u| {
                        if r == 0 {
                            inside(x, &z, u)
                        } else {
                            let p = sys.succ(x as u32, u);
                            !p.is_empty() && p.iter().all(|&v| att.rank[v as usize] < r)
                        }
                    })
                    .collect();
            }
            return (z, strat);
        }
        z = att.set;
    }
}
