//! Brute-force checkers for feedback refinement relations (state level)
//! and output-feedback refinement relations (output level).

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::system::FiniteSystem;

const GUARD: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrrReport {
    /// A state of S1 related to nothing.
    pub not_strict: Option<u32>,
    /// (x1, x2, u): u admissible at x2 but not at x1.
    pub cond_i: Option<(u32, u32, u32)>,
    /// (x1, x2, u, x2'): x2' ∈ Q(post1(x1, u)) but x2' ∉ post2(x2, u).
    pub cond_ii: Option<(u32, u32, u32, u32)>,
    /// (x1, x2): x1 initial but x2 not.
    pub cond_iii: Option<(u32, u32)>,
}

impl FrrReport {
    pub fn passed(&self) -> bool {
        self.not_strict.is_none() && self.cond_i.is_none() && self.cond_ii.is_none() && self.cond_iii.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfrrReport {
    pub frr: FrrReport,
    /// (y1, y2, u): u output-admissible at y2 but not at y1.
    pub cond_i: Option<(u32, u32, u32)>,
    /// (x1, x2) ∈ Q whose output pair is missing from Z.
    pub cond_ii: Option<(u32, u32)>,
    /// (y1, y2) ∈ Z with no related state pair behind it.
    pub cond_iii: Option<(u32, u32)>,
}

impl OfrrReport {
    pub fn passed(&self) -> bool {
        self.frr.passed() && self.cond_i.is_none() && self.cond_ii.is_none() && self.cond_iii.is_none()
    }
}

fn guard(s1: &FiniteSystem, s2: &FiniteSystem) -> Result<()> {
    if s1.num_states().saturating_mul(s2.num_states()) > GUARD {
        return Err(Error::Precondition(format!(
            "relation check limited to |X1|·|X2| ≤ {GUARD}"
        )));
    }
    if s2.num_inputs() > s1.num_inputs() {
        return Err(Error::Precondition("abstract inputs must be a subset of concrete inputs".into()));
    }
    Ok(())
}

pub fn check_frr(s1: &FiniteSystem, s2: &FiniteSystem, q: &[(u32, u32)]) -> Result<FrrReport> {
    guard(s1, s2)?;
    for &(a, b) in q {
        if a as usize >= s1.num_states() || b as usize >= s2.num_states() {
            return Err(Error::InvalidId { kind: "relation pair", id: a.max(b) as usize, len: s1.num_states().max(s2.num_states()) });
        }
    }
    let mut image: Vec<Vec<u32>> = vec![Vec::new(); s1.num_states()];
    for &(a, b) in q {
        image[a as usize].push(b);
    }
    let mut rep = FrrReport {
        not_strict: image.iter().position(Vec::is_empty).map(|x| x as u32),
        cond_i: None,
        cond_ii: None,
        cond_iii: None,
    };
    for &(x1, x2) in q {
        for u in 0..s2.num_inputs() as u32 {
            if !s2.is_admissible(x2, u) {
                continue;
            }
            if !s1.is_admissible(x1, u) && rep.cond_i.is_none() {
                rep.cond_i = Some((x1, x2, u));
            }
            if rep.cond_ii.is_none() {
                let post2 = s2.succ(x2, u);
                'outer: for &x1n in s1.succ(x1, u) {
                    for &x2n in &image[x1n as usize] {
                        if post2.binary_search(&x2n).is_err() {
                            rep.cond_ii = Some((x1, x2, u, x2n));
                            break 'outer;
                        }
                    }
                }
            }
        }
        if rep.cond_iii.is_none()
            && s1.initial_states().contains(x1 as usize)
            && !s2.initial_states().contains(x2 as usize)
        {
            rep.cond_iii = Some((x1, x2));
        }
    }
    Ok(rep)
}

/// Output-admissible inputs of `y`, or all inputs when `y` has no preimage.
fn ubar(s: &FiniteSystem, y: u32, n_inputs: usize) -> Vec<u32> {
    if s.preimage(y).is_empty() {
        return (0..n_inputs as u32).collect();
    }
    s.output_admissible_inputs(y).unwrap_or_default()
}

pub fn check_ofrr(
    s1: &FiniteSystem,
    s2: &FiniteSystem,
    q: &[(u32, u32)],
    z: &[(u32, u32)],
) -> Result<OfrrReport> {
    let frr = check_frr(s1, s2, q)?;
    let zset: BTreeSet<(u32, u32)> = z.iter().copied().collect();
    let mut rep = OfrrReport {
        frr,
        cond_i: None,
        cond_ii: None,
        cond_iii: None,
    };
    for &(y1, y2) in z {
        if y1 as usize >= s1.num_outputs() || y2 as usize >= s2.num_outputs() {
            return Err(Error::InvalidId { kind: "output pair", id: y1.max(y2) as usize, len: s1.num_outputs().max(s2.num_outputs()) });
        }
        let u1 = ubar(s1, y1, s1.num_inputs());
        if let Some(&u) = ubar(s2, y2, s2.num_inputs()).iter().find(|u| !u1.contains(u)) {
            rep.cond_i = Some((y1, y2, u));
            break;
        }
    }
    rep.cond_ii = q
        .iter()
        .copied()
        .find(|&(x1, x2)| !zset.contains(&(s1.output_map()[x1 as usize], s2.output_map()[x2 as usize])));
    let qout: BTreeSet<(u32, u32)> = q
        .iter()
        .map(|&(x1, x2)| (s1.output_map()[x1 as usize], s2.output_map()[x2 as usize]))
        .collect();
    rep.cond_iii = z.iter().copied().find(|p| !qout.contains(p));
    Ok(rep)
}

/// The OFRR induced by Q: all output pairs of related states, sorted.
pub fn canonical_z(s1: &FiniteSystem, s2: &FiniteSystem, q: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let set: BTreeSet<(u32, u32)> = q
        .iter()
        .map(|&(x1, x2)| (s1.output_map()[x1 as usize], s2.output_map()[x2 as usize]))
        .collect();
    set.into_iter().collect()
}
