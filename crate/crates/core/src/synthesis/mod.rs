//! Fixed-point controller synthesis on finite systems.
//!
//! Specifications are over output symbols of the model; controllers observe
//! model states (the observation id is the state id) unless relabelled.

mod controller;
mod fixpoint;

pub use controller::{Controller, ControllerRun, RefinedController, NO_INPUT};
pub use fixpoint::{attractor, buchi, safe_fixpoint, Attractor};

use crate::error::{Error, Result};
use crate::output::OutputRelation;
use crate::system::{FiniteSystem, StateSet, SystemBuilder};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Spec {
    Safe(Vec<u32>),
    Reach(Vec<u32>),
    SafeBounded { set: Vec<u32>, a: usize, b: usize },
    ReachBounded { set: Vec<u32>, a: usize, b: usize },
    RecurrenceHold { targets: Vec<Vec<u32>>, hold: usize },
}

fn check_set(sys: &FiniteSystem, set: &[u32]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Config("specification sets must be nonempty".into()));
    }
    if let Some(&y) = set.iter().find(|&&y| y as usize >= sys.num_outputs()) {
        return Err(Error::InvalidId { kind: "output", id: y as usize, len: sys.num_outputs() });
    }
    Ok(())
}

impl Spec {
    pub fn validate(&self, sys: &FiniteSystem) -> Result<()> {
        match self {
            Spec::Safe(s) | Spec::Reach(s) => check_set(sys, s),
            Spec::SafeBounded { set, a, b } | Spec::ReachBounded { set, a, b } => {
                check_set(sys, set)?;
                if a > b {
                    return Err(Error::Config(format!("horizon [{a}, {b}] is empty")));
                }
                if *b > 10_000 {
                    return Err(Error::Config("bounded horizons are limited to 10000 steps".into()));
                }
                Ok(())
            }
            Spec::RecurrenceHold { targets, hold } => {
                if targets.is_empty() || *hold == 0 {
                    return Err(Error::Config("recurrence needs at least one target and hold ≥ 1".into()));
                }
                targets.iter().try_for_each(|t| check_set(sys, t))
            }
        }
    }
}

/// States whose output lies in `set`.
pub fn output_preimage(sys: &FiniteSystem, set: &[u32]) -> StateSet {
    let mut s = sys.empty_set();
    for &y in set {
        for &x in sys.preimage(y) {
            s.insert(x as usize);
        }
    }
    s
}

fn lowest_within(sys: &FiniteSystem, x: u32, within: &StateSet) -> Vec<u32> {
    (0..sys.num_inputs() as u32)
        .filter(|&u| {
            let p = sys.succ(x, u);
            !p.is_empty() && p.iter().all(|&v| within.contains(v as usize))
        })
        .collect()
}

fn no_controller(what: &str) -> Error {
    Error::NoController(format!("{what}: controller domain is empty"))
}

pub fn solve_safety(sys: &FiniteSystem, set: &[u32]) -> Result<Controller> {
    check_set(sys, set)?;
    let w = safe_fixpoint(sys, &output_preimage(sys, set));
    if w.is_clear() {
        return Err(no_controller("safety"));
    }
    let n = sys.num_states();
    let mut c = Controller::new(1, n, 0, sys.num_inputs());
    for x in w.ones() {
        let allowed = lowest_within(sys, x as u32, &w);
        c.set(0, x as u32, allowed);
    }
    c.domain = w.ones().map(|x| x as u32).collect();
    Ok(c)
}

/// Memoryless reach controller with attractor ranks (rank 0 = target).
pub fn solve_reach_ranked(sys: &FiniteSystem, set: &[u32]) -> Result<(Controller, Vec<u32>)> {
    check_set(sys, set)?;
    let target = output_preimage(sys, set);
    let att = attractor(sys, &target, None);
    if att.set.is_clear() {
        return Err(no_controller("reach"));
    }
    let mut c = Controller::new(1, sys.num_states(), 0, sys.num_inputs());
    for x in att.set.ones() {
        let r = att.rank[x];
        let allowed: Vec<u32> = if r == 0 {
            sys.admissible_inputs(x as u32)?
        } else {
            (0..sys.num_inputs() as u32)
                .filter(|&u| {
                    let p = sys.succ(x as u32, u);
                    !p.is_empty() && p.iter().all(|&v| att.rank[v as usize] < r)
                })
                .collect()
        };
        c.set(0, x as u32, allowed);
    }
    c.domain = att.set.ones().map(|x| x as u32).collect();
    Ok((c, att.rank))
}

pub fn solve_reach(sys: &FiniteSystem, set: &[u32]) -> Result<Controller> {
    solve_reach_ranked(sys, set).map(|r| r.0)
}

/// Bounded-horizon safety and reachability by backward induction. Memory is
/// the step counter; `b + 1` marks an expired or completed obligation.
pub fn solve_bounded(sys: &FiniteSystem, spec: &Spec) -> Result<Controller> {
    spec.validate(sys)?;
    let (set, a, b, reach) = match spec {
        Spec::SafeBounded { set, a, b } => (set, *a, *b, false),
        Spec::ReachBounded { set, a, b } => (set, *a, *b, true),
        _ => return Err(Error::Config("solve_bounded takes SafeBounded or ReachBounded".into())),
    };
    let n = sys.num_states();
    let inside = output_preimage(sys, set);
    let done = (b + 1) as u32;
    let mut c = Controller::new(b + 2, n, 0, sys.num_inputs());
    let mut next = sys.empty_set();
    for t in (0..=b).rev() {
        let mut w = sys.empty_set();
        for x in 0..n as u32 {
            let in_set = inside.contains(x as usize);
            let in_window = t >= a;
            let (ok, allowed, mem) = if reach {
                if in_window && in_set {
                    (true, sys.admissible_inputs(x)?, done)
                } else if t == b {
                    (false, Vec::new(), done)
                } else {
                    let al = lowest_within(sys, x, &next);
                    (!al.is_empty(), al, t as u32 + 1)
                }
            } else if in_window && !in_set {
                (false, Vec::new(), done)
            } else if t == b {
                (true, sys.admissible_inputs(x)?, done)
            } else {
                let al = lowest_within(sys, x, &next);
                (!al.is_empty(), al, t as u32 + 1)
            };
            if ok {
                w.insert(x as usize);
                c.set(t as u32, x, allowed);
                c.set_update(t as u32, x, mem);
            }
        }
        next = w;
    }
    for x in 0..n as u32 {
        c.set(done, x, sys.admissible_inputs(x)?);
    }
    if next.is_clear() {
        return Err(no_controller("bounded"));
    }
    c.domain = next.ones().map(|x| x as u32).collect();
    Ok(c)
}

/// Memory `i * hold + c`: mode i, c consecutive observations already inside
/// target i. Returns the next memory and whether a hold completed.
fn hold_update(targets: &[StateSet], hold: usize, m: usize, x: usize) -> (usize, bool) {
    let k = targets.len();
    let (i, c) = (m / hold, m % hold);
    if targets[i].contains(x) {
        if c + 1 == hold {
            (((i + 1) % k) * hold, true)
        } else {
            (i * hold + c + 1, false)
        }
    } else {
        (i * hold, false)
    }
}

/// Cyclic recurrence over targets with a hold of `hold` consecutive steps in
/// each, solved as a Büchi game on the product with the hold counter.
pub fn solve_recurrence_hold(sys: &FiniteSystem, targets: &[Vec<u32>], hold: usize) -> Result<Controller> {
    Spec::RecurrenceHold { targets: targets.to_vec(), hold }.validate(sys)?;
    let sets: Vec<StateSet> = targets.iter().map(|t| output_preimage(sys, t)).collect();
    let n = sys.num_states();
    let mm = targets.len() * hold;
    let id = |x: usize, m: usize| (x * mm + m) as u32;
    let mut b = SystemBuilder::new(n * mm, sys.num_inputs(), 1).all_initial();
    let mut acc = fixedbitset::FixedBitSet::with_capacity(n * mm);
    let mut upd = vec![0u32; n * mm];
    for x in 0..n {
        for m in 0..mm {
            let (m2, fin) = hold_update(&sets, hold, m, x);
            upd[x * mm + m] = m2 as u32;
            if fin {
                acc.insert(x * mm + m);
            }
            for u in 0..sys.num_inputs() as u32 {
                for &x2 in sys.succ(x as u32, u) {
                    b.add(id(x, m), u, id(x2 as usize, m2));
                }
            }
        }
    }
    let product = b.build()?;
    let (win, strategy) = buchi(&product, &acc);
    let mut c = Controller::new(mm, n, 0, sys.num_inputs());
    for p in win.ones() {
        let (x, m) = (p / mm, p % mm);
        c.set(m as u32, x as u32, strategy[p].clone());
        c.set_update(m as u32, x as u32, upd[p]);
    }
    c.domain = (0..n).filter(|&x| win.contains(x * mm)).map(|x| x as u32).collect();
    if c.domain.is_empty() {
        return Err(no_controller("recurrence"));
    }
    Ok(c)
}

pub fn solve(sys: &FiniteSystem, spec: &Spec) -> Result<Controller> {
    spec.validate(sys)?;
    match spec {
        Spec::Safe(s) => solve_safety(sys, s),
        Spec::Reach(s) => solve_reach(sys, s),
        Spec::SafeBounded { .. } | Spec::ReachBounded { .. } => solve_bounded(sys, spec),
        Spec::RecurrenceHold { targets, hold } => solve_recurrence_hold(sys, targets, *hold),
    }
}

/// Compose a controller whose observations are output symbols with the
/// static quantizer Z.
pub fn refine_controller<'a>(ctrl: &'a Controller, rel: &'a OutputRelation) -> RefinedController<'a> {
    RefinedController::new(ctrl, rel)
}

#[cfg(test)]
mod tests;
