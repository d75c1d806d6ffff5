//! Feedback and observation composition of finite systems.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::system::{set_from, FiniteSystem, SystemBuilder};

/// Alphabet embeddings for feedback composition: outputs of one system used
/// as inputs of the other.
#[derive(Debug, Clone)]
pub struct FeedbackEmbedding {
    pub y1_to_u2: Vec<u32>,
    pub y2_to_u1: Vec<u32>,
}

impl FeedbackEmbedding {
    fn validate(&self, s1: &FiniteSystem, s2: &FiniteSystem) -> Result<()> {
        if self.y1_to_u2.len() != s1.num_outputs() || self.y2_to_u1.len() != s2.num_outputs() {
            return Err(Error::Config("output-to-input embedding does not cover every output".into()));
        }
        if self.y1_to_u2.iter().any(|&u| u as usize >= s2.num_inputs())
            || self.y2_to_u1.iter().any(|&u| u as usize >= s1.num_inputs())
        {
            return Err(Error::Config("embedding maps to an undeclared input".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Composability {
    pub composable: bool,
    pub witness: Option<(u32, u32)>,
}

/// Blocking condition of feedback composition: whenever s1 blocks on the
/// output of s2, s2 must block on the output of s1.
pub fn check_feedback_composable(
    s1: &FiniteSystem,
    s2: &FiniteSystem,
    emb: &FeedbackEmbedding,
) -> Result<Composability> {
    emb.validate(s1, s2)?;
    for x1 in 0..s1.num_states() as u32 {
        let u2 = emb.y1_to_u2[s1.output_map()[x1 as usize] as usize];
        for x2 in 0..s2.num_states() as u32 {
            let u1 = emb.y2_to_u1[s2.output_map()[x2 as usize] as usize];
            if s1.succ(x1, u1).is_empty() && !s2.succ(x2, u2).is_empty() {
                return Ok(Composability {
                    composable: false,
                    witness: Some((x1, x2)),
                });
            }
        }
    }
    Ok(Composability {
        composable: true,
        witness: None,
    })
}

/// A materialized product: the system plus the component pair behind each
/// product state id.
#[derive(Debug, Clone)]
pub struct Product {
    pub system: FiniteSystem,
    pub pairs: Vec<(u32, u32)>,
}

fn explore<F>(init: Vec<(u32, u32)>, n_inputs: usize, mut step: F) -> (Vec<(u32, u32)>, Vec<(u32, u32, u32)>)
where
    F: FnMut((u32, u32), u32) -> Vec<(u32, u32)>,
{
    let mut ids: HashMap<(u32, u32), u32> = HashMap::new();
    let mut pairs = Vec::new();
    for p in init {
        ids.entry(p).or_insert_with(|| {
            pairs.push(p);
            pairs.len() as u32 - 1
        });
    }
    let mut triples = Vec::new();
    let mut i = 0;
    while i < pairs.len() {
        let p = pairs[i];
        for u in 0..n_inputs as u32 {
            for q in step(p, u) {
                let id = *ids.entry(q).or_insert_with(|| {
                    pairs.push(q);
                    pairs.len() as u32 - 1
                });
                triples.push((i as u32, u, id));
            }
        }
        i += 1;
    }
    (pairs, triples)
}

fn initial_pairs(s1: &FiniteSystem, s2: &FiniteSystem) -> Vec<(u32, u32)> {
    let mut v = Vec::new();
    for a in s1.initial_states().ones() {
        for b in s2.initial_states().ones() {
            v.push((a as u32, b as u32));
        }
    }
    v
}

/// Feedback composition restricted to the part reachable from initial
/// pairs. Single input 0; output of (x1, x2) is `H1(x1) * |Y2| + H2(x2)`.
pub fn feedback_compose(s1: &FiniteSystem, s2: &FiniteSystem, emb: &FeedbackEmbedding) -> Result<Product> {
    let c = check_feedback_composable(s1, s2, emb)?;
    if let Some((x1, x2)) = c.witness {
        return Err(Error::Precondition(format!(
            "systems are not feedback-composable at state pair ({x1}, {x2})"
        )));
    }
    let (pairs, triples) = explore(initial_pairs(s1, s2), 1, |(x1, x2), _| {
        let u1 = emb.y2_to_u1[s2.output_map()[x2 as usize] as usize];
        let u2 = emb.y1_to_u2[s1.output_map()[x1 as usize] as usize];
        let mut out = Vec::new();
        for &a in s1.succ(x1, u1) {
            for &b in s2.succ(x2, u2) {
                out.push((a, b));
            }
        }
        out
    });
    let ny2 = s2.num_outputs() as u32;
    let outputs = pairs
        .iter()
        .map(|&(a, b)| s1.output_map()[a as usize] * ny2 + s2.output_map()[b as usize])
        .collect();
    let n = pairs.len();
    let mut b = SystemBuilder::new(n, 1, s1.num_outputs() * s2.num_outputs())
        .output_map(outputs)
        .initial(0..initial_pairs(s1, s2).len() as u32);
    for (x, u, x2) in triples {
        b.add(x, u, x2);
    }
    Ok(Product {
        system: b.build()?,
        pairs,
    })
}

/// Observation composition of plant `s1` and observer `s2`. The caller
/// embeds each (u1, y1) pair into an input of `s2`; the product is observed
/// through the observer state.
pub fn observation_compose<F>(s2: &FiniteSystem, s1: &FiniteSystem, embed: F) -> Result<Product>
where
    F: Fn(u32, u32) -> Option<u32>,
{
    for u in 0..s1.num_inputs() as u32 {
        for y in 0..s1.num_outputs() as u32 {
            match embed(u, y) {
                Some(v) if (v as usize) < s2.num_inputs() => {}
                _ => {
                    return Err(Error::Config(format!(
                        "pair (u={u}, y={y}) is not embedded in the observer inputs"
                    )))
                }
            }
        }
    }
    let init = initial_pairs(s1, s2);
    let n_init = init.len();
    let (pairs, triples) = explore(init, s1.num_inputs(), |(x1, x2), u| {
        let v = embed(u, s1.output_map()[x1 as usize]).expect("validated");
        let mut out = Vec::new();
        for &a in s1.succ(x1, u) {
            for &b in s2.succ(x2, v) {
                out.push((a, b));
            }
        }
        out
    });
    let outputs = pairs.iter().map(|&(_, b)| b).collect();
    let mut b = SystemBuilder::new(pairs.len(), s1.num_inputs(), s2.num_states())
        .output_map(outputs)
        .initial(0..n_init as u32);
    for (x, u, x2) in triples {
        b.add(x, u, x2);
    }
    let system = b.build()?;
    debug_assert_eq!(system.initial_states(), &set_from(pairs.len(), 0..n_init as u32));
    Ok(Product { system, pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle3() -> FiniteSystem {
        SystemBuilder::new(3, 1, 3)
            .initial([0])
            .output_map(vec![0, 1, 2])
            .transition(0, 0, 1)
            .transition(1, 0, 2)
            .transition(2, 0, 0)
            .build()
            .unwrap()
    }

    fn identity1() -> FiniteSystem {
        SystemBuilder::new(1, 3, 1)
            .all_initial()
            .transition(0, 0, 0)
            .transition(0, 1, 0)
            .transition(0, 2, 0)
            .build()
            .unwrap()
    }

    #[test]
    fn total_systems_compose() {
        let s1 = cycle3();
        let s2 = identity1();
        let emb = FeedbackEmbedding { y1_to_u2: vec![0, 1, 2], y2_to_u1: vec![0] };
        let c = check_feedback_composable(&s1, &s2, &emb).unwrap();
        assert!(c.composable);
        let p = feedback_compose(&s1, &s2, &emb).unwrap();
        assert_eq!(p.system.num_states(), 3);
        assert_eq!(p.system.num_transitions(), 3);
        assert_eq!(p.pairs, vec![(0, 0), (1, 0), (2, 0)]);
    }

    #[test]
    fn blocking_witness() {
        // s1 blocks in state 1 on input 0; s2 keeps going on every input.
        let s1 = SystemBuilder::new(2, 1, 2)
            .all_initial()
            .output_map(vec![0, 1])
            .transition(0, 0, 1)
            .build()
            .unwrap();
        let s2 = SystemBuilder::new(1, 2, 1)
            .all_initial()
            .transition(0, 0, 0)
            .transition(0, 1, 0)
            .build()
            .unwrap();
        let emb = FeedbackEmbedding { y1_to_u2: vec![0, 1], y2_to_u1: vec![0] };
        let c = check_feedback_composable(&s1, &s2, &emb).unwrap();
        assert_eq!(c, Composability { composable: false, witness: Some((1, 0)) });
        assert!(matches!(feedback_compose(&s1, &s2, &emb), Err(Error::Precondition(_))));
    }

    #[test]
    fn undeclared_embedding_is_config_error() {
        let emb = FeedbackEmbedding { y1_to_u2: vec![0], y2_to_u1: vec![0] };
        assert!(matches!(
            check_feedback_composable(&cycle3(), &identity1(), &emb),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn observation_output_is_observer_state() {
        let plant = cycle3();
        // Observer copies the plant output into its state.
        let mut b = SystemBuilder::new(3, 3, 1).initial([0, 1, 2]);
        for x in 0..3 {
            for y in 0..3u32 {
                b.add(x, y, (y + 1) % 3);
            }
        }
        let obs = b.build().unwrap();
        let p = observation_compose(&obs, &plant, |_, y| Some(y)).unwrap();
        assert_eq!(p.system.num_outputs(), 3);
        for (i, &(a, b)) in p.pairs.iter().enumerate() {
            assert_eq!(p.system.output_map()[i], b);
            if i >= 3 {
                // After one step the observer state equals the plant state.
                assert_eq!(a, b);
            }
        }
    }
}
