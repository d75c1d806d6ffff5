use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;

use super::*;
use crate::system::set_from;

fn random_model(n: std::ops::Range<usize>, k: usize) -> impl Strategy<Value = FiniteSystem> {
    (n, 1usize..3).prop_flat_map(move |(n, m)| {
        (
            proptest::collection::vec(0u32..k as u32, n),
            proptest::collection::vec(proptest::collection::vec(proptest::bool::weighted(0.3), n), n * m),
        )
            .prop_map(move |(out, rows)| {
                let mut b = SystemBuilder::new(n, m, k).all_initial().output_map(out);
                for (r, row) in rows.iter().enumerate() {
                    for (x2, &on) in row.iter().enumerate() {
                        if on {
                            b.add((r / m) as u32, (r % m) as u32, x2 as u32);
                        }
                    }
                }
                b.build().unwrap()
            })
    })
}

/// Current states of every explicit path matching the input/output words.
fn path_oracle(model: &FiniteSystem, alpha: &[u32], beta: &[u32]) -> BTreeSet<usize> {
    let mut paths: Vec<Vec<u32>> = (0..model.num_states() as u32)
        .filter(|&x| model.output_map()[x as usize] == beta[0])
        .map(|x| vec![x])
        .collect();
    for (i, &u) in alpha.iter().enumerate() {
        let mut next = Vec::new();
        for p in &paths {
            for &x2 in model.succ(*p.last().unwrap(), u) {
                if model.output_map()[x2 as usize] == beta[i + 1] {
                    let mut q = p.clone();
                    q.push(x2);
                    next.push(q);
                }
            }
        }
        paths = next;
    }
    paths.iter().map(|p| *p.last().unwrap() as usize).collect()
}

fn five_state_example() -> FiniteSystem {
    // u0 shifts 0→1→2→2, u1 resets to 0; a single shared output.
    SystemBuilder::new(3, 2, 1)
        .all_initial()
        .output_map(vec![0, 0, 0])
        .transition(0, 0, 1)
        .transition(1, 0, 2)
        .transition(2, 0, 2)
        .transition(0, 1, 0)
        .transition(1, 1, 0)
        .transition(2, 1, 0)
        .build()
        .unwrap()
}

#[test]
fn singleton_update() {
    let m = five_state_example();
    let k = set_from(3, [0]);
    assert_eq!(knowledge_update(&m, &k, 0, 0).unwrap(), Some(set_from(3, [1])));
    assert_eq!(knowledge_update(&m, &k, 0, 1).unwrap(), None);
}

#[test]
fn inadmissible_input_is_a_precondition_error() {
    let m = SystemBuilder::new(2, 2, 1).all_initial().transition(0, 0, 1).transition(1, 0, 0).transition(0, 1, 0).build().unwrap();
    assert!(matches!(knowledge_update(&m, &set_from(2, [0, 1]), 1, 0), Err(Error::Precondition(_))));
}

#[test]
fn hand_computed_five_state_game() {
    let m = five_state_example();
    let g = build_knowledge_game(&m, &m.full_set(), DEFAULT_CAP).unwrap();
    let sets: Vec<Vec<usize>> = g.knowledge_states().iter().map(|k| k.ones().collect()).collect();
    assert_eq!(sets, vec![vec![0, 1, 2], vec![1, 2], vec![0], vec![2], vec![1]]);
    let edges: Vec<(u32, u32, u32)> = g.system.transitions().collect();
    assert_eq!(
        edges,
        vec![(0, 0, 1), (0, 1, 2), (1, 0, 3), (1, 1, 2), (2, 0, 4), (2, 1, 2), (3, 0, 3), (3, 1, 2), (4, 0, 3), (4, 1, 2)]
    );
    assert_eq!(g.system.initial_states().ones().collect::<Vec<_>>(), vec![0]);
}

#[test]
fn injective_deterministic_model_gives_isomorphic_game() {
    let m = SystemBuilder::new(4, 2, 4)
        .all_initial()
        .output_map(vec![0, 1, 2, 3])
        .transition(0, 0, 1)
        .transition(1, 0, 2)
        .transition(2, 0, 3)
        .transition(3, 0, 0)
        .transition(0, 1, 0)
        .transition(2, 1, 1)
        .build()
        .unwrap();
    let g = build_knowledge_game(&m, &m.full_set(), DEFAULT_CAP).unwrap();
    assert_eq!(g.num_states(), 4);
    assert!(g.knowledge_states().iter().all(|k| k.count_ones(..) == 1));
    let relabel = |id: u32| g.knowledge(id).ones().next().unwrap() as u32;
    let mut mapped: Vec<_> = g.system.transitions().map(|(a, u, b)| (relabel(a), u, relabel(b))).collect();
    mapped.sort_unstable();
    assert_eq!(mapped, m.transitions().collect::<Vec<_>>());
}

#[test]
fn cap_is_enforced() {
    let m = five_state_example();
    assert!(matches!(build_knowledge_game(&m, &m.full_set(), 3), Err(Error::Resource(_))));
}

#[test]
fn sidecar_round_trip() {
    let m = five_state_example();
    let g = build_knowledge_game(&m, &m.full_set(), DEFAULT_CAP).unwrap();
    let text = g.sidecar_text();
    assert!(text.starts_with("k 0 7\nk 1 6\n"));
    let g2 = KnowledgeGame::from_parts(FiniteSystem::from_text(&g.system.to_text()).unwrap(), &m, &text).unwrap();
    assert_eq!(g, g2);
    assert!(KnowledgeGame::from_parts(g.system.clone(), &m, "k 0 8\n").is_err());
}

#[test]
fn lifting_is_universal() {
    let m = SystemBuilder::new(3, 1, 2).all_initial().output_map(vec![0, 0, 1]).build().unwrap();
    let ks = vec![set_from(3, [0]), set_from(3, [2]), set_from(3, [1, 2])];
    assert_eq!(lift_set(&m, &ks, &[0]), vec![0]);
    assert_eq!(lift_set(&m, &ks, &[0, 1]), vec![0, 1, 2]);
    let singles = vec![set_from(3, [0]), set_from(3, [1]), set_from(3, [2])];
    assert_eq!(lift_set(&m, &singles, &[1]), vec![2]);
}

#[test]
fn lift_rejects_temporal_kinds() {
    let m = five_state_example();
    let g = build_knowledge_game(&m, &m.full_set(), DEFAULT_CAP).unwrap();
    let spec = Spec::RecurrenceHold { targets: vec![vec![0]], hold: 1 };
    assert!(matches!(lift_spec(&m, &g, &spec), Err(Error::Config(_))));
}

#[test]
fn game_controller_hand_trace() {
    // 0→1→2→0 under the single input; states 1 and 2 share output 1.
    let m = SystemBuilder::new(3, 1, 2)
        .all_initial()
        .output_map(vec![0, 1, 1])
        .transition(0, 0, 1)
        .transition(1, 0, 2)
        .transition(2, 0, 0)
        .build()
        .unwrap();
    let (g, c) = solve_knowledge(&m, &Spec::Safe(vec![0, 1]), DEFAULT_CAP).unwrap();
    let mut gc = GameController::new(&c, &m, &g, m.full_set());
    let mut trace = Vec::new();
    for y in [1, 1, 0, 1] {
        assert_eq!(gc.step(y).unwrap(), 0);
        trace.push(gc.knowledge().unwrap().ones().collect::<Vec<_>>());
    }
    assert_eq!(trace, vec![vec![1, 2], vec![2], vec![0], vec![1]]);
    assert!(matches!(gc.step(0), Err(Error::Inconsistent(_))));
}

/// Brute force over observation-based strategies of depth `d`: each maps an
/// observation history (length 1..=d) to an input. Returns whether one wins
/// reach of `target` within `d` steps from every initial state.
fn brute_force_reach(model: &FiniteSystem, target: &[u32], d: usize) -> bool {
    let k = model.num_outputs() as u32;
    let mut histories: Vec<Vec<u32>> = Vec::new();
    let mut layer: Vec<Vec<u32>> = (0..k).map(|y| vec![y]).collect();
    for _ in 0..d {
        histories.extend(layer.iter().cloned());
        layer = layer.iter().flat_map(|h| (0..k).map(move |y| [h.clone(), vec![y]].concat())).collect();
    }
    let m = model.num_inputs() as u64;
    let total = m.pow(histories.len() as u32);
    let pos: HashMap<Vec<u32>, usize> = histories.iter().cloned().zip(0..).collect();
    'strategy: for code in 0..total {
        let choice = |h: &Vec<u32>| (code / m.pow(pos[h] as u32) % m) as u32;
        // explore (state, history) pairs
        let mut stack: Vec<(u32, Vec<u32>)> =
            (0..model.num_states() as u32).map(|x| (x, vec![model.output_map()[x as usize]])).collect();
        while let Some((x, h)) = stack.pop() {
            if target.contains(h.last().unwrap()) {
                continue;
            }
            if h.len() > d {
                continue 'strategy;
            }
            let u = choice(&h);
            let p = model.succ(x, u);
            if p.is_empty() {
                continue 'strategy;
            }
            for &x2 in p {
                let mut h2 = h.clone();
                h2.push(model.output_map()[x2 as usize]);
                stack.push((x2, h2));
            }
        }
        return true;
    }
    false
}

/// Knowledge-game winner for reach within `d` steps from every initial
/// knowledge state.
fn game_reach(model: &FiniteSystem, target: &[u32], d: usize) -> bool {
    let g = build_knowledge_game(model, &model.full_set(), DEFAULT_CAP).unwrap();
    let lifted = lift_set(model, g.knowledge_states(), target);
    if lifted.is_empty() {
        return false;
    }
    match synthesis::solve_reach_ranked(&g.system, &lifted) {
        Ok((_, rank)) => g.system.initial_states().ones().all(|k| (rank[k] as usize) <= d),
        Err(_) => false,
    }
}

/// Explore every closed-loop run of the game controller on the model and
/// check the output specification.
fn check_closed_loop(model: &FiniteSystem, spec: &Spec, depth: usize) -> std::result::Result<(), String> {
    let (g, c) = match solve_knowledge(model, spec, DEFAULT_CAP) {
        Ok(r) => r,
        Err(Error::NoController(_)) => return Ok(()),
        Err(e) => return Err(e.to_string()),
    };
    let depth = depth.max(g.num_states() + 1);
    let s0 = model.full_set();
    for x0 in 0..model.num_states() as u32 {
        let y0 = model.output_map()[x0 as usize];
        let k0 = refine_initial(model, &s0, y0).unwrap();
        let id0 = g.id_of(&k0).unwrap();
        if !c.in_domain(id0) {
            continue;
        }
        let mut stack = vec![(x0, GameController::new(&c, model, &g, s0.clone()), 0usize, false)];
        while let Some((x, mut gc, t, reached)) = stack.pop() {
            let y = model.output_map()[x as usize];
            let reached = reached || matches!(spec, Spec::Reach(s) if s.contains(&y));
            match spec {
                Spec::Safe(s) if !s.contains(&y) => return Err(format!("unsafe output {y} at step {t}")),
                Spec::Reach(_) if reached => continue,
                Spec::Reach(_) if t >= depth => return Err(format!("target not reached from {x0}")),
                _ if t >= depth => continue,
                _ => {}
            }
            let u = gc.step(y).map_err(|e| e.to_string())?;
            if !gc.knowledge().unwrap().contains(x as usize) {
                return Err("true state left the knowledge".into());
            }
            let p = model.succ(x, u);
            if p.is_empty() {
                return Err("controller chose a blocking input".into());
            }
            for &x2 in p {
                stack.push((x2, gc.clone(), t + 1, reached));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn update_matches_path_enumeration(
        model in random_model(2..11, 3),
        word in proptest::collection::vec((0u32..2, 0u32..3), 0..6),
        y0 in 0u32..3,
    ) {
        let alpha: Vec<u32> = word.iter().map(|p| p.0 % model.num_inputs() as u32).collect();
        let beta: Vec<u32> = std::iter::once(y0).chain(word.iter().map(|p| p.1)).collect();
        let oracle = path_oracle(&model, &alpha, &beta);
        let mut k = refine_initial(&model, &model.full_set(), beta[0]);
        for (i, &u) in alpha.iter().enumerate() {
            k = match k {
                None => None,
                Some(s) => {
                    // Post over members that lack u would be a precondition
                    // failure; paths through them simply die.
                    let live = set_from(model.num_states(), s.ones().filter(|&x| !model.succ(x as u32, u).is_empty()).map(|x| x as u32));
                    if live.is_clear() { None } else { knowledge_update(&model, &live, u, beta[i + 1]).unwrap() }
                }
            };
        }
        let got: BTreeSet<usize> = k.map(|s| s.ones().collect()).unwrap_or_default();
        prop_assert_eq!(&got, &oracle);
        let ab: BTreeSet<usize> = model.alpha_beta_post(&model.full_set(), &alpha, &beta).unwrap().ones().collect();
        prop_assert_eq!(&ab, &oracle);
    }

    #[test]
    fn game_reach_matches_observation_strategies(model in random_model(2..5, 2), y in 0u32..2) {
        prop_assert_eq!(game_reach(&model, &[y], 2), brute_force_reach(&model, &[y], 2));
    }

    #[test]
    fn closed_loop_satisfies_lifted_specs(model in random_model(2..9, 3), y in 0u32..3, safe in any::<bool>()) {
        let spec = if safe { Spec::Safe(vec![y, (y + 1) % 3]) } else { Spec::Reach(vec![y]) };
        let depth = 12;
        prop_assert_eq!(check_closed_loop(&model, &spec, depth), Ok(()));
    }

    #[test]
    fn construction_is_deterministic(model in random_model(2..9, 3)) {
        let a = build_knowledge_game(&model, &model.full_set(), DEFAULT_CAP).unwrap();
        let b = build_knowledge_game(&model, &model.full_set(), DEFAULT_CAP).unwrap();
        prop_assert_eq!(a, b);
    }
}
