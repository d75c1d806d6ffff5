//! Symbolic models of sampled continuous systems on uniform grids.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dynamics::{integrate_growth, integrate_rk4, Dynamics};
use crate::error::{Error, Result};
use crate::grid::{Convention, GridQuantizer, Rect};
use crate::output::{build_output_relation, OutputRelation};
use crate::system::FiniteSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReachMethod {
    /// RK4 image of the cell center plus a growth-bound radius. Sound.
    GrowthBound,
    /// RK4 image of the cell center only. Not an over-approximation.
    Center,
}

impl ReachMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReachMethod::GrowthBound => "growth_bound",
            ReachMethod::Center => "center",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "growth_bound" => Some(ReachMethod::GrowthBound),
            "center" => Some(ReachMethod::Center),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbstractionParams {
    pub tau: f64,
    pub epsilon: f64,
    pub substeps: usize,
    pub method: ReachMethod,
}

impl AbstractionParams {
    pub fn new(tau: f64) -> Self {
        AbstractionParams {
            tau,
            epsilon: 0.0,
            substeps: 5,
            method: ReachMethod::GrowthBound,
        }
    }
}

/// Model identity recorded in the sidecar so a serialized model can be
/// matched against its dynamics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelTag {
    pub id: String,
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicModel {
    pub system: FiniteSystem,
    pub state_grid: GridQuantizer,
    pub input_grid: GridQuantizer,
    pub output_relation: OutputRelation,
    pub params: AbstractionParams,
    pub tag: ModelTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStats {
    pub states: usize,
    pub transitions: usize,
    pub inputs: usize,
    pub outputs: usize,
}

/// Box containing the images of `cell` after `tau` under constant `u`.
pub fn reach_box(
    sys: &dyn Dynamics,
    growth: &[f64],
    cell: &Rect,
    u: &[f64],
    params: &AbstractionParams,
) -> Result<Rect> {
    let c = integrate_rk4(sys, &cell.center(), u, params.tau, params.substeps)?;
    let eps = params.epsilon;
    let r = match params.method {
        ReachMethod::Center => vec![eps; c.len()],
        ReachMethod::GrowthBound => {
            let r0: Vec<f64> = cell.radius().iter().map(|r| r + eps).collect();
            let mut r = integrate_growth(growth, &r0, params.tau, params.substeps)?;
            for v in &mut r {
                *v += eps;
            }
            r
        }
    };
    Ok(Rect::from_center(&c, &r))
}

/// Successor cells of one (cell, input) pair, sorted; empty when the reach
/// box leaves the state domain.
fn successor_row(
    sys: &dyn Dynamics,
    growth: &[f64],
    grid: &GridQuantizer,
    domain: &Rect,
    cell: usize,
    u: &[f64],
    params: &AbstractionParams,
) -> Result<Vec<u32>> {
    let b = reach_box(sys, growth, &grid.cell_box(cell)?, u, params)?;
    if !domain.contains_rect(&b) {
        return Ok(Vec::new());
    }
    if params.method == ReachMethod::Center && params.epsilon == 0.0 {
        return Ok(grid.quantize(&b.lower).map(|id| vec![id as u32]).unwrap_or_default());
    }
    let mut ranges = Vec::with_capacity(grid.dim());
    for d in 0..grid.dim() {
        match grid.axis_overlap(d, b.lower[d], b.upper[d]) {
            Some(r) => ranges.push(r),
            None => return Ok(Vec::new()),
        }
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(grid.flat(&idx) as u32);
        let mut d = 0;
        loop {
            if d == idx.len() {
                out.sort_unstable();
                return Ok(out);
            }
            if idx[d] < ranges[d].1 {
                idx[d] += 1;
                break;
            }
            idx[d] = ranges[d].0;
            d += 1;
        }
    }
}

pub fn build_symbolic_model(
    sys: &dyn Dynamics,
    state_grid: &GridQuantizer,
    input_grid: &GridQuantizer,
    output_relation: &OutputRelation,
    params: AbstractionParams,
    tag: ModelTag,
) -> Result<SymbolicModel> {
    if !(params.tau > 0.0) || !(params.epsilon >= 0.0) {
        return Err(Error::Config("tau must be positive and epsilon nonnegative".into()));
    }
    if state_grid.dim() != sys.dim() || input_grid.dim() != sys.input_dim() {
        return Err(Error::Config("grid dimensions do not match the dynamics".into()));
    }
    let domain = state_grid.domain();
    let n_in = input_grid.num_cells();
    let inputs: Vec<Vec<f64>> = (0..n_in).map(|i| input_grid.center(i)).collect();
    let growth: Vec<Vec<f64>> = inputs.iter().map(|u| sys.growth_matrix(&domain, u)).collect();
    let n = state_grid.num_cells();
    let rows: Vec<Vec<Vec<u32>>> = (0..n)
        .into_par_iter()
        .map(|cell| {
            (0..n_in)
                .map(|k| successor_row(sys, &growth[k], state_grid, &domain, cell, &inputs[k], &params))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<Vec<u32>> = rows.into_iter().flatten().collect();
    let mut initial = fixedbitset::FixedBitSet::with_capacity(n);
    initial.insert_range(..);
    let system = FiniteSystem::from_rows(
        n,
        n_in,
        output_relation.num_symbols(),
        initial,
        output_relation.state_map().to_vec(),
        rows,
    )?;
    Ok(SymbolicModel {
        system,
        state_grid: state_grid.clone(),
        input_grid: input_grid.clone(),
        output_relation: output_relation.clone(),
        params,
        tag,
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn join_usize(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl SymbolicModel {
    pub fn stats(&self) -> ModelStats {
        ModelStats {
            states: self.system.num_states(),
            transitions: self.system.num_transitions(),
            inputs: self.system.num_inputs(),
            outputs: self.system.num_outputs(),
        }
    }

    pub fn input_value(&self, u: u32) -> Vec<f64> {
        self.input_grid.center(u as usize)
    }

    /// Input ids ordered by increasing Euclidean magnitude, ties by id.
    pub fn inputs_by_magnitude(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = (0..self.system.num_inputs() as u32).collect();
        let norm = |u: u32| self.input_value(u).iter().map(|v| v * v).sum::<f64>();
        ids.sort_by(|&a, &b| norm(a).partial_cmp(&norm(b)).unwrap().then(a.cmp(&b)));
        ids
    }

    /// Key-value sidecar describing grids, sampling and model identity.
    pub fn sidecar_text(&self) -> String {
        let mut s = String::new();
        let g = &self.state_grid;
        let o = self.output_relation.output_grid();
        let _ = writeln!(s, "model {}", self.tag.id);
        for (k, v) in &self.tag.params {
            let _ = writeln!(s, "param {k} {v:?}");
        }
        let _ = writeln!(s, "state.lower {}", join(g.lower()));
        let _ = writeln!(s, "state.eta {}", join(g.eta()));
        let _ = writeln!(s, "state.cells {}", join_usize(g.cells_per_dim()));
        let _ = writeln!(s, "state.convention {}", g.convention().name());
        let _ = writeln!(s, "input.lower {}", join(self.input_grid.lower()));
        let _ = writeln!(s, "input.eta {}", join(self.input_grid.eta()));
        let _ = writeln!(s, "input.cells {}", join_usize(self.input_grid.cells_per_dim()));
        let _ = writeln!(s, "output.coordinate {}", self.output_relation.coordinate());
        let _ = writeln!(s, "output.lower {}", join(o.lower()));
        let _ = writeln!(s, "output.eta {}", join(o.eta()));
        let _ = writeln!(s, "output.cells {}", join_usize(o.cells_per_dim()));
        let _ = writeln!(s, "output.convention {}", o.convention().name());
        let _ = writeln!(s, "tau {:?}", self.params.tau);
        let _ = writeln!(s, "epsilon {:?}", self.params.epsilon);
        let _ = writeln!(s, "substeps {}", self.params.substeps);
        let _ = writeln!(s, "reach {}", self.params.method.name());
        s
    }

    pub fn from_parts(system: FiniteSystem, sidecar: &str) -> Result<SymbolicModel> {
        let mut kv: Vec<(usize, &str, Vec<&str>)> = Vec::new();
        for (i, line) in sidecar.lines().enumerate() {
            let mut it = line.split_whitespace();
            if let Some(k) = it.next() {
                kv.push((i + 1, k, it.collect()));
            }
        }
        let get = |key: &str| -> Result<&Vec<&str>> {
            kv.iter()
                .find(|e| e.1 == key)
                .map(|e| &e.2)
                .ok_or_else(|| Error::parse(0, format!("sidecar lacks `{key}`")))
        };
        let floats = |key: &str| -> Result<Vec<f64>> {
            get(key)?
                .iter()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(0, format!("bad number in `{key}`"))))
                .collect()
        };
        let ints = |key: &str| -> Result<Vec<usize>> {
            get(key)?
                .iter()
                .map(|t| t.parse::<usize>().map_err(|_| Error::parse(0, format!("bad integer in `{key}`"))))
                .collect()
        };
        let conv = |key: &str| -> Result<Convention> {
            let v = get(key)?;
            v.first()
                .and_then(|s| Convention::parse(s))
                .ok_or_else(|| Error::parse(0, format!("bad convention in `{key}`")))
        };
        let mut params = Vec::new();
        for (line, k, v) in &kv {
            if *k == "param" {
                if v.len() != 2 {
                    return Err(Error::parse(*line, "param takes a name and a value"));
                }
                let x = v[1].parse::<f64>().map_err(|_| Error::parse(*line, "bad parameter value"))?;
                params.push((v[0].to_string(), x));
            }
        }
        let tag = ModelTag {
            id: get("model")?.first().copied().unwrap_or_default().to_string(),
            params,
        };
        let state_grid = GridQuantizer::new(floats("state.lower")?, floats("state.eta")?, ints("state.cells")?, conv("state.convention")?)?;
        let input_grid = GridQuantizer::new(floats("input.lower")?, floats("input.eta")?, ints("input.cells")?, Convention::Centered)?;
        let output_grid = GridQuantizer::new(floats("output.lower")?, floats("output.eta")?, ints("output.cells")?, conv("output.convention")?)?;
        let coord = ints("output.coordinate")?.first().copied().unwrap_or(0);
        let output_relation = build_output_relation(&state_grid, &output_grid, coord)?;
        let method = get("reach")?
            .first()
            .and_then(|s| ReachMethod::parse(s))
            .ok_or_else(|| Error::parse(0, "bad reach method"))?;
        let p = AbstractionParams {
            tau: floats("tau")?[0],
            epsilon: floats("epsilon")?[0],
            substeps: ints("substeps")?[0],
            method,
        };
        if system.num_states() != state_grid.num_cells()
            || system.num_inputs() != input_grid.num_cells()
            || system.output_map() != output_relation.state_map()
        {
            return Err(Error::Inconsistent("sidecar grids do not match the serialized system".into()));
        }
        Ok(SymbolicModel {
            system,
            state_grid,
            input_grid,
            output_relation,
            params: p,
            tag,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::LinearDynamics;
    use crate::grid::{build_input_grid, build_state_grid};
    use nalgebra::DMatrix;

    fn di() -> LinearDynamics {
        LinearDynamics::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn degenerate_cell_center_method() {
        let d = di();
        let cell = Rect::new(vec![0.1, 0.2], vec![0.1, 0.2]);
        let p = AbstractionParams::new(0.05);
        let g = d.growth_matrix(&cell, &[1.0]);
        let b = reach_box(&d, &g, &cell, &[1.0], &p).unwrap();
        assert!((b.lower[0] - (0.1 + 0.05 * 0.2 + 0.00125)).abs() < 1e-12);
        assert_eq!(b.lower, b.upper);
    }

    #[test]
    fn one_cell_self_loops() {
        // ẋ = 0: every input keeps the state where it is.
        let z = LinearDynamics::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap();
        let sg = build_state_grid(&[0.0], &[1.0], &[1.0], Convention::Partition).unwrap();
        let ig = build_input_grid(&[-1.0], &[1.0], &[1.0]).unwrap();
        let rel = build_output_relation(&sg, &sg, 0).unwrap();
        let m = build_symbolic_model(&z, &sg, &ig, &rel, AbstractionParams::new(0.1), ModelTag::default()).unwrap();
        assert_eq!(m.stats(), ModelStats { states: 1, transitions: 3, inputs: 3, outputs: 1 });
    }

    #[test]
    fn epsilon_monotone() {
        let d = di();
        let sg = build_state_grid(&[-1.0, -1.0], &[1.0, 1.0], &[0.2, 0.2], Convention::Partition).unwrap();
        let ig = build_input_grid(&[-2.0], &[2.0], &[1.0]).unwrap();
        let og = build_state_grid(&[-1.0], &[1.0], &[0.2], Convention::Partition).unwrap();
        let rel = build_output_relation(&sg, &og, 0).unwrap();
        let mut p = AbstractionParams::new(0.1);
        let a = build_symbolic_model(&d, &sg, &ig, &rel, p, ModelTag::default()).unwrap();
        p.epsilon = 0.01;
        let b = build_symbolic_model(&d, &sg, &ig, &rel, p, ModelTag::default()).unwrap();
        for x in 0..a.system.num_states() as u32 {
            for u in 0..a.system.num_inputs() as u32 {
                let ra = a.system.succ(x, u);
                let rb = b.system.succ(x, u);
                // A row may vanish when the inflated box leaves the domain.
                if !rb.is_empty() {
                    assert!(ra.iter().all(|v| rb.contains(v)));
                }
            }
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let d = di();
        let sg = build_state_grid(&[-1.0, -1.0], &[1.0, 1.0], &[0.5, 0.5], Convention::Partition).unwrap();
        let ig = build_input_grid(&[-1.0], &[1.0], &[1.0]).unwrap();
        let og = build_state_grid(&[-1.0], &[1.0], &[0.5], Convention::Partition).unwrap();
        let rel = build_output_relation(&sg, &og, 0).unwrap();
        let tag = ModelTag { id: "double_integrator".into(), params: vec![] };
        let m = build_symbolic_model(&d, &sg, &ig, &rel, AbstractionParams::new(0.05), tag).unwrap();
        let sys = FiniteSystem::from_text(&m.system.to_text()).unwrap();
        let back = SymbolicModel::from_parts(sys, &m.sidecar_text()).unwrap();
        assert_eq!(back, m);
    }
}
