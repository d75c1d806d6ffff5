//! Builtin continuous-time models.

use nalgebra::DMatrix;
use symctl_core::dynamics::{Dynamics, LinearDynamics};
use symctl_core::grid::Rect;

use crate::error::{CliError, CliResult};

/// θ̈ = −(g/l) sin θ − (k/m) θ̇ + u.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pendulum {
    pub g: f64,
    pub l: f64,
    pub m: f64,
    pub k: f64,
}

/// max |cos θ| over [lo, hi].
fn max_abs_cos(lo: f64, hi: f64) -> f64 {
    let pi = std::f64::consts::PI;
    if (lo / pi).ceil() <= (hi / pi).floor() {
        1.0
    } else {
        lo.cos().abs().max(hi.cos().abs())
    }
}

impl Dynamics for Pendulum {
    fn dim(&self) -> usize {
        2
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        dx[0] = x[1];
        dx[1] = -self.g / self.l * x[0].sin() - self.k / self.m * x[1] + u[0];
    }

    fn growth_matrix(&self, domain: &Rect, _u: &[f64]) -> Vec<f64> {
        let c = max_abs_cos(domain.lower[0], domain.upper[0]);
        vec![0.0, 1.0, self.g / self.l * c, -self.k / self.m]
    }
}

#[derive(Debug, Clone)]
pub enum Plant {
    Linear(LinearDynamics),
    Pendulum(Pendulum),
}

#[derive(Debug, Clone)]
pub struct BuiltinModel {
    pub id: String,
    pub params: Vec<(String, f64)>,
    pub plant: Plant,
}

impl BuiltinModel {
    pub fn dynamics(&self) -> &dyn Dynamics {
        match &self.plant {
            Plant::Linear(l) => l,
            Plant::Pendulum(p) => p,
        }
    }

    /// (A, B) for linear models.
    pub fn linear(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>)> {
        match &self.plant {
            Plant::Linear(l) => Some((&l.a, &l.b)),
            Plant::Pendulum(_) => None,
        }
    }
}

pub const MODEL_IDS: [&str; 3] = ["dcmotor", "double_integrator", "pendulum"];

fn defaults(id: &str) -> Option<Vec<(&'static str, f64)>> {
    match id {
        "dcmotor" => Some(vec![("L", 5e-2), ("R", 5.0), ("J", 5e-4), ("b", 1e-2), ("K", 0.1)]),
        "double_integrator" => Some(vec![]),
        "pendulum" => Some(vec![("g", 9.8), ("l", 5.0), ("m", 0.5), ("k", 3.0)]),
        _ => None,
    }
}

fn bad(msg: String) -> CliError {
    CliError::Config { line: 0, msg }
}

/// Instantiate a builtin model; parameters missing from `given` take their
/// defaults, unknown names are rejected.
pub fn instantiate(id: &str, given: &[(String, f64)]) -> CliResult<BuiltinModel> {
    let mut params = defaults(id).ok_or_else(|| bad(format!("unknown model `{id}` (known: {})", MODEL_IDS.join(", "))))?;
    for (name, v) in given {
        let slot = params
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| bad(format!("model `{id}` has no parameter `{name}`")))?;
        slot.1 = *v;
    }
    let get = |n: &str| params.iter().find(|(k, _)| *k == n).unwrap().1;
    let plant = match id {
        "dcmotor" => {
            let (l, r, j, b, k) = (get("L"), get("R"), get("J"), get("b"), get("K"));
            if l <= 0.0 || j <= 0.0 {
                return Err(bad("dcmotor needs L > 0 and J > 0".into()));
            }
            let a = DMatrix::from_row_slice(3, 3, &[-r / l, 0.0, -k / l, 0.0, 0.0, 1.0, k / j, 0.0, -b / j]);
            let bm = DMatrix::from_row_slice(3, 1, &[1.0 / l, 0.0, 0.0]);
            Plant::Linear(LinearDynamics::new(a, bm)?)
        }
        "double_integrator" => Plant::Linear(LinearDynamics::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )?),
        _ => {
            let p = Pendulum { g: get("g"), l: get("l"), m: get("m"), k: get("k") };
            if p.l <= 0.0 || p.m <= 0.0 {
                return Err(bad("pendulum needs l > 0 and m > 0".into()));
            }
            Plant::Pendulum(p)
        }
    };
    Ok(BuiltinModel {
        id: id.to_string(),
        params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        plant,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Independently written right-hand sides.
    fn dc_rhs(x: &[f64], u: f64) -> [f64; 3] {
        let (ind, res, inertia, fric, kt) = (0.05, 5.0, 0.0005, 0.01, 0.1);
        let (current, _angle, speed) = (x[0], x[1], x[2]);
        [(u - res * current - kt * speed) / ind, speed, (kt * current - fric * speed) / inertia]
    }

    fn pend_rhs(x: &[f64], u: f64) -> [f64; 2] {
        let (theta, omega) = (x[0], x[1]);
        [omega, u - 9.8 * theta.sin() / 5.0 - 3.0 * omega / 0.5]
    }

    #[test]
    fn fields_match_independent_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dc = instantiate("dcmotor", &[]).unwrap();
        let di = instantiate("double_integrator", &[]).unwrap();
        let pe = instantiate("pendulum", &[]).unwrap();
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let u = rng.gen_range(-10.0..10.0);
            let mut dx = [0.0; 3];
            dc.dynamics().field(&x, &[u], &mut dx);
            for (a, b) in dx.iter().zip(dc_rhs(&x, u)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
            }
            let mut dx = [0.0; 2];
            di.dynamics().field(&x[..2], &[u], &mut dx);
            assert_eq!(dx, [x[1], u]);
            pe.dynamics().field(&x[..2], &[u], &mut dx);
            for (a, b) in dx.iter().zip(pend_rhs(&x[..2], u)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} {b}");
            }
        }
    }

    #[test]
    fn parameters() {
        let p = instantiate("pendulum", &[("k".into(), 1.0)]).unwrap();
        assert!(p.params.contains(&("k".to_string(), 1.0)));
        assert!(p.linear().is_none());
        assert!(instantiate("pendulum", &[("q".into(), 1.0)]).is_err());
        assert!(instantiate("cartpole", &[]).is_err());
        let dc = instantiate("dcmotor", &[]).unwrap();
        let (a, b) = dc.linear().unwrap();
        assert_eq!(a[(0, 0)], -100.0);
        assert_eq!(b[(0, 0)], 20.0);
    }

    #[test]
    fn pendulum_growth_bounds_jacobian() {
        let p = Pendulum { g: 9.8, l: 5.0, m: 0.5, k: 3.0 };
        let l = p.growth_matrix(&Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]), &[0.0]);
        assert_eq!(l[2], 9.8 / 5.0);
        let l = p.growth_matrix(&Rect::new(vec![0.5, -1.0], vec![1.0, 1.0]), &[0.0]);
        assert!((l[2] - 9.8 / 5.0 * 0.5f64.cos()).abs() < 1e-15);
        assert_eq!(max_abs_cos(2.0, 4.0), 1.0);
    }
}
