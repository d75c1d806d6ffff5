//! Discrete-time Luenberger observers for single-output LTI plants and the
//! blind-period input search.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::Rect;
use crate::system::FiniteSystem;

/// `exp(Aτ)` and `∫₀^τ exp(As) ds · B` from the exponential of the augmented
/// matrix `[[A, B], [0, 0]]·τ` (scaling and squaring over a Taylor series).
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::Precondition("sampling period must be positive".into()));
    }
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, m)).copy_from(b);
    aug *= tau;
    let norm = aug.abs().row_sum().max();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = &aug / 2f64.powi(s);
    let mut sum = DMatrix::identity(n + m, n + m);
    let mut term = DMatrix::identity(n + m, n + m);
    let mut converged = false;
    for k in 1..60 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= 1e-17 * sum.amax() {
            converged = true;
            break;
        }
    }
    if !converged || sum.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix exponential series did not converge".into()));
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    Ok((sum.view((0, 0), (n, n)).into_owned(), sum.view((0, n), (n, m)).into_owned()))
}

/// ẋ = A x + B u, y = C x, sampled with period τ.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPlant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub tau: f64,
    pub ad: DMatrix<f64>,
    pub bd: DMatrix<f64>,
}

fn observability(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut o = DMatrix::zeros(n, n);
    let mut row = c.clone();
    for i in 0..n {
        o.set_row(i, &row.row(0));
        row = &row * a;
    }
    o
}

fn full_rank(m: &DMatrix<f64>) -> bool {
    let tol = 1e-10 * m.amax().max(1.0);
    m.clone().svd(false, false).rank(tol) == m.nrows()
}

impl LinearPlant {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, tau: f64) -> Result<Self> {
        let n = a.nrows();
        if !a.is_square() || b.nrows() != n || c.nrows() != 1 || c.ncols() != n {
            return Err(Error::Config("plant needs square A, B with n rows and a 1×n C".into()));
        }
        let (ad, bd) = discretize(&a, &b, tau)?;
        Ok(LinearPlant { a, b, c, tau, ad, bd })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_observable(&self) -> bool {
        full_rank(&observability(&self.ad, &self.c))
    }

    pub fn output(&self, x: &DVector<f64>) -> f64 {
        (&self.c * x)[0]
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.ad * x + &self.bd * u
    }
}

/// Gain and precision contract of a designed observer.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSpec {
    pub gain: DVector<f64>,
    pub epsilon: f64,
    pub tau: f64,
    pub poles: Vec<f64>,
}

/// Default poles: deadbeat up to dimension 2, 0.1 otherwise.
pub fn default_poles(n: usize) -> Vec<f64> {
    vec![if n <= 2 { 0.0 } else { 0.1 }; n]
}

/// Place the eigenvalues of the estimation error matrix `(I − L C) A_d` at
/// the given real poles (Ackermann on the pair `(A_d, C A_d)`).
pub fn design_luenberger(plant: &LinearPlant, poles: &[f64], epsilon: f64) -> Result<ObserverSpec> {
    let n = plant.dim();
    if n == 0 || n > 4 {
        return Err(Error::Precondition(format!("observer design supports 1 to 4 states, got {n}")));
    }
    if poles.len() != n {
        return Err(Error::Config(format!("expected {n} poles, got {}", poles.len())));
    }
    if let Some(p) = poles.iter().find(|p| !(p.abs() < 1.0)) {
        return Err(Error::Config(format!("pole {p} is not strictly inside the unit circle")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config("observer epsilon must be positive".into()));
    }
    if !plant.is_observable() {
        return Err(Error::Precondition("(A, C) is not observable".into()));
    }
    let ad = &plant.ad;
    let cp = &plant.c * ad;
    let o = observability(ad, &cp);
    let o_inv = o
        .clone()
        .try_inverse()
        .filter(|_| full_rank(&o))
        .ok_or_else(|| Error::Precondition("(A_d, C A_d) is not observable".into()))?;
    let mut p = DMatrix::<f64>::identity(n, n);
    for &lambda in poles {
        p = &p * (ad - DMatrix::<f64>::identity(n, n) * lambda);
    }
    let mut e_n = DVector::<f64>::zeros(n);
    e_n[n - 1] = 1.0;
    let gain = p * o_inv * e_n;
    Ok(ObserverSpec { gain, epsilon, tau: plant.tau, poles: poles.to_vec() })
}

impl ObserverSpec {
    pub fn error_matrix(&self, plant: &LinearPlant) -> DMatrix<f64> {
        let n = plant.dim();
        (DMatrix::identity(n, n) - &self.gain * &plant.c) * &plant.ad
    }

    pub fn spectral_radius(&self, plant: &LinearPlant) -> f64 {
        self.error_matrix(plant).complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn gain_text(&self) -> String {
        self.gain.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
    }
}

/// Correct the initial guess with the first measurement.
pub fn observer_init(spec: &ObserverSpec, plant: &LinearPlant, xhat0: &DVector<f64>, y0: f64) -> DVector<f64> {
    xhat0 + &spec.gain * (y0 - plant.output(xhat0))
}

/// Predict with the applied input, then correct with the new measurement.
pub fn observer_step(spec: &ObserverSpec, plant: &LinearPlant, xhat: &DVector<f64>, u: &DVector<f64>, y: f64) -> DVector<f64> {
    let pred = plant.step(xhat, u);
    let innov = y - plant.output(&pred);
    pred + &spec.gain * innov
}

/// Largest ∞-norm estimation error over steps ≥ 1 of random runs with
/// uniform initial states, initial estimates and inputs.
pub fn monte_carlo_error(
    spec: &ObserverSpec,
    plant: &LinearPlant,
    domain: &Rect,
    inputs: &Rect,
    runs: usize,
    steps: usize,
    seed: u64,
) -> f64 {
    let sample = |rng: &mut ChaCha8Rng, r: &Rect| {
        DVector::from_iterator(r.dim(), (0..r.dim()).map(|i| rng.gen_range(r.lower[i]..=r.upper[i])))
    };
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (run as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut x = sample(&mut rng, domain);
            let mut xhat = observer_init(spec, plant, &sample(&mut rng, domain), plant.output(&x));
            let mut worst = 0.0f64;
            for _ in 0..steps {
                let u = sample(&mut rng, inputs);
                x = plant.step(&x, &u);
                xhat = observer_step(spec, plant, &xhat, &u, plant.output(&x));
                worst = worst.max((&xhat - &x).amax());
            }
            worst
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlindPlan {
    pub input: u32,
    /// Cells from which the blind input keeps every successor in the domain.
    pub cells: Vec<u32>,
}

/// Pick the blind-period input: the candidate whose successors stay in the
/// controller domain from the most domain cells. Earlier candidates win ties.
pub fn blind_period_plan(sys: &FiniteSystem, domain: &[u32], candidates: &[u32]) -> Result<BlindPlan> {
    let mut inside = sys.empty_set();
    for &x in domain {
        if x as usize >= sys.num_states() {
            return Err(Error::InvalidId { kind: "state", id: x as usize, len: sys.num_states() });
        }
        inside.insert(x as usize);
    }
    let mut best: Option<BlindPlan> = None;
    for &u in candidates {
        if u as usize >= sys.num_inputs() {
            return Err(Error::InvalidId { kind: "input", id: u as usize, len: sys.num_inputs() });
        }
        let cells: Vec<u32> = inside
            .ones()
            .filter(|&x| {
                let p = sys.succ(x as u32, u);
                !p.is_empty() && p.iter().all(|&v| inside.contains(v as usize))
            })
            .map(|x| x as u32)
            .collect();
        if best.as_ref().map_or(true, |b| cells.len() > b.cells.len()) {
            best = Some(BlindPlan { input: u, cells });
        }
    }
    best.filter(|b| !b.cells.is_empty())
        .ok_or_else(|| Error::NotFound("no candidate input keeps any domain cell in the domain".into()))
}
