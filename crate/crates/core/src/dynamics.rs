//! Continuous-time dynamics, fixed-step RK4 and growth bounds.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Rect;

/// Vector field with a growth bound usable for reachable-set
/// over-approximation.
pub trait Dynamics: Send + Sync {
    fn dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]);
    /// Row-major n×n matrix L with nonnegative off-diagonal entries such
    /// that the radius ODE ṙ = L r bounds the spread of trajectories started
    /// inside `domain` under input `u`.
    fn growth_matrix(&self, domain: &Rect, u: &[f64]) -> Vec<f64>;
}

/// ẋ = A x + B u.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Config("A must be square and B must have as many rows as A".into()));
        }
        Ok(LinearDynamics { a, b })
    }
}

impl Dynamics for LinearDynamics {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn field(&self, x: &[f64], u: &[f64], dx: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.a[(i, j)] * x[j];
            }
            for (j, uj) in u.iter().enumerate() {
                s += self.b[(i, j)] * uj;
            }
            dx[i] = s;
        }
    }

    fn growth_matrix(&self, _domain: &Rect, _u: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = self.a[(i, j)];
                l[i * n + j] = if i == j { v } else { v.abs() };
            }
        }
        l
    }
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite value in {what}")))
    }
}

/// Classical RK4 with `substeps` equal steps over `tau`, input held.
pub fn integrate_rk4(sys: &dyn Dynamics, x: &[f64], u: &[f64], tau: f64, substeps: usize) -> Result<Vec<f64>> {
    if substeps == 0 {
        return Err(Error::Precondition("substeps must be at least 1".into()));
    }
    let n = sys.dim();
    let h = tau / substeps as f64;
    let mut x = x.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..substeps {
        sys.field(&x, u, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        sys.field(&tmp, u, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        sys.field(&tmp, u, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + h * k3[i];
        }
        sys.field(&tmp, u, &mut k4);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(&x, "RK4 state")?;
    }
    Ok(x)
}

/// Integrate ṙ = L r by RK4 over `tau`.
pub fn integrate_growth(l: &[f64], r0: &[f64], tau: f64, substeps: usize) -> Result<Vec<f64>> {
    let n = r0.len();
    let lin = |r: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = (0..n).map(|j| l[i * n + j] * r[j]).sum();
        }
    };
    let h = tau / substeps.max(1) as f64;
    let mut r = r0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    for _ in 0..substeps.max(1) {
        lin(&r, &mut k1);
        for i in 0..n {
            tmp[i] = r[i] + 0.5 * h * k1[i];
        }
        lin(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = r[i] + 0.5 * h * k2[i];
        }
        lin(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = r[i] + h * k3[i];
        }
        lin(&tmp, &mut k4);
        for i in 0..n {
            r[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    check_finite(&r, "growth bound")?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn double_integrator() -> LinearDynamics {
        LinearDynamics::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap()
    }

    #[test]
    fn double_integrator_exact() {
        let x = integrate_rk4(&double_integrator(), &[0.0, 0.0], &[1.0], 0.05, 5).unwrap();
        assert!((x[0] - 0.00125).abs() < 1e-12);
        assert!((x[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_tau_is_identity() {
        let x = integrate_rk4(&double_integrator(), &[0.3, -0.2], &[4.0], 0.0, 5).unwrap();
        assert_eq!(x, vec![0.3, -0.2]);
    }

    #[test]
    fn growth_of_double_integrator() {
        let d = double_integrator();
        let l = d.growth_matrix(&Rect::new(vec![-1.0, -1.0], vec![1.0, 1.0]), &[0.0]);
        let r = integrate_growth(&l, &[0.02, 0.01], 0.05, 5).unwrap();
        assert!((r[0] - (0.02 + 0.05 * 0.01)).abs() < 1e-15);
        assert!((r[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_substeps_rejected() {
        assert!(integrate_rk4(&double_integrator(), &[0.0, 0.0], &[0.0], 1.0, 0).is_err());
    }
}
