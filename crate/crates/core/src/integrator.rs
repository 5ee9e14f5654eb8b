//! Linear time-invariant systems `y' = M y + B u(t)` driven by sampled inputs.
//!
//! Inputs are linearly interpolated between samples. The exponential
//! integrator is exact for such inputs; RK4 exists as an independent check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::{ComplexSignal, TimeGrid};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: DMatrix<Complex64>,
    pub input: DMatrix<Complex64>,
}

impl LinearSystem {
    pub fn new(matrix: DMatrix<Complex64>, input: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() || input.nrows() != matrix.nrows() {
            return Err(Error::InvalidInput(format!(
                "system matrix {}x{} incompatible with input matrix {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                input.nrows(),
                input.ncols()
            )));
        }
        Ok(Self { matrix, input })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.input.ncols()
    }

    fn check_inputs(&self, inputs: &[&ComplexSignal]) -> Result<TimeGrid> {
        if inputs.len() != self.n_inputs() {
            return Err(Error::InvalidInput(format!(
                "expected {} input signals, got {}",
                self.n_inputs(),
                inputs.len()
            )));
        }
        let grid = *inputs
            .first()
            .ok_or_else(|| Error::InvalidInput("system without inputs".into()))?
            .grid();
        for s in &inputs[1..] {
            grid.ensure_same(s.grid(), "system inputs")?;
        }
        Ok(grid)
    }

    fn input_at(inputs: &[&ComplexSignal], k: usize) -> DVector<Complex64> {
        DVector::from_iterator(inputs.len(), inputs.iter().map(|s| s.samples()[k]))
    }

    /// Step matrices `(Φ, P₀, P₁)` with `y_{n+1} = Φ yₙ + P₀ uₙ + P₁ u_{n+1}`.
    fn step_matrices(
        &self,
        h: f64,
    ) -> (DMatrix<Complex64>, DMatrix<Complex64>, DMatrix<Complex64>) {
        let n = self.dim();
        let m = self.n_inputs();
        // state (y, u, u') with u'' = 0
        let mut aug = DMatrix::<Complex64>::zeros(n + 2 * m, n + 2 * m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.matrix * Complex64::new(h, 0.0)));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.input * Complex64::new(h, 0.0)));
        for i in 0..m {
            aug[(n + i, n + m + i)] = Complex64::new(h, 0.0);
        }
        let e = aug.exp();
        let phi = e.view((0, 0), (n, n)).into_owned();
        let psi_u = e.view((0, n), (n, m)).into_owned();
        // slope variable is du/dt, so (u_{n+1} − u_n)/h enters through psi_s
        let psi_s = e.view((0, n + m), (n, m)).into_owned() / Complex64::new(h, 0.0);
        let p0 = &psi_u - &psi_s;
        (phi, p0, psi_s)
    }

    /// Exact propagation for piecewise-linear inputs; returns `y` at every grid point.
    pub fn propagate(
        &self,
        inputs: &[&ComplexSignal],
        y0: &DVector<Complex64>,
    ) -> Result<Vec<DVector<Complex64>>> {
        let grid = self.check_inputs(inputs)?;
        if y0.len() != self.dim() {
            return Err(Error::InvalidInput("initial state has wrong dimension".into()));
        }
        let (phi, p0, p1) = self.step_matrices(grid.dt());
        let mut out = Vec::with_capacity(grid.n_samples());
        out.push(y0.clone());
        let mut u_prev = Self::input_at(inputs, 0);
        for k in 1..grid.n_samples() {
            let u_next = Self::input_at(inputs, k);
            let y = &phi * &out[k - 1] + &p0 * &u_prev + &p1 * &u_next;
            out.push(y);
            u_prev = u_next;
        }
        Ok(out)
    }

    /// Classical RK4 with `substeps` steps per sample interval.
    pub fn propagate_rk4(
        &self,
        inputs: &[&ComplexSignal],
        y0: &DVector<Complex64>,
        substeps: usize,
    ) -> Result<Vec<DVector<Complex64>>> {
        let grid = self.check_inputs(inputs)?;
        let substeps = substeps.max(1);
        let h = grid.dt() / substeps as f64;
        let hc = Complex64::new(h, 0.0);
        let half = Complex64::new(0.5, 0.0);
        let mut out = Vec::with_capacity(grid.n_samples());
        out.push(y0.clone());
        let mut y = y0.clone();
        for k in 1..grid.n_samples() {
            let u0 = Self::input_at(inputs, k - 1);
            let u1 = Self::input_at(inputs, k);
            let u_at = |frac: f64| -> DVector<Complex64> {
                &u0 * Complex64::new(1.0 - frac, 0.0) + &u1 * Complex64::new(frac, 0.0)
            };
            let f = |y: &DVector<Complex64>, u: &DVector<Complex64>| &self.matrix * y + &self.input * u;
            for s in 0..substeps {
                let a = s as f64 / substeps as f64;
                let b = (s as f64 + 0.5) / substeps as f64;
                let c = (s as f64 + 1.0) / substeps as f64;
                let (ua, ub, uc) = (u_at(a), u_at(b), u_at(c));
                let k1 = f(&y, &ua);
                let k2 = f(&(&y + &k1 * (hc * half)), &ub);
                let k3 = f(&(&y + &k2 * (hc * half)), &ub);
                let k4 = f(&(&y + &k3 * hc), &uc);
                y += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
                    * (hc / Complex64::new(6.0, 0.0));
            }
            out.push(y.clone());
        }
        Ok(out)
    }
}

/// Split a state history into one signal per component.
pub fn components(grid: TimeGrid, states: &[DVector<Complex64>]) -> Vec<ComplexSignal> {
    let n = states.first().map_or(0, |s| s.len());
    (0..n)
        .map(|i| {
            ComplexSignal::new(grid, states.iter().map(|s| s[i]).collect())
                .expect("one state per grid point")
        })
        .collect()
}

/// Scalar system `y' = e y + b u`.
pub fn scalar_system(e: Complex64, b: Complex64) -> LinearSystem {
    LinearSystem {
        matrix: DMatrix::from_element(1, 1, e),
        input: DMatrix::from_element(1, 1, b),
    }
}

pub(crate) fn zero_state(n: usize) -> DVector<Complex64> {
    DVector::from_element(n, ZERO)
}
