//! Time grids, sampled complex signals, trial pulses and the Fourier convention.
//!
//! All rates are angular frequencies in rad/µs and all times are in µs.
//!
//! The Fourier transform used throughout the crate is
//!
//! ```text
//! F(f)(ω) = ∫ f(t) e^{iωt} dt,        f(t) = (1/2π) ∫ F(ω) e^{-iωt} dω
//! ```
//!
//! so that `d/dt ↔ -iω` and `F(i^n dⁿΩ/dtⁿ) = ωⁿ F(Ω)`. A mode `e^{Et}` with
//! `Re E < 0` shows up as a pole at `ω = iE`, in the lower half plane.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform sampling grid on `[t_start, t_end]`, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_samples: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_samples: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) {
            return Err(Error::InvalidGrid("grid bounds must be finite".into()));
        }
        if t_end <= t_start {
            return Err(Error::InvalidGrid(format!(
                "t_end ({t_end}) must exceed t_start ({t_start})"
            )));
        }
        if n_samples < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 samples, got {n_samples}"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            n_samples,
        })
    }

    /// Grid on `[t_start, t_end]` whose spacing does not exceed `max_dt`.
    pub fn with_max_step(t_start: f64, t_end: f64, max_dt: f64) -> Result<Self> {
        if !(max_dt > 0.0) {
            return Err(Error::InvalidGrid(format!("step must be positive, got {max_dt}")));
        }
        let intervals = ((t_end - t_start) / max_dt).ceil().max(1.0) as usize;
        Self::new(t_start, t_end, intervals + 1)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_samples - 1) as f64
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn time(&self, index: usize) -> f64 {
        if index + 1 == self.n_samples {
            self.t_end
        } else {
            self.t_start + index as f64 * self.dt()
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |i| self.time(i))
    }

    /// Index of the sample closest to `t`, clamped to the grid.
    pub fn nearest_index(&self, t: f64) -> usize {
        let x = ((t - self.t_start) / self.dt()).round();
        x.clamp(0.0, (self.n_samples - 1) as f64) as usize
    }

    /// Same interval with `factor` times as many intervals.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            n_samples: (self.n_samples - 1) * factor + 1,
            ..*self
        }
    }

    /// Grid with the same spacing extended (or cut) to end at or just past `t_end`.
    pub fn extended_to(&self, t_end: f64) -> Result<Self> {
        let dt = self.dt();
        let intervals = ((t_end - self.t_start) / dt - 1e-9).ceil().max(1.0) as usize;
        Self::new(self.t_start, self.t_start + intervals as f64 * dt, intervals + 1)
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        let tol = 1e-9 * self.duration().abs().max(1.0);
        if self.n_samples != other.n_samples
            || (self.t_start - other.t_start).abs() > tol
            || (self.t_end - other.t_end).abs() > tol
        {
            return Err(Error::GridMismatch(format!(
                "{what}: [{}, {}]x{} vs [{}, {}]x{}",
                self.t_start,
                self.t_end,
                self.n_samples,
                other.t_start,
                other.t_end,
                other.n_samples
            )));
        }
        Ok(())
    }
}

/// Complex amplitude sampled on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    grid: TimeGrid,
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(grid: TimeGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.n_samples() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {}",
                samples.len(),
                grid.n_samples()
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            samples: vec![Complex64::new(0.0, 0.0); grid.n_samples()],
        }
    }

    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let samples = grid.times().map(&mut f).collect();
        Self { grid, samples }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Index and magnitude of the largest sample.
    pub fn peak(&self) -> (usize, f64) {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, z)| (i, z.norm()))
            .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
    }

    /// Sample closest to time `t`.
    pub fn at(&self, t: f64) -> Complex64 {
        self.samples[self.grid.nearest_index(t)]
    }

    /// Discrete L2 norm, `sqrt(Σ|x|² dt)`.
    pub fn l2_norm(&self) -> f64 {
        (self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dt()).sqrt()
    }

    /// Trapezoidal `∫|x|² dt`.
    pub fn energy(&self) -> f64 {
        let w: Vec<f64> = self.samples.iter().map(|z| z.norm_sqr()).collect();
        trapezoid(&w, self.grid.dt())
    }

    /// `‖self − reference‖ / ‖reference‖`.
    pub fn relative_l2(&self, reference: &ComplexSignal) -> Result<f64> {
        self.grid.ensure_same(&reference.grid, "relative_l2")?;
        let num: f64 = self
            .samples
            .iter()
            .zip(&reference.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = reference.samples.iter().map(|z| z.norm_sqr()).sum();
        if den == 0.0 {
            return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
        }
        Ok((num / den).sqrt())
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn add(&self, other: &ComplexSignal) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ComplexSignal) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(
        &self,
        other: &ComplexSignal,
        f: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.grid.ensure_same(&other.grid, "signal arithmetic")?;
        Ok(Self {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }
}

/// Trapezoidal rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])) * dt,
    }
}

/// Envelope family of a [`TrialPulse`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseFamily {
    /// `sin^p(π (t − t_start)/T)`: derivatives below order `p` vanish at both ends.
    SinePower { power: u32 },
    /// `exp(−(t − center)²/2σ²)` cut to the window.
    TruncatedGaussian { sigma: f64, center: f64 },
}

impl PulseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            PulseFamily::SinePower { .. } => "sine-power",
            PulseFamily::TruncatedGaussian { .. } => "truncated-gaussian",
        }
    }

    pub fn max_order(&self) -> usize {
        match self {
            PulseFamily::SinePower { .. } => SINE_POWER_MAX_ORDER,
            PulseFamily::TruncatedGaussian { .. } => GAUSSIAN_MAX_ORDER,
        }
    }
}

const SINE_POWER_MAX_ORDER: usize = 24;
const GAUSSIAN_MAX_ORDER: usize = 24;

/// Smooth envelope `Ω(t)` supported on `window`, with closed-form derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialPulse {
    pub family: PulseFamily,
    pub amplitude: f64,
    pub window: TimeGrid,
}

impl TrialPulse {
    pub fn new(family: PulseFamily, amplitude: f64, window: TimeGrid) -> Result<Self> {
        match family {
            PulseFamily::SinePower { power: 0 } => {
                return Err(Error::InvalidInput("sine-power exponent must be ≥ 1".into()))
            }
            PulseFamily::TruncatedGaussian { sigma, .. } if !(sigma > 0.0) => {
                return Err(Error::InvalidInput(format!(
                    "gaussian sigma must be positive, got {sigma}"
                )))
            }
            _ => {}
        }
        Ok(Self {
            family,
            amplitude,
            window,
        })
    }

    pub fn sine_power(power: u32, amplitude: f64, window: TimeGrid) -> Result<Self> {
        Self::new(PulseFamily::SinePower { power }, amplitude, window)
    }

    /// Gaussian centred in the window with `σ = T / sigma_divisor`.
    pub fn centered_gaussian(sigma_divisor: f64, amplitude: f64, window: TimeGrid) -> Result<Self> {
        let t = window.duration();
        Self::new(
            PulseFamily::TruncatedGaussian {
                sigma: t / sigma_divisor,
                center: window.t_start() + 0.5 * t,
            },
            amplitude,
            window,
        )
    }

    fn check_order(&self, order: usize) -> Result<()> {
        let limit = self.family.max_order();
        if order > limit {
            return Err(Error::UnsupportedOrder {
                family: self.family.name(),
                order,
                limit,
            });
        }
        Ok(())
    }

    /// Derivative evaluator for `order`, valid for any `t` (zero outside the window).
    pub fn derivative(&self, order: usize) -> Result<Derivative> {
        self.check_order(order)?;
        let kernel = match self.family {
            PulseFamily::SinePower { power } => {
                let (p, q) = sine_power_polys(power as usize, order);
                Kernel::SinePower { p, q }
            }
            PulseFamily::TruncatedGaussian { .. } => Kernel::Gaussian {
                hermite: hermite_coefficients(order),
            },
        };
        Ok(Derivative {
            pulse: *self,
            order,
            kernel,
        })
    }

    /// `order`-th derivative sampled on an arbitrary grid.
    pub fn sample(&self, grid: &TimeGrid, order: usize) -> Result<ComplexSignal> {
        let d = self.derivative(order)?;
        Ok(ComplexSignal::from_fn(*grid, |t| Complex64::new(d.at(t), 0.0)))
    }

    /// `max(|Ω⁽ᵏ⁾(t_start)|, |Ω⁽ᵏ⁾(t_end)|) / max_t |Ω⁽ᵏ⁾|` on the pulse grid.
    pub fn boundary_residual(&self, order: usize) -> Result<f64> {
        let d = self.derivative(order)?;
        let peak = self
            .window
            .times()
            .map(|t| d.at(t).abs())
            .fold(0.0, f64::max);
        if peak == 0.0 {
            return Ok(0.0);
        }
        let edge = d.at(self.window.t_start()).abs().max(d.at(self.window.t_end()).abs());
        Ok(edge / peak)
    }

    /// Angular frequency above which the envelope carries no significant
    /// content: `pπ/T` for `sinᵖ` (a trigonometric polynomial), `6/σ` for the
    /// Gaussian (spectrum down by `e⁻¹⁸`).
    pub fn bandwidth(&self) -> f64 {
        match self.family {
            PulseFamily::SinePower { power } => power as f64 * PI / self.window.duration(),
            PulseFamily::TruncatedGaussian { sigma, .. } => 6.0 / sigma,
        }
    }

    /// Boundary residuals for orders `0..=max_order`, checked against `tolerance`.
    pub fn boundary_report(&self, max_order: usize, tolerance: f64) -> Result<BoundaryReport> {
        let residuals = (0..=max_order)
            .map(|k| self.boundary_residual(k))
            .collect::<Result<Vec<_>>>()?;
        let within_tolerance = residuals.iter().all(|r| *r <= tolerance);
        Ok(BoundaryReport {
            tolerance,
            residuals,
            within_tolerance,
        })
    }
}

/// Per-order boundary residuals of a trial pulse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub tolerance: f64,
    pub residuals: Vec<f64>,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone)]
enum Kernel {
    /// `dᵏ/dθᵏ sinᵖθ = P(sin θ) + cos θ · Q(sin θ)`.
    SinePower { p: Vec<f64>, q: Vec<f64> },
    /// Probabilists' Hermite polynomial `He_k`.
    Gaussian { hermite: Vec<f64> },
}

/// Closed-form evaluator for one derivative order of a trial pulse.
#[derive(Debug, Clone)]
pub struct Derivative {
    pulse: TrialPulse,
    order: usize,
    kernel: Kernel,
}

impl Derivative {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn at(&self, t: f64) -> f64 {
        let w = &self.pulse.window;
        if t < w.t_start() || t > w.t_end() {
            return 0.0;
        }
        let amp = self.pulse.amplitude;
        match (&self.kernel, self.pulse.family) {
            (Kernel::SinePower { p, q }, _) => {
                let span = w.duration();
                let tau = ((t - w.t_start()) / span).clamp(0.0, 1.0);
                // reflect so both endpoints hit sin(0) exactly
                let (s, c) = if tau <= 0.5 {
                    let th = PI * tau;
                    (th.sin(), th.cos())
                } else {
                    let th = PI * (1.0 - tau);
                    (th.sin(), -th.cos())
                };
                let scale = (PI / span).powi(self.order as i32);
                amp * scale * (horner(p, s) + c * horner(q, s))
            }
            (Kernel::Gaussian { hermite }, PulseFamily::TruncatedGaussian { sigma, center }) => {
                let u = (t - center) / sigma;
                let sign = if self.order.is_multiple_of(2) { 1.0 } else { -1.0 };
                amp * sign * horner(hermite, u) * (-0.5 * u * u).exp()
                    / sigma.powi(self.order as i32)
            }
            _ => unreachable!("kernel always matches its family"),
        }
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn poly_derivative(c: &[f64]) -> Vec<f64> {
    c.iter()
        .enumerate()
        .skip(1)
        .map(|(k, v)| k as f64 * v)
        .collect()
}

/// Polynomials `(P, Q)` with `dᵏ/dθᵏ sinᵖθ = P(s) + c·Q(s)`, `s = sin θ`, `c = cos θ`.
///
/// One derivative maps `(P, Q)` to `((1 − s²)Q' − sQ, P')`.
fn sine_power_polys(power: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; power + 1];
    p[power] = 1.0;
    let mut q: Vec<f64> = Vec::new();
    for _ in 0..order {
        let dq = poly_derivative(&q);
        let mut next_p = vec![0.0; q.len() + 1];
        for (k, v) in dq.iter().enumerate() {
            next_p[k] += v;
            next_p[k + 2] -= v;
        }
        for (k, v) in q.iter().enumerate() {
            next_p[k + 1] -= v;
        }
        let next_q = poly_derivative(&p);
        p = next_p;
        q = next_q;
    }
    (p, q)
}

/// Coefficients of `He_n(u)` via `He_{n+1} = u He_n − n He_{n−1}`.
fn hermite_coefficients(n: usize) -> Vec<f64> {
    let mut prev = vec![1.0];
    if n == 0 {
        return prev;
    }
    let mut cur = vec![0.0, 1.0];
    for k in 1..n {
        let mut next = vec![0.0; k + 2];
        for (i, v) in cur.iter().enumerate() {
            next[i + 1] += v;
        }
        for (i, v) in prev.iter().enumerate() {
            next[i] -= k as f64 * v;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// `order`-th time derivative of the pulse sampled on its own window grid.
pub fn evaluate_pulse(pulse: &TrialPulse, order: usize) -> Result<ComplexSignal> {
    pulse.sample(&pulse.window, order)
}

/// Max relative deviation between the closed-form derivative of `order` and a
/// fourth-order central difference of order `order − 1`, over interior points,
/// with the difference step `dt / 16`.
pub fn check_derivatives(pulse: &TrialPulse, order: usize) -> f64 {
    check_derivatives_refined(pulse, order, 16)
}

/// [`check_derivatives`] with an explicit step refinement factor.
pub fn check_derivatives_refined(pulse: &TrialPulse, order: usize, refine: usize) -> f64 {
    if order == 0 {
        return 0.0;
    }
    let (Ok(exact), Ok(lower)) = (pulse.derivative(order), pulse.derivative(order - 1)) else {
        return f64::INFINITY;
    };
    let h = pulse.window.dt() / refine.max(2) as f64;
    let n = pulse.window.n_samples();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 1..n - 1 {
        let t = pulse.window.time(i);
        let fd = (-lower.at(t + 2.0 * h) + 8.0 * lower.at(t + h) - 8.0 * lower.at(t - h)
            + lower.at(t - 2.0 * h))
            / (12.0 * h);
        let an = exact.at(t);
        worst = worst.max((an - fd).abs());
        scale = scale.max(an.abs());
    }
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Spectrum on an ascending angular-frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Time grid the spectrum was taken on; needed to invert it.
    pub grid: TimeGrid,
}

impl Spectrum {
    /// Multiply every bin by `f(ω)`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> Spectrum {
        Spectrum {
            omega: self.omega.clone(),
            values: self
                .omega
                .iter()
                .zip(&self.values)
                .map(|(w, v)| v * f(*w))
                .collect(),
            grid: self.grid,
        }
    }
}

/// Angular frequency of FFT bin `k` for `n` samples at spacing `dt`.
fn bin_omega(k: usize, n: usize, dt: f64) -> f64 {
    let signed = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    2.0 * PI * signed / (n as f64 * dt)
}

/// Discrete `F(ω) = Σ f(tₙ) e^{iωtₙ} dt` on the FFT frequency grid.
pub fn fourier_transform(signal: &ComplexSignal) -> Spectrum {
    let grid = *signal.grid();
    let n = grid.n_samples();
    let dt = grid.dt();
    let mut buf = signal.samples().to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let mut bins: Vec<(f64, Complex64)> = buf
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            let w = bin_omega(k, n, dt);
            (w, v * Complex64::from_polar(dt, w * grid.t_start()))
        })
        .collect();
    bins.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (omega, values) = bins.into_iter().unzip();
    Spectrum {
        omega,
        values,
        grid,
    }
}

/// Inverse of [`fourier_transform`], back onto the original grid.
pub fn inverse_fourier_transform(spectrum: &Spectrum) -> ComplexSignal {
    let grid = spectrum.grid;
    let n = grid.n_samples();
    let dt = grid.dt();
    // back to FFT bin order
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (w, v) in spectrum.omega.iter().zip(&spectrum.values) {
        let k = ((w * n as f64 * dt / (2.0 * PI)).round() as i64).rem_euclid(n as i64) as usize;
        buf[k] = v * Complex64::from_polar(1.0 / (n as f64 * dt), -w * grid.t_start());
    }
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    ComplexSignal {
        grid,
        samples: buf,
    }
}
