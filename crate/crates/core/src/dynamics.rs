//! Driven mode equations for every topology.
//!
//! Conventions, fixed by requiring the steady state under a constant drive to
//! reproduce `H(0) = κ/E`:
//!
//! ```text
//! dC/dt = E C − √κ A,     Z = √κ C
//! ```
//!
//! Purcell: `dC₁/dt = E₁C₁ − iG C₂ − A`, `dC₂/dt = E₂C₂ − iG* C₁`, `Z = √κ C₂`.
//! Cascade: cavity 2 is driven by `√κ₁ C₁ + B`.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{components, zero_state, LinearSystem};
use crate::network::{
    enumerate_states, mode_energy, Cascade, NetworkScenario, Purcell, StateMode,
};
use crate::signal::{ComplexSignal, TimeGrid, TrialPulse};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sign of the drive term in the mode equation.
pub const DRIVE_SIGN: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exponential,
    /// RK4 with two substeps per sample; cross-check only.
    Rk4,
}

#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    pub state_label: String,
    pub intracavity: Vec<ComplexSignal>,
    pub output: ComplexSignal,
}

impl FieldTrajectory {
    pub fn grid(&self) -> &TimeGrid {
        self.output.grid()
    }

    /// Same trajectory with every field multiplied by `k` (the system is linear).
    pub fn scaled(&self, k: f64) -> Self {
        let kc = Complex64::new(k, 0.0);
        Self {
            state_label: self.state_label.clone(),
            intracavity: self.intracavity.iter().map(|c| c.scaled(kc)).collect(),
            output: self.output.scaled(kc),
        }
    }

    pub fn max_intracavity(&self) -> f64 {
        self.intracavity.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }
}

fn run(
    sys: &LinearSystem,
    inputs: &[&ComplexSignal],
    method: Method,
) -> Result<Vec<ComplexSignal>> {
    let grid = *inputs[0].grid();
    let y0 = zero_state(sys.dim());
    let states = match method {
        Method::Exponential => sys.propagate(inputs, &y0)?,
        Method::Rk4 => sys.propagate_rk4(inputs, &y0, 2)?,
    };
    Ok(components(grid, &states))
}

fn kappa_of(mode: &StateMode) -> Result<f64> {
    let kappa = -2.0 * mode.energy.re;
    if kappa > 0.0 {
        Ok(kappa)
    } else {
        Err(Error::Unphysical(format!(
            "mode {} has no decay (Re E = {})",
            mode.label, mode.energy.re
        )))
    }
}

pub fn integrate_single_cavity(drive: &ComplexSignal, mode: &StateMode) -> Result<FieldTrajectory> {
    integrate_single_cavity_with(drive, mode, Method::Exponential)
}

pub fn integrate_single_cavity_with(
    drive: &ComplexSignal,
    mode: &StateMode,
    method: Method,
) -> Result<FieldTrajectory> {
    let kappa = kappa_of(mode)?;
    let sys = LinearSystem::new(
        DMatrix::from_element(1, 1, mode.energy),
        DMatrix::from_element(1, 1, Complex64::new(DRIVE_SIGN * kappa.sqrt(), 0.0)),
    )?;
    let c = run(&sys, &[drive], method)?;
    let output = c[0].scaled(Complex64::new(kappa.sqrt(), 0.0));
    Ok(FieldTrajectory {
        state_label: mode.label.clone(),
        intracavity: c,
        output,
    })
}

pub fn integrate_purcell(
    drive: &ComplexSignal,
    p: &Purcell,
    chi: f64,
    label: &str,
) -> Result<FieldTrajectory> {
    integrate_purcell_with(drive, p, chi, label, Method::Exponential)
}

pub fn integrate_purcell_with(
    drive: &ComplexSignal,
    p: &Purcell,
    chi: f64,
    label: &str,
    method: Method,
) -> Result<FieldTrajectory> {
    let e1 = mode_energy(p.cavity1_loss, p.delta_c, chi);
    let e2 = mode_energy(p.kappa, p.delta_f, 0.0);
    let sys = LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[e1, -I * p.g, -I * p.g.conj(), e2]),
        DMatrix::from_row_slice(2, 1, &[Complex64::new(DRIVE_SIGN, 0.0), ZERO]),
    )?;
    let c = run(&sys, &[drive], method)?;
    let output = c[1].scaled(Complex64::new(p.kappa.sqrt(), 0.0));
    Ok(FieldTrajectory {
        state_label: label.to_string(),
        intracavity: c,
        output,
    })
}

/// State `(j, k)`: qubit `j` on cavity 1, qubit `k` on cavity 2.
pub fn integrate_cascade(
    drive_a: &ComplexSignal,
    drive_b: &ComplexSignal,
    c: &Cascade,
    j: usize,
    k: usize,
) -> Result<FieldTrajectory> {
    integrate_cascade_with(drive_a, drive_b, c, j, k, Method::Exponential)
}

pub fn integrate_cascade_with(
    drive_a: &ComplexSignal,
    drive_b: &ComplexSignal,
    c: &Cascade,
    j: usize,
    k: usize,
    method: Method,
) -> Result<FieldTrajectory> {
    if j > 1 || k > 1 {
        return Err(Error::InvalidInput(format!("cascade state ({j}, {k}) out of range")));
    }
    let (k1, k2) = (c.cavity1.kappa.sqrt(), c.cavity2.kappa.sqrt());
    let s = Complex64::new(DRIVE_SIGN, 0.0);
    let sys = LinearSystem::new(
        DMatrix::from_row_slice(
            2,
            2,
            &[c.cavity1.energy(j), ZERO, s * k1 * k2, c.cavity2.energy(k)],
        ),
        DMatrix::from_row_slice(2, 2, &[s * k1, ZERO, ZERO, s * k2]),
    )?;
    let fields = run(&sys, &[drive_a, drive_b], method)?;
    let output = fields[1].scaled(Complex64::new(k2, 0.0));
    Ok(FieldTrajectory {
        state_label: format!("{j}{k}"),
        intracavity: fields,
        output,
    })
}

/// Drives for a scenario; `b` is the cascade back-port input.
#[derive(Debug, Clone)]
pub struct ScenarioDrives {
    pub a: ComplexSignal,
    pub b: Option<ComplexSignal>,
}

/// Integrate every enumerated state of a scenario, in enumeration order.
pub fn integrate_scenario(
    scenario: &NetworkScenario,
    drives: &ScenarioDrives,
    method: Method,
) -> Result<Vec<FieldTrajectory>> {
    let states = enumerate_states(scenario)?;
    match scenario {
        NetworkScenario::SingleCavity(_) => states
            .iter()
            .map(|s| integrate_single_cavity_with(&drives.a, &s.modes[0], method))
            .collect(),
        NetworkScenario::Purcell(p) => states
            .iter()
            .map(|s| integrate_purcell_with(&drives.a, p, s.modes[0].chi, &s.label, method))
            .collect(),
        NetworkScenario::Cascade(c) => {
            let zero;
            let b = match &drives.b {
                Some(b) => b,
                None => {
                    zero = ComplexSignal::zeros(*drives.a.grid());
                    &zero
                }
            };
            let mut out = Vec::with_capacity(4);
            for j in 0..2 {
                for k in 0..2 {
                    out.push(integrate_cascade_with(&drives.a, b, c, j, k, method)?);
                }
            }
            Ok(out)
        }
    }
}

/// `c_{l,j} = (1/E_l) e_j({1/E_s : s ≠ l})`.
pub fn superadiabatic_coefficients(energies: &[Complex64], l: usize) -> Result<Vec<Complex64>> {
    if l >= energies.len() {
        return Err(Error::InvalidInput(format!(
            "state {l} out of range for {} energies",
            energies.len()
        )));
    }
    if energies.iter().any(|e| e.norm() == 0.0) {
        return Err(Error::Singular("mode energy at zero".into()));
    }
    let mut c = vec![ONE / energies[l]];
    for (s, e) in energies.iter().enumerate() {
        if s == l {
            continue;
        }
        let inv = ONE / e;
        c.push(ZERO);
        for j in (1..c.len()).rev() {
            let prev = c[j - 1];
            c[j] += prev * inv;
        }
    }
    Ok(c)
}

/// Intracavity field predicted by the superadiabatic series for mode `l` of a
/// single cavity with linewidth `kappa`, under the drive synthesized from all
/// `energies`: `C_l = √κ Σ_j c_{l,j} iʲ (iʲ Ω⁽ʲ⁾)`.
pub fn predict_superadiabatic_field(
    pulse: &TrialPulse,
    energies: &[Complex64],
    l: usize,
    kappa: f64,
    grid: &TimeGrid,
) -> Result<ComplexSignal> {
    let coeffs = superadiabatic_coefficients(energies, l)?;
    let scale = -DRIVE_SIGN * kappa.sqrt();
    let mut out = vec![ZERO; grid.n_samples()];
    for (j, c) in coeffs.iter().enumerate() {
        let w = c * scale * if j % 2 == 0 { 1.0 } else { -1.0 };
        for (o, d) in out.iter_mut().zip(pulse.sample(grid, j)?.samples()) {
            *o += w * d;
        }
    }
    ComplexSignal::new(*grid, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    pub peak_amplitude: f64,
    pub final_amplitude: f64,
    pub residual_ratio: f64,
    /// Time from the drive's peak until every intracavity amplitude stays
    /// below 1% of its own peak.
    pub ring_down_time: f64,
    /// False if the fields never settled on the simulated grid; the ring-down
    /// time is then a lower bound.
    pub settled: bool,
}

/// Residual at `t_final` and ring-down after `t_drive_peak`.
///
/// The ratio is the worst over modes of `|C(t_final)| / max|C|`.
pub fn residual_report(traj: &FieldTrajectory, t_drive_peak: f64, t_final: f64) -> ResidualReport {
    let grid = *traj.grid();
    let i_final = grid.nearest_index(t_final);
    let i_peak = grid.nearest_index(t_drive_peak);
    let mut peak_amplitude: f64 = 0.0;
    let mut final_amplitude: f64 = 0.0;
    let mut residual_ratio: f64 = 0.0;
    let mut last_above: Option<usize> = None;
    for c in &traj.intracavity {
        let peak = c.max_abs();
        peak_amplitude = peak_amplitude.max(peak);
        let fin = c.samples()[i_final].norm();
        final_amplitude = final_amplitude.max(fin);
        if peak > 0.0 {
            residual_ratio = residual_ratio.max(fin / peak);
            let limit = 0.01 * peak;
            if let Some(k) = c.samples().iter().rposition(|z| z.norm() >= limit) {
                last_above = Some(last_above.map_or(k, |m: usize| m.max(k)));
            }
        }
    }
    let (ring_down_time, settled) = match last_above {
        None => (0.0, true),
        Some(k) if k + 1 >= grid.n_samples() => (grid.t_end() - grid.time(i_peak), false),
        Some(k) => ((grid.time(k + 1) - grid.time(i_peak)).max(0.0), true),
    };
    ResidualReport {
        peak_amplitude,
        final_amplitude,
        residual_ratio,
        ring_down_time,
        settled,
    }
}

/// Worst case over several reports.
pub fn combine_reports(reports: &[ResidualReport]) -> ResidualReport {
    reports.iter().fold(
        ResidualReport {
            peak_amplitude: 0.0,
            final_amplitude: 0.0,
            residual_ratio: 0.0,
            ring_down_time: 0.0,
            settled: true,
        },
        |a, r| ResidualReport {
            peak_amplitude: a.peak_amplitude.max(r.peak_amplitude),
            final_amplitude: a.final_amplitude.max(r.final_amplitude),
            residual_ratio: a.residual_ratio.max(r.residual_ratio),
            ring_down_time: a.ring_down_time.max(r.ring_down_time),
            settled: a.settled && r.settled,
        },
    )
}

/// Square pulse: `amplitude` on `[t_on, t_off]`, zero elsewhere, so each edge
/// spans one sample interval.
pub fn square_pulse(grid: &TimeGrid, t_on: f64, t_off: f64, amplitude: Complex64) -> ComplexSignal {
    ComplexSignal::from_fn(*grid, |t| {
        if t >= t_on && t <= t_off {
            amplitude
        } else {
            ZERO
        }
    })
}

/// Piecewise-constant drive from consecutive `(duration, amplitude)` segments
/// starting at `t_start`; used to replay published digital sequences.
pub fn piecewise_constant_pulse(
    grid: &TimeGrid,
    t_start: f64,
    segments: &[(f64, Complex64)],
) -> Result<ComplexSignal> {
    if segments.is_empty() || segments.iter().any(|(d, _)| !(*d > 0.0)) {
        return Err(Error::InvalidInput(
            "piecewise pulse needs segments with positive durations".into(),
        ));
    }
    let mut edges = Vec::with_capacity(segments.len() + 1);
    edges.push(t_start);
    for (d, _) in segments {
        edges.push(edges.last().unwrap() + d);
    }
    Ok(ComplexSignal::from_fn(*grid, |t| {
        (0..segments.len())
            .find(|&i| t >= edges[i] && t < edges[i + 1])
            .map_or(ZERO, |i| segments[i].1)
    }))
}

/// CSV with columns `t`, then per trajectory `Re/Im` of each mode and of the output.
pub fn write_trajectories_csv(path: &Path, trajectories: &[FieldTrajectory]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_trajectories(file, trajectories)
}

pub fn write_trajectories<W: Write>(writer: W, trajectories: &[FieldTrajectory]) -> Result<()> {
    let grid = match trajectories.first() {
        Some(t) => *t.grid(),
        None => return Err(Error::InvalidInput("no trajectories to write".into())),
    };
    for t in trajectories {
        grid.ensure_same(t.grid(), "trajectory export")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    for t in trajectories {
        for m in 0..t.intracavity.len() {
            header.push(format!("re_c{}_{}", m + 1, t.state_label));
            header.push(format!("im_c{}_{}", m + 1, t.state_label));
        }
        header.push(format!("re_z_{}", t.state_label));
        header.push(format!("im_z_{}", t.state_label));
    }
    w.write_record(&header)?;
    for k in 0..grid.n_samples() {
        let mut row = vec![format!("{:.9e}", grid.time(k))];
        for t in trajectories {
            for c in t.intracavity.iter().chain(std::iter::once(&t.output)) {
                let z = c.samples()[k];
                row.push(format!("{:.12e}", z.re));
                row.push(format!("{:.12e}", z.im));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
