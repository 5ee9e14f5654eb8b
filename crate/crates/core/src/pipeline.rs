//! Synthesis → integration → decomposition for one scenario.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    combine_reports, integrate_scenario, residual_report, FieldTrajectory, Method, ResidualReport,
    ScenarioDrives,
};
use crate::error::{Error, Result};
use crate::measurement::{decompose_output, OutputDecomposition};
use crate::network::{synthesis_factors, NetworkScenario};
use crate::signal::{ComplexSignal, TimeGrid, TrialPulse};
use crate::synthesis::{
    cascade_compensation, inverse_product_at_zero, legacy_cascade_drives,
    synthesize_frequency_domain_on, uncorrected_drive, DerivativeExpansion, Provenance,
    SynthesizedDrive,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisKind {
    None,
    #[default]
    TimeDomain,
    FrequencyDomain,
    CascadeCompensated,
    LegacyCompensated,
}

/// Drives for one run; `b` only for cascades.
#[derive(Debug, Clone)]
pub struct DriveSet {
    pub a: SynthesizedDrive,
    pub b: Option<SynthesizedDrive>,
}

impl DriveSet {
    pub fn scenario_drives(&self) -> ScenarioDrives {
        ScenarioDrives {
            a: self.a.time_signal.clone(),
            b: self.b.as_ref().map(|b| b.time_signal.clone()),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            a: self.a.scaled(k),
            b: self.b.as_ref().map(|b| b.scaled(k)),
        }
    }

    pub fn signals(&self) -> Vec<&ComplexSignal> {
        std::iter::once(&self.a.time_signal)
            .chain(self.b.as_ref().map(|b| &b.time_signal))
            .collect()
    }
}

/// Build the drives for `kind` on the simulation grid.
pub fn synthesize(
    scenario: &NetworkScenario,
    pulse: &TrialPulse,
    kind: SynthesisKind,
    grid: &TimeGrid,
) -> Result<DriveSet> {
    let cascade = match scenario {
        NetworkScenario::Cascade(c) => Some(c),
        _ => None,
    };
    match kind {
        SynthesisKind::None => Ok(DriveSet {
            a: uncorrected_drive(pulse, grid)?,
            b: None,
        }),
        SynthesisKind::TimeDomain => {
            let factors = synthesis_factors(scenario)?;
            let expansion = DerivativeExpansion::from_transfers(&factors)?;
            Ok(DriveSet {
                a: SynthesizedDrive {
                    time_signal: expansion.apply(pulse, grid)?,
                    frequency_signal: None,
                    provenance: Provenance::TimeDomainExpansion,
                    raw_scale: inverse_product_at_zero(&factors)?,
                    window: pulse.window,
                },
                b: None,
            })
        }
        SynthesisKind::FrequencyDomain => Ok(DriveSet {
            a: synthesize_frequency_domain_on(pulse, &synthesis_factors(scenario)?, grid)?,
            b: None,
        }),
        SynthesisKind::CascadeCompensated => {
            let c = cascade.ok_or_else(|| {
                Error::InvalidInput("cascade compensation needs a cascade scenario".into())
            })?;
            let (a, b, _) = cascade_compensation(pulse, c, grid)?;
            Ok(DriveSet { a, b: Some(b) })
        }
        SynthesisKind::LegacyCompensated => {
            let c = cascade.ok_or_else(|| {
                Error::InvalidInput("legacy compensation needs a cascade scenario".into())
            })?;
            let (a, b) = legacy_cascade_drives(pulse, c, grid)?;
            Ok(DriveSet { a, b: Some(b) })
        }
    }
}

/// Drives for the shift-free reference run.
///
/// Inverse-transfer drives are resynthesized without shifts and rescaled so
/// that both runs share the raw (unnormalized) scale; the reference output is
/// then exactly the part of each state's output that involves no shift.
/// Other drives are reused unchanged.
pub fn reference_drives(
    scenario: &NetworkScenario,
    pulse: &TrialPulse,
    kind: SynthesisKind,
    drives: &DriveSet,
    grid: &TimeGrid,
) -> Result<DriveSet> {
    match kind {
        SynthesisKind::TimeDomain | SynthesisKind::FrequencyDomain => {
            let bare = scenario.without_shifts();
            let d0 = synthesize(&bare, pulse, kind, grid)?;
            let k = d0.a.raw_scale / drives.a.raw_scale;
            Ok(DriveSet {
                a: SynthesizedDrive {
                    time_signal: d0.a.time_signal.scaled(k),
                    raw_scale: drives.a.raw_scale,
                    ..d0.a
                },
                b: None,
            })
        }
        _ => Ok(drives.clone()),
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub drives: DriveSet,
    pub trajectories: Vec<FieldTrajectory>,
    pub reference: FieldTrajectory,
    pub decomposition: OutputDecomposition,
    pub reports: Vec<ResidualReport>,
    pub combined: ResidualReport,
}

impl RunOutcome {
    /// Every field and drive multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            drives: self.drives.scaled(k),
            trajectories: self.trajectories.iter().map(|t| t.scaled(k)).collect(),
            reference: self.reference.scaled(k),
            decomposition: self.decomposition.scaled(k),
            reports: self
                .reports
                .iter()
                .map(|r| ResidualReport {
                    peak_amplitude: r.peak_amplitude * k,
                    final_amplitude: r.final_amplitude * k,
                    ..*r
                })
                .collect(),
            combined: ResidualReport {
                peak_amplitude: self.combined.peak_amplitude * k,
                final_amplitude: self.combined.final_amplitude * k,
                ..self.combined
            },
        }
    }
}

/// Time of the trial pulse's peak.
pub fn pulse_peak_time(pulse: &TrialPulse, grid: &TimeGrid) -> Result<f64> {
    let omega = pulse.sample(grid, 0)?;
    Ok(grid.time(omega.peak().0))
}

/// Full run of one scenario on `grid`.
pub fn simulate(
    scenario: &NetworkScenario,
    pulse: &TrialPulse,
    kind: SynthesisKind,
    grid: &TimeGrid,
    method: Method,
) -> Result<RunOutcome> {
    scenario.validate()?;
    let drives = synthesize(scenario, pulse, kind, grid)?;
    let trajectories = integrate_scenario(scenario, &drives.scenario_drives(), method)?;

    let bare = scenario.without_shifts();
    let reference_set = match reference_drives(scenario, pulse, kind, &drives, grid) {
        Ok(r) => r,
        // shift-free cascades are singular for the compensation formulas
        Err(Error::Singular(_)) => drives.clone(),
        Err(e) => return Err(e),
    };
    let reference = integrate_scenario(&bare, &reference_set.scenario_drives(), method)?
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidInput("scenario has no states".into()))?;
    let decomposition = decompose_output(&trajectories, &reference.output)?;

    let t_peak = pulse_peak_time(pulse, grid)?;
    let t_final = pulse.window.t_end();
    let reports: Vec<ResidualReport> = trajectories
        .iter()
        .map(|t| residual_report(t, t_peak, t_final))
        .collect();
    let combined = combine_reports(&reports);
    Ok(RunOutcome {
        drives,
        trajectories,
        reference,
        decomposition,
        reports,
        combined,
    })
}

/// Simulation grid from the pulse start to `t_end` with step at most
/// `min(dt_max, 0.01 / fastest rate)`, where the pulse bandwidth counts as a
/// rate: corrected drives on slow cavities are dominated by high derivatives
/// and would otherwise be under-resolved.
pub fn simulation_grid(
    scenario: &NetworkScenario,
    pulse: &TrialPulse,
    t_end: f64,
    dt_max: Option<f64>,
) -> Result<TimeGrid> {
    let rate = scenario
        .max_rate()?
        .max(pulse.bandwidth())
        .max(1.0 / pulse.window.duration());
    let mut dt = 0.01 / rate;
    if let Some(d) = dt_max {
        if !(d > 0.0) {
            return Err(Error::InvalidGrid(format!("time step must be positive, got {d}")));
        }
        dt = dt.min(d);
    }
    let t_end = t_end.max(pulse.window.t_end());
    // land exactly on the pulse end
    let per_window = (pulse.window.duration() / dt).ceil().max(1.0);
    let step = pulse.window.duration() / per_window;
    let n = ((t_end - pulse.window.t_start()) / step).round() as usize + 1;
    TimeGrid::new(
        pulse.window.t_start(),
        pulse.window.t_start() + step * (n - 1) as f64,
        n,
    )
}
