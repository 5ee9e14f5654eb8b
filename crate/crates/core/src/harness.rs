//! Scenario orchestration: single runs, sweeps and their artifacts.
//!
//! Artifacts written by [`write_run`]:
//!
//! ```text
//! summary.json                     RunSummary
//! <variant>_trajectories.csv       t, re/im of every intracavity mode and output, per state
//! <variant>_traces.csv             t, hom_<state>, syn_<state>, alpha_syn (measurement window)
//! ```
//!
//! and by [`write_sweep`]: `surface.csv` (one row per grid point, axes in
//! order, last axis fastest) and `sweep.json`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DetectionSpec, PulseSpec, RunConfig, SimulationSpec};
use crate::dynamics::write_trajectories;
use crate::error::{Error, Result};
use crate::measurement::{
    normalization_factor, optimize_homodyne_angle, optimize_synodyne_angle, HomodyneOptimum,
    NormalizationMode, OutputDecomposition, SynodyneOptimum,
};
use crate::network::NetworkScenario;
use crate::pipeline::{simulate, simulation_grid, RunOutcome, SynthesisKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One simulated variant after normalization and detection analysis.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub name: String,
    pub synthesis: SynthesisKind,
    pub pulse: PulseSpec,
    /// Normalized fields and drives.
    pub outcome: RunOutcome,
    pub normalization_factor: f64,
    /// Decomposition restricted to the pulse window.
    pub window: OutputDecomposition,
    pub homodyne: Option<HomodyneOptimum>,
    pub synodyne: Option<SynodyneOptimum>,
}

/// Simulate, normalize and analyse one (scenario, pulse, synthesis) triple.
/// `scenario` must already be in rad/µs.
pub fn evaluate_variant(
    name: &str,
    scenario: &NetworkScenario,
    pulse_spec: &PulseSpec,
    synthesis: SynthesisKind,
    simulation: &SimulationSpec,
    normalization: NormalizationMode,
    detection: &DetectionSpec,
) -> Result<VariantRun> {
    let pulse = pulse_spec.build()?;
    let t_end = simulation.t_end.unwrap_or(pulse_spec.t_end());
    let grid = simulation_grid(scenario, &pulse, t_end, simulation.dt)?;
    let raw = simulate(scenario, &pulse, synthesis, &grid, simulation.method)?;
    let k = normalization_factor(&raw.drives.signals(), &raw.trajectories, normalization)?;
    let outcome = raw.scaled(k);
    let window = outcome.decomposition.truncated(pulse_spec.t_end())?;
    let multi = window.offsets.len() >= 2;
    let homodyne = if detection.protocol.homodyne() && multi {
        Some(optimize_homodyne_angle(&window)?)
    } else {
        None
    };
    let synodyne = if detection.protocol.synodyne() && multi {
        Some(optimize_synodyne_angle(&window, detection.objective)?)
    } else {
        None
    };
    Ok(VariantRun {
        name: name.to_string(),
        synthesis,
        pulse: *pulse_spec,
        outcome,
        normalization_factor: k,
        window,
        homodyne,
        synodyne,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSummary {
    pub label: String,
    pub peak_amplitude: f64,
    pub final_amplitude: f64,
    pub residual_ratio: f64,
    pub ring_down_time: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub synthesis: SynthesisKind,
    pub normalization_factor: f64,
    /// Worst residual ratio over states and modes at the pulse end.
    pub residual_ratio: f64,
    pub ring_down_time: f64,
    pub settled: bool,
    pub states: Vec<StateSummary>,
    pub homodyne_alpha: Option<f64>,
    pub homodyne_q: Option<f64>,
    pub homodyne_worst_pair: Option<(String, String)>,
    pub synodyne_q: Option<f64>,
    pub synodyne_homodyne_fallback: Option<bool>,
    /// Synodyne over homodyne worst-pair distinguishability.
    pub synodyne_ratio: Option<f64>,
}

impl VariantRun {
    pub fn summary(&self) -> VariantSummary {
        let labels = &self.window.labels;
        let states = self
            .outcome
            .trajectories
            .iter()
            .zip(&self.outcome.reports)
            .map(|(t, r)| StateSummary {
                label: t.state_label.clone(),
                peak_amplitude: r.peak_amplitude,
                final_amplitude: r.final_amplitude,
                residual_ratio: r.residual_ratio,
                ring_down_time: r.ring_down_time,
                settled: r.settled,
            })
            .collect();
        let hq = self.homodyne.as_ref().map(|h| h.worst_pair_q);
        let sq = self.synodyne.as_ref().map(|s| s.worst_pair_q);
        VariantSummary {
            name: self.name.clone(),
            synthesis: self.synthesis,
            normalization_factor: self.normalization_factor,
            residual_ratio: self.outcome.combined.residual_ratio,
            ring_down_time: self.outcome.combined.ring_down_time,
            settled: self.outcome.combined.settled,
            states,
            homodyne_alpha: self.homodyne.as_ref().map(|h| h.alpha),
            homodyne_q: hq,
            homodyne_worst_pair: self
                .homodyne
                .as_ref()
                .map(|h| (labels[h.worst_pair.0].clone(), labels[h.worst_pair.1].clone())),
            synodyne_q: sq,
            synodyne_homodyne_fallback: self.synodyne.as_ref().map(|s| s.homodyne_fallback),
            synodyne_ratio: match (sq, hq) {
                (Some(s), Some(h)) if h > 0.0 => Some(s / h),
                _ => None,
            },
        }
    }

    /// Trace CSV over the measurement window.
    pub fn write_traces<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let labels = &self.window.labels;
        let mut header = vec!["t".to_string()];
        if self.homodyne.is_some() {
            header.extend(labels.iter().map(|l| format!("hom_{l}")));
        }
        if self.synodyne.is_some() {
            header.extend(labels.iter().map(|l| format!("syn_{l}")));
            header.push("alpha_syn".into());
        }
        w.write_record(&header)?;
        let outputs: Vec<_> = (0..labels.len())
            .map(|j| self.window.reconstruct(j))
            .collect::<Result<_>>()?;
        let grid = *self.window.grid();
        let project = |z: Complex64, a: f64| z.re * a.cos() + z.im * a.sin();
        for k in 0..grid.n_samples() {
            let mut row = vec![grid.time(k).to_string()];
            if let Some(h) = &self.homodyne {
                row.extend(outputs.iter().map(|z| project(z.samples()[k], h.alpha).to_string()));
            }
            if let Some(s) = &self.synodyne {
                let a = s.alpha[k];
                row.extend(outputs.iter().map(|z| project(z.samples()[k], a).to_string()));
                row.push(a.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub variants: Vec<VariantSummary>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub variants: Vec<VariantRun>,
    pub summary: RunSummary,
}

/// Primary variant plus every `compare` entry. Does not touch the filesystem.
pub fn run_scenario(config: &RunConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let scenario = config.angular_scenario();
    let mut variants = vec![evaluate_variant(
        "primary",
        &scenario,
        &config.pulse,
        config.synthesis,
        &config.simulation,
        config.normalization,
        &config.detection,
    )?];
    for v in &config.compare {
        variants.push(evaluate_variant(
            &v.name,
            &scenario,
            v.pulse.as_ref().unwrap_or(&config.pulse),
            v.synthesis,
            &config.simulation,
            config.normalization,
            &config.detection,
        )?);
    }
    let summary = RunSummary {
        name: config.name.clone(),
        version: VERSION.into(),
        config_hash: config.hash(),
        variants: variants.iter().map(|v| v.summary()).collect(),
    };
    Ok(RunArtifacts { variants, summary })
}

/// Write run artifacts into `dir`; returns the written paths.
pub fn write_run(artifacts: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("summary.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &artifacts.summary)?;
    written.push(path);
    for v in &artifacts.variants {
        let path = dir.join(format!("{}_trajectories.csv", v.name));
        write_trajectories(BufWriter::new(File::create(&path)?), &v.outcome.trajectories)?;
        written.push(path);
        let path = dir.join(format!("{}_traces.csv", v.name));
        v.write_traces(BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisGrid {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: Vec<usize>,
    pub values: Vec<f64>,
    pub homodyne_q: Option<f64>,
    pub synodyne_q: Option<f64>,
    pub residual_ratio: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub name: String,
    pub version: String,
    pub config_hash: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axes: Vec<AxisGrid>,
    /// Row-major over the axes, last axis fastest.
    pub points: Vec<SweepPoint>,
    /// Largest synodyne Q (homodyne if synodyne was not requested); surfaces
    /// are reported relative to it.
    pub reference_q: Option<f64>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    /// Point with the largest homodyne Q.
    pub fn homodyne_argmax(&self) -> Option<&SweepPoint> {
        self.points
            .iter()
            .filter(|p| p.homodyne_q.is_some())
            .fold(None, |best: Option<&SweepPoint>, p| match best {
                Some(b) if b.homodyne_q >= p.homodyne_q => Some(b),
                _ => Some(p),
            })
    }
}

fn grid_indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; shape.len()];
            for (slot, n) in idx.iter_mut().zip(shape).rev() {
                *slot = flat % n;
                flat /= n;
            }
            idx
        })
        .collect()
}

/// Evaluate a single sweep point; errors are captured in the result.
pub fn sweep_point(config: &RunConfig, index: &[usize], values: &[f64]) -> SweepPoint {
    let run = config.at_point(values).and_then(|c| {
        evaluate_variant(
            "primary",
            &c.angular_scenario(),
            &c.pulse,
            c.synthesis,
            &c.simulation,
            c.normalization,
            &c.detection,
        )
    });
    match run {
        Ok(v) => SweepPoint {
            index: index.to_vec(),
            values: values.to_vec(),
            homodyne_q: v.homodyne.map(|h| h.worst_pair_q),
            synodyne_q: v.synodyne.map(|s| s.worst_pair_q),
            residual_ratio: Some(v.outcome.combined.residual_ratio),
            error: None,
        },
        Err(e) => SweepPoint {
            index: index.to_vec(),
            values: values.to_vec(),
            homodyne_q: None,
            synodyne_q: None,
            residual_ratio: None,
            error: Some(e.to_string()),
        },
    }
}

/// Evaluate the sweep grid on at most `workers` threads (`None`: all cores).
/// Only the primary variant is evaluated at each point.
pub fn run_sweep(config: &RunConfig, workers: Option<usize>) -> Result<SweepResult> {
    config.validate()?;
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| Error::config("sweep", "config has no sweep section"))?;
    let started = Instant::now();
    let axes: Vec<AxisGrid> = sweep
        .axes
        .iter()
        .map(|a| AxisGrid {
            path: a.path.clone(),
            values: a.values(),
        })
        .collect();
    let shape: Vec<usize> = axes.iter().map(|a| a.values.len()).collect();
    let indices = grid_indices(&shape);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    // collect() keeps input order, so the result does not depend on scheduling
    let points: Vec<SweepPoint> = pool.install(|| {
        indices
            .par_iter()
            .map(|idx| {
                let values: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a.values[i]).collect();
                sweep_point(config, idx, &values)
            })
            .collect()
    });
    let best = |f: fn(&SweepPoint) -> Option<f64>| {
        points.iter().filter_map(f).fold(None, |m: Option<f64>, q| Some(m.map_or(q, |m| m.max(q))))
    };
    let reference_q = best(|p| p.synodyne_q).or_else(|| best(|p| p.homodyne_q));
    Ok(SweepResult {
        axes,
        points,
        reference_q,
        metadata: SweepMetadata {
            name: config.name.clone(),
            version: VERSION.into(),
            config_hash: config.hash(),
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Surface CSV: axis columns, raw Q values, residual, Q relative to the
/// reference, and the error string for failed points.
pub fn write_surface<W: std::io::Write>(result: &SweepResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = result.axes.iter().map(|a| a.path.clone()).collect();
    header.extend(
        ["q_hom", "q_syn", "residual_ratio", "q_hom_norm", "q_syn_norm", "error"].map(String::from),
    );
    w.write_record(&header)?;
    let rel = |q: Option<f64>| match (q, result.reference_q) {
        (Some(q), Some(r)) if r > 0.0 => Some(q / r),
        _ => None,
    };
    for p in &result.points {
        let mut row: Vec<String> = p.values.iter().map(|v| v.to_string()).collect();
        row.push(opt(p.homodyne_q));
        row.push(opt(p.synodyne_q));
        row.push(opt(p.residual_ratio));
        row.push(opt(rel(p.homodyne_q)));
        row.push(opt(rel(p.synodyne_q)));
        row.push(p.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let surface = dir.join("surface.csv");
    write_surface(result, BufWriter::new(File::create(&surface)?))?;
    let summary = dir.join("sweep.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&summary)?), result)?;
    Ok(vec![surface, summary])
}

/// Figure-reproduction configs shipped with the crate.
pub const RECIPES: &[(&str, &str)] = &[
    ("fig2", include_str!("../../../recipes/fig2.toml")),
    ("fig3", include_str!("../../../recipes/fig3.toml")),
    ("fig4", include_str!("../../../recipes/fig4.toml")),
    ("fig5", include_str!("../../../recipes/fig5.toml")),
    ("fig6a", include_str!("../../../recipes/fig6a.toml")),
    ("fig6b", include_str!("../../../recipes/fig6b.toml")),
    ("fig7a", include_str!("../../../recipes/fig7a.toml")),
    ("fig7b", include_str!("../../../recipes/fig7b.toml")),
];

pub fn recipe(name: &str) -> Result<RunConfig> {
    let (_, text) = RECIPES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown recipe `{name}`")))?;
    RunConfig::from_toml_str(text)
}
