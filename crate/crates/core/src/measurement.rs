//! Output decomposition, homodyne and synodyne traces, and distinguishability.
//!
//! Quadratures are `I = Re Z`, `Q = Im Z`; the unit vector at angle α is
//! `(cos α, sin α)`, so a homodyne trace is `Re(Z e^{−iα})`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::FieldTrajectory;
use crate::error::{Error, Result};
use crate::signal::{trapezoid, ComplexSignal, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraturePlanePoint {
    pub i: f64,
    pub q: f64,
}

impl From<Complex64> for QuadraturePlanePoint {
    fn from(z: Complex64) -> Self {
        Self { i: z.re, q: z.im }
    }
}

impl QuadraturePlanePoint {
    pub fn project(&self, alpha: f64) -> f64 {
        self.i * alpha.cos() + self.q * alpha.sin()
    }
}

/// `Z̃_j = Z̃_0 + D̃_j`.
#[derive(Debug, Clone)]
pub struct OutputDecomposition {
    pub labels: Vec<String>,
    pub common: ComplexSignal,
    pub offsets: Vec<ComplexSignal>,
}

impl OutputDecomposition {
    pub fn grid(&self) -> &TimeGrid {
        self.common.grid()
    }

    pub fn reconstruct(&self, j: usize) -> Result<ComplexSignal> {
        self.common.add(&self.offsets[j])
    }

    pub fn scaled(&self, k: f64) -> Self {
        let kc = Complex64::new(k, 0.0);
        Self {
            labels: self.labels.clone(),
            common: self.common.scaled(kc),
            offsets: self.offsets.iter().map(|d| d.scaled(kc)).collect(),
        }
    }

    /// Restriction to samples with `t ≤ t_end` (the measurement window).
    pub fn truncated(&self, t_end: f64) -> Result<Self> {
        let g = *self.grid();
        let last = g.nearest_index(t_end.min(g.t_end()));
        if last == g.n_samples() - 1 {
            return Ok(self.clone());
        }
        let sub = TimeGrid::new(g.t_start(), g.time(last), last + 1)?;
        let cut = |s: &ComplexSignal| ComplexSignal::new(sub, s.samples()[..=last].to_vec());
        Ok(Self {
            labels: self.labels.clone(),
            common: cut(&self.common)?,
            offsets: self.offsets.iter().map(cut).collect::<Result<_>>()?,
        })
    }

    /// Pairwise offset differences `D̃_i − D̃_j` for `i < j`.
    pub fn pair_differences(&self) -> Vec<(usize, usize, Vec<Complex64>)> {
        let n = self.offsets.len();
        let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
        for i in 0..n {
            for j in i + 1..n {
                let d = self.offsets[i]
                    .samples()
                    .iter()
                    .zip(self.offsets[j].samples())
                    .map(|(a, b)| a - b)
                    .collect();
                out.push((i, j, d));
            }
        }
        out
    }
}

/// Split outputs into a state-independent reference and per-state offsets.
///
/// `reference` is the output of the same pipeline with every dispersive shift
/// set to zero.
pub fn decompose_output(
    outputs: &[FieldTrajectory],
    reference: &ComplexSignal,
) -> Result<OutputDecomposition> {
    let mut offsets = Vec::with_capacity(outputs.len());
    for t in outputs {
        offsets.push(t.output.sub(reference)?);
    }
    Ok(OutputDecomposition {
        labels: outputs.iter().map(|t| t.state_label.clone()).collect(),
        common: reference.clone(),
        offsets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DetectionProtocol {
    Homodyne { alpha: f64 },
    Synodyne { alpha_of_t: Vec<f64> },
}

impl DetectionProtocol {
    pub fn trace(&self, z: &ComplexSignal) -> Result<Vec<f64>> {
        match self {
            DetectionProtocol::Homodyne { alpha } => Ok(homodyne_trace(z, *alpha)),
            DetectionProtocol::Synodyne { alpha_of_t } => synodyne_trace(z, alpha_of_t),
        }
    }
}

/// `e_α · Z̃(t)`.
pub fn homodyne_trace(z: &ComplexSignal, alpha: f64) -> Vec<f64> {
    let (s, c) = alpha.sin_cos();
    z.samples().iter().map(|v| v.re * c + v.im * s).collect()
}

pub fn synodyne_trace(z: &ComplexSignal, alpha_of_t: &[f64]) -> Result<Vec<f64>> {
    if alpha_of_t.len() != z.len() {
        return Err(Error::GridMismatch(format!(
            "angle signal has {} samples, trace has {}",
            alpha_of_t.len(),
            z.len()
        )));
    }
    Ok(z.samples()
        .iter()
        .zip(alpha_of_t)
        .map(|(v, a)| v.re * a.cos() + v.im * a.sin())
        .collect())
}

/// `∫ |c_j − c_j'| dt` by the trapezoidal rule.
pub fn distinguishability(a: &[f64], b: &[f64], dt: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!(
            "traces have {} and {} samples",
            a.len(),
            b.len()
        )));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    Ok(trapezoid(&diff, dt))
}

fn reduce_angle(alpha: f64) -> f64 {
    let a = alpha.rem_euclid(PI);
    if a >= PI - 1e-15 {
        0.0
    } else {
        a
    }
}

fn projected_integral(d: &[Complex64], alpha: f64, dt: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let v: Vec<f64> = d.iter().map(|z| (z.re * c + z.im * s).abs()).collect();
    trapezoid(&v, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomodyneOptimum {
    pub alpha: f64,
    pub worst_pair_q: f64,
    pub worst_pair: (usize, usize),
}

const ANGLE_GRID: usize = 1024;
const GOLDEN_TOL: f64 = 1e-6;

/// `max_α min_{i<j} Q_ij(α)`: grid of 1024 angles on `[0, π)`, then golden
/// section inside the best bracket. Ties go to the smaller angle.
pub fn optimize_homodyne_angle(decomp: &OutputDecomposition) -> Result<HomodyneOptimum> {
    if decomp.offsets.len() < 2 {
        return Err(Error::InvalidInput(
            "angle optimization needs at least two states".into(),
        ));
    }
    let dt = decomp.grid().dt();
    let pairs = decomp.pair_differences();
    let objective = |alpha: f64| -> (f64, (usize, usize)) {
        pairs
            .iter()
            .map(|(i, j, d)| (projected_integral(d, alpha, dt), (*i, *j)))
            .fold((f64::INFINITY, (0, 0)), |a, b| if b.0 < a.0 { b } else { a })
    };

    let step = PI / ANGLE_GRID as f64;
    let mut best_k = 0;
    let mut best = objective(0.0);
    for k in 1..ANGLE_GRID {
        let v = objective(k as f64 * step);
        if v.0 > best.0 {
            best = v;
            best_k = k;
        }
    }
    let alpha_grid = best_k as f64 * step;

    // golden section on [α − h, α + h]
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (alpha_grid - step, alpha_grid + step);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = objective(x1).0;
    let mut f2 = objective(x2).0;
    while hi - lo > GOLDEN_TOL {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = objective(x1).0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = objective(x2).0;
        }
    }
    let refined = 0.5 * (lo + hi);
    let fr = objective(refined);
    let (alpha, value) = if fr.0 > best.0 {
        (reduce_angle(refined), fr)
    } else {
        (alpha_grid, best)
    };
    Ok(HomodyneOptimum {
        alpha,
        worst_pair_q: value.0,
        worst_pair: value.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynodyneObjective {
    /// `max_α min_{i<j} |(D_i − D_j)·e_α|`.
    #[default]
    Absolute,
    /// `max_α min_{i<j} (D_i − D_j)·e_α`, without the absolute value.
    Signed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynodyneOptimum {
    /// Angle per sample.
    pub alpha: Vec<f64>,
    /// Per-sample value of the optimized objective.
    pub separation: Vec<f64>,
    /// `min_{i<j} ∫ |c_i − c_j| dt` under the per-time angle.
    pub greedy_q: f64,
    /// Reported worst-pair distinguishability, `max(greedy_q, homodyne optimum)`.
    pub worst_pair_q: f64,
    /// True if the constant homodyne angle did better than the per-time schedule.
    pub homodyne_fallback: bool,
}

fn per_time_objective(ds: &[Complex64], alpha: f64, objective: SynodyneObjective) -> f64 {
    let (s, c) = alpha.sin_cos();
    ds.iter()
        .map(|d| {
            let p = d.re * c + d.im * s;
            match objective {
                SynodyneObjective::Absolute => p.abs(),
                SynodyneObjective::Signed => p,
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Exact per-time maximizer.
///
/// The objective is a minimum of (absolute values of) sinusoids in α, so its
/// maximum sits where one term peaks or where two terms are equal; those
/// candidate angles are enumerated directly.
fn best_angle_at(ds: &[Complex64], objective: SynodyneObjective) -> (f64, f64) {
    let period = match objective {
        SynodyneObjective::Absolute => PI,
        SynodyneObjective::Signed => 2.0 * PI,
    };
    let mut candidates = Vec::with_capacity(ds.len() * ds.len() * 2 + ds.len());
    for (p, a) in ds.iter().enumerate() {
        candidates.push(a.arg());
        for b in &ds[p + 1..] {
            for d in [a - b, a + b] {
                candidates.push(d.arg() + 0.5 * PI);
                candidates.push(d.arg() - 0.5 * PI);
            }
        }
    }
    let mut best = (0.0, f64::NEG_INFINITY);
    for c in candidates {
        let alpha = c.rem_euclid(period);
        let alpha = if alpha >= period - 1e-15 { 0.0 } else { alpha };
        let v = per_time_objective(ds, alpha, objective);
        if !best.1.is_finite() {
            best = (alpha, v);
            continue;
        }
        let tol = 1e-12 * v.abs().max(best.1.abs());
        let better = v > best.1 + tol;
        let tie = (v - best.1).abs() <= tol && alpha < best.0;
        if better || tie {
            best = (alpha, v);
        }
    }
    best
}

/// Per-time angle maximizing the worst pairwise separation of the offsets.
///
/// Samples where every offset difference vanishes keep the previous angle;
/// the first defaults to the homodyne optimum.
pub fn optimize_synodyne_angle(
    decomp: &OutputDecomposition,
    objective: SynodyneObjective,
) -> Result<SynodyneOptimum> {
    let hom = optimize_homodyne_angle(decomp)?;
    let pairs = decomp.pair_differences();
    let n = decomp.grid().n_samples();
    let dt = decomp.grid().dt();
    let scale = pairs
        .iter()
        .flat_map(|(_, _, d)| d.iter().map(|z| z.norm()))
        .fold(0.0, f64::max);
    let mut alpha = Vec::with_capacity(n);
    let mut separation = Vec::with_capacity(n);
    let mut prev = hom.alpha;
    let mut ds = vec![Complex64::new(0.0, 0.0); pairs.len()];
    for k in 0..n {
        for (slot, (_, _, d)) in ds.iter_mut().zip(&pairs) {
            *slot = d[k];
        }
        let degenerate = ds.iter().all(|d| d.norm() <= 1e-14 * scale);
        let a = if degenerate {
            prev
        } else {
            best_angle_at(&ds, objective).0
        };
        separation.push(per_time_objective(&ds, a, objective));
        alpha.push(a);
        prev = a;
    }
    let greedy_q = pairs
        .iter()
        .map(|(_, _, d)| {
            let v: Vec<f64> = d
                .iter()
                .zip(&alpha)
                .map(|(z, a)| (z.re * a.cos() + z.im * a.sin()).abs())
                .collect();
            trapezoid(&v, dt)
        })
        .fold(f64::INFINITY, f64::min);
    let homodyne_fallback = hom.worst_pair_q > greedy_q;
    if homodyne_fallback {
        alpha = vec![hom.alpha; n];
        separation = (0..n)
            .map(|k| {
                let ds: Vec<Complex64> = pairs.iter().map(|(_, _, d)| d[k]).collect();
                per_time_objective(&ds, hom.alpha, objective)
            })
            .collect();
    }
    Ok(SynodyneOptimum {
        alpha,
        separation,
        greedy_q,
        worst_pair_q: greedy_q.max(hom.worst_pair_q),
        homodyne_fallback,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NormalizationMode {
    /// Largest intracavity amplitude over all states and modes equals `cap`.
    MaxIntracavity { cap: f64 },
    /// `∫ |A|² dt` (summed over all input ports) equals `cap`.
    InputPower { cap: f64 },
}

/// Real factor by which drives (and, by linearity, all fields) are scaled.
pub fn normalization_factor(
    drives: &[&ComplexSignal],
    trajectories: &[FieldTrajectory],
    mode: NormalizationMode,
) -> Result<f64> {
    let power: f64 = drives.iter().map(|d| d.energy()).sum();
    if power == 0.0 {
        return Err(Error::InvalidInput("cannot normalize a zero drive".into()));
    }
    match mode {
        NormalizationMode::MaxIntracavity { cap } => {
            let peak = trajectories
                .iter()
                .map(|t| t.max_intracavity())
                .fold(0.0, f64::max);
            if peak == 0.0 {
                return Err(Error::InvalidInput(
                    "drive leaves every cavity empty; cannot fix its peak".into(),
                ));
            }
            Ok(cap / peak)
        }
        NormalizationMode::InputPower { cap } => Ok((cap / power).sqrt()),
    }
}

/// Scale a drive under the chosen constraint; returns the scaled drive and factor.
pub fn normalize_drive(
    drive: &ComplexSignal,
    trajectories: &[FieldTrajectory],
    mode: NormalizationMode,
) -> Result<(ComplexSignal, f64)> {
    let k = normalization_factor(&[drive], trajectories, mode)?;
    Ok((drive.scaled(Complex64::new(k, 0.0)), k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn decomposition(offsets: Vec<Vec<Complex64>>) -> OutputDecomposition {
        let n = offsets[0].len();
        let grid = TimeGrid::new(0.0, 1.0, n).unwrap();
        OutputDecomposition {
            labels: (0..offsets.len()).map(|i| i.to_string()).collect(),
            common: ComplexSignal::zeros(grid),
            offsets: offsets
                .into_iter()
                .map(|o| ComplexSignal::new(grid, o).unwrap())
                .collect(),
        }
    }

    #[test]
    fn homodyne_projection_examples() {
        let grid = TimeGrid::new(0.0, 1.0, 3).unwrap();
        let z = ComplexSignal::new(grid, vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, -1.0)]).unwrap();
        assert_eq!(homodyne_trace(&z, 0.0), vec![1.0, -3.0, 0.0]);
        let q = homodyne_trace(&z, PI / 2.0);
        for (a, b) in q.iter().zip([2.0, 0.5, -1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = homodyne_trace(&z, 0.4);
        let m = homodyne_trace(&z, 0.4 + PI);
        for (a, b) in p.iter().zip(m) {
            assert!((a + b).abs() < 1e-15);
        }
    }

    #[test]
    fn distinguishability_is_symmetric_and_zero_on_identity() {
        let a = [0.0, 1.0, -2.0, 0.5];
        let b = [1.0, 0.0, 0.0, 0.5];
        assert_eq!(distinguishability(&a, &a, 0.1).unwrap(), 0.0);
        assert_eq!(
            distinguishability(&a, &b, 0.1).unwrap(),
            distinguishability(&b, &a, 0.1).unwrap()
        );
        assert!(distinguishability(&a, &b[..3], 0.1).is_err());
    }

    #[test]
    fn antipodal_offsets_give_their_direction() {
        let phi: f64 = 0.7;
        let dir = c(phi.cos(), phi.sin());
        let shape: Vec<f64> = (0..101).map(|k| (PI * k as f64 / 100.0).sin()).collect();
        let d = decomposition(vec![
            shape.iter().map(|s| dir * *s).collect(),
            shape.iter().map(|s| -dir * *s).collect(),
        ]);
        let opt = optimize_homodyne_angle(&d).unwrap();
        assert!((opt.alpha - phi).abs() < 1e-5, "{}", opt.alpha);
        let syn = optimize_synodyne_angle(&d, SynodyneObjective::Absolute).unwrap();
        assert!((syn.worst_pair_q - opt.worst_pair_q).abs() < 1e-9 * opt.worst_pair_q);
    }

    #[test]
    fn fewer_than_two_states_is_an_error() {
        let d = decomposition(vec![vec![c(1.0, 0.0); 5]]);
        assert!(optimize_homodyne_angle(&d).is_err());
        assert!(optimize_synodyne_angle(&d, SynodyneObjective::Absolute).is_err());
    }

    #[test]
    fn exact_per_time_angle_matches_dense_search() {
        let ds = [c(1.0, 0.3), c(-0.2, 0.9), c(0.7, -1.1), c(0.05, 0.4), c(-1.3, -0.2), c(0.6, 0.6)];
        for obj in [SynodyneObjective::Absolute, SynodyneObjective::Signed] {
            let (_, v) = best_angle_at(&ds, obj);
            let dense = (0..200_000)
                .map(|k| per_time_objective(&ds, 2.0 * PI * k as f64 / 200_000.0, obj))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= dense - 1e-9, "{obj:?}: {v} < {dense}");
        }
    }

    #[test]
    fn rotating_difference_favours_synodyne() {
        // D_1 − D_0 rotates through half a turn with constant magnitude
        let n = 2001;
        let d1: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(1.0, PI * k as f64 / (n - 1) as f64))
            .collect();
        let d = decomposition(vec![vec![c(0.0, 0.0); n], d1]);
        let hom = optimize_homodyne_angle(&d).unwrap();
        let syn = optimize_synodyne_angle(&d, SynodyneObjective::Absolute).unwrap();
        assert!((syn.worst_pair_q / hom.worst_pair_q - PI / 2.0).abs() < 1e-3);
    }

    #[test]
    fn normalization_modes() {
        let grid = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let drive = ComplexSignal::from_fn(grid, |_| c(2.0, 0.0));
        let traj = FieldTrajectory {
            state_label: "0".into(),
            intracavity: vec![ComplexSignal::from_fn(grid, |t| c(t, 0.0))],
            output: ComplexSignal::zeros(grid),
        };
        let k = normalization_factor(&[&drive], std::slice::from_ref(&traj), NormalizationMode::MaxIntracavity { cap: 1.0 })
            .unwrap();
        assert!((k - 1.0).abs() < 1e-15);
        let (scaled, k) =
            normalize_drive(&drive, &[traj], NormalizationMode::InputPower { cap: 1.0 }).unwrap();
        assert!((scaled.energy() - 1.0).abs() < 1e-12);
        assert!((k - 0.5).abs() < 1e-12);
        assert!(normalize_drive(
            &ComplexSignal::zeros(grid),
            &[],
            NormalizationMode::InputPower { cap: 1.0 }
        )
        .is_err());
    }
}
