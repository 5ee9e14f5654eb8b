//! Corrected drive synthesis.
//!
//! A drive is written as a derivative expansion of a trial pulse,
//!
//! ```text
//! A(t) = Σ_j b_j · iʲ · (iʲ dʲΩ/dtʲ),      b_0 = 1
//! ```
//!
//! so that with `d/dt ↔ −iω` the spectrum is `A(ω) = Σ_j b_j (iω)ʲ Ω(ω)`. For
//! bare modes `b_j = e_j(1/E_1, …, 1/E_N)` and `A(ω) = ∏ (1 + iω/E_k) Ω(ω)`,
//! which is the inverse-transfer product normalized at ω = 0.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{components, zero_state, LinearSystem};
use crate::network::{Cascade, TransferFunction};
use crate::poly::Poly;
use crate::signal::{
    fourier_transform, inverse_fourier_transform, ComplexSignal, Spectrum, TimeGrid, TrialPulse,
};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficients `b_j` of a drive `Σ_j b_j (−d/dt)ʲ Ω`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeExpansion {
    coefficients: Vec<Complex64>,
}

impl DerivativeExpansion {
    pub fn new(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::InvalidInput("empty derivative expansion".into()));
        }
        Ok(Self { coefficients })
    }

    /// `A = Ω`.
    pub fn identity() -> Self {
        Self {
            coefficients: vec![ONE],
        }
    }

    /// Expansion whose frequency response is `p(iω)`, i.e. `b_j` is the
    /// coefficient of `xʲ` in `p(x)`.
    pub fn from_polynomial_in_x(p: &Poly) -> Self {
        Self {
            coefficients: p.coeffs().to_vec(),
        }
    }

    /// Expansion for `∏_k H_k⁻¹(ω) / ∏_k H_k⁻¹(0)`.
    ///
    /// Only transfers with constant numerators give a finite expansion.
    pub fn from_transfers(transfers: &[TransferFunction]) -> Result<Self> {
        let mut product = Poly::one();
        for tf in transfers {
            if tf.numerator.degree() > 0 {
                return Err(Error::InvalidInput(
                    "transfer numerator depends on ω; no finite derivative expansion".into(),
                ));
            }
            let n0 = tf.numerator.coeffs()[0];
            if n0 == ZERO {
                return Err(Error::Singular("transfer with zero numerator".into()));
            }
            product = &product * &tf.denominator.scale(ONE / n0);
        }
        // ω = −i x
        let in_x = product.rescale_variable(-I);
        let b0 = in_x.coeffs()[0];
        if b0.norm() == 0.0 {
            return Err(Error::Singular(
                "inverse transfer vanishes at ω = 0; cannot normalize".into(),
            ));
        }
        Ok(Self::from_polynomial_in_x(&in_x.scale(ONE / b0)))
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Weight of the basis term `iʲ dʲΩ/dtʲ`, which is `iʲ b_j`.
    pub fn basis_coefficient(&self, j: usize) -> Complex64 {
        self.coefficients[j] * I.powu(j as u32)
    }

    /// Frequency response `Σ_j b_j (iω)ʲ`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let x = I * omega;
        self.coefficients
            .iter()
            .rev()
            .fold(ZERO, |acc, b| acc * x + b)
    }

    pub fn scaled(&self, k: Complex64) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|b| b * k).collect(),
        }
    }

    /// `Σ_j b_j (−1)ʲ Ω⁽ʲ⁾` on `grid`, from analytic derivatives.
    pub fn apply(&self, pulse: &TrialPulse, grid: &TimeGrid) -> Result<ComplexSignal> {
        let mut out = vec![ZERO; grid.n_samples()];
        for (j, b) in self.coefficients.iter().enumerate() {
            if *b == ZERO {
                continue;
            }
            let w = if j % 2 == 0 { *b } else { -*b };
            let d = pulse.sample(grid, j)?;
            for (o, s) in out.iter_mut().zip(d.samples()) {
                *o += w * s;
            }
        }
        ComplexSignal::new(*grid, out)
    }
}

/// Elementary symmetric polynomials of `1/E_l`, via the expansion of `∏ (1 + x/E_l)`.
pub fn cd_coefficients(energies: &[Complex64]) -> Result<DerivativeExpansion> {
    if energies.is_empty() {
        return Err(Error::InvalidInput("no mode energies".into()));
    }
    let mut b = vec![ONE];
    for e in energies {
        if e.norm() == 0.0 {
            return Err(Error::Singular("mode energy at zero (undriven mode)".into()));
        }
        let inv = ONE / e;
        b.push(ZERO);
        for j in (1..b.len()).rev() {
            let prev = b[j - 1];
            b[j] += prev * inv;
        }
    }
    DerivativeExpansion::new(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Uncorrected,
    TimeDomainExpansion,
    FrequencyDomainInverse,
    CascadeCompensation,
    LegacyCompensation,
}

/// A synthesized input field.
///
/// `raw_scale` is the factor dividing the unnormalized inverse-transfer drive,
/// so `time_signal · raw_scale` is `∏ H⁻¹ Ω` itself. Uncorrected drives use 1.
#[derive(Debug, Clone)]
pub struct SynthesizedDrive {
    pub time_signal: ComplexSignal,
    pub frequency_signal: Option<Spectrum>,
    pub provenance: Provenance,
    pub raw_scale: Complex64,
    pub window: TimeGrid,
}

impl SynthesizedDrive {
    pub fn scaled(&self, k: f64) -> Self {
        let kc = Complex64::new(k, 0.0);
        Self {
            time_signal: self.time_signal.scaled(kc),
            frequency_signal: self.frequency_signal.as_ref().map(|s| Spectrum {
                omega: s.omega.clone(),
                values: s.values.iter().map(|v| v * kc).collect(),
                grid: s.grid,
            }),
            raw_scale: self.raw_scale / kc,
            ..self.clone()
        }
    }

    /// `max(|A(t_start)|, |A(T)|) / max|A|` at the edges of the pulse window.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.time_signal.max_abs();
        if peak == 0.0 {
            return 0.0;
        }
        let g = self.time_signal.grid();
        let a = self.time_signal.samples()[g.nearest_index(self.window.t_start())].norm();
        let b = self.time_signal.samples()[g.nearest_index(self.window.t_end())].norm();
        a.max(b) / peak
    }
}

/// The trial pulse itself, sampled on `grid`.
pub fn uncorrected_drive(pulse: &TrialPulse, grid: &TimeGrid) -> Result<SynthesizedDrive> {
    Ok(SynthesizedDrive {
        time_signal: pulse.sample(grid, 0)?,
        frequency_signal: None,
        provenance: Provenance::Uncorrected,
        raw_scale: ONE,
        window: pulse.window,
    })
}

/// Drive assembled from analytic derivatives of the trial pulse.
pub fn synthesize_time_domain(
    pulse: &TrialPulse,
    expansion: &DerivativeExpansion,
) -> Result<SynthesizedDrive> {
    synthesize_time_domain_on(pulse, expansion, &pulse.window)
}

pub fn synthesize_time_domain_on(
    pulse: &TrialPulse,
    expansion: &DerivativeExpansion,
    grid: &TimeGrid,
) -> Result<SynthesizedDrive> {
    Ok(SynthesizedDrive {
        time_signal: expansion.apply(pulse, grid)?,
        frequency_signal: None,
        provenance: Provenance::TimeDomainExpansion,
        raw_scale: ONE,
        window: pulse.window,
    })
}

/// `∏_k H_k⁻¹(0)`, the normalization that brings the inverse product to `b_0 = 1`.
pub fn inverse_product_at_zero(transfers: &[TransferFunction]) -> Result<Complex64> {
    let mut k = ONE;
    for tf in transfers {
        let num = tf.numerator.eval(ZERO);
        let den = tf.denominator.eval(ZERO);
        if num == ZERO {
            return Err(Error::Singular("transfer vanishes at ω = 0".into()));
        }
        if den == ZERO {
            return Err(Error::Singular("transfer has a pole at ω = 0".into()));
        }
        k *= den / num;
    }
    Ok(k)
}

/// Drive from `∏_k H_k⁻¹(ω) Ω(ω)`, normalized at ω = 0.
pub fn synthesize_frequency_domain(
    pulse: &TrialPulse,
    transfers: &[TransferFunction],
) -> Result<SynthesizedDrive> {
    synthesize_frequency_domain_on(pulse, transfers, &pulse.window)
}

pub fn synthesize_frequency_domain_on(
    pulse: &TrialPulse,
    transfers: &[TransferFunction],
    grid: &TimeGrid,
) -> Result<SynthesizedDrive> {
    for tf in transfers {
        if tf.numerator.is_zero() {
            return Err(Error::Singular("transfer with zero numerator".into()));
        }
    }
    let norm = inverse_product_at_zero(transfers)?;
    let omega_t = pulse.sample(grid, 0)?;
    let spectrum = fourier_transform(&omega_t);
    let corrected = spectrum.map(|w| {
        let wc = Complex64::new(w, 0.0);
        transfers.iter().fold(ONE / norm, |acc, tf| {
            acc * tf.denominator.eval(wc) / tf.numerator.eval(wc)
        })
    });
    Ok(SynthesizedDrive {
        time_signal: inverse_fourier_transform(&corrected),
        frequency_signal: Some(corrected),
        provenance: Provenance::FrequencyDomainInverse,
        raw_scale: norm,
        window: pulse.window,
    })
}

/// Compensation ratio `Γ(ω)/Ω(ω)` from the general rational form
/// `(H⁽²⁾₀/H⁽¹⁾₀ − H⁽²⁾₁/H⁽¹⁾₁) / (H⁽²⁾₁ − H⁽²⁾₀)`.
pub fn gamma_rational(c: &Cascade, omega: f64) -> Result<Complex64> {
    let h1 = [c.cavity1.transfer(0)?, c.cavity1.transfer(1)?];
    let h2 = [c.cavity2.transfer(0)?, c.cavity2.transfer(1)?];
    let den = h2[1].eval(omega) - h2[0].eval(omega);
    if den.norm() == 0.0 {
        return Err(degenerate_second_cavity());
    }
    Ok((h2[0].eval(omega) / h1[0].eval(omega) - h2[1].eval(omega) / h1[1].eval(omega)) / den)
}

fn degenerate_second_cavity() -> Error {
    Error::Singular(
        "second-cavity shifts are degenerate; compensation denominator H2_1 − H2_0 vanishes"
            .into(),
    )
}

/// Closed form of the compensation field for bare single-port cavities,
/// `Γ(t) = g₀ Ω(t) + g₁ dΩ/dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaClosedForm {
    pub g0: Complex64,
    pub g1: Complex64,
}

impl GammaClosedForm {
    pub fn new(c: &Cascade) -> Result<Self> {
        let (x1, x2) = (c.cavity1.chi, c.cavity2.chi);
        let d2 = x2[1] - x2[0];
        if d2 == 0.0 {
            return Err(degenerate_second_cavity());
        }
        let a1 = Complex64::new(c.cavity1.delta, 0.5 * c.cavity1.kappa);
        let a2 = Complex64::new(c.cavity2.delta, 0.5 * c.cavity2.kappa);
        let s = (x1[0] * x2[1] - x1[1] * x2[0]) / d2 + a1 + a2 * ((x1[0] - x1[1]) / d2);
        let k = (x2[0] + x1[1] - x2[1] - x1[0]) / d2;
        let kappa1 = c.cavity1.kappa;
        Ok(Self {
            g0: -I * s / kappa1,
            g1: Complex64::new(-k / kappa1, 0.0),
        })
    }

    /// `Γ(ω)/Ω(ω)` under `d/dt ↔ −iω`.
    pub fn ratio(&self, omega: f64) -> Complex64 {
        self.g0 - I * omega * self.g1
    }

    /// The same ratio as a polynomial in `x = iω`.
    pub fn poly_in_x(&self) -> Poly {
        Poly::linear(self.g0, -self.g1)
    }
}

/// Time-minimizing cascade drives `(A, B)`.
///
/// `A = Ω / (H⁽¹⁾₀H⁽¹⁾₁H⁽²⁾₀H⁽²⁾₁)` and `B = Γ / (H⁽²⁾₀H⁽²⁾₁)`, both divided by
/// the same constant so that `A` has `b_0 = 1`. The rational and closed forms
/// of `Γ` are compared at the drive's bandwidth and the larger deviation is
/// returned alongside the drives.
pub fn cascade_compensation(
    pulse: &TrialPulse,
    c: &Cascade,
    grid: &TimeGrid,
) -> Result<(SynthesizedDrive, SynthesizedDrive, f64)> {
    let gamma = GammaClosedForm::new(c)?;
    let energies = [
        c.cavity1.energy(0),
        c.cavity1.energy(1),
        c.cavity2.energy(0),
        c.cavity2.energy(1),
    ];
    let a_exp = cd_coefficients(&energies)?;
    let norm: Complex64 = energies.iter().product::<Complex64>()
        / (c.cavity1.kappa.powi(2) * c.cavity2.kappa.powi(2));
    // B(x) = Γ(x) (E2_0 + x)(E2_1 + x) / κ2² / norm
    let b_poly = &(&gamma.poly_in_x() * &Poly::linear(energies[2], ONE))
        * &Poly::linear(energies[3], ONE);
    let b_poly = b_poly.scale(ONE / (norm * c.cavity2.kappa.powi(2)));
    let b_exp = DerivativeExpansion::from_polynomial_in_x(&b_poly);

    let bandwidth = 20.0 * std::f64::consts::PI / pulse.window.duration();
    let mut deviation: f64 = 0.0;
    for k in 0..=16 {
        let w = bandwidth * (k as f64 / 8.0 - 1.0);
        let r = gamma_rational(c, w)?;
        deviation = deviation.max((gamma.ratio(w) - r).norm() / r.norm().max(1e-300));
    }

    let a = SynthesizedDrive {
        time_signal: a_exp.apply(pulse, grid)?,
        frequency_signal: None,
        provenance: Provenance::CascadeCompensation,
        raw_scale: norm,
        window: pulse.window,
    };
    let b = SynthesizedDrive {
        time_signal: b_exp.apply(pulse, grid)?,
        frequency_signal: None,
        provenance: Provenance::CascadeCompensation,
        raw_scale: norm,
        window: pulse.window,
    };
    Ok((a, b, deviation))
}

/// Ratio `B/A` of the known compensation,
/// `(H⁽²⁾₀H⁽¹⁾₁ − H⁽²⁾₁H⁽¹⁾₀) / (H⁽²⁾₁ − H⁽²⁾₀)`.
pub fn legacy_ratio(c: &Cascade, omega: f64) -> Result<Complex64> {
    let h1 = [c.cavity1.transfer(0)?, c.cavity1.transfer(1)?];
    let h2 = [c.cavity2.transfer(0)?, c.cavity2.transfer(1)?];
    let den = h2[1].eval(omega) - h2[0].eval(omega);
    if den.norm() == 0.0 {
        return Err(degenerate_second_cavity());
    }
    Ok((h2[0].eval(omega) * h1[1].eval(omega) - h2[1].eval(omega) * h1[0].eval(omega)) / den)
}

/// Known compensation applied pointwise to a drive spectrum.
pub fn legacy_compensation(a: &Spectrum, c: &Cascade) -> Result<Spectrum> {
    let values = a
        .omega
        .iter()
        .zip(&a.values)
        .map(|(w, v)| legacy_ratio(c, *w).map(|r| r * v))
        .collect::<Result<Vec<_>>>()?;
    Ok(Spectrum {
        omega: a.omega.clone(),
        values,
        grid: a.grid,
    })
}

/// Known compensation applied causally in time.
///
/// `B/A = κ₁ N(x) / ((E⁽¹⁾₀ + x)(E⁽¹⁾₁ + x)(E⁽²⁾₀ − E⁽²⁾₁))` with `N` linear in `x`,
/// realized as two chained first-order filters.
pub fn legacy_compensation_time(a: &ComplexSignal, c: &Cascade) -> Result<ComplexSignal> {
    let (e10, e11) = (c.cavity1.energy(0), c.cavity1.energy(1));
    let (e20, e21) = (c.cavity2.energy(0), c.cavity2.energy(1));
    let d = e20 - e21;
    if d.norm() == 0.0 {
        return Err(degenerate_second_cavity());
    }
    let n0 = e21 * e10 - e20 * e11;
    let n1 = e21 + e10 - e20 - e11;
    let sys = LinearSystem::new(
        nalgebra::DMatrix::from_row_slice(2, 2, &[e10, ZERO, -ONE, e11]),
        nalgebra::DMatrix::from_row_slice(2, 1, &[-ONE, ZERO]),
    )?;
    let states = sys.propagate(&[a], &zero_state(2))?;
    let u = components(*a.grid(), &states);
    let k = c.cavity1.kappa / d;
    let w2 = n0 - n1 * e11;
    ComplexSignal::new(
        *a.grid(),
        u[0].samples()
            .iter()
            .zip(u[1].samples())
            .map(|(u1, u2)| k * (n1 * u1 + w2 * u2))
            .collect(),
    )
}

/// Legacy cascade drives: `A = Ω` and the causal known compensation.
pub fn legacy_cascade_drives(
    pulse: &TrialPulse,
    c: &Cascade,
    grid: &TimeGrid,
) -> Result<(SynthesizedDrive, SynthesizedDrive)> {
    let a = uncorrected_drive(pulse, grid)?;
    let b = legacy_compensation_time(&a.time_signal, c)?;
    Ok((
        SynthesizedDrive {
            provenance: Provenance::LegacyCompensation,
            ..a.clone()
        },
        SynthesizedDrive {
            time_signal: b,
            frequency_signal: None,
            provenance: Provenance::LegacyCompensation,
            raw_scale: ONE,
            window: pulse.window,
        },
    ))
}
