//! Network scenarios: qubit-state enumeration, complex mode energies and the
//! frequency-domain transfer functions of the three supported topologies.
//!
//! A bare cavity mode has energy `E = iΔ + iχ − κ/2` and evolves as `e^{Et}`.
//! Under the crate's Fourier convention (`d/dt ↔ −iω`) the reflected output of
//! a single-port cavity is
//!
//! ```text
//! H(ω) = κ / (E + iω)
//! ```
//!
//! which has its pole at `ω = iE` (lower half plane) and `H(0) = κ/E`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Poly;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Complex pole energy of a bare cavity mode.
pub fn mode_energy(kappa: f64, delta: f64, chi: f64) -> Complex64 {
    Complex64::new(-0.5 * kappa, delta + chi)
}

/// One measured state's bare mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateMode {
    pub label: String,
    pub chi: f64,
    pub energy: Complex64,
}

/// A joint qubit state together with the bare mode of every cavity it shifts.
///
/// Single-cavity and Purcell scenarios carry one mode (the measurement
/// cavity); cascades carry one mode per cavity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioState {
    pub label: String,
    pub modes: Vec<StateMode>,
}

/// How the measured states are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateSpec {
    /// `n` qubits, `2ⁿ` states; qubit `i` contributes `±χᵢ`.
    ///
    /// `ground_signs[i]` is the sign for the qubit in `0` (default `+1`); the
    /// excited state takes the opposite sign.
    Qubits {
        chis: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ground_signs: Option<Vec<f64>>,
    },
    /// Explicit list of per-state total shifts.
    Shifts { shifts: Vec<f64> },
}

impl StateSpec {
    pub fn qubits(chis: &[f64]) -> Self {
        StateSpec::Qubits {
            chis: chis.to_vec(),
            ground_signs: None,
        }
    }

    pub fn shifts(shifts: &[f64]) -> Self {
        StateSpec::Shifts {
            shifts: shifts.to_vec(),
        }
    }

    /// `(label, total χ)` in ascending bitstring order.
    pub fn enumerate(&self) -> Result<Vec<(String, f64)>> {
        match self {
            StateSpec::Qubits { chis, ground_signs } => {
                let n = chis.len();
                if n == 0 {
                    return Err(Error::InvalidInput("at least one qubit required".into()));
                }
                if n > 16 {
                    return Err(Error::InvalidInput(format!("{n} qubits is too many")));
                }
                let signs = match ground_signs {
                    Some(s) if s.len() != n => {
                        return Err(Error::InvalidInput(format!(
                            "{} ground signs for {n} qubits",
                            s.len()
                        )))
                    }
                    Some(s) => s.iter().map(|v| v.signum()).collect(),
                    None => vec![1.0; n],
                };
                Ok((0..1usize << n)
                    .map(|b| {
                        let bits: String = (0..n)
                            .map(|i| if (b >> (n - 1 - i)) & 1 == 1 { '1' } else { '0' })
                            .collect();
                        let chi = bits
                            .chars()
                            .zip(chis.iter().zip(&signs))
                            .map(|(bit, (chi, s))| if bit == '0' { s * chi } else { -s * chi })
                            .sum();
                        (bits, chi)
                    })
                    .collect())
            }
            StateSpec::Shifts { shifts } => {
                if shifts.is_empty() {
                    return Err(Error::InvalidInput("empty shift list".into()));
                }
                Ok(shifts
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (i.to_string(), *s))
                    .collect())
            }
        }
    }

    /// Same enumeration with every shift set to zero.
    pub fn without_shifts(&self) -> Self {
        match self {
            StateSpec::Qubits { chis, ground_signs } => StateSpec::Qubits {
                chis: vec![0.0; chis.len()],
                ground_signs: ground_signs.clone(),
            },
            StateSpec::Shifts { shifts } => StateSpec::Shifts {
                shifts: vec![0.0; shifts.len()],
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleCavity {
    pub kappa: f64,
    pub delta: f64,
    pub states: StateSpec,
}

/// Measurement cavity coupled to a lossy filter cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Purcell {
    /// Inter-cavity coupling.
    pub g: Complex64,
    /// Measurement-cavity detuning Δ.
    pub delta_c: f64,
    /// Filter-cavity detuning δ.
    pub delta_f: f64,
    /// Filter-cavity linewidth.
    pub kappa: f64,
    pub states: StateSpec,
    /// Intrinsic loss of the measurement cavity (zero in the lossless model).
    #[serde(default)]
    pub cavity1_loss: f64,
}

/// One cavity of a cascade; `chi[q]` is its shift with its qubit in `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeCavity {
    pub kappa: f64,
    pub delta: f64,
    pub chi: [f64; 2],
}

impl CascadeCavity {
    pub fn energy(&self, qubit: usize) -> Complex64 {
        mode_energy(self.kappa, self.delta, self.chi[qubit])
    }

    pub fn transfer(&self, qubit: usize) -> Result<TransferFunction> {
        single_cavity_transfer(self.kappa, self.delta, self.chi[qubit])
    }
}

/// Two cavities in series; cavity 1's output drives cavity 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cascade {
    pub cavity1: CascadeCavity,
    pub cavity2: CascadeCavity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "topology", rename_all = "snake_case")]
pub enum NetworkScenario {
    SingleCavity(SingleCavity),
    Purcell(Purcell),
    Cascade(Cascade),
}

impl NetworkScenario {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Unphysical(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            NetworkScenario::SingleCavity(s) => {
                positive("kappa", s.kappa)?;
                s.states.enumerate()?;
            }
            NetworkScenario::Purcell(p) => {
                positive("kappa", p.kappa)?;
                if p.cavity1_loss < 0.0 {
                    return Err(Error::Unphysical("cavity1_loss must be ≥ 0".into()));
                }
                p.states.enumerate()?;
            }
            NetworkScenario::Cascade(c) => {
                positive("cavity1.kappa", c.cavity1.kappa)?;
                positive("cavity2.kappa", c.cavity2.kappa)?;
            }
        }
        Ok(())
    }

    /// Copy of the scenario with every dispersive shift set to zero.
    pub fn without_shifts(&self) -> Self {
        match self {
            NetworkScenario::SingleCavity(s) => NetworkScenario::SingleCavity(SingleCavity {
                states: s.states.without_shifts(),
                ..s.clone()
            }),
            NetworkScenario::Purcell(p) => NetworkScenario::Purcell(Purcell {
                states: p.states.without_shifts(),
                ..p.clone()
            }),
            NetworkScenario::Cascade(c) => {
                let mut c = *c;
                c.cavity1.chi = [0.0; 2];
                c.cavity2.chi = [0.0; 2];
                NetworkScenario::Cascade(c)
            }
        }
    }

    /// Copy with every rate (linewidths, detunings, shifts, couplings) times `k`.
    pub fn with_rates_scaled(&self, k: f64) -> Self {
        let states = |s: &StateSpec| match s {
            StateSpec::Qubits { chis, ground_signs } => StateSpec::Qubits {
                chis: chis.iter().map(|c| c * k).collect(),
                ground_signs: ground_signs.clone(),
            },
            StateSpec::Shifts { shifts } => StateSpec::Shifts {
                shifts: shifts.iter().map(|c| c * k).collect(),
            },
        };
        let cavity = |c: &CascadeCavity| CascadeCavity {
            kappa: c.kappa * k,
            delta: c.delta * k,
            chi: [c.chi[0] * k, c.chi[1] * k],
        };
        match self {
            NetworkScenario::SingleCavity(s) => NetworkScenario::SingleCavity(SingleCavity {
                kappa: s.kappa * k,
                delta: s.delta * k,
                states: states(&s.states),
            }),
            NetworkScenario::Purcell(p) => NetworkScenario::Purcell(Purcell {
                g: p.g * k,
                delta_c: p.delta_c * k,
                delta_f: p.delta_f * k,
                kappa: p.kappa * k,
                states: states(&p.states),
                cavity1_loss: p.cavity1_loss * k,
            }),
            NetworkScenario::Cascade(c) => NetworkScenario::Cascade(Cascade {
                cavity1: cavity(&c.cavity1),
                cavity2: cavity(&c.cavity2),
            }),
        }
    }

    /// Largest rate magnitude in the scenario, used to bound the time step.
    pub fn max_rate(&self) -> Result<f64> {
        let states = enumerate_states(self)?;
        let mut rate = states
            .iter()
            .flat_map(|s| s.modes.iter().map(|m| m.energy.norm()))
            .fold(0.0, f64::max);
        match self {
            NetworkScenario::SingleCavity(s) => rate = rate.max(s.kappa),
            NetworkScenario::Purcell(p) => {
                rate = rate
                    .max(p.kappa)
                    .max(p.g.norm())
                    .max(mode_energy(p.kappa, p.delta_f, 0.0).norm())
            }
            NetworkScenario::Cascade(c) => rate = rate.max(c.cavity1.kappa).max(c.cavity2.kappa),
        }
        Ok(rate)
    }
}

/// Deterministic state list: bitstrings ascending, each with its total shift and energy.
pub fn enumerate_states(scenario: &NetworkScenario) -> Result<Vec<ScenarioState>> {
    match scenario {
        NetworkScenario::SingleCavity(s) => Ok(s
            .states
            .enumerate()?
            .into_iter()
            .map(|(label, chi)| ScenarioState {
                modes: vec![StateMode {
                    label: label.clone(),
                    chi,
                    energy: mode_energy(s.kappa, s.delta, chi),
                }],
                label,
            })
            .collect()),
        NetworkScenario::Purcell(p) => Ok(p
            .states
            .enumerate()?
            .into_iter()
            .map(|(label, chi)| ScenarioState {
                modes: vec![StateMode {
                    label: label.clone(),
                    chi,
                    energy: mode_energy(p.cavity1_loss, p.delta_c, chi),
                }],
                label,
            })
            .collect()),
        NetworkScenario::Cascade(c) => {
            let mut out = Vec::with_capacity(4);
            for j in 0..2 {
                for k in 0..2 {
                    let label = format!("{j}{k}");
                    out.push(ScenarioState {
                        modes: vec![
                            StateMode {
                                label: format!("{label}/1"),
                                chi: c.cavity1.chi[j],
                                energy: c.cavity1.energy(j),
                            },
                            StateMode {
                                label: format!("{label}/2"),
                                chi: c.cavity2.chi[k],
                                energy: c.cavity2.energy(k),
                            },
                        ],
                        label,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// Rational function of ω with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    pub numerator: Poly,
    pub denominator: Poly,
}

impl TransferFunction {
    pub fn new(numerator: Poly, denominator: Poly) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::Singular("transfer function with zero denominator".into()));
        }
        Ok(Self {
            numerator,
            denominator,
        })
    }

    pub fn identity() -> Self {
        Self {
            numerator: Poly::one(),
            denominator: Poly::one(),
        }
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        self.eval_complex(Complex64::new(omega, 0.0))
    }

    pub fn eval_complex(&self, omega: Complex64) -> Complex64 {
        self.numerator.eval(omega) / self.denominator.eval(omega)
    }

    /// `1/H`, defined when the numerator is not identically zero.
    pub fn inverse(&self) -> Result<Self> {
        if self.numerator.is_zero() {
            return Err(Error::Singular("cannot invert a transfer with zero numerator".into()));
        }
        Ok(Self {
            numerator: self.denominator.clone(),
            denominator: self.numerator.clone(),
        })
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.denominator.roots()
    }

    /// Time-domain energies of the poles: a pole at `ω_r` is the mode `e^{−iω_r t}`.
    pub fn mode_energies(&self) -> Vec<Complex64> {
        self.poles().into_iter().map(|w| -I * w).collect()
    }

    /// All poles decay (`Im ω_r < 0`).
    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|w| w.im < 0.0)
    }
}

/// `H(ω) = κ / (iΔ + iχ − κ/2 + iω)`.
pub fn single_cavity_transfer(kappa: f64, delta: f64, chi: f64) -> Result<TransferFunction> {
    if !(kappa > 0.0) {
        return Err(Error::Unphysical(format!(
            "cavity linewidth must be positive, got {kappa}"
        )));
    }
    TransferFunction::new(
        Poly::constant(Complex64::new(kappa, 0.0)),
        Poly::linear(mode_energy(kappa, delta, chi), I),
    )
}

/// Series connection: pointwise product of the two responses.
pub fn cascade_transfer(first: &TransferFunction, second: &TransferFunction) -> TransferFunction {
    TransferFunction {
        numerator: &first.numerator * &second.numerator,
        denominator: &first.denominator * &second.denominator,
    }
}

/// `(iΔ + iχ_j − l/2 + iω)(iδ − κ/2 + iω) + |G|²` for state shift `chi`.
pub fn purcell_inverse_transfer(p: &Purcell, chi: f64) -> Poly {
    let e1 = mode_energy(p.cavity1_loss, p.delta_c, chi);
    let e2 = mode_energy(p.kappa, p.delta_f, 0.0);
    let g2 = Complex64::new(p.g.norm_sqr(), 0.0);
    &(&Poly::linear(e1, I) * &Poly::linear(e2, I)) + &Poly::constant(g2)
}

/// Full Purcell response from the measurement-cavity drive to the filter port,
/// `H_j(ω) = i√κ G* / P_j(ω)` with `P_j` from [`purcell_inverse_transfer`].
pub fn purcell_transfer(p: &Purcell, chi: f64) -> Result<TransferFunction> {
    if !(p.kappa > 0.0) {
        return Err(Error::Unphysical("filter linewidth must be positive".into()));
    }
    TransferFunction::new(
        Poly::constant(I * p.kappa.sqrt() * p.g.conj()),
        purcell_inverse_transfer(p, chi),
    )
}

/// Hybridized mode energies of a Purcell scenario, from the roots of
/// `∏_j P_j(ω)`, each tagged with the state index it belongs to.
pub fn purcell_hybridized_modes(p: &Purcell) -> Result<Vec<(usize, Complex64)>> {
    let states = p.states.enumerate()?;
    let factors: Vec<Poly> = states
        .iter()
        .map(|(_, chi)| purcell_inverse_transfer(p, *chi))
        .collect();
    let product = factors.iter().fold(Poly::one(), |acc, f| &acc * f);
    Ok(product
        .roots()
        .into_iter()
        .map(|w| {
            // pairing is for reporting only
            let owner = factors
                .iter()
                .enumerate()
                .map(|(j, f)| (j, f.eval(w).norm()))
                .fold((0, f64::MAX), |a, b| if b.1 < a.1 { b } else { a })
                .0;
            (owner, -I * w)
        })
        .collect())
}

/// Per-state response from the primary drive to the detected output.
pub fn state_transfers(scenario: &NetworkScenario) -> Result<Vec<TransferFunction>> {
    match scenario {
        NetworkScenario::SingleCavity(s) => s
            .states
            .enumerate()?
            .iter()
            .map(|(_, chi)| single_cavity_transfer(s.kappa, s.delta, *chi))
            .collect(),
        NetworkScenario::Purcell(p) => p
            .states
            .enumerate()?
            .iter()
            .map(|(_, chi)| purcell_transfer(p, *chi))
            .collect(),
        NetworkScenario::Cascade(c) => {
            let mut out = Vec::with_capacity(4);
            for j in 0..2 {
                for k in 0..2 {
                    out.push(cascade_transfer(
                        &c.cavity1.transfer(j)?,
                        &c.cavity2.transfer(k)?,
                    ));
                }
            }
            Ok(out)
        }
    }
}

/// The distinct factors whose inverses make up the corrected drive.
///
/// Single cavity: one factor per state. Purcell: one quadratic response per
/// state. Cascade: both shifts of both cavities (four single-cavity factors).
pub fn synthesis_factors(scenario: &NetworkScenario) -> Result<Vec<TransferFunction>> {
    match scenario {
        NetworkScenario::Cascade(c) => Ok(vec![
            c.cavity1.transfer(0)?,
            c.cavity1.transfer(1)?,
            c.cavity2.transfer(0)?,
            c.cavity2.transfer(1)?,
        ]),
        other => state_transfers(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_cavity_examples() {
        let h = single_cavity_transfer(2.0, 0.0, 0.0).unwrap();
        assert!((h.eval(0.0) - c(-2.0, 0.0)).norm() < 1e-15);
        let h = single_cavity_transfer(2.0, 0.3, 2.0).unwrap();
        assert!((h.eval(0.0) - c(2.0, 0.0) / c(-1.0, 2.3)).norm() < 1e-15);
        assert!(h.eval(1e6).norm() < 1e-5);
        assert!(single_cavity_transfer(0.0, 0.0, 0.0).is_err());
        assert!(single_cavity_transfer(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn single_cavity_is_stable() {
        let h = single_cavity_transfer(2.0, 0.3, -2.0).unwrap();
        let e = h.mode_energies();
        assert_eq!(e.len(), 1);
        assert!((e[0] - mode_energy(2.0, 0.3, -2.0)).norm() < 1e-12);
        assert!(h.is_stable());
    }

    #[test]
    fn cascade_identity_and_double_pole() {
        let h = single_cavity_transfer(2.0, 0.3, 1.0).unwrap();
        let same = cascade_transfer(&h, &TransferFunction::identity());
        for w in [-3.0, 0.0, 1.7] {
            assert!((same.eval(w) - h.eval(w)).norm() < 1e-14);
        }
        let sq = cascade_transfer(&h, &h);
        let poles = sq.poles();
        assert_eq!(poles.len(), 2);
        // a double root is only recovered to ~sqrt(eps)
        assert!((poles[0] - poles[1]).norm() < 1e-6);
        assert!((sq.eval(0.4) - h.eval(0.4) * h.eval(0.4)).norm() < 1e-13);
    }

    #[test]
    fn enumerate_sign_convention() {
        let s = StateSpec::qubits(&[2.0]).enumerate().unwrap();
        assert_eq!(s, vec![("0".to_string(), 2.0), ("1".to_string(), -2.0)]);
        let s = StateSpec::qubits(&[3.6, 2.0, 1.1]).enumerate().unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].0, "000");
        assert!((s[0].1 - 6.7).abs() < 1e-12);
        assert_eq!(s[7].0, "111");
        assert!((s[7].1 + 6.7).abs() < 1e-12);
        let s = StateSpec::qubits(&[1.5, 1.5]).enumerate().unwrap();
        assert_eq!(s[1].1, s[2].1);
        let flipped = StateSpec::Qubits {
            chis: vec![2.0],
            ground_signs: Some(vec![-1.0]),
        }
        .enumerate()
        .unwrap();
        assert_eq!(flipped[0].1, -2.0);
    }

    #[test]
    fn purcell_inverse_example() {
        let p = Purcell {
            g: c(20.0, 0.0),
            delta_c: 0.2,
            delta_f: 20.0,
            kappa: 2.0,
            states: StateSpec::qubits(&[2.0]),
            cavity1_loss: 0.0,
        };
        let inv = purcell_inverse_transfer(&p, 2.0);
        let want = c(0.0, 2.2) * c(-1.0, 20.0) + c(400.0, 0.0);
        assert!((inv.eval(c(0.0, 0.0)) - want).norm() < 1e-12);
    }

    #[test]
    fn purcell_decouples_without_coupling() {
        let p = Purcell {
            g: c(0.0, 0.0),
            delta_c: 0.2,
            delta_f: 20.0,
            kappa: 2.0,
            states: StateSpec::qubits(&[2.0]),
            cavity1_loss: 0.0,
        };
        let inv = purcell_inverse_transfer(&p, 2.0);
        let e1 = mode_energy(0.0, 0.2, 2.0);
        let e2 = mode_energy(2.0, 20.0, 0.0);
        for w in [-1.0, 0.0, 2.5] {
            let x = c(w, 0.0);
            assert!((inv.eval(x) - (e1 + I * x) * (e2 + I * x)).norm() < 1e-12);
        }
    }

    #[test]
    fn purcell_quartic_has_four_distinct_stable_modes() {
        let p = Purcell {
            g: c(20.0, 0.0),
            delta_c: 0.2,
            delta_f: 20.0,
            kappa: 2.0,
            states: StateSpec::qubits(&[2.0]),
            cavity1_loss: 0.0,
        };
        let modes = purcell_hybridized_modes(&p).unwrap();
        assert_eq!(modes.len(), 4);
        for (i, (_, a)) in modes.iter().enumerate() {
            assert!(a.re < 0.0, "mode {a} does not decay");
            for (_, b) in &modes[i + 1..] {
                assert!((a - b).norm() > 1e-3);
            }
        }
        assert_eq!(modes.iter().filter(|(s, _)| *s == 0).count(), 2);
        // each state's pair sums to its quadratic's trace
        for j in 0..2 {
            let chi = if j == 0 { 2.0 } else { -2.0 };
            let sum: Complex64 = modes.iter().filter(|(s, _)| *s == j).map(|(_, e)| e).sum();
            let want = mode_energy(0.0, 0.2, chi) + mode_energy(2.0, 20.0, 0.0);
            assert!((sum - want).norm() < 1e-9);
        }
    }

    #[test]
    fn cascade_enumerates_four_pairs() {
        let cav = CascadeCavity {
            kappa: 2.0,
            delta: 0.0,
            chi: [1.0, -1.0],
        };
        let sc = NetworkScenario::Cascade(Cascade {
            cavity1: cav,
            cavity2: cav,
        });
        let states = enumerate_states(&sc).unwrap();
        let labels: Vec<_> = states.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["00", "01", "10", "11"]);
        assert!(states.iter().all(|s| s.modes.len() == 2));
    }
}
