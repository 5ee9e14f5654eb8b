//! Randomized invariants shared by the property suite and the acceptance run.
//!
//! Every `check_*` function runs its invariant for `cases` generated inputs
//! and reports the first (shrunk) counterexample.

#![allow(dead_code)]

use std::f64::consts::PI;

use cdreadout::config::{
    DetectionSpec, Protocol, PulseShape, PulseSpec, RunConfig, SimulationSpec, Spacing,
    SweepAxis, SweepSpec, Units, Variant,
};
use cdreadout::dynamics::{
    integrate_single_cavity, predict_superadiabatic_field, Method,
};
use cdreadout::harness::{run_scenario, run_sweep, sweep_point, write_run};
use cdreadout::measurement::{
    distinguishability, homodyne_trace, optimize_homodyne_angle, optimize_synodyne_angle,
    NormalizationMode, OutputDecomposition, SynodyneObjective,
};
use cdreadout::network::{
    cascade_transfer, enumerate_states, single_cavity_transfer, state_transfers, Cascade,
    CascadeCavity, NetworkScenario, Purcell, SingleCavity, StateMode, StateSpec,
    TransferFunction,
};
use cdreadout::pipeline::{simulate, simulation_grid, synthesize, SynthesisKind};
use cdreadout::poly::Poly;
use cdreadout::signal::{
    check_derivatives_refined, fourier_transform, ComplexSignal, TimeGrid, TrialPulse,
};
use cdreadout::synthesis::{cd_coefficients, gamma_rational, GammaClosedForm};
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

pub const CASES: u32 = 100;

type Outcome = std::result::Result<(), TestCaseError>;

/// Fixed seed, so a failure reproduces on every run.
fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Outcome,
) -> Result<(), String> {
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn ok<T, E: std::fmt::Display>(r: std::result::Result<T, E>) -> std::result::Result<T, TestCaseError> {
    r.map_err(|e| TestCaseError::fail(e.to_string()))
}

fn unit_window(samples: usize) -> TimeGrid {
    TimeGrid::new(0.0, 1.0, samples).unwrap()
}

// ---- generators ---------------------------------------------------------

fn stable_energy() -> impl Strategy<Value = Complex64> {
    (-3.0..-0.3f64, -3.0..3.0f64).prop_map(|(re, im)| c(re, im))
}

fn single_cavity() -> impl Strategy<Value = NetworkScenario> {
    (
        0.5..5.0f64,
        -2.0..2.0f64,
        prop::collection::vec(0.2..3.0f64, 1..=2),
    )
        .prop_map(|(kappa, delta, chis)| {
            NetworkScenario::SingleCavity(SingleCavity {
                kappa,
                delta,
                states: StateSpec::qubits(&chis),
            })
        })
}

fn purcell() -> impl Strategy<Value = NetworkScenario> {
    (
        5.0..30.0f64,
        -1.0..1.0f64,
        -20.0..20.0f64,
        0.5..5.0f64,
        0.5..3.0f64,
    )
        .prop_map(|(g, delta_c, delta_f, kappa, chi)| {
            NetworkScenario::Purcell(Purcell {
                g: c(g, 0.0),
                delta_c,
                delta_f,
                kappa,
                states: StateSpec::qubits(&[chi]),
                cavity1_loss: 0.0,
            })
        })
}

fn cascade_cavity() -> impl Strategy<Value = CascadeCavity> {
    (0.5..5.0f64, -1.0..1.0f64, -3.0..3.0f64, 0.3..3.0f64, any::<bool>()).prop_map(
        |(kappa, delta, chi0, gap, up)| CascadeCavity {
            kappa,
            delta,
            chi: [chi0, if up { chi0 + gap } else { chi0 - gap }],
        },
    )
}

fn cascade() -> impl Strategy<Value = Cascade> {
    (cascade_cavity(), cascade_cavity()).prop_map(|(cavity1, cavity2)| Cascade { cavity1, cavity2 })
}

fn any_scenario() -> impl Strategy<Value = NetworkScenario> {
    prop_oneof![
        single_cavity(),
        purcell(),
        cascade().prop_map(NetworkScenario::Cascade),
    ]
}

fn correcting_kind(s: &NetworkScenario) -> SynthesisKind {
    match s {
        NetworkScenario::Cascade(_) => SynthesisKind::CascadeCompensated,
        _ => SynthesisKind::TimeDomain,
    }
}

/// Smallest sine power whose derivatives vanish up to the synthesis order.
fn smooth_enough(s: &NetworkScenario) -> u32 {
    let states = enumerate_states(s).unwrap().len() as u32;
    match s {
        NetworkScenario::SingleCavity(_) => states + 1,
        NetworkScenario::Purcell(_) => 2 * states + 1,
        NetworkScenario::Cascade(_) => 5,
    }
}

fn run_default(
    s: &NetworkScenario,
    kind: SynthesisKind,
    method: Method,
) -> std::result::Result<cdreadout::pipeline::RunOutcome, TestCaseError> {
    let pulse = ok(TrialPulse::sine_power(smooth_enough(s), 1.0, unit_window(401)))?;
    let grid = ok(simulation_grid(s, &pulse, 1.0, None))?;
    ok(simulate(s, &pulse, kind, &grid, method))
}

fn random_decomposition() -> impl Strategy<Value = OutputDecomposition> {
    (2usize..=5).prop_flat_map(|n| {
        prop::collection::vec(
            prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -8.0..8.0f64), 1..=3),
            n,
        )
        .prop_map(|states| {
            let grid = unit_window(201);
            let offsets = states
                .iter()
                .map(|terms| {
                    ComplexSignal::from_fn(grid, |t| {
                        let env = (PI * t).sin();
                        terms
                            .iter()
                            .map(|(re, im, w)| c(*re, *im) * Complex64::from_polar(env, w * t))
                            .sum()
                    })
                })
                .collect::<Vec<_>>();
            OutputDecomposition {
                labels: (0..offsets.len()).map(|i| i.to_string()).collect(),
                common: ComplexSignal::zeros(grid),
                offsets,
            }
        })
    })
}

fn pulse_spec() -> impl Strategy<Value = PulseSpec> {
    prop_oneof![
        (1u32..12).prop_map(|power| PulseShape::SinePower { power }),
        (3.0..10.0f64).prop_map(|sigma_divisor| PulseShape::Gaussian { sigma_divisor }),
    ]
    .prop_flat_map(|shape| {
        (Just(shape), 0.1..5.0f64, -1.0..1.0f64, 0.2..3.0f64, 2usize..2000).prop_map(
            |(shape, amplitude, t_start, duration, samples)| PulseSpec {
                shape,
                amplitude,
                t_start,
                duration,
                samples,
            },
        )
    })
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    let sweep = prop::option::of(
        prop::collection::vec(
            (prop_oneof![Just("kappa"), Just("delta")], 0.1..2.0f64, 2.0..9.0f64, 1usize..20, any::<bool>())
                .prop_map(|(path, start, stop, points, log)| SweepAxis {
                    path: path.to_string(),
                    start,
                    stop,
                    points,
                    spacing: if log { Spacing::Log } else { Spacing::Linear },
                }),
            1..=2,
        )
        .prop_map(|axes| SweepSpec { axes }),
    );
    (
        "[a-z][a-z0-9_]{0,11}",
        any::<bool>(),
        prop_oneof![single_cavity(), purcell()],
        pulse_spec(),
        prop::option::of(pulse_spec()),
        (prop::option::of(0.0..10.0f64), prop::option::of(1e-4..1e-2f64), any::<bool>()),
        (any::<bool>(), 0.1..10.0f64),
        (0usize..3, any::<bool>()),
        sweep,
    )
        .prop_map(
            |(name, linear, scenario, pulse, other, (t_end, dt, rk4), (power, cap), (proto, signed), sweep)| {
                let t_end = t_end.map(|t| pulse.t_start + pulse.duration + t);
                RunConfig {
                    output_dir: format!("out/{name}").into(),
                    name,
                    units: if linear { Units::MhzLinear } else { Units::RadPerUs },
                    synthesis: SynthesisKind::TimeDomain,
                    compare: other
                        .map(|p| Variant {
                            name: "uncorrected".into(),
                            synthesis: SynthesisKind::None,
                            pulse: Some(p),
                        })
                        .into_iter()
                        .collect(),
                    scenario,
                    pulse,
                    simulation: SimulationSpec {
                        t_end,
                        dt,
                        method: if rk4 { Method::Rk4 } else { Method::Exponential },
                    },
                    normalization: if power {
                        NormalizationMode::InputPower { cap }
                    } else {
                        NormalizationMode::MaxIntracavity { cap }
                    },
                    detection: DetectionSpec {
                        protocol: [Protocol::Homodyne, Protocol::Synodyne, Protocol::Both][proto],
                        objective: if signed {
                            SynodyneObjective::Signed
                        } else {
                            SynodyneObjective::Absolute
                        },
                    },
                    sweep,
                }
            },
        )
}

fn small_run_config() -> impl Strategy<Value = RunConfig> {
    (0.5..4.0f64, -1.0..1.0f64, 0.3..2.5f64, 3u32..7, any::<bool>()).prop_map(
        |(kappa, delta, chi, power, cavity_cap)| RunConfig {
            name: "prop".into(),
            units: Units::RadPerUs,
            output_dir: "out".into(),
            synthesis: SynthesisKind::TimeDomain,
            compare: vec![Variant {
                name: "uncorrected".into(),
                synthesis: SynthesisKind::None,
                pulse: None,
            }],
            scenario: NetworkScenario::SingleCavity(SingleCavity {
                kappa,
                delta,
                states: StateSpec::qubits(&[chi]),
            }),
            pulse: PulseSpec {
                shape: PulseShape::SinePower { power },
                amplitude: 1.0,
                t_start: 0.0,
                duration: 1.0,
                samples: 101,
            },
            simulation: SimulationSpec {
                t_end: Some(1.5),
                dt: None,
                method: Method::Exponential,
            },
            normalization: if cavity_cap {
                NormalizationMode::MaxIntracavity { cap: 1.0 }
            } else {
                NormalizationMode::InputPower { cap: 1.0 }
            },
            detection: DetectionSpec::default(),
            sweep: None,
        },
    )
}

// ---- signal-core --------------------------------------------------------

pub fn check_boundary_vanishing(cases: u32) -> Result<(), String> {
    check(cases, (1u32..=16, -1.0..1.0f64, 0.3..3.0f64), |(p, t0, len)| {
        let window = ok(TimeGrid::new(t0, t0 + len, 257))?;
        let pulse = ok(TrialPulse::sine_power(p, 1.0, window))?;
        for k in 0..p as usize {
            let r = ok(pulse.boundary_residual(k))?;
            prop_assert!(r < 1e-12, "order {k} of sin^{p}: boundary residual {r:e}");
        }
        Ok(())
    })
}

pub fn check_derivative_consistency(cases: u32) -> Result<(), String> {
    let pulse = prop_oneof![
        (1u32..=12).prop_map(|p| TrialPulse::sine_power(p, 1.0, unit_window(1001)).unwrap()),
        (3.0..10.0f64)
            .prop_map(|d| TrialPulse::centered_gaussian(d, 1.0, unit_window(1001)).unwrap()),
    ];
    check(cases, (pulse, 1usize..=8), |(pulse, order)| {
        let err = check_derivatives_refined(&pulse, order, 4);
        prop_assert!(err < 1e-5, "order {order}: relative error {err:e}");
        Ok(())
    })
}

pub fn check_fourier_convention(cases: u32) -> Result<(), String> {
    let input = (0usize..=4).prop_flat_map(|n| (n as u32 + 2..=n as u32 + 8, Just(n), 0.5..2.0f64));
    check(cases, input, |(p, n, len)| {
        let window = ok(TimeGrid::new(0.0, len, 101))?;
        let pulse = ok(TrialPulse::sine_power(p, 1.0, window))?;
        // pad so the spectrum is well sampled
        let grid = ok(TimeGrid::with_max_step(0.0, 8.0 * len, len / 400.0))?;
        let base = fourier_transform(&ok(pulse.sample(&grid, 0))?);
        let deriv = ok(pulse.sample(&grid, n))?.scaled(Complex64::i().powu(n as u32));
        let lhs = fourier_transform(&deriv);
        let rhs = base.map(|w| c(w.powi(n as i32), 0.0));
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in lhs.values.iter().zip(&rhs.values) {
            num += (a - b).norm_sqr();
            den += b.norm_sqr();
        }
        let rel = (num / den).sqrt();
        prop_assert!(rel < 1e-5, "n = {n}, p = {p}: relative L2 {rel:e}");
        Ok(())
    })
}

// ---- network-model ------------------------------------------------------

pub fn check_stability(cases: u32) -> Result<(), String> {
    check(cases, any_scenario(), |s| {
        for tf in ok(state_transfers(&s))? {
            for e in tf.mode_energies() {
                prop_assert!(-e.re > 0.0, "decay rate {} not positive", -e.re);
            }
            prop_assert!(tf.is_stable());
        }
        Ok(())
    })
}

pub fn check_state_bijection(cases: u32) -> Result<(), String> {
    let spec = (1usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.1..4.0f64, n),
            prop::option::of(prop::collection::vec(prop_oneof![Just(1.0), Just(-1.0)], n)),
        )
    });
    check(cases, spec, |(chis, ground_signs)| {
        let n = chis.len();
        let states = ok(StateSpec::Qubits { chis, ground_signs }.enumerate())?;
        prop_assert_eq!(states.len(), 1 << n);
        let mut labels: Vec<&String> = states.iter().map(|s| &s.0).collect();
        labels.sort();
        labels.dedup();
        prop_assert_eq!(labels.len(), 1 << n);
        for (b, (label, chi)) in states.iter().enumerate() {
            prop_assert_eq!(usize::from_str_radix(label, 2).unwrap(), b);
            let flipped = &states[(1 << n) - 1 - b];
            prop_assert!((chi + flipped.1).abs() < 1e-12, "{label}: {chi} vs {}", flipped.1);
        }
        Ok(())
    })
}

fn random_transfer() -> impl Strategy<Value = TransferFunction> {
    (
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..=3),
        prop::collection::vec((-3.0..-0.1f64, -3.0..3.0f64), 1..=3),
    )
        .prop_map(|(num, poles)| {
            let num = Poly::new(num.into_iter().map(|(a, b)| c(a, b)).collect());
            let den = Poly::from_roots(&poles.into_iter().map(|(a, b)| c(a, b)).collect::<Vec<_>>());
            TransferFunction::new(num, den).unwrap()
        })
}

pub fn check_cascade_product(cases: u32) -> Result<(), String> {
    check(cases, (random_transfer(), random_transfer(), -20.0..20.0f64), |(a, b, w)| {
        let prod = cascade_transfer(&a, &b).eval(w);
        let want = a.eval(w) * b.eval(w);
        prop_assert!((prod - want).norm() <= 1e-10 * want.norm().max(1e-300));
        Ok(())
    })
}

// ---- pulse-synthesis ----------------------------------------------------

pub fn check_dual_synthesis(cases: u32) -> Result<(), String> {
    check(cases, any_scenario(), |s| {
        let pulse = ok(TrialPulse::sine_power(smooth_enough(&s), 1.0, unit_window(401)))?;
        let grid = ok(simulation_grid(&s, &pulse, 1.0, None))?;
        let t = ok(synthesize(&s, &pulse, SynthesisKind::TimeDomain, &grid))?;
        let f = ok(synthesize(&s, &pulse, SynthesisKind::FrequencyDomain, &grid))?;
        let rel = ok(f.a.time_signal.relative_l2(&t.a.time_signal))?;
        prop_assert!(rel < 1e-4, "relative L2 {rel:e}");
        Ok(())
    })
}

pub fn check_symmetric_functions(cases: u32) -> Result<(), String> {
    check(cases, prop::collection::vec(stable_energy(), 1..=6), |energies| {
        let mut product = Poly::one();
        for e in &energies {
            product = &product * &Poly::linear(c(1.0, 0.0), e.inv());
        }
        let b = ok(cd_coefficients(&energies))?;
        prop_assert_eq!(b.coefficients().len(), product.coeffs().len());
        for (x, y) in b.coefficients().iter().zip(product.coeffs()) {
            prop_assert!((x - y).norm() <= 1e-12 * y.norm().max(1e-300), "{x} vs {y}");
        }
        Ok(())
    })
}

pub fn check_conjugation(cases: u32) -> Result<(), String> {
    check(cases, prop::collection::vec(stable_energy(), 1..=5), |energies| {
        let pulse = ok(TrialPulse::sine_power(energies.len() as u32 + 1, 1.0, unit_window(201)))?;
        let conj: Vec<Complex64> = energies.iter().map(|e| e.conj()).collect();
        let a = ok(ok(cd_coefficients(&energies))?.apply(&pulse, &pulse.window))?;
        let b = ok(ok(cd_coefficients(&conj))?.apply(&pulse, &pulse.window))?;
        let rel = ok(b.relative_l2(&a.conj()))?;
        prop_assert!(rel < 1e-12, "relative L2 {rel:e}");
        Ok(())
    })
}

pub fn check_gamma_forms(cases: u32) -> Result<(), String> {
    check(cases, (cascade(), -30.0..30.0f64), |(cas, w)| {
        let rational = ok(gamma_rational(&cas, w))?;
        let closed = ok(GammaClosedForm::new(&cas))?.ratio(w);
        prop_assert!(
            (rational - closed).norm() <= 1e-6 * rational.norm().max(1e-12),
            "{rational} vs {closed}"
        );
        Ok(())
    })
}

// ---- dynamics -----------------------------------------------------------

pub fn check_integrator_agreement(cases: u32) -> Result<(), String> {
    check(cases, any_scenario(), |s| {
        let kind = correcting_kind(&s);
        let e = run_default(&s, kind, Method::Exponential)?;
        let r = run_default(&s, kind, Method::Rk4)?;
        for (a, b) in e.trajectories.iter().zip(&r.trajectories) {
            let rel = ok(b.output.relative_l2(&a.output))?;
            prop_assert!(rel < 1e-6, "state {}: relative L2 {rel:e}", a.state_label);
        }
        Ok(())
    })
}

pub fn check_frequency_response(cases: u32) -> Result<(), String> {
    check(
        cases,
        (1.0..5.0f64, -3.0..3.0f64, -3.0..3.0f64, 3u32..8),
        |(kappa, delta, chi, p)| {
            let pulse = ok(TrialPulse::sine_power(p, 1.0, unit_window(201)))?;
            let t_end = 1.0 + 30.0 / kappa;
            let grid = ok(TimeGrid::with_max_step(0.0, t_end, 2e-3))?;
            let drive = ok(pulse.sample(&grid, 0))?;
            let mode = StateMode {
                label: "s".into(),
                chi,
                energy: cdreadout::network::mode_energy(kappa, delta, chi),
            };
            let out = ok(integrate_single_cavity(&drive, &mode))?.output;
            let h = ok(single_cavity_transfer(kappa, delta, chi))?;
            let fd = fourier_transform(&drive);
            let fo = fourier_transform(&out);
            let band = 60.0;
            let (mut num, mut den) = (0.0, 0.0);
            for ((w, d), o) in fd.omega.iter().zip(&fd.values).zip(&fo.values) {
                if w.abs() <= band {
                    let want = h.eval(*w) * d;
                    num += (o - want).norm_sqr();
                    den += want.norm_sqr();
                }
            }
            let rel = (num / den).sqrt();
            prop_assert!(rel < 1e-3, "relative L2 {rel:e}");
            Ok(())
        },
    )
}

pub fn check_vacuum_return(cases: u32) -> Result<(), String> {
    check(cases, any_scenario(), |s| {
        let run = run_default(&s, correcting_kind(&s), Method::Exponential)?;
        for r in &run.reports {
            prop_assert!(r.residual_ratio < 1e-4, "residual {:e}", r.residual_ratio);
        }
        Ok(())
    })
}

pub fn check_superadiabatic_prediction(cases: u32) -> Result<(), String> {
    let input = prop::collection::vec(stable_energy(), 1..=4)
        .prop_flat_map(|e| {
            let n = e.len();
            (Just(e), 0..n)
        });
    check(cases, input, |(energies, l)| {
        let pulse = ok(TrialPulse::sine_power(energies.len() as u32 + 1, 1.0, unit_window(201)))?;
        let rate = energies.iter().map(|e| e.norm()).fold(pulse.bandwidth(), f64::max);
        let grid = ok(TimeGrid::with_max_step(0.0, 1.0, 0.01 / rate))?;
        let drive = ok(ok(cd_coefficients(&energies))?.apply(&pulse, &grid))?;
        let mode = StateMode {
            label: "l".into(),
            chi: 0.0,
            energy: energies[l],
        };
        let kappa = -2.0 * energies[l].re;
        let field = ok(integrate_single_cavity(&drive, &mode))?;
        let predicted = ok(predict_superadiabatic_field(&pulse, &energies, l, kappa, &grid))?;
        let rel = ok(field.intracavity[0].relative_l2(&predicted))?;
        prop_assert!(rel < 1e-4, "relative L2 {rel:e}");
        Ok(())
    })
}

// ---- measurement --------------------------------------------------------

pub fn check_synodyne_dominance(cases: u32) -> Result<(), String> {
    check(cases, (random_decomposition(), any::<bool>()), |(d, signed)| {
        let objective = if signed {
            SynodyneObjective::Signed
        } else {
            SynodyneObjective::Absolute
        };
        let hom = ok(optimize_homodyne_angle(&d))?;
        let syn = ok(optimize_synodyne_angle(&d, objective))?;
        prop_assert!(syn.worst_pair_q >= hom.worst_pair_q);
        Ok(())
    })
}

/// `min_{i<j} ∫ |(D_i − D_j)·e_α|`.
fn worst_pair_at(d: &OutputDecomposition, alpha: f64) -> f64 {
    d.pair_differences()
        .iter()
        .map(|(_, _, diff)| {
            let v: Vec<f64> = diff
                .iter()
                .map(|z| (z.re * alpha.cos() + z.im * alpha.sin()).abs())
                .collect();
            cdreadout::signal::trapezoid(&v, d.grid().dt())
        })
        .fold(f64::INFINITY, f64::min)
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let diff = (a - b).rem_euclid(PI);
    diff.min(PI - diff)
}

/// Angles agree to the optimizer's 1e-6 rad refinement; where they do not,
/// the two angles must be a genuine tie of the objective.
pub fn check_linearity(cases: u32) -> Result<(), String> {
    check(cases, (random_decomposition(), 0.01..100.0f64), |(d, lambda)| {
        let hom = ok(optimize_homodyne_angle(&d))?;
        let syn = ok(optimize_synodyne_angle(&d, SynodyneObjective::Absolute))?;
        let scaled = d.scaled(lambda);
        let hom2 = ok(optimize_homodyne_angle(&scaled))?;
        let syn2 = ok(optimize_synodyne_angle(&scaled, SynodyneObjective::Absolute))?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-300);
        prop_assert!(rel(hom2.worst_pair_q, lambda * hom.worst_pair_q) < 1e-6);
        prop_assert!(rel(syn2.worst_pair_q, lambda * syn.worst_pair_q) < 1e-6);
        if angle_gap(hom.alpha, hom2.alpha) > 2e-6 {
            let (q1, q2) = (worst_pair_at(&d, hom.alpha), worst_pair_at(&d, hom2.alpha));
            prop_assert!(rel(q2, q1) < 1e-6, "alpha {} vs {}", hom.alpha, hom2.alpha);
        }
        let pairs = d.pair_differences();
        for (k, (a, b)) in syn.alpha.iter().zip(&syn2.alpha).enumerate() {
            if angle_gap(*a, *b) > 1e-9 {
                let sep = |alpha: f64| {
                    pairs
                        .iter()
                        .map(|(_, _, x)| (x[k].re * alpha.cos() + x[k].im * alpha.sin()).abs())
                        .fold(f64::INFINITY, f64::min)
                };
                prop_assert!(rel(sep(*b), sep(*a)) < 1e-9, "sample {k}: {a} vs {b}");
            }
        }
        Ok(())
    })
}

pub fn check_decomposition_exactness(cases: u32) -> Result<(), String> {
    check(cases, any_scenario(), |s| {
        let run = run_default(&s, correcting_kind(&s), Method::Exponential)?;
        for (j, t) in run.trajectories.iter().enumerate() {
            let z = ok(run.decomposition.reconstruct(j))?;
            for (a, b) in z.samples().iter().zip(t.output.samples()) {
                prop_assert!((a - b).norm() <= 4.0 * f64::EPSILON * b.norm().max(run.decomposition.common.max_abs()));
            }
        }
        Ok(())
    })
}

pub fn check_pi_periodicity(cases: u32) -> Result<(), String> {
    check(cases, (random_decomposition(), 0.0..2.0 * PI), |(d, alpha)| {
        let dt = d.grid().dt();
        let q = |a: f64| {
            let x = homodyne_trace(&d.offsets[0], a);
            let y = homodyne_trace(&d.offsets[1], a);
            distinguishability(&x, &y, dt).unwrap()
        };
        let (q0, q1) = (q(alpha), q(alpha + PI));
        prop_assert!((q0 - q1).abs() <= 1e-12 * q0.max(1e-300), "{q0} vs {q1}");
        Ok(())
    })
}

// ---- sweep-harness ------------------------------------------------------

pub fn check_determinism(cases: u32) -> Result<(), String> {
    check(cases, small_run_config(), |config| {
        let dirs = [ok(tempfile::tempdir())?, ok(tempfile::tempdir())?];
        let mut files = Vec::new();
        for d in &dirs {
            let artifacts = ok(run_scenario(&config))?;
            files.push(ok(write_run(&artifacts, d.path()))?);
        }
        for (a, b) in files[0].iter().zip(&files[1]) {
            if a.extension().is_some_and(|e| e == "csv") {
                prop_assert_eq!(ok(std::fs::read(a))?, ok(std::fs::read(b))?);
            }
        }
        Ok(())
    })
}

pub fn check_sweep_independence(cases: u32) -> Result<(), String> {
    check(cases, (small_run_config(), 1usize..=2, 1usize..=3), |(mut config, nk, nd)| {
        config.sweep = Some(SweepSpec {
            axes: vec![
                SweepAxis {
                    path: "kappa".into(),
                    start: 0.5,
                    stop: 3.0,
                    points: nk,
                    spacing: Spacing::Log,
                },
                SweepAxis {
                    path: "delta".into(),
                    start: -1.0,
                    stop: 1.0,
                    points: nd,
                    spacing: Spacing::Linear,
                },
            ],
        });
        let result = ok(run_sweep(&config, Some(2)))?;
        prop_assert_eq!(result.points.len(), nk * nd);
        for p in &result.points {
            let alone = sweep_point(&config, &p.index, &p.values);
            prop_assert_eq!(&alone, p);
        }
        Ok(())
    })
}

pub fn check_config_round_trip(cases: u32) -> Result<(), String> {
    check(cases, run_config(), |config| {
        let text = ok(config.to_toml_string())?;
        let parsed: RunConfig = ok(toml::from_str(&text))?;
        prop_assert_eq!(&parsed, &config);
        prop_assert_eq!(ok(parsed.to_toml_string())?, text);
        Ok(())
    })
}

/// Every invariant, in module order.
pub const ALL: &[(&str, fn(u32) -> Result<(), String>)] = &[
    ("boundary vanishing", check_boundary_vanishing),
    ("derivative consistency", check_derivative_consistency),
    ("fourier convention", check_fourier_convention),
    ("mode stability", check_stability),
    ("state bijection and odd shifts", check_state_bijection),
    ("cascade transfer product", check_cascade_product),
    ("dual-synthesis equivalence", check_dual_synthesis),
    ("symmetric-function identity", check_symmetric_functions),
    ("conjugation", check_conjugation),
    ("compensation closed form", check_gamma_forms),
    ("exponential vs rk4", check_integrator_agreement),
    ("time vs frequency output", check_frequency_response),
    ("vacuum return", check_vacuum_return),
    ("superadiabatic prediction", check_superadiabatic_prediction),
    ("synodyne dominance", check_synodyne_dominance),
    ("linearity", check_linearity),
    ("decomposition exactness", check_decomposition_exactness),
    ("pi periodicity", check_pi_periodicity),
    ("determinism", check_determinism),
    ("sweep independence", check_sweep_independence),
    ("config round trip", check_config_round_trip),
];
