//! Microwave-driven two-ion entangling gates in a static magnetic gradient.
//!
//! Two engines live here: the pulsed AXY-n dynamical-decoupling gate (closure search,
//! phase maps, crosstalk-free pulse condition, full noisy simulation) and the continuous
//! bichromatic gate with phase-modulated carrier decoupling.

use crate::consts::{AMU, E_CHARGE, EPS0, HBAR, KB, TWO_PI};
use crate::dynamics::{
    child_seed, evolve_lindblad, magnus_sz_propagator, ou_trajectory, propagate_state, Coefficient, LindbladModel,
    ModulationFunction, OUProcess, OUTrajectory, StepControl, TimeDependentHamiltonian,
};
use crate::error::{guard, invalid, Error, Result};
use crate::hilbert::{ladder_ops, sigma_phi, sigma_plus, sigma_x, sigma_y, sigma_z, tensor, thermal_state};
use crate::special::{bessel_j0, bessel_j1, bisect};
use crate::{DensityMatrix, Operator, StateVector, C64};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Electron gyromagnetic ratio, (2π)·2.8 MHz/G, in rad s⁻¹ T⁻¹.
pub const GAMMA_E: f64 = TWO_PI * 2.8e10;
pub const YB171_MASS: f64 = 171.0 * AMU;

/// Two ions in a linear trap with a static axial magnetic gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonPairConfig {
    /// Centre-of-mass frequency ν₁ (rad/s).
    pub nu1: f64,
    /// Gradient g_B (T/m).
    pub g_b: f64,
    pub mass: f64,
    /// Bath temperature (K).
    pub temperature: f64,
    /// Γ_c N̄_c of the centre-of-mass mode (quanta/s).
    pub heating_com: f64,
    /// Γ_b N̄_b of the breathing mode (quanta/s).
    pub heating_breathing: f64,
}

impl IonPairConfig {
    pub fn new(nu1: f64, g_b: f64) -> Self {
        Self { nu1, g_b, mass: YB171_MASS, temperature: 50.0, heating_com: 0.0, heating_breathing: 0.0 }
    }

    /// Configuration whose centre-of-mass LD parameter equals `eta1`.
    pub fn from_eta(eta1: f64, nu1: f64) -> Self {
        let unit = Self::new(nu1, 1.0);
        Self::new(nu1, eta1 / unit.eta(0))
    }

    pub fn nu2(&self) -> f64 {
        3f64.sqrt() * self.nu1
    }

    pub fn nu(&self, m: usize) -> f64 {
        if m == 0 {
            self.nu1
        } else {
            self.nu2()
        }
    }

    /// η_m = γ_e g_B/(8ν_m)·√(ħ/Mν_m).
    pub fn eta(&self, m: usize) -> f64 {
        let nu = self.nu(m);
        GAMMA_E * self.g_b / (8.0 * nu) * (HBAR / (self.mass * nu)).sqrt()
    }

    /// η_jm for ion j and mode m: the breathing mode couples with opposite signs.
    pub fn etas(&self) -> DMatrix<f64> {
        let (e1, e2) = (self.eta(0), self.eta(1));
        DMatrix::from_row_slice(2, 2, &[e1, -e2, e1, e2])
    }

    /// Equilibrium ion separation (2e²/4πε₀Mν₁²)^{1/3}.
    pub fn separation(&self) -> f64 {
        (2.0 * E_CHARGE * E_CHARGE / (4.0 * PI * EPS0 * self.mass * self.nu1 * self.nu1)).cbrt()
    }

    /// Qubit splitting difference δ₂ = ω₂ − ω₁ = γ_e g_B Δz/2; δ₁ = −δ₂.
    pub fn delta2(&self) -> f64 {
        GAMMA_E * self.g_b * self.separation() / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu1 > 0.0) || !(self.mass > 0.0) || !(self.g_b >= 0.0) || !(self.temperature > 0.0) {
            return Err(invalid("ion pair needs nu1 > 0, mass > 0, g_B >= 0, T > 0"));
        }
        if self.heating_com < 0.0 || self.heating_breathing < 0.0 {
            return Err(invalid("heating rates must be >= 0"));
        }
        Ok(())
    }
}

/// Reference point of an anomalous-heating measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatingReference {
    /// Heating rate (quanta/s).
    pub ndot: f64,
    /// Trap frequency (rad/s).
    pub nu: f64,
    /// Ion-electrode distance (m).
    pub distance: f64,
    /// Electrode temperature (K).
    pub temperature: f64,
}

impl HeatingReference {
    /// 41 quanta/s at (2π)·427 kHz, 310 µm, 300 K (centre-of-mass mode).
    pub fn com_reference() -> Self {
        Self { ndot: 41.0, nu: TWO_PI * 427e3, distance: 310e-6, temperature: 300.0 }
    }

    /// 7 quanta/s at (2π)·459 kHz for the breathing mode of the same trap.
    pub fn breathing_reference() -> Self {
        Self { ndot: 7.0, nu: TWO_PI * 459e3, distance: 310e-6, temperature: 300.0 }
    }
}

/// ṅ = ṅ_ref (ν_ref/ν)² (d_ref/d)⁴ (T_ref/T)^{−2.13}.
pub fn heating_scaling(r: &HeatingReference, nu: f64, distance: f64, temperature: f64) -> Result<f64> {
    if [nu, distance, temperature, r.nu, r.distance, r.temperature].iter().any(|&x| !(x > 0.0)) {
        return Err(invalid("heating scaling needs positive frequencies, distances and temperatures"));
    }
    Ok(r.ndot * (r.nu / nu).powi(2) * (r.distance / distance).powi(4) * (r.temperature / temperature).powf(-2.13))
}

/// Bose occupation N̄ = 1/(e^{ħν/k_BT} − 1).
pub fn mean_occupation(nu: f64, temperature: f64) -> f64 {
    1.0 / ((HBAR * nu / (KB * temperature)).exp_m1())
}

/// Rabi frequency for which an off-resonant π pulse at detuning δ is a pure dephasing:
/// Ω = δ/√(4k² − 1).
pub fn crosstalk_rabi(delta: f64, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(invalid("crosstalk order k must be >= 1"));
    }
    let k = k as f64;
    Ok(delta / (4.0 * k * k - 1.0).sqrt())
}

const X_PHASES: [f64; 5] = [PI / 6.0, PI / 2.0, 0.0, PI / 2.0, PI / 6.0];

/// AXY-n sequence: blocks of five π pulses at τ_a, τ_b, τ/2, τ−τ_b, τ−τ_a, alternating
/// X and Y phase sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AXYSequence {
    pub tau: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub n_blocks: usize,
    /// Common phase offset ζ of the X block.
    pub zeta: f64,
    /// π-pulse length; 0 means instantaneous.
    pub t_pi: f64,
    /// Delay of the second ion's pulses relative to the first.
    pub stagger: f64,
}

impl AXYSequence {
    pub fn new(tau: f64, tau_a: f64, tau_b: f64, n_blocks: usize) -> Result<Self> {
        let s = Self { tau, tau_a, tau_b, n_blocks, zeta: 0.0, t_pi: 0.0, stagger: 0.0 };
        s.validate()?;
        Ok(s)
    }

    /// Sequence from rescaled timings τ̃ = t/τ with ν₁τ = 2πr.
    pub fn from_rescaled(nu1: f64, r: u32, ta: f64, tb: f64, n_blocks: usize) -> Result<Self> {
        let tau = TWO_PI * r as f64 / nu1;
        Self::new(tau, ta * tau, tb * tau, n_blocks)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !(self.tau_a > 0.0) || !(self.tau_a < self.tau_b) || !(self.tau_b < self.tau / 2.0) {
            return Err(invalid(format!(
                "AXY timings need 0 < tau_a < tau_b < tau/2, got tau={}, tau_a={}, tau_b={}",
                self.tau, self.tau_a, self.tau_b
            )));
        }
        if self.n_blocks == 0 || self.n_blocks % 2 == 1 {
            return Err(invalid(format!("AXY needs an even block count, got {}", self.n_blocks)));
        }
        if self.t_pi < 0.0 || self.stagger < 0.0 {
            return Err(invalid("pulse length and stagger must be >= 0"));
        }
        if self.t_pi > 0.0 && (self.tau_a - self.t_pi / 2.0 <= 0.0 || self.tau_b - self.tau_a <= self.t_pi + self.stagger) {
            return Err(invalid("finite pulses overlap; shorten t_pi or widen the timings"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.tau * self.n_blocks as f64
    }

    /// Nominal pulse centres of the first ion.
    pub fn pulse_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(5 * self.n_blocks);
        for b in 0..self.n_blocks {
            let t0 = b as f64 * self.tau;
            for x in [self.tau_a, self.tau_b, self.tau / 2.0, self.tau - self.tau_b, self.tau - self.tau_a] {
                out.push(t0 + x);
            }
        }
        out
    }

    /// Pulse phases, X block on even blocks and Y block (X + π/2) on odd ones.
    pub fn pulse_phases(&self) -> Vec<f64> {
        (0..self.n_blocks)
            .flat_map(|b| {
                let off = self.zeta + if b % 2 == 1 { PI / 2.0 } else { 0.0 };
                X_PHASES.iter().map(move |p| p + off)
            })
            .collect()
    }

    /// Pulse centres of ion `j` (0 or 1); ion 1 is delayed by the stagger.
    pub fn pulse_times_for(&self, j: usize) -> Vec<f64> {
        let d = if j == 0 { 0.0 } else { self.stagger };
        self.pulse_times().into_iter().map(|t| t + d).collect()
    }

    /// Instantaneous-pulse modulation ±1 seen by ion `j`.
    pub fn modulation(&self, j: usize) -> ModulationFunction<f64> {
        ModulationFunction::sign_train(&self.pulse_times_for(j)).expect("sorted pulse times")
    }
}

/// G(t) = ν∫₀ᵗ f e^{−iνt'} dt' of the first ion's modulation.
pub fn g_function(seq: &AXYSequence, nu: f64, t: f64) -> Result<C64> {
    if t > seq.duration() * (1.0 + 1e-12) {
        return Err(invalid("G is defined up to the end of the sequence"));
    }
    let out = magnus_sz_propagator(&[seq.modulation(0)], &DMatrix::from_element(1, 1, 1.0), &[nu], t)?;
    Ok(out.g[(0, 0)])
}

/// Two-qubit phase φ(t) accumulated with ion 1 following `seq1` and ion 2 following `seq2`.
pub fn gate_phase(seq1: &AXYSequence, seq2: &AXYSequence, cfg: &IonPairConfig, t: f64) -> Result<f64> {
    if (seq1.tau - seq2.tau).abs() > 1e-12 * seq1.tau {
        return Err(invalid("both sequences must share the same tau grid"));
    }
    let f = [seq1.modulation(0), seq2.modulation(1)];
    Ok(magnus_sz_propagator(&f, &cfg.etas(), &[cfg.nu1, cfg.nu2()], t)?.phi())
}

/// Normalized phase φ̃ = φ/η₁² at t = n_Bτ; depends only on the rescaled timings and r.
pub fn normalized_phase(ta: f64, tb: f64, n_blocks: usize, r: u32) -> Result<f64> {
    normalized_phase_at(TWO_PI, ta, tb, n_blocks, r)
}

/// φ̃ evaluated at an explicit ν₁; used to check the frequency independence.
pub fn normalized_phase_at(nu1: f64, ta: f64, tb: f64, n_blocks: usize, r: u32) -> Result<f64> {
    let seq = AXYSequence::from_rescaled(nu1, r, ta, tb, n_blocks)?;
    let e2 = 27f64.powf(-0.25);
    let etas = DMatrix::from_row_slice(2, 2, &[1.0, -e2, 1.0, e2]);
    let f = [seq.modulation(0), seq.modulation(0)];
    Ok(magnus_sz_propagator(&f, &etas, &[nu1, 3f64.sqrt() * nu1], seq.duration())?.phi())
}

/// Signed closure residual of the breathing mode, κ∫₀^{1/2} f(x) sin κ(1/2 − x) dx with κ = ν₂τ.
///
/// The antisymmetry of f about τ/2 makes the single-block integral purely this real number
/// times a fixed phase, so closure curves are its zero set.
pub fn breathing_residual(ta: f64, tb: f64, r: u32) -> f64 {
    let k = TWO_PI * 3f64.sqrt() * r as f64;
    let seg = |u: f64, v: f64| (k * (0.5 - v)).cos() - (k * (0.5 - u)).cos();
    seg(0.0, ta) - seg(ta, tb) + seg(tb, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosurePoint {
    /// τ_a/τ
    pub tau_a: f64,
    /// τ_b/τ
    pub tau_b: f64,
    pub phi_tilde: f64,
    /// max_j |G_j2(n_Bτ)|
    pub residual: f64,
}

fn closure_point(ta: f64, tb: f64, n_blocks: usize, r: u32) -> Result<ClosurePoint> {
    let seq = AXYSequence::from_rescaled(TWO_PI, r, ta, tb, n_blocks)?;
    let g = g_function(&seq, 3f64.sqrt() * TWO_PI, seq.duration())?;
    Ok(ClosurePoint { tau_a: ta, tau_b: tb, phi_tilde: normalized_phase(ta, tb, n_blocks, r)?, residual: g.norm() })
}

/// Closure curves of the breathing mode on a `grid`×`grid` map of (τ_a/τ, τ_b/τ).
///
/// Every grid edge whose residual changes sign is bisected onto the curve. Results are
/// sorted by |φ̃ − target|.
pub fn search_closure(r: u32, n_blocks: usize, target_phi_tilde: f64, grid: usize) -> Result<Vec<ClosurePoint>> {
    if r == 0 || grid < 4 {
        return Err(invalid("closure search needs r >= 1 and grid >= 4"));
    }
    if n_blocks == 0 || n_blocks % 2 == 1 {
        return Err(invalid("closure search needs an even block count"));
    }
    let h = 0.5 / grid as f64;
    let coord = |k: usize| (k as f64 + 0.5) * h;
    let vals: Vec<Vec<f64>> =
        (0..grid).map(|i| (0..grid).map(|j| breathing_residual(coord(i), coord(j), r)).collect()).collect();
    let mut edges = Vec::new();
    for i in 0..grid {
        for j in 0..grid {
            if coord(i) >= coord(j) {
                continue;
            }
            if j + 1 < grid && vals[i][j].signum() != vals[i][j + 1].signum() {
                edges.push((coord(i), coord(j), coord(i), coord(j + 1)));
            }
            if i + 1 < grid && coord(i + 1) < coord(j) && vals[i][j].signum() != vals[i + 1][j].signum() {
                edges.push((coord(i), coord(j), coord(i + 1), coord(j)));
            }
        }
    }
    let mut out: Vec<ClosurePoint> = edges
        .par_iter()
        .filter_map(|&(a0, b0, a1, b1)| {
            let s = bisect(|u| breathing_residual(a0 + u * (a1 - a0), b0 + u * (b1 - b0), r), 0.0, 1.0, 1e-15)?;
            closure_point(a0 + s * (a1 - a0), b0 + s * (b1 - b0), n_blocks, r).ok()
        })
        .collect();
    if out.is_empty() {
        return Err(guard(format!("no closure found for r={r}, n_B={n_blocks}")));
    }
    out.sort_by(|x, y| (x.phi_tilde - target_phi_tilde).abs().partial_cmp(&(y.phi_tilde - target_phi_tilde).abs()).unwrap());
    Ok(out)
}

/// Newton refinement of (closure, φ̃ = target) from a closure-curve seed.
pub fn solve_gate_timings(r: u32, n_blocks: usize, target_phi_tilde: f64, seed: &ClosurePoint) -> Result<ClosurePoint> {
    let resid = |a: f64, b: f64| -> Result<[f64; 2]> {
        Ok([breathing_residual(a, b, r), normalized_phase(a, b, n_blocks, r)? / target_phi_tilde - 1.0])
    };
    let (mut a, mut b) = (seed.tau_a, seed.tau_b);
    for _ in 0..60 {
        let f0 = resid(a, b)?;
        if f0[0].abs() < 1e-14 && f0[1].abs() < 1e-13 {
            break;
        }
        let h = 1e-7;
        let fa = resid(a + h, b)?;
        let fb = resid(a, b + h)?;
        let j = [[(fa[0] - f0[0]) / h, (fb[0] - f0[0]) / h], [(fa[1] - f0[1]) / h, (fb[1] - f0[1]) / h]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det.abs() < 1e-300 {
            return Err(guard("singular Jacobian while refining gate timings"));
        }
        let da = (f0[0] * j[1][1] - f0[1] * j[0][1]) / det;
        let db = (f0[1] * j[0][0] - f0[0] * j[1][0]) / det;
        let step = (da.abs().max(db.abs()) / 0.01).max(1.0);
        a -= da / step;
        b -= db / step;
        if !(0.0 < a && a < b && b < 0.5) {
            return Err(guard("gate timing refinement left the admissible region"));
        }
    }
    let p = closure_point(a, b, n_blocks, r)?;
    let rel = (p.phi_tilde / target_phi_tilde - 1.0).abs();
    if p.residual > 1e-9 || rel > 1e-9 {
        return Err(guard(format!("gate timing refinement did not converge (residual {}, phase error {rel})", p.residual)));
    }
    Ok(p)
}

/// Searches the closure map and refines candidates until one hits the target phase.
pub fn design_gate(r: u32, n_blocks: usize, target_phi_tilde: f64, grid: usize) -> Result<ClosurePoint> {
    let cands = search_closure(r, n_blocks, target_phi_tilde, grid)?;
    for c in cands.iter().take(20) {
        if let Ok(p) = solve_gate_timings(r, n_blocks, target_phi_tilde, c) {
            return Ok(p);
        }
    }
    Err(guard(format!("no closure point reaches phi_tilde = {target_phi_tilde} at r={r}, n_B={n_blocks}")))
}

/// Propagator of a top-hat π pulse on ion 1 with the same field acting on ion 2 at detuning δ,
/// H = (Ω/2)σ₁^φ + (Ω/2)(σ₂⁺e^{−iφ}e^{iδt} + h.c.), integrated over t_π = π/Ω.
pub fn crosstalk_pulse_propagator(omega: f64, delta: f64, phi: f64, ctl: StepControl<f64>) -> Result<Operator> {
    let dims = [2, 2];
    let h = TimeDependentHamiltonian::new(&dims)
        .add_term(Coefficient::real(omega / 2.0), &sigma_phi::<f64>(phi).embed(0, &dims)?)?
        .add_term_hc(
            Coefficient::func(move |t: f64| C64::from_polar(omega / 2.0, delta * t - phi)),
            &sigma_plus::<f64>().embed(1, &dims)?,
        )?;
    crate::dynamics::propagator(&h, 0.0, PI / omega, ctl)
}

/// e^{−i(Ω/2)σ₁^φ t_π}·e^{i(δ/2)σ₂^z t_π}.
pub fn crosstalk_target(omega: f64, delta: f64, phi: f64) -> Result<Operator> {
    let tp = PI / omega;
    let u1 = sigma_phi::<f64>(phi).propagator(omega / 2.0 * tp)?;
    let u2 = sigma_z::<f64>().propagator(-delta / 2.0 * tp)?;
    tensor(&[u1, u2])
}

/// Phase-insensitive overlap |Tr(A†B)|/d between two unitaries.
pub fn gate_overlap(a: &Operator, b: &Operator) -> f64 {
    let d = a.dim() as f64;
    (a.adjoint().mul(b).trace().norm() / d).powi(2)
}

/// Product of one staggered XY block (ten pulses per ion) with exact crosstalk propagators,
/// and the same product with ideal crosstalk-free pulses.
pub fn xy_block_crosstalk(delta2: f64, k: u32, ctl: StepControl<f64>) -> Result<(Operator, Operator)> {
    let omega = crosstalk_rabi(delta2.abs(), k)?;
    let mut actual = Operator::identity(&[2, 2]);
    let mut ideal = Operator::identity(&[2, 2]);
    let swap = |op: &Operator| -> Operator {
        // exchange the two qubits
        let p = DMatrix::from_fn(4, 4, |r, c| {
            let (r1, r2, c1, c2) = (r / 2, r % 2, c / 2, c % 2);
            if r1 == c2 && r2 == c1 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let p = Operator::new(vec![2, 2], p).unwrap();
        p.mul(op).mul(&p)
    };
    for block in 0..2 {
        let off = if block == 1 { PI / 2.0 } else { 0.0 };
        for p in X_PHASES {
            let phi = p + off;
            // ion 1 pulse, crosstalk on ion 2 at +δ₂
            let u1 = crosstalk_pulse_propagator(omega, delta2, phi, ctl)?;
            // ion 2 pulse, crosstalk on ion 1 at δ₁ = −δ₂
            let u2 = swap(&crosstalk_pulse_propagator(omega, -delta2, phi, ctl)?);
            actual = u2.mul(&u1).mul(&actual);
            let i1 = tensor(&[sigma_phi::<f64>(phi).propagator(PI / 2.0)?, Operator::identity(&[2])])?;
            let i2 = tensor(&[Operator::identity(&[2]), sigma_phi::<f64>(phi).propagator(PI / 2.0)?])?;
            ideal = i2.mul(&i1).mul(&ideal);
        }
    }
    Ok((actual, ideal))
}

/// Pulse model of a gate simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseShape {
    /// Exact π rotations applied as kicks at the nominal times.
    Instantaneous,
    /// Top-hat pulses of Rabi frequency Ω centred on the nominal times, with crosstalk on
    /// the other ion; ion 2 is delayed by the sequence stagger.
    TopHat { rabi: f64 },
}

/// Error budget of a pulsed-gate run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulsedNoise {
    /// Relative Rabi-frequency offset.
    pub rabi_error: f64,
    /// Relative trap-frequency offset.
    pub trap_error: f64,
    /// Static qubit frequency shift (rad/s).
    pub qubit_shift: f64,
    /// OU magnetic noise per ion as (τ_B, T₂) in seconds.
    pub field_noise: Option<(f64, f64)>,
    pub heating: bool,
    pub initial_nbar: f64,
    pub realizations: usize,
    pub seed: u64,
}

impl PulsedNoise {
    pub fn noiseless(initial_nbar: f64) -> Self {
        Self {
            rabi_error: 0.0,
            trap_error: 0.0,
            qubit_shift: 0.0,
            field_noise: None,
            heating: false,
            initial_nbar,
            realizations: 1,
            seed: 0,
        }
    }

    /// Error set of the pulsed-gate benchmark: 1 % Rabi, 0.1 % trap, (2π)·20 kHz shift,
    /// OU field noise with τ_B = 50 µs and T₂ = 3 ms, heating, thermal n̄ = 0.2.
    pub fn full(realizations: usize, seed: u64) -> Self {
        Self {
            rabi_error: 0.01,
            trap_error: 0.001,
            qubit_shift: TWO_PI * 20e3,
            field_noise: Some((50e-6, 3e-3)),
            heating: true,
            initial_nbar: 0.2,
            realizations,
            seed,
        }
    }

    fn is_stochastic(&self) -> bool {
        self.field_noise.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub infidelities: Vec<f64>,
    pub mean_infidelity: f64,
    /// Standard error of the mean over realizations (0 for one realization).
    pub std_error: f64,
    pub target_phase: f64,
}

impl GateReport {
    fn from_samples(infidelities: Vec<f64>, target_phase: f64) -> Self {
        let n = infidelities.len() as f64;
        let mean = infidelities.iter().sum::<f64>() / n;
        let var = if n > 1.0 { infidelities.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        Self { infidelities, mean_infidelity: mean, std_error: (var / n).sqrt(), target_phase }
    }
}

/// Everything needed to simulate one pulsed gate.
#[derive(Clone, Debug)]
pub struct PulsedGateSetup {
    pub cfg: IonPairConfig,
    pub seq: AXYSequence,
    pub pulses: PulseShape,
    pub noise: PulsedNoise,
    /// Fock truncation of (centre-of-mass, breathing).
    pub fock: [usize; 2],
    /// Two-qubit input state.
    pub initial: StateVector,
    /// φ of the ideal gate exp(iφσ₁ᶻσ₂ᶻ).
    pub target_phase: f64,
    pub ctl: StepControl<f64>,
}

/// Fock components of the thermal input lighter than this are dropped; every component
/// reaches nearly unit fidelity, so the cut only shifts the normalization.
const THERMAL_WEIGHT_CUTOFF: f64 = 1e-7;

fn ideal_gate(phi: f64) -> Operator {
    let zz = tensor(&[sigma_z::<f64>(), sigma_z()]).unwrap();
    zz.propagator(-phi).unwrap()
}

struct PulseWindow {
    start: f64,
    end: f64,
    phase: f64,
}

/// Coefficient of field `field` acting on ion `ion`: Ω/2·e^{−iφ}e^{iδt} inside the windows.
fn window_coefficient(windows: Arc<Vec<PulseWindow>>, amp: f64, detuning: f64) -> Coefficient<f64> {
    Coefficient::func(move |t: f64| {
        let k = windows.partition_point(|w| w.end <= t);
        match windows.get(k) {
            Some(w) if t >= w.start => C64::from_polar(amp, detuning * t - w.phase),
            _ => C64::new(0.0, 0.0),
        }
    })
}

impl PulsedGateSetup {
    fn dims(&self) -> Vec<usize> {
        vec![2, 2, self.fock[0], self.fock[1]]
    }

    fn hamiltonian(&self, field: [Option<&OUTrajectory<f64>>; 2]) -> Result<TimeDependentHamiltonian<f64>> {
        let dims = self.dims();
        let etas = self.cfg.etas();
        let n = &self.noise;
        let mut h = TimeDependentHamiltonian::new(&dims);
        let mut breaks = Vec::new();
        for j in 0..2 {
            let sz = sigma_z::<f64>().embed(j, &dims)?;
            for m in 0..2 {
                let (a, _) = ladder_ops::<f64>(self.fock[m])?;
                let op = sz.mul(&a.embed(2 + m, &dims)?);
                let nu = self.cfg.nu(m) * (1.0 + n.trap_error);
                let c = etas[(j, m)] * nu;
                h = h.add_term_hc(Coefficient::func(move |t: f64| C64::from_polar(c, -nu * t)), &op)?;
            }
            if n.qubit_shift != 0.0 {
                h = h.add_term(Coefficient::real(n.qubit_shift / 2.0), &sz)?;
            }
            if let Some(tr) = field[j] {
                let tr = tr.clone();
                h = h.add_term(Coefficient::func(move |t: f64| C64::new(tr.at(t) / 2.0, 0.0)), &sz)?;
            }
        }
        if let PulseShape::TopHat { rabi } = self.pulses {
            let amp = rabi * (1.0 + n.rabi_error) / 2.0;
            let tp = PI / rabi;
            let d2 = self.cfg.delta2();
            for field_ion in 0..2 {
                let windows: Vec<PulseWindow> = self
                    .seq
                    .pulse_times_for(field_ion)
                    .iter()
                    .zip(self.seq.pulse_phases())
                    .map(|(&tc, phase)| PulseWindow { start: tc - tp / 2.0, end: tc + tp / 2.0, phase })
                    .collect();
                for w in &windows {
                    breaks.push(w.start);
                    breaks.push(w.end);
                }
                let windows = Arc::new(windows);
                for ion in 0..2 {
                    // ω_ion − ω_field in the frame of each qubit
                    let det = match (field_ion, ion) {
                        (0, 1) => d2,
                        (1, 0) => -d2,
                        _ => 0.0,
                    };
                    let sp = sigma_plus::<f64>().embed(ion, &dims)?;
                    h = h.add_term_hc(window_coefficient(windows.clone(), amp, det), &sp)?;
                }
            }
        }
        Ok(h.with_breakpoints(breaks))
    }

    /// Instantaneous kicks (time, operator) in time order.
    fn kicks(&self) -> Result<Vec<(f64, Operator)>> {
        if !matches!(self.pulses, PulseShape::Instantaneous) {
            return Ok(Vec::new());
        }
        let dims = self.dims();
        let angle = PI / 2.0 * (1.0 + self.noise.rabi_error);
        let mut kicks = Vec::new();
        for j in 0..2 {
            for (t, phase) in self.seq.pulse_times_for(j).into_iter().zip(self.seq.pulse_phases()) {
                kicks.push((t, sigma_phi::<f64>(phase).propagator(angle)?.embed(j, &dims)?));
            }
        }
        kicks.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(kicks)
    }

    fn jumps(&self) -> Result<Vec<(f64, Operator)>> {
        let dims = self.dims();
        let mut out = Vec::new();
        if !self.noise.heating {
            return Ok(out);
        }
        for (m, ndot) in [self.cfg.heating_com, self.cfg.heating_breathing].into_iter().enumerate() {
            if ndot == 0.0 {
                continue;
            }
            let nb = mean_occupation(self.cfg.nu(m), self.cfg.temperature);
            let gamma = ndot / nb;
            let (b, bd) = ladder_ops::<f64>(self.fock[m])?;
            out.push((gamma * (nb + 1.0), b.embed(2 + m, &dims)?));
            out.push((gamma * nb, bd.embed(2 + m, &dims)?));
        }
        Ok(out)
    }

    fn field_noise(&self, seed: u64) -> Result<[Option<OUTrajectory<f64>>; 2]> {
        let Some((tau, t2)) = self.noise.field_noise else {
            return Ok([None, None]);
        };
        let c = OUProcess::<f64>::diffusion_for_t2(tau, t2);
        let dt = tau / 50.0;
        let dur = self.seq.duration() + self.seq.stagger + 1e-6;
        Ok([
            Some(ou_trajectory(&OUProcess::stationary(tau, c, dt, child_seed(seed, 0)), dur)?),
            Some(ou_trajectory(&OUProcess::stationary(tau, c, dt, child_seed(seed, 1)), dur)?),
        ])
    }

    fn realization(&self, seed: u64) -> Result<f64> {
        let traj = self.field_noise(seed)?;
        let h = self.hamiltonian([traj[0].as_ref(), traj[1].as_ref()])?;
        let kicks = self.kicks()?;
        let jumps = self.jumps()?;
        let end = self.seq.duration();
        let target = ideal_gate(self.target_phase).apply(&self.initial)?;
        let mut stops: Vec<f64> = kicks.iter().map(|k| k.0).collect();
        stops.push(end);
        if jumps.is_empty() {
            // no dissipation: average over the Fock components of the thermal input
            let mut fid = 0.0;
            let mut weight = 0.0;
            let p0 = thermal_state::<f64>(self.noise.initial_nbar, self.fock[0])?.populations();
            let p1 = thermal_state::<f64>(self.noise.initial_nbar, self.fock[1])?.populations();
            for (n0, &w0) in p0.iter().enumerate() {
                for (n1, &w1) in p1.iter().enumerate() {
                    let w = w0 * w1;
                    if w < THERMAL_WEIGHT_CUTOFF {
                        continue;
                    }
                    let modes = StateVector::product_basis(&self.fock, &[n0, n1])?;
                    let mut psi = self.initial.tensor(&modes);
                    let mut t = 0.0;
                    let mut ki = 0;
                    for &s in &stops {
                        psi = propagate_state(&h, &psi, t, s, self.ctl)?;
                        t = s;
                        while ki < kicks.len() && kicks[ki].0 <= s {
                            psi = kicks[ki].1.apply(&psi)?;
                            ki += 1;
                        }
                    }
                    let red = psi.to_density().partial_trace(&[0, 1])?;
                    fid += w * red.fidelity_pure(&target)?;
                    weight += w;
                }
            }
            Ok(1.0 - fid / weight)
        } else {
            let model = LindbladModel::new(h, jumps)?;
            let modes = thermal_state::<f64>(self.noise.initial_nbar, self.fock[0])?
                .tensor(&thermal_state(self.noise.initial_nbar, self.fock[1])?);
            let mut rho = self.initial.to_density().tensor(&modes);
            let mut t = 0.0;
            let mut ki = 0;
            for &s in &stops {
                rho = evolve_lindblad(&model, &rho, &[t, s], self.ctl)?.pop().unwrap();
                t = s;
                while ki < kicks.len() && kicks[ki].0 <= s {
                    let k = kicks[ki].1.data();
                    rho = DensityMatrix::new_unchecked(rho.dims().to_vec(), k * rho.data() * k.adjoint())?;
                    ki += 1;
                }
            }
            let red = rho.partial_trace(&[0, 1])?;
            Ok(1.0 - red.fidelity_pure(&target)?)
        }
    }
}

/// Full pulsed-gate simulation; realizations run in parallel with derived seeds.
pub fn simulate_pulsed_gate(setup: &PulsedGateSetup) -> Result<GateReport> {
    setup.cfg.validate()?;
    setup.seq.validate()?;
    if setup.initial.dims() != [2, 2] {
        return Err(Error::DimensionMismatch("initial state must be a two-qubit state".into()));
    }
    for (m, &d) in setup.fock.iter().enumerate() {
        let tail = (setup.noise.initial_nbar / (setup.noise.initial_nbar + 1.0)).powi(d as i32);
        if tail > 1e-6 {
            return Err(Error::Truncation(format!("mode {m} truncation {d} leaves thermal tail {tail:.2e}")));
        }
    }
    let n = if setup.noise.is_stochastic() { setup.noise.realizations.max(1) } else { 1 };
    let inf: Result<Vec<f64>> =
        (0..n as u64).into_par_iter().map(|k| setup.realization(child_seed(setup.noise.seed, k))).collect();
    Ok(GateReport::from_samples(inf?, setup.target_phase))
}

/// Designed π/4 gate of the benchmark: η₁ = 0.069, ν₁ = (2π)·150 kHz, r = 3, n_B = 4.
pub fn benchmark_gate(grid: usize) -> Result<(IonPairConfig, AXYSequence, ClosurePoint)> {
    let eta1 = 0.069;
    let (r, nb) = (3, 4);
    let mut cfg = IonPairConfig::from_eta(eta1, TWO_PI * 150e3);
    cfg.temperature = 50.0;
    cfg.heating_com = heating_scaling(&HeatingReference::com_reference(), cfg.nu1, 150e-6, 50.0)?;
    cfg.heating_breathing = heating_scaling(&HeatingReference::breathing_reference(), cfg.nu2(), 150e-6, 50.0)?;
    let target = PI / 4.0 / (eta1 * eta1);
    let p = design_gate(r, nb, target, grid)?;
    let seq = AXYSequence::from_rescaled(cfg.nu1, r, p.tau_a, p.tau_b, nb)?;
    Ok((cfg, seq, p))
}

/// |g⟩⊗(|g⟩+|e⟩)/√2.
pub fn benchmark_input() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![2, 2], DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0), C64::new(s, 0.0)]))
        .expect("normalized")
}

/// Continuous bichromatic gate with carrier decoupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousGateConfig {
    pub eta: f64,
    /// Trap frequency ν (rad/s).
    pub nu: f64,
    /// Bichromatic Rabi frequency Ω (rad/s).
    pub omega: f64,
    /// Gate detuning ξ = δ − ν (rad/s).
    pub xi: f64,
    /// Carrier Rabi frequency Ω_DD (rad/s).
    pub omega_dd: f64,
    pub n_rt: u32,
    pub n_pf: u32,
}

impl ContinuousGateConfig {
    pub fn delta(&self) -> f64 {
        self.nu + self.xi
    }

    pub fn bessel_arg(&self) -> f64 {
        2.0 * self.omega / self.delta()
    }

    pub fn gate_time(&self) -> f64 {
        TWO_PI * self.n_rt as f64 / self.xi
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0) || !(self.nu > 0.0) || !(self.eta > 0.0) || self.n_rt == 0 {
            return Err(invalid("continuous gate needs xi > 0, nu > 0, eta > 0, n_RT >= 1"));
        }
        if self.omega / self.delta() >= 0.3 {
            return Err(invalid(format!("Omega/delta = {:.3} is outside the weak-drive regime", self.omega / self.delta())));
        }
        Ok(())
    }

    /// Tunes ξ so that θ_n = π/8: ξ = 4√n_RT ηνJ₁(2Ω/δ) with δ = ν + ξ, by fixed-point iteration.
    pub fn tuned(eta: f64, nu: f64, omega: f64, n_rt: u32) -> Result<Self> {
        let mut xi = 4.0 * (n_rt as f64).sqrt() * eta * omega;
        for _ in 0..200 {
            let next = 4.0 * (n_rt as f64).sqrt() * eta * nu * bessel_j1(2.0 * omega / (nu + xi));
            if (next - xi).abs() < 1e-14 * xi {
                xi = next;
                let cfg = Self { eta, nu, omega, xi, omega_dd: 0.0, n_rt, n_pf: 0 };
                cfg.validate()?;
                return Ok(cfg);
            }
            xi = next;
        }
        Err(guard("detuning fixed point did not converge"))
    }

    /// Like [`Self::tuned`], but with ξ moved so that every one of the n_PF + 1 carrier
    /// segments spans a whole number of drive periods 2π/δ, and Ω re-solved for θ_n = π/8.
    ///
    /// At segment boundaries both sin(δt) and φ(t) vanish, so phase flips and π pulses act
    /// identically in the qubit frame and in the gate frame.
    pub fn commensurate(eta: f64, nu: f64, omega: f64, n_rt: u32, n_pf: u32) -> Result<Self> {
        let xi0 = Self::tuned(eta, nu, omega, n_rt)?.xi;
        let (n, p) = (n_rt as f64, n_pf as f64 + 1.0);
        let m = (n * (nu + xi0) / (xi0 * p)).round();
        if m * p <= n {
            return Err(invalid("drive too strong for a commensurate gate"));
        }
        let xi = n * nu / (m * p - n);
        let delta = nu + xi;
        let need = xi / (4.0 * n.sqrt() * eta * nu);
        let om = bisect(|w| bessel_j1(2.0 * w / delta) - need, 0.0, 0.3 * delta, 1e-12 * delta)
            .ok_or_else(|| guard("no drive amplitude reaches theta = pi/8"))?;
        let cfg = Self { eta, nu, omega: om, xi, omega_dd: 0.0, n_rt, n_pf };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Dressed carrier frequency Ω̃_DD per unit Ω_DD (J₀(1 + 2J₁²/J₀²) with phase modulation,
    /// J₀ without).
    pub fn dressing_factor(&self, phase_modulation: bool) -> f64 {
        let x = self.bessel_arg();
        let (j0, j1) = (bessel_j0(x), bessel_j1(x));
        if phase_modulation {
            j0 * (1.0 + 2.0 * j1 * j1 / (j0 * j0))
        } else {
            j0
        }
    }

    /// Carrier amplitude nearest `target` whose dressed rotation over one segment is a
    /// multiple of 2π, so an unpaired segment leaves no net rotation.
    pub fn with_commensurate_dd(mut self, target: f64, phase_modulation: bool) -> Self {
        if target == 0.0 {
            self.omega_dd = 0.0;
            return self;
        }
        let seg = self.gate_time() / (self.n_pf as f64 + 1.0);
        let unit = TWO_PI / (self.dressing_factor(phase_modulation) * seg);
        self.omega_dd = (target / unit).round().max(1.0) * unit;
        self
    }
}

/// θ_n = 2π n_RT η²ν²J₁²(2Ω/δ)/ξ², with the small-argument value 2π n_RT η²Ω²/ξ² alongside.
pub fn continuous_gate_phase(cfg: &ContinuousGateConfig) -> Result<(f64, f64)> {
    if !(cfg.xi > 0.0) {
        return Err(invalid("xi must be > 0"));
    }
    let n = cfg.n_rt as f64;
    let j1 = bessel_j1(cfg.bessel_arg());
    let exact = TWO_PI * n * (cfg.eta * cfg.nu * j1 / cfg.xi).powi(2);
    let approx = TWO_PI * n * (cfg.eta * cfg.omega / cfg.xi).powi(2);
    Ok((exact, approx))
}

/// φ(t) = 4(Ω_DD J₁/(δJ₀)) sin²(δt/2).
pub fn phase_modulation(t: f64, cfg: &ContinuousGateConfig) -> f64 {
    let x = cfg.bessel_arg();
    4.0 * cfg.omega_dd * bessel_j1(x) / (cfg.delta() * bessel_j0(x)) * (cfg.delta() * t / 2.0).sin().powi(2)
}

/// (g_Ω̃, g_ν, Ω̃_DD) of the second-order effective Hamiltonian.
pub fn second_order_couplings(cfg: &ContinuousGateConfig) -> Result<(f64, f64, f64)> {
    let x = cfg.bessel_arg();
    let (j0, j1) = (bessel_j0(x), bessel_j1(x));
    let om_dd = j0 * cfg.omega_dd * (1.0 + 2.0 * j1 * j1 / (j0 * j0));
    let den = 1.0 - (om_dd / cfg.nu).powi(2);
    if den.abs() < 1e-12 {
        return Err(guard("dressed carrier frequency is resonant with the trap"));
    }
    let e2 = cfg.eta * cfg.eta * j0 * j0;
    Ok((om_dd * e2 / den, cfg.nu * e2 / den, om_dd))
}

fn two_qubit_mode_dims(fock: usize) -> [usize; 3] {
    [2, 2, fock]
}

/// H_G = iηνJ₁(2Ω/δ)(b†e^{−iξt} − b e^{iξt})S_y on two qubits ⊗ one mode.
pub fn gate_hamiltonian(cfg: &ContinuousGateConfig, fock: usize) -> Result<TimeDependentHamiltonian<f64>> {
    let dims = two_qubit_mode_dims(fock);
    let sy = sigma_y::<f64>().embed(0, &dims)?.add(&sigma_y::<f64>().embed(1, &dims)?);
    let (_, bd) = ladder_ops::<f64>(fock)?;
    let op = bd.embed(2, &dims)?.mul(&sy);
    let g = cfg.eta * cfg.nu * bessel_j1(cfg.bessel_arg());
    let xi = cfg.xi;
    TimeDependentHamiltonian::new(&dims).add_term_hc(Coefficient::func(move |t: f64| C64::from_polar(g, PI / 2.0 - xi * t)), &op)
}

/// exp(iθS_y²) on the qubit pair.
pub fn sy_squared_unitary(theta: f64) -> Result<Operator> {
    let dims = [2, 2];
    let sy = sigma_y::<f64>().embed(0, &dims)?.add(&sigma_y::<f64>().embed(1, &dims)?);
    sy.mul(&sy).propagator(-theta)
}

/// (|gg⟩ + i|ee⟩)/√2.
pub fn bell_target() -> StateVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    StateVector::new(vec![2, 2], DVector::from_vec(vec![C64::new(0.0, s), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(s, 0.0)]))
        .expect("normalized")
}

/// Error and model switches of a continuous-gate simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousNoise {
    /// Include the full bichromatic drive in the qubit frame instead of the gate Hamiltonian.
    pub full_model: bool,
    pub phase_modulation: bool,
    pub breathing_mode: bool,
    /// Qubit splitting difference for crosstalk (rad/s); `None` disables crosstalk.
    pub crosstalk_delta: Option<f64>,
    /// Centre-of-mass heating (quanta/s) at bath temperature `temperature`.
    pub heating: f64,
    pub temperature: f64,
    /// OU magnetic noise (τ, T₂).
    pub field_noise: Option<(f64, f64)>,
    /// OU relative drive-amplitude noise (τ_Ω, δ_Ω).
    pub drive_noise: Option<(f64, f64)>,
    /// Static qubit frequency offset (rad/s).
    pub qubit_shift: f64,
    /// Static relative offset of Ω_DD.
    pub dd_offset: f64,
    pub initial_nbar: f64,
    pub fock: usize,
    pub realizations: usize,
    pub seed: u64,
}

impl ContinuousNoise {
    /// Single mode, gate Hamiltonian only, ground-state motion.
    pub fn idealized() -> Self {
        Self {
            full_model: false,
            phase_modulation: false,
            breathing_mode: false,
            crosstalk_delta: None,
            heating: 0.0,
            temperature: 300.0,
            field_noise: None,
            drive_noise: None,
            qubit_shift: 0.0,
            dd_offset: 0.0,
            initial_nbar: 0.0,
            fock: 8,
            realizations: 1,
            seed: 0,
        }
    }
}

/// Bell-state infidelity of the continuous gate from |gg⟩.
///
/// In the full model the qubits are driven in their own rotating frame and the final
/// state is compared in the bichromatic frame, i.e. after undoing exp(−i(Ω/δ)sin(δt)S_x).
pub fn simulate_continuous_gate(cfg: &ContinuousGateConfig, noise: &ContinuousNoise) -> Result<GateReport> {
    cfg.validate()?;
    let n = if noise.field_noise.is_some() || noise.drive_noise.is_some() { noise.realizations.max(1) } else { 1 };
    let inf: Result<Vec<f64>> =
        (0..n as u64).into_par_iter().map(|k| continuous_realization(cfg, noise, child_seed(noise.seed, k))).collect();
    Ok(GateReport::from_samples(inf?, PI / 8.0))
}

fn continuous_realization(cfg: &ContinuousGateConfig, noise: &ContinuousNoise, seed: u64) -> Result<f64> {
    let fock = noise.fock;
    let mut dims = vec![2, 2, fock];
    if noise.breathing_mode {
        dims.push(fock);
    }
    let t_end = cfg.gate_time();
    let mut kicks: Vec<(f64, Operator)> = Vec::new();
    let h = if !noise.full_model {
        if noise.breathing_mode {
            return Err(invalid("the breathing mode requires the full model"));
        }
        gate_hamiltonian(cfg, fock)?
    } else {
        // the closing π pulse is applied in the gate frame after the frame change below
        let pi_pulse = sigma_y::<f64>().propagator(-PI / 2.0)?.embed(0, &dims)?;
        let w = tensor(&[gate_frame(cfg, noise, t_end / 2.0)?, Operator::identity(&dims[2..])])?;
        kicks.push((t_end / 2.0, w.mul(&pi_pulse).mul(&w.adjoint())));
        full_continuous_hamiltonian(cfg, noise, &dims, seed)?
    };
    let mut jumps = Vec::new();
    if noise.heating > 0.0 {
        let nb = mean_occupation(cfg.nu, noise.temperature);
        let gamma = noise.heating / nb;
        let (b, bd) = ladder_ops::<f64>(fock)?;
        jumps.push((gamma * (nb + 1.0), b.embed(2, &dims)?));
        jumps.push((gamma * nb, bd.embed(2, &dims)?));
    }
    let mut modes = thermal_state::<f64>(noise.initial_nbar, fock)?;
    if noise.breathing_mode {
        modes = modes.tensor(&thermal_state(noise.initial_nbar, fock)?);
    }
    let gg = StateVector::product_basis(&[2, 2], &[1, 1])?;
    let mut rho = gg.to_density().tensor(&modes);
    let model = LindbladModel::new(h, jumps)?;
    // Coefficients oscillate faster than ‖H‖ suggests; cap the step on the fastest phase.
    let fastest = if noise.full_model {
        let nu_max = if noise.breathing_mode { 3f64.sqrt() * cfg.nu } else { cfg.nu };
        (cfg.delta() + noise.crosstalk_delta.map_or(0.0, f64::abs)).max(nu_max)
    } else {
        cfg.xi
    };
    let ctl = StepControl { max_phase: 0.05, max_step: Some(0.1 / fastest) };
    let mut t = 0.0;
    let mut stops: Vec<f64> = kicks.iter().map(|k| k.0).collect();
    if stops.last().map_or(true, |&s| s < t_end) {
        stops.push(t_end);
    }
    let mut ki = 0;
    for s in stops {
        rho = evolve_lindblad(&model, &rho, &[t, s], ctl)?.pop().unwrap();
        t = s;
        while ki < kicks.len() && kicks[ki].0 <= s {
            let k = kicks[ki].1.data();
            rho = DensityMatrix::new_unchecked(rho.dims().to_vec(), k * rho.data() * k.adjoint())?;
            ki += 1;
        }
    }
    let mut red = rho.partial_trace(&[0, 1])?;
    if noise.full_model {
        let w = gate_frame(cfg, noise, t_end)?;
        let k = sigma_y::<f64>().propagator(-PI / 2.0)?.embed(0, &[2, 2])?;
        let m = k.mul(&w.adjoint());
        red = DensityMatrix::new_unchecked(vec![2, 2], m.data() * red.data() * m.adjoint().data())?;
    }
    Ok(1.0 - red.fidelity_pure(&bell_target())?)
}

/// Carrier phase flips dividing the gate into n_PF + 1 equal parts.
fn flip_times(cfg: &ContinuousGateConfig) -> Vec<f64> {
    let t_end = cfg.gate_time();
    let n = cfg.n_pf as f64 + 1.0;
    (1..=cfg.n_pf).map(|k| k as f64 * t_end / n).collect()
}

fn phase_amplitude(cfg: &ContinuousGateConfig, noise: &ContinuousNoise) -> f64 {
    if noise.phase_modulation {
        let x = cfg.bessel_arg();
        4.0 * cfg.omega_dd * bessel_j1(x) / (cfg.delta() * bessel_j0(x))
    } else {
        0.0
    }
}

/// Frame of the gate analysis at time t (before any flip scheduled at t).
///
/// W(t) = exp(i s φ(t) S_z/2)·exp(−i(Ω/δ) sin(δt) S_x): qubit-frame state = W·gate-frame state.
fn gate_frame(cfg: &ContinuousGateConfig, noise: &ContinuousNoise, t: f64) -> Result<Operator> {
    let d = [2, 2];
    let sum = |op: Operator| -> Result<Operator> { Ok(op.embed(0, &d)?.add(&op.embed(1, &d)?)) };
    let sign = if flip_times(cfg).partition_point(|&f| f < t) % 2 == 0 { 1.0 } else { -1.0 };
    let phi = sign * phase_amplitude(cfg, noise) * (cfg.delta() * t / 2.0).sin().powi(2);
    let v = sum(sigma_z())?.propagator(-phi / 2.0)?;
    let ub = sum(sigma_x())?.propagator((cfg.omega / cfg.delta()) * (cfg.delta() * t).sin())?;
    Ok(v.mul(&ub))
}

fn full_continuous_hamiltonian(
    cfg: &ContinuousGateConfig,
    noise: &ContinuousNoise,
    dims: &[usize],
    seed: u64,
) -> Result<TimeDependentHamiltonian<f64>> {
    let t_end = cfg.gate_time();
    let delta = cfg.delta();
    let phi_amp = phase_amplitude(cfg, noise);
    let flips = Arc::new(flip_times(cfg));
    let flip = {
        let flips = flips.clone();
        move |t: f64| if flips.partition_point(|&f| f <= t) % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut breaks: Vec<f64> = flips.to_vec();
    breaks.push(t_end / 2.0);

    let make_ou = |tau: f64, c: f64, idx: u64| -> Result<OUTrajectory<f64>> {
        ou_trajectory(&OUProcess::stationary(tau, c, tau / 50.0, child_seed(seed, idx)), t_end + tau)
    };
    let drive: [Option<OUTrajectory<f64>>; 2] = match noise.drive_noise {
        Some((tau, rel)) => {
            let c = 2.0 * rel * rel / tau;
            [Some(make_ou(tau, c, 10)?), Some(make_ou(tau, c, 11)?)]
        }
        None => [None, None],
    };
    let field: [Option<OUTrajectory<f64>>; 2] = match noise.field_noise {
        Some((tau, t2)) => {
            let c = OUProcess::<f64>::diffusion_for_t2(tau, t2);
            [Some(make_ou(tau, c, 20)?), Some(make_ou(tau, c, 21)?)]
        }
        None => [None, None],
    };

    let mut h = TimeDependentHamiltonian::new(dims);
    let (b, _) = ladder_ops::<f64>(noise.fock)?;
    let nq_modes: Vec<(f64, f64, usize)> = if noise.breathing_mode {
        let nu2 = 3f64.sqrt() * cfg.nu;
        vec![(cfg.eta, cfg.nu, 2), (cfg.eta * 27f64.powf(-0.25), nu2, 3)]
    } else {
        vec![(cfg.eta, cfg.nu, 2)]
    };
    for (mi, &(eta, nu, site)) in nq_modes.iter().enumerate() {
        let bm = b.embed(site, dims)?;
        for j in 0..2 {
            let sign = if mi == 1 && j == 0 { -1.0 } else { 1.0 };
            let op = sigma_z::<f64>().embed(j, dims)?.mul(&bm);
            let c = sign * eta * nu;
            h = h.add_term_hc(Coefficient::func(move |t: f64| C64::from_polar(c, -nu * t)), &op)?;
        }
    }
    for j in 0..2 {
        let sz = sigma_z::<f64>().embed(j, dims)?;
        if noise.qubit_shift != 0.0 {
            h = h.add_term(Coefficient::real(noise.qubit_shift / 2.0), &sz)?;
        }
        if let Some(tr) = field[j].clone() {
            h = h.add_term(Coefficient::func(move |t: f64| C64::new(tr.at(t) / 2.0, 0.0)), &sz)?;
        }
    }
    // Field j drives qubit k at detuning ω_k − ω_j; the drive on σ_k⁺ is
    // [Ω cos(δt) − i(Ω_DD/2)s(t)] e^{iφ(t)s(t)} e^{iΔt}.
    let fields: Vec<usize> = if noise.crosstalk_delta.is_some() { vec![0, 1] } else { vec![] };
    let d2 = noise.crosstalk_delta.unwrap_or(0.0);
    for k in 0..2 {
        for j in 0..2 {
            if j != k && !fields.contains(&j) {
                continue;
            }
            let det = match (j, k) {
                (0, 1) => d2,
                (1, 0) => -d2,
                _ => 0.0,
            };
            let dn = drive[j].clone();
            let flip = flip.clone();
            let (om, omdd) = (cfg.omega, cfg.omega_dd * (1.0 + noise.dd_offset));
            let coeff = Coefficient::func(move |t: f64| {
                let s = flip(t);
                let a = 1.0 + dn.as_ref().map_or(0.0, |tr| tr.at(t));
                let phi = s * phi_amp * (delta * t / 2.0).sin().powi(2);
                let amp = C64::new(om * (delta * t).cos() * a, -omdd / 2.0 * s * a);
                amp * C64::from_polar(1.0, phi + det * t)
            });
            let sp = sigma_plus::<f64>().embed(k, dims)?;
            h = h.add_term_hc(coeff, &sp)?;
        }
    }
    Ok(h.with_breakpoints(breaks))
}
