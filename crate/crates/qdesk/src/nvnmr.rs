//! NV center coupled to nuclear spins under XY8 decoupling: hyperfine geometry, harmonic
//! filter coefficients, amplitude-modulated extended π pulses, MW energy accounting and
//! full spectrum simulation in the qubit ⊗ nuclei space.
//!
//! Units are SI with angular frequencies in rad/s. The NV qubit basis is ordered
//! (|1⟩, |0⟩) so that σ_z = |1⟩⟨1| − |0⟩⟨0| is `diag(1, −1)`.

use crate::dynamics::{self, Coefficient, Smoothness, StepControl};
use crate::error::{guard, invalid};
use crate::hilbert::{self, Operator as Op};
use crate::{consts, quad, Operator, Result, C64};
use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Electron gyromagnetic ratio (rad/s/T); negative by convention.
pub const GAMMA_E: f64 = -consts::TWO_PI * 28.024e9;
pub const GAMMA_H: f64 = consts::TWO_PI * 42.577e6;
pub const GAMMA_C13: f64 = consts::TWO_PI * 10.708e6;
/// Zero-field splitting D (rad/s).
pub const ZERO_FIELD_SPLITTING: f64 = consts::TWO_PI * 2.87e9;
/// Allowed overshoot of |F| above 1 on the verification grid.
pub const F_TOL: f64 = 1e-9;
/// Bound on the intrapulse Fourier integral at harmonic l, in units of t_π.
pub const INTRAPULSE_TOL: f64 = 1e-10;
/// Bound on |∫Ω dt − π| for an accepted pulse.
pub const AREA_TOL: f64 = 1e-9;
/// Largest nuclear register simulated densely (NV ⊗ 2ⁿ).
pub const MAX_NUCLEI: usize = 8;
/// cond1 is read as satisfied when the margin exceeds this factor.
pub const RESOLVE_FACTOR: f64 = 10.0;
const GRID_POINTS: usize = 20_001;
/// RK4 phase per step inside extended pulses; thousands of pulses reuse one propagator.
const PULSE_PHASE_STEP: f64 = 0.01;

/// Which NV transition hosts the qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Transition {
    /// |0⟩ ↔ |1⟩: S_z = (1 + σ_z)/2, so nuclei see a static −A/2 shift and a σ_z A·I/2 coupling.
    #[default]
    ZeroOne,
    /// |1⟩ ↔ |−1⟩: S_z = σ_z, no static shift and a σ_z A·I coupling.
    PlusMinus,
}

impl Transition {
    fn shift(self) -> f64 {
        match self {
            Transition::ZeroOne => 0.5,
            Transition::PlusMinus => 0.0,
        }
    }

    /// Prefactor of σ_z A·I in the rotating-frame Hamiltonian.
    pub fn coupling(self) -> f64 {
        match self {
            Transition::ZeroOne => 0.5,
            Transition::PlusMinus => 1.0,
        }
    }
}

/// A nucleus given either by its position relative to the vacancy or by its hyperfine vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NucleusSpec {
    /// Position in metres.
    Position { r: [f64; 3], gamma: f64 },
    /// Hyperfine vector in rad/s.
    Hyperfine { a: [f64; 3], gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub hyperfine: [f64; 3],
    pub gamma: f64,
}

/// Dipolar hyperfine vector A = (μ₀γ_eγ_nħ/4πr³)[ẑ − 3(ẑ·r̂)r̂].
pub fn hyperfine_vector(r: [f64; 3], gamma_n: f64) -> Result<[f64; 3]> {
    let r = Vector3::from(r);
    let d = r.norm();
    if !(d > 0.0 && d.is_finite()) {
        return Err(invalid("hyperfine_vector needs a nonzero finite position"));
    }
    let pre = consts::MU0 / (4.0 * PI) * GAMMA_E * gamma_n * consts::HBAR / d.powi(3);
    let z = Vector3::z();
    let a = (z - r * (3.0 * r.z / (d * d))) * pre;
    Ok([a.x, a.y, a.z])
}

/// Per-nucleus frame: ω⃗ = ω_L ẑ − s·A with s = 1/2 on the |0⟩↔|1⟩ transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LarmorFrame {
    pub omega: f64,
    /// Unit vector along ω⃗; the nuclear quantisation axis ẑ_j.
    pub axis: [f64; 3],
    /// Transverse unit vector along A − (A·ω̂)ω̂ (any perpendicular when that vanishes).
    pub x_hat: [f64; 3],
    pub y_hat: [f64; 3],
    /// |A − (A·ω̂)ω̂|, the resonant coupling component.
    pub a_x: f64,
    /// |ω̂ × A|, equal to `a_x`.
    pub a_y: f64,
    /// A·ω̂ (signed).
    pub a_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NVSystem {
    /// Static field along the NV axis (T).
    pub b_z: f64,
    /// Zero-field splitting (rad/s).
    pub d: f64,
    pub transition: Transition,
    nuclei: Vec<Nucleus>,
}

impl NVSystem {
    pub fn new(b_z: f64, specs: &[NucleusSpec]) -> Result<Self> {
        Self::with_transition(b_z, specs, Transition::ZeroOne)
    }

    pub fn with_transition(b_z: f64, specs: &[NucleusSpec], transition: Transition) -> Result<Self> {
        if !b_z.is_finite() {
            return Err(invalid("B_z must be finite"));
        }
        let nuclei = specs
            .iter()
            .map(|s| match *s {
                NucleusSpec::Position { r, gamma } => Ok(Nucleus { hyperfine: hyperfine_vector(r, gamma)?, gamma }),
                NucleusSpec::Hyperfine { a, gamma } => {
                    if a.iter().any(|x| !x.is_finite()) {
                        return Err(invalid("hyperfine components must be finite"));
                    }
                    Ok(Nucleus { hyperfine: a, gamma })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let sys = Self { b_z, d: ZERO_FIELD_SPLITTING, transition, nuclei };
        for j in 0..sys.nuclei.len() {
            if !(sys.omega_vector(j).norm() > 0.0) {
                return Err(invalid(format!("nucleus {j} has a vanishing effective Larmor frequency")));
            }
        }
        Ok(sys)
    }

    /// Five protons at ≈2.46 nm; hyperfine vectors in (2π) kHz.
    pub fn five_proton_cluster(b_z: f64) -> Result<Self> {
        const A: [[f64; 3]; 5] =
            [[-1.84, -3.19, -11.02], [2.38, 5.04, -8.78], [8.09, 2.66, -1.02], [4.26, 2.46, 3.48], [4.07, 1.00, -7.09]];
        let specs: Vec<_> = A
            .iter()
            .map(|a| NucleusSpec::Hyperfine { a: a.map(|x| consts::TWO_PI * 1e3 * x), gamma: GAMMA_H })
            .collect();
        Self::new(b_z, &specs)
    }

    pub fn nuclei(&self) -> &[Nucleus] {
        &self.nuclei
    }

    pub fn larmor(&self, j: usize) -> f64 {
        self.nuclei[j].gamma * self.b_z
    }

    /// Angular frequency of the driven NV transition, |D − γ_e B_z| for |0⟩↔|1⟩.
    pub fn transition_frequency(&self) -> f64 {
        match self.transition {
            Transition::ZeroOne => (self.d - GAMMA_E * self.b_z).abs(),
            Transition::PlusMinus => (2.0 * GAMMA_E * self.b_z).abs(),
        }
    }

    fn omega_vector(&self, j: usize) -> Vector3<f64> {
        Vector3::z() * self.larmor(j) - Vector3::from(self.nuclei[j].hyperfine) * self.transition.shift()
    }

    pub fn effective_larmor(&self, j: usize) -> Result<LarmorFrame> {
        if j >= self.nuclei.len() {
            return Err(invalid(format!("nucleus index {j} out of range")));
        }
        let w = self.omega_vector(j);
        let omega = w.norm();
        let axis = w / omega;
        let a = Vector3::from(self.nuclei[j].hyperfine);
        let a_z = a.dot(&axis);
        let perp = a - axis * a_z;
        let a_x = perp.norm();
        let x_hat = if a_x > 1e-12 * a.norm().max(f64::MIN_POSITIVE) {
            perp / a_x
        } else {
            // A ∥ ω̂: no resonant coupling, any transverse axis will do
            let seed = if axis.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            (seed - axis * seed.dot(&axis)).normalize()
        };
        let y_hat = axis.cross(&x_hat);
        Ok(LarmorFrame {
            omega,
            axis: axis.into(),
            x_hat: x_hat.into(),
            y_hat: y_hat.into(),
            a_x,
            a_y: axis.cross(&a).norm(),
            a_z,
        })
    }

    /// Ideal on-resonance signal cos(f_l A_k^x t/4), scaled for the chosen transition.
    pub fn ideal_depth(&self, k: usize, f_l: f64, t: f64) -> Result<f64> {
        let fr = self.effective_larmor(k)?;
        Ok((2.0 * self.transition.coupling() * f_l * fr.a_x * t / 4.0).cos())
    }
}

/// How the π pulses shape F(t) inside the pulse windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseShape {
    Instantaneous,
    TopHat,
    Modulated,
}

/// Closed-form harmonic coefficient f_l of an XY-type F(t) with period T.
pub fn f_coeff(l: u32, shape: PulseShape, t_pi: f64, period: f64) -> Result<f64> {
    if l == 0 {
        return Err(invalid("harmonic index must be at least 1"));
    }
    if !(period > 0.0) || !(t_pi >= 0.0) || (shape != PulseShape::Instantaneous && !(t_pi < period / 2.0)) {
        return Err(invalid("f_coeff needs T > 0 and 0 ≤ t_π < T/2"));
    }
    if l % 2 == 0 {
        return Ok(0.0);
    }
    let lf = l as f64;
    let s = (PI * lf / 2.0).sin();
    let base = 4.0 / (PI * lf) * s;
    let ratio = t_pi / (period / lf);
    Ok(match shape {
        PulseShape::Instantaneous => base,
        PulseShape::Modulated => base * (PI * ratio).cos(),
        PulseShape::TopHat => {
            let r = 2.0 * ratio;
            let den = 1.0 - r * r;
            if den.abs() < 1e-9 {
                // removable singularity: cos(πr/2)/(1 − r²) → π/4 at r = 1
                base * PI / 4.0
            } else {
                base * (PI * r / 2.0).cos() / den
            }
        }
    })
}

/// t_π/(T/l) on the first branch above `near` where the modulated coefficient equals
/// `fraction` of its maximum 4/(πl).
pub fn modulated_ratio_for(fraction: f64, near: f64) -> Result<f64> {
    if !(fraction.abs() <= 1.0) {
        return Err(invalid("fraction must lie in [−1, 1]"));
    }
    let base = near.floor();
    let x = fraction.acos() / PI;
    // cos(πr) = ±fraction on [n, n+1]; pick the branch with the right sign
    let r = if (base as i64) % 2 == 0 { base + x } else { base + 1.0 - x };
    Ok(r)
}

/// Ω(t) = −Ḟ/√(1 − F²) for a modulation strictly inside (−1, 1).
pub fn rabi_from_modulation(f: f64, fdot: f64) -> Result<f64> {
    let d = 1.0 - f * f;
    if !(d > 0.0) {
        return Err(invalid("Ω is undefined where |F| ≥ 1 inside a pulse"));
    }
    Ok(-fdot / d.sqrt())
}

/// One amplitude-modulated π pulse and the XY8 period it lives in. Relative time s runs
/// over [0, t_π] from the pulse start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedPulse {
    pub l: u32,
    pub omega_m: f64,
    pub t_pi: f64,
    /// Gaussian width c₁ (s).
    pub c1: f64,
    /// Solved modulation amplitude.
    pub a1: f64,
    pub phi: f64,
    edge: f64,
}

impl ExtendedPulse {
    pub fn period(&self) -> f64 {
        consts::TWO_PI / self.omega_m
    }

    /// Free time before the first pulse, from T = 4t_m + 2t_π.
    pub fn t_m(&self) -> f64 {
        (self.period() - 2.0 * self.t_pi) / 4.0
    }

    fn k(&self) -> f64 {
        self.l as f64 * self.omega_m
    }

    /// Gaussian envelope minus its edge value, so F hits ±1 exactly at the pulse edges.
    fn envelope(&self, s: f64) -> (f64, f64) {
        let x = s - self.t_pi / 2.0;
        let g = (-x * x / (2.0 * self.c1 * self.c1)).exp();
        (g - self.edge, -x / (self.c1 * self.c1) * g)
    }

    fn modulation_term(&self, s: f64) -> (f64, f64) {
        let x = s - self.t_pi / 2.0;
        let (g, gd) = self.envelope(s);
        let (sn, cs) = (self.k() * x).sin_cos();
        (self.a1 * g * sn, self.a1 * (gd * sn + g * self.k() * cs))
    }

    /// F(s) on the pulse.
    pub fn modulation(&self, s: f64) -> f64 {
        (PI * s / self.t_pi).cos() + self.modulation_term(s).0
    }

    pub fn modulation_dot(&self, s: f64) -> f64 {
        -(PI / self.t_pi) * (PI * s / self.t_pi).sin() + self.modulation_term(s).1
    }

    /// Ω(s), with the cosine-leading limit π/t_π where 1 − F² underflows at the edges.
    pub fn rabi(&self, s: f64) -> f64 {
        let u = PI * s / self.t_pi;
        let (su, cu) = u.sin_cos();
        let (e, ed) = self.modulation_term(s);
        // 1 − F² written without the cancellation in 1 − cos²
        let d = su * su - e * (2.0 * cu + e);
        if su.abs() < 1e-7 || d <= 0.0 {
            return PI / self.t_pi;
        }
        ((PI / self.t_pi) * su - ed) / d.sqrt()
    }

    /// F(t) over one period t ∈ [0, T); the second pulse is the negated copy shifted by T/2.
    pub fn period_modulation(&self, t: f64) -> f64 {
        let tm = self.t_m();
        let half = self.period() / 2.0;
        let t = t.rem_euclid(self.period());
        let (sign, t) = if t < half { (1.0, t) } else { (-1.0, t - half) };
        sign * if t < tm {
            1.0
        } else if t < tm + self.t_pi {
            self.modulation(t - tm)
        } else {
            -1.0
        }
    }

    /// ∫ over the first pulse of F(s) cos(lω_M s) in period time, in units of t_π.
    pub fn intrapulse_integral(&self) -> f64 {
        let tm = self.t_m();
        let tol = 1e-13 * self.t_pi;
        quad::integrate(|s| self.modulation(s) * (self.k() * (tm + s)).cos(), 0.0, self.t_pi, tol).0 / self.t_pi
    }

    /// Numerical (2/T)∫₀ᵀ F cos(nω_M t) dt of the constructed waveform.
    pub fn fourier_coefficient(&self, n: u32) -> f64 {
        let (t, tm, tp) = (self.period(), self.t_m(), self.t_pi);
        let pts = [0.0, tm, tm + tp, 3.0 * tm + tp, 3.0 * tm + 2.0 * tp, t];
        let w = n as f64 * self.omega_m;
        let panels = (n as usize).max(self.l as usize).max(1) * 4;
        let mut fine = Vec::new();
        for p in pts.windows(2) {
            for i in 0..panels {
                fine.push(p[0] + (p[1] - p[0]) * i as f64 / panels as f64);
            }
        }
        fine.push(t);
        2.0 / t * quad::integrate_pieces(|x| self.period_modulation(x) * (w * x).cos(), &fine, 1e-11 * t)
    }

    /// ∫Ω ds over the pulse.
    pub fn area(&self) -> f64 {
        let n = 8 * self.l as usize;
        let pts: Vec<f64> = (0..=n).map(|i| self.t_pi * i as f64 / n as f64).collect();
        quad::integrate_pieces(|s| self.rabi(s), &pts, 1e-12)
    }

    /// Largest |F| on a dense grid over the pulse.
    pub fn max_abs_modulation(&self) -> f64 {
        (0..GRID_POINTS).map(|i| self.modulation(self.t_pi * i as f64 / (GRID_POINTS - 1) as f64).abs()).fold(0.0, f64::max)
    }

    /// (s, F, Ω) samples across the pulse.
    pub fn waveform(&self, points: usize) -> Vec<(f64, f64, f64)> {
        let n = points.max(2);
        (0..n)
            .map(|i| {
                let s = self.t_pi * i as f64 / (n - 1) as f64;
                (s, self.modulation(s), self.rabi(s))
            })
            .collect()
    }
}

/// Builds an extended π pulse with a Gaussian-windowed first-harmonic modulation and solves
/// a₁ so that the pulse adds nothing to the lth Fourier coefficient.
pub fn build_extended_pulse(l: u32, omega_m: f64, t_pi: f64, c1: f64) -> Result<ExtendedPulse> {
    let mut p = unsolved_pulse(l, omega_m, t_pi, c1)?;
    let tm = p.t_m();
    let k = p.k();
    let tol = 1e-13 * t_pi;
    let num = quad::integrate(|s| (PI * s / t_pi).cos() * (k * (tm + s)).cos(), 0.0, t_pi, tol).0;
    let den = quad::integrate(
        |s| {
            let x = s - t_pi / 2.0;
            p.envelope(s).0 * (k * x).sin() * (k * (tm + s)).cos()
        },
        0.0,
        t_pi,
        tol,
    )
    .0;
    if !(den.abs() > 1e-9 * t_pi) {
        return Err(guard("modulation cannot cancel the intrapulse term: vanishing denominator"));
    }
    p.a1 = -num / den;
    verify_pulse(&p)?;
    Ok(p)
}

/// The same window with a₁ = 0: a plain cosine ramp.
pub fn unmodulated_pulse(l: u32, omega_m: f64, t_pi: f64, c1: f64) -> Result<ExtendedPulse> {
    unsolved_pulse(l, omega_m, t_pi, c1)
}

fn unsolved_pulse(l: u32, omega_m: f64, t_pi: f64, c1: f64) -> Result<ExtendedPulse> {
    if l == 0 || !(omega_m > 0.0) || !(t_pi > 0.0) || !(c1 > 0.0) {
        return Err(invalid("extended pulse needs l ≥ 1 and positive ω_M, t_π, c₁"));
    }
    if !(t_pi < PI / omega_m) {
        return Err(invalid("t_π must be shorter than T/2"));
    }
    let x = t_pi / 2.0;
    let edge = (-x * x / (2.0 * c1 * c1)).exp();
    if edge > 1e-6 {
        return Err(invalid(format!("Gaussian width c₁ = {c1:e} s leaves {edge:.1e} of the envelope at the pulse edges")));
    }
    Ok(ExtendedPulse { l, omega_m, t_pi, c1, a1: 0.0, phi: 0.0, edge })
}

fn verify_pulse(p: &ExtendedPulse) -> Result<()> {
    let m = p.max_abs_modulation();
    if m > 1.0 + F_TOL {
        return Err(invalid(format!("|F| reaches {m:.6} > 1; choose another t_π or c₁")));
    }
    let i = p.intrapulse_integral().abs();
    if i > INTRAPULSE_TOL {
        return Err(guard(format!("intrapulse integral {i:.2e} above tolerance")));
    }
    let a = p.area();
    if (a - PI).abs() > AREA_TOL {
        return Err(guard(format!("pulse area {a} differs from π")));
    }
    Ok(())
}

/// Top-hat pulse energy πΩ in units of c/(μ₀γ_e²), dropping the (2ω)⁻¹ carrier term.
pub fn tophat_energy(omega: f64) -> f64 {
    PI * omega
}

/// Exact top-hat energy 2Ω²∫₀^{t_π} cos²(ωt − φ) dt with t_π = π/Ω.
pub fn tophat_energy_exact(omega: f64, carrier: f64, phi: f64) -> f64 {
    let t = PI / omega;
    omega * omega * (t + ((2.0 * carrier * t - 2.0 * phi).sin() + (2.0 * phi).sin()) / (2.0 * carrier))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PulseEnergy {
    /// 2∫Ω²cos²(ωt − φ) dt by quadrature over carrier half-cycles.
    pub main: f64,
    /// Including the 2/ω ∫ΩΩ̇ cos sin term. Integrating that term by parts gives
    /// ∫Ω² dt + [Ω² sin 2(ωt − φ)/(2ω)] over the pulse, which needs no Ω̇.
    pub total: f64,
}

impl PulseEnergy {
    pub fn derivative_term(&self) -> f64 {
        self.total - self.main
    }
}

/// Energy of an extended pulse in units of c/(μ₀γ_e²).
pub fn extended_energy(p: &ExtendedPulse, carrier: f64) -> Result<PulseEnergy> {
    if !(carrier * p.t_pi > 10.0) {
        return Err(invalid("energy accounting assumes a carrier much faster than 1/t_π"));
    }
    let scale = PI * PI / p.t_pi;
    let phase = |s: f64| carrier * s - p.phi;
    let cycles = (carrier * p.t_pi / PI).ceil() as usize;
    let pts: Vec<f64> = (0..=cycles).map(|i| p.t_pi * i as f64 / cycles as f64).collect();
    let main = 2.0 * quad::integrate_pieces(|s| p.rabi(s).powi(2) * phase(s).cos().powi(2), &pts, 1e-10 * scale);
    let coarse: Vec<f64> = (0..=8 * p.l as usize).map(|i| p.t_pi * i as f64 / (8 * p.l) as f64).collect();
    let bulk = quad::integrate_pieces(|s| p.rabi(s).powi(2), &coarse, 1e-12 * scale);
    let edge = |s: f64| p.rabi(s).powi(2) * (2.0 * phase(s)).sin() / (2.0 * carrier);
    Ok(PulseEnergy { main, total: bulk + edge(p.t_pi) - edge(0.0) })
}

/// Constant Rabi frequency whose top-hat π pulse carries the energy `e`.
pub fn equivalent_tophat(e: f64) -> f64 {
    e / PI
}

/// Margins of the resonance conditions when addressing nucleus `target` at harmonic l.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceReport {
    pub target: usize,
    /// min over j ≠ k of |ω_j − ω_k|/(|f_l| A_j^x/4); infinite for a lone nucleus.
    pub cond1: f64,
    /// Nucleus attaining `cond1`.
    pub closest: Option<usize>,
    /// min over odd n ≠ l and all j of |ω_j − (n/l)ω_k|/(|f_n| A_j^x/4).
    pub cond2: f64,
}

impl ResonanceReport {
    pub fn resolved(&self) -> bool {
        self.cond1 >= RESOLVE_FACTOR
    }
}

/// Checks cond1/cond2 for every nucleus as target; harmonics n run over odd values up to 2l+1.
pub fn resonance_checker(sys: &NVSystem, l: u32, coeff: impl Fn(u32) -> f64) -> Result<Vec<ResonanceReport>> {
    if l == 0 {
        return Err(invalid("harmonic index must be at least 1"));
    }
    let frames = (0..sys.nuclei.len()).map(|j| sys.effective_larmor(j)).collect::<Result<Vec<_>>>()?;
    let g = 2.0 * sys.transition.coupling();
    let fl = coeff(l).abs();
    let margin = |gap: f64, f: f64, ax: f64| {
        let c = g * f * ax / 4.0;
        if c > 0.0 {
            gap / c
        } else {
            f64::INFINITY
        }
    };
    Ok((0..frames.len())
        .map(|k| {
            let wk = frames[k].omega;
            let (mut cond1, mut closest) = (f64::INFINITY, None);
            for (j, fj) in frames.iter().enumerate().filter(|(j, _)| *j != k) {
                let m = margin((fj.omega - wk).abs(), fl, fj.a_x);
                if m < cond1 {
                    cond1 = m;
                    closest = Some(j);
                }
            }
            let mut cond2 = f64::INFINITY;
            for n in (1..=2 * l + 1).step_by(2).filter(|&n| n != l) {
                let fnn = coeff(n).abs();
                for fj in &frames {
                    cond2 = cond2.min(margin((fj.omega - n as f64 / l as f64 * wk).abs(), fnn, fj.a_x));
                }
            }
            ResonanceReport { target: k, cond1, closest, cond2 }
        })
        .collect())
}

/// Symmetric cond1 margin for every nucleus pair, min(|Δω|/(|f_l|A_j^x/4), |Δω|/(|f_l|A_k^x/4)),
/// sorted from the tightest pair.
pub fn pair_margins(sys: &NVSystem, f_l: f64) -> Result<Vec<(usize, usize, f64)>> {
    let frames = (0..sys.nuclei.len()).map(|j| sys.effective_larmor(j)).collect::<Result<Vec<_>>>()?;
    let g = 2.0 * sys.transition.coupling() * f_l.abs() / 4.0;
    let mut out = Vec::new();
    for j in 0..frames.len() {
        for k in j + 1..frames.len() {
            let c = g * frames[j].a_x.max(frames[k].a_x);
            let gap = (frames[j].omega - frames[k].omega).abs();
            out.push((j, k, if c > 0.0 { gap / c } else { f64::INFINITY }));
        }
    }
    out.sort_by(|a, b| a.2.total_cmp(&b.2));
    Ok(out)
}

/// Pairs whose resonances overlap at the given coefficient.
pub fn unresolved_pairs(sys: &NVSystem, f_l: f64) -> Result<Vec<(usize, usize)>> {
    Ok(pair_margins(sys, f_l)?.into_iter().filter(|p| p.2 < RESOLVE_FACTOR).map(|p| (p.0, p.1)).collect())
}

/// π-pulse family used in a spectrum run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PulseSpec {
    Instantaneous,
    /// Constant Rabi frequency Ω (rad/s); t_π = π/Ω.
    TopHat { rabi: f64 },
    /// Extended pulses with t_π = ratio·T/l and c₁ = width·t_π, rebuilt at every ω_M.
    Extended { ratio: f64, width: f64 },
}

/// XY8 phases: X Y X Y Y X Y X.
pub const XY8_PHASES: [f64; 8] = [0.0, PI / 2.0, 0.0, PI / 2.0, PI / 2.0, 0.0, PI / 2.0, 0.0];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub omega_m: f64,
    pub sigma_x: f64,
}

/// Dense operators of the NV ⊗ nuclei register.
struct Register {
    dims: Vec<usize>,
    h0: Operator,
}

fn nv_drive(phi: f64) -> Op<f64> {
    // |1⟩⟨0| e^{iφ} + h.c. with |1⟩ first
    let e = C64::from_polar(1.0, phi);
    Op::new(vec![2], DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), e, e.conj(), C64::new(0.0, 0.0)])).unwrap()
}

impl Register {
    fn new(sys: &NVSystem) -> Result<Self> {
        let n = sys.nuclei.len();
        if n > MAX_NUCLEI {
            return Err(guard(format!("{n} nuclei exceed the dense limit of {MAX_NUCLEI}")));
        }
        let dims = vec![2; n + 1];
        let paulis = [hilbert::sigma_x::<f64>(), hilbert::sigma_y(), hilbert::sigma_z()];
        let sz = hilbert::sigma_z::<f64>().embed(0, &dims)?;
        let mut h0 = Op::zeros(&dims);
        for j in 0..n {
            let w = sys.omega_vector(j);
            let a = sys.nuclei[j].hyperfine;
            for (c, p) in paulis.iter().enumerate() {
                let ic = p.scale_re(0.5).embed(j + 1, &dims)?;
                // −ω⃗·I + c σ_z A·I
                h0 = h0.add(&ic.scale_re(-w[c])).add(&sz.mul(&ic).scale_re(sys.transition.coupling() * a[c]));
            }
        }
        Ok(Self { dims, h0 })
    }

    fn instant_pulse(&self, phi: f64, angle: f64) -> Result<Operator> {
        let gate = nv_drive(phi).scale_re(angle / 2.0).propagator(1.0)?;
        gate.embed(0, &self.dims)
    }

    fn tophat_pulse(&self, phi: f64, rabi: f64, t: f64) -> Result<Operator> {
        self.h0.add(&nv_drive(phi).embed(0, &self.dims)?.scale_re(rabi / 2.0)).propagator(t)
    }

    fn extended_pulse(&self, p: &ExtendedPulse, phi: f64, scale: f64) -> Result<Operator> {
        let drive = nv_drive(phi).embed(0, &self.dims)?;
        let pulse = p.clone();
        let h = crate::TimeDependentHamiltonian::constant(&self.h0)
            .add_term(Coefficient::func(move |s: f64| C64::new(scale * pulse.rabi(s) / 2.0, 0.0)), &drive)?
            .with_smoothness(Smoothness::Smooth);
        let ctl = StepControl { max_phase: PULSE_PHASE_STEP, max_step: Some(p.t_pi / 4000.0) };
        dynamics::propagator(&h, 0.0, p.t_pi, ctl)
    }

    /// ⟨σ_x⟩ after U acting on |+⟩⟨+| ⊗ 𝟙/2ⁿ.
    fn sigma_x(&self, u: &Operator) -> f64 {
        let d = u.dim();
        let half = d / 2;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // columns U(|+⟩ ⊗ |b⟩); NV is the most significant factor
        let v = DMatrix::from_fn(d, half, |r, b| (u.get(r, b) + u.get(r, half + b)) * s);
        let mut acc = 0.0;
        for b in 0..half {
            for r in 0..half {
                acc += 2.0 * (v[(r, b)].conj() * v[(half + r, b)]).re;
            }
        }
        acc / half as f64
    }
}

fn matrix_power(u: &Operator, mut n: usize) -> Operator {
    let mut result = Op::identity(u.dims());
    let mut base = u.clone();
    while n > 0 {
        if n & 1 == 1 {
            result = result.mul(&base);
        }
        base = base.mul(&base);
        n >>= 1;
    }
    result
}

/// Full propagator of `repetitions` XY8 blocks at modulation frequency ω_M.
pub fn xy8_propagator(sys: &NVSystem, pulse: &PulseSpec, l: u32, omega_m: f64, repetitions: usize, rabi_error: f64) -> Result<Operator> {
    let reg = Register::new(sys)?;
    xy8_block(&reg, pulse, l, omega_m, rabi_error).map(|b| matrix_power(&b, repetitions))
}

fn xy8_block(reg: &Register, pulse: &PulseSpec, l: u32, omega_m: f64, rabi_error: f64) -> Result<Operator> {
    if !(omega_m > 0.0) || l == 0 {
        return Err(invalid("ω_M must be positive and l ≥ 1"));
    }
    let period = consts::TWO_PI / omega_m;
    let scale = 1.0 + rabi_error;
    let (t_pi, pulses): (f64, Vec<Operator>) = match *pulse {
        PulseSpec::Instantaneous => (0.0, [0.0, PI / 2.0].iter().map(|&p| reg.instant_pulse(p, PI * scale)).collect::<Result<_>>()?),
        PulseSpec::TopHat { rabi } => {
            if !(rabi > 0.0) {
                return Err(invalid("top-hat Rabi frequency must be positive"));
            }
            let t = PI / rabi;
            (t, [0.0, PI / 2.0].iter().map(|&p| reg.tophat_pulse(p, rabi * scale, t)).collect::<Result<_>>()?)
        }
        PulseSpec::Extended { ratio, width } => {
            let t = ratio * period / l as f64;
            let p = build_extended_pulse(l, omega_m, t, width * t)?;
            (t, [0.0, PI / 2.0].iter().map(|&ph| reg.extended_pulse(&p, ph, scale)).collect::<Result<_>>()?)
        }
    };
    let t_m = (period - 2.0 * t_pi) / 4.0;
    if !(t_m >= 0.0) {
        return Err(invalid(format!("t_π = {t_pi:e} s does not fit twice in T = {period:e} s")));
    }
    let free = reg.h0.propagator(t_m)?;
    let mut block = Op::identity(&reg.dims);
    for phi in XY8_PHASES {
        let p = if phi == 0.0 { &pulses[0] } else { &pulses[1] };
        block = free.mul(p).mul(&free).mul(&block);
    }
    Ok(block)
}

/// Final time of `repetitions` XY8 blocks: 4T each.
pub fn sequence_time(omega_m: f64, repetitions: usize) -> f64 {
    4.0 * repetitions as f64 * consts::TWO_PI / omega_m
}

/// ⟨σ_x⟩ over a grid of ω_M, each point an independent exact run.
pub fn xy8_spectrum(
    sys: &NVSystem,
    pulse: &PulseSpec,
    l: u32,
    omega_grid: &[f64],
    repetitions: usize,
    rabi_error: f64,
) -> Result<Vec<SpectrumPoint>> {
    if !rabi_error.is_finite() || rabi_error <= -1.0 {
        return Err(invalid("Rabi error must be a finite fraction above −1"));
    }
    let reg = Register::new(sys)?;
    omega_grid
        .par_iter()
        .map(|&w| {
            let u = matrix_power(&xy8_block(&reg, pulse, l, w, rabi_error)?, repetitions);
            Ok(SpectrumPoint { omega_m: w, sigma_x: reg.sigma_x(&u) })
        })
        .collect()
}

/// Evenly spaced grid of `points` values centred on ω_k/l with total span `span`.
pub fn centered_grid(center: f64, span: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![center];
    }
    (0..points).map(|i| center - span / 2.0 + span * i as f64 / (points - 1) as f64).collect()
}
