//! Gate experiments. Frequencies are entered in Hz (2π applied here), times in seconds.

use crate::config::parse_params;
use crate::error::{config_err, CliResult};
use crate::output::{fmt, Outcome, Table};
use crate::Ctx;
use qdesk::consts::TWO_PI;
use qdesk::ddgates::*;
use qdesk::dynamics::{child_seed, StepControl};
use serde::Deserialize;
use serde_json::{Map, Value};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum GateTask {
    #[default]
    Simulate,
    ClosureMap,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Pulses {
    #[default]
    Instantaneous,
    TopHat,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum NoiseSet {
    #[default]
    None,
    Full,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PulsedGateParams {
    task: GateTask,
    /// Magnetic gradient (T/m); ignored when `eta1` is set.
    gradient: f64,
    /// Centre-of-mass Lamb-Dicke parameter; overrides `gradient`.
    eta1: Option<f64>,
    trap_hz: f64,
    /// Ion-electrode distance (µm) and bath temperature (K) for the heating scaling.
    distance_um: f64,
    temperature_k: f64,
    r: u32,
    blocks: usize,
    /// Gate phase φ of exp(iφσzσz) (rad).
    target_phase: f64,
    design_grid: usize,
    pulses: Pulses,
    /// Top-hat Rabi frequency (Hz); defaults to the crosstalk-free value for δ₂.
    rabi_hz: Option<f64>,
    /// Second-ion delay in units of t_π.
    stagger: f64,
    noise: NoiseSet,
    initial_nbar: Option<f64>,
    realizations: usize,
    fock: [usize; 2],
    max_phase: f64,
    map_grid: usize,
    /// Dark cells have |G_j2| below this fraction of the map maximum.
    dark_fraction: f64,
    /// Name of an embedded reference mask to compare against.
    reference: Option<String>,
}

impl Default for PulsedGateParams {
    fn default() -> Self {
        Self {
            task: GateTask::Simulate,
            gradient: 150.0,
            eta1: None,
            trap_hz: 150e3,
            distance_um: 150.0,
            temperature_k: 50.0,
            r: 3,
            blocks: 4,
            target_phase: PI / 4.0,
            design_grid: 600,
            pulses: Pulses::Instantaneous,
            rabi_hz: None,
            stagger: 1.05,
            noise: NoiseSet::None,
            initial_nbar: None,
            realizations: 100,
            fock: [20, 10],
            max_phase: 0.05,
            map_grid: 100,
            dark_fraction: 0.05,
            reference: None,
        }
    }
}

pub fn pulsed_gate(params: &Map<String, Value>, ctx: &Ctx) -> CliResult<Outcome> {
    let p: PulsedGateParams = parse_params(params)?;
    match p.task {
        GateTask::Simulate => simulate(&p, ctx),
        GateTask::ClosureMap => closure_map(&p),
    }
}

fn ion_pair(p: &PulsedGateParams) -> CliResult<IonPairConfig> {
    let nu1 = TWO_PI * p.trap_hz;
    let mut cfg = match p.eta1 {
        Some(e) => IonPairConfig::from_eta(e, nu1),
        None => IonPairConfig::new(nu1, p.gradient),
    };
    cfg.temperature = p.temperature_k;
    let d = p.distance_um * 1e-6;
    cfg.heating_com = heating_scaling(&HeatingReference::com_reference(), cfg.nu1, d, cfg.temperature)?;
    cfg.heating_breathing = heating_scaling(&HeatingReference::breathing_reference(), cfg.nu2(), d, cfg.temperature)?;
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(p: &PulsedGateParams, ctx: &Ctx) -> CliResult<Outcome> {
    let cfg = ion_pair(p)?;
    let eta1 = cfg.eta(0);
    let point = design_gate(p.r, p.blocks, p.target_phase / (eta1 * eta1), p.design_grid)?;
    let mut seq = AXYSequence::from_rescaled(cfg.nu1, p.r, point.tau_a, point.tau_b, p.blocks)?;
    let pulses = match p.pulses {
        Pulses::Instantaneous => PulseShape::Instantaneous,
        Pulses::TopHat => {
            let rabi = match p.rabi_hz {
                Some(hz) => TWO_PI * hz,
                None => crosstalk_rabi(cfg.delta2(), 2)?,
            };
            seq.t_pi = PI / rabi;
            seq.stagger = p.stagger * seq.t_pi;
            seq.validate()?;
            PulseShape::TopHat { rabi }
        }
    };
    let noise = match p.noise {
        NoiseSet::None => PulsedNoise::noiseless(p.initial_nbar.unwrap_or(0.0)),
        NoiseSet::Full => {
            let mut n = PulsedNoise::full(p.realizations, ctx.seed);
            if let Some(nb) = p.initial_nbar {
                n.initial_nbar = nb;
            }
            n
        }
    };
    let stochastic = noise.field_noise.is_some();
    let setup = PulsedGateSetup {
        cfg: cfg.clone(),
        seq: seq.clone(),
        pulses,
        noise,
        fock: p.fock,
        initial: benchmark_input(),
        target_phase: p.target_phase,
        ctl: StepControl { max_phase: p.max_phase, max_step: None },
    };
    let report = simulate_pulsed_gate(&setup)?;
    let mut t = Table::new("realizations", &["realization", "seed", "infidelity"]);
    for (k, inf) in report.infidelities.iter().enumerate() {
        let seed = if stochastic { child_seed(ctx.seed, k as u64).to_string() } else { String::new() };
        t.push(vec![k.to_string(), seed, fmt(*inf)]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put_f("mean_infidelity", report.mean_infidelity);
    out.put_f("std_error", report.std_error);
    out.put_f("gate_time_s", seq.duration());
    out.put_f("tau_a", point.tau_a);
    out.put_f("tau_b", point.tau_b);
    out.put_f("phi_tilde", point.phi_tilde);
    out.put_f("eta1", eta1);
    out.put_f("delta2_hz", cfg.delta2() / TWO_PI);
    out.put_f("heating_com_per_s", cfg.heating_com);
    out.put_f("heating_breathing_per_s", cfg.heating_breathing);
    if let PulseShape::TopHat { rabi } = pulses {
        out.put_f("rabi_hz", rabi / TWO_PI);
        out.put_f("t_pi_s", seq.t_pi);
    }
    Ok(out)
}

/// Embedded self-regression references for closure maps.
fn reference_mask(name: &str) -> CliResult<&'static str> {
    match name {
        "closure-map-r1" => Ok(include_str!("../../presets/closure_map_r1.mask")),
        _ => Err(config_err(format!("unknown closure-map reference `{name}`"))),
    }
}

/// |G_j2(n_Bτ)| of the breathing mode over the admissible (τ_a/τ, τ_b/τ) triangle.
fn closure_map(p: &PulsedGateParams) -> CliResult<Outcome> {
    if p.map_grid < 4 || !(p.dark_fraction > 0.0 && p.dark_fraction < 1.0) {
        return Err(config_err("params: closure map needs map_grid >= 4 and 0 < dark_fraction < 1"));
    }
    let h = 0.5 / p.map_grid as f64;
    let nu2 = 3f64.sqrt() * TWO_PI;
    let mut cells = Vec::new();
    for i in 0..p.map_grid {
        for j in i + 1..p.map_grid {
            let (ta, tb) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            let seq = AXYSequence::from_rescaled(TWO_PI, p.r, ta, tb, p.blocks)?;
            cells.push((ta, tb, g_function(&seq, nu2, seq.duration())?.norm()));
        }
    }
    let max = cells.iter().map(|c| c.2).fold(0.0, f64::max);
    let mask: String = cells.iter().map(|c| if c.2 < p.dark_fraction * max { '1' } else { '0' }).collect();
    let mut t = Table::new("closure_map", &["tau_a", "tau_b", "g2_abs", "dark"]);
    for (c, m) in cells.iter().zip(mask.chars()) {
        t.push(vec![fmt(c.0), fmt(c.1), fmt(c.2), m.to_string()]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put("cells", cells.len());
    out.put("dark_cells", mask.chars().filter(|&c| c == '1').count());
    out.put("mask", mask.clone());
    if let Some(name) = &p.reference {
        let reference = reference_mask(name)?.trim();
        if reference.len() != mask.len() {
            return Err(config_err(format!("reference `{name}` has {} cells, map has {}", reference.len(), mask.len())));
        }
        let flips = reference.chars().zip(mask.chars()).filter(|(a, b)| a != b).count();
        out.put("flips", flips);
        out.put_f("flip_fraction", flips as f64 / mask.len() as f64);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Tuning {
    /// Gate detuning solved for θ = π/8 in n_RT loops.
    #[default]
    Tuned,
    /// Gate time commensurate with the carrier phase flips.
    Commensurate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ContinuousGateParams {
    eta: f64,
    trap_hz: f64,
    rabi_hz: f64,
    n_rt: u32,
    n_pf: u32,
    tuning: Tuning,
    /// Target dressed carrier Rabi frequency (Hz); requires commensurate tuning.
    dd_target_hz: Option<f64>,
    phase_modulation: bool,
    full_model: bool,
    breathing_mode: bool,
    crosstalk_delta_hz: Option<f64>,
    /// Centre-of-mass heating (quanta/s).
    heating: f64,
    temperature_k: f64,
    /// OU field noise (τ, T₂) in seconds.
    field_noise: Option<[f64; 2]>,
    /// OU relative drive noise (τ_Ω in seconds, δ_Ω).
    drive_noise: Option<[f64; 2]>,
    qubit_shift_hz: f64,
    dd_offset: f64,
    initial_nbar: f64,
    fock: usize,
    realizations: usize,
}

impl Default for ContinuousGateParams {
    fn default() -> Self {
        let n = ContinuousNoise::idealized();
        Self {
            eta: 0.011,
            trap_hz: 207e3,
            rabi_hz: 26.6e3,
            n_rt: 1,
            n_pf: 1,
            tuning: Tuning::Tuned,
            dd_target_hz: None,
            phase_modulation: false,
            full_model: n.full_model,
            breathing_mode: n.breathing_mode,
            crosstalk_delta_hz: None,
            heating: n.heating,
            temperature_k: n.temperature,
            field_noise: None,
            drive_noise: None,
            qubit_shift_hz: 0.0,
            dd_offset: 0.0,
            initial_nbar: n.initial_nbar,
            fock: n.fock,
            realizations: 1,
        }
    }
}

pub fn continuous_gate(params: &Map<String, Value>, ctx: &Ctx) -> CliResult<Outcome> {
    let p: ContinuousGateParams = parse_params(params)?;
    let (nu, omega) = (TWO_PI * p.trap_hz, TWO_PI * p.rabi_hz);
    let cfg = match p.tuning {
        Tuning::Tuned => {
            if p.dd_target_hz.is_some() {
                return Err(config_err("params: dd_target_hz needs tuning = \"commensurate\""));
            }
            ContinuousGateConfig::tuned(p.eta, nu, omega, p.n_rt)?
        }
        Tuning::Commensurate => {
            let c = ContinuousGateConfig::commensurate(p.eta, nu, omega, p.n_rt, p.n_pf)?;
            match p.dd_target_hz {
                Some(hz) => c.with_commensurate_dd(TWO_PI * hz, p.phase_modulation),
                None => c,
            }
        }
    };
    let noise = ContinuousNoise {
        full_model: p.full_model,
        phase_modulation: p.phase_modulation,
        breathing_mode: p.breathing_mode,
        crosstalk_delta: p.crosstalk_delta_hz.map(|d| TWO_PI * d),
        heating: p.heating,
        temperature: p.temperature_k,
        field_noise: p.field_noise.map(|[a, b]| (a, b)),
        drive_noise: p.drive_noise.map(|[a, b]| (a, b)),
        qubit_shift: TWO_PI * p.qubit_shift_hz,
        dd_offset: p.dd_offset,
        initial_nbar: p.initial_nbar,
        fock: p.fock,
        realizations: p.realizations,
        seed: ctx.seed,
    };
    let stochastic = noise.field_noise.is_some() || noise.drive_noise.is_some();
    let report = simulate_continuous_gate(&cfg, &noise)?;
    let mut t = Table::new("realizations", &["realization", "seed", "infidelity"]);
    for (k, inf) in report.infidelities.iter().enumerate() {
        let seed = if stochastic { child_seed(ctx.seed, k as u64).to_string() } else { String::new() };
        t.push(vec![k.to_string(), seed, fmt(*inf)]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put_f("mean_infidelity", report.mean_infidelity);
    out.put_f("std_error", report.std_error);
    out.put_f("gate_time_s", cfg.gate_time());
    out.put_f("xi_hz", cfg.xi / TWO_PI);
    out.put_f("omega_dd_hz", cfg.omega_dd / TWO_PI);
    Ok(out)
}
