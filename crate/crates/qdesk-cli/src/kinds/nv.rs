//! NV-centre nanoscale NMR. Frequencies are in Hz, fields in tesla, positions in nm.

use crate::config::parse_params;
use crate::error::{config_err, CliResult};
use crate::output::{fmt, Outcome, Table};
use crate::Ctx;
use qdesk::nvnmr::*;
use serde::Deserialize;
use serde_json::{Map, Value};
use std::f64::consts::PI;

const TAU: f64 = 2.0 * PI;
/// Design branch that fractional-coefficient pulses are placed near, in units of T/l.
const DESIGN_RATIO: f64 = 6.0;

#[derive(Clone, Copy, Debug, Default, Deserialize)]
enum Species {
    #[default]
    #[serde(rename = "1H")]
    H1,
    #[serde(rename = "13C")]
    C13,
}

impl Species {
    fn gamma(self) -> f64 {
        match self {
            Species::H1 => GAMMA_H,
            Species::C13 => GAMMA_C13,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NucleusParams {
    #[serde(default)]
    species: Species,
    position_nm: Option<[f64; 3]>,
    hyperfine_hz: Option<[f64; 3]>,
}

impl NucleusParams {
    fn spec(&self) -> CliResult<NucleusSpec> {
        let gamma = self.species.gamma();
        match (self.position_nm, self.hyperfine_hz) {
            (Some(r), None) => Ok(NucleusSpec::Position { r: r.map(|x| x * 1e-9), gamma }),
            (None, Some(a)) => Ok(NucleusSpec::Hyperfine { a: a.map(|x| TAU * x), gamma }),
            _ => Err(config_err("params: each nucleus needs exactly one of position_nm or hyperfine_hz")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum TransitionName {
    #[default]
    ZeroOne,
    PlusMinus,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
enum PulseParams {
    Instantaneous,
    TopHat {
        rabi_hz: f64,
    },
    /// t_π = ratio·T/l, or the ratio near the design branch giving `fraction` of 4/(πl).
    Extended {
        ratio: Option<f64>,
        fraction: Option<f64>,
        #[serde(default = "default_width")]
        width: f64,
    },
}

fn default_width() -> f64 {
    0.07
}

impl PulseParams {
    fn spec(self) -> CliResult<PulseSpec> {
        Ok(match self {
            PulseParams::Instantaneous => PulseSpec::Instantaneous,
            PulseParams::TopHat { rabi_hz } => PulseSpec::TopHat { rabi: TAU * rabi_hz },
            PulseParams::Extended { ratio, fraction, width } => {
                let ratio = match (ratio, fraction) {
                    (Some(r), None) => r,
                    (None, Some(f)) => modulated_ratio_for(f, DESIGN_RATIO)?,
                    _ => return Err(config_err("params: extended pulses need exactly one of ratio or fraction")),
                };
                PulseSpec::Extended { ratio, width }
            }
        })
    }
}

/// Harmonic coefficient the pulse family gives at modulation frequency ω_M.
fn coefficient(pulse: &PulseSpec, l: u32, omega_m: f64) -> CliResult<f64> {
    let period = TAU / omega_m;
    Ok(match *pulse {
        PulseSpec::Instantaneous => f_coeff(l, PulseShape::Instantaneous, 0.0, period)?,
        PulseSpec::TopHat { rabi } => f_coeff(l, PulseShape::TopHat, PI / rabi, period)?,
        PulseSpec::Extended { ratio, .. } => f_coeff(l, PulseShape::Modulated, ratio * period / l as f64, period)?,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpectrumParams {
    b_z: f64,
    transition: TransitionName,
    /// Named register; overrides `nuclei`.
    cluster: Option<String>,
    nuclei: Vec<NucleusParams>,
    l: u32,
    repetitions: usize,
    pulse: PulseParams,
    /// Scan centre: the resonance of this nucleus, or an explicit ω_M/2π.
    center_nucleus: Option<usize>,
    center_hz: Option<f64>,
    /// Scan width in ω_M/2π; zero or one point skips the scan.
    span_hz: f64,
    points: usize,
    rabi_error: f64,
    /// Also evaluate every nuclear resonance against its ideal depth.
    dips: bool,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self {
            b_z: 1.0,
            transition: TransitionName::ZeroOne,
            cluster: None,
            nuclei: Vec::new(),
            l: 13,
            repetitions: 100,
            pulse: PulseParams::Instantaneous,
            center_nucleus: None,
            center_hz: None,
            span_hz: 0.0,
            points: 0,
            rabi_error: 0.0,
            dips: true,
        }
    }
}

pub fn nv_spectrum(params: &Map<String, Value>, _ctx: &Ctx) -> CliResult<Outcome> {
    let p: SpectrumParams = parse_params(params)?;
    let transition = match p.transition {
        TransitionName::ZeroOne => Transition::ZeroOne,
        TransitionName::PlusMinus => Transition::PlusMinus,
    };
    let sys = match p.cluster.as_deref() {
        Some("five-proton") => {
            let c = NVSystem::five_proton_cluster(p.b_z)?;
            NVSystem::with_transition(p.b_z, &hyperfine_specs(&c), transition)?
        }
        Some(other) => return Err(config_err(format!("params: unknown cluster `{other}`"))),
        None => {
            let specs = p.nuclei.iter().map(NucleusParams::spec).collect::<CliResult<Vec<_>>>()?;
            NVSystem::with_transition(p.b_z, &specs, transition)?
        }
    };
    if sys.nuclei().is_empty() {
        return Err(config_err("params: the register has no nuclei"));
    }
    let pulse = p.pulse.spec()?;
    let resonance = |k: usize| -> CliResult<f64> { Ok(sys.effective_larmor(k)?.omega / p.l as f64) };

    let mut tables = Vec::new();
    let mut min_sigma = f64::INFINITY;
    let mut out = Outcome::default();
    if p.points > 0 {
        let center = match (p.center_nucleus, p.center_hz) {
            (Some(k), None) if k < sys.nuclei().len() => resonance(k)?,
            (None, Some(hz)) => TAU * hz,
            (None, None) => {
                let n = sys.nuclei().len();
                (0..n).map(resonance).sum::<CliResult<f64>>()? / n as f64
            }
            _ => return Err(config_err("params: give at most one of center_nucleus (in range) or center_hz")),
        };
        let grid = centered_grid(center, TAU * p.span_hz, p.points);
        let sp = xy8_spectrum(&sys, &pulse, p.l, &grid, p.repetitions, p.rabi_error)?;
        let mut t = Table::new("spectrum", &["omega_m_hz", "sigma_x"]);
        for s in &sp {
            min_sigma = min_sigma.min(s.sigma_x);
            t.push(vec![fmt(s.omega_m / TAU), fmt(s.sigma_x)]);
        }
        tables.push(t);
        out.put_f("center_hz", center / TAU);
    }
    let f_ref = coefficient(&pulse, p.l, resonance(0)?)?;
    if p.dips {
        let w: Vec<f64> = (0..sys.nuclei().len()).map(resonance).collect::<CliResult<_>>()?;
        let sp = xy8_spectrum(&sys, &pulse, p.l, &w, p.repetitions, p.rabi_error)?;
        let mut t = Table::new("dips", &["nucleus", "omega_m_hz", "sigma_x", "ideal"]);
        let mut worst: f64 = 0.0;
        for (k, s) in sp.iter().enumerate() {
            let f = coefficient(&pulse, p.l, s.omega_m)?;
            let ideal = sys.ideal_depth(k, f, sequence_time(s.omega_m, p.repetitions))?;
            worst = worst.max((s.sigma_x - ideal).abs());
            min_sigma = min_sigma.min(s.sigma_x);
            t.push(vec![k.to_string(), fmt(s.omega_m / TAU), fmt(s.sigma_x), fmt(ideal)]);
        }
        tables.push(t);
        out.put_f("worst_dip_error", worst);
    }
    out.tables = tables;
    out.put_f("f_l", f_ref);
    out.put_f("contrast", 1.0 - min_sigma);
    out.put("unresolved_pairs", unresolved_pairs(&sys, f_ref)?.len());
    Ok(out)
}

fn hyperfine_specs(sys: &NVSystem) -> Vec<NucleusSpec> {
    sys.nuclei().iter().map(|n| NucleusSpec::Hyperfine { a: n.hyperfine, gamma: n.gamma }).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DesignParams {
    l: u32,
    /// t_π/(T/l); ignored when `fraction` is set.
    ratio: f64,
    fraction: Option<f64>,
    /// Gaussian width c₁/t_π.
    width: f64,
    /// Field setting the addressed Larmor frequency ω_M = γB/l.
    b_z: f64,
    species: Species,
    /// Solve the modulation; false gives the plain cosine ramp.
    modulated: bool,
    points: usize,
}

impl Default for DesignParams {
    fn default() -> Self {
        Self { l: 13, ratio: DESIGN_RATIO, fraction: None, width: 0.07, b_z: 1.0, species: Species::H1, modulated: true, points: 2001 }
    }
}

pub fn pulse_design(params: &Map<String, Value>, _ctx: &Ctx) -> CliResult<Outcome> {
    let p: DesignParams = parse_params(params)?;
    if p.l == 0 || p.points < 2 {
        return Err(config_err("params: pulse-design needs l >= 1 and points >= 2"));
    }
    let ratio = match p.fraction {
        Some(f) => modulated_ratio_for(f, DESIGN_RATIO)?,
        None => p.ratio,
    };
    let omega_m = p.species.gamma().abs() * p.b_z / p.l as f64;
    let t_pi = ratio * TAU / omega_m / p.l as f64;
    let build = if p.modulated { build_extended_pulse } else { unmodulated_pulse };
    let pulse = build(p.l, omega_m, t_pi, p.width * t_pi)?;
    let mut t = Table::new("waveform", &["t_s", "F", "rabi_hz"]);
    for (s, f, w) in pulse.waveform(p.points) {
        t.push(vec![fmt(s), fmt(f), fmt(w / TAU)]);
    }
    let carrier = NVSystem::new(p.b_z, &[])?.transition_frequency();
    let energy = extended_energy(&pulse, carrier)?;
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put_f("ratio", ratio);
    out.put_f("a1", pulse.a1);
    out.put_f("f_closed", f_coeff(p.l, PulseShape::Modulated, t_pi, pulse.period())?);
    out.put_f("f_numeric", pulse.fourier_coefficient(p.l));
    out.put_f("intrapulse", pulse.intrapulse_integral());
    out.put_f("area_error", pulse.area() - PI);
    out.put_f("energy", energy.main);
    out.put_f("equivalent_rabi_hz", equivalent_tophat(energy.main) / TAU);
    out.put_f("t_pi_s", t_pi);
    out.put_f("period_s", pulse.period());
    Ok(out)
}
