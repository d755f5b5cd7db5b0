//! Light-matter model experiments. These models are scale free: every frequency is given
//! in units of the bosonic mode frequency ω (or of g_b for the pump) and every time in
//! units of the inverse of that frequency.

use crate::config::parse_params;
use crate::error::{config_err, CliResult};
use crate::output::{fmt, Outcome, Table};
use crate::Ctx;
use qdesk::hilbert::{coherent_state, thermal_state};
use qdesk::rabimodels::*;
use qdesk::{dynamics::StepControl, StateVector, C64};
use serde::Deserialize;
use serde_json::{Map, Value};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum BranchName {
    Plus,
    #[default]
    Minus,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SpectrumParams {
    gamma: f64,
    g: f64,
    fock: usize,
    /// Odd photon number of the resonance.
    k: usize,
    n0: usize,
    branch: BranchName,
    /// Scan window around the uncorrected resonance estimate.
    window: [f64; 2],
    points: usize,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        Self { gamma: 0.9, g: 0.1, fock: 40, k: 5, n0: 2, branch: BranchName::Minus, window: [-0.4, 0.1], points: 2001 }
    }
}

pub fn rabi_stark_spectrum(params: &Map<String, Value>, _ctx: &Ctx) -> CliResult<Outcome> {
    let p: SpectrumParams = parse_params(params)?;
    if p.points < 3 {
        return Err(config_err("params: points must be >= 3"));
    }
    let branch = match p.branch {
        BranchName::Plus => Branch::Plus,
        BranchName::Minus => Branch::Minus,
    };
    let base = RabiStarkParams::new(0.0, 1.0, p.gamma, p.g).with_fock(p.fock);
    base.validate()?;
    let window = (p.window[0], p.window[1]);
    let peak = k_photon_peak(&base, p.k, p.n0, branch, window, p.points)?;
    // the coarse scan again, for plotting
    let initial = match branch {
        Branch::Minus => (Qubit::Ground, p.n0 + p.k),
        Branch::Plus => (Qubit::Ground, p.n0),
    };
    let grid: Vec<f64> = (0..p.points)
        .map(|i| peak.estimate + window.0 + (window.1 - window.0) * i as f64 / (p.points - 1) as f64)
        .collect();
    let scan = resonance_scan(&base, &grid, initial, peak.time, ScanObservable::Excited)?;
    let mut t = Table::new("scan", &["omega0", "excited"]);
    for (w, e) in scan {
        t.push(vec![fmt(w), fmt(e)]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put_f("estimate", peak.estimate);
    out.put_f("peak", peak.peak);
    out.put_f("height", peak.height);
    out.put_f("time", peak.time);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NqrmRunParams {
    omega0: f64,
    g: f64,
    eta: f64,
    /// Fock truncation; defaults to the f₁ barrier plus ten.
    fock: Option<usize>,
    /// Initial Fock number with the qubit in |g⟩; ignored when `alpha` is set.
    n: usize,
    /// Real coherent amplitude of the initial field.
    alpha: Option<f64>,
    t_final: f64,
    samples: usize,
}

impl Default for NqrmRunParams {
    fn default() -> Self {
        Self { omega0: 0.0, g: 4.0, eta: 0.67898, fock: None, n: 0, alpha: None, t_final: 10.0 * PI, samples: 200 }
    }
}

pub fn nqrm_run(params: &Map<String, Value>, _ctx: &Ctx) -> CliResult<Outcome> {
    let p: NqrmRunParams = parse_params(params)?;
    if p.samples == 0 || !(p.t_final > 0.0) {
        return Err(config_err("params: nqrm-run needs t_final > 0 and samples >= 1"));
    }
    let mut model = NQRMParams::new(p.omega0, 1.0, p.g, p.eta);
    if let Some(d) = p.fock {
        model.fock = d;
    }
    let d = model.fock;
    let ground = StateVector::product_basis(&[2], &[1])?;
    let psi0 = match p.alpha {
        Some(a) => ground.tensor(&coherent_state(C64::from(a), d)?),
        None => StateVector::product_basis(&[2, d], &[1, p.n])?,
    };
    let times: Vec<f64> = (0..=p.samples).map(|i| p.t_final * i as f64 / p.samples as f64).collect();
    let states = Spectral::new(&nqrm_hamiltonian(&model)?)?.evolve(&psi0, &times)?;
    let barrier = f1_barrier(p.eta, d, BARRIER_TOL);
    let mut t = Table::new("evolution", &["t", "excited", "photon_mean", "above_barrier"]);
    let mut max_above: f64 = 0.0;
    for (time, s) in times.iter().zip(&states) {
        let pops = qubit_fock_populations(s);
        let excited: f64 = pops[0].iter().sum();
        let mean: f64 = (0..d).map(|n| n as f64 * (pops[0][n] + pops[1][n])).sum();
        let above = barrier.map_or(0.0, |b| population_above(s, b));
        max_above = max_above.max(above);
        t.push(vec![fmt(*time), fmt(excited), fmt(mean), fmt(above)]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put("fock", d);
    out.put("barrier", barrier.map_or(Value::Null, Value::from));
    out.put_f("max_above_barrier", max_above);
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FockPumpParams {
    /// Target Fock state; η defaults to the first zero of f₁ at this n.
    target: usize,
    eta: Option<f64>,
    /// Γ/g_b.
    gamma: f64,
    nbar: f64,
    fock: usize,
    /// Duration in periods 2π/g_b.
    periods: f64,
    samples: usize,
}

impl Default for FockPumpParams {
    fn default() -> Self {
        Self { target: 17, eta: None, gamma: 2.0, nbar: 1.0, fock: 28, periods: 100.0, samples: 100 }
    }
}

pub fn fock_pump(params: &Map<String, Value>, _ctx: &Ctx) -> CliResult<Outcome> {
    let p: FockPumpParams = parse_params(params)?;
    let eta = match p.eta {
        Some(e) => e,
        None => f1_first_zero(p.target)?,
    };
    let rho0 = StateVector::product_basis(&[2], &[1])?.to_density().tensor(&thermal_state(p.nbar, p.fock)?);
    let r = fock_state_pump(eta, 1.0, p.gamma, &rho0, p.periods * 2.0 * PI, p.samples, StepControl::default())?;
    let mut t = Table::new("pump", &["t", "target", "above_barrier", "mean_phonon"]);
    for (k, time) in r.times.iter().enumerate() {
        let mean: f64 = r.phonon_populations[k].iter().enumerate().map(|(n, q)| n as f64 * q).sum();
        t.push(vec![fmt(*time), fmt(r.target_population[k]), fmt(r.above_barrier[k]), fmt(mean)]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    out.put_f("eta", eta);
    out.put("barrier", r.barrier);
    out.put_f("final_target", *r.target_population.last().unwrap());
    out.put("convergence_time", r.convergence_time.map_or(Value::Null, crate::output::num));
    out.put_f("initial_above_barrier", r.above_barrier[0]);
    out.put_f("max_above_barrier", r.above_barrier.iter().cloned().fold(0.0, f64::max));
    Ok(out)
}
