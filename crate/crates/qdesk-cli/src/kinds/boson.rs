//! Boson-sampling experiments. Loss strengths are dimensionless products with the step
//! duration τ; rate-race inputs are in seconds and samples per second.

use crate::config::parse_params;
use crate::error::{config_err, CliResult};
use crate::output::{fmt, num, Outcome, Table};
use crate::Ctx;
use qdesk::bosonsampling::*;
use qdesk::dynamics::child_seed;
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct DistributionParams {
    n: usize,
    m: usize,
    instances: usize,
}

impl Default for DistributionParams {
    fn default() -> Self {
        Self { n: 3, m: 6, instances: 30 }
    }
}

/// Permanent-formula output distributions against Fock-space evolution through the
/// decomposed circuit, one Haar unitary per instance.
pub fn bs_distribution(params: &Map<String, Value>, ctx: &Ctx) -> CliResult<Outcome> {
    let p: DistributionParams = parse_params(params)?;
    if p.instances == 0 {
        return Err(config_err("params: instances must be >= 1"));
    }
    let space = FockSpace::new(p.n, p.m)?;
    let input = FockConfig::standard_input(p.n, p.m)?;
    let psi0 = space.basis_state(&input)?;
    let mut inst = Table::new("instances", &["instance", "seed", "tv_distance", "clements_error"]);
    let mut dist = Table::new("distribution", &["output", "permanent", "circuit"]);
    let (mut max_tv, mut max_cl) = (0.0f64, 0.0f64);
    for k in 0..p.instances {
        let seed = child_seed(ctx.seed, k as u64);
        let u = haar_unitary(p.m, seed)?;
        let prog = clements_decompose(&u)?;
        let cl = (prog.unitary() - u.data()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let perm = output_distribution(&u, &input, &space)?;
        let circ = circuit_evolution(&prog, &space, &psi0, 0.0)?.populations();
        let tv = total_variation(&perm, &circ);
        max_tv = max_tv.max(tv);
        max_cl = max_cl.max(cl);
        inst.push(vec![k.to_string(), seed.to_string(), fmt(tv), fmt(cl)]);
        if k == 0 {
            for (i, (a, b)) in perm.iter().zip(&circ).enumerate() {
                let occ: Vec<String> = space.config(i).occupations().iter().map(|o| o.to_string()).collect();
                dist.push(vec![occ.join("-"), fmt(*a), fmt(*b)]);
            }
        }
    }
    let mut out = Outcome { tables: vec![inst, dist], ..Default::default() };
    out.put_f("max_tv_distance", max_tv);
    out.put_f("max_clements_error", max_cl);
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Input {
    /// Equal superposition of every N-particle configuration.
    #[default]
    Uniform,
    /// One particle in each of the first N even modes.
    Standard,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LossParams {
    n: usize,
    m: usize,
    instances: usize,
    /// MΓ_tbτ.
    m_gamma_tau: f64,
    /// Γ_bgτ.
    gamma_bg_tau: f64,
    input: Input,
}

impl Default for LossParams {
    fn default() -> Self {
        Self { n: 3, m: 9, instances: 30, m_gamma_tau: 1.0, gamma_bg_tau: 0.0, input: Input::Uniform }
    }
}

/// Exact non-Hermitian circuit evolution against the weak-loss bounds and the strong-loss
/// step model.
pub fn bs_loss(params: &Map<String, Value>, ctx: &Ctx) -> CliResult<Outcome> {
    let p: LossParams = parse_params(params)?;
    if p.instances == 0 {
        return Err(config_err("params: instances must be >= 1"));
    }
    let loss = LossModel { gamma_bg: p.gamma_bg_tau, gamma_tb: p.m_gamma_tau / p.m as f64, tau: 1.0 };
    loss.validate()?;
    let space = FockSpace::new(p.n, p.m)?;
    let psi0 = match p.input {
        Input::Uniform => space.uniform_state(),
        Input::Standard => space.basis_state(&FockConfig::standard_input(p.n, p.m)?)?,
    };
    let mut inst = Table::new("instances", &["instance", "seed", "survival", "fidelity"]);
    let mut steps = vec![0.0; p.m];
    let (mut surv, mut fid) = (0.0, 0.0);
    for k in 0..p.instances {
        let seed = child_seed(ctx.seed, k as u64);
        let prog = clements_decompose(&haar_unitary(p.m, seed)?)?;
        let run = lossy_evolution(&prog, &loss, &space, &psi0)?;
        for (a, b) in steps.iter_mut().zip(&run.step_survival) {
            *a += b / p.instances as f64;
        }
        surv += run.survival / p.instances as f64;
        fid += run.fidelity / p.instances as f64;
        inst.push(vec![k.to_string(), seed.to_string(), fmt(run.survival), fmt(run.fidelity)]);
    }
    let inf = |rate: f64| if rate > 0.0 { 1.0 / rate } else { f64::INFINITY };
    let (tau_bg, tau_tb) = (inf(loss.gamma_bg), inf(loss.gamma_tb));
    let step = |d| survival_step(p.n, p.m, loss.tau, tau_bg, tau_tb, Occupancy::Exact, d);
    let (alg, exp) = (step(Decay::Algebraic)?, step(Decay::Exponential)?);
    let mut st = Table::new("steps", &["step", "exact", "model_algebraic", "model_exponential"]);
    for (t, s) in steps.iter().enumerate() {
        st.push(vec![t.to_string(), fmt(*s), fmt(alg), fmt(exp)]);
    }
    let model = alg.powi(p.m as i32);
    let bounds = weak_loss_bounds(p.n, p.m, &loss)?;
    let mut out = Outcome { tables: vec![inst, st], ..Default::default() };
    out.put_f("mean_survival", surv);
    out.put_f("mean_fidelity", fid);
    out.put_f("model_survival", model);
    out.put_f("relative_error", (model / surv - 1.0).abs());
    out.put_f("worst_step_error", steps.iter().map(|s| (s / alg - 1.0).abs()).fold(0.0, f64::max));
    // the expansions are meaningless once MΓτ leaves the weak-loss regime
    let bound = |x: f64| if bounds.outside_regime { f64::NAN } else { x };
    out.put_f("survival_lower_bound", bound(bounds.survival));
    out.put_f("fidelity_lower_bound", bound(bounds.fidelity));
    out.put("weak_loss_regime", !bounds.outside_regime);
    Ok(out)
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum AtomicSet {
    Conservative,
    #[default]
    StateOfTheArt,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PhotonicSet {
    Current,
    #[default]
    Best,
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum OccupancyName {
    #[default]
    Poisson,
    Exact,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RateInputs {
    n_min: usize,
    n_max: usize,
    atomic: AtomicSet,
    /// Two-body lifetime override (s).
    tau_tb: Option<f64>,
    photonic: PhotonicSet,
    /// Fraction of photons allowed to be lost.
    loss_fraction: f64,
    /// Classical cost constant (s).
    a_tilde: f64,
    occupancy: OccupancyName,
}

impl Default for RateInputs {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 60,
            atomic: AtomicSet::StateOfTheArt,
            tau_tb: None,
            photonic: PhotonicSet::Best,
            loss_fraction: 0.0,
            a_tilde: 3e-15,
            occupancy: OccupancyName::Poisson,
        }
    }
}

pub fn bs_rates(params: &Map<String, Value>, _ctx: &Ctx) -> CliResult<Outcome> {
    let p: RateInputs = parse_params(params)?;
    if p.n_min == 0 || p.n_max < p.n_min {
        return Err(config_err("params: need 1 <= n_min <= n_max"));
    }
    let mut atomic = match p.atomic {
        AtomicSet::Conservative => AtomicRateParams::conservative(),
        AtomicSet::StateOfTheArt => AtomicRateParams::state_of_the_art(),
    };
    if let Some(t) = p.tau_tb {
        atomic.tau_tb = t;
    }
    let photonic = match p.photonic {
        PhotonicSet::Current => PhotonicRateParams::current(),
        PhotonicSet::Best => PhotonicRateParams::best(),
    }
    .with_loss(p.loss_fraction);
    let occupancy = match p.occupancy {
        OccupancyName::Poisson => Occupancy::Poisson,
        OccupancyName::Exact => Occupancy::Exact,
    };
    let params = RateParams { atomic, photonic, a_tilde: p.a_tilde, occupancy };
    let rows = rate_race(p.n_min..=p.n_max, &params)?;
    let mut t = Table::new("rates", &["N", "R_atomic", "R_photonic", "R_classical", "R_classical_lossy"]);
    for r in &rows {
        t.push(vec![r.n.to_string(), fmt(r.atomic), fmt(r.photonic), fmt(r.classical), fmt(r.classical_lossy)]);
    }
    let mut out = Outcome { tables: vec![t], ..Default::default() };
    let cross = |d| crossover(&rows, d).map_or(Value::Null, |n| num(n as f64));
    out.put("crossover_atomic", cross(Device::Atomic));
    out.put("crossover_photonic", cross(Device::Photonic));
    Ok(out)
}
