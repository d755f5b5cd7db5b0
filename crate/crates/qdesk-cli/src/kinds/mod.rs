//! Experiment kinds. Each takes its parameter table and returns tables plus a summary.

mod boson;
mod gates;
mod nv;
mod rabi;

use crate::config::Kind;
use crate::error::CliResult;
use crate::output::Outcome;
use crate::Ctx;
use serde_json::{Map, Value};

pub fn run_kind(kind: Kind, params: &Map<String, Value>, ctx: &Ctx) -> CliResult<Outcome> {
    match kind {
        Kind::PulsedGate => gates::pulsed_gate(params, ctx),
        Kind::ContinuousGate => gates::continuous_gate(params, ctx),
        Kind::RabiStarkSpectrum => rabi::rabi_stark_spectrum(params, ctx),
        Kind::NqrmRun => rabi::nqrm_run(params, ctx),
        Kind::FockPump => rabi::fock_pump(params, ctx),
        Kind::BsDistribution => boson::bs_distribution(params, ctx),
        Kind::BsLoss => boson::bs_loss(params, ctx),
        Kind::BsRates => boson::bs_rates(params, ctx),
        Kind::NvSpectrum => nv::nv_spectrum(params, ctx),
        Kind::PulseDesign => nv::pulse_design(params, ctx),
    }
}
