#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use qdesk::dynamics::*;
use qdesk::hilbert::*;
use qdesk::{Operator, StateVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force H(t) = Σ_j σ_j^z Σ_m η_jm ν_m f_j(t)(a_m e^{−iν_m t} + h.c.).
pub fn sz_boson_hamiltonian(
    f: &[ModulationFunction<f64>],
    etas: &DMatrix<f64>,
    nus: &[f64],
    fock: &[usize],
) -> TimeDependentHamiltonian<f64> {
    let nq = f.len();
    let mut dims = vec![2; nq];
    dims.extend_from_slice(fock);
    let mut h = TimeDependentHamiltonian::new(&dims);
    let mut breaks = Vec::new();
    for (j, fj) in f.iter().enumerate() {
        breaks.extend(fj.switch_times());
        let sz = sigma_z::<f64>().embed(j, &dims).unwrap();
        for (m, &nu) in nus.iter().enumerate() {
            let (a, _) = ladder_ops::<f64>(fock[m]).unwrap();
            let op = sz.mul(&a.embed(nq + m, &dims).unwrap());
            let eta = etas[(j, m)];
            let fj = fj.clone();
            let coeff = Coefficient::func(move |t: f64| C::from_polar(eta * nu * fj.value(t), -nu * t));
            h = h.add_term_hc(coeff, &op).unwrap();
        }
    }
    h.with_breakpoints(breaks)
}

/// Random ±1 train with `n` flips in (0, t).
pub fn random_train(rng: &mut ChaCha8Rng, n: usize, t: f64) -> ModulationFunction<f64> {
    let mut times: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..t)).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ModulationFunction::sign_train(&times).unwrap()
}

/// Fidelity between the closed-form propagator and direct integration for one random instance.
pub fn magnus_vs_integration(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = 12.0;
    let nus = [1.0, 3f64.sqrt()];
    let f = vec![random_train(&mut rng, 20, t), random_train(&mut rng, 20, t)];
    let e1 = rng.gen_range(0.02..0.04);
    let e2 = e1 / 27f64.powf(0.25);
    let etas = DMatrix::from_row_slice(2, 2, &[e1, -e2, e1, e2]);
    let fock = [8, 8];
    let h = sz_boson_hamiltonian(&f, &etas, &nus, &fock);
    let plus = StateVector::normalize(vec![2], nalgebra::DVector::from_vec(vec![C::new(1.0, 0.0), C::new(1.0, 0.0)])).unwrap();
    let vac = StateVector::basis(&[8], 0).unwrap();
    let one = StateVector::basis(&[8], 1).unwrap();
    let mode2 = StateVector::normalize(vec![8], vac.data() + one.data() * C::new(0.0, 0.5)).unwrap();
    let psi0 = plus.tensor(&plus).tensor(&vac).tensor(&mode2);
    let ctl = StepControl { max_phase: 0.02, max_step: None };
    let direct = propagate_state(&h, &psi0, 0.0, t, ctl).unwrap();
    let out = magnus_sz_propagator(&f, &etas, &nus, t).unwrap();
    let u: Operator = magnus_unitary(&out, &fock).unwrap();
    let closed = u.apply(&psi0).unwrap();
    state_fidelity(&direct, &closed).unwrap()
}
