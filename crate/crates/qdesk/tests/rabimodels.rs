use approx::assert_abs_diff_eq;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use qdesk::consts::TWO_PI;
use qdesk::dynamics::StepControl;
use qdesk::hilbert::{coherent_state, ladder_ops, number_op, sigma_minus, sigma_plus, sigma_x, sigma_z, tensor, thermal_state};
use qdesk::rabimodels::*;
use qdesk::{DensityMatrix, Operator, StateVector};
use std::f64::consts::PI;

const E: usize = 0;
const G: usize = 1;

fn basis(q: usize, n: usize, fock: usize) -> StateVector {
    StateVector::product_basis(&[2, fock], &[q, n]).unwrap()
}

fn evolve(h: &Operator, psi: &StateVector, times: &[f64]) -> Vec<StateVector> {
    Spectral::new(h).unwrap().evolve(psi, times).unwrap()
}

fn pop(psi: &StateVector, q: usize, n: usize) -> f64 {
    qubit_fock_populations(psi)[q][n]
}

/// ω₀σ_z/2 + ωa†a + γa†aσ_z + gσ_x(a + a†) assembled from tensor products.
fn qrs_oracle(p: &RabiStarkParams) -> Operator {
    let d = p.fock;
    let (a, ad) = ladder_ops::<f64>(d).unwrap();
    let id2 = Operator::identity(&[2]);
    let idf = Operator::identity(&[d]);
    let sz = sigma_z::<f64>();
    let n = number_op::<f64>(d);
    tensor(&[sz.scale_re(p.omega0 / 2.0), idf]).unwrap()
        .add(&tensor(&[id2, n.scale_re(p.omega)]).unwrap())
        .add(&tensor(&[sz.scale_re(p.gamma), n]).unwrap())
        .add(&tensor(&[sigma_x::<f64>().scale_re(p.g), a.add(&ad)]).unwrap())
}

#[test]
fn rabi_stark_matches_tensor_construction() {
    let p = RabiStarkParams::new(0.83, 1.0, -0.27, 0.11).with_fock(15);
    let h = rabi_stark_hamiltonian(&p).unwrap();
    assert!(h.is_hermitian(1e-15));
    assert!(h.max_abs_diff(&qrs_oracle(&p)) < 1e-12);
}

#[test]
fn rabi_stark_diagonal_limits() {
    let p = RabiStarkParams::new(0.7, 1.0, 0.0, 0.0).with_fock(10);
    let h = rabi_stark_hamiltonian(&p).unwrap();
    for n in 0..10 {
        assert_abs_diff_eq!(h.get(n, n).re, 0.35 + n as f64, epsilon = 1e-14);
        assert_abs_diff_eq!(h.get(10 + n, 10 + n).re, -0.35 + n as f64, epsilon = 1e-14);
    }
    let p = RabiStarkParams::new(0.7, 1.0, 0.3, 0.0).with_fock(10);
    let h = rabi_stark_hamiltonian(&p).unwrap();
    for n in 0..10 {
        let nf = n as f64;
        assert_abs_diff_eq!(h.get(n, n).re, 1.3 * nf + 0.35, epsilon = 1e-14);
        assert_abs_diff_eq!(h.get(10 + n, 10 + n).re, 0.7 * nf - 0.35, epsilon = 1e-14);
    }
    let off: f64 = (0..20).flat_map(|r| (0..20).map(move |c| (r, c))).filter(|(r, c)| r != c).map(|(r, c)| h.get(r, c).norm()).sum();
    assert_eq!(off, 0.0);
    assert!(p.below_collapse());
    assert!(!RabiStarkParams::new(0.0, 1.0, 1.2, 0.1).below_collapse());
}

#[test]
fn one_photon_resonance_conditions() {
    let p = RabiStarkParams::new(0.4, 1.0, 0.0, 0.02);
    for n in 0..6 {
        assert_abs_diff_eq!(one_photon_resonances(&p, n).1, 0.6, epsilon = 1e-15);
    }
    let gamma = -0.25;
    for n in 0..4 {
        let omega0 = 1.0 - gamma * (2 * n + 1) as f64;
        let p = RabiStarkParams::new(omega0, 1.0, gamma, 0.02);
        assert_abs_diff_eq!(one_photon_resonances(&p, n).1, 0.0, epsilon = 1e-15);
        assert!(one_photon_resonances(&p, n + 1).1.abs() > 0.4);
    }
}

#[test]
fn selected_doublet_exchanges_at_one_photon_rate() {
    let (gamma, g, n0) = (-0.25, 0.02, 2);
    let p = RabiStarkParams::new(1.0 - gamma * 5.0, 1.0, gamma, g).with_fock(30);
    let h = rabi_stark_hamiltonian(&p).unwrap();
    let t = PI / (2.0 * g * 3f64.sqrt());
    let resonant = evolve(&h, &basis(E, n0, 30), &[t]).pop().unwrap();
    assert!(pop(&resonant, G, 3) > 0.95, "P(g,3) = {}", pop(&resonant, G, 3));
    let spectator = evolve(&h, &basis(E, 0, 30), &[t]).pop().unwrap();
    assert!(pop(&spectator, E, 0) > 0.95);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unselected_doublets_stay_closed(g in 0.005f64..0.05, n0 in 0usize..4, gamma in prop_oneof![Just(-0.25), Just(0.2)]) {
        let fock = 20;
        let p = RabiStarkParams::new(1.0 - gamma * (2 * n0 + 1) as f64, 1.0, gamma, g).with_fock(fock);
        let h = rabi_stark_hamiltonian(&p).unwrap();
        let tmax = PI / (2.0 * p.coupling(n0));
        let times: Vec<f64> = (0..=40).map(|i| tmax * i as f64 / 40.0).collect();
        for n in (0..6).filter(|&n| n != n0) {
            for s in evolve(&h, &basis(E, n, fock), &times) {
                let leak = 1.0 - pop(&s, E, n) - pop(&s, G, n + 1);
                prop_assert!(leak < 0.05, "doublet {n} leaked {leak}");
            }
        }
    }
}

#[test]
fn second_order_shift_limits() {
    let p = RabiStarkParams::new(0.3, 1.0, -0.4, 0.05);
    let (de, dg) = second_order_shifts(&p, 0).unwrap();
    let (dp, dm) = one_photon_resonances(&p, 0);
    assert_abs_diff_eq!(de, -0.05f64.powi(2) / dm, epsilon = 1e-15);
    assert_abs_diff_eq!(dg, -0.05f64.powi(2) / dp, epsilon = 1e-15);
    let small = RabiStarkParams { g: 1e-3, ..p.clone() };
    let smaller = RabiStarkParams { g: 5e-4, ..p.clone() };
    let (a, _) = second_order_shifts(&small, 3).unwrap();
    let (b, _) = second_order_shifts(&smaller, 3).unwrap();
    assert_abs_diff_eq!(a / b, 4.0, epsilon = 1e-12);
    let resonant = RabiStarkParams::new(1.0 - (-0.4) * 7.0, 1.0, -0.4, 0.05);
    assert!(second_order_shifts(&resonant, 3).is_err());
}

#[test]
fn k_photon_detunings() {
    let p = RabiStarkParams::new(0.37, 1.0, -0.4, 0.05);
    let r = k_photon_resonance(&p, 3, 5).unwrap();
    assert_abs_diff_eq!(r.detuning_of(Branch::Plus), 3.0 + 0.37 + 13.0 * -0.4, epsilon = 1e-14);
    assert_abs_diff_eq!(k_photon_qubit_frequency(1.0, -0.4, 3, 5, Branch::Plus), 2.2, epsilon = 1e-14);
    assert_abs_diff_eq!(k_photon_qubit_frequency(1.0, 0.9, 5, 2, Branch::Minus), -3.1, epsilon = 1e-14);
    for (n0, w) in [(3, -4.9), (4, -6.7)] {
        assert_abs_diff_eq!(k_photon_qubit_frequency(1.0, 0.9, 5, n0, Branch::Minus), w, epsilon = 1e-12);
    }
    for k in [3, 5, 7] {
        for b in [Branch::Plus, Branch::Minus] {
            let w0 = k_photon_qubit_frequency(1.0, 0.3, k, 2, b);
            let at = RabiStarkParams::new(w0, 1.0, 0.3, 0.05);
            assert_abs_diff_eq!(k_photon_detuning(&at, k, 2, b), 0.0, epsilon = 1e-12);
        }
    }
    assert!(k_photon_resonance(&p, 4, 1).is_err());
    assert!(k_photon_resonance(&p, 1, 1).is_err());
}

#[test]
fn k_photon_rabi_reduces_to_third_order_form() {
    for (w0, gamma, n) in [(0.37, -0.4, 5), (-1.3, 0.25, 0), (2.9, 0.6, 3)] {
        let p = RabiStarkParams::new(w0, 1.0, gamma, 0.07);
        let r = k_photon_resonance(&p, 3, n).unwrap();
        let direct = third_order_rabi(&p, n);
        for i in 0..2 {
            assert_abs_diff_eq!(r.rabi[i] / direct[i], 1.0, epsilon = 1e-12);
        }
    }
    // Ω^(5) ∝ g⁵
    let p = RabiStarkParams::new(-3.1, 1.0, 0.9, 0.1);
    let q = RabiStarkParams { g: 0.05, ..p.clone() };
    let ratio = k_photon_resonance(&p, 5, 2).unwrap().rabi[1] / k_photon_resonance(&q, 5, 2).unwrap().rabi[1];
    assert_abs_diff_eq!(ratio, 32.0, epsilon = 1e-10);
}

#[test]
fn degenerate_path_is_rejected() {
    // δ_2⁻ = 0 makes the first intermediate divisor of the five-photon path vanish.
    let p = RabiStarkParams::new(1.0 - 0.9 * 5.0, 1.0, 0.9, 0.1);
    assert!(matches!(k_photon_resonance(&p, 5, 2), Err(qdesk::Error::NumericalGuard(_))));
}

#[test]
fn corrected_detuning_tracks_three_photon_peak() {
    let base = RabiStarkParams::new(0.0, 1.0, -0.4, 0.05).with_fock(24);
    let pk = k_photon_peak(&base, 3, 5, Branch::Plus, (-0.1, 0.1), 401).unwrap();
    let corrected = |w0: f64| k_photon_resonance(&RabiStarkParams { omega0: w0, ..base.clone() }, 3, 5).unwrap().corrected.unwrap()[0];
    let root = qdesk::special::bisect(corrected, pk.estimate - 0.1, pk.estimate + 0.1, 1e-12).unwrap();
    assert!((pk.peak - root).abs() < 1e-3, "peak {} corrected {}", pk.peak, root);
    assert!((pk.peak - pk.estimate).abs() > 10.0 * (pk.peak - root).abs());
    assert!(pk.height > 0.9);
}

#[test]
fn five_photon_resonance_is_selective() {
    let fock = 30;
    let p = RabiStarkParams::new(-3.227, 1.0, 0.9, 0.1).with_fock(fock);
    let h = rabi_stark_hamiltonian(&p).unwrap();
    let rabi = k_photon_resonance(&RabiStarkParams::new(-3.1, 1.0, 0.9, 0.1), 5, 2).unwrap().rabi[1];
    let t = PI / (2.0 * rabi.abs());
    let times: Vec<f64> = (0..=60).map(|i| 2.0 * t * i as f64 / 60.0).collect();
    let sel = evolve(&h, &basis(G, 7, fock), &times);
    let best = sel.iter().map(|s| pop(s, E, 2)).fold(0.0, f64::max);
    assert!(best > 0.5, "max P(e,2) = {best}");
    let off = evolve(&h, &basis(G, 8, fock), &times);
    assert!(off.iter().all(|s| pop(s, E, 3) < 0.05 && pop(s, G, 8) > 0.9));
}

#[test]
fn locate_peak_interpolates_parabola() {
    let scan: Vec<(f64, f64)> = (0..11).map(|i| {
        let x = i as f64 * 0.1;
        (x, 1.0 - (x - 0.537).powi(2))
    }).collect();
    assert_abs_diff_eq!(locate_peak(&scan).unwrap(), 0.537, epsilon = 1e-12);
    assert!(locate_peak(&scan[..2]).is_err());
}

#[test]
fn ion_mapping_reference_values() {
    let nu = TWO_PI * 4.98e6;
    let w = TWO_PI * 1.5e3;
    let gamma = -0.4 * w;
    let target = RabiStarkParams { omega0: w - gamma * 5.0, omega: w, gamma, g: 0.05 * w, fock: 12 };
    let cfg = IonDriveConfig::for_rabi_stark(nu, 0.1, &target).unwrap();
    assert_abs_diff_eq!(cfg.omega_s / TWO_PI, 120e3, epsilon = 1e-6);
    assert_eq!(cfg.phi_s, StarkPhase::Zero);
    assert_abs_diff_eq!(cfg.omega_dd / TWO_PI / 1e3, 114.9, epsilon = 0.05);
    let map = ion_to_rabistark(&cfg).unwrap();
    assert_abs_diff_eq!(map.params.gamma.abs() / TWO_PI, 600.0, epsilon = 1e-9);
    for (a, b) in [(map.params.omega0, target.omega0), (map.params.omega, target.omega), (map.params.g, target.g)] {
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * b.abs());
    }
    assert!(map.warnings.is_empty());

    let quoted = IonDriveConfig { omega_r: TWO_PI * 2.94e3, ..cfg.clone() };
    assert_abs_diff_eq!(quoted.matched_blue() / TWO_PI / 1e3, 3.08, epsilon = 0.01);
    assert!(ion_to_rabistark(&IonDriveConfig { omega_b: TWO_PI * 3.3e3, ..quoted }).is_err());

    let no_stark = IonDriveConfig::for_rabi_stark(nu, 0.1, &RabiStarkParams { gamma: 0.0, ..target.clone() }).unwrap();
    assert_eq!(ion_to_rabistark(&no_stark).unwrap().params.gamma, 0.0);

    let fast = IonDriveConfig { omega_s: 0.3 * nu, omega_r: 0.0, omega_b: 0.0, ..cfg };
    assert!(!ion_to_rabistark(&fast).unwrap().warnings.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ion_mapping_round_trips(w0 in -5.0f64..5.0, gamma in -0.9f64..0.9, g in 0.01f64..0.5, eta in 0.02f64..0.2) {
        let w = TWO_PI * 2e3;
        let target = RabiStarkParams { omega0: w0 * w, omega: w, gamma: gamma * w, g: g * w, fock: 10 };
        let cfg = IonDriveConfig::for_rabi_stark(TWO_PI * 5e6, eta, &target).unwrap();
        let back = ion_to_rabistark(&cfg).unwrap().params;
        prop_assert!((back.omega0 - target.omega0).abs() < 1e-8 * w);
        prop_assert!((back.gamma - target.gamma).abs() < 1e-8 * w);
        prop_assert!((back.g - target.g).abs() < 1e-8 * w);
        prop_assert!((back.omega - target.omega).abs() < 1e-8 * w);
    }
}

#[test]
fn ion_reproduces_selective_one_photon_exchange() {
    let w = TWO_PI * 1.5e3;
    let gamma = -0.4 * w;
    let target = RabiStarkParams { omega0: w - gamma * 5.0, omega: w, gamma, g: 0.05 * w, fock: 12 };
    let cfg = IonDriveConfig::for_rabi_stark(TWO_PI * 4.98e6, 0.1, &target).unwrap();
    let tmax = PI / (2.0 * target.g * 3f64.sqrt());
    let times: Vec<f64> = (0..=10).map(|i| tmax * i as f64 / 10.0).collect();
    let r = simulate_ion_vs_model(&cfg, &times, (true, 2), &[(true, 2), (false, 3)], cfg.step_control()).unwrap();
    assert!(r.max_deviation < 0.05, "deviation {}", r.max_deviation);
    assert!(r.ion[10][1] > 0.95, "P(−,3) = {}", r.ion[10][1]);
}

#[test]
fn ion_and_model_static_without_drives() {
    let target = RabiStarkParams { omega0: 0.0, omega: 0.0, gamma: 0.0, g: 0.0, fock: 6 };
    let cfg = IonDriveConfig { delta_r: 0.0, delta_b: 0.0, omega_dd: 0.0, ..IonDriveConfig::for_rabi_stark(TWO_PI * 4.98e6, 0.1, &target).unwrap() };
    let times = [0.0, 1e-5, 2e-5];
    let r = simulate_ion_vs_model(&cfg, &times, (true, 2), &[(true, 2)], cfg.step_control()).unwrap();
    for i in 0..3 {
        assert_abs_diff_eq!(r.ion[i][0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.model[i][0], 1.0, epsilon = 1e-12);
    }
}

#[test]
fn ion_reproduces_three_photon_onset() {
    let w = TWO_PI * 1.5e3;
    let target = RabiStarkParams { omega0: -2.4385 * w, omega: w, gamma: -0.1 * w, g: 0.3 * w, fock: 16 };
    let cfg = IonDriveConfig::for_rabi_stark(TWO_PI * 4.98e6, 0.05, &target).unwrap();
    assert_abs_diff_eq!(cfg.omega_r / TWO_PI / 1e3, 35.2, epsilon = 0.05);
    assert_abs_diff_eq!(cfg.omega_b / TWO_PI / 1e3, 36.9, epsilon = 0.05);
    assert_abs_diff_eq!(cfg.omega_dd / TWO_PI / 1e3, 123.5, epsilon = 0.05);
    let times: Vec<f64> = (0..=10).map(|i| 3e-3 * i as f64 / 10.0).collect();
    let r = simulate_ion_vs_model(&cfg, &times, (true, 3), &[(true, 3), (false, 0)], cfg.step_control()).unwrap();
    assert!(r.max_deviation < 0.05, "deviation {}", r.max_deviation);
    assert!(r.ion[10][1] > 0.15 && r.model[10][1] > 0.15);
}

/// Associated Laguerre L_n^(1)(x) by its three-term recurrence; f₁ = e^{−x/2} L_n^(1)(x)/(n+1).
fn f1_laguerre(n: usize, eta: f64) -> f64 {
    let x = eta * eta;
    let (mut prev, mut cur) = (1.0, 2.0 - x);
    if n == 0 {
        return (-x / 2.0).exp();
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 2.0 - x) * cur - (kf + 1.0) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    (-x / 2.0).exp() * cur / (n + 1) as f64
}

proptest! {
    #[test]
    fn f1_matches_laguerre_recurrence(n in 0usize..=60, eta in 0.0f64..=1.0) {
        prop_assert!((f1_nonlinear(n, eta) - f1_laguerre(n, eta)).abs() < 1e-12);
    }
}

#[test]
fn f1_reference_zeros() {
    for n in 0..30 {
        assert_eq!(f1_nonlinear(n, 0.0), 1.0);
    }
    for (n, eta) in [(7, 0.67898), (10, 0.57838), (17, 0.4518)] {
        assert_abs_diff_eq!(f1_first_zero(n).unwrap(), eta, epsilon = 5e-4);
    }
    assert!(f1_nonlinear(17, 0.4518).abs() < 1e-3);
    let root = f1_zero(17, (0.4, 0.5)).unwrap();
    assert!(f1_nonlinear(17, root).abs() < 1e-10);
    assert!(f1_zero(17, (0.1, 0.2)).is_err());
    let changes: Vec<usize> = (1..60).filter(|&n| f1_nonlinear(n, 0.5).signum() != f1_nonlinear(n - 1, 0.5).signum()).collect();
    assert_eq!(changes, vec![14, 49]);
    assert_eq!(f1_barrier(0.67898, 30, BARRIER_TOL), Some(7));
}

#[test]
fn nqrm_linear_limit_is_qrm() {
    let p = NQRMParams { omega0: 0.4, omega: 1.0, g: 0.3, eta: 0.0, fock: 12 };
    let h = nqrm_hamiltonian(&p).unwrap();
    let (a, ad) = ladder_ops::<f64>(12).unwrap();
    let spin = sigma_plus::<f64>().sub(&sigma_minus()).scale(C::new(0.0, 0.3));
    let qrm = tensor(&[sigma_z::<f64>().scale_re(0.2), Operator::identity(&[12])]).unwrap()
        .add(&tensor(&[Operator::identity(&[2]), number_op(12)]).unwrap())
        .add(&tensor(&[spin, a.add(&ad)]).unwrap());
    assert!(h.max_abs_diff(&qrm) < 1e-12);
    let nl = nqrm_hamiltonian(&NQRMParams { eta: 0.4, ..p }).unwrap();
    assert!(nl.is_hermitian(1e-14));
}

#[test]
fn nqrm_barrier_blocks_fock_ladder() {
    let p = NQRMParams::new(0.0, 1.0, 4.0, 0.67898);
    assert_eq!(p.fock, 17);
    let h = nqrm_hamiltonian(&p).unwrap();
    let tmax = 20.0 * TWO_PI / p.g;
    let times: Vec<f64> = (0..=400).map(|i| tmax * i as f64 / 400.0).collect();
    let states = evolve(&h, &basis(G, 0, p.fock), &times);
    assert!(states.iter().all(|s| population_above(s, 7) < 1e-6));
    assert!(states.iter().any(|s| population_above(s, 4) > 0.05));
}

#[test]
fn nqrm_filters_coherent_tail() {
    let p = NQRMParams { fock: 30, ..NQRMParams::new(0.0, 1.0, 3.7, 0.57838) };
    let h = nqrm_hamiltonian(&p).unwrap();
    let psi0 = StateVector::product_basis(&[2], &[G]).unwrap().tensor(&coherent_state(C::new(1.0, 0.0), p.fock).unwrap());
    let initial = population_above(&psi0, 10);
    let tmax = 20.0 * TWO_PI / p.g;
    let times: Vec<f64> = (0..=400).map(|i| tmax * i as f64 / 400.0).collect();
    for s in evolve(&h, &psi0, &times) {
        assert!((population_above(&s, 10) - initial).abs() < 1e-6 * p.g * tmax);
    }
}

#[test]
fn nonlinear_jc_loses_revivals() {
    let (g, alpha) = (1.0, 30f64.sqrt());
    let tr = TWO_PI * alpha / g;
    let times: Vec<f64> = (0..=3000).map(|i| 1.2 * tr * i as f64 / 3000.0).collect();
    let lin = jc_sigma_z(g, 0.0, alpha, &times, 80).unwrap();
    let non = jc_sigma_z(g, 0.5, alpha, &times, 80).unwrap();
    let env = |v: &[f64], a: f64, b: f64| times.iter().zip(v).filter(|(t, _)| **t >= a * tr && **t <= b * tr).map(|(_, x)| x.abs()).fold(0.0, f64::max);
    assert!(env(&lin, 0.2, 0.7) < 0.01, "collapse {}", env(&lin, 0.2, 0.7));
    assert!(env(&lin, 0.8, 1.2) > 0.5, "revival {}", env(&lin, 0.8, 1.2));
    assert!(env(&non, 0.8, 1.2) < 0.5, "nonlinear {}", env(&non, 0.8, 1.2));
}

fn ground_with(motion: &DensityMatrix) -> DensityMatrix {
    StateVector::product_basis(&[2], &[G]).unwrap().to_density().tensor(motion)
}

#[test]
fn pump_fills_the_barrier_state() {
    let eta = f1_first_zero(5).unwrap();
    let fock = 10;
    let rho0 = ground_with(&thermal_state(0.3, fock).unwrap());
    let r = fock_state_pump(eta, 1.0, 2.0, &rho0, 100.0 * TWO_PI, 50, StepControl::default()).unwrap();
    assert_eq!(r.barrier, 5);
    assert!(*r.target_population.last().unwrap() > 0.99);
    assert!(r.convergence_time.is_some());
    let above0 = r.above_barrier[0];
    assert!(r.above_barrier.iter().all(|&a| (a - above0).abs() < 1e-8));
}

#[test]
fn pump_without_decay_only_oscillates() {
    let eta = f1_first_zero(5).unwrap();
    let rho0 = basis(G, 0, 10).to_density();
    let r = fock_state_pump(eta, 1.0, 0.0, &rho0, 20.0, 40, StepControl::default()).unwrap();
    for p in &r.phonon_populations {
        assert!(p[2..].iter().sum::<f64>() < 1e-12);
    }
    assert!(r.convergence_time.is_none());
}

#[test]
fn barrier_state_is_dark() {
    let eta = f1_first_zero(5).unwrap();
    let rho0 = basis(G, 5, 10).to_density();
    let r = fock_state_pump(eta, 1.0, 2.0, &rho0, 50.0, 10, StepControl::default()).unwrap();
    assert!(r.target_population.iter().all(|&p| (p - 1.0).abs() < 1e-8));
}

#[test]
fn pump_rejects_weight_above_barrier() {
    let eta = f1_first_zero(5).unwrap();
    let rho0 = ground_with(&thermal_state(2.0, 40).unwrap());
    assert!(fock_state_pump(eta, 1.0, 2.0, &rho0, 1.0, 1, StepControl::default()).is_err());
}
