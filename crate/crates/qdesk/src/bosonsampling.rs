//! Atomic boson sampling in spin-dependent optical lattices.
//!
//! Mode convention: an M×M [`ModeUnitary`] `U` acts as `Û a†_j Û† = Σ_i U_ij a†_i`, so a
//! single boson entering mode `j` leaves in mode `i` with amplitude `U_ij`. Modes are
//! 0-based; even modes are the ↑ states and odd modes the ↓ states. Step `t` (0-based)
//! couples the pairs `(m, m+1)` with `m ≡ t (mod 2)`: even steps use the on-site
//! pairing, odd steps the shifted lattice.

use crate::error::{guard, invalid};
use crate::hilbert::Operator as Op;
use crate::{Result, StateVector, C64};
use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4, PI};

pub const UNITARY_TOL: f64 = 1e-10;
/// Ryser cost grows as 2^N·N; beyond this the distribution sums are impractical anyway.
pub const PERMANENT_MAX: usize = 20;
pub const FOCK_BASIS_LIMIT: usize = 200_000;
/// Highest on-site occupancy resolved by the exact step model.
pub const MAX_MULTIPLET: usize = 4;
/// Weak-loss expansions are only trusted below this value of MΓ_tbτ.
pub const WEAK_LOSS_WARN: f64 = 0.3;

/// M×M interferometer matrix, unitary to [`UNITARY_TOL`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModeUnitary {
    data: DMatrix<C64>,
}

impl ModeUnitary {
    pub fn new(data: DMatrix<C64>) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(invalid("mode unitary must be square and nonempty"));
        }
        let m = data.nrows();
        let err = (data.adjoint() * &data - DMatrix::<C64>::identity(m, m)).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if err > UNITARY_TOL {
            return Err(invalid(format!("matrix is not unitary (deviation {err:.3e})")));
        }
        Ok(Self { data })
    }

    pub fn modes(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }
}

/// Haar-random M×M unitary: QR of a complex Ginibre matrix with the phases of `diag(R)`
/// moved into `Q`.
pub fn haar_unitary(m: usize, seed: u64) -> Result<ModeUnitary> {
    if m == 0 {
        return Err(invalid("haar_unitary needs at least one mode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DMatrix::<C64>::from_fn(m, m, |_, _| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im) / 2f64.sqrt()
    });
    let qr = z.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..m {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..m {
            q[(i, j)] *= phase;
        }
    }
    ModeUnitary::new(q)
}

/// Occupation numbers `n_1..n_M`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FockConfig {
    occupations: Vec<usize>,
}

impl FockConfig {
    pub fn new(occupations: Vec<usize>) -> Self {
        Self { occupations }
    }

    /// One boson on each ↑ mode of the first `n` sites: modes 0, 2, …, 2n−2.
    pub fn standard_input(n: usize, m: usize) -> Result<Self> {
        if n > 0 && 2 * n - 1 > m {
            return Err(invalid(format!("{n} bosons do not fit one per site in {m} modes")));
        }
        let mut occ = vec![0; m];
        for s in 0..n {
            occ[2 * s] = 1;
        }
        Ok(Self { occupations: occ })
    }

    pub fn occupations(&self) -> &[usize] {
        &self.occupations
    }

    pub fn particles(&self) -> usize {
        self.occupations.iter().sum()
    }

    pub fn modes(&self) -> usize {
        self.occupations.len()
    }

    pub fn is_collision_free(&self) -> bool {
        self.occupations.iter().all(|&n| n <= 1)
    }

    /// Mode list with multiplicity, e.g. (2,0,1) → [0,0,2].
    fn mode_list(&self) -> Vec<usize> {
        self.occupations.iter().enumerate().flat_map(|(m, &n)| std::iter::repeat(m).take(n)).collect()
    }
}

/// Two-mode coupler on modes `(mode, mode+1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupler {
    pub mode: usize,
    pub theta: f64,
    pub phi: f64,
}

impl Coupler {
    /// `T(θ,φ)`: φ is imprinted on the lower mode, θ rotates the pair about y.
    pub fn t_matrix(&self) -> [[C64; 2]; 2] {
        let (s, c) = (self.theta / 2.0).sin_cos();
        let ph = C64::from_polar(1.0, -self.phi);
        [[ph * c, C64::new(-s, 0.0)], [ph * s, C64::new(c, 0.0)]]
    }

    /// `T'(θ,φ) = e^{iφ/2} T(θ,φ)`, the element the lattice pulses realise.
    pub fn primed_matrix(&self) -> [[C64; 2]; 2] {
        let g = C64::from_polar(1.0, self.phi / 2.0);
        self.t_matrix().map(|row| row.map(|z| z * g))
    }
}

/// One coupler per (step, lower mode); the JSON exchange format for programs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplerRecord {
    pub step: usize,
    pub mode: usize,
    pub theta: f64,
    pub phi: f64,
}

/// Layered circuit of `T'` couplers followed by output phases: `U = D·L_{last}⋯L_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct CircuitProgram {
    modes: usize,
    layers: Vec<Vec<Coupler>>,
    output_phases: Vec<C64>,
}

impl CircuitProgram {
    /// Validates that each layer only uses pairs of its own parity and never reuses a mode.
    pub fn new(modes: usize, layers: Vec<Vec<Coupler>>, output_phases: Vec<C64>) -> Result<Self> {
        if modes == 0 || output_phases.len() != modes {
            return Err(invalid("program needs M ≥ 1 and M output phases"));
        }
        if output_phases.iter().any(|z| (z.norm() - 1.0).abs() > 1e-9) {
            return Err(invalid("output phases must have unit modulus"));
        }
        for (t, layer) in layers.iter().enumerate() {
            let mut used = vec![false; modes];
            for c in layer {
                if c.mode + 1 >= modes || c.mode % 2 != t % 2 {
                    return Err(invalid(format!("coupler on mode {} not allowed at step {t}", c.mode)));
                }
                if used[c.mode] {
                    return Err(invalid(format!("pair {} used twice at step {t}", c.mode)));
                }
                used[c.mode] = true;
            }
        }
        Ok(Self { modes, layers, output_phases })
    }

    pub fn identity(modes: usize, steps: usize) -> Result<Self> {
        Self::new(modes, vec![Vec::new(); steps], vec![C64::new(1.0, 0.0); modes])
    }

    pub fn from_records(modes: usize, steps: usize, records: &[CouplerRecord], output_phases: Vec<C64>) -> Result<Self> {
        let mut layers = vec![Vec::new(); steps];
        for r in records {
            let layer = layers.get_mut(r.step).ok_or_else(|| invalid(format!("step {} beyond {steps}", r.step)))?;
            layer.push(Coupler { mode: r.mode, theta: r.theta, phi: r.phi });
        }
        Self::new(modes, layers, output_phases)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn steps(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Vec<Coupler>] {
        &self.layers
    }

    pub fn output_phases(&self) -> &[C64] {
        &self.output_phases
    }

    pub fn coupler_count(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn records(&self) -> Vec<CouplerRecord> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(t, l)| l.iter().map(move |c| CouplerRecord { step: t, mode: c.mode, theta: c.theta, phi: c.phi }))
            .collect()
    }

    /// Mode matrix realised by the program.
    pub fn unitary(&self) -> DMatrix<C64> {
        let m = self.modes;
        let mut u = DMatrix::<C64>::identity(m, m);
        for layer in &self.layers {
            for c in layer {
                apply_left(&mut u, c.mode, &c.primed_matrix());
            }
        }
        for i in 0..m {
            let d = self.output_phases[i];
            u.row_mut(i).iter_mut().for_each(|z| *z *= d);
        }
        u
    }
}

/// Rows (m, m+1) ← t·rows.
fn apply_left(u: &mut DMatrix<C64>, m: usize, t: &[[C64; 2]; 2]) {
    for c in 0..u.ncols() {
        let (a, b) = (u[(m, c)], u[(m + 1, c)]);
        u[(m, c)] = t[0][0] * a + t[0][1] * b;
        u[(m + 1, c)] = t[1][0] * a + t[1][1] * b;
    }
}

/// Columns (m, m+1) ← columns·t†.
fn apply_right_inverse(u: &mut DMatrix<C64>, m: usize, t: &[[C64; 2]; 2]) {
    for r in 0..u.nrows() {
        let (a, b) = (u[(r, m)], u[(r, m + 1)]);
        u[(r, m)] = a * t[0][0].conj() + b * t[0][1].conj();
        u[(r, m + 1)] = a * t[1][0].conj() + b * t[1][1].conj();
    }
}

fn arg(z: C64) -> f64 {
    if z.norm() == 0.0 {
        0.0
    } else {
        z.arg()
    }
}

/// Rectangular-mesh decomposition into M(M−1)/2 `T'` couplers scheduled on at most M steps.
///
/// Lower-triangle elements are nulled alternately from the right (`U·T'^{-1}`) and the left
/// (`T'·U`); the left factors are then pushed through the residual diagonal.
pub fn clements_decompose(u: &ModeUnitary) -> Result<CircuitProgram> {
    let m = u.modes();
    let mut w = u.data().clone();
    let mut right: Vec<Coupler> = Vec::new();
    let mut left: Vec<Coupler> = Vec::new();
    for i in 0..m.saturating_sub(1) {
        if i % 2 == 0 {
            for j in 0..=i {
                let (r, c) = (m - 1 - j, i - j);
                let (a, b) = (w[(r, c)], w[(r, c + 1)]);
                let k = Coupler { mode: c, theta: 2.0 * a.norm().atan2(b.norm()), phi: arg(b) - arg(a) };
                apply_right_inverse(&mut w, c, &k.primed_matrix());
                right.push(k);
            }
        } else {
            for j in 1..=i + 1 {
                let (r, c) = (m + j - i - 2, j - 1);
                let (a, b) = (w[(r - 1, c)], w[(r, c)]);
                let k = Coupler { mode: r - 1, theta: 2.0 * b.norm().atan2(a.norm()), phi: arg(a) - arg(b) - PI };
                apply_left(&mut w, r - 1, &k.primed_matrix());
                left.push(k);
            }
        }
    }
    // w = L_k⋯L_1 · U · R_1^{-1}⋯R_n^{-1} is diagonal.
    let off = (0..m).flat_map(|r| (0..m).map(move |c| (r, c))).filter(|(r, c)| r != c).map(|(r, c)| w[(r, c)].norm()).fold(0.0, f64::max);
    if off > 1e-9 {
        return Err(guard(format!("nulling left off-diagonal residue {off:.3e}")));
    }
    let mut d: Vec<C64> = (0..m).map(|i| w[(i, i)]).collect();
    // U = L_1^{-1}⋯L_k^{-1} D R_n⋯R_1; rewrite L^{-1}·D = D'·T'(θ, φ').
    let mut pushed = Vec::with_capacity(left.len());
    for k in left.iter().rev() {
        let (d1, d2) = (d[k.mode], d[k.mode + 1]);
        let phi_new = arg(-d2 / d1);
        let nk = Coupler { mode: k.mode, theta: k.theta, phi: phi_new };
        // T'^{-1}D = e^{-iφ/2}·T^{-1}D = e^{-iφ/2} diag(−e^{iφ}d2, d2) T(θ,φ') and T = e^{-iφ'/2}T'.
        let g = C64::from_polar(1.0, -(k.phi + phi_new) / 2.0);
        d[k.mode] = -C64::from_polar(1.0, k.phi) * d2 * g;
        d[k.mode + 1] = d2 * g;
        pushed.push(nk);
    }
    // Application order: R_1 first, …, R_n, then the pushed L's from the innermost outwards.
    let mut order: Vec<Coupler> = right;
    order.extend(pushed);
    let layers = schedule(m, &order)?;
    CircuitProgram::new(m, layers, d)
}

/// Greedy parity-respecting layering that preserves the order on shared modes; padded to M.
fn schedule(m: usize, order: &[Coupler]) -> Result<Vec<Vec<Coupler>>> {
    let mut next_free = vec![0usize; m];
    let mut layers: Vec<Vec<Coupler>> = Vec::new();
    for c in order {
        let mut t = next_free[c.mode].max(next_free[c.mode + 1]);
        if t % 2 != c.mode % 2 {
            t += 1;
        }
        if layers.len() <= t {
            layers.resize(t + 1, Vec::new());
        }
        layers[t].push(*c);
        next_free[c.mode] = t + 1;
        next_free[c.mode + 1] = t + 1;
    }
    if layers.len() > m.max(1) {
        return Err(guard(format!("schedule needs {} steps for {m} modes", layers.len())));
    }
    layers.resize(m.max(1), Vec::new());
    Ok(layers)
}

/// Ryser formula with Gray-code ordering, O(2^N·N).
pub fn permanent(a: &DMatrix<C64>) -> Result<C64> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(invalid("permanent needs a square matrix"));
    }
    if n > PERMANENT_MAX {
        return Err(invalid(format!("permanent of size {n} exceeds guard {PERMANENT_MAX}")));
    }
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let mut row_sums = vec![C64::new(0.0, 0.0); n];
    let mut in_set = vec![false; n];
    let mut total = C64::new(0.0, 0.0);
    let mut gray_prev = 0usize;
    for k in 1..(1usize << n) {
        let gray = k ^ (k >> 1);
        let j = (gray ^ gray_prev).trailing_zeros() as usize;
        gray_prev = gray;
        let sign = if in_set[j] { -1.0 } else { 1.0 };
        in_set[j] = !in_set[j];
        for (i, s) in row_sums.iter_mut().enumerate() {
            *s += a[(i, j)] * sign;
        }
        let prod = row_sums.iter().fold(C64::new(1.0, 0.0), |p, &s| p * s);
        // (−1)^{n−|S|}
        if (n - gray.count_ones() as usize) % 2 == 0 {
            total += prod;
        } else {
            total -= prod;
        }
    }
    Ok(total)
}

fn factorial_product(c: &FockConfig) -> f64 {
    c.occupations().iter().map(|&n| crate::special::factorial(n as u64)).product()
}

/// |Perm(A_S)|² / (∏ n_in! ∏ n_out!), with rows of `A_S` from output modes and columns
/// from input modes, both repeated by occupation.
pub fn output_probability(u: &ModeUnitary, input: &FockConfig, output: &FockConfig) -> Result<f64> {
    if input.modes() != u.modes() || output.modes() != u.modes() {
        return Err(invalid("configuration length differs from mode count"));
    }
    if input.particles() != output.particles() {
        return Err(invalid(format!("particle number {} in, {} out", input.particles(), output.particles())));
    }
    let (rows, cols) = (output.mode_list(), input.mode_list());
    let a = DMatrix::from_fn(rows.len(), cols.len(), |i, j| u.get(rows[i], cols[j]));
    Ok(permanent(&a)?.norm_sqr() / (factorial_product(input) * factorial_product(output)))
}

/// Probabilities of every output in `space` order.
pub fn output_distribution(u: &ModeUnitary, input: &FockConfig, space: &FockSpace) -> Result<Vec<f64>> {
    if space.modes() != u.modes() || space.particles() != input.particles() {
        return Err(invalid("Fock space does not match the interferometer and input"));
    }
    (0..space.dim()).into_par_iter().map(|i| output_probability(u, input, &space.config(i))).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Explicit N-boson, M-mode occupation basis.
#[derive(Clone, Debug)]
pub struct FockSpace {
    n: usize,
    m: usize,
    configs: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// blocks[m]: for the pair (m, m+1), basis indices ordered by n_m = 0..=n_pair.
    blocks: Vec<Vec<Vec<usize>>>,
}

impl FockSpace {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        Self::with_limit(n, m, FOCK_BASIS_LIMIT)
    }

    pub fn with_limit(n: usize, m: usize, limit: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("Fock space needs at least one mode"));
        }
        if n > u8::MAX as usize {
            return Err(invalid("at most 255 bosons"));
        }
        let dim = ratio(&multiset(m as u64, n as u64), &BigUint::one());
        if dim > limit as f64 {
            return Err(invalid(format!("Fock basis of {dim:.0} states exceeds limit {limit}")));
        }
        let mut configs = Vec::with_capacity(dim as usize);
        let mut cur = vec![0u8; m];
        enumerate(&mut cur, 0, n, &mut configs);
        let index: HashMap<Vec<u8>, usize> = configs.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
        let blocks = (0..m.saturating_sub(1))
            .map(|p| {
                configs
                    .iter()
                    .filter(|c| c[p + 1] == 0)
                    .map(|c| {
                        let tot = c[p] as usize;
                        let mut key = c.clone();
                        (0..=tot)
                            .map(|k| {
                                key[p] = k as u8;
                                key[p + 1] = (tot - k) as u8;
                                index[&key]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self { n, m, configs, index, blocks })
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn config(&self, i: usize) -> FockConfig {
        FockConfig::new(self.configs[i].iter().map(|&x| x as usize).collect())
    }

    pub fn index_of(&self, c: &FockConfig) -> Option<usize> {
        let key: Vec<u8> = c.occupations().iter().map(|&x| x as u8).collect();
        if c.modes() != self.m || c.occupations().iter().any(|&x| x > u8::MAX as usize) {
            return None;
        }
        self.index.get(&key).copied()
    }

    pub fn basis_state(&self, c: &FockConfig) -> Result<StateVector> {
        let i = self.index_of(c).ok_or_else(|| invalid("configuration outside this Fock space"))?;
        StateVector::basis(&[self.dim()], i)
    }

    /// Equal-amplitude superposition of every configuration.
    pub fn uniform_state(&self) -> StateVector {
        let a = C64::new(1.0 / (self.dim() as f64).sqrt(), 0.0);
        StateVector::unnormalized(vec![self.dim()], DVector::from_element(self.dim(), a)).expect("dims match")
    }

    fn occ(&self, i: usize, mode: usize) -> usize {
        self.configs[i][mode] as usize
    }
}

fn enumerate(cur: &mut Vec<u8>, pos: usize, left: usize, out: &mut Vec<Vec<u8>>) {
    if pos + 1 == cur.len() {
        cur[pos] = left as u8;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k as u8;
        enumerate(cur, pos + 1, left - k, out);
    }
    cur[pos] = 0;
}

/// The four pulses of one step, applied in this order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pulse {
    /// Light shift imprinting φ.
    PhaseShift,
    /// MW π/2 pulse with drive phase 0.
    Hadamard,
    /// Light shift imprinting θ.
    Rotation,
    /// MW π/2 pulse with drive phase π.
    HadamardDagger,
}

impl Pulse {
    pub const SEQUENCE: [Pulse; 4] = [Pulse::PhaseShift, Pulse::Hadamard, Pulse::Rotation, Pulse::HadamardDagger];
}

/// Each pulse lasts τ/4 with τ = 2π/Ω₀; in units Ω₀ = 1 that is π/2.
pub const PULSE_DURATION: f64 = FRAC_PI_2;

/// Pairs driven at step `t` and the modes left without a partner.
fn layout(m: usize, step: usize) -> (Vec<usize>, Vec<usize>) {
    let pairs: Vec<usize> = (step % 2..m.saturating_sub(1)).step_by(2).collect();
    let mut paired = vec![false; m];
    for &p in &pairs {
        paired[p] = true;
        paired[p + 1] = true;
    }
    (pairs, (0..m).filter(|&i| !paired[i]).collect())
}

fn coupler_at(layer: &[Coupler], mode: usize) -> Coupler {
    layer.iter().find(|c| c.mode == mode).copied().unwrap_or(Coupler { mode, theta: 0.0, phi: 0.0 })
}

/// Pair Hamiltonian (Ω₀ = 1) on the (n+1)-dim block indexed by k = n_lower.
fn pair_block(n: usize, lower: usize, c: Coupler, pulse: Pulse, eps: f64) -> DMatrix<C64> {
    let mut h = DMatrix::<C64>::zeros(n + 1, n + 1);
    // Ω_s τ/4 = angle, so Ω_s/2 = angle/π.
    let diff = match pulse {
        Pulse::PhaseShift => c.phi / PI,
        Pulse::Rotation => c.theta / PI,
        _ => 0.0,
    };
    let hop = match pulse {
        Pulse::Hadamard => 0.5,
        Pulse::HadamardDagger => -0.5,
        _ => 0.0,
    };
    for k in 0..=n {
        let odd = if lower % 2 == 1 { k } else { n - k };
        h[(k, k)] = C64::new(diff * (2.0 * k as f64 - n as f64) + eps * odd as f64, 0.0);
        if k < n {
            // ⟨k+1|a†_m a_{m+1}|k⟩ = √((k+1)(n−k))
            let v = hop * (((k + 1) * (n - k)) as f64).sqrt();
            h[(k + 1, k)] = C64::new(v, 0.0);
            h[(k, k + 1)] = C64::new(v, 0.0);
        }
    }
    h
}

/// Full Fock-space Hamiltonian of one pulse at step `t`, including the uniform light shift
/// ε·Σ n_odd. Dense; meant for checks on small spaces.
pub fn pulse_hamiltonian(space: &FockSpace, step: usize, layer: &[Coupler], pulse: Pulse, eps: f64) -> Result<crate::Operator> {
    let d = space.dim();
    let (pairs, _) = layout(space.modes(), step);
    let mut h = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        let shift: usize = (1..space.modes()).step_by(2).map(|j| space.occ(i, j)).sum();
        h[(i, i)] += C64::new(eps * shift as f64, 0.0);
    }
    for &p in &pairs {
        let c = coupler_at(layer, p);
        for block in &space.blocks[p] {
            let n = block.len() - 1;
            let b = pair_block(n, p, c, pulse, 0.0);
            for (r, &gi) in block.iter().enumerate() {
                for (s, &gj) in block.iter().enumerate() {
                    h[(gi, gj)] += b[(r, s)];
                }
            }
        }
    }
    Op::new(vec![d], h)
}

/// Diagonal of the two-body loss operator for the pairing of step `t`:
/// Γ_tb/4 Σ_sites n_s(n_s−1), where a site is a driven pair or an unpaired mode.
pub fn loss_diagonal(space: &FockSpace, step: usize, gamma_tb: f64) -> Vec<f64> {
    let (pairs, singles) = layout(space.modes(), step);
    (0..space.dim())
        .map(|i| {
            let site = |n: usize| (n * n.saturating_sub(1)) as f64;
            let a: f64 = pairs.iter().map(|&p| site(space.occ(i, p) + space.occ(i, p + 1))).sum();
            let b: f64 = singles.iter().map(|&s| site(space.occ(i, s))).sum();
            gamma_tb / 4.0 * (a + b)
        })
        .collect()
}

/// The same operator written mode by mode: Γ/4 Σ_m n_m(n_m−1) + Γ/2 Σ_pairs n_m n_{m+1}.
pub fn loss_operator(space: &FockSpace, step: usize, gamma_tb: f64) -> Result<crate::Operator> {
    let (pairs, _) = layout(space.modes(), step);
    let diag: Vec<C64> = (0..space.dim())
        .map(|i| {
            let own: f64 = (0..space.modes()).map(|j| (space.occ(i, j) * space.occ(i, j).saturating_sub(1)) as f64).sum();
            let cross: f64 = pairs.iter().map(|&p| (space.occ(i, p) * space.occ(i, p + 1)) as f64).sum();
            C64::new(gamma_tb / 4.0 * own + gamma_tb / 2.0 * cross, 0.0)
        })
        .collect();
    Op::from_diagonal(&[space.dim()], &diag)
}

struct StepKernel {
    /// Per pair (index into `pairs`) and pair occupation n: the (n+1)-dim step propagator.
    pair_props: Vec<Vec<DMatrix<C64>>>,
    pairs: Vec<usize>,
    singles: Vec<usize>,
    /// Phase per boson on an unpaired odd mode over the whole step.
    single_phase: C64,
}

impl StepKernel {
    fn new(space: &FockSpace, step: usize, layer: &[Coupler], eps: f64) -> Result<Self> {
        let (pairs, singles) = layout(space.modes(), step);
        let n = space.particles();
        let pair_props = pairs
            .iter()
            .map(|&p| {
                let c = coupler_at(layer, p);
                (0..=n)
                    .map(|k| {
                        let mut u = DMatrix::<C64>::identity(k + 1, k + 1);
                        for pulse in Pulse::SEQUENCE {
                            let h = Op::from_matrix(pair_block(k, p, c, pulse, eps))?;
                            u = h.propagator(PULSE_DURATION)?.into_data() * u;
                        }
                        Ok(u)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pair_props, pairs, singles, single_phase: C64::from_polar(1.0, -eps * 4.0 * PULSE_DURATION) })
    }

    fn apply(&self, space: &FockSpace, psi: &mut DVector<C64>) {
        for (pi, &p) in self.pairs.iter().enumerate() {
            for block in &space.blocks[p] {
                let u = &self.pair_props[pi][block.len() - 1];
                let v: Vec<C64> = block.iter().map(|&i| psi[i]).collect();
                for (r, &gi) in block.iter().enumerate() {
                    psi[gi] = (0..v.len()).map(|s| u[(r, s)] * v[s]).sum();
                }
            }
        }
        for &s in self.singles.iter().filter(|&&s| s % 2 == 1) {
            for i in 0..space.dim() {
                let k = space.occ(i, s);
                if k > 0 {
                    psi[i] *= self.single_phase.powu(k as u32);
                }
            }
        }
    }
}

fn apply_output_phases(space: &FockSpace, phases: &[C64], psi: &mut DVector<C64>) {
    for i in 0..space.dim() {
        let f = (0..space.modes()).fold(C64::new(1.0, 0.0), |f, j| f * phases[j].powu(space.occ(i, j) as u32));
        psi[i] *= f;
    }
}

fn check_space(program: &CircuitProgram, space: &FockSpace, psi0: &StateVector) -> Result<()> {
    if program.modes() != space.modes() || psi0.dim() != space.dim() {
        return Err(invalid("program, Fock space and state disagree in size"));
    }
    Ok(())
}

/// Second-quantised evolution of `psi0` through the pulse sequence of every step, each
/// pulse generated by the lattice Hamiltonians (MW hopping, local light shifts, optional
/// uniform ↓ light shift ε·Ω₀). Output phases are applied last.
pub fn circuit_evolution(program: &CircuitProgram, space: &FockSpace, psi0: &StateVector, eps: f64) -> Result<StateVector> {
    check_space(program, space, psi0)?;
    let mut psi = psi0.data().clone();
    for (t, layer) in program.layers().iter().enumerate() {
        StepKernel::new(space, t, layer, eps)?.apply(space, &mut psi);
    }
    apply_output_phases(space, program.output_phases(), &mut psi);
    StateVector::unnormalized(vec![space.dim()], psi)
}

/// One- and two-body loss rates (1/s) and the step duration τ (s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub gamma_bg: f64,
    pub gamma_tb: f64,
    pub tau: f64,
}

impl LossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_bg >= 0.0 && self.gamma_tb >= 0.0 && self.tau > 0.0) {
            return Err(invalid("loss rates must be ≥ 0 and τ > 0"));
        }
        Ok(())
    }

    /// Two-body loss model with MΓ_tbτ = `strength`, τ = 1.
    pub fn two_body(modes: usize, strength: f64) -> Self {
        Self { gamma_bg: 0.0, gamma_tb: strength / modes as f64, tau: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct LossyRun {
    /// Unnormalised N-particle component of the final state.
    pub state: StateVector,
    /// Probability p of keeping all N particles.
    pub survival: f64,
    /// p_t per step, with p = ∏ p_t.
    pub step_survival: Vec<f64>,
    /// Fidelity with the lossless output.
    pub fidelity: f64,
}

/// Non-Hermitian evolution: each step applies e^{−V_tτ}, the step unitary and e^{−Γ_bgτN/2}.
/// The loss operator of a step uses that step's pairing, so it commutes with the step.
pub fn lossy_evolution(program: &CircuitProgram, loss: &LossModel, space: &FockSpace, psi0: &StateVector) -> Result<LossyRun> {
    check_space(program, space, psi0)?;
    loss.validate()?;
    let bg = (-loss.gamma_bg * loss.tau * space.particles() as f64 / 2.0).exp();
    let mut psi = psi0.data().clone();
    let mut ideal = psi0.data().clone();
    let mut step_survival = Vec::with_capacity(program.steps());
    let mut norm_prev = psi.norm_squared();
    for (t, layer) in program.layers().iter().enumerate() {
        let v = loss_diagonal(space, t, loss.gamma_tb);
        for (a, vi) in psi.iter_mut().zip(&v) {
            *a *= (-vi * loss.tau).exp() * bg;
        }
        let k = StepKernel::new(space, t, layer, 0.0)?;
        k.apply(space, &mut psi);
        k.apply(space, &mut ideal);
        let norm = psi.norm_squared();
        step_survival.push(if norm_prev > 0.0 { norm / norm_prev } else { 0.0 });
        norm_prev = norm;
    }
    apply_output_phases(space, program.output_phases(), &mut psi);
    apply_output_phases(space, program.output_phases(), &mut ideal);
    let survival = psi.norm_squared() / psi0.data().norm_squared();
    let overlap = ideal.dotc(&psi).norm_sqr();
    let fidelity = overlap / (psi.norm_squared() * ideal.norm_squared());
    Ok(LossyRun { state: StateVector::unnormalized(vec![space.dim()], psi)?, survival, step_survival, fidelity })
}

/// Fidelity of the ε-shifted circuit output with the unshifted one.
pub fn light_shift_error(program: &CircuitProgram, eps: f64, space: &FockSpace, psi0: &StateVector) -> Result<f64> {
    if eps < 0.0 {
        return Err(invalid("relative light shift must be ≥ 0"));
    }
    let ideal = circuit_evolution(program, space, psi0, 0.0)?;
    let shifted = circuit_evolution(program, space, psi0, eps)?;
    let ov = ideal.inner(&shifted)?.norm_sqr();
    Ok(ov / (ideal.norm_squared() * shifted.norm_squared()))
}

/// Weak-loss estimates of survival and fidelity, from the large-N uniform averages
/// ⟨V⟩ = 3Γ/4 and ⟨V²⟩ = 15Γ²/16.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakLossBounds {
    pub survival: f64,
    pub fidelity: f64,
    /// MΓ_tbτ above [`WEAK_LOSS_WARN`].
    pub outside_regime: bool,
}

pub fn weak_loss_bounds(n: usize, m: usize, loss: &LossModel) -> Result<WeakLossBounds> {
    loss.validate()?;
    let (mf, x) = (m as f64, loss.gamma_tb * loss.tau);
    let bg = (-mf * loss.gamma_bg * loss.tau * n as f64).exp();
    // 1 − 2Mτ⟨V⟩ + M(M+1)τ²⟨V²⟩
    let survival = bg * (1.0 - 1.5 * mf * x + 15.0 / 16.0 * mf * (mf + 1.0) * x * x);
    // 1 − M²τ²(⟨V²⟩ − ⟨V⟩²)
    let fidelity = 1.0 - 3.0 / 8.0 * (mf * x).powi(2);
    Ok(WeakLossBounds { survival, fidelity, outside_regime: mf * x > WEAK_LOSS_WARN })
}

fn binom(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut r = BigUint::one();
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Number of ways to put n bosons in m modes.
fn multiset(m: u64, n: u64) -> BigUint {
    if m == 0 {
        return if n == 0 { BigUint::one() } else { BigUint::zero() };
    }
    binom(m + n - 1, n)
}

/// a/b as f64 without overflowing the operands.
fn ratio(a: &BigUint, b: &BigUint) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    let shift = b.bits() as i64 - a.bits() as i64 + 64;
    let q = if shift >= 0 { (a << shift as usize) / b } else { a / (b << (-shift) as usize) };
    q.to_f64().expect("BigUint converts to f64") * 2f64.powi(-shift as i32)
}

/// Exact ⟨V⟩ and ⟨V²⟩ (step-0 pairing) in the equal-amplitude state of N bosons in M modes.
pub fn uniform_averages(n: usize, m: usize, gamma_tb: f64) -> Result<(f64, f64)> {
    if n == 0 || m == 0 {
        return Err(invalid("uniform averages need N, M ≥ 1"));
    }
    let (nn, mm) = (n as u64, m as u64);
    let pairs = (m / 2) as u64;
    let total = multiset(mm, nn);
    // Σ over occupations of r distinguished modes of weight·#(rest)
    let sum = |r: u64, w: &dyn Fn(&[u64]) -> u64| -> BigUint {
        if r > mm {
            return BigUint::zero();
        }
        let mut acc = BigUint::zero();
        let mut ks = vec![0u64; r as usize];
        loop {
            let used: u64 = ks.iter().sum();
            if used <= nn {
                let wt = w(&ks);
                if wt > 0 {
                    acc += multiset(mm - r, nn - used) * wt;
                }
            }
            // odometer over ks ∈ [0, n]^r
            let mut i = 0;
            loop {
                if i == ks.len() {
                    return acc;
                }
                ks[i] += 1;
                if ks[i] <= nn {
                    break;
                }
                ks[i] = 0;
                i += 1;
            }
        }
    };
    let ff = |k: u64| k * k.saturating_sub(1);
    let a1 = sum(1, &|k| ff(k[0])) * mm;
    let b1 = sum(2, &|k| k[0] * k[1]) * pairs;
    let a2 = sum(1, &|k| ff(k[0]) * ff(k[0])) * mm + sum(2, &|k| ff(k[0]) * ff(k[1])) * (mm * (mm - 1));
    let b2 = sum(2, &|k| k[0] * k[0] * k[1] * k[1]) * pairs
        + if pairs >= 2 { sum(4, &|k| k[0] * k[1] * k[2] * k[3]) * (pairs * (pairs - 1)) } else { BigUint::zero() };
    // Σ_m Σ_s n_m(n_m−1) n_{2s} n_{2s+1}: m inside the pair (2 per pair) or outside (M−2 per pair).
    let ab = sum(2, &|k| ff(k[0]) * k[0] * k[1]) * (2 * pairs)
        + if mm >= 3 { sum(3, &|k| ff(k[0]) * k[1] * k[2]) * (pairs * (mm - 2)) } else { BigUint::zero() };
    let g = gamma_tb;
    let v = g / 4.0 * ratio(&a1, &total) + g / 2.0 * ratio(&b1, &total);
    let v2 = g * g / 16.0 * ratio(&a2, &total) + g * g / 4.0 * ratio(&b2, &total) + g * g / 4.0 * ratio(&ab, &total);
    Ok((v, v2))
}

/// Sites of the step-0 layout: ⌊M/2⌋ two-mode sites and, for odd M, one single-mode site.
fn site_layout(m: usize) -> (u64, u64) {
    ((m / 2) as u64, (m % 2) as u64)
}

/// Configurations of `n` bosons on `s` two-mode sites with exactly `k[j-2]` sites holding j ≥ 2.
fn count_two_mode(s: u64, n: u64, k: &[u64]) -> BigUint {
    let multi: u64 = k.iter().sum();
    let heavy: u64 = k.iter().enumerate().map(|(i, &c)| (i as u64 + 2) * c).sum();
    if heavy > n {
        return BigUint::zero();
    }
    let singles = n - heavy;
    if multi + singles > s {
        return BigUint::zero();
    }
    // s!/(k0! k1! ∏k_j!) · 2^{k1} · ∏(j+1)^{k_j}
    let mut r = binom(s, singles) * BigUint::from(2u32).pow(singles as u32);
    let mut left = s - singles;
    for (i, &c) in k.iter().enumerate() {
        r *= binom(left, c) * BigUint::from(i as u64 + 3).pow(c as u32);
        left -= c;
    }
    r
}

/// Probability that a uniformly random configuration has exactly `k[j-2]` sites holding
/// j bosons (j ≥ 2, higher multiplets absent), sites taken from the step-0 layout.
/// Counts that cannot occur give 0.
pub fn multiplet_probability(n: usize, m: usize, k: &[usize]) -> Result<f64> {
    if m == 0 {
        return Err(invalid("need at least one mode"));
    }
    let (s2, s1) = site_layout(m);
    let nn = n as u64;
    let k: Vec<u64> = k.iter().map(|&x| x as u64).collect();
    let mut count = count_two_mode(s2, nn, &k);
    if s1 == 1 {
        count = BigUint::zero();
        for j0 in 0..=nn {
            let mut kk = k.clone();
            if j0 >= 2 {
                let idx = (j0 - 2) as usize;
                if idx >= kk.len() || kk[idx] == 0 {
                    continue;
                }
                kk[idx] -= 1;
            }
            count += count_two_mode(s2, nn - j0, &kk);
        }
    }
    Ok(ratio(&count, &multiset(m as u64, nn)))
}

/// P(k₂ pairs, k₃ trios, nothing larger).
pub fn pair_probability(n: usize, m: usize, k2: usize, k3: Option<usize>) -> Result<f64> {
    multiplet_probability(n, m, &[k2, k3.unwrap_or(0)])
}

/// Every multiplet vector `[k₂, …, k_max]` with nonzero weight and its probability.
pub fn multiplet_distribution(n: usize, m: usize, max_occupancy: usize) -> Result<Vec<(Vec<usize>, f64)>> {
    let len = max_occupancy.max(2) - 1;
    let mut out = Vec::new();
    let mut k = vec![0usize; len];
    fn rec(n: usize, m: usize, pos: usize, left: usize, k: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) -> Result<()> {
        if pos == k.len() {
            let p = multiplet_probability(n, m, k)?;
            if p > 0.0 {
                out.push((k.clone(), p));
            }
            return Ok(());
        }
        let j = pos + 2;
        for c in 0..=left / j {
            k[pos] = c;
            rec(n, m, pos + 1, left - c * j, k, out)?;
        }
        k[pos] = 0;
        Ok(())
    }
    rec(n, m, 0, n, &mut k, &mut out)?;
    Ok(out)
}

/// Occupancy statistics used by the step survival model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Occupancy {
    /// Poisson pair number with mean 3N²/2M, pairs only, k ≤ N/2.
    Poisson,
    /// Exact counting through [`MAX_MULTIPLET`]; a j-multiplet holds j(j−1)/2 pairs.
    Exact,
}

/// Survival of a pair over τ: algebraic (1+Γτ)^{-1} or exponential e^{−Γτ}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decay {
    Algebraic,
    Exponential,
}

/// Probability that N atoms survive one step of duration τ, assuming the atoms are spread
/// uniformly over the M modes at every step.
pub fn survival_step(n: usize, m: usize, tau: f64, tau_bg: f64, tau_tb: f64, occupancy: Occupancy, decay: Decay) -> Result<f64> {
    if !(tau >= 0.0 && tau_bg > 0.0 && tau_tb > 0.0) || m == 0 {
        return Err(invalid("survival_step needs τ ≥ 0, positive lifetimes and M ≥ 1"));
    }
    let x = tau / tau_tb;
    let pair = |pairs: f64| match decay {
        Decay::Algebraic => (1.0 + pairs * x).recip(),
        Decay::Exponential => (-pairs * x).exp(),
    };
    let bg = (-(n as f64) * tau / tau_bg).exp();
    let sum = match occupancy {
        Occupancy::Poisson => {
            let lambda = 1.5 * (n * n) as f64 / m as f64;
            let mut term = (-lambda).exp();
            let mut acc = 0.0;
            for k in 0..=n / 2 {
                if k > 0 {
                    term *= lambda / k as f64;
                }
                acc += term * pair(1.0).powi(k as i32);
            }
            acc
        }
        Occupancy::Exact => multiplet_distribution(n, m, MAX_MULTIPLET.min(n.max(2)))?
            .iter()
            .map(|(k, p)| p * k.iter().enumerate().map(|(i, &c)| pair(((i + 2) * (i + 1) / 2) as f64).powi(c as i32)).product::<f64>())
            .sum(),
    };
    Ok(bg * sum)
}

/// P_step(t_op)^M · P_step(t_det).
pub fn survival_total(n: usize, m: usize, t_op: f64, t_det: f64, tau_bg: f64, tau_tb: f64, occupancy: Occupancy) -> Result<f64> {
    let step = survival_step(n, m, t_op, tau_bg, tau_tb, occupancy, Decay::Algebraic)?;
    Ok(step.powi(m as i32) * survival_step(n, m, t_det, tau_bg, tau_tb, occupancy, Decay::Algebraic)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicRateParams {
    /// Addressing plus lattice shift time per step (s).
    pub t_op: f64,
    pub t_in: f64,
    pub t_det: f64,
    /// Detection efficiency per atom.
    pub eta_d: f64,
    pub tau_bg: f64,
    pub tau_tb: f64,
}

impl AtomicRateParams {
    pub fn conservative() -> Self {
        Self { t_op: 170e-6, t_in: 0.75, t_det: 60e-3, eta_d: 0.99, tau_bg: 60.0, tau_tb: 40e-3 }
    }

    pub fn state_of_the_art() -> Self {
        Self { t_op: 33e-6, t_in: 0.1, t_det: 30e-3, eta_d: 0.999, tau_bg: 360.0, tau_tb: 0.4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonicRateParams {
    /// Single-photon generation rate (1/s).
    pub r0: f64,
    /// Size-independent survival per photon.
    pub eta_f: f64,
    /// Transmission per unit optical depth; the depth is M = N².
    pub eta_c: f64,
    /// Fraction of photons allowed to be lost, k_l = round(fraction·N).
    pub loss_fraction: f64,
}

impl PhotonicRateParams {
    pub fn current() -> Self {
        Self { r0: 76e6, eta_f: 0.14, eta_c: 0.987f64.powf(1.0 / 60.0), loss_fraction: 0.0 }
    }

    pub fn best() -> Self {
        Self { r0: 76e6, eta_f: 0.65, eta_c: 1.0, loss_fraction: 0.0 }
    }

    pub fn with_loss(self, fraction: f64) -> Self {
        Self { loss_fraction: fraction, ..self }
    }

    pub fn lost(&self, n: usize) -> usize {
        (self.loss_fraction * n as f64).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    pub atomic: AtomicRateParams,
    pub photonic: PhotonicRateParams,
    /// Classical cost constant ã (s): 3e-15 for a supercomputer, 3e-9 for a desktop.
    pub a_tilde: f64,
    pub occupancy: Occupancy,
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        let a = &self.atomic;
        let p = &self.photonic;
        let pos = [a.t_op, a.t_in, a.t_det, a.tau_bg, a.tau_tb, p.r0, self.a_tilde];
        let eff = [a.eta_d, p.eta_f, p.eta_c];
        if pos.iter().any(|&x| !(x > 0.0)) || eff.iter().any(|&e| !(e > 0.0 && e <= 1.0)) || !(0.0..1.0).contains(&p.loss_fraction) {
            return Err(invalid("rate parameters must be positive with efficiencies in (0, 1]"));
        }
        Ok(())
    }
}

/// Samples per second at N particles with M = N² modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub atomic: f64,
    pub photonic: f64,
    pub classical: f64,
    /// Classical rate at N − k_l, the reference for lossy photonic sampling.
    pub classical_lossy: f64,
}

pub fn classical_rate(n: usize, a_tilde: f64) -> f64 {
    1.0 / (100.0 * a_tilde * (n * n) as f64 * 2f64.powi(n as i32))
}

pub fn sampling_rates(n: usize, params: &RateParams) -> Result<RateRow> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("rates need N ≥ 1"));
    }
    let m = n * n;
    let a = &params.atomic;
    let t_pr = m as f64 * a.t_op + a.t_in + a.t_det;
    let surv = survival_total(n, m, a.t_op, a.t_det, a.tau_bg, a.tau_tb, params.occupancy)?;
    let atomic = t_pr.recip() * a.eta_d.powi(n as i32) * surv / E;
    let p = &params.photonic;
    let eta = p.eta_f * p.eta_c.powi(m as i32);
    let kl = p.lost(n);
    let binom_f = ratio(&binom(n as u64, kl as u64), &BigUint::one());
    let photonic = p.r0 / n as f64 * binom_f * eta.powi((n - kl) as i32) * (1.0 - eta).powi(kl as i32) / E;
    Ok(RateRow {
        n,
        atomic,
        photonic,
        classical: classical_rate(n, params.a_tilde),
        classical_lossy: classical_rate(n - kl, params.a_tilde),
    })
}

pub fn rate_race(ns: impl IntoIterator<Item = usize>, params: &RateParams) -> Result<Vec<RateRow>> {
    ns.into_iter().collect::<Vec<_>>().into_par_iter().map(|n| sampling_rates(n, params)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Device {
    Atomic,
    Photonic,
}

/// Smallest N in `rows` where the device outpaces its classical reference.
pub fn crossover(rows: &[RateRow], device: Device) -> Option<usize> {
    rows.iter()
        .filter(|r| match device {
            Device::Atomic => r.atomic > r.classical,
            Device::Photonic => r.photonic > r.classical_lossy,
        })
        .map(|r| r.n)
        .min()
}

/// Two-mode coupler realised by `H†A(θ)HA(φ)` with `H = e^{−iσ_xπ/4}`, `A(x) = e^{−iσ_z x/2}`.
pub fn pulse_sequence_matrix(theta: f64, phi: f64) -> [[C64; 2]; 2] {
    let mul = |a: [[C64; 2]; 2], b: [[C64; 2]; 2]| {
        let mut r = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        r
    };
    let (c, s) = (FRAC_PI_4.cos(), FRAC_PI_4.sin());
    let h = [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]];
    let hd = [[C64::new(c, 0.0), C64::new(0.0, s)], [C64::new(0.0, s), C64::new(c, 0.0)]];
    let a = |x: f64| [[C64::from_polar(1.0, -x / 2.0), C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), C64::from_polar(1.0, x / 2.0)]];
    mul(mul(mul(hd, a(theta)), h), a(phi))
}
