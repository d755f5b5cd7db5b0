//! Time evolution: Schrödinger and Lindblad integrators, the closed-form propagator for
//! σ_z-coupled spin-boson Hamiltonians, and Ornstein-Uhlenbeck noise.

use crate::error::{guard, invalid, Error, Result};
use crate::hilbert::{tensor, Cx, DensityMatrix, Operator, StateVector};
use crate::scalar::Real;
use nalgebra::{ComplexField, DMatrix, DVector};
use nalgebra_sparse::CsrMatrix;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::sync::{Arc, OnceLock};

pub type CoefficientFn<T> = Arc<dyn Fn(T) -> Cx<T> + Send + Sync>;
pub type OperatorFn<T> = Arc<dyn Fn(T) -> Operator<T> + Send + Sync>;

#[derive(Clone)]
pub enum Coefficient<T: Real> {
    Const(Cx<T>),
    Func(CoefficientFn<T>),
}

impl<T: Real> Coefficient<T> {
    pub fn func(f: impl Fn(T) -> Cx<T> + Send + Sync + 'static) -> Self {
        Coefficient::Func(Arc::new(f))
    }

    pub fn real(x: T) -> Self {
        Coefficient::Const(Complex::new(x, T::zero()))
    }

    #[inline]
    pub fn at(&self, t: T) -> Cx<T> {
        match self {
            Coefficient::Const(c) => *c,
            Coefficient::Func(f) => f(t),
        }
    }
}

/// Step-control hint for the integrators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    /// H(t) is smooth between breakpoints; fixed-step RK4.
    Smooth,
    /// H(t) is constant between breakpoints; exact exponential per segment.
    PiecewiseConstant,
}

#[derive(Clone)]
struct Term<T: Real> {
    coeff: Coefficient<T>,
    op: CsrMatrix<Cx<T>>,
    // Some(A†) when the term carries its Hermitian conjugate c*(t) A†.
    adj: Option<CsrMatrix<Cx<T>>>,
    norm: T,
}

/// Union sparsity pattern of all terms; `pos[k]` maps term k's stored entries (then its
/// adjoint's) onto the union.
struct Merged {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    pos: Vec<Vec<usize>>,
}

impl Merged {
    fn build<T: Real>(n: usize, terms: &[Term<T>]) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mats = || terms.iter().flat_map(|t| std::iter::once(&t.op).chain(t.adj.iter()));
        for m in mats() {
            for (r, c, _) in m.triplet_iter() {
                rows[r].push(c);
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        offsets.push(0);
        for row in &mut rows {
            row.sort_unstable();
            row.dedup();
            cols.extend_from_slice(row);
            offsets.push(cols.len());
        }
        let pos = terms
            .iter()
            .map(|t| {
                std::iter::once(&t.op)
                    .chain(t.adj.iter())
                    .flat_map(|m| m.triplet_iter().map(|(r, c, _)| offsets[r] + rows[r].binary_search(&c).unwrap()).collect::<Vec<_>>())
                    .collect()
            })
            .collect();
        Self { offsets, cols, pos }
    }
}

/// H(t) = Σ_k [c_k(t) A_k (+ h.c.)], or an arbitrary callback t ↦ H(t).
#[derive(Clone)]
pub struct TimeDependentHamiltonian<T: Real> {
    dims: Vec<usize>,
    terms: Vec<Term<T>>,
    callback: Option<OperatorFn<T>>,
    smoothness: Smoothness,
    breakpoints: Vec<T>,
    merged: OnceLock<Arc<Merged>>,
}

impl<T: Real> TimeDependentHamiltonian<T> {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            terms: Vec::new(),
            callback: None,
            smoothness: Smoothness::Smooth,
            breakpoints: Vec::new(),
            merged: OnceLock::new(),
        }
    }

    pub fn constant(op: &Operator<T>) -> Self {
        let mut h = Self::new(op.dims());
        h.push(Coefficient::real(T::one()), op, false).expect("same dims");
        h.smoothness = Smoothness::PiecewiseConstant;
        h
    }

    pub fn from_callback(dims: &[usize], f: impl Fn(T) -> Operator<T> + Send + Sync + 'static, smoothness: Smoothness) -> Self {
        let mut h = Self::new(dims);
        h.callback = Some(Arc::new(f));
        h.smoothness = smoothness;
        h
    }

    fn push(&mut self, coeff: Coefficient<T>, op: &Operator<T>, hc: bool) -> Result<()> {
        if op.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch(format!("term dims {:?} vs {:?}", op.dims(), self.dims)));
        }
        if self.callback.is_some() {
            return Err(invalid("cannot mix callback and term Hamiltonians"));
        }
        let mut norm = op.norm_inf();
        let adj = if hc {
            let a = op.adjoint();
            norm = norm.max(a.norm_inf());
            Some(a.to_sparse())
        } else {
            None
        };
        self.terms.push(Term { coeff, op: op.to_sparse(), adj, norm });
        self.merged = OnceLock::new();
        Ok(())
    }

    /// Adds c(t)·A; the caller is responsible for Hermiticity.
    pub fn add_term(mut self, coeff: Coefficient<T>, op: &Operator<T>) -> Result<Self> {
        self.push(coeff, op, false)?;
        Ok(self)
    }

    /// Adds c(t)·A + c(t)*·A†.
    pub fn add_term_hc(mut self, coeff: Coefficient<T>, op: &Operator<T>) -> Result<Self> {
        self.push(coeff, op, true)?;
        Ok(self)
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> Self {
        self.smoothness = s;
        self
    }

    /// Times where H(t) may jump or kink; integrator steps never straddle them.
    pub fn with_breakpoints(mut self, mut b: Vec<T>) -> Self {
        b.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));
        b.dedup();
        self.breakpoints = b;
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    /// Dense H(t).
    pub fn at(&self, t: T) -> Operator<T> {
        if let Some(cb) = &self.callback {
            return cb(t);
        }
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for term in &self.terms {
            let c = term.coeff.at(t);
            for (r, col, v) in term.op.triplet_iter() {
                m[(r, col)] += c * v;
            }
            if let Some(adj) = &term.adj {
                let cc = c.conj();
                for (r, col, v) in adj.triplet_iter() {
                    m[(r, col)] += cc * v;
                }
            }
        }
        Operator::new(self.dims.clone(), m).expect("dims validated")
    }

    /// Upper bound on ‖H(t)‖: the largest absolute row sum, which dominates the spectral
    /// norm of a Hermitian matrix.
    pub fn norm_bound(&self, t: T) -> T {
        if self.callback.is_some() {
            return self.at(t).norm_inf();
        }
        if self.terms.len() == 1 {
            let term = &self.terms[0];
            let k = if term.adj.is_some() { T::lit(2.0) } else { T::one() };
            return k * term.coeff.at(t).modulus() * term.norm;
        }
        let (m, vals) = self.merged_values(t);
        (0..m.offsets.len() - 1).fold(T::zero(), |acc, r| {
            acc.max(vals[m.offsets[r]..m.offsets[r + 1]].iter().fold(T::zero(), |s, v| s + v.modulus()))
        })
    }

    fn merged_values(&self, t: T) -> (Arc<Merged>, Vec<Cx<T>>) {
        let m = self.merged.get_or_init(|| Arc::new(Merged::build(self.dim(), &self.terms))).clone();
        let mut vals = vec![Complex::new(T::zero(), T::zero()); m.cols.len()];
        for (term, pos) in self.terms.iter().zip(&m.pos) {
            let c = term.coeff.at(t);
            if c.re == T::zero() && c.im == T::zero() {
                continue;
            }
            let nop = term.op.nnz();
            for (k, v) in term.op.values().iter().enumerate() {
                vals[pos[k]] += c * *v;
            }
            if let Some(adj) = &term.adj {
                let cc = c.conj();
                for (k, v) in adj.values().iter().enumerate() {
                    vals[pos[nop + k]] += cc * *v;
                }
            }
        }
        (m, vals)
    }

    /// out += s·H(t)·x, column by column.
    fn apply(&self, t: T, x: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>, s: Cx<T>) {
        if let Some(cb) = &self.callback {
            let h = cb(t);
            out.gemm(s, h.data(), x, Complex::new(T::one(), T::zero()));
            return;
        }
        if self.terms.len() > 1 {
            let (m, vals) = self.merged_values(t);
            csr_raw_acc(&m.offsets, &m.cols, &vals, x, out, s);
            return;
        }
        for term in &self.terms {
            let c = term.coeff.at(t);
            if c.re == T::zero() && c.im == T::zero() {
                continue;
            }
            csr_acc(&term.op, x, out, s * c);
            if let Some(adj) = &term.adj {
                csr_acc(adj, x, out, s * c.conj());
            }
        }
    }

    fn check_hermitian_at(&self, t: T) -> Result<()> {
        let h = self.at(t);
        let tol = T::lit(1e-9) * (T::one() + h.norm_inf());
        if !h.is_hermitian(tol) {
            return Err(invalid(format!("Hamiltonian is not Hermitian at t = {t}")));
        }
        Ok(())
    }
}

/// y += a·x elementwise.
#[inline]
fn add_scaled<T: Real>(y: &mut DMatrix<Cx<T>>, a: Cx<T>, x: &DMatrix<Cx<T>>) {
    for (yv, xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yv += a * *xv;
    }
}

/// out += s·A·x for CSR A and dense column-major x.
fn csr_acc<T: Real>(a: &CsrMatrix<Cx<T>>, x: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>, s: Cx<T>) {
    csr_raw_acc(a.row_offsets(), a.col_indices(), a.values(), x, out, s);
}

fn csr_raw_acc<T: Real>(offs: &[usize], cols: &[usize], vals: &[Cx<T>], x: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>, s: Cx<T>) {
    let n = offs.len() - 1;
    let xs = x.as_slice();
    let os = out.as_mut_slice();
    for k in 0..x.ncols() {
        let xc = &xs[k * n..(k + 1) * n];
        let oc = &mut os[k * n..(k + 1) * n];
        for r in 0..n {
            let mut acc = Complex::new(T::zero(), T::zero());
            for idx in offs[r]..offs[r + 1] {
                acc += vals[idx] * xc[cols[idx]];
            }
            if acc.re != T::zero() || acc.im != T::zero() {
                oc[r] += s * acc;
            }
        }
    }
}

/// Fixed-step control: each RK4 step advances at most `max_phase/‖H‖` and at most `max_step`.
#[derive(Clone, Copy, Debug)]
pub struct StepControl<T: Real> {
    pub max_phase: T,
    pub max_step: Option<T>,
}

impl<T: Real> Default for StepControl<T> {
    fn default() -> Self {
        Self { max_phase: T::lit(0.05), max_step: None }
    }
}

impl<T: Real> StepControl<T> {
    pub fn halved(self) -> Self {
        Self { max_phase: self.max_phase / T::lit(2.0), max_step: self.max_step.map(|s| s / T::lit(2.0)) }
    }

    fn steps(&self, span: T, norm: T) -> usize {
        let mut n = (span * norm / self.max_phase).ceil();
        if let Some(ms) = self.max_step {
            n = n.max((span / ms).ceil());
        }
        n.to_f64_lossy().max(1.0) as usize
    }
}

fn check_grid<T: Real>(times: &[T]) -> Result<()> {
    if times.is_empty() {
        return Err(invalid("time grid is empty"));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(invalid("time grid must be nondecreasing"));
    }
    Ok(())
}

/// Subintervals of [a, b] cut at the Hamiltonian's breakpoints.
fn pieces<T: Real>(a: T, b: T, breaks: &[T]) -> Vec<(T, T)> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect()
}

/// Advances the column block `x` from `a` to `b` under H.
fn propagate_block<T: Real>(h: &TimeDependentHamiltonian<T>, x: &mut DMatrix<Cx<T>>, a: T, b: T, ctl: StepControl<T>) -> Result<()> {
    let two = T::lit(2.0);
    for (p, q) in pieces(a, b, &h.breakpoints) {
        match h.smoothness {
            Smoothness::PiecewiseConstant => {
                let u = h.at((p + q) / two).propagator(q - p)?;
                *x = u.data() * &*x;
            }
            Smoothness::Smooth => {
                let norm = [p, (p + q) / two, q].iter().map(|&t| h.norm_bound(t)).fold(T::zero(), |m, v| m.max(v));
                let n = ctl.steps(q - p, norm);
                let dt = (q - p) / T::from_usize(n).unwrap();
                let mi = Complex::new(T::zero(), -T::one());
                let (r, c) = x.shape();
                let mut k = DMatrix::zeros(r, c);
                let mut acc = DMatrix::zeros(r, c);
                let mut tmp = DMatrix::zeros(r, c);
                // Stage times are pulled inside the piece so a jump at its end is not sampled.
                let eps = (q - p) * T::lit(1e-9);
                let inside = |s: T| s.max(p + eps).min(q - eps);
                for s in 0..n {
                    let t = p + dt * T::from_usize(s).unwrap();
                    let half = dt / two;
                    let cdt = |w: T| Complex::new(w, T::zero());
                    // k1
                    k.fill(Complex::new(T::zero(), T::zero()));
                    h.apply(inside(t), x, &mut k, mi);
                    acc.copy_from(&k);
                    tmp.copy_from(x);
                    add_scaled(&mut tmp, cdt(half), &k);
                    // k2
                    k.fill(Complex::new(T::zero(), T::zero()));
                    h.apply(inside(t + half), &tmp, &mut k, mi);
                    add_scaled(&mut acc, cdt(two), &k);
                    tmp.copy_from(x);
                    add_scaled(&mut tmp, cdt(half), &k);
                    // k3
                    k.fill(Complex::new(T::zero(), T::zero()));
                    h.apply(inside(t + half), &tmp, &mut k, mi);
                    add_scaled(&mut acc, cdt(two), &k);
                    tmp.copy_from(x);
                    add_scaled(&mut tmp, cdt(dt), &k);
                    // k4
                    k.fill(Complex::new(T::zero(), T::zero()));
                    h.apply(inside(t + dt), &tmp, &mut k, mi);
                    acc += &k;
                    add_scaled(x, cdt(dt / T::lit(6.0)), &acc);
                }
            }
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(guard("state diverged during integration; reduce the step"));
        }
    }
    Ok(())
}

/// Integrates iψ̇ = H(t)ψ and returns the state at each grid time.
pub fn evolve_schrodinger<T: Real>(
    h: &TimeDependentHamiltonian<T>,
    psi0: &StateVector<T>,
    times: &[T],
    ctl: StepControl<T>,
) -> Result<Vec<StateVector<T>>> {
    check_grid(times)?;
    if psi0.dims() != h.dims() {
        return Err(Error::DimensionMismatch(format!("state {:?} vs Hamiltonian {:?}", psi0.dims(), h.dims())));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    for t in [t0, (t0 + t1) / T::lit(2.0), t1] {
        h.check_hermitian_at(t)?;
    }
    let mut x = DMatrix::from_column_slice(psi0.dim(), 1, psi0.data().as_slice());
    let mut out = Vec::with_capacity(times.len());
    let mut prev = t0;
    for &t in times {
        propagate_block(h, &mut x, prev, t, ctl)?;
        prev = t;
        out.push(StateVector::unnormalized(psi0.dims().to_vec(), DVector::from_column_slice(x.as_slice()))?);
    }
    let drift = (out.last().unwrap().norm() - psi0.norm()).abs().to_f64_lossy();
    if drift > 1e-8 {
        return Err(guard(format!("norm drift {drift:.2e} above 1e-8; reduce the step")));
    }
    Ok(out)
}

/// Final state only.
pub fn propagate_state<T: Real>(h: &TimeDependentHamiltonian<T>, psi0: &StateVector<T>, t0: T, t1: T, ctl: StepControl<T>) -> Result<StateVector<T>> {
    Ok(evolve_schrodinger(h, psi0, &[t0, t1], ctl)?.pop().unwrap())
}

/// Propagator U(t1, t0) by integrating every basis column at once.
pub fn propagator<T: Real>(h: &TimeDependentHamiltonian<T>, t0: T, t1: T, ctl: StepControl<T>) -> Result<Operator<T>> {
    h.check_hermitian_at(t0)?;
    let n = h.dim();
    let mut x = DMatrix::identity(n, n);
    propagate_block(h, &mut x, t0, t1, ctl)?;
    Operator::new(h.dims().to_vec(), x)
}

/// Infidelity between the final states of a run at `ctl` and at half the step.
pub fn step_convergence<T: Real>(h: &TimeDependentHamiltonian<T>, psi0: &StateVector<T>, t0: T, t1: T, ctl: StepControl<T>) -> Result<T> {
    let a = propagate_state(h, psi0, t0, t1, ctl)?;
    let b = propagate_state(h, psi0, t0, t1, ctl.halved())?;
    Ok(T::one() - crate::hilbert::state_fidelity(&a, &b)?)
}

/// Hamiltonian plus jump operators with constant nonnegative rates.
#[derive(Clone)]
pub struct LindbladModel<T: Real> {
    hamiltonian: TimeDependentHamiltonian<T>,
    jumps: Vec<(T, Operator<T>)>,
    jump_sparse: Vec<(T, CsrMatrix<Cx<T>>)>,
    jump_mono: Vec<Option<Monomial<T>>>,
    // Σ r L†L, the anti-Hermitian part of the effective Hamiltonian.
    decay: CsrMatrix<Cx<T>>,
    decay_norm: T,
}

impl<T: Real> LindbladModel<T> {
    pub fn new(hamiltonian: TimeDependentHamiltonian<T>, jumps: Vec<(T, Operator<T>)>) -> Result<Self> {
        let mut acc = Operator::zeros(hamiltonian.dims());
        for (r, l) in &jumps {
            if !(*r >= T::zero()) {
                return Err(invalid(format!("jump rate must be >= 0, got {r}")));
            }
            if l.dims() != hamiltonian.dims() {
                return Err(Error::DimensionMismatch(format!("jump dims {:?} vs {:?}", l.dims(), hamiltonian.dims())));
            }
            acc = acc.add(&l.adjoint().mul(l).scale_re(*r));
        }
        let jump_sparse: Vec<_> = jumps.iter().map(|(r, l)| (*r, l.to_sparse())).collect();
        let jump_mono = jump_sparse.iter().map(|(_, l)| monomial(l)).collect();
        Ok(Self { hamiltonian, decay_norm: acc.norm_inf(), decay: acc.to_sparse(), jumps, jump_sparse, jump_mono })
    }

    pub fn hamiltonian(&self) -> &TimeDependentHamiltonian<T> {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[(T, Operator<T>)] {
        &self.jumps
    }

    /// dρ/dt = K + K† + Σ r L ρ L† with K = −i H_eff ρ.
    fn rhs(&self, t: T, rho: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>, scratch: &mut DMatrix<Cx<T>>) {
        let zero = Complex::new(T::zero(), T::zero());
        scratch.fill(zero);
        self.hamiltonian.apply(t, rho, scratch, Complex::new(T::zero(), -T::one()));
        csr_acc(&self.decay, rho, scratch, Complex::new(-T::lit(0.5), T::zero()));
        add_hermitian_part(scratch, out);
        for ((r, l), mono) in self.jump_sparse.iter().zip(&self.jump_mono) {
            if *r == T::zero() {
                continue;
            }
            match mono {
                Some(m) => sandwich_monomial(m, *r, rho, out),
                None => {
                    scratch.fill(zero);
                    csr_acc(l, rho, scratch, Complex::new(T::one(), T::zero()));
                    // L(Lρ)† = LρL† for Hermitian ρ.
                    let lr_adj = scratch.adjoint();
                    csr_acc(l, &lr_adj, out, Complex::new(*r, T::zero()));
                }
            }
        }
    }
}

/// An operator with at most one stored entry per row: row i maps to (column, value).
type Monomial<T> = Vec<Option<(usize, Cx<T>)>>;

fn monomial<T: Real>(l: &CsrMatrix<Cx<T>>) -> Option<Monomial<T>> {
    let offs = l.row_offsets();
    (0..l.nrows())
        .map(|r| match offs[r + 1] - offs[r] {
            0 => Some(None),
            1 => Some(Some((l.col_indices()[offs[r]], l.values()[offs[r]]))),
            _ => None,
        })
        .collect()
}

/// out += r·LρL† for a monomial L, as a gather.
fn sandwich_monomial<T: Real>(m: &Monomial<T>, r: T, rho: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>) {
    let n = m.len();
    for j in 0..n {
        let Some((kj, vj)) = m[j] else { continue };
        let vj = vj.conj() * r;
        let src = &rho.as_slice()[kj * n..(kj + 1) * n];
        let dst = &mut out.as_mut_slice()[j * n..(j + 1) * n];
        for i in 0..n {
            if let Some((ki, vi)) = m[i] {
                dst[i] += vi * src[ki] * vj;
            }
        }
    }
}

/// out = K + K†, blocked to keep the transpose cache-friendly.
fn add_hermitian_part<T: Real>(k: &DMatrix<Cx<T>>, out: &mut DMatrix<Cx<T>>) {
    let n = k.nrows();
    const B: usize = 32;
    let ks = k.as_slice();
    let os = out.as_mut_slice();
    for jb in (0..n).step_by(B) {
        for ib in (0..n).step_by(B) {
            for j in jb..(jb + B).min(n) {
                for i in ib..(ib + B).min(n) {
                    os[j * n + i] = ks[j * n + i] + ks[i * n + j].conj();
                }
            }
        }
    }
}

/// Integrates the Lindblad master equation with fixed-step RK4.
pub fn evolve_lindblad<T: Real>(
    model: &LindbladModel<T>,
    rho0: &DensityMatrix<T>,
    times: &[T],
    ctl: StepControl<T>,
) -> Result<Vec<DensityMatrix<T>>> {
    check_grid(times)?;
    let h = &model.hamiltonian;
    if rho0.dims() != h.dims() {
        return Err(Error::DimensionMismatch(format!("state {:?} vs model {:?}", rho0.dims(), h.dims())));
    }
    let (t0, t1) = (times[0], times[times.len() - 1]);
    for t in [t0, (t0 + t1) / T::lit(2.0), t1] {
        h.check_hermitian_at(t)?;
    }
    let n = rho0.dim();
    let two = T::lit(2.0);
    let mut rho = rho0.data().clone();
    let mut k = DMatrix::zeros(n, n);
    let mut acc = DMatrix::zeros(n, n);
    let mut tmp = DMatrix::zeros(n, n);
    let mut scratch = DMatrix::zeros(n, n);
    let cr = |w: T| Complex::new(w, T::zero());
    let mut out = Vec::with_capacity(times.len());
    let mut prev = t0;
    for &tg in times {
        for (p, q) in pieces(prev, tg, h.breakpoints()) {
            let norm = [p, (p + q) / two, q].iter().map(|&t| h.norm_bound(t)).fold(T::zero(), |m, v| m.max(v)) + model.decay_norm;
            let steps = ctl.steps(q - p, two * norm);
            let dt = (q - p) / T::from_usize(steps).unwrap();
            let half = dt / two;
            let eps = (q - p) * T::lit(1e-9);
            let inside = |s: T| s.max(p + eps).min(q - eps);
            for s in 0..steps {
                let t = p + dt * T::from_usize(s).unwrap();
                model.rhs(inside(t), &rho, &mut k, &mut scratch);
                acc.copy_from(&k);
                tmp.copy_from(&rho);
                add_scaled(&mut tmp, cr(half), &k);
                model.rhs(inside(t + half), &tmp, &mut k, &mut scratch);
                add_scaled(&mut acc, cr(two), &k);
                tmp.copy_from(&rho);
                add_scaled(&mut tmp, cr(half), &k);
                model.rhs(inside(t + half), &tmp, &mut k, &mut scratch);
                add_scaled(&mut acc, cr(two), &k);
                tmp.copy_from(&rho);
                add_scaled(&mut tmp, cr(dt), &k);
                model.rhs(inside(t + dt), &tmp, &mut k, &mut scratch);
                acc += &k;
                add_scaled(&mut rho, cr(dt / T::lit(6.0)), &acc);
            }
            if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(guard("density matrix diverged; reduce the step"));
            }
        }
        prev = tg;
        out.push(DensityMatrix::new_unchecked(rho0.dims().to_vec(), rho.clone())?);
    }
    let drift = (out.last().unwrap().trace() - rho0.trace()).abs().to_f64_lossy();
    if drift > 1e-7 {
        return Err(guard(format!("trace drift {drift:.2e} above 1e-7; reduce the step")));
    }
    Ok(out)
}

/// Piecewise-constant modulation f(t): `initial` on [0, t₁), then each switch sets a new value.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulationFunction<T: Real> {
    initial: T,
    switches: Vec<(T, T)>,
}

impl<T: Real> ModulationFunction<T> {
    pub fn new(initial: T, switches: Vec<(T, T)>) -> Result<Self> {
        if switches.windows(2).any(|w| !(w[1].0 >= w[0].0)) {
            return Err(invalid("modulation switch times must be sorted"));
        }
        if !initial.is_finite() || switches.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(invalid("modulation must be piecewise constant with finite values"));
        }
        Ok(Self { initial, switches })
    }

    pub fn constant(v: T) -> Self {
        Self { initial: v, switches: Vec::new() }
    }

    /// ±1 train starting at +1 that flips sign at every listed time.
    pub fn sign_train(flip_times: &[T]) -> Result<Self> {
        let mut v = T::one();
        let sw = flip_times
            .iter()
            .map(|&t| {
                v = -v;
                (t, v)
            })
            .collect();
        Self::new(T::one(), sw)
    }

    pub fn value(&self, t: T) -> T {
        let mut v = self.initial;
        for &(ts, nv) in &self.switches {
            if t >= ts {
                v = nv;
            } else {
                break;
            }
        }
        v
    }

    pub fn switch_times(&self) -> Vec<T> {
        self.switches.iter().map(|s| s.0).collect()
    }
}

/// Output of the closed-form propagator.
#[derive(Clone, Debug)]
pub struct MagnusOutcome<T: Real> {
    /// G_jm(t) = ν_m ∫₀ᵗ f_j e^{−iν_m t'} dt'.
    pub g: DMatrix<Cx<T>>,
    /// α_jm = η_jm G_jm.
    pub alpha: DMatrix<Cx<T>>,
    /// Symmetric matrix of pairwise phases; U_c = exp(i Σ_{j<k} φ_jk σ_j^z σ_k^z).
    pub phases: DMatrix<T>,
}

impl<T: Real> MagnusOutcome<T> {
    pub fn phi(&self) -> T {
        self.phases[(0, 1)]
    }
}

/// Closed form of the propagator of H = Σ_j σ_j^z Σ_m η_jm ν_m f_j(t)(a_m e^{−iν_m t} + h.c.).
///
/// The Magnus series terminates at second order; the first term gives the spin-dependent
/// displacements and the second the pairwise phases, both integrated exactly segment by
/// segment.
pub fn magnus_sz_propagator<T: Real>(f: &[ModulationFunction<T>], etas: &DMatrix<T>, nus: &[T], t: T) -> Result<MagnusOutcome<T>> {
    let nq = f.len();
    let nm = nus.len();
    if etas.nrows() != nq || etas.ncols() != nm {
        return Err(Error::DimensionMismatch(format!("eta is {}x{}, expected {nq}x{nm}", etas.nrows(), etas.ncols())));
    }
    if t < T::zero() {
        return Err(invalid("propagator time must be >= 0"));
    }
    let mut cuts: Vec<T> = f.iter().flat_map(|fj| fj.switch_times()).filter(|&s| s > T::zero() && s < t).collect();
    cuts.push(T::zero());
    cuts.push(t);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();

    let zero = Complex::new(T::zero(), T::zero());
    let i = Complex::new(T::zero(), T::one());
    let mut g = DMatrix::from_element(nq, nm, zero);
    let mut phases = DMatrix::from_element(nq, nq, T::zero());
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = (a + b) / T::lit(2.0);
        let s: Vec<T> = f.iter().map(|fj| fj.value(mid)).collect();
        for m in 0..nm {
            let nu = nus[m];
            let ea = (-i * nu * a).exp();
            let eb = (-i * nu * b).exp();
            // ∫_a^b e^{iνt'} dt' = (e^{iνb} − e^{iνa})/(iν)
            let ipos = (eb.conj() - ea.conj()) / (i * Complex::new(nu, T::zero()));
            for j in 0..nq {
                for k in (j + 1)..nq {
                    let cj = g[(j, m)] - i * s[j] * ea;
                    let ck = g[(k, m)] - i * s[k] * ea;
                    // ν∫[f_j Im(e^{iνt}G_k) + f_k Im(e^{iνt}G_j)] on this segment.
                    let seg = s[j] * ((ck * ipos).im + s[k] * (b - a)) + s[k] * ((cj * ipos).im + s[j] * (b - a));
                    let d = etas[(j, m)] * etas[(k, m)] * nu * seg;
                    phases[(j, k)] += d;
                    phases[(k, j)] += d;
                }
            }
            for j in 0..nq {
                g[(j, m)] += i * s[j] * (eb - ea);
            }
        }
    }
    let alpha = DMatrix::from_fn(nq, nm, |j, m| g[(j, m)] * etas[(j, m)]);
    Ok(MagnusOutcome { g, alpha, phases })
}

/// U_s·U_c on qubits ⊗ modes with the given Fock truncations.
pub fn magnus_unitary<T: Real>(out: &MagnusOutcome<T>, fock_dims: &[usize]) -> Result<Operator<T>> {
    let nq = out.g.nrows();
    if fock_dims.len() != out.g.ncols() {
        return Err(Error::DimensionMismatch("one Fock dim per mode".into()));
    }
    let mut dims = vec![2; nq];
    dims.extend_from_slice(fock_dims);
    let nmodes: usize = fock_dims.iter().product();
    let n = (1usize << nq) * nmodes;
    let mut u = DMatrix::from_element(n, n, Complex::new(T::zero(), T::zero()));
    let i = Complex::new(T::zero(), T::one());
    for conf in 0..(1usize << nq) {
        // basis index 0 is σ_z = +1
        let sz: Vec<T> = (0..nq).map(|j| if (conf >> (nq - 1 - j)) & 1 == 0 { T::one() } else { -T::one() }).collect();
        let mut ph = T::zero();
        for j in 0..nq {
            for k in (j + 1)..nq {
                ph += out.phases[(j, k)] * sz[j] * sz[k];
            }
        }
        let mut block: Option<Operator<T>> = None;
        for (m, &d) in fock_dims.iter().enumerate() {
            // exp(−i Σ_j s_j (α_jm a + α_jm* a†)) = D(β), β = −i Σ_j s_j α_jm*
            let mut beta = Complex::new(T::zero(), T::zero());
            for j in 0..nq {
                beta += -i * out.alpha[(j, m)].conj() * sz[j];
            }
            let disp = displacement(beta, d)?;
            block = Some(match block {
                None => disp,
                Some(b) => tensor(&[b, disp])?,
            });
        }
        let block = block.map(|b| b.into_data()).unwrap_or_else(|| DMatrix::identity(1, 1));
        let phase = (i * ph).exp();
        let off = conf * nmodes;
        for r in 0..nmodes {
            for c in 0..nmodes {
                u[(off + r, off + c)] = block[(r, c)] * phase;
            }
        }
    }
    Operator::new(dims, u)
}

/// Truncated displacement exp(β a† − β* a) as the exponential of the truncated generator.
pub fn displacement<T: Real>(beta: Cx<T>, dim: usize) -> Result<Operator<T>> {
    let (a, ad) = crate::hilbert::ladder_ops::<T>(dim)?;
    Ok(ad.scale(beta).sub(&a.scale(beta.conj())).expm())
}

/// Ornstein-Uhlenbeck process dX = −X/τ dt + √c dW, sampled on a fixed grid.
#[derive(Clone, Debug, PartialEq)]
pub struct OUProcess<T: Real> {
    pub tau: T,
    /// Diffusion constant; the stationary variance is c·τ/2.
    pub c: T,
    pub dt: T,
    pub seed: u64,
    /// Starting value; `None` draws it from the stationary distribution.
    pub x0: Option<T>,
}

impl<T: Real> OUProcess<T> {
    pub fn stationary(tau: T, c: T, dt: T, seed: u64) -> Self {
        Self { tau, c, dt, seed, x0: None }
    }

    pub fn stationary_variance(&self) -> T {
        self.c * self.tau / T::lit(2.0)
    }

    /// Diffusion constant for which a frequency-valued process dephases a qubit,
    /// H = X(t)σ_z/2, with coherence e^{−t/T₂} at t ≫ τ.
    pub fn diffusion_for_t2(tau: T, t2: T) -> T {
        T::lit(2.0) / (tau * tau * t2)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > T::zero()) || !(self.c >= T::zero()) || !(self.dt > T::zero()) {
            return Err(invalid("OU process needs tau > 0, c >= 0, dt > 0"));
        }
        if self.dt >= self.tau {
            return Err(invalid(format!("OU step {} must be below the correlation time {}", self.dt, self.tau)));
        }
        Ok(())
    }
}

/// Samples X(kΔt) for k = 0..=⌈duration/Δt⌉ with the exact conditional update.
#[derive(Clone, Debug, PartialEq)]
pub struct OUTrajectory<T: Real> {
    pub dt: T,
    pub values: Vec<T>,
}

impl<T: Real> OUTrajectory<T> {
    /// Linear interpolation; clamps outside the sampled window.
    pub fn at(&self, t: T) -> T {
        let x = (t / self.dt).to_f64_lossy().max(0.0);
        let k = x.floor() as usize;
        if k + 1 >= self.values.len() {
            return *self.values.last().unwrap();
        }
        let w = T::lit(x - k as f64);
        self.values[k] * (T::one() - w) + self.values[k + 1] * w
    }

    /// ∫₀ᵀ X dt by the trapezoid rule on the sample grid.
    pub fn integral(&self) -> T {
        let mut s = T::zero();
        for w in self.values.windows(2) {
            s += (w[0] + w[1]) * self.dt / T::lit(2.0);
        }
        s
    }
}

pub fn ou_trajectory<T: Real>(p: &OUProcess<T>, duration: T) -> Result<OUTrajectory<T>> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let tau = p.tau.to_f64_lossy();
    let dt = p.dt.to_f64_lossy();
    let c = p.c.to_f64_lossy();
    let n = (duration.to_f64_lossy() / dt).ceil().max(0.0) as usize;
    let decay = (-dt / tau).exp();
    let sd = (c * tau / 2.0 * (1.0 - (-2.0 * dt / tau).exp())).sqrt();
    let mut x = match p.x0 {
        Some(v) => v.to_f64_lossy(),
        None => (c * tau / 2.0).sqrt() * { let z: f64 = StandardNormal.sample(&mut rng); z },
    };
    let mut values = Vec::with_capacity(n + 1);
    values.push(T::lit(x));
    for _ in 0..n {
        let z: f64 = StandardNormal.sample(&mut rng);
        x = x * decay + sd * z;
        values.push(T::lit(x));
    }
    Ok(OUTrajectory { dt: p.dt, values })
}

/// Derives independent child seeds for trajectory ensembles.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fitted 1/e time of a coherence curve c(t) ≈ e^{−t/T}, by least squares on ln c.
pub fn fit_decay_time(times: &[f64], coherence: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times.iter().zip(coherence).filter(|(_, &c)| c > 0.05).map(|(&t, &c)| (t, c.ln())).collect();
    if pts.len() < 2 {
        return Err(guard("too few points above the noise floor to fit a decay"));
    }
    // slope through the origin, since c(0) = 1
    let num: f64 = pts.iter().map(|(t, l)| t * l).sum();
    let den: f64 = pts.iter().map(|(t, _)| t * t).sum();
    let slope = num / den;
    if !(slope < 0.0) {
        return Err(guard("coherence does not decay"));
    }
    Ok(-1.0 / slope)
}
