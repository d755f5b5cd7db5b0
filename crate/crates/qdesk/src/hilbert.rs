//! Finite-dimensional quantum objects over composite qubit and truncated Fock spaces.
//!
//! Qubit convention: basis index 0 is the excited state |e⟩ (σ_z = +1), index 1 is |g⟩,
//! and σ⁺ = |e⟩⟨g|.

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;
use nalgebra::{ComplexField, DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex;

pub type Cx<T> = Complex<T>;

const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-8;

#[inline]
pub(crate) fn cx<T: Real>(re: f64, im: f64) -> Cx<T> {
    Complex::new(T::lit(re), T::lit(im))
}

fn check_dims(dims: &[usize], side: usize) -> Result<()> {
    if dims.is_empty() || dims.iter().any(|&d| d == 0) {
        return Err(invalid(format!("subsystem dims must be nonempty and positive, got {dims:?}")));
    }
    let prod: usize = dims.iter().product();
    if prod != side {
        return Err(Error::DimensionMismatch(format!(
            "dims {dims:?} multiply to {prod}, data side is {side}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator<T: Real> {
    dims: Vec<usize>,
    data: DMatrix<Cx<T>>,
}

impl<T: Real> Operator<T> {
    pub fn new(dims: Vec<usize>, data: DMatrix<Cx<T>>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "operator must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        check_dims(&dims, data.nrows())?;
        Ok(Self { dims, data })
    }

    /// Single-subsystem operator from a square matrix.
    pub fn from_matrix(data: DMatrix<Cx<T>>) -> Result<Self> {
        let n = data.nrows();
        Self::new(vec![n], data)
    }

    pub fn identity(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), data: DMatrix::identity(n, n) }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self { dims: dims.to_vec(), data: DMatrix::zeros(n, n) }
    }

    pub fn from_diagonal(dims: &[usize], diag: &[Cx<T>]) -> Result<Self> {
        check_dims(dims, diag.len())?;
        Ok(Self { dims: dims.to_vec(), data: DMatrix::from_diagonal(&DVector::from_column_slice(diag)) })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<Cx<T>> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<Cx<T>> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Cx<T> {
        self.data[(r, c)]
    }

    pub fn adjoint(&self) -> Self {
        Self { dims: self.dims.clone(), data: self.data.adjoint() }
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(())
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { dims: self.dims.clone(), data: &self.data * &other.data })
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { dims: self.dims.clone(), data: &self.data + &other.data })
    }

    pub fn try_sub(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        Ok(Self { dims: self.dims.clone(), data: &self.data - &other.data })
    }

    /// Panicking product for operators already known to share a space.
    pub fn mul(&self, other: &Self) -> Self {
        self.try_mul(other).expect("operator spaces differ")
    }

    pub fn add(&self, other: &Self) -> Self {
        self.try_add(other).expect("operator spaces differ")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.try_sub(other).expect("operator spaces differ")
    }

    pub fn scale(&self, s: Cx<T>) -> Self {
        Self { dims: self.dims.clone(), data: &self.data * s }
    }

    pub fn scale_re(&self, s: T) -> Self {
        self.scale(Complex::new(s, T::zero()))
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.try_mul(other)?.sub(&other.mul(self)))
    }

    pub fn trace(&self) -> Cx<T> {
        self.data.trace()
    }

    /// Largest absolute row sum; an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> T {
        let mut best = T::zero();
        for r in 0..self.dim() {
            let mut s = T::zero();
            for c in 0..self.dim() {
                s += self.data[(r, c)].modulus();
            }
            if s > best {
                best = s;
            }
        }
        best
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut best = T::zero();
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            let d = (*a - *b).modulus();
            if d > best {
                best = d;
            }
        }
        best
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        let n = self.dim();
        for r in 0..n {
            for c in r..n {
                if (self.data[(r, c)] - self.data[(c, r)].conj()).modulus() > tol {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        let p = self.data.adjoint() * &self.data;
        let id = DMatrix::<Cx<T>>::identity(self.dim(), self.dim());
        p.iter().zip(id.iter()).all(|(a, b)| (*a - *b).modulus() <= tol)
    }

    /// e^{-i H t} for Hermitian H, through the Hermitian eigendecomposition.
    pub fn propagator(&self, t: T) -> Result<Self> {
        let tol = T::lit(1e-9) * (T::one() + self.norm_inf());
        if !self.is_hermitian(tol) {
            return Err(invalid("propagator requires a Hermitian generator"));
        }
        let eig = self.data.clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let phases = DVector::from_iterator(
            self.dim(),
            eig.eigenvalues.iter().map(|&e| Complex::new(T::zero(), -(e * t)).exp()),
        );
        let mut vd = v.clone();
        for (j, mut col) in vd.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        Ok(Self { dims: self.dims.clone(), data: vd * v.adjoint() })
    }

    /// General matrix exponential e^{A}.
    pub fn expm(&self) -> Self {
        Self { dims: self.dims.clone(), data: self.data.clone().exp() }
    }

    pub fn apply(&self, psi: &StateVector<T>) -> Result<StateVector<T>> {
        if psi.dims != self.dims {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims, psi.dims)));
        }
        Ok(StateVector::unnormalized(self.dims.clone(), &self.data * &psi.data)?)
    }

    /// Embeds a single-subsystem operator at `site` of a composite space.
    pub fn embed(&self, site: usize, dims: &[usize]) -> Result<Self> {
        if site >= dims.len() || dims[site] != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "cannot place a {}-dim operator at site {site} of {dims:?}",
                self.dim()
            )));
        }
        let factors: Vec<Self> = dims
            .iter()
            .enumerate()
            .map(|(k, &d)| if k == site { self.clone() } else { Self::identity(&[d]) })
            .collect();
        tensor(&factors)
    }

    pub fn to_sparse(&self) -> CsrMatrix<Cx<T>> {
        let n = self.dim();
        let mut coo = CooMatrix::new(n, n);
        for c in 0..n {
            for r in 0..n {
                let v = self.data[(r, c)];
                if v.re != T::zero() || v.im != T::zero() {
                    coo.push(r, c, v);
                }
            }
        }
        CsrMatrix::from(&coo)
    }
}

/// Kronecker product with concatenated subsystem dims.
pub fn tensor<T: Real>(ops: &[Operator<T>]) -> Result<Operator<T>> {
    let (first, rest) = ops.split_first().ok_or_else(|| invalid("tensor of an empty list"))?;
    let mut dims = first.dims.clone();
    let mut data = first.data.clone();
    for op in rest {
        data = data.kronecker(&op.data);
        dims.extend_from_slice(&op.dims);
    }
    Ok(Operator { dims, data })
}

/// Truncated annihilation and creation operators; a†|dim−1⟩ is cut to zero.
pub fn ladder_ops<T: Real>(dim: usize) -> Result<(Operator<T>, Operator<T>)> {
    if dim < 2 {
        return Err(invalid(format!("ladder operators need dim >= 2, got {dim}")));
    }
    let mut a = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex::new(T::lit((n as f64).sqrt()), T::zero());
    }
    let a = Operator { dims: vec![dim], data: a };
    let ad = a.adjoint();
    Ok((a, ad))
}

pub fn number_op<T: Real>(dim: usize) -> Operator<T> {
    let diag: Vec<Cx<T>> = (0..dim).map(|n| cx(n as f64, 0.0)).collect();
    Operator::from_diagonal(&[dim], &diag).expect("positive dim")
}

fn qubit<T: Real>(m: [[(f64, f64); 2]; 2]) -> Operator<T> {
    let data = DMatrix::from_fn(2, 2, |r, c| cx(m[r][c].0, m[r][c].1));
    Operator { dims: vec![2], data }
}

pub fn sigma_x<T: Real>() -> Operator<T> {
    qubit([[(0.0, 0.0), (1.0, 0.0)], [(1.0, 0.0), (0.0, 0.0)]])
}

pub fn sigma_y<T: Real>() -> Operator<T> {
    qubit([[(0.0, 0.0), (0.0, -1.0)], [(0.0, 1.0), (0.0, 0.0)]])
}

pub fn sigma_z<T: Real>() -> Operator<T> {
    qubit([[(1.0, 0.0), (0.0, 0.0)], [(0.0, 0.0), (-1.0, 0.0)]])
}

/// σ⁺ = |e⟩⟨g|.
pub fn sigma_plus<T: Real>() -> Operator<T> {
    qubit([[(0.0, 0.0), (1.0, 0.0)], [(0.0, 0.0), (0.0, 0.0)]])
}

pub fn sigma_minus<T: Real>() -> Operator<T> {
    sigma_plus::<T>().adjoint()
}

/// cos φ σ_x + sin φ σ_y.
pub fn sigma_phi<T: Real>(phi: f64) -> Operator<T> {
    sigma_x::<T>().scale_re(T::lit(phi.cos())).add(&sigma_y::<T>().scale_re(T::lit(phi.sin())))
}

/// Spin-1 operators (S_x, S_y, S_z) in the basis m = +1, 0, −1.
pub fn spin1_ops<T: Real>() -> (Operator<T>, Operator<T>, Operator<T>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sx = DMatrix::from_fn(3, 3, |r, c| if r.abs_diff(c) == 1 { cx(s, 0.0) } else { cx(0.0, 0.0) });
    let sy = DMatrix::from_fn(3, 3, |r, c| match (r as i32) - (c as i32) {
        -1 => cx(0.0, -s),
        1 => cx(0.0, s),
        _ => cx(0.0, 0.0),
    });
    let sz = DMatrix::from_fn(3, 3, |r, c| if r == c { cx(1.0 - r as f64, 0.0) } else { cx(0.0, 0.0) });
    (
        Operator { dims: vec![3], data: sx },
        Operator { dims: vec![3], data: sy },
        Operator { dims: vec![3], data: sz },
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T: Real> {
    dims: Vec<usize>,
    data: DVector<Cx<T>>,
    normalized: bool,
}

impl<T: Real> StateVector<T> {
    /// Normalized state; rejects norms off by more than 1e-10.
    pub fn new(dims: Vec<usize>, data: DVector<Cx<T>>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        let n = data.norm().to_f64_lossy();
        if (n - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("state norm {n} is not 1; use `unnormalized` or `normalize`")));
        }
        Ok(Self { dims, data, normalized: true })
    }

    pub fn unnormalized(dims: Vec<usize>, data: DVector<Cx<T>>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        Ok(Self { dims, data, normalized: false })
    }

    /// Rescales to unit norm; a zero vector is an error.
    pub fn normalize(dims: Vec<usize>, data: DVector<Cx<T>>) -> Result<Self> {
        check_dims(&dims, data.len())?;
        let n = data.norm();
        if n == T::zero() {
            return Err(invalid("cannot normalize the zero vector"));
        }
        Ok(Self { dims, data: data.unscale(n), normalized: true })
    }

    pub fn basis(dims: &[usize], index: usize) -> Result<Self> {
        let n: usize = dims.iter().product();
        if index >= n {
            return Err(invalid(format!("basis index {index} outside dimension {n}")));
        }
        let mut v = DVector::zeros(n);
        v[index] = Complex::new(T::one(), T::zero());
        Self::new(dims.to_vec(), v)
    }

    /// Product basis state from per-subsystem levels.
    pub fn product_basis(dims: &[usize], levels: &[usize]) -> Result<Self> {
        if levels.len() != dims.len() || levels.iter().zip(dims).any(|(l, d)| l >= d) {
            return Err(invalid(format!("levels {levels:?} do not fit dims {dims:?}")));
        }
        let idx = levels.iter().zip(dims).fold(0, |acc, (l, d)| acc * d + l);
        Self::basis(dims, idx)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &DVector<Cx<T>> {
        &self.data
    }

    pub fn into_data(self) -> DVector<Cx<T>> {
        self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> T {
        self.data.norm()
    }

    pub fn norm_squared(&self) -> T {
        self.data.norm_squared()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Result<Cx<T>> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self.data.dotc(&other.data))
    }

    pub fn expectation(&self, op: &Operator<T>) -> Result<Cx<T>> {
        let v = op.apply(self)?;
        Ok(self.data.dotc(&v.data) / Complex::new(self.norm_squared(), T::zero()))
    }

    pub fn populations(&self) -> Vec<T> {
        self.data.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let data = self.data.kronecker(&other.data);
        Self { dims, data, normalized: self.normalized && other.normalized }
    }

    pub fn to_density(&self) -> DensityMatrix<T> {
        let v = self.data.unscale(self.norm());
        DensityMatrix { dims: self.dims.clone(), data: &v * v.adjoint() }
    }
}

/// Overlap fidelity |⟨ψ₁|ψ₂⟩|²/(⟨ψ₁|ψ₁⟩⟨ψ₂|ψ₂⟩), valid for unnormalized inputs.
pub fn state_fidelity<T: Real>(s1: &StateVector<T>, s2: &StateVector<T>) -> Result<T> {
    let n1 = s1.norm_squared();
    let n2 = s2.norm_squared();
    if n1 == T::zero() || n2 == T::zero() {
        return Err(invalid("fidelity with a zero vector"));
    }
    let ov = s1.inner(s2)?;
    let f = ov.norm_sqr() / (n1 * n2);
    Ok(if f > T::one() { T::one() } else { f })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    dims: Vec<usize>,
    data: DMatrix<Cx<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validated density matrix: Hermitian, trace at most one, positive semidefinite.
    pub fn new(dims: Vec<usize>, data: DMatrix<Cx<T>>) -> Result<Self> {
        let rho = Self::new_unchecked(dims, data)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape-checked only; integrators use this for intermediate states.
    pub fn new_unchecked(dims: Vec<usize>, data: DMatrix<Cx<T>>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch("density matrix must be square".into()));
        }
        check_dims(&dims, data.nrows())?;
        Ok(Self { dims, data })
    }

    pub fn validate(&self) -> Result<()> {
        let op = Operator { dims: self.dims.clone(), data: self.data.clone() };
        if !op.is_hermitian(T::lit(HERMITIAN_TOL)) {
            return Err(invalid("density matrix is not Hermitian"));
        }
        let tr = self.trace().to_f64_lossy();
        if tr > 1.0 + 1e-10 {
            return Err(invalid(format!("density matrix trace {tr} exceeds 1")));
        }
        let min = self.min_eigenvalue().to_f64_lossy();
        if min < PSD_TOL {
            return Err(invalid(format!("density matrix has eigenvalue {min}")));
        }
        Ok(())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<Cx<T>> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<Cx<T>> {
        self.data
    }

    pub fn trace(&self) -> T {
        self.data.trace().re
    }

    pub fn min_eigenvalue(&self) -> T {
        let h = (&self.data + self.data.adjoint()) * Complex::new(T::lit(0.5), T::zero());
        h.symmetric_eigen().eigenvalues.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
    }

    pub fn expectation(&self, op: &Operator<T>) -> Result<Cx<T>> {
        if op.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", op.dims(), self.dims)));
        }
        Ok((op.data() * &self.data).trace())
    }

    pub fn populations(&self) -> Vec<T> {
        (0..self.dim()).map(|k| self.data[(k, k)].re).collect()
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized target.
    pub fn fidelity_pure(&self, psi: &StateVector<T>) -> Result<T> {
        if psi.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", psi.dims(), self.dims)));
        }
        let v = psi.data().unscale(psi.norm());
        Ok(v.dotc(&(&self.data * &v)).re)
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self { dims, data: self.data.kronecker(&other.data) }
    }

    /// Reduced state on the listed subsystems, in their original order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() || keep.iter().any(|&k| k >= self.dims.len()) || keep.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(format!("keep list {keep:?} must be strictly increasing sites")));
        }
        let nd = self.dims.len();
        let kdims: Vec<usize> = keep.iter().map(|&k| self.dims[k]).collect();
        let kn: usize = kdims.iter().product();
        let mut out = DMatrix::zeros(kn, kn);
        let n = self.dim();
        let digits = |mut idx: usize| {
            let mut d = vec![0usize; nd];
            for s in (0..nd).rev() {
                d[s] = idx % self.dims[s];
                idx /= self.dims[s];
            }
            d
        };
        let kept = |d: &[usize]| keep.iter().fold(0, |acc, &k| acc * self.dims[k] + d[k]);
        let traced_equal = |a: &[usize], b: &[usize]| (0..nd).all(|s| keep.contains(&s) || a[s] == b[s]);
        let all: Vec<Vec<usize>> = (0..n).map(digits).collect();
        for r in 0..n {
            for c in 0..n {
                if traced_equal(&all[r], &all[c]) {
                    out[(kept(&all[r]), kept(&all[c]))] += self.data[(r, c)];
                }
            }
        }
        Ok(Self { dims: kdims, data: out })
    }
}

/// Truncated thermal state of one bosonic mode, renormalized after the tail check.
pub fn thermal_state<T: Real>(nbar: f64, dim: usize) -> Result<DensityMatrix<T>> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(invalid(format!("mean occupation must be finite and >= 0, got {nbar}")));
    }
    if dim == 0 {
        return Err(invalid("thermal state needs dim >= 1"));
    }
    let q = nbar / (nbar + 1.0);
    let tail = q.powi(dim as i32);
    if tail > 1e-6 {
        return Err(Error::Truncation(format!(
            "thermal tail weight {tail:.3e} above 1e-6 at dim {dim} for nbar {nbar}"
        )));
    }
    let p: Vec<f64> = (0..dim).map(|n| q.powi(n as i32) / (nbar + 1.0)).collect();
    let total: f64 = p.iter().sum();
    let diag: Vec<Cx<T>> = p.iter().map(|&x| cx(x / total, 0.0)).collect();
    Ok(DensityMatrix { dims: vec![dim], data: DMatrix::from_diagonal(&DVector::from_vec(diag)) })
}

/// Coherent state c_n = e^{−|α|²/2} αⁿ/√n!, renormalized after the tail check.
pub fn coherent_state<T: Real>(alpha: Complex<f64>, dim: usize) -> Result<StateVector<T>> {
    if dim == 0 {
        return Err(invalid("coherent state needs dim >= 1"));
    }
    let mut c = Vec::with_capacity(dim);
    let mut amp = Complex::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..dim {
        if n > 0 {
            amp = amp * alpha / (n as f64).sqrt();
        }
        c.push(amp);
    }
    let kept: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    let tail = 1.0 - kept;
    if tail > 1e-8 {
        return Err(Error::Truncation(format!(
            "coherent tail weight {tail:.3e} above 1e-8 at dim {dim} for |alpha|^2 {}",
            alpha.norm_sqr()
        )));
    }
    let s = kept.sqrt();
    let data = DVector::from_iterator(dim, c.iter().map(|z| cx(z.re / s, z.im / s)));
    StateVector::new(vec![dim], data)
}

/// Diagonal thermal density matrix of several independent modes.
pub fn thermal_product<T: Real>(nbars: &[f64], dims: &[usize]) -> Result<DensityMatrix<T>> {
    if nbars.len() != dims.len() || dims.is_empty() {
        return Err(invalid("one mean occupation per mode"));
    }
    let mut rho = thermal_state::<T>(nbars[0], dims[0])?;
    for (&nb, &d) in nbars.iter().zip(dims).skip(1) {
        rho = rho.tensor(&thermal_state(nb, d)?);
    }
    Ok(rho)
}
