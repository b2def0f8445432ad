//! State vectors, Hamiltonian assembly and exact dense time evolution.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis, ShapeBuilder, Zip};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pauli::{OperatorBasis, PauliString};
use crate::policy::{hilbert_dim, NumericalPolicy};

pub type CMatrix = Array2<Complex64>;

/// Normalised pure state of `L` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    sites: usize,
    amplitudes: Array1<Complex64>,
}

impl StateVector {
    /// Wraps amplitudes that must already have unit norm.
    pub fn new(sites: usize, amplitudes: Array1<Complex64>) -> Result<Self> {
        let dim = hilbert_dim(sites)?;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: amplitudes.len(),
            });
        }
        let norm = l2_norm(amplitudes.view());
        if (norm - 1.0).abs() > NumericalPolicy::default().norm_tol {
            return Err(Error::Validation(format!("state norm {norm} is not 1")));
        }
        Ok(Self { sites, amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(sites: usize, mut amplitudes: Array1<Complex64>) -> Result<Self> {
        let norm = l2_norm(amplitudes.view());
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Validation("cannot normalise a zero vector".into()));
        }
        amplitudes.mapv_inplace(|a| a / norm);
        Self::new(sites, amplitudes)
    }

    pub fn basis_state(sites: usize, index: usize) -> Result<Self> {
        let dim = hilbert_dim(sites)?;
        if index >= dim {
            return Err(Error::Validation(format!("basis index {index} >= {dim}")));
        }
        let mut amps = Array1::zeros(dim);
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self {
            sites,
            amplitudes: amps,
        })
    }

    /// Tensor product of single-site spinors `(a0, a1)`; entry 0 is site 0.
    pub fn product(spinors: &[[Complex64; 2]]) -> Result<Self> {
        let sites = spinors.len();
        let dim = hilbert_dim(sites)?;
        let mut amps = Array1::from_elem(dim, Complex64::new(1.0, 0.0));
        for (r, a) in amps.iter_mut().enumerate() {
            for (site, sp) in spinors.iter().enumerate() {
                *a *= sp[(r >> site) & 1];
            }
        }
        Self::normalized(sites, amps)
    }

    pub(crate) fn from_raw(sites: usize, amplitudes: Array1<Complex64>) -> Self {
        Self { sites, amplitudes }
    }

    pub fn site_count(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> ArrayView1<'_, Complex64> {
        self.amplitudes.view()
    }

    pub fn into_amplitudes(self) -> Array1<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        l2_norm(self.amplitudes.view())
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

pub(crate) fn l2_norm(v: ArrayView1<Complex64>) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Coupling vector over an operator basis: `H = sum_a c_a O_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    basis: OperatorBasis,
    couplings: Vec<f64>,
}

impl HamiltonianSpec {
    pub fn new(basis: OperatorBasis, couplings: Vec<f64>) -> Result<Self> {
        if couplings.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                actual: couplings.len(),
            });
        }
        if couplings.iter().any(|c| !c.is_finite()) {
            return Err(Error::Validation("non-finite coupling".into()));
        }
        Ok(Self { basis, couplings })
    }

    pub fn basis(&self) -> &OperatorBasis {
        &self.basis
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn site_count(&self) -> usize {
        self.basis.site_count()
    }

    pub fn coupling_norm(&self) -> f64 {
        self.couplings.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.couplings.iter().all(|&c| c == 0.0)
    }

    /// Same basis with every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            basis: self.basis.clone(),
            couplings: self.couplings.iter().map(|c| c * factor).collect(),
        }
    }

    /// Dense matrix `sum_a c_a O_a`.
    pub fn assemble(&self, policy: &NumericalPolicy) -> Result<CMatrix> {
        let dim = hilbert_dim(self.site_count())?;
        policy.check_dense("Hamiltonian", dim)?;
        let mut h = Array2::zeros((dim, dim));
        for (c, s) in self.couplings.iter().zip(self.basis.terms()) {
            if *c == 0.0 {
                continue;
            }
            for r in 0..dim {
                let (row, ph) = s.action(r);
                h[[row, r]] += ph * *c;
            }
        }
        Ok(h)
    }

    /// Matrix-free `H psi`.
    pub fn apply(&self, psi: ArrayView1<Complex64>) -> Array1<Complex64> {
        let mut out = Array1::zeros(psi.len());
        for (c, s) in self.couplings.iter().zip(self.basis.terms()) {
            s.apply_add(Complex64::new(*c, 0.0), psi, out.view_mut());
        }
        out
    }

    /// Stable 64-bit key over `(L, basis, couplings)`.
    pub fn cache_key(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.site_count() as u64).to_le_bytes());
        h.update((self.basis.len() as u64).to_le_bytes());
        for (c, s) in self.couplings.iter().zip(self.basis.terms()) {
            h.update(s.x_mask().to_le_bytes());
            h.update(s.z_mask().to_le_bytes());
            h.update(c.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(first)
    }
}

/// Full spectral decomposition `H = V diag(E) V^dagger`, energies ascending.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    energies: Array1<f64>,
    vectors: CMatrix,
}

impl EigenSystem {
    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    pub fn vectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `max |H - V diag(E) V^dagger|`.
    pub fn reconstruction_residual(&self, h: &CMatrix) -> f64 {
        let ve = &self.vectors * &self.energies.mapv(|e| Complex64::new(e, 0.0));
        let back = ve.dot(&conj_t(&self.vectors));
        (h - &back).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Coefficients `<i|psi>` in the eigenbasis.
    pub fn to_eigenbasis(&self, psi: ArrayView1<Complex64>) -> Array1<Complex64> {
        conj_t(&self.vectors).dot(&psi)
    }

    /// Propagator `exp(-iHt)` as a dense matrix.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let phases = self.energies.mapv(|e| Complex64::from_polar(1.0, -e * t));
        let vp = &self.vectors * &phases;
        vp.dot(&conj_t(&self.vectors))
    }

    /// Serialises the decomposition: magic, `L`, `n`, key, then little-endian f64 data
    /// (energies, then eigenvectors column-major as re/im pairs).
    pub fn save(&self, path: &Path, spec: &HamiltonianSpec) -> Result<()> {
        let dim = self.dim();
        let mut buf = Vec::with_capacity(32 + 8 * dim + 16 * dim * dim);
        buf.extend_from_slice(EIGEN_MAGIC);
        buf.extend_from_slice(&(spec.site_count() as u64).to_le_bytes());
        buf.extend_from_slice(&(spec.basis().len() as u64).to_le_bytes());
        buf.extend_from_slice(&spec.cache_key().to_le_bytes());
        for e in &self.energies {
            buf.extend_from_slice(&e.to_le_bytes());
        }
        for col in self.vectors.axis_iter(Axis(1)) {
            for v in col {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    /// Loads a dump written by [`EigenSystem::save`]; `Ok(None)` when the key does not match `spec`.
    pub fn load(path: &Path, spec: &HamiltonianSpec) -> Result<Option<Self>> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let corrupt = || Error::Parse(format!("{}: not an eigensystem dump", path.display()));
        if bytes.len() < 32 || &bytes[..8] != EIGEN_MAGIC {
            return Err(corrupt());
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let (sites, n, key) = (word(8) as usize, word(16) as usize, word(24));
        if sites != spec.site_count() || n != spec.basis().len() || key != spec.cache_key() {
            return Ok(None);
        }
        let dim = hilbert_dim(sites)?;
        if bytes.len() != 32 + 8 * dim + 16 * dim * dim {
            return Err(corrupt());
        }
        let float = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let energies = Array1::from_shape_fn(dim, |i| float(32 + 8 * i));
        let base = 32 + 8 * dim;
        let vectors = Array2::from_shape_fn((dim, dim), |(r, c)| {
            let at = base + 16 * (c * dim + r);
            Complex64::new(float(at), float(at + 8))
        });
        Ok(Some(Self { energies, vectors }))
    }
}

const EIGEN_MAGIC: &[u8; 8] = b"QTEIGSYS";

pub(crate) fn conj_t(m: &CMatrix) -> CMatrix {
    m.t().mapv(|v| v.conj())
}

/// Diagonalises a Hermitian matrix.
pub fn diagonalize(h: &CMatrix, policy: &NumericalPolicy) -> Result<EigenSystem> {
    let dim = h.nrows();
    if h.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: h.ncols(),
        });
    }
    policy.check_dense("eigendecomposition", dim)?;
    let mut asym: f64 = 0.0;
    for i in 0..dim {
        for j in 0..=i {
            asym = asym.max((h[[i, j]] - h[[j, i]].conj()).norm());
        }
    }
    if asym > policy.hermitian_tol {
        return Err(Error::Validation(format!(
            "matrix is not Hermitian (max asymmetry {asym:.3e})"
        )));
    }
    // ndarray-linalg treats a row-major complex input as its transpose, which for a
    // Hermitian matrix is the conjugate; hand LAPACK a column-major copy instead.
    let mut col_major = Array2::zeros(h.dim().f());
    col_major.assign(h);
    let (energies, vectors) = col_major.eigh(UPLO::Lower)?;
    Ok(EigenSystem { energies, vectors })
}

/// Assembles and diagonalises in one step.
pub fn diagonalize_spec(spec: &HamiltonianSpec, policy: &NumericalPolicy) -> Result<EigenSystem> {
    diagonalize(&spec.assemble(policy)?, policy)
}

/// `exp(-iHt) |psi>`.
pub fn evolve(state: &StateVector, eig: &EigenSystem, t: f64) -> Result<StateVector> {
    if state.dim() != eig.dim() {
        return Err(Error::DimensionMismatch {
            expected: eig.dim(),
            actual: state.dim(),
        });
    }
    if t == 0.0 {
        return Ok(state.clone());
    }
    let mut coeff = eig.to_eigenbasis(state.amplitudes());
    Zip::from(&mut coeff)
        .and(eig.energies())
        .for_each(|c, &e| *c *= Complex64::from_polar(1.0, -e * t));
    Ok(StateVector::from_raw(state.sites, eig.vectors().dot(&coeff)))
}

/// Evolves many states at once; equivalent to calling [`evolve`] on each.
pub fn evolve_many(states: &[StateVector], eig: &EigenSystem, t: f64) -> Result<Vec<StateVector>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    let dim = eig.dim();
    if let Some(bad) = states.iter().find(|s| s.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    if t == 0.0 {
        return Ok(states.to_vec());
    }
    let mut block = Array2::zeros((dim, states.len()));
    for (k, s) in states.iter().enumerate() {
        block.column_mut(k).assign(&s.amplitudes);
    }
    let mut coeff = conj_t(eig.vectors()).dot(&block);
    for (mut row, &e) in coeff.axis_iter_mut(Axis(0)).zip(eig.energies()) {
        let ph = Complex64::from_polar(1.0, -e * t);
        row.mapv_inplace(|c| c * ph);
    }
    let out = eig.vectors().dot(&coeff);
    Ok(out
        .axis_iter(Axis(1))
        .zip(states)
        .map(|(col, s)| StateVector::from_raw(s.sites, col.to_owned()))
        .collect())
}

/// `<psi| P |psi>` for a Hermitian Pauli string.
pub fn expectation(state: &StateVector, op: &PauliString) -> Result<f64> {
    if op.site_count() != state.site_count() {
        return Err(Error::DimensionMismatch {
            expected: state.site_count(),
            actual: op.site_count(),
        });
    }
    if !op.is_hermitian() {
        return Err(Error::Validation(format!("{op} is not Hermitian")));
    }
    let v = op.sandwich(state.amplitudes(), state.amplitudes());
    debug_assert!(v.im.abs() < 1e-10, "imaginary expectation {v}");
    Ok(v.re)
}

/// `<psi| H^m |psi>` by repeated matrix-vector products.
pub fn moment_expectation(state: &StateVector, h: &CMatrix, m: u32) -> Result<f64> {
    if m < 1 {
        return Err(Error::Validation("moment order must be >= 1".into()));
    }
    if h.nrows() != state.dim() || h.ncols() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            actual: h.nrows(),
        });
    }
    let mut v = state.amplitudes.clone();
    for _ in 0..m / 2 {
        v = h.dot(&v);
    }
    Ok(if m % 2 == 0 {
        v.iter().map(|a| a.norm_sqr()).sum()
    } else {
        let hv = h.dot(&v);
        v.iter().zip(hv.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>().re
    })
}

/// Initial/final state pair related by `exp(-iHt)`.
#[derive(Debug, Clone)]
pub struct QuenchPair {
    pub initial: StateVector,
    pub final_state: StateVector,
    pub time: f64,
}

impl QuenchPair {
    pub fn new(initial: StateVector, final_state: StateVector, time: f64) -> Result<Self> {
        if initial.site_count() != final_state.site_count() {
            return Err(Error::LengthMismatch {
                left: initial.site_count(),
                right: final_state.site_count(),
            });
        }
        if !(time >= 0.0) {
            return Err(Error::Validation(format!("negative or NaN quench time {time}")));
        }
        Ok(Self {
            initial,
            final_state,
            time,
        })
    }

    /// Forward-simulates `initial` for time `t`.
    pub fn simulate(initial: StateVector, eig: &EigenSystem, t: f64) -> Result<Self> {
        let final_state = evolve(&initial, eig, t)?;
        Self::new(initial, final_state, t)
    }

    /// Forward-simulates a batch with one dense propagation.
    pub fn simulate_many(initial: Vec<StateVector>, eig: &EigenSystem, t: f64) -> Result<Vec<Self>> {
        let finals = evolve_many(&initial, eig, t)?;
        initial
            .into_iter()
            .zip(finals)
            .map(|(i, f)| Self::new(i, f, t))
            .collect()
    }

    pub fn site_count(&self) -> usize {
        self.initial.site_count()
    }
}

/// Operators of a basis transformed into a fixed eigenbasis, for repeated
/// evaluation of `C_ab(t) = Tr[O_a O_b(t)] / D` at many times.
pub struct HeisenbergFrame {
    energies: Array1<f64>,
    /// Row `a` holds `V^dagger O_a V` flattened row-major.
    flat: CMatrix,
}

impl HeisenbergFrame {
    pub fn new(basis: &OperatorBasis, eig: &EigenSystem, policy: &NumericalPolicy) -> Result<Self> {
        let dim = hilbert_dim(basis.site_count())?;
        if dim != eig.dim() {
            return Err(Error::DimensionMismatch {
                expected: eig.dim(),
                actual: dim,
            });
        }
        policy.check_dense("Heisenberg frame", dim)?;
        let required = (basis.len() as u128) * (dim as u128) * (dim as u128) * 16;
        if required > policy.memory_budget_bytes {
            return Err(Error::Capacity {
                what: "Heisenberg frame (bytes)".into(),
                required,
                budget: policy.memory_budget_bytes,
            });
        }
        let v = eig.vectors();
        let vdag = conj_t(v);
        let mut flat = Array2::zeros((basis.len(), dim * dim));
        let mut pv = Array2::zeros((dim, dim));
        for (a, op) in basis.terms().iter().enumerate() {
            for (col_in, mut col_out) in v.axis_iter(Axis(1)).zip(pv.axis_iter_mut(Axis(1))) {
                op.apply_into(col_in, col_out.view_mut());
            }
            let o = vdag.dot(&pv);
            flat.row_mut(a)
                .assign(&o.into_shape(dim * dim).expect("contiguous"));
        }
        Ok(Self {
            energies: eig.energies().clone(),
            flat,
        })
    }

    /// `C(t)` with `C_ab = Tr[O_a O_b(t)] / D`.
    pub fn correlation(&self, t: f64) -> Array2<f64> {
        let dim = self.energies.len();
        let ph: Array1<Complex64> = Array1::from_shape_fn(dim * dim, |k| {
            let (i, j) = (k / dim, k % dim);
            Complex64::from_polar(1.0, (self.energies[i] - self.energies[j]) * t)
        });
        let weighted = &self.flat * &ph;
        let conj = self.flat.mapv(|v| v.conj());
        let c = conj.dot(&weighted.t());
        c.mapv(|v| v.re / dim as f64)
    }

    pub fn basis_len(&self) -> usize {
        self.flat.nrows()
    }
}

/// `C_ab(t) = Tr[O_a(0) O_b(t)] / D` with `O(t) = exp(iHt) O exp(-iHt)`.
pub fn heisenberg_correlation(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    t: f64,
    policy: &NumericalPolicy,
) -> Result<Array2<f64>> {
    Ok(HeisenbergFrame::new(basis, eig, policy)?.correlation(t))
}

/// Heisenberg-picture operator `exp(iHt) O exp(-iHt)` as a dense matrix.
pub fn heisenberg_operator(op: &PauliString, eig: &EigenSystem, t: f64, policy: &NumericalPolicy) -> Result<CMatrix> {
    let dim = eig.dim();
    policy.check_dense("Heisenberg operator", dim)?;
    let u = eig.propagator(t);
    let mut pu = Array2::zeros((dim, dim));
    for (col_in, mut col_out) in u.axis_iter(Axis(1)).zip(pu.axis_iter_mut(Axis(1))) {
        op.apply_into(col_in, col_out.view_mut());
    }
    Ok(conj_t(&u).dot(&pu))
}

/// Maximum absolute entry of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
}
