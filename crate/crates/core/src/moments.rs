//! Single-quench reconstruction from conserved moments `<H^m>`.
//!
//! Tensors are symmetric, so only one coefficient per index multiset is
//! stored. Multisets are ranked in colexicographic order of the strictly
//! increasing sequence `a_k + k`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Observable, OperatorBasis};
use crate::policy::NumericalPolicy;
use crate::quantum::{diagonalize_spec, EigenSystem, HamiltonianSpec, QuenchPair, StateVector};
use crate::rng::{stream_rng, Stream};

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Rank of a non-decreasing index tuple among all multisets of its size.
fn multiset_rank(sorted: &[usize]) -> usize {
    sorted
        .iter()
        .enumerate()
        .map(|(k, &a)| binomial(a + k, k + 1))
        .sum()
}

fn multiset_from_counts(counts: &[usize], out: &mut Vec<usize>) {
    out.clear();
    for (a, &c) in counts.iter().enumerate() {
        out.extend(std::iter::repeat_n(a, c));
    }
}

/// Number of distinct orderings of a sorted tuple.
fn permutations(sorted: &[usize]) -> f64 {
    let mut total = 1.0;
    let mut run = 0;
    for (k, w) in sorted.iter().enumerate() {
        total *= (k + 1) as f64;
        if k > 0 && sorted[k - 1] == *w {
            run += 1;
        } else {
            run = 1;
        }
        total /= run as f64;
    }
    total
}

/// All sorted index tuples of length `m` over `0..n`, in rank order.
fn multisets(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); binomial(n + m - 1, m)];
    let mut cur = vec![0usize; m];
    loop {
        out[multiset_rank(&cur)] = cur.clone();
        // advance to the next non-decreasing tuple
        let mut k = m;
        while k > 0 && cur[k - 1] == n - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        let v = cur[k - 1] + 1;
        cur[k - 1..].iter_mut().for_each(|c| *c = v);
    }
    out
}

/// Symmetric real tensor `M^(m)` over `n` operators.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTensor {
    order: usize,
    n: usize,
    coefficients: Vec<f64>,
    indices: Vec<Vec<usize>>,
    weights: Vec<f64>,
    /// Largest imaginary part discarded after symmetrisation.
    imag_residual: f64,
}

impl MomentTensor {
    /// Builds a tensor from one coefficient per multiset, in rank order.
    pub fn from_coefficients(order: usize, n: usize, coefficients: Vec<f64>) -> Result<Self> {
        if order == 0 || n == 0 {
            return Err(Error::Validation("tensor order and size must be >= 1".into()));
        }
        let indices = multisets(n, order);
        if coefficients.len() != indices.len() {
            return Err(Error::DimensionMismatch {
                expected: indices.len(),
                actual: coefficients.len(),
            });
        }
        let weights = indices.iter().map(|s| permutations(s)).collect();
        Ok(Self {
            order,
            n,
            coefficients,
            indices,
            weights,
            imag_residual: 0.0,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One coefficient per index multiset, in rank order.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn imag_residual(&self) -> f64 {
        self.imag_residual
    }

    /// Full-tensor entry for any index order.
    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.order, "index has wrong length");
        let mut sorted = index.to_vec();
        sorted.sort_unstable();
        self.coefficients[multiset_rank(&sorted)]
    }

    /// Square root of the sum of squares over all `n^m` full-tensor entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c * c)
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coefficients.iter().fold(0.0, |a, c| a.max(c.abs()))
    }

    /// `M . x^{(x) m}`.
    pub fn contract(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.coefficients)
            .zip(&self.weights)
            .map(|((s, c), w)| w * c * s.iter().map(|&a| x[a]).product::<f64>())
            .sum()
    }

    /// Value and gradient of the contraction.
    pub fn contract_with_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let m = self.order;
        let mut prefix = vec![1.0; m + 1];
        let mut value = 0.0;
        for ((s, c), w) in self.indices.iter().zip(&self.coefficients).zip(&self.weights) {
            if *c == 0.0 {
                continue;
            }
            let wc = w * c;
            for k in 0..m {
                prefix[k + 1] = prefix[k] * x[s[k]];
            }
            value += wc * prefix[m];
            let mut suffix = 1.0;
            for k in (0..m).rev() {
                grad[s[k]] += wc * prefix[k] * suffix;
                suffix *= x[s[k]];
            }
        }
        value
    }

    /// Dense `n^m` array, row-major over the index tuple; for small tensors only.
    pub fn to_dense(&self, policy: &NumericalPolicy) -> Result<Vec<f64>> {
        policy.check_tensor(self.n, self.order)?;
        let total = self.n.pow(self.order as u32);
        let mut out = vec![0.0; total];
        let mut idx = vec![0usize; self.order];
        for (flat, slot) in out.iter_mut().enumerate() {
            let mut r = flat;
            for k in (0..self.order).rev() {
                idx[k] = r % self.n;
                r /= self.n;
            }
            *slot = self.get(&idx);
        }
        Ok(out)
    }

    /// Flat little-endian dump: magic, order, n, count, coefficients.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.coefficients.len());
        buf.extend_from_slice(TENSOR_MAGIC);
        for w in [self.order, self.n, self.coefficients.len()] {
            buf.extend_from_slice(&(w as u64).to_le_bytes());
        }
        for c in &self.coefficients {
            buf.extend_from_slice(&c.to_le_bytes());
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let corrupt = || Error::Parse(format!("{}: not a moment tensor dump", path.display()));
        if bytes.len() < 32 || &bytes[..8] != TENSOR_MAGIC {
            return Err(corrupt());
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap()) as usize;
        let (order, n, count) = (word(8), word(16), word(24));
        if bytes.len() != 32 + 8 * count {
            return Err(corrupt());
        }
        let coefficients = (0..count)
            .map(|k| f64::from_le_bytes(bytes[32 + 8 * k..40 + 8 * k].try_into().unwrap()))
            .collect();
        Self::from_coefficients(order, n, coefficients)
    }
}

const TENSOR_MAGIC: &[u8; 8] = b"QTMOMENT";

/// Sums `<bra_b| O_{s1} ... O_{sm} |ket>` over all ordered index sequences,
/// binned by multiset; one bin vector per bra.
fn ordered_product_sums<O: Observable>(
    ops: &[O],
    order: usize,
    ket: &Array1<Complex64>,
    bras: &[&Array1<Complex64>],
) -> Vec<Vec<Complex64>> {
    let n = ops.len();
    let bins = binomial(n + order - 1, order);
    let dim = ket.len();

    struct Walk<'a, O> {
        ops: &'a [O],
        order: usize,
        bras: &'a [&'a Array1<Complex64>],
        bins: Vec<Vec<Complex64>>,
        counts: Vec<usize>,
        scratch: Vec<usize>,
        stack: Vec<Array1<Complex64>>,
    }

    impl<O: Observable> Walk<'_, O> {
        fn descend(&mut self, depth: usize) {
            if depth == self.order {
                multiset_from_counts(&self.counts, &mut self.scratch);
                let r = multiset_rank(&self.scratch);
                let v = &self.stack[depth];
                for (b, bra) in self.bras.iter().enumerate() {
                    let z: Complex64 = bra.iter().zip(v.iter()).map(|(a, c)| a.conj() * c).sum();
                    self.bins[b][r] += z;
                }
                return;
            }
            for a in 0..self.ops.len() {
                let (lo, hi) = self.stack.split_at_mut(depth + 1);
                self.ops[a].apply_to(lo[depth].view(), hi[0].view_mut());
                self.counts[a] += 1;
                self.descend(depth + 1);
                self.counts[a] -= 1;
            }
        }
    }

    // The leftmost operator is applied last, so walking the sequence from the
    // right visits every ordered product exactly once.
    let parts: Vec<Vec<Vec<Complex64>>> = (0..n)
        .into_par_iter()
        .map(|first| {
            let mut stack = vec![Array1::zeros(dim); order + 1];
            ops[first].apply_to(ket.view(), stack[1].view_mut());
            let mut counts = vec![0usize; n];
            counts[first] = 1;
            let mut walk = Walk {
                ops,
                order,
                bras,
                bins: vec![vec![Complex64::new(0.0, 0.0); bins]; bras.len()],
                counts,
                scratch: Vec::with_capacity(order),
                stack,
            };
            walk.descend(1);
            walk.bins
        })
        .collect();

    let mut total = vec![vec![Complex64::new(0.0, 0.0); bins]; bras.len()];
    for part in parts {
        for (t, p) in total.iter_mut().zip(part) {
            t.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
    }
    total
}

fn check_ops<O: Observable>(ops: &[O], sites: usize, order: usize, policy: &NumericalPolicy) -> Result<()> {
    if order == 0 {
        return Err(Error::Validation("moment order must be >= 1".into()));
    }
    if ops.is_empty() {
        return Err(Error::Validation("no operators supplied".into()));
    }
    if let Some(o) = ops.iter().find(|o| o.site_count() != sites) {
        return Err(Error::LengthMismatch {
            left: sites,
            right: o.site_count(),
        });
    }
    policy.check_tensor(ops.len(), order)
}

/// `M^(m)` with entries `<O...O>_0 - <O...O>_t`, symmetrised over orderings.
pub fn build_moment_tensor<O: Observable>(
    order: usize,
    ops: &[O],
    pair: &QuenchPair,
    policy: &NumericalPolicy,
) -> Result<MomentTensor> {
    check_ops(ops, pair.site_count(), order, policy)?;
    let psi0 = pair.initial.amplitudes().to_owned();
    let psit = pair.final_state.amplitudes().to_owned();
    let s0 = ordered_product_sums(ops, order, &psi0, &[&psi0]);
    let st = ordered_product_sums(ops, order, &psit, &[&psit]);
    let mut t = MomentTensor::from_coefficients(order, ops.len(), vec![0.0; s0[0].len()])?;
    let mut imag: f64 = 0.0;
    for (k, c) in t.coefficients.iter_mut().enumerate() {
        let w = t.weights[k];
        let (a, b) = (s0[0][k] / w, st[0][k] / w);
        imag = imag.max(a.im.abs()).max(b.im.abs());
        *c = a.re - b.re;
    }
    t.imag_residual = imag;
    Ok(t)
}

/// Tensors for several orders of one pair over a plain operator basis.
pub fn build_moment_tensors(
    orders: &[usize],
    basis: &OperatorBasis,
    pair: &QuenchPair,
    policy: &NumericalPolicy,
) -> Result<Vec<MomentTensor>> {
    orders
        .iter()
        .map(|&m| build_moment_tensor(m, basis.terms(), pair, policy))
        .collect()
}

/// Small-`t` tensor `-i t <psi| [H, O...O] |psi>`, the first-order Taylor term of
/// [`build_moment_tensor`] (entries are `<P>_0 - <P>_t`, hence the minus sign).
pub fn linearized_tensor<O: Observable>(
    order: usize,
    ops: &[O],
    h: &HamiltonianSpec,
    state: &StateVector,
    t: f64,
    policy: &NumericalPolicy,
) -> Result<MomentTensor> {
    check_ops(ops, state.site_count(), order, policy)?;
    if h.site_count() != state.site_count() {
        return Err(Error::LengthMismatch {
            left: h.site_count(),
            right: state.site_count(),
        });
    }
    let psi = state.amplitudes().to_owned();
    let hpsi = h.apply(state.amplitudes());
    // With P the symmetrised (Hermitian) product, <[H, P]> = 2i Im <H psi | P psi>.
    let sums = ordered_product_sums(ops, order, &psi, &[&hpsi]);
    let mut out = MomentTensor::from_coefficients(order, ops.len(), vec![0.0; sums[0].len()])?;
    for (k, c) in out.coefficients.iter_mut().enumerate() {
        *c = 2.0 * t * (sums[0][k] / out.weights[k]).im;
    }
    Ok(out)
}

/// Component `m` is `M^(m) . x^{(x) m}` for each tensor supplied.
pub fn residual(x: &[f64], tensors: &[MomentTensor]) -> Result<Vec<f64>> {
    if let Some(t) = tensors.iter().find(|t| t.n != x.len()) {
        return Err(Error::DimensionMismatch {
            expected: t.n,
            actual: x.len(),
        });
    }
    Ok(tensors.iter().map(|t| t.contract(x)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub starts: usize,
    /// Convergence threshold on the norm of the scaled residual vector.
    pub tol: f64,
    pub max_iter: usize,
    /// Clustering threshold in degrees (sign-insensitive).
    pub cluster_angle_deg: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            starts: 500,
            tol: 1e-8,
            max_iter: 200,
            cluster_angle_deg: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionCluster {
    pub representative: Vec<f64>,
    pub multiplicity: usize,
    /// Largest scaled residual norm among members.
    pub max_residual: f64,
    pub matches_truth: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub clusters: Vec<SolutionCluster>,
    pub starts: usize,
    pub converged: usize,
    pub diagnostic: Option<String>,
}

impl SolveOutcome {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }
}

/// Each order is divided by its tensor norm so all equations carry equal weight.
struct ScaledSystem<'a> {
    tensors: Vec<(&'a MomentTensor, f64)>,
    n: usize,
}

impl<'a> ScaledSystem<'a> {
    fn new(tensors: &'a [MomentTensor]) -> Self {
        let n = tensors[0].n;
        let tensors = tensors
            .iter()
            .filter_map(|t| {
                let norm = t.frobenius_norm();
                (norm > 0.0).then_some((t, 1.0 / norm))
            })
            .collect();
        Self { tensors, n }
    }

    fn residual(&self, x: &[f64]) -> Array1<f64> {
        self.tensors.iter().map(|(t, s)| s * t.contract(x)).collect()
    }

    fn jacobian(&self, x: &[f64]) -> (Array1<f64>, Array2<f64>) {
        let k = self.tensors.len();
        let mut r = Array1::zeros(k);
        let mut j = Array2::zeros((k, self.n));
        let mut g = vec![0.0; self.n];
        for (row, (t, s)) in self.tensors.iter().enumerate() {
            r[row] = s * t.contract_with_gradient(x, &mut g);
            for (a, v) in g.iter().enumerate() {
                j[[row, a]] = s * v;
            }
        }
        (r, j)
    }

    /// Levenberg-Marquardt restricted to the tangent space of the unit sphere.
    fn minimise(&self, mut x: Array1<f64>, opts: &SolverOptions) -> (Array1<f64>, f64) {
        let n = self.n;
        let mut mu = 1e-3;
        let mut r = self.residual(x.as_slice().unwrap());
        let mut cost = r.dot(&r);
        for _ in 0..opts.max_iter {
            if cost.sqrt() < opts.tol * 1e-2 {
                break;
            }
            let (_, j) = self.jacobian(x.as_slice().unwrap());
            let proj = Array2::<f64>::eye(n) - outer(&x, &x);
            let jt = j.dot(&proj);
            let jtj = jt.t().dot(&jt);
            let g = jt.t().dot(&r);
            let mut improved = false;
            for _ in 0..12 {
                let mut a = jtj.clone();
                let scale = jtj.diag().iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-300);
                for i in 0..n {
                    a[[i, i]] += mu * scale;
                }
                let Ok(step) = a.solve_into(-&g) else {
                    mu *= 10.0;
                    continue;
                };
                let step = proj.dot(&step);
                let mut trial = &x + &step;
                let nt = trial.dot(&trial).sqrt();
                trial.mapv_inplace(|v| v / nt);
                let rt = self.residual(trial.as_slice().unwrap());
                let ct = rt.dot(&rt);
                if ct < cost {
                    let small = step.dot(&step).sqrt() < 1e-15;
                    x = trial;
                    r = rt;
                    cost = ct;
                    mu = (mu / 3.0).max(1e-12);
                    improved = !small;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        (x, cost.sqrt())
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}

fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    (dot.abs() / (na * nb)).min(1.0).acos()
}

fn orient(mut x: Vec<f64>) -> Vec<f64> {
    let pivot = x.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
    if pivot < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    x
}

/// Multi-start search for all real solution lines of the polynomial system.
pub fn solve_system(tensors: &[MomentTensor], opts: &SolverOptions, truth: Option<&[f64]>) -> Result<SolveOutcome> {
    let n = tensors
        .first()
        .map(|t| t.n)
        .ok_or_else(|| Error::Validation("no tensors supplied".into()))?;
    if tensors.iter().any(|t| t.n != n) {
        return Err(Error::Validation("tensors disagree on the number of unknowns".into()));
    }
    if n < 2 {
        return Err(Error::Validation("need at least two unknowns".into()));
    }
    if opts.starts == 0 {
        return Err(Error::Validation("solver needs at least one start".into()));
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: t.len(),
            });
        }
    }
    let system = ScaledSystem::new(tensors);
    if system.tensors.is_empty() {
        return Ok(SolveOutcome {
            clusters: Vec::new(),
            starts: opts.starts,
            converged: 0,
            diagnostic: Some("every tensor is identically zero; the system does not constrain x".into()),
        });
    }
    let results: Vec<(Array1<f64>, f64)> = (0..opts.starts as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(opts.seed, Stream::SolverStarts, k);
            let mut x: Array1<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let nx = x.dot(&x).sqrt();
            x.mapv_inplace(|v| v / nx);
            system.minimise(x, opts)
        })
        .collect();

    let limit = opts.cluster_angle_deg.to_radians();
    let mut clusters: Vec<SolutionCluster> = Vec::new();
    let mut converged = 0;
    for (x, res) in results {
        if !(res < opts.tol) {
            continue;
        }
        converged += 1;
        let x = x.to_vec();
        match clusters.iter_mut().find(|c| line_angle(&c.representative, &x) < limit) {
            Some(c) => {
                c.multiplicity += 1;
                c.max_residual = c.max_residual.max(res);
            }
            None => clusters.push(SolutionCluster {
                matches_truth: truth.map(|t| line_angle(t, &x) < limit),
                representative: orient(x),
                multiplicity: 1,
                max_residual: res,
            }),
        }
    }
    clusters.sort_by(|a, b| b.multiplicity.cmp(&a.multiplicity));
    let diagnostic = (converged == 0).then(|| {
        format!(
            "none of {} starts reached residual {:.1e} within {} iterations",
            opts.starts, opts.tol, opts.max_iter
        )
    });
    Ok(SolveOutcome {
        clusters,
        starts: opts.starts,
        converged,
        diagnostic,
    })
}

/// Number of distinct eigenvalues of `sum_a x_a O_a` (relative tolerance 1e-8).
pub fn distinct_levels(x: &[f64], basis: &OperatorBasis, policy: &NumericalPolicy) -> Result<usize> {
    let spec = HamiltonianSpec::new(basis.clone(), x.to_vec())?;
    let eig = diagonalize_spec(&spec, policy)?;
    let e = eig.energies();
    let scale = e.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    Ok(1 + e.windows(2).into_iter().filter(|w| w[1] - w[0] > 1e-8 * scale).count())
}

/// Moment differences `sum_i a_i e_i^m` with energies scaled to `max |e| = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosureReport {
    pub dimension: usize,
    /// Largest difference over `m = 1 .. D-1`.
    pub low_max: f64,
    /// Largest difference over `m = D .. D+2`.
    pub high_max: f64,
    pub tolerance: f64,
    pub holds: bool,
}

pub const CLOSURE_TOL: f64 = 1e-7;

/// Checks that moments `1..D+2` of `H` agree between the two states.
pub fn moment_closure_check(h: &HamiltonianSpec, pair: &QuenchPair, policy: &NumericalPolicy) -> Result<ClosureReport> {
    let eig = diagonalize_spec(h, policy)?;
    moment_closure_with(&eig, pair)
}

pub fn moment_closure_with(eig: &EigenSystem, pair: &QuenchPair) -> Result<ClosureReport> {
    let d = eig.dim();
    if d > 256 {
        return Err(Error::Capacity {
            what: "moment closure check (Hilbert dimension)".into(),
            required: d as u128,
            budget: 256,
        });
    }
    if pair.initial.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: pair.initial.dim(),
        });
    }
    let w0 = eig.to_eigenbasis(pair.initial.amplitudes());
    let wt = eig.to_eigenbasis(pair.final_state.amplitudes());
    let a: Vec<f64> = wt.iter().zip(&w0).map(|(x, y)| x.norm_sqr() - y.norm_sqr()).collect();
    let emax = eig.energies().iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let e: Vec<f64> = if emax > 0.0 {
        eig.energies().iter().map(|v| v / emax).collect()
    } else {
        vec![0.0; d]
    };
    let mut powers = vec![1.0; d];
    let (mut low, mut high) = (0.0f64, 0.0f64);
    for m in 1..=d + 2 {
        powers.iter_mut().zip(&e).for_each(|(p, v)| *p *= v);
        let diff: f64 = a.iter().zip(&powers).map(|(x, p)| x * p).sum::<f64>().abs();
        if m < d {
            low = low.max(diff);
        } else {
            high = high.max(diff);
        }
    }
    Ok(ClosureReport {
        dimension: d,
        low_max: low,
        high_max: high,
        tolerance: CLOSURE_TOL,
        holds: low <= CLOSURE_TOL && high <= CLOSURE_TOL,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleOptions {
    /// Largest `|s|` searched for; bounds the phase-wrap enumeration.
    pub max_scale: f64,
    /// Accepted deviation of unwrapped phases from a common line (radians).
    pub phase_tol: f64,
    /// Eigen-components with `|<i|psi(0)>|` below this fraction of the largest are ignored.
    pub support_cut: f64,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        Self {
            max_scale: 10.0,
            phase_tol: 1e-4,
            support_cut: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecovery {
    /// `|s|` with `H = s * sum_a d_a O_a` and `d` the (possibly flipped) direction.
    pub scale: f64,
    /// The product `s * t` before sign folding.
    pub scaled_time: f64,
    pub direction_flipped: bool,
    /// Winding offset of the reference eigen-pair.
    pub offset: i64,
    /// Largest deviation of unwrapped phases from the fitted line.
    pub phase_residual: f64,
    pub candidates_tried: usize,
}

/// Recovers the overall scale of `H = s * sum d_a O_a` from one pair with known time.
pub fn recover_scale(
    direction: &[f64],
    basis: &OperatorBasis,
    pair: &QuenchPair,
    opts: &ScaleOptions,
    policy: &NumericalPolicy,
) -> Result<ScaleRecovery> {
    if !(pair.time > 0.0) {
        return Err(Error::Validation("scale recovery needs a positive quench time".into()));
    }
    let mut rec = recover_scaled_time(direction, basis, pair, opts.max_scale * pair.time, opts, policy)?;
    rec.scale = rec.scaled_time.abs() / pair.time;
    Ok(rec)
}

/// Recovers `s * t` when the time is unknown; `max_scaled_time` bounds the search.
pub fn recover_scaled_time(
    direction: &[f64],
    basis: &OperatorBasis,
    pair: &QuenchPair,
    max_scaled_time: f64,
    opts: &ScaleOptions,
    policy: &NumericalPolicy,
) -> Result<ScaleRecovery> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Validation("direction is the zero vector".into()));
    }
    let unit: Vec<f64> = direction.iter().map(|v| v / norm).collect();
    let spec = HamiltonianSpec::new(basis.clone(), unit)?;
    if pair.site_count() != spec.site_count() {
        return Err(Error::LengthMismatch {
            left: spec.site_count(),
            right: pair.site_count(),
        });
    }
    let eig = diagonalize_spec(&spec, policy)?;
    let d = eig.dim();
    if d > 256 {
        return Err(Error::Capacity {
            what: "scale recovery (Hilbert dimension)".into(),
            required: d as u128,
            budget: 256,
        });
    }
    let e = eig.energies();
    let spread = e[d - 1] - e[0];
    let min_gap = e.windows(2).into_iter().map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(spread > 0.0) || min_gap < 1e-9 * spread {
        return Err(Error::Degenerate(format!(
            "spectrum has a near-degenerate level pair (gap {min_gap:.3e}, spread {spread:.3e})"
        )));
    }
    let w0 = eig.to_eigenbasis(pair.initial.amplitudes());
    let wt = eig.to_eigenbasis(pair.final_state.amplitudes());
    let largest = w0.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let support: Vec<usize> = (0..d).filter(|&i| w0[i].norm() > opts.support_cut * largest).collect();
    if support.len() < 3 {
        return Err(Error::Degenerate(format!(
            "initial state overlaps only {} eigenstates; the scale is not identifiable",
            support.len()
        )));
    }
    let phase: Vec<f64> = support.iter().map(|&i| (wt[i] / w0[i]).arg()).collect();
    let en: Vec<f64> = support.iter().map(|&i| e[i]).collect();
    let (lo, hi) = (0, support.len() - 1);
    let de = en[hi] - en[lo];
    // phase_i = -tau e_i + theta (mod 2 pi), so tau de = phase_lo - phase_hi + 2 pi p.
    let bound = (max_scaled_time.abs() * de / PI).ceil() as i64 + 2;
    let mut best: Option<(f64, i64, f64)> = None;
    let mut passing = 0;
    for p in -bound..=bound {
        let tau = (phase[lo] - phase[hi] + 2.0 * PI * p as f64) / de;
        if tau.abs() > max_scaled_time.abs() + 2.0 * PI / de {
            continue;
        }
        let dev = phase_line_deviation(&phase, &en, tau);
        if dev < opts.phase_tol {
            passing += 1;
        }
        if best.is_none_or(|(_, _, d)| dev < d) {
            best = Some((tau, p, dev));
        }
    }
    let candidates = (2 * bound + 1) as usize;
    let (tau, p, dev) = best.ok_or_else(|| Error::NoSolution("empty winding search range".into()))?;
    if dev >= opts.phase_tol {
        return Err(Error::NoSolution(format!(
            "no winding offset in |p| <= {bound} makes the phases consistent (best deviation {dev:.3e} rad); \
             the direction may be inaccurate or the search bound too small"
        )));
    }
    if passing > 1 {
        return Err(Error::NoSolution(format!(
            "{passing} winding offsets are consistent within {:.1e} rad: approximate recurrence makes the scale ambiguous",
            opts.phase_tol
        )));
    }
    let tau = refine_tau(&phase, &en, tau);
    let dev = phase_line_deviation(&phase, &en, tau);
    Ok(ScaleRecovery {
        scale: tau.abs(),
        scaled_time: tau,
        direction_flipped: tau < 0.0,
        offset: p,
        phase_residual: dev,
        candidates_tried: candidates,
    })
}

fn wrap(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// Largest deviation of `phase_i + tau e_i` from their circular mean.
fn phase_line_deviation(phase: &[f64], en: &[f64], tau: f64) -> f64 {
    let shifted: Vec<f64> = phase.iter().zip(en).map(|(p, e)| p + tau * e).collect();
    let (s, c) = shifted
        .iter()
        .fold((0.0, 0.0), |(s, c), v| (s + v.sin(), c + v.cos()));
    let theta = s.atan2(c);
    shifted.iter().map(|v| wrap(v - theta).abs()).fold(0.0, f64::max)
}

/// Least-squares slope through the unwrapped phases.
fn refine_tau(phase: &[f64], en: &[f64], tau: f64) -> f64 {
    let shifted: Vec<f64> = phase.iter().zip(en).map(|(p, e)| p + tau * e).collect();
    let theta = shifted[0];
    // unwrap each phase to the branch nearest the current line
    let y: Vec<f64> = phase
        .iter()
        .zip(&shifted)
        .map(|(p, s)| p - 2.0 * PI * ((s - theta) / (2.0 * PI)).round())
        .collect();
    let k = y.len() as f64;
    let (me, my) = (en.iter().sum::<f64>() / k, y.iter().sum::<f64>() / k);
    let sxy: f64 = en.iter().zip(&y).map(|(e, v)| (e - me) * (v - my)).sum();
    let sxx: f64 = en.iter().map(|e| (e - me).powi(2)).sum();
    -sxy / sxx
}
