//! Multi-quench reconstruction: the constraint matrix `M`, measurement-error
//! injection, the smallest-singular-vector estimator and its diagnostics.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::SVD;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Observable, OperatorBasis};
use crate::quantum::{evolve_many, EigenSystem, HamiltonianSpec, QuenchPair, StateVector};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDistribution {
    /// Independent `U(-epsilon, +epsilon)` per entry.
    #[default]
    UniformPm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub epsilon: f64,
    pub seed: u64,
    #[serde(default)]
    pub distribution: ErrorDistribution,
}

impl ErrorModel {
    pub fn uniform(epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::Validation(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        Ok(Self {
            epsilon,
            seed,
            distribution: ErrorDistribution::UniformPm,
        })
    }
}

/// The `p x n` matrix with rows `<O_a>_0 - <O_a>_t`, one per quench pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    entries: Array2<f64>,
    columns: Vec<String>,
    error_model: Option<ErrorModel>,
}

impl ConstraintMatrix {
    pub fn from_entries(entries: Array2<f64>, columns: Vec<String>) -> Result<Self> {
        if entries.ncols() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                actual: entries.ncols(),
            });
        }
        if columns.is_empty() {
            return Err(Error::Validation("constraint matrix needs at least one column".into()));
        }
        Ok(Self {
            entries,
            columns,
            error_model: None,
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn pair_count(&self) -> usize {
        self.entries.nrows()
    }

    pub fn basis_size(&self) -> usize {
        self.entries.ncols()
    }

    pub fn error_model(&self) -> Option<&ErrorModel> {
        self.error_model.as_ref()
    }

    /// Rows of `other` appended below these.
    pub fn stacked(&self, other: &ConstraintMatrix) -> Result<Self> {
        if self.columns != other.columns {
            return Err(Error::Validation("stacked matrices have different columns".into()));
        }
        let entries = ndarray::concatenate(Axis(0), &[self.entries.view(), other.entries.view()])
            .expect("equal column counts");
        Ok(Self {
            entries,
            columns: self.columns.clone(),
            error_model: self.error_model.or(other.error_model),
        })
    }

    /// Columns of `other` appended to the right, as for `(M; M')`.
    pub fn joined(&self, other: &ConstraintMatrix) -> Result<Self> {
        if self.pair_count() != other.pair_count() {
            return Err(Error::LengthMismatch {
                left: self.pair_count(),
                right: other.pair_count(),
            });
        }
        let entries = ndarray::concatenate(Axis(1), &[self.entries.view(), other.entries.view()])
            .expect("equal row counts");
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Ok(Self {
            entries,
            columns,
            error_model: None,
        })
    }

    /// `|M x|` for a coupling vector.
    pub fn apply_norm(&self, x: &[f64]) -> f64 {
        let v = self.entries.dot(&ArrayView1::from(x));
        v.dot(&v).sqrt()
    }

    /// Writes the header of operator names and one row per pair.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(&self.columns).map_err(|e| csv_io(path, e))?;
        for row in self.entries.rows() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))
                .map_err(|e| csv_io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn check_pairs(sites: usize, pairs: &[QuenchPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Validation("at least one quench pair is required".into()));
    }
    if let Some(bad) = pairs.iter().find(|q| q.site_count() != sites) {
        return Err(Error::LengthMismatch {
            left: sites,
            right: bad.site_count(),
        });
    }
    Ok(())
}

/// Constraint matrix over arbitrary Hermitian observables (single strings or grouped sums).
pub fn build_constraint_rows<O: Observable>(ops: &[O], pairs: &[QuenchPair]) -> Result<ConstraintMatrix> {
    let sites = ops.first().map(|o| o.site_count()).ok_or_else(|| {
        Error::Validation("constraint matrix needs at least one operator".into())
    })?;
    if let Some(bad) = ops.iter().find(|o| o.site_count() != sites) {
        return Err(Error::LengthMismatch {
            left: sites,
            right: bad.site_count(),
        });
    }
    check_pairs(sites, pairs)?;
    let rows: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|q| {
            let (a, b) = (q.initial.amplitudes(), q.final_state.amplitudes());
            ops.iter().map(|o| o.expectation_in(a) - o.expectation_in(b)).collect()
        })
        .collect();
    let n = ops.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let entries = Array2::from_shape_vec((pairs.len(), n), flat).expect("row lengths agree");
    ConstraintMatrix::from_entries(entries, ops.iter().map(|o| o.label()).collect())
}

pub fn build_constraint_matrix(basis: &OperatorBasis, pairs: &[QuenchPair]) -> Result<ConstraintMatrix> {
    build_constraint_rows(basis.terms(), pairs)
}

/// Adds independent uniform noise to every entry; `epsilon = 0` returns an identical matrix.
pub fn inject_error(m: &ConstraintMatrix, em: &ErrorModel) -> ConstraintMatrix {
    let mut out = m.clone();
    out.error_model = Some(*em);
    if em.epsilon > 0.0 {
        let mut rng = stream_rng(em.seed, Stream::MeasurementError, 0);
        let eps = em.epsilon;
        out.entries.mapv_inplace(|v| v + rng.random_range(-eps..=eps));
    }
    out
}

/// Singular values (descending, padded with zeros to `n`) and `V^T` (`n x n`).
pub fn svd_full(m: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let (p, n) = m.dim();
    if p == 0 || n == 0 {
        return Err(Error::Validation("empty matrix".into()));
    }
    let mut col_major = Array2::zeros((p, n).f());
    col_major.assign(&m);
    let (_, s, vt) = col_major.svd(false, true)?;
    let vt = vt.ok_or_else(|| Error::Linalg("SVD did not return right singular vectors".into()))?;
    let mut values = Array1::zeros(n);
    values.slice_mut(ndarray::s![..s.len()]).assign(&s);
    Ok((values, vt))
}

/// `s_{n-1} - s_n` of `M / sqrt(p)`.
pub fn singular_gap(m: &ConstraintMatrix) -> Result<f64> {
    let (s, _) = svd_full(m.entries())?;
    Ok(gap_of(&s, m.pair_count()))
}

fn gap_of(s: &Array1<f64>, p: usize) -> f64 {
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    (s[n - 2] - s[n - 1]) / (p as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSolution {
    /// Unit vector, oriented so its largest-magnitude entry is positive.
    pub estimate: Vec<f64>,
    /// Singular values of `M` in descending order (length `n`).
    pub singular_values: Vec<f64>,
    /// Gap of `M / sqrt(p)`.
    pub gap: f64,
    /// `x^T M^T M x`, which equals the smallest squared singular value.
    pub residual: f64,
    pub warnings: Vec<String>,
}

impl KernelSolution {
    /// Smallest squared singular value of `M / sqrt(p)`.
    pub fn min_eigenvalue(&self, p: usize) -> f64 {
        let s = self.singular_values.last().copied().unwrap_or(0.0);
        s * s / p as f64
    }
}

pub fn solve_kernel(m: &ConstraintMatrix) -> Result<KernelSolution> {
    let (p, n) = m.entries.dim();
    if n < 2 {
        return Err(Error::Validation("kernel estimation needs n >= 2 operators".into()));
    }
    if let Some((r, c)) = m.entries.indexed_iter().find(|(_, v)| !v.is_finite()).map(|(i, _)| i) {
        return Err(Error::Validation(format!("non-finite constraint entry at row {r}, column {c}")));
    }
    let (s, vt) = svd_full(m.entries())?;
    let mut x = vt.row(n - 1).to_owned();
    let pivot = x
        .iter()
        .copied()
        .fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    if pivot < 0.0 {
        x.mapv_inplace(|v| -v);
    }
    let mx = m.entries.dot(&x);
    let mut warnings = Vec::new();
    if p + 1 < n {
        warnings.push(format!("underdetermined: p = {p} < n - 1 = {}", n - 1));
    }
    if s[n - 2] - s[n - 1] < 1e-12 {
        warnings.push(format!(
            "two smallest singular values are degenerate ({:.3e}, {:.3e}); estimate is ambiguous",
            s[n - 2],
            s[n - 1]
        ));
    }
    Ok(KernelSolution {
        estimate: x.to_vec(),
        gap: gap_of(&s, p),
        singular_values: s.to_vec(),
        residual: mx.dot(&mx),
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub fidelity: f64,
    pub error: f64,
    /// Angle between the two lines, in `[0, pi/2]`.
    pub theta: f64,
}

/// Sign-insensitive angle between `estimate` and `truth`.
pub fn score(estimate: &[f64], truth: &[f64]) -> Result<Score> {
    if estimate.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: estimate.len(),
            right: truth.len(),
        });
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (ne, nt) = (norm(estimate), norm(truth));
    if nt == 0.0 || ne == 0.0 {
        return Err(Error::Validation("cannot score against a zero vector".into()));
    }
    let cos: f64 = estimate.iter().zip(truth).map(|(a, b)| a * b).sum::<f64>() / (ne * nt);
    // The perpendicular component gives an accurate sine when the angle is tiny.
    let perp = estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| a / ne - cos * b / nt)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let theta = perp.atan2(cos.abs());
    Ok(Score {
        fidelity: theta.cos(),
        error: theta.sin(),
        theta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub estimate: Vec<f64>,
    pub fidelity: f64,
    pub error: f64,
    pub singular_values: Vec<f64>,
    pub gap: f64,
    pub warnings: Vec<String>,
}

/// Solves the kernel and scores it against known couplings.
pub fn reconstruct(m: &ConstraintMatrix, truth: &[f64]) -> Result<ReconstructionResult> {
    let sol = solve_kernel(m)?;
    let sc = score(&sol.estimate, truth)?;
    Ok(ReconstructionResult {
        estimate: sol.estimate,
        fidelity: sc.fidelity,
        error: sc.error,
        singular_values: sol.singular_values,
        gap: sol.gap,
        warnings: sol.warnings,
    })
}

/// Comparison of a measured error against `sqrt(n/p) * epsilon / lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub epsilon: f64,
    pub n: usize,
    pub p: usize,
    pub gap: f64,
    pub measured_error: f64,
    /// `None` when `lambda <= epsilon`, where the bound does not apply.
    pub bound: Option<f64>,
    /// `measured_error / bound`, the effective constant.
    pub ratio: Option<f64>,
}

impl ErrorBoundReport {
    pub fn applicable(&self) -> bool {
        self.bound.is_some()
    }
}

pub fn error_bound_report(measured_error: f64, gap: f64, epsilon: f64, n: usize, p: usize) -> ErrorBoundReport {
    let bound = (epsilon == 0.0 || gap > epsilon).then(|| (n as f64 / p as f64).sqrt() * epsilon / gap);
    let ratio = bound.filter(|b| *b > 0.0).map(|b| measured_error / b);
    ErrorBoundReport {
        epsilon,
        n,
        p,
        gap,
        measured_error,
        bound,
        ratio,
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn scaling_exponent(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::Validation("need at least two positive points".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation("x values are all equal".into()));
    }
    Ok(sxy / sxx)
}

/// A Hamiltonian split into the assumed ansatz and the ignored remainder.
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzSplit {
    pub kept_basis: OperatorBasis,
    pub extra_basis: OperatorBasis,
    pub kept_couplings: Vec<f64>,
    pub extra_couplings: Vec<f64>,
}

impl AnsatzSplit {
    pub fn new(
        kept_basis: OperatorBasis,
        kept_couplings: Vec<f64>,
        extra_basis: OperatorBasis,
        extra_couplings: Vec<f64>,
    ) -> Result<Self> {
        if kept_basis.len() != kept_couplings.len() {
            return Err(Error::LengthMismatch {
                left: kept_basis.len(),
                right: kept_couplings.len(),
            });
        }
        if extra_basis.len() != extra_couplings.len() {
            return Err(Error::LengthMismatch {
                left: extra_basis.len(),
                right: extra_couplings.len(),
            });
        }
        if let Some(s) = extra_basis.terms().iter().find(|s| kept_basis.position(s).is_some()) {
            return Err(Error::Validation(format!("{s} appears in both kept and extra bases")));
        }
        Ok(Self {
            kept_basis,
            extra_basis,
            kept_couplings,
            extra_couplings,
        })
    }

    /// `|c'| / |c|`.
    pub fn relative_strength(&self) -> f64 {
        norm(&self.extra_couplings) / norm(&self.kept_couplings)
    }

    /// Rescales `c'` so that `|c'| / |c| = ratio`.
    pub fn with_relative_strength(mut self, ratio: f64) -> Self {
        let now = self.relative_strength();
        if now > 0.0 {
            let f = ratio / now;
            self.extra_couplings.iter_mut().for_each(|v| *v *= f);
        }
        self
    }

    /// `H = sum c O + sum c' O'`.
    pub fn full_hamiltonian(&self) -> Result<HamiltonianSpec> {
        let basis = self.kept_basis.concat(&self.extra_basis)?;
        let mut c = self.kept_couplings.clone();
        c.extend_from_slice(&self.extra_couplings);
        HamiltonianSpec::new(basis, c)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRecord {
    /// Reconstruction error against the kept couplings.
    pub error: f64,
    /// `|M'/sqrt(p)| |c'| / (s_2(M/sqrt(p)) |c|)`.
    pub bound: f64,
    /// The sharper `|M' c'/sqrt(p)| / (s_2 |c|)`.
    pub sharp_bound: f64,
    pub s2: f64,
    pub mprime_norm: f64,
    pub mtot_norm: f64,
    /// Second-smallest singular value of `(M; M')/sqrt(p)`.
    pub total_gap: f64,
    /// Singular gap of `M / sqrt(p)`.
    pub gap: f64,
    pub relative_strength: f64,
    pub bound_holds: bool,
}

/// Reconstructs over the kept basis from pairs evolved under the full Hamiltonian.
pub fn robustness_experiment(
    split: &AnsatzSplit,
    pairs: &[QuenchPair],
    em: Option<&ErrorModel>,
) -> Result<RobustnessRecord> {
    let mut m = build_constraint_matrix(&split.kept_basis, pairs)?;
    let mprime = build_constraint_matrix(&split.extra_basis, pairs)?;
    let total = m.joined(&mprime)?;
    if let Some(em) = em {
        m = inject_error(&m, em);
    }
    let p = pairs.len() as f64;
    let sol = solve_kernel(&m)?;
    let sc = score(&sol.estimate, &split.kept_couplings)?;
    let n = m.basis_size();
    let s2 = sol.singular_values[n - 2] / p.sqrt();
    let (sp, _) = svd_full(mprime.entries())?;
    let mprime_norm = sp[0] / p.sqrt();
    let (st, _) = svd_full(total.entries())?;
    let mtot_norm = st[0] / p.sqrt();
    let total_gap = st[st.len() - 2] / p.sqrt();
    let c_norm = norm(&split.kept_couplings);
    let rel = split.relative_strength();
    let bound = if s2 > 0.0 { mprime_norm * rel / s2 } else { f64::INFINITY };
    let sharp_bound = if s2 > 0.0 {
        mprime.apply_norm(&split.extra_couplings) / p.sqrt() / (s2 * c_norm)
    } else {
        f64::INFINITY
    };
    Ok(RobustnessRecord {
        error: sc.error,
        bound,
        sharp_bound,
        s2,
        mprime_norm,
        mtot_norm,
        total_gap,
        gap: sol.gap,
        relative_strength: rel,
        bound_holds: sc.error <= bound,
    })
}

/// Samples states `start..start+count` of an ensemble and evolves them for time `t`,
/// in bounded-memory batches.
pub fn sample_pairs(
    eig: &EigenSystem,
    ensemble: &crate::ensembles::EnsembleSpec,
    start: u64,
    count: usize,
    t: f64,
) -> Result<Vec<QuenchPair>> {
    const BATCH: u64 = 1024;
    let end = start + count as u64;
    let mut out = Vec::with_capacity(count);
    let mut lo = start;
    while lo < end {
        let hi = (lo + BATCH).min(end);
        let states: Vec<StateVector> = (lo..hi)
            .into_par_iter()
            .map(|i| ensemble.sample_state(i))
            .collect::<Result<_>>()?;
        out.extend(QuenchPair::simulate_many(states, eig, t)?);
        lo = hi;
    }
    Ok(out)
}

/// Pairs `(psi(k dt), psi((k+1) dt))`, `k = 0..p`, from one initial state.
pub fn time_slice_pairs(eig: &EigenSystem, initial: &StateVector, dt: f64, p: usize) -> Result<Vec<QuenchPair>> {
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("time slice dt must be positive, got {dt}")));
    }
    if p == 0 {
        return Err(Error::Validation("at least one time slice is required".into()));
    }
    let times: Vec<f64> = (0..=p).map(|k| k as f64 * dt).collect();
    let mut slices = Vec::with_capacity(p + 1);
    for &t in &times {
        slices.push(evolve_many(std::slice::from_ref(initial), eig, t)?.remove(0));
    }
    slices
        .windows(2)
        .map(|w| QuenchPair::new(w[0].clone(), w[1].clone(), dt))
        .collect()
}

/// Constraint matrix of the single-trajectory baseline.
pub fn time_slice_baseline(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    initial: &StateVector,
    dt: f64,
    p: usize,
) -> Result<ConstraintMatrix> {
    build_constraint_matrix(basis, &time_slice_pairs(eig, initial, dt, p)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{instantiate_model, Boundary, EnsembleKind, EnsembleSpec, ModelFamily, ModelSpec};
    use crate::policy::NumericalPolicy;
    use crate::quantum::diagonalize_spec;
    use proptest::prelude::*;
    use rand::Rng;

    fn quench_set(sites: usize, seed: u64, p: usize, t: f64) -> (HamiltonianSpec, Vec<QuenchPair>) {
        let spec = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, sites, Boundary::Open, seed)).unwrap();
        let eig = diagonalize_spec(&spec, &NumericalPolicy::default()).unwrap();
        let states = EnsembleSpec::new(EnsembleKind::BlochProduct, seed, sites)
            .sample_states(0..p as u64)
            .unwrap();
        (spec, QuenchPair::simulate_many(states, &eig, t).unwrap())
    }

    #[test]
    fn trivial_matrices() {
        let (spec, pairs) = quench_set(3, 1, 10, 0.0);
        let m = build_constraint_matrix(spec.basis(), &pairs).unwrap();
        assert!(m.entries().iter().all(|v| *v == 0.0));
        assert_eq!(singular_gap(&m).unwrap(), 0.0);

        let eig = diagonalize_spec(&spec, &NumericalPolicy::default()).unwrap();
        let eigenstates: Vec<_> = (0..4)
            .map(|k| StateVector::new(3, eig.vectors().column(k).to_owned()).unwrap())
            .collect();
        let pairs = QuenchPair::simulate_many(eigenstates, &eig, 2.0).unwrap();
        let m = build_constraint_matrix(spec.basis(), &pairs).unwrap();
        assert!(m.entries().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn true_couplings_span_the_kernel() {
        let (spec, pairs) = quench_set(4, 2, 60, 1.0);
        let m = build_constraint_matrix(spec.basis(), &pairs).unwrap();
        assert!(m.apply_norm(spec.couplings()) / spec.coupling_norm() < 1e-9);
        assert!(m.entries().iter().all(|v| v.abs() <= 2.0));
        let r = reconstruct(&m, spec.couplings()).unwrap();
        assert!(r.error < 1e-7, "E = {}", r.error);
        assert!((r.fidelity.powi(2) + r.error.powi(2) - 1.0).abs() < 1e-12);
        let xnorm: f64 = r.estimate.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((xnorm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_row_kernel() {
        let m = ConstraintMatrix::from_entries(ndarray::array![[1.0, -1.0]], vec!["a".into(), "b".into()]).unwrap();
        let sol = solve_kernel(&m).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((sol.estimate[0] - h).abs() < 1e-12 && (sol.estimate[1] - h).abs() < 1e-12);
        assert_eq!(sol.singular_values.len(), 2);
        assert!(sol.warnings.is_empty());
    }

    #[test]
    fn singular_values_and_gap_by_definition() {
        // Columns scaled so that M / sqrt(p) has singular values {1, 1/3, 0}.
        let p = 4.0f64;
        let mut e = Array2::zeros((4, 3));
        e[[0, 0]] = 1.0 * p.sqrt();
        e[[1, 1]] = p.sqrt() / 3.0;
        let m = ConstraintMatrix::from_entries(e, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert!((singular_gap(&m).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        let sol = solve_kernel(&m).unwrap();
        assert!((sol.estimate[2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_and_underdetermined_warnings() {
        let m = ConstraintMatrix::from_entries(Array2::zeros((1, 3)), vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let sol = solve_kernel(&m).unwrap();
        assert_eq!(sol.warnings.len(), 2);
    }

    #[test]
    fn score_examples() {
        let s = score(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!((s.fidelity - 1.0).abs() < 1e-15 && s.error < 1e-15);
        let s = score(&[1.0, 0.0], &[0.0, -3.0]).unwrap();
        assert!(s.fidelity.abs() < 1e-15 && (s.error - 1.0).abs() < 1e-15);
        let a = std::f64::consts::FRAC_PI_6;
        let s = score(&[a.cos(), a.sin(), 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((s.error - 0.5).abs() < 1e-12);
        let s = score(&[-a.cos(), -a.sin()], &[1.0, 0.0]).unwrap();
        assert!((s.error - 0.5).abs() < 1e-12);
        assert!(score(&[1.0], &[0.0]).is_err());
        assert!(score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn error_injection() {
        let (spec, pairs) = quench_set(3, 3, 20, 1.0);
        let m = build_constraint_matrix(spec.basis(), &pairs).unwrap();
        let same = inject_error(&m, &ErrorModel::uniform(0.0, 1).unwrap());
        assert_eq!(same.entries(), m.entries());
        let em = ErrorModel::uniform(0.1, 9).unwrap();
        let a = inject_error(&m, &em);
        assert_eq!(a, inject_error(&m, &em));
        let d = &a.entries() - &m.entries();
        assert!(d.iter().all(|v| v.abs() <= 0.1));
        assert!(a.entries().iter().all(|v| v.abs() <= 2.2));
        assert!(ErrorModel::uniform(-1.0, 0).is_err());
    }

    #[test]
    fn injected_variance_is_uniform() {
        let eps = 0.3;
        let zero = ConstraintMatrix::from_entries(Array2::zeros((1000, 100)), (0..100).map(|i| i.to_string()).collect()).unwrap();
        let noisy = inject_error(&zero, &ErrorModel::uniform(eps, 4).unwrap());
        let n = 100_000.0;
        let sq: Vec<f64> = noisy.entries().iter().map(|v| v * v).collect();
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expect = eps * eps / 3.0;
        assert!((mean - expect).abs() < 3.0 * (var / n).sqrt(), "{mean} vs {expect}");
    }

    #[test]
    fn residual_identity_and_scale_invariance() {
        let (spec, pairs) = quench_set(4, 5, 80, 1.0);
        let m = inject_error(&build_constraint_matrix(spec.basis(), &pairs).unwrap(), &ErrorModel::uniform(0.05, 2).unwrap());
        let sol = solve_kernel(&m).unwrap();
        let p = m.pair_count();
        assert!((sol.residual / p as f64 - sol.min_eigenvalue(p)).abs() < 1e-10);
        let scaled = ConstraintMatrix::from_entries(m.entries().mapv(|v| 3.7 * v), m.columns().to_vec()).unwrap();
        let sol2 = solve_kernel(&scaled).unwrap();
        for (a, b) in sol.estimate.iter().zip(&sol2.estimate) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bound_report() {
        let r = error_bound_report(0.0, 0.3, 0.0, 10, 20);
        assert_eq!(r.bound, Some(0.0));
        let a = error_bound_report(0.01, 0.3, 0.1, 10, 20).bound.unwrap();
        let b = error_bound_report(0.01, 0.3, 0.1, 10, 40).bound.unwrap();
        assert!((a / b - 2f64.sqrt()).abs() < 1e-14);
        assert!(!error_bound_report(0.1, 0.05, 0.1, 10, 20).applicable());
        assert!((scaling_exponent(&[1.0, 4.0, 16.0], &[1.0, 0.5, 0.25]).unwrap() + 0.5).abs() < 1e-14);
    }

    #[test]
    fn time_slices() {
        let (spec, pairs) = quench_set(3, 6, 1, 1.0);
        let eig = diagonalize_spec(&spec, &NumericalPolicy::default()).unwrap();
        let base = time_slice_baseline(spec.basis(), &eig, &pairs[0].initial, 1.0, 1).unwrap();
        let direct = build_constraint_matrix(spec.basis(), &pairs).unwrap();
        assert!((&base.entries() - &direct.entries()).iter().all(|v| v.abs() < 1e-12));
        let eigenstate = StateVector::new(3, eig.vectors().column(5).to_owned()).unwrap();
        let stat = time_slice_baseline(spec.basis(), &eig, &eigenstate, 1.0, 8).unwrap();
        assert!(stat.entries().iter().all(|v| v.abs() < 1e-10));
        assert!(time_slice_baseline(spec.basis(), &eig, &eigenstate, 0.0, 8).is_err());
    }

    #[test]
    fn csv_round_trip_columns() {
        let (spec, pairs) = quench_set(3, 7, 5, 1.0);
        let m = build_constraint_matrix(spec.basis(), &pairs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("X0,Y0,Z0,"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn robustness_without_extra_terms() {
        let spec = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 4, Boundary::Open, 8)).unwrap();
        let extra = crate::ensembles::extra_local_terms(4, 3, 3, 8, spec.basis()).unwrap();
        let split = AnsatzSplit::new(spec.basis().clone(), spec.couplings().to_vec(), extra, vec![0.0; 3]).unwrap();
        let full = split.full_hamiltonian().unwrap();
        let eig = diagonalize_spec(&full, &NumericalPolicy::default()).unwrap();
        let states = EnsembleSpec::new(EnsembleKind::BlochProduct, 8, 4).sample_states(0..80).unwrap();
        let pairs = QuenchPair::simulate_many(states, &eig, 2.0).unwrap();
        let rec = robustness_experiment(&split, &pairs, None).unwrap();
        assert!(rec.error < 1e-7);
        assert_eq!(rec.bound, 0.0);
        assert!(rec.mprime_norm <= 2.0 / 3f64.sqrt());
        let overlap = AnsatzSplit::new(spec.basis().clone(), spec.couplings().to_vec(), spec.basis().clone(), spec.couplings().to_vec());
        assert!(overlap.is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn svd_kernel_is_a_minimiser(rows in 2usize..8, cols in 2usize..6, seed in 0u64..1000) {
            let mut rng = stream_rng(seed, Stream::Perturbation, 0);
            let e = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0));
            let m = ConstraintMatrix::from_entries(e.clone(), (0..cols).map(|i| i.to_string()).collect()).unwrap();
            let sol = solve_kernel(&m).unwrap();
            let smin = *sol.singular_values.last().unwrap();
            prop_assert!((sol.residual.sqrt() - smin).abs() < 1e-10);
            // MtM x = smin^2 x
            let x = Array1::from(sol.estimate.clone());
            let mtmx = e.t().dot(&e.dot(&x));
            let diff = &mtmx - &x.mapv(|v| v * smin * smin);
            prop_assert!(diff.iter().all(|v| v.abs() < 1e-10));
            prop_assert!(sol.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
