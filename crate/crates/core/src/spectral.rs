//! Gap diagnostics: the infinite-`p` covariance of the constraint matrix,
//! Heisenberg-picture operator expansions, the structural split into `A` and
//! `A~`, ETH late-time predictions and spectrum histograms.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleKind, EnsembleSpec};
use crate::error::{Error, Result};
use crate::linear::{build_constraint_matrix, sample_pairs, svd_full};
use crate::pauli::{OperatorBasis, PauliString, Phase};
use crate::policy::{hilbert_dim, NumericalPolicy};
use crate::quantum::{heisenberg_operator, EigenSystem, HeisenbergFrame};

/// Sample covariance `M^T M / p` with the standard error of every entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub matrix: Array2<f64>,
    pub standard_errors: Array2<f64>,
    pub samples: usize,
}

/// `M^T M / p` and per-entry standard errors from the rows of a constraint matrix.
pub fn covariance_from_rows(rows: ArrayView2<f64>) -> Result<CovarianceEstimate> {
    let (p, n) = rows.dim();
    if p == 0 || n == 0 {
        return Err(Error::Validation("covariance needs a non-empty matrix".into()));
    }
    let pf = p as f64;
    let matrix = rows.t().dot(&rows) / pf;
    let squares = rows.mapv(|v| v * v);
    let second = squares.t().dot(&squares) / pf;
    let standard_errors = Array2::from_shape_fn((n, n), |(a, b)| {
        let var = (second[[a, b]] - matrix[[a, b]].powi(2)).max(0.0);
        if p > 1 {
            (var / (pf - 1.0)).sqrt()
        } else {
            f64::INFINITY
        }
    });
    Ok(CovarianceEstimate {
        matrix,
        standard_errors,
        samples: p,
    })
}

/// Estimates the covariance of `<O_a> - <O_a(t)>` over `samples` fresh quenches.
pub fn covariance_estimate(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    t: f64,
    ensemble: &EnsembleSpec,
    samples: usize,
) -> Result<CovarianceEstimate> {
    if samples < basis.len() {
        return Err(Error::Validation(format!(
            "covariance needs at least n = {} samples, got {samples}",
            basis.len()
        )));
    }
    let pairs = sample_pairs(eig, ensemble, 0, samples, t)?;
    let m = build_constraint_matrix(basis, &pairs)?;
    covariance_from_rows(m.entries())
}

/// Coefficients `C_{s,a}(t) = Tr(P_s O_a(t)) / D` over all non-identity strings `s`.
///
/// Strings are indexed densely by `x * D + z`; index 0 (the identity) is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorExpansion {
    pub source_index: usize,
    sites: usize,
    coefficients: Array1<f64>,
}

impl OperatorExpansion {
    pub fn site_count(&self) -> usize {
        self.sites
    }

    fn slot(&self, s: &PauliString) -> usize {
        ((s.x_mask() as usize) << self.sites) | s.z_mask() as usize
    }

    /// Coefficient of a string; the string's own phase is taken into account.
    pub fn coefficient(&self, s: &PauliString) -> f64 {
        if s.site_count() != self.sites {
            return 0.0;
        }
        phase_sign(s.phase()) * self.coefficients[self.slot(s)]
    }

    /// Non-negligible `(string, coefficient)` pairs in index order.
    pub fn nonzero(&self, cutoff: f64) -> Vec<(PauliString, f64)> {
        let dim = 1usize << self.sites;
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > cutoff)
            .map(|(k, &c)| {
                let s = PauliString::from_masks(self.sites, (k / dim) as u64, (k % dim) as u64, Phase::default());
                (s, c)
            })
            .collect()
    }

    pub fn dense(&self) -> &Array1<f64> {
        &self.coefficients
    }

    pub fn dot(&self, other: &OperatorExpansion) -> f64 {
        self.coefficients.dot(&other.coefficients)
    }
}

fn phase_sign(phase: Phase) -> f64 {
    match phase.exponent() {
        0 => 1.0,
        2 => -1.0,
        _ => f64::NAN,
    }
}

/// Projects a dense operator onto every Pauli string with one Walsh-Hadamard
/// transform per x-mask.
pub fn pauli_coefficients(op: &Array2<Complex64>, sites: usize) -> Array1<f64> {
    let dim = 1usize << sites;
    let mut out = Array1::zeros(dim * dim);
    for x in 0..dim {
        let mut v: Vec<Complex64> = (0..dim).map(|r| op[[r, r ^ x]]).collect();
        walsh_hadamard(&mut v);
        for z in 0..dim {
            let ph = Phase::from_exponent((x & z).count_ones()).to_complex();
            out[x * dim + z] = (ph * v[z]).re / dim as f64;
        }
    }
    out[0] = 0.0;
    out
}

/// In-place unnormalised transform `v_z <- sum_r (-1)^{z.r} v_r`.
fn walsh_hadamard(v: &mut [Complex64]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// Full expansion of `O_a(t) = exp(iHt) O_a exp(-iHt)`.
pub fn expand_operator(
    op_index: usize,
    basis: &OperatorBasis,
    eig: &EigenSystem,
    t: f64,
    policy: &NumericalPolicy,
) -> Result<OperatorExpansion> {
    let sites = basis.site_count();
    if sites > policy.max_expansion_sites {
        return Err(Error::Capacity {
            what: format!("operator expansion over 4^{sites} strings"),
            required: 1u128 << (2 * sites.min(63)),
            budget: 1u128 << (2 * policy.max_expansion_sites),
        });
    }
    if op_index >= basis.len() {
        return Err(Error::Validation(format!(
            "operator index {op_index} outside a basis of {}",
            basis.len()
        )));
    }
    let dim = hilbert_dim(sites)?;
    if dim != eig.dim() {
        return Err(Error::DimensionMismatch {
            expected: eig.dim(),
            actual: dim,
        });
    }
    let evolved = heisenberg_operator(basis.get(op_index), eig, t, policy)?;
    Ok(OperatorExpansion {
        source_index: op_index,
        sites,
        coefficients: pauli_coefficients(&evolved, sites),
    })
}

/// Expansions of every basis operator, in basis order.
pub fn expand_basis(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    t: f64,
    policy: &NumericalPolicy,
) -> Result<Vec<OperatorExpansion>> {
    (0..basis.len())
        .into_par_iter()
        .map(|a| expand_operator(a, basis, eig, t, policy))
        .collect()
}

/// Product-ensemble weight `(1/3)^l` of a string of size `l`.
pub fn product_weight(size: usize) -> f64 {
    (1.0f64 / 3.0).powi(size as i32)
}

/// In-basis and out-of-basis parts of the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralDecomposition {
    /// `C_{s,a}` for `s` in the basis: rows are basis strings, columns source operators.
    pub c: Array2<f64>,
    /// `A = (I - C)^T B (I - C)`.
    pub a: Array2<f64>,
    /// `A~ = C~^T B~ C~` over strings outside the basis.
    pub a_tilde: Array2<f64>,
}

impl StructuralDecomposition {
    /// `A + A~`: the infinite-sample covariance for a product ensemble.
    pub fn covariance(&self) -> Array2<f64> {
        &self.a + &self.a_tilde
    }
}

/// Splits the infinite-`p` covariance of a product ensemble into `A` and `A~`.
///
/// `weight(l)` is the ensemble's second moment `E[<P_s>^2]` for a string of size `l`.
pub fn structural_decomposition(
    expansions: &[OperatorExpansion],
    basis: &OperatorBasis,
    weight: impl Fn(usize) -> f64,
) -> Result<StructuralDecomposition> {
    let n = basis.len();
    if expansions.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: expansions.len(),
        });
    }
    let sites = basis.site_count();
    if let Some(e) = expansions.iter().find(|e| e.sites != sites) {
        return Err(Error::LengthMismatch {
            left: sites,
            right: e.sites,
        });
    }
    let dim = 1usize << sites;
    let mut in_basis = vec![false; dim * dim];
    let mut c = Array2::zeros((n, n));
    for (s, term) in basis.terms().iter().enumerate() {
        let slot = ((term.x_mask() as usize) << sites) | term.z_mask() as usize;
        in_basis[slot] = true;
        for (a, e) in expansions.iter().enumerate() {
            c[[s, a]] = e.coefficient(term);
        }
    }
    let mut b = Array1::zeros(n);
    for (s, term) in basis.terms().iter().enumerate() {
        b[s] = weight(term.size());
    }
    let i_minus_c = Array2::<f64>::eye(n) - &c;
    let weighted = &i_minus_c * &b.view().insert_axis(Axis(1));
    let a = i_minus_c.t().dot(&weighted);

    let sizes: Vec<f64> = (0..dim * dim)
        .map(|k| weight(((k / dim) | (k % dim)).count_ones() as usize))
        .collect();
    let mut a_tilde = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let (ci, cj) = (&expansions[i].coefficients, &expansions[j].coefficients);
            let v: f64 = (1..dim * dim)
                .filter(|&k| !in_basis[k])
                .map(|k| ci[k] * cj[k] * sizes[k])
                .sum();
            a_tilde[[i, j]] = v;
            a_tilde[[j, i]] = v;
        }
    }
    Ok(StructuralDecomposition { c, a, a_tilde })
}

/// `(1/3)^{l_max / 2} * s_2(I - C)` with `s_2` the second smallest singular value.
pub fn gap_lower_bound(c: &Array2<f64>, l_max: usize) -> Result<f64> {
    let (r, k) = c.dim();
    if r != k {
        return Err(Error::DimensionMismatch {
            expected: r,
            actual: k,
        });
    }
    if r < 2 {
        return Err(Error::Validation("gap bound needs at least two operators".into()));
    }
    let (s, _) = svd_full((Array2::<f64>::eye(r) - c).view())?;
    Ok((1.0f64 / 3.0).powf(l_max as f64 / 2.0) * s[r - 2])
}

/// `C_0 = c c^T / |c|^2`, the late-time correlation matrix predicted by ETH.
pub fn eth_late_time_matrix(couplings: &[f64]) -> Result<Array2<f64>> {
    let c = Array1::from(couplings.to_vec());
    let norm2 = c.dot(&c);
    if norm2 == 0.0 || !norm2.is_finite() {
        return Err(Error::Validation("late-time matrix needs a non-zero coupling vector".into()));
    }
    let col = c.view().insert_axis(Axis(1));
    let row = c.view().insert_axis(Axis(0));
    Ok(col.dot(&row) / norm2)
}

/// Time statistics of `C(t)` sampled on an even grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAverage {
    pub times: Vec<f64>,
    pub mean: Array2<f64>,
    /// Per-entry variance of `C_ab(t)` about the mean.
    pub variance: Array2<f64>,
}

impl TimeAverage {
    /// Largest per-entry temporal variance.
    pub fn max_variance(&self) -> f64 {
        self.variance.iter().cloned().fold(0.0, f64::max)
    }
}

/// `count` evenly spaced times from `start` to `end` inclusive.
pub fn time_grid(start: f64, end: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|k| start + (end - start) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Mean and variance of `C(t)` over the given times.
pub fn time_averaged_correlation(frame: &HeisenbergFrame, times: &[f64]) -> Result<TimeAverage> {
    if times.is_empty() {
        return Err(Error::Validation("time average needs at least one time".into()));
    }
    let samples: Vec<Array2<f64>> = times.par_iter().map(|&t| frame.correlation(t)).collect();
    let k = samples.len() as f64;
    let n = frame.basis_len();
    let mut mean = Array2::zeros((n, n));
    for s in &samples {
        mean += s;
    }
    mean /= k;
    let mut variance = Array2::zeros((n, n));
    for s in &samples {
        variance += &(s - &mean).mapv(|v| v * v);
    }
    variance /= k;
    Ok(TimeAverage {
        times: times.to_vec(),
        mean,
        variance,
    })
}

/// Default late-time window for ETH comparisons.
pub const ETH_WINDOW: (f64, f64, usize) = (50.0, 100.0, 32);

/// Time-averaged `C(t)` over the default late-time window.
pub fn late_time_average(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    policy: &NumericalPolicy,
) -> Result<TimeAverage> {
    let frame = HeisenbergFrame::new(basis, eig, policy)?;
    let (a, b, k) = ETH_WINDOW;
    time_averaged_correlation(&frame, &time_grid(a, b, k))
}

/// Temporal fluctuation of `C_ab(t)` against the `|A|^2 |B|^2 / D` bound (`= 1/D` for Pauli strings).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub max_variance: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn fluctuation_check(average: &TimeAverage, dim: usize) -> FluctuationReport {
    let max_variance = average.max_variance();
    let bound = 1.0 / dim as f64;
    FluctuationReport {
        max_variance,
        bound,
        holds: max_variance <= bound,
    }
}

/// Haar-ensemble variance of `<O_a> - <O_a(t)>` per operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaarReference {
    pub variances: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub bound: f64,
    pub samples: usize,
}

impl HaarReference {
    /// True when every estimate lies below `bound + sigmas * standard_error`.
    pub fn within_bound(&self, sigmas: f64) -> bool {
        self.variances
            .iter()
            .zip(&self.standard_errors)
            .all(|(v, e)| *v <= self.bound + sigmas * e)
    }
}

/// Per-operator second moment over an ensemble (diagonal of the covariance).
pub fn ensemble_variances(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    t: f64,
    ensemble: &EnsembleSpec,
    samples: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples == 0 {
        return Err(Error::Validation("variance needs at least one sample".into()));
    }
    let pairs = sample_pairs(eig, ensemble, 0, samples, t)?;
    let m = build_constraint_matrix(basis, &pairs)?;
    let p = samples as f64;
    let mut vars = Vec::with_capacity(basis.len());
    let mut errs = Vec::with_capacity(basis.len());
    for col in m.entries().axis_iter(Axis(1)) {
        let sq = col.mapv(|v| v * v);
        let mean = sq.sum() / p;
        let spread = if samples > 1 {
            (sq.mapv(|v| (v - mean).powi(2)).sum() / (p - 1.0) / p).sqrt()
        } else {
            f64::INFINITY
        };
        vars.push(mean);
        errs.push(spread);
    }
    Ok((vars, errs))
}

pub fn haar_reference(
    basis: &OperatorBasis,
    eig: &EigenSystem,
    t: f64,
    samples: usize,
    seed: u64,
) -> Result<HaarReference> {
    let ensemble = EnsembleSpec::new(EnsembleKind::Haar, seed, basis.site_count());
    let (variances, standard_errors) = ensemble_variances(basis, eig, t, &ensemble, samples)?;
    let dim = hilbert_dim(basis.site_count())? as f64;
    Ok(HaarReference {
        variances,
        standard_errors,
        bound: 4.0 / (dim + 1.0),
        samples,
    })
}

/// Monte-Carlo comparison of `E[<P_s><P_s'>]` with `delta_{ss'} w(l_s)` over all non-identity strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleLawReport {
    pub sites: usize,
    pub samples: usize,
    /// Distinct `(s, s')` pairs compared.
    pub entries: usize,
    /// Largest `|estimate - expected| / standard_error`.
    pub max_z: f64,
    /// Fraction of entries within three standard errors.
    pub within_3sigma: f64,
}

/// Second moments of Pauli expectations over `samples` states of `ensemble`,
/// compared against `weight(l)` on the diagonal and zero elsewhere.
pub fn ensemble_law_check(
    ensemble: &EnsembleSpec,
    samples: usize,
    weight: impl Fn(usize) -> f64,
) -> Result<EnsembleLawReport> {
    let sites = ensemble.sites;
    let dim = hilbert_dim(sites)?;
    let strings: Vec<PauliString> = (1..dim * dim)
        .map(|k| PauliString::from_masks(sites, (k / dim) as u64, (k % dim) as u64, Phase::default()))
        .collect();
    let rows: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let psi = ensemble.sample_state(i)?;
            Ok(strings.iter().map(|s| s.sandwich(psi.amplitudes(), psi.amplitudes()).re).collect())
        })
        .collect::<Result<_>>()?;
    let k = strings.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let values = Array2::from_shape_vec((samples, k), flat).expect("rows have one value per string");
    let est = covariance_from_rows(values.view())?;
    let (mut max_z, mut inside, mut entries) = (0.0f64, 0usize, 0usize);
    for a in 0..k {
        for b in a..k {
            let want = if a == b { weight(strings[a].size()) } else { 0.0 };
            let se = est.standard_errors[[a, b]].max(1e-15);
            let z = (est.matrix[[a, b]] - want).abs() / se;
            max_z = max_z.max(z);
            inside += (z <= 3.0) as usize;
            entries += 1;
        }
    }
    Ok(EnsembleLawReport {
        sites,
        samples,
        entries,
        max_z,
        within_3sigma: inside as f64 / entries as f64,
    })
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn symmetric_eigen(m: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let sym = (m + &m.t()) / 2.0;
    Ok(sym.eigh(UPLO::Lower)?)
}

/// Spectrum of a covariance matrix together with its gap and the ETH bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub covariance: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    /// `sqrt(e_2) - sqrt(e_1)`: the singular gap of `M / sqrt(p)`.
    pub gap: f64,
    /// `(1/3)^{l_max/2} s_2(I - C)`, when a correlation matrix was supplied.
    pub lower_bound: Option<f64>,
    pub eth_gap_floor: f64,
    pub l_max: usize,
}

impl GapReport {
    pub fn new(covariance: Array2<f64>, correlation: Option<&Array2<f64>>, l_max: usize) -> Result<Self> {
        let (vals, _) = symmetric_eigen(&covariance)?;
        let eigenvalues = vals.to_vec();
        let root = |v: f64| v.max(0.0).sqrt();
        let gap = if eigenvalues.len() >= 2 {
            root(eigenvalues[1]) - root(eigenvalues[0])
        } else {
            0.0
        };
        let lower_bound = correlation.map(|c| gap_lower_bound(c, l_max)).transpose()?;
        Ok(Self {
            covariance,
            eigenvalues,
            gap,
            lower_bound,
            eth_gap_floor: (1.0f64 / 3.0).powf(l_max as f64 / 2.0),
            l_max,
        })
    }

    /// Eigenvector of the smallest eigenvalue: the covariance estimate of the coupling direction.
    pub fn zero_mode(&self) -> Result<Vec<f64>> {
        let (_, vecs) = symmetric_eigen(&self.covariance)?;
        Ok(vecs.column(0).to_vec())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// How a spectrum clusters around target values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    /// Eigenvalues below the outlier cut.
    pub below_cut: usize,
    /// Fraction of the remaining eigenvalues within `window` of some target.
    pub fraction_near_targets: f64,
}

pub fn spectrum_summary(eigenvalues: &[f64], cut: f64, targets: &[f64], window: f64) -> SpectrumSummary {
    let below_cut = eigenvalues.iter().filter(|&&v| v < cut).count();
    let rest: Vec<f64> = eigenvalues.iter().cloned().filter(|&v| v >= cut).collect();
    let near = rest
        .iter()
        .filter(|&&v| targets.iter().any(|&t| (v - t).abs() <= window))
        .count();
    SpectrumSummary {
        below_cut,
        fraction_near_targets: if rest.is_empty() {
            0.0
        } else {
            near as f64 / rest.len() as f64
        },
    }
}

/// Fixed-width histogram with `bins + 1` edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Values outside `[lo, hi]` are clamped into the end bins.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::Validation(format!(
                "histogram needs bins > 0 and hi > lo, got {bins} bins on [{lo}, {hi}]"
            )));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|k| lo + width * k as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = ((v - lo) / width).floor();
            let k = if k.is_nan() { 0 } else { (k.max(0.0) as usize).min(bins - 1) };
            counts[k] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(std::io::Error::other(e)))?;
        w.write_record(["bin_lo", "bin_hi", "count"])
            .map_err(|e| io(std::io::Error::other(e)))?;
        for (k, c) in self.counts.iter().enumerate() {
            w.write_record([
                format!("{:.12e}", self.edges[k]),
                format!("{:.12e}", self.edges[k + 1]),
                c.to_string(),
            ])
            .map_err(|e| io(std::io::Error::other(e)))?;
        }
        w.flush().map_err(io)
    }
}
