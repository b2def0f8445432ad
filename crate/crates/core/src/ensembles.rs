//! Seeded initial-state ensembles and the benchmark spin-chain families.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use ndarray::Array1;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Letter, OperatorBasis, PauliString, PauliSum};
use crate::policy::hilbert_dim;
use crate::quantum::{HamiltonianSpec, StateVector};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    /// Independent uniformly distributed Bloch-sphere spinor on every site.
    BlochProduct,
    /// Every site in one of the six `+-X`, `+-Y`, `+-Z` eigenstates with probability 1/6.
    XyzProduct,
    /// Haar-random pure state on the full Hilbert space.
    Haar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    #[serde(default)]
    pub seed: u64,
    pub sites: usize,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, seed: u64, sites: usize) -> Self {
        Self { kind, seed, sites }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    /// The `index`-th state of the ensemble; identical for identical `(seed, index)`.
    pub fn sample_state(&self, index: u64) -> Result<StateVector> {
        let mut rng = stream_rng(self.seed, Stream::InitialState, index);
        match self.kind {
            EnsembleKind::BlochProduct => {
                let spinors: Vec<_> = (0..self.sites).map(|_| bloch_spinor(&mut rng)).collect();
                StateVector::product(&spinors)
            }
            EnsembleKind::XyzProduct => {
                let spinors: Vec<_> = (0..self.sites)
                    .map(|_| axis_eigenstate(rng.random_range(0..6)))
                    .collect();
                StateVector::product(&spinors)
            }
            EnsembleKind::Haar => {
                let dim = hilbert_dim(self.sites)?;
                let amps = Array1::from_shape_fn(dim, |_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                });
                StateVector::normalized(self.sites, amps)
            }
        }
    }

    pub fn sample_states(&self, range: std::ops::Range<u64>) -> Result<Vec<StateVector>> {
        range.map(|i| self.sample_state(i)).collect()
    }
}

/// Uniform point on the Bloch sphere via `z ~ U(-1, 1)`, `phi ~ U(0, 2pi)`.
fn bloch_spinor<R: Rng>(rng: &mut R) -> [Complex64; 2] {
    let z: f64 = rng.random_range(-1.0..1.0);
    let phi: f64 = rng.random_range(0.0..2.0 * PI);
    let up = ((1.0 + z) / 2.0).sqrt();
    let down = ((1.0 - z) / 2.0).sqrt();
    [Complex64::new(up, 0.0), Complex64::from_polar(down, phi)]
}

fn axis_eigenstate(which: u32) -> [Complex64; 2] {
    let h = FRAC_1_SQRT_2;
    let c = Complex64::new;
    match which {
        0 => [c(h, 0.0), c(h, 0.0)],
        1 => [c(h, 0.0), c(-h, 0.0)],
        2 => [c(h, 0.0), c(0.0, h)],
        3 => [c(h, 0.0), c(0.0, -h)],
        4 => [c(1.0, 0.0), c(0.0, 0.0)],
        _ => [c(0.0, 0.0), c(1.0, 0.0)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// `c1 sum ZZ(i,i+1) + c2 sum X(i) + c3 sum YY(i,i+2)`.
    TfimYy,
    /// `c1 sum ZZ + c2 sum X + c3 sum Z`.
    IsingLt,
    /// `c1 sum XX + c2 sum YY + c3 sum ZZ` on nearest-neighbour bonds.
    Heisenberg,
    /// Site-dependent transverse fields and Ising bonds.
    RandomTfim,
    /// Every one-body Pauli and every nearest-neighbour two-body product with its own coupling.
    RandomLocal,
}

impl ModelFamily {
    pub fn is_uniform(self) -> bool {
        matches!(self, ModelFamily::TfimYy | ModelFamily::IsingLt | ModelFamily::Heisenberg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

fn default_range() -> (f64, f64) {
    (-1.0, 1.0)
}

fn default_boundary() -> Boundary {
    Boundary::Open
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub sites: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default)]
    pub coupling_seed: u64,
    #[serde(default = "default_range")]
    pub coupling_range: (f64, f64),
}

impl ModelSpec {
    pub fn new(family: ModelFamily, sites: usize, boundary: Boundary, coupling_seed: u64) -> Self {
        Self {
            family,
            sites,
            boundary,
            coupling_seed,
            coupling_range: default_range(),
        }
    }

    pub fn with_seed(self, coupling_seed: u64) -> Self {
        Self {
            coupling_seed,
            ..self
        }
    }

    fn validate(&self) -> Result<()> {
        let min = match (self.family, self.boundary) {
            (ModelFamily::TfimYy, _) | (_, Boundary::Periodic) => 3,
            _ => 2,
        };
        if self.sites < min || self.sites > 20 {
            return Err(Error::Validation(format!(
                "{:?} with {:?} boundary needs {min} <= L <= 20, got L = {}",
                self.family, self.boundary, self.sites
            )));
        }
        let (lo, hi) = self.coupling_range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Validation(format!("invalid coupling range ({lo}, {hi})")));
        }
        Ok(())
    }

    fn bonds(&self, reach: usize) -> Vec<(usize, usize)> {
        let l = self.sites;
        match self.boundary {
            Boundary::Open => (0..l.saturating_sub(reach)).map(|i| (i, i + reach)).collect(),
            Boundary::Periodic => (0..l).map(|i| (i, (i + reach) % l)).collect(),
        }
    }

    /// `(parameter index, string)` templates; a parameter may govern several strings.
    fn templates(&self) -> Result<(usize, Vec<(usize, PauliString)>)> {
        self.validate()?;
        let l = self.sites;
        let one = |site, a| PauliString::single(l, site, a);
        let two = |(i, j), a, b| PauliString::from_sparse(l, &[(i, a), (j, b)]);
        let mut out = Vec::new();
        let params = match self.family {
            ModelFamily::TfimYy => {
                out.extend(self.bonds(1).into_iter().map(|b| (0, two(b, Letter::Z, Letter::Z))));
                out.extend((0..l).map(|i| (1, one(i, Letter::X))));
                out.extend(self.bonds(2).into_iter().map(|b| (2, two(b, Letter::Y, Letter::Y))));
                3
            }
            ModelFamily::IsingLt => {
                out.extend(self.bonds(1).into_iter().map(|b| (0, two(b, Letter::Z, Letter::Z))));
                out.extend((0..l).map(|i| (1, one(i, Letter::X))));
                out.extend((0..l).map(|i| (2, one(i, Letter::Z))));
                3
            }
            ModelFamily::Heisenberg => {
                for (k, a) in Letter::NON_IDENTITY.into_iter().enumerate() {
                    out.extend(self.bonds(1).into_iter().map(|b| (k, two(b, a, a))));
                }
                3
            }
            ModelFamily::RandomTfim => {
                out.extend((0..l).map(|i| (i, one(i, Letter::X))));
                let bonds = self.bonds(1);
                out.extend(
                    bonds
                        .iter()
                        .enumerate()
                        .map(|(k, &b)| (l + k, two(b, Letter::Z, Letter::Z))),
                );
                l + bonds.len()
            }
            ModelFamily::RandomLocal => {
                for i in 0..l {
                    for a in Letter::NON_IDENTITY {
                        out.push((out.len(), one(i, a)));
                    }
                }
                for b in self.bonds(1) {
                    for a in Letter::NON_IDENTITY {
                        for c in Letter::NON_IDENTITY {
                            out.push((out.len(), two(b, a, c)));
                        }
                    }
                }
                out.len()
            }
        };
        Ok((params, out))
    }

    /// Independent random parameters: three for uniform families, one per term otherwise.
    pub fn draw_parameters(&self) -> Result<Vec<f64>> {
        let (count, _) = self.templates()?;
        let (lo, hi) = self.coupling_range;
        let mut rng = stream_rng(self.coupling_seed, Stream::Couplings, 0);
        Ok((0..count).map(|_| rng.random_range(lo..hi)).collect())
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.templates()?.0)
    }

    /// Hamiltonian over the canonical string basis for explicit parameter values.
    pub fn hamiltonian_with(&self, params: &[f64]) -> Result<HamiltonianSpec> {
        let (count, templates) = self.templates()?;
        if params.len() != count {
            return Err(Error::DimensionMismatch {
                expected: count,
                actual: params.len(),
            });
        }
        let mut merged: BTreeMap<(usize, Vec<usize>, Vec<Letter>), (PauliString, f64)> = BTreeMap::new();
        for (k, s) in templates {
            merged.entry(s.canonical_key()).or_insert((s, 0.0)).1 += params[k];
        }
        let (terms, couplings): (Vec<_>, Vec<_>) = merged.into_values().unzip();
        HamiltonianSpec::new(OperatorBasis::new(self.sites, terms)?, couplings)
    }

    /// The canonical basis alone (independent of the coupling draw).
    pub fn basis(&self) -> Result<OperatorBasis> {
        let count = self.parameter_count()?;
        Ok(self.hamiltonian_with(&vec![1.0; count])?.basis().clone())
    }
}

/// Draws couplings and builds `H` in the canonical basis order (size, then
/// support sites, then letters X < Y < Z).
pub fn instantiate_model(spec: &ModelSpec) -> Result<HamiltonianSpec> {
    spec.hamiltonian_with(&spec.draw_parameters()?)
}

/// Translation-invariant grouping: one observable `sum_j O_{a j}` per coupling.
#[derive(Debug, Clone)]
pub struct TranslatedBasis {
    pub groups: Vec<PauliSum>,
    /// Group couplings drawn for the model (`H = sum_a c_a G_a`).
    pub couplings: Vec<f64>,
}

pub fn translated_sum_basis(spec: &ModelSpec) -> Result<TranslatedBasis> {
    if !spec.family.is_uniform() || spec.boundary != Boundary::Periodic {
        return Err(Error::Validation(format!(
            "{:?} with {:?} boundary is not translation invariant",
            spec.family, spec.boundary
        )));
    }
    let (count, templates) = spec.templates()?;
    let mut groups = vec![PauliSum::new(spec.sites); count];
    for (k, s) in templates {
        groups[k].add(1.0, s);
    }
    Ok(TranslatedBasis {
        groups,
        couplings: spec.draw_parameters()?,
    })
}

/// Adds a random complex vector of norm `magnitude` and renormalises.
pub fn perturb_state(state: &StateVector, magnitude: f64, seed: u64, index: u64) -> Result<StateVector> {
    let mut rng = stream_rng(seed, Stream::Perturbation, index);
    let noise = Array1::from_shape_fn(state.dim(), |_| {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        Complex64::new(re, im)
    });
    let norm = noise.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let amps = &state.amplitudes() + &noise.mapv(|v| v * (magnitude / norm));
    StateVector::normalized(state.site_count(), amps)
}

/// Random `body`-site strings on consecutive sites that are absent from `exclude`.
pub fn extra_local_terms(
    sites: usize,
    count: usize,
    body: usize,
    seed: u64,
    exclude: &OperatorBasis,
) -> Result<OperatorBasis> {
    if body == 0 || body > sites {
        return Err(Error::Validation(format!("cannot place {body}-body terms on {sites} sites")));
    }
    let windows = sites - body + 1;
    let available = windows as u128 * 3u128.pow(body as u32);
    if count as u128 > available {
        return Err(Error::Validation(format!(
            "only {available} distinct {body}-body terms exist on {sites} sites"
        )));
    }
    let mut rng = stream_rng(seed, Stream::ExtraTerms, 0);
    let mut terms: Vec<PauliString> = Vec::with_capacity(count);
    while terms.len() < count {
        let start = rng.random_range(0..windows);
        let letters: Vec<(usize, Letter)> = (0..body)
            .map(|k| (start + k, Letter::NON_IDENTITY[rng.random_range(0..3)]))
            .collect();
        let s = PauliString::from_sparse(sites, &letters);
        if exclude.position(&s).is_none() && !terms.contains(&s) {
            terms.push(s);
        }
    }
    terms.sort_by_key(PauliString::canonical_key);
    OperatorBasis::new(sites, terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::expectation;

    #[test]
    fn family_term_counts() {
        let n = |f, l| {
            instantiate_model(&ModelSpec::new(f, l, Boundary::Open, 1))
                .unwrap()
                .basis()
                .len()
        };
        assert_eq!(n(ModelFamily::RandomLocal, 8), 87);
        assert_eq!(n(ModelFamily::RandomLocal, 5), 3 * 5 + 9 * 4);
        assert_eq!(n(ModelFamily::RandomTfim, 4), 7);
        assert_eq!(n(ModelFamily::Heisenberg, 2), 3);
        let h = instantiate_model(&ModelSpec::new(ModelFamily::Heisenberg, 2, Boundary::Open, 0)).unwrap();
        assert_eq!(h.basis().names(), vec!["X0 X1", "Y0 Y1", "Z0 Z1"]);
    }

    #[test]
    fn canonical_order_is_one_body_first() {
        let h = instantiate_model(&ModelSpec::new(ModelFamily::RandomLocal, 2, Boundary::Open, 3)).unwrap();
        let names = h.basis().names();
        assert_eq!(&names[..4], &["X0", "Y0", "Z0", "X1"]);
        assert_eq!(names[6], "X0 X1");
        assert_eq!(names[14], "Z0 Z1");
    }

    #[test]
    fn couplings_in_range_and_seeded() {
        let spec = ModelSpec {
            coupling_range: (0.5, 2.0),
            ..ModelSpec::new(ModelFamily::RandomLocal, 4, Boundary::Open, 11)
        };
        let a = instantiate_model(&spec).unwrap();
        assert!(a.couplings().iter().all(|&c| (0.5..2.0).contains(&c)));
        assert_eq!(a, instantiate_model(&spec).unwrap());
        assert_ne!(a, instantiate_model(&spec.with_seed(12)).unwrap());
    }

    #[test]
    fn invalid_sizes() {
        assert!(instantiate_model(&ModelSpec::new(ModelFamily::TfimYy, 2, Boundary::Open, 0)).is_err());
        assert!(instantiate_model(&ModelSpec::new(ModelFamily::RandomTfim, 1, Boundary::Open, 0)).is_err());
        assert!(instantiate_model(&ModelSpec::new(ModelFamily::IsingLt, 2, Boundary::Periodic, 0)).is_err());
    }

    #[test]
    fn translated_groups() {
        let spec = ModelSpec::new(ModelFamily::TfimYy, 5, Boundary::Periodic, 2);
        let tb = translated_sum_basis(&spec).unwrap();
        assert_eq!(tb.groups.len(), 3);
        for (a, g) in tb.groups.iter().enumerate() {
            assert_eq!(g.terms().len(), 5);
            for (b, h) in tb.groups.iter().enumerate() {
                let expect = if a == b { 5.0 } else { 0.0 };
                assert_eq!(g.normalized_trace_product(h), expect);
            }
        }
        assert!(translated_sum_basis(&ModelSpec::new(ModelFamily::TfimYy, 5, Boundary::Open, 2)).is_err());
        assert!(translated_sum_basis(&ModelSpec::new(ModelFamily::RandomLocal, 5, Boundary::Periodic, 2)).is_err());
    }

    #[test]
    fn periodic_duplicates_merge() {
        // At L = 4 the next-nearest bonds (0,2) and (2,0) are the same string.
        let spec = ModelSpec::new(ModelFamily::TfimYy, 4, Boundary::Periodic, 0);
        let h = spec.hamiltonian_with(&[0.0, 0.0, 1.0]).unwrap();
        let y02 = PauliString::parse("Y0 Y2", 4).unwrap();
        let idx = h.basis().position(&y02).unwrap();
        assert_eq!(h.couplings()[idx], 2.0);
    }

    #[test]
    fn sampled_states_are_normalised_and_reproducible() {
        for kind in [EnsembleKind::BlochProduct, EnsembleKind::XyzProduct, EnsembleKind::Haar] {
            let e = EnsembleSpec::new(kind, 5, 3);
            let a = e.sample_state(17).unwrap();
            assert!((a.norm() - 1.0).abs() < 1e-12);
            let b = e.sample_state(17).unwrap();
            assert_eq!(a.amplitudes(), b.amplitudes());
            assert_ne!(a.amplitudes(), e.sample_state(18).unwrap().amplitudes());
        }
    }

    #[test]
    fn xyz_states_are_axis_eigenstates() {
        let e = EnsembleSpec::new(EnsembleKind::XyzProduct, 9, 3);
        for i in 0..20 {
            let s = e.sample_state(i).unwrap();
            for site in 0..3 {
                let v: Vec<f64> = Letter::NON_IDENTITY
                    .iter()
                    .map(|&a| expectation(&s, &PauliString::single(3, site, a)).unwrap().abs())
                    .collect();
                let ones = v.iter().filter(|x| (**x - 1.0).abs() < 1e-12).count();
                let zeros = v.iter().filter(|x| **x < 1e-12).count();
                assert_eq!((ones, zeros), (1, 2), "{v:?}");
            }
        }
    }

    #[test]
    fn extra_terms_avoid_basis() {
        let basis = ModelSpec::new(ModelFamily::RandomLocal, 6, Boundary::Open, 0).basis().unwrap();
        let extra = extra_local_terms(6, 10, 3, 4, &basis).unwrap();
        assert_eq!(extra.len(), 10);
        assert!(extra.terms().iter().all(|t| t.size() == 3 && basis.position(t).is_none()));
        assert!(extra_local_terms(3, 100, 3, 4, &basis).is_err());
    }
}
