//! Multi-site Pauli strings stored as packed X/Z bitmasks.
//!
//! Site 0 is the least significant bit of a computational-basis index. A
//! string with masks `(x, z)` and phase exponent `k` is the operator
//! `i^k * i^{|x & z|} * X^x Z^z`, so a `Y` letter (both bits set) is the
//! Hermitian Pauli `Y = iXZ` and any phase-free string is Hermitian.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{hilbert_dim, NumericalPolicy};

/// Largest chain a string can describe.
pub const MAX_SITES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    pub const NON_IDENTITY: [Letter; 3] = [Letter::X, Letter::Y, Letter::Z];

    fn bits(self) -> (bool, bool) {
        match self {
            Letter::I => (false, false),
            Letter::X => (true, false),
            Letter::Y => (true, true),
            Letter::Z => (false, true),
        }
    }

    fn from_bits(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    fn symbol(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }

    fn from_symbol(c: char) -> Option<Self> {
        match c {
            'I' => Some(Letter::I),
            'X' => Some(Letter::X),
            'Y' => Some(Letter::Y),
            'Z' => Some(Letter::Z),
            _ => None,
        }
    }
}

/// A fourth root of unity `i^k`, tracked exactly as `k mod 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Phase(u8);

impl Phase {
    pub const ONE: Phase = Phase(0);
    pub const I: Phase = Phase(1);
    pub const MINUS_ONE: Phase = Phase(2);
    pub const MINUS_I: Phase = Phase(3);

    pub fn from_exponent(k: u32) -> Self {
        Phase((k % 4) as u8)
    }

    pub fn exponent(self) -> u8 {
        self.0
    }

    pub fn to_complex(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, 1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, -1.0),
        }
    }

    pub fn is_real(self) -> bool {
        self.0 % 2 == 0
    }

    fn tag(self) -> &'static str {
        match self.0 {
            0 => "+1",
            1 => "+i",
            2 => "-1",
            _ => "-i",
        }
    }
}

impl std::ops::Mul for Phase {
    type Output = Phase;

    fn mul(self, rhs: Phase) -> Phase {
        Phase((self.0 + rhs.0) % 4)
    }
}

#[inline]
fn parity(v: u64) -> bool {
    v.count_ones() % 2 == 1
}

/// Tensor product of single-site Pauli letters with an exact phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    sites: usize,
    x: u64,
    z: u64,
    phase: Phase,
}

impl PauliString {
    pub fn identity(sites: usize) -> Self {
        assert!(
            (1..=MAX_SITES).contains(&sites),
            "site count must be in 1..={MAX_SITES}"
        );
        Self {
            sites,
            x: 0,
            z: 0,
            phase: Phase::ONE,
        }
    }

    /// One non-identity letter at `site`.
    pub fn single(sites: usize, site: usize, letter: Letter) -> Self {
        Self::from_sparse(sites, &[(site, letter)])
    }

    /// Builds a string from `(site, letter)` pairs; later pairs on the same site overwrite.
    pub fn from_sparse(sites: usize, letters: &[(usize, Letter)]) -> Self {
        let mut s = Self::identity(sites);
        for &(site, letter) in letters {
            s.set(site, letter);
        }
        s
    }

    pub fn from_letters(letters: &[Letter]) -> Self {
        let mut s = Self::identity(letters.len());
        for (site, &letter) in letters.iter().enumerate() {
            s.set(site, letter);
        }
        s
    }

    /// Builds a string directly from its masks. Bits at or above `sites` must be clear.
    pub fn from_masks(sites: usize, x: u64, z: u64, phase: Phase) -> Self {
        let s = Self::identity(sites);
        let mask = s.site_mask();
        assert!(x & !mask == 0 && z & !mask == 0, "mask exceeds site count");
        Self { x, z, phase, ..s }
    }

    fn site_mask(&self) -> u64 {
        if self.sites == 64 {
            u64::MAX
        } else {
            (1u64 << self.sites) - 1
        }
    }

    fn set(&mut self, site: usize, letter: Letter) {
        assert!(site < self.sites, "site {site} out of range for {} sites", self.sites);
        let bit = 1u64 << site;
        let (x, z) = letter.bits();
        self.x = if x { self.x | bit } else { self.x & !bit };
        self.z = if z { self.z | bit } else { self.z & !bit };
    }

    pub fn site_count(&self) -> usize {
        self.sites
    }

    pub fn x_mask(&self) -> u64 {
        self.x
    }

    pub fn z_mask(&self) -> u64 {
        self.z
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    /// The same letters with phase `+1`.
    pub fn unsigned(self) -> Self {
        self.with_phase(Phase::ONE)
    }

    pub fn letter(&self, site: usize) -> Letter {
        let bit = 1u64 << site;
        Letter::from_bits(self.x & bit != 0, self.z & bit != 0)
    }

    pub fn letters(&self) -> Vec<Letter> {
        (0..self.sites).map(|s| self.letter(s)).collect()
    }

    /// Non-identity `(site, letter)` pairs in ascending site order.
    pub fn support(&self) -> Vec<(usize, Letter)> {
        let occupied = self.x | self.z;
        (0..self.sites)
            .filter(|s| occupied & (1 << s) != 0)
            .map(|s| (s, self.letter(s)))
            .collect()
    }

    /// Number of non-identity letters.
    pub fn size(&self) -> usize {
        (self.x | self.z).count_ones() as usize
    }

    pub fn is_identity_letters(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn is_hermitian(&self) -> bool {
        self.phase.is_real()
    }

    fn check_len(&self, other: &Self) -> Result<()> {
        if self.sites != other.sites {
            return Err(Error::LengthMismatch {
                left: self.sites,
                right: other.sites,
            });
        }
        Ok(())
    }

    /// Operator product `self * other`.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &Self) -> Self {
        let x = self.x ^ other.x;
        let z = self.z ^ other.z;
        // X^a Z^b X^c Z^d = (-1)^{|b & c|} X^{a^c} Z^{b^d}, plus the i^{|x&z|} Y normalisation.
        let k = u32::from(self.phase.0)
            + u32::from(other.phase.0)
            + (self.x & self.z).count_ones()
            + (other.x & other.z).count_ones()
            + 2 * (self.z & other.x).count_ones()
            + 3 * (x & z).count_ones();
        Self {
            sites: self.sites,
            x,
            z,
            phase: Phase::from_exponent(k),
        }
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_len(other)?;
        Ok(self.commutes_unchecked(other))
    }

    pub(crate) fn commutes_unchecked(&self, other: &Self) -> bool {
        !parity((self.x & other.z) ^ (self.z & other.x))
    }

    /// `Tr(a b) / D`, evaluated without forming matrices.
    pub fn normalized_trace_product(&self, other: &Self) -> Result<Complex64> {
        let prod = self.multiply(other)?;
        Ok(if prod.is_identity_letters() {
            prod.phase.to_complex()
        } else {
            Complex64::new(0.0, 0.0)
        })
    }

    /// Coefficient `c` with `P|r> = c |r ^ x>`.
    #[inline]
    pub(crate) fn action(&self, r: usize) -> (usize, Complex64) {
        let k = u32::from(self.phase.0)
            + (self.x & self.z).count_ones()
            + 2 * ((self.z & r as u64).count_ones() & 1);
        (r ^ self.x as usize, Phase::from_exponent(k).to_complex())
    }

    /// Dense `2^L x 2^L` matrix.
    pub fn to_matrix(&self, policy: &NumericalPolicy) -> Result<Array2<Complex64>> {
        let dim = hilbert_dim(self.sites)?;
        policy.check_dense("Pauli string matrix", dim)?;
        let mut m = Array2::zeros((dim, dim));
        for r in 0..dim {
            let (row, c) = self.action(r);
            m[[row, r]] = c;
        }
        Ok(m)
    }

    /// `out = P * psi`.
    pub fn apply_into(&self, psi: ArrayView1<Complex64>, mut out: ArrayViewMut1<Complex64>) {
        debug_assert_eq!(psi.len(), out.len());
        for (r, &amp) in psi.iter().enumerate() {
            let (row, c) = self.action(r);
            out[row] = c * amp;
        }
    }

    /// `out += coeff * P * psi`.
    pub fn apply_add(
        &self,
        coeff: Complex64,
        psi: ArrayView1<Complex64>,
        mut out: ArrayViewMut1<Complex64>,
    ) {
        for (r, &amp) in psi.iter().enumerate() {
            let (row, c) = self.action(r);
            out[row] += coeff * c * amp;
        }
    }

    /// `<bra| P |ket>`.
    pub fn sandwich(&self, bra: ArrayView1<Complex64>, ket: ArrayView1<Complex64>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (r, &amp) in ket.iter().enumerate() {
            let (row, c) = self.action(r);
            acc += bra[row].conj() * c * amp;
        }
        acc
    }

    /// Parses the textual notation, e.g. `"X0 Z3"`, `"-i Y2"` or `"I"`.
    pub fn parse(text: &str, sites: usize) -> Result<Self> {
        if !(1..=MAX_SITES).contains(&sites) {
            return Err(Error::Parse(format!("invalid site count {sites}")));
        }
        let mut s = Self::identity(sites);
        let mut tokens = text.split_whitespace().peekable();
        if let Some(&first) = tokens.peek() {
            let phase = match first {
                "+1" | "1" => Some(Phase::ONE),
                "+i" | "i" => Some(Phase::I),
                "-1" => Some(Phase::MINUS_ONE),
                "-i" => Some(Phase::MINUS_I),
                _ => None,
            };
            if let Some(p) = phase {
                s.phase = p;
                tokens.next();
            }
        }
        let mut seen = 0u64;
        let mut any = false;
        for tok in tokens {
            any = true;
            if tok == "I" {
                continue;
            }
            let mut chars = tok.chars();
            let letter = chars
                .next()
                .and_then(Letter::from_symbol)
                .ok_or_else(|| Error::Parse(format!("bad Pauli token {tok:?} in {text:?}")))?;
            let site: usize = chars
                .as_str()
                .parse()
                .map_err(|_| Error::Parse(format!("bad site index in {tok:?} of {text:?}")))?;
            if site >= sites {
                return Err(Error::Parse(format!(
                    "site {site} out of range for {sites} sites in {text:?}"
                )));
            }
            if seen & (1 << site) != 0 {
                return Err(Error::Parse(format!("site {site} repeated in {text:?}")));
            }
            seen |= 1 << site;
            if letter != Letter::I {
                s.set(site, letter);
            }
        }
        if !any {
            return Err(Error::Parse(format!("empty Pauli string {text:?}")));
        }
        Ok(s)
    }

    /// Canonical ordering key: size, then support sites, then letters (X < Y < Z).
    pub fn canonical_key(&self) -> (usize, Vec<usize>, Vec<Letter>) {
        let support = self.support();
        (
            self.size(),
            support.iter().map(|p| p.0).collect(),
            support.iter().map(|p| p.1).collect(),
        )
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.phase != Phase::ONE {
            write!(f, "{} ", self.phase.tag())?;
        }
        let support = self.support();
        if support.is_empty() {
            return write!(f, "I");
        }
        let parts: Vec<String> = support
            .iter()
            .map(|(s, l)| format!("{}{}", l.symbol(), s))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Ordered set of distinct, traceless, phase-free Pauli strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorBasis {
    sites: usize,
    terms: Vec<PauliString>,
}

impl OperatorBasis {
    pub fn new(sites: usize, terms: Vec<PauliString>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for t in &terms {
            if t.site_count() != sites {
                return Err(Error::LengthMismatch {
                    left: sites,
                    right: t.site_count(),
                });
            }
            if t.phase() != Phase::ONE {
                return Err(Error::Validation(format!("basis term {t} carries a phase")));
            }
            if t.is_identity_letters() {
                return Err(Error::Validation("identity string in operator basis".into()));
            }
            if !seen.insert((t.x_mask(), t.z_mask())) {
                return Err(Error::Validation(format!("duplicate basis term {t}")));
            }
        }
        if terms.is_empty() {
            return Err(Error::Validation("operator basis is empty".into()));
        }
        Ok(Self { sites, terms })
    }

    pub fn parse(sites: usize, names: &[&str]) -> Result<Self> {
        let terms = names
            .iter()
            .map(|n| PauliString::parse(n, sites))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sites, terms)
    }

    pub fn site_count(&self) -> usize {
        self.sites
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[PauliString] {
        &self.terms
    }

    pub fn get(&self, i: usize) -> &PauliString {
        &self.terms[i]
    }

    pub fn position(&self, s: &PauliString) -> Option<usize> {
        self.terms
            .iter()
            .position(|t| t.x_mask() == s.x_mask() && t.z_mask() == s.z_mask())
    }

    /// Largest string size `l_max`.
    pub fn max_size(&self) -> usize {
        self.terms.iter().map(PauliString::size).max().unwrap_or(0)
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(ToString::to_string).collect()
    }

    /// Gram matrix of normalized traces; the identity for any valid basis.
    pub fn gram(&self) -> Array2<Complex64> {
        let n = self.len();
        Array2::from_shape_fn((n, n), |(a, b)| {
            self.terms[a]
                .normalized_trace_product(&self.terms[b])
                .expect("basis terms share a site count")
        })
    }

    /// Each term as a one-element sum, for code that works on general observables.
    pub fn to_sums(&self) -> Vec<PauliSum> {
        self.terms.iter().map(|t| PauliSum::from(*t)).collect()
    }

    /// Union with a disjoint basis.
    pub fn concat(&self, other: &OperatorBasis) -> Result<OperatorBasis> {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(other.terms());
        OperatorBasis::new(self.sites, terms)
    }
}

/// Real linear combination of phase-free Pauli strings (a Hermitian observable).
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    sites: usize,
    terms: Vec<(f64, PauliString)>,
}

impl PauliSum {
    pub fn new(sites: usize) -> Self {
        Self {
            sites,
            terms: Vec::new(),
        }
    }

    /// Adds `coeff * s`, merging with an existing equal string.
    pub fn add(&mut self, coeff: f64, s: PauliString) {
        assert_eq!(s.site_count(), self.sites, "site-count mismatch in PauliSum");
        let sign = match s.phase() {
            Phase::ONE => 1.0,
            Phase::MINUS_ONE => -1.0,
            _ => panic!("PauliSum terms must be Hermitian"),
        };
        let s = s.unsigned();
        if let Some(entry) = self.terms.iter_mut().find(|(_, t)| *t == s) {
            entry.0 += sign * coeff;
        } else {
            self.terms.push((sign * coeff, s));
        }
    }

    pub fn site_count(&self) -> usize {
        self.sites
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    /// `out = O * psi`.
    pub fn apply_into(&self, psi: ArrayView1<Complex64>, mut out: ArrayViewMut1<Complex64>) {
        out.fill(Complex64::new(0.0, 0.0));
        for (c, s) in &self.terms {
            s.apply_add(Complex64::new(*c, 0.0), psi, out.view_mut());
        }
    }

    pub fn sandwich(&self, bra: ArrayView1<Complex64>, ket: ArrayView1<Complex64>) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, s)| *c * s.sandwich(bra, ket))
            .sum()
    }

    /// `Tr(A B) / D`.
    pub fn normalized_trace_product(&self, other: &PauliSum) -> f64 {
        let mut acc = 0.0;
        for (a, sa) in &self.terms {
            for (b, sb) in &other.terms {
                if sa.x_mask() == sb.x_mask() && sa.z_mask() == sb.z_mask() {
                    acc += a * b;
                }
            }
        }
        acc
    }

    pub fn to_matrix(&self, policy: &NumericalPolicy) -> Result<Array2<Complex64>> {
        let dim = hilbert_dim(self.sites)?;
        policy.check_dense("Pauli sum matrix", dim)?;
        let mut m = Array2::zeros((dim, dim));
        for (c, s) in &self.terms {
            for r in 0..dim {
                let (row, ph) = s.action(r);
                m[[row, r]] += ph * *c;
            }
        }
        Ok(m)
    }
}

/// A Hermitian operator that can act on state vectors.
pub trait Observable: Sync {
    fn site_count(&self) -> usize;
    /// `out = O * psi`.
    fn apply_to(&self, psi: ArrayView1<Complex64>, out: ArrayViewMut1<Complex64>);
    /// `Re <psi| O |psi>`.
    fn expectation_in(&self, psi: ArrayView1<Complex64>) -> f64;
    fn label(&self) -> String;
}

impl Observable for PauliString {
    fn site_count(&self) -> usize {
        self.sites
    }

    fn apply_to(&self, psi: ArrayView1<Complex64>, out: ArrayViewMut1<Complex64>) {
        self.apply_into(psi, out)
    }

    fn expectation_in(&self, psi: ArrayView1<Complex64>) -> f64 {
        self.sandwich(psi, psi).re
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

impl Observable for PauliSum {
    fn site_count(&self) -> usize {
        self.sites
    }

    fn apply_to(&self, psi: ArrayView1<Complex64>, out: ArrayViewMut1<Complex64>) {
        self.apply_into(psi, out)
    }

    fn expectation_in(&self, psi: ArrayView1<Complex64>) -> f64 {
        self.sandwich(psi, psi).re
    }

    fn label(&self) -> String {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(c, s)| if *c == 1.0 { s.to_string() } else { format!("{c}*{s}") })
            .collect();
        parts.join(" + ")
    }
}

impl From<PauliString> for PauliSum {
    fn from(s: PauliString) -> Self {
        let mut sum = PauliSum::new(s.site_count());
        sum.add(1.0, s);
        sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn p(text: &str, sites: usize) -> PauliString {
        PauliString::parse(text, sites).unwrap()
    }

    #[test]
    fn single_site_products() {
        let x = p("X0", 1);
        let y = p("Y0", 1);
        assert_eq!(x.multiply(&y).unwrap(), p("+i Z0", 1));
        assert_eq!(y.multiply(&x).unwrap(), p("-i Z0", 1));
        let id = PauliString::identity(3);
        let q = p("X0 Y1 Z2", 3);
        assert_eq!(id.multiply(&q).unwrap(), q);
        assert_eq!(q.multiply(&id).unwrap(), q);
    }

    #[test]
    fn two_site_product() {
        let zz = p("Z0 Z1", 2);
        let x0 = p("X0", 2);
        assert_eq!(zz.multiply(&x0).unwrap(), p("+i Y0 Z1", 2));
    }

    #[test]
    fn length_mismatch() {
        let a = p("X0", 1);
        let b = p("X0", 2);
        assert!(matches!(a.multiply(&b), Err(Error::LengthMismatch { .. })));
        assert!(a.commutes(&b).is_err());
        assert!(a.normalized_trace_product(&b).is_err());
    }

    #[test]
    fn commutation_examples() {
        assert!(!p("X0", 2).commutes(&p("Z0", 2)).unwrap());
        assert!(p("X0", 2).commutes(&p("Z1", 2)).unwrap());
        assert!(p("X0 Y1", 2).commutes(&p("Z0 Z1", 2)).unwrap());
    }

    #[test]
    fn sizes() {
        assert_eq!(p("Z0 Z5", 8).size(), 2);
        assert_eq!(PauliString::identity(4).size(), 0);
        assert_eq!(p("X0 Y1 Z2", 3).size(), 3);
    }

    #[test]
    fn matrices() {
        let pol = NumericalPolicy::default();
        let x = p("X0", 1).to_matrix(&pol).unwrap();
        assert_eq!(x, ndarray::arr2(&[[c(0., 0.), c(1., 0.)], [c(1., 0.), c(0., 0.)]]));
        // Hand-enumerated Kronecker product I (x) Z with site 0 as the low bit.
        let z0 = p("Z0", 2).to_matrix(&pol).unwrap();
        let expect = Array2::from_diag(&Array1::from(vec![c(1., 0.), c(-1., 0.), c(1., 0.), c(-1., 0.)]));
        assert_eq!(z0, expect);
        let id = PauliString::identity(2).to_matrix(&pol).unwrap();
        assert_eq!(id, Array2::eye(4));
        let y = p("Y0", 1).to_matrix(&pol).unwrap();
        assert_eq!(y[[1, 0]], c(0., 1.));
        assert_eq!(y[[0, 1]], c(0., -1.));
    }

    #[test]
    fn matrix_capacity() {
        let pol = NumericalPolicy {
            memory_budget_bytes: 1024,
            ..NumericalPolicy::default()
        };
        assert!(matches!(
            p("X0", 4).to_matrix(&pol),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn trace_products() {
        let zz = p("Z0 Z1", 2);
        assert_eq!(zz.normalized_trace_product(&zz).unwrap(), c(1., 0.));
        assert_eq!(p("X0", 2).normalized_trace_product(&p("Z0", 2)).unwrap(), c(0., 0.));
        let a = p("X0", 2);
        let b = p("X0 Y1", 2);
        assert_eq!(a.normalized_trace_product(&b).unwrap(), c(0., 0.));
        let pol = NumericalPolicy::default();
        let tr = a.to_matrix(&pol).unwrap().dot(&b.to_matrix(&pol).unwrap()).diag().sum() / 4.0;
        assert!(tr.norm() < 1e-15);
    }

    #[test]
    fn notation_round_trip() {
        for (text, l) in [("X0 Z3", 4), ("-i Y2", 3), ("I", 2), ("+i X0 Y1 Z2", 3)] {
            let s = p(text, l);
            assert_eq!(s.to_string(), text);
            assert_eq!(p(&s.to_string(), l), s);
        }
        assert_eq!(p("+1 Z1", 2).to_string(), "Z1");
        assert!(PauliString::parse("Q0", 2).is_err());
        assert!(PauliString::parse("X5", 2).is_err());
        assert!(PauliString::parse("X0 Z0", 2).is_err());
        assert!(PauliString::parse("", 2).is_err());
    }

    #[test]
    fn basis_validation() {
        assert!(OperatorBasis::parse(2, &["X0", "Z1", "X0 X1"]).is_ok());
        assert!(OperatorBasis::parse(2, &["X0", "X0"]).is_err());
        assert!(OperatorBasis::parse(2, &["I"]).is_err());
        assert!(OperatorBasis::parse(2, &["-1 X0"]).is_err());
        let b = OperatorBasis::parse(3, &["X0", "Y1", "Z0 Z2", "X0 Y1 Z2"]).unwrap();
        assert_eq!(b.gram(), Array2::eye(4));
        assert_eq!(b.max_size(), 3);
    }

    fn arb_string(sites: usize) -> impl Strategy<Value = PauliString> {
        (0..(1u64 << sites), 0..(1u64 << sites), 0u32..4)
            .prop_map(move |(x, z, k)| PauliString::from_masks(sites, x, z, Phase::from_exponent(k)))
    }

    fn max_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
        (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    proptest! {
        #[test]
        fn product_matches_matrices((a, b) in (1usize..=4).prop_flat_map(|l| (arb_string(l), arb_string(l)))) {
            let pol = NumericalPolicy::default();
            let lhs = a.multiply(&b).unwrap().to_matrix(&pol).unwrap();
            let rhs = a.to_matrix(&pol).unwrap().dot(&b.to_matrix(&pol).unwrap());
            prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
        }

        #[test]
        fn commutation_matches_matrices((a, b) in (1usize..=4).prop_flat_map(|l| (arb_string(l), arb_string(l)))) {
            let pol = NumericalPolicy::default();
            let ma = a.to_matrix(&pol).unwrap();
            let mb = b.to_matrix(&pol).unwrap();
            let comm = ma.dot(&mb) - mb.dot(&ma);
            let norm = comm.iter().map(|v| v.norm()).fold(0.0, f64::max);
            prop_assert_eq!(a.commutes(&b).unwrap(), norm < 1e-12);
        }

        #[test]
        fn trace_matches_matrices((a, b) in (1usize..=4).prop_flat_map(|l| (arb_string(l), arb_string(l)))) {
            let pol = NumericalPolicy::default();
            let dim = 1usize << a.site_count();
            let tr = a.to_matrix(&pol).unwrap().dot(&b.to_matrix(&pol).unwrap()).diag().sum() / dim as f64;
            prop_assert!((tr - a.normalized_trace_product(&b).unwrap()).norm() < 1e-12);
        }

        #[test]
        fn product_is_associative((a, b, c) in (1usize..=6).prop_flat_map(|l| (arb_string(l), arb_string(l), arb_string(l)))) {
            let left = a.multiply(&b).unwrap().multiply(&c).unwrap();
            let right = a.multiply(&b.multiply(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn matrices_are_unitary_and_hermitian_when_real(a in (1usize..=3).prop_flat_map(arb_string)) {
            let pol = NumericalPolicy::default();
            let m = a.to_matrix(&pol).unwrap();
            let dag = m.t().mapv(|v| v.conj());
            let dim = m.nrows();
            prop_assert!(max_diff(&m.dot(&dag), &Array2::eye(dim)) < 1e-12);
            if a.is_hermitian() {
                prop_assert!(max_diff(&m, &dag) < 1e-12);
            }
        }
    }
}
