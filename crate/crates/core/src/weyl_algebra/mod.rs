//! Truncated sections of the Weyl bundle with forms, `W_ℏ ⊗ Λ`, over one chart.
//!
//! A section is a finite sum of terms `ℏ^l · y^a · dx^g · c(x)` where `y^a` is a
//! fiber monomial, `dx^g` a normal-ordered wedge of coordinate differentials
//! and `c` a [`CoeffFn`]. Every section carries truncation [`Caps`]: terms of
//! Weyl degree `|a| + 2l` above `D` or with `l` above `N` are dropped.

mod moyal;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::coeff_ring::{ChartSpec, CoeffError, CoeffFn, GaussRat, TermRecord};

pub use moyal::{fib_bracket, fiber_product, moyal, moyal_capped, moyal_scalar_part, supercommutator, supercommutator_capped, SymplecticData};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WeylError {
    #[error("chart mismatch: {left} vs {right}")]
    ChartMismatch { left: ChartSpec, right: ChartSpec },
    #[error("truncation caps differ: {left} vs {right}")]
    CapMismatch { left: Caps, right: Caps },
    #[error("term not divisible by ℏ: {term}")]
    NotDivisible { term: String },
    #[error("filtration degree is undefined on Fourier terms: {term}")]
    FourierInFiltration { term: String },
    #[error("malformed section: {0}")]
    Malformed(String),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

/// Truncation caps: `degree` is the maximal Weyl degree `D` (with `deg ℏ = 2`),
/// `order` the maximal power `N` of `ℏ`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    pub order: u32,
    pub degree: u32,
}

impl Caps {
    pub fn new(order: u32, degree: u32) -> Self {
        Caps { order, degree }
    }

    /// `D = 2N`, the smallest degree cap for which `ℏ^N` coefficients of
    /// products of lifts are complete.
    pub fn for_order(order: u32) -> Self {
        Caps { order, degree: 2 * order }
    }

    pub fn admits(&self, hbar: u32, weyl_degree: u32) -> bool {
        hbar <= self.order && weyl_degree <= self.degree
    }

    /// Caps used for an intermediate product that is divided by `ℏ` afterwards.
    pub fn raised(&self) -> Caps {
        Caps { order: self.order + 1, degree: self.degree + 2 }
    }
}

impl fmt::Display for Caps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(N={}, D={})", self.order, self.degree)
    }
}

impl fmt::Debug for Caps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Exponent vector of a fiber monomial in `y^0..y^{2n−1}`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct YMono(SmallVec<[u16; 8]>);

impl YMono {
    pub fn one(dim: usize) -> Self {
        YMono(SmallVec::from_elem(0, dim))
    }

    pub fn var(dim: usize, v: usize) -> Self {
        let mut m = YMono::one(dim);
        m.0[v] = 1;
        m
    }

    pub fn from_exponents(exps: &[u16]) -> Self {
        YMono(exps.iter().copied().collect())
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    pub fn get(&self, v: usize) -> u16 {
        self.0[v]
    }

    pub fn mul(&self, other: &YMono) -> YMono {
        YMono(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }

    fn lowered(&self, v: usize) -> YMono {
        let mut m = self.clone();
        m.0[v] -= 1;
        m
    }

    fn raised(&self, v: usize) -> YMono {
        let mut m = self.clone();
        m.0[v] += 1;
        m
    }
}

/// Key of one section term. `forms` is a bitmask over coordinate indices; the
/// wedge is read in increasing index order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct TermKey {
    pub hbar: u32,
    pub y: YMono,
    pub forms: u64,
}

impl TermKey {
    pub fn new(hbar: u32, y: YMono, forms: u64) -> Self {
        TermKey { hbar, y, forms }
    }

    pub fn weyl_degree(&self) -> u32 {
        self.y.degree() + 2 * self.hbar
    }

    pub fn form_degree(&self) -> u32 {
        self.forms.count_ones()
    }

    pub fn form_indices(&self) -> Vec<usize> {
        bits(self.forms).collect()
    }
}

pub(crate) fn bits(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |b| mask >> b & 1 == 1)
}

pub(crate) fn mask_of(indices: &[usize]) -> u64 {
    indices.iter().fold(0, |m, &i| m | 1 << i)
}

/// Sign of `dx^{a} ∧ dx^{b}` relative to the normal-ordered wedge of `a | b`,
/// or `None` if the factors overlap.
pub(crate) fn wedge_sign(a: u64, b: u64) -> Option<i64> {
    if a & b != 0 {
        return None;
    }
    let mut swaps = 0u32;
    for j in bits(b) {
        swaps += (a >> (j + 1)).count_ones();
    }
    Some(if swaps.is_multiple_of(2) { 1 } else { -1 })
}

/// One serialized section term.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionTermRecord {
    pub l: u32,
    pub a: Vec<u16>,
    pub g: Vec<usize>,
    pub coeff: Vec<TermRecord>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct WeylSection {
    chart: ChartSpec,
    caps: Caps,
    terms: BTreeMap<TermKey, CoeffFn>,
}

impl WeylSection {
    pub fn zero(chart: ChartSpec, caps: Caps) -> Self {
        WeylSection { chart, caps, terms: BTreeMap::new() }
    }

    /// The pure function `f` (y-degree 0, no forms, `ℏ^0`).
    pub fn from_fn(f: &CoeffFn, caps: Caps) -> Self {
        let chart = f.chart();
        let mut s = WeylSection::zero(chart, caps);
        s.add_term(TermKey::new(0, YMono::one(chart.dim()), 0), f);
        s
    }

    pub fn constant(chart: ChartSpec, caps: Caps, c: i64) -> Self {
        WeylSection::from_fn(&CoeffFn::from_int(chart, c), caps)
    }

    /// The fiber variable `y^v`.
    pub fn y(chart: ChartSpec, caps: Caps, v: usize) -> Self {
        WeylSection::monomial(chart, caps, 0, &YMono::var(chart.dim(), v), &[], &CoeffFn::one(chart))
    }

    /// The one-form `dx^v`.
    pub fn dx(chart: ChartSpec, caps: Caps, v: usize) -> Self {
        WeylSection::monomial(chart, caps, 0, &YMono::one(chart.dim()), &[v], &CoeffFn::one(chart))
    }

    /// `ℏ^l y^a dx^{g_0} ∧ dx^{g_1} ∧ … · c` with `g` in any order (the sign of
    /// the reordering is applied).
    pub fn monomial(chart: ChartSpec, caps: Caps, hbar: u32, y: &YMono, forms: &[usize], c: &CoeffFn) -> Self {
        let mut s = WeylSection::zero(chart, caps);
        let mut mask = 0u64;
        let mut sign = 1i64;
        for &v in forms {
            match wedge_sign(mask, 1 << v) {
                Some(sg) => sign *= sg,
                None => return s,
            }
            mask |= 1 << v;
        }
        let c = if sign < 0 { -c } else { c.clone() };
        s.add_term(TermKey::new(hbar, y.clone(), mask), &c);
        s
    }

    pub fn chart(&self) -> ChartSpec {
        self.chart
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &CoeffFn)> {
        self.terms.iter()
    }

    pub fn coeff(&self, key: &TermKey) -> Option<&CoeffFn> {
        self.terms.get(key)
    }

    pub(crate) fn from_map(chart: ChartSpec, caps: Caps, terms: BTreeMap<TermKey, CoeffFn>) -> Self {
        let terms = terms
            .into_iter()
            .filter(|(k, c)| !c.is_zero() && caps.admits(k.hbar, k.weyl_degree()))
            .collect();
        WeylSection { chart, caps, terms }
    }

    /// Adds `c` to the coefficient of `key`, dropping terms outside the caps.
    pub fn add_term(&mut self, key: TermKey, c: &CoeffFn) {
        if c.is_zero() || !self.caps.admits(key.hbar, key.weyl_degree()) {
            return;
        }
        accumulate(&mut self.terms, key, c);
    }

    pub(crate) fn add_term_scaled(&mut self, key: TermKey, c: &CoeffFn, s: &GaussRat) {
        if c.is_zero() || s.is_zero() || !self.caps.admits(key.hbar, key.weyl_degree()) {
            return;
        }
        match self.terms.entry(key) {
            Entry::Vacant(e) => {
                e.insert(c.scale(s));
            }
            Entry::Occupied(mut e) => {
                e.get_mut().add_scaled(c, s);
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn check_compatible(&self, other: &WeylSection) -> Result<(), WeylError> {
        if self.chart != other.chart {
            return Err(WeylError::ChartMismatch { left: self.chart, right: other.chart });
        }
        if self.caps != other.caps {
            return Err(WeylError::CapMismatch { left: self.caps, right: other.caps });
        }
        Ok(())
    }

    fn assert_compatible(&self, other: &WeylSection) {
        if let Err(e) = self.check_compatible(other) {
            panic!("{e}");
        }
    }

    /// Same terms under different caps (terms outside the new caps are dropped).
    pub fn with_caps(&self, caps: Caps) -> WeylSection {
        WeylSection::from_map(self.chart, caps, self.terms.clone())
    }

    pub fn add(&self, other: &WeylSection) -> WeylSection {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &WeylSection) -> WeylSection {
        let mut out = self.clone();
        out.add_scaled(other, &GaussRat::from_int(-1));
        out
    }

    pub fn add_assign(&mut self, other: &WeylSection) {
        self.assert_compatible(other);
        for (k, c) in &other.terms {
            accumulate(&mut self.terms, k.clone(), c);
        }
    }

    pub fn add_scaled(&mut self, other: &WeylSection, s: &GaussRat) {
        self.assert_compatible(other);
        for (k, c) in &other.terms {
            self.add_term_scaled(k.clone(), c, s);
        }
    }

    pub fn neg(&self) -> WeylSection {
        self.scale(&GaussRat::from_int(-1))
    }

    pub fn scale(&self, s: &GaussRat) -> WeylSection {
        if s.is_zero() {
            return WeylSection::zero(self.chart, self.caps);
        }
        let terms = self.terms.iter().map(|(k, c)| (k.clone(), c.scale(s))).collect();
        WeylSection { chart: self.chart, caps: self.caps, terms }
    }

    /// Multiplication by a function of `x` (central for `∘`).
    pub fn mul_fn(&self, f: &CoeffFn) -> WeylSection {
        let mut out = WeylSection::zero(self.chart, self.caps);
        for (k, c) in &self.terms {
            out.add_term(k.clone(), &(c * f));
        }
        out
    }

    /// Multiplication by `ℏ^p`.
    pub fn mul_hbar(&self, p: u32) -> WeylSection {
        let mut out = WeylSection::zero(self.chart, self.caps);
        for (k, c) in &self.terms {
            out.add_term(TermKey::new(k.hbar + p, k.y.clone(), k.forms), c);
        }
        out
    }

    /// Keeps the terms for which `pred` holds.
    pub fn filter(&self, mut pred: impl FnMut(&TermKey) -> bool) -> WeylSection {
        let terms = self.terms.iter().filter(|(k, _)| pred(k)).map(|(k, c)| (k.clone(), c.clone())).collect();
        WeylSection { chart: self.chart, caps: self.caps, terms }
    }

    /// Terms of Weyl degree at most `max_degree`.
    pub fn truncated(&self, max_degree: u32) -> WeylSection {
        self.filter(|k| k.weyl_degree() <= max_degree)
    }

    pub fn form_part(&self, q: u32) -> WeylSection {
        self.filter(|k| k.form_degree() == q)
    }

    /// Homogeneous component of Weyl degree `p`.
    pub fn weyl_component(&self, p: u32) -> WeylSection {
        self.filter(|k| k.weyl_degree() == p)
    }

    /// The part of y-degree 0 and form degree 0: the ℏ-series of functions
    /// written `a_0` when evaluating flat sections.
    pub fn scalar_part(&self) -> Vec<CoeffFn> {
        let mut out = vec![CoeffFn::zero(self.chart); self.caps.order as usize + 1];
        for (k, c) in &self.terms {
            if k.forms == 0 && k.y.degree() == 0 {
                out[k.hbar as usize].add_assign_ref(c);
            }
        }
        out
    }

    /// The `p = q = 0` component (no fiber variables, no forms, any ℏ power).
    pub fn a00(&self) -> WeylSection {
        self.filter(|k| k.forms == 0 && k.y.degree() == 0)
    }

    pub fn min_weyl_degree(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.weyl_degree()).min()
    }

    pub fn max_weyl_degree(&self) -> Option<u32> {
        self.terms.keys().map(|k| k.weyl_degree()).max()
    }

    pub fn max_y_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.y.degree()).max().unwrap_or(0)
    }

    pub fn max_form_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.form_degree()).max().unwrap_or(0)
    }

    pub fn has_fiber_variables(&self) -> bool {
        self.terms.keys().any(|k| k.y.degree() > 0)
    }

    /// Parity of the form degree if homogeneous (`Some(0)` even, `Some(1)` odd).
    pub fn form_parity(&self) -> Option<u32> {
        let mut it = self.terms.keys().map(|k| k.form_degree() % 2);
        let first = it.next().unwrap_or(0);
        it.all(|p| p == first).then_some(first)
    }

    /// Coefficientwise exterior derivative `d`, with `dx^v` placed in front.
    pub fn d(&self) -> WeylSection {
        let dim = self.chart.dim();
        let mut out = WeylSection::zero(self.chart, self.caps);
        for (k, c) in &self.terms {
            for v in 0..dim {
                if k.forms >> v & 1 == 1 {
                    continue;
                }
                let dc = c.diff(v);
                if dc.is_zero() {
                    continue;
                }
                let sign = wedge_sign(1 << v, k.forms).unwrap();
                let key = TermKey::new(k.hbar, k.y.clone(), k.forms | 1 << v);
                if sign < 0 {
                    out.add_term(key, &-dc);
                } else {
                    out.add_term(key, &dc);
                }
            }
        }
        out
    }

    /// `∂a/∂y^v`.
    pub fn y_derivative(&self, v: usize) -> WeylSection {
        let mut out = WeylSection::zero(self.chart, self.caps);
        for (k, c) in &self.terms {
            let e = k.y.get(v);
            if e > 0 {
                out.add_term(TermKey::new(k.hbar, k.y.lowered(v), k.forms), &c.scale_int(e as i64));
            }
        }
        out
    }

    pub fn to_records(&self) -> Vec<SectionTermRecord> {
        self.terms
            .iter()
            .map(|(k, c)| SectionTermRecord {
                l: k.hbar,
                a: k.y.exponents().to_vec(),
                g: k.form_indices(),
                coeff: c.to_records(),
            })
            .collect()
    }

    pub fn from_records(chart: ChartSpec, caps: Caps, records: &[SectionTermRecord]) -> Result<Self, WeylError> {
        let mut s = WeylSection::zero(chart, caps);
        for (idx, r) in records.iter().enumerate() {
            if r.a.len() != chart.dim() {
                return Err(WeylError::Malformed(format!("term {idx}: fiber multidegree must have length {}", chart.dim())));
            }
            if r.g.windows(2).any(|w| w[0] >= w[1]) || r.g.iter().any(|&v| v >= chart.dim()) {
                return Err(WeylError::Malformed(format!("term {idx}: form indices must be strictly increasing and < {}", chart.dim())));
            }
            let key = TermKey::new(r.l, YMono::from_exponents(&r.a), mask_of(&r.g));
            if !caps.admits(key.hbar, key.weyl_degree()) {
                return Err(WeylError::Malformed(format!("term {idx}: exceeds caps {caps}")));
            }
            let c = CoeffFn::from_records(chart, &r.coeff)?;
            s.add_term(key, &c);
        }
        Ok(s)
    }
}

fn accumulate(terms: &mut BTreeMap<TermKey, CoeffFn>, key: TermKey, c: &CoeffFn) {
    if c.is_zero() {
        return;
    }
    match terms.entry(key) {
        Entry::Vacant(e) => {
            e.insert(c.clone());
        }
        Entry::Occupied(mut e) => {
            e.get_mut().add_assign_ref(c);
            if e.get().is_zero() {
                e.remove();
            }
        }
    }
}

impl fmt::Display for WeylSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "[{c}]")?;
            if k.hbar > 0 {
                write!(f, "*h^{}", k.hbar)?;
            }
            for (v, &e) in k.y.exponents().iter().enumerate() {
                if e == 1 {
                    write!(f, "*{}", self.chart.fiber_name(v))?;
                } else if e > 1 {
                    write!(f, "*{}^{}", self.chart.fiber_name(v), e)?;
                }
            }
            let forms: Vec<String> = bits(k.forms).map(|v| format!("d{}", self.chart.coord_name(v))).collect();
            if !forms.is_empty() {
                write!(f, "*{}", forms.join("^"))?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for WeylSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeylSection{} {}", self.caps, self)
    }
}

/// Weyl degree `|a| + 2l` of a term.
pub fn weyl_degree(key: &TermKey) -> u32 {
    key.weyl_degree()
}

/// `δa = Σ_j dx^j ∧ ∂a/∂y^j`.
pub fn delta(a: &WeylSection) -> WeylSection {
    let mut out = WeylSection::zero(a.chart, a.caps);
    for (k, c) in &a.terms {
        for j in 0..a.chart.dim() {
            let e = k.y.get(j);
            if e == 0 {
                continue;
            }
            let Some(sign) = wedge_sign(1 << j, k.forms) else { continue };
            let key = TermKey::new(k.hbar, k.y.lowered(j), k.forms | 1 << j);
            out.add_term_scaled(key, c, &GaussRat::from_int(sign * e as i64));
        }
    }
    out
}

/// `δ⁻¹a = (1/(p+q)) Σ_j y^j (∂_j ⌟ a)` on each component of y-degree `p`
/// (ℏ not counted) and form degree `q`; zero on `p = q = 0`.
pub fn delta_inv(a: &WeylSection) -> WeylSection {
    let mut out = WeylSection::zero(a.chart, a.caps);
    for (k, c) in &a.terms {
        let p = k.y.degree();
        let q = k.form_degree();
        if p + q == 0 {
            continue;
        }
        for (pos, j) in bits(k.forms).enumerate() {
            let sign = if pos % 2 == 0 { 1 } else { -1 };
            let key = TermKey::new(k.hbar, k.y.raised(j), k.forms & !(1 << j));
            out.add_term_scaled(key, c, &GaussRat::ratio(sign, (p + q) as i64));
        }
    }
    out
}

/// Divides by `ℏ`; every term must carry at least one power of `ℏ`.
pub fn hdiv(a: &WeylSection) -> Result<WeylSection, WeylError> {
    let mut out = WeylSection::zero(a.chart, a.caps);
    for (k, c) in &a.terms {
        if k.hbar == 0 {
            let single = WeylSection::from_map(a.chart, a.caps, BTreeMap::from([(k.clone(), c.clone())]));
            return Err(WeylError::NotDivisible { term: single.to_string() });
        }
        out.add_term(TermKey::new(k.hbar - 1, k.y.clone(), k.forms), c);
    }
    Ok(out)
}

/// `(1/ℏ)[a, b]`, computed at raised caps so that the division loses nothing.
pub fn ad_over_hbar(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<WeylSection, WeylError> {
    a.check_compatible(b)?;
    let caps = a.caps;
    let br = supercommutator_capped(&a.with_caps(caps.raised()), &b.with_caps(caps.raised()), s, caps.raised());
    Ok(hdiv(&br)?.with_caps(caps))
}

/// Filtration degree: the maximum over terms of (angle-polynomial degree) +
/// (number of ψ fiber factors) + (number of dφ factors). `None` for the zero
/// section, which lies in every filtration level.
pub fn filtration_degree(a: &WeylSection) -> Result<Option<u32>, WeylError> {
    let chart = a.chart;
    let n = chart.n;
    let mut best: Option<u32> = None;
    for (k, c) in &a.terms {
        let psi: u32 = k.y.exponents()[n..].iter().map(|&e| e as u32).sum();
        let dphi = (k.forms >> n).count_ones();
        for (mono, _) in c.terms() {
            if !mono.is_fourier_free(&chart) {
                return Err(WeylError::FourierInFiltration { term: format!("{c}") });
            }
            let deg = mono.angle_degree(&chart) + psi + dphi;
            best = Some(best.map_or(deg, |b| b.max(deg)));
        }
    }
    Ok(best)
}

/// `filtration_degree(a) ≤ bound`, where a negative bound admits only zero.
pub fn within_filtration(a: &WeylSection, bound: i64) -> Result<bool, WeylError> {
    Ok(match filtration_degree(a)? {
        None => true,
        Some(d) => (d as i64) <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn chart() -> ChartSpec {
        ChartSpec::new(1, 1).unwrap()
    }

    fn caps() -> Caps {
        Caps::new(3, 6)
    }

    fn y(v: usize) -> WeylSection {
        WeylSection::y(chart(), caps(), v)
    }

    fn dx(v: usize) -> WeylSection {
        WeylSection::dx(chart(), caps(), v)
    }

    fn ym(e: &[u16]) -> YMono {
        YMono::from_exponents(e)
    }

    #[test]
    fn delta_examples() {
        let one = CoeffFn::one(chart());
        let y1y2 = WeylSection::monomial(chart(), caps(), 0, &ym(&[1, 1]), &[], &one);
        let expected = WeylSection::monomial(chart(), caps(), 0, &ym(&[0, 1]), &[0], &one)
            .add(&WeylSection::monomial(chart(), caps(), 0, &ym(&[1, 0]), &[1], &one));
        assert_eq!(delta(&y1y2), expected);
        let f = WeylSection::from_fn(&CoeffFn::action(chart(), 0), caps());
        assert!(delta(&f).is_zero());
        assert!(delta(&delta(&y1y2.mul_fn(&CoeffFn::angle(chart(), 0)))).is_zero());
    }

    #[test]
    fn delta_inv_examples() {
        let one = CoeffFn::one(chart());
        let half = GaussRat::ratio(1, 2);
        // y¹ dx² → ½ y¹ y²
        let a = WeylSection::monomial(chart(), caps(), 0, &ym(&[1, 0]), &[1], &one);
        let expected = WeylSection::monomial(chart(), caps(), 0, &ym(&[1, 1]), &[], &one).scale(&half);
        assert_eq!(delta_inv(&a), expected);
        // dx¹∧dx² → ½(y¹dx² − y²dx¹)
        let b = WeylSection::monomial(chart(), caps(), 0, &ym(&[0, 0]), &[0, 1], &one);
        let expected = WeylSection::monomial(chart(), caps(), 0, &ym(&[1, 0]), &[1], &one)
            .sub(&WeylSection::monomial(chart(), caps(), 0, &ym(&[0, 1]), &[0], &one))
            .scale(&half);
        assert_eq!(delta_inv(&b), expected);
        let c = WeylSection::constant(chart(), caps(), 7).mul_hbar(1);
        assert!(delta_inv(&c).is_zero());
    }

    #[test]
    fn degrees() {
        let key = TermKey::new(1, ym(&[1, 0]), 0);
        assert_eq!(weyl_degree(&key), 3);
        let ch2 = ChartSpec::new(2, 0).unwrap();
        let c2 = Caps::new(2, 4);
        // ℏ·J¹ψ¹ has Weyl degree 4
        let t = WeylSection::monomial(ch2, c2, 1, &YMono::from_exponents(&[1, 0, 1, 0]), &[], &CoeffFn::one(ch2));
        assert_eq!(t.max_weyl_degree(), Some(4));
        let i3 = WeylSection::from_fn(&CoeffFn::monomial(ch2, &[3, 0], &[0, 0], &[], GaussRat::one()), c2);
        assert_eq!(filtration_degree(&i3).unwrap(), Some(0));
        // φ² J¹ dφ¹ has filtration degree 2
        let s = WeylSection::monomial(ch2, c2, 0, &YMono::from_exponents(&[1, 0, 0, 0]), &[2], &CoeffFn::angle(ch2, 1));
        assert_eq!(filtration_degree(&s).unwrap(), Some(2));
        let ch = chart();
        let fourier = WeylSection::from_fn(&CoeffFn::cos(ch, 0, 1), caps());
        assert!(matches!(filtration_degree(&fourier), Err(WeylError::FourierInFiltration { .. })));
    }

    #[test]
    fn hbar_division() {
        let a = WeylSection::constant(chart(), caps(), 1).mul_hbar(1);
        assert_eq!(hdiv(&a).unwrap(), WeylSection::constant(chart(), caps(), 1));
        let b = y(0).mul_hbar(2);
        assert_eq!(hdiv(&b).unwrap(), y(0).mul_hbar(1));
        assert!(matches!(hdiv(&y(0)), Err(WeylError::NotDivisible { .. })));
    }

    #[test]
    fn wedge_signs_and_d() {
        assert_eq!(wedge_sign(0b10, 0b01), Some(-1));
        assert_eq!(wedge_sign(0b01, 0b10), Some(1));
        assert_eq!(wedge_sign(0b01, 0b01), None);
        let swapped = WeylSection::monomial(chart(), caps(), 0, &ym(&[0, 0]), &[1, 0], &CoeffFn::one(chart()));
        let ordered = WeylSection::monomial(chart(), caps(), 0, &ym(&[0, 0]), &[0, 1], &CoeffFn::one(chart()));
        assert_eq!(swapped, ordered.neg());
        // d(φ dI) = dφ ∧ dI
        let a = dx(0).mul_fn(&CoeffFn::angle(chart(), 0));
        assert_eq!(a.d(), swapped);
    }

    #[test]
    fn records_reject_bad_input() {
        let r = SectionTermRecord { l: 0, a: vec![0, 0], g: vec![1, 0], coeff: CoeffFn::one(chart()).to_records() };
        assert!(WeylSection::from_records(chart(), caps(), &[r]).is_err());
        let r = SectionTermRecord { l: 4, a: vec![0, 0], g: vec![], coeff: CoeffFn::one(chart()).to_records() };
        assert!(WeylSection::from_records(chart(), caps(), &[r]).is_err());
        let s = y(0).add(&dx(1).mul_hbar(1)).mul_fn(&CoeffFn::sin(chart(), 0, 2));
        assert_eq!(WeylSection::from_records(chart(), caps(), &s.to_records()).unwrap(), s);
    }
}
