//! Fiberwise Moyal–Weyl product and the brackets derived from it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use super::{wedge_sign, Caps, TermKey, WeylError, WeylSection, YMono};
use crate::coeff_ring::{ChartSpec, CoeffFn, GaussRat};

/// One summand of `(ℏ/2)^r / r! · (ω^{jl} ∂_{y^j} ⊗ ∂_{z^l})^r` applied to a pair
/// of fiber monomials.
#[derive(Clone, Debug)]
struct Contraction {
    order: u32,
    y: YMono,
    coeff: CoeffFn,
}

type ContractionCache = RwLock<HashMap<(YMono, YMono), Arc<Vec<Contraction>>>>;

/// Symplectic form `ω_{jl} = ω(∂_j, ∂_l)` on the chart together with its
/// inverse `ω^{jl}` (`ω^{js} ω_{sl} = δ^j_l`).
#[derive(Clone)]
pub struct SymplecticData {
    chart: ChartSpec,
    lower: Vec<Vec<CoeffFn>>,
    upper: Vec<Vec<CoeffFn>>,
    cache: Arc<ContractionCache>,
}

impl SymplecticData {
    /// `ω = Σ_α dI^α ∧ dφ^α`.
    pub fn standard(chart: ChartSpec) -> Self {
        let dim = chart.dim();
        let zero = CoeffFn::zero(chart);
        let mut lower = vec![vec![zero.clone(); dim]; dim];
        let mut upper = vec![vec![zero; dim]; dim];
        for a in 0..chart.n {
            let (i, p) = (chart.action(a), chart.angle(a));
            lower[i][p] = CoeffFn::from_int(chart, 1);
            lower[p][i] = CoeffFn::from_int(chart, -1);
            upper[i][p] = CoeffFn::from_int(chart, -1);
            upper[p][i] = CoeffFn::from_int(chart, 1);
        }
        SymplecticData::from_matrices(chart, lower, upper)
    }

    /// Caller guarantees antisymmetry and the inverse relation.
    pub(crate) fn from_matrices(chart: ChartSpec, lower: Vec<Vec<CoeffFn>>, upper: Vec<Vec<CoeffFn>>) -> Self {
        SymplecticData { chart, lower, upper, cache: Arc::new(RwLock::new(HashMap::new())) }
    }

    pub fn chart(&self) -> ChartSpec {
        self.chart
    }

    pub fn lower(&self, j: usize, l: usize) -> &CoeffFn {
        &self.lower[j][l]
    }

    pub fn upper(&self, j: usize, l: usize) -> &CoeffFn {
        &self.upper[j][l]
    }

    pub fn is_constant(&self) -> bool {
        self.lower.iter().flatten().all(CoeffFn::is_constant)
    }

    /// `ω` as a central two-form `Σ_{j<l} ω_{jl} dx^j ∧ dx^l`.
    pub fn omega_form(&self, caps: Caps) -> WeylSection {
        let dim = self.chart.dim();
        let mut out = WeylSection::zero(self.chart, caps);
        for j in 0..dim {
            for l in j + 1..dim {
                let c = &self.lower[j][l];
                if !c.is_zero() {
                    out.add_term(TermKey::new(0, YMono::one(dim), 1 << j | 1 << l), c);
                }
            }
        }
        out
    }

    fn contractions(&self, a: &YMono, b: &YMono) -> Arc<Vec<Contraction>> {
        let key = (a.clone(), b.clone());
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return hit.clone();
        }
        let computed = Arc::new(self.expand(a, b));
        self.cache.write().unwrap().entry(key).or_insert(computed).clone()
    }

    fn expand(&self, a: &YMono, b: &YMono) -> Vec<Contraction> {
        let dim = self.chart.dim();
        let one = CoeffFn::one(self.chart);
        let mut out = vec![Contraction { order: 0, y: a.mul(b), coeff: one.clone() }];
        let mut state: BTreeMap<(YMono, YMono), CoeffFn> = BTreeMap::from([((a.clone(), b.clone()), one)]);
        let mut r = 0u32;
        while !state.is_empty() {
            r += 1;
            let mut next: BTreeMap<(YMono, YMono), CoeffFn> = BTreeMap::new();
            for ((ya, yb), c) in &state {
                for j in 0..dim {
                    let ej = ya.get(j);
                    if ej == 0 {
                        continue;
                    }
                    for l in 0..dim {
                        let el = yb.get(l);
                        let w = &self.upper[j][l];
                        if el == 0 || w.is_zero() {
                            continue;
                        }
                        let term = (c * w).scale_int(ej as i64 * el as i64);
                        let slot = next.entry((ya.lowered(j), yb.lowered(l))).or_insert_with(|| CoeffFn::zero(self.chart));
                        slot.add_assign_ref(&term);
                    }
                }
            }
            next.retain(|_, c| !c.is_zero());
            let factor = GaussRat::ratio(1, 2 * r as i64);
            for c in next.values_mut() {
                *c = c.scale(&factor);
            }
            let mut grouped: BTreeMap<YMono, CoeffFn> = BTreeMap::new();
            for ((ya, yb), c) in &next {
                grouped.entry(ya.mul(yb)).or_insert_with(|| CoeffFn::zero(self.chart)).add_assign_ref(c);
            }
            for (y, coeff) in grouped {
                if !coeff.is_zero() {
                    out.push(Contraction { order: r, y, coeff });
                }
            }
            state = next;
        }
        out
    }
}

impl PartialEq for SymplecticData {
    fn eq(&self, other: &Self) -> bool {
        self.chart == other.chart && self.lower == other.lower && self.upper == other.upper
    }
}

impl fmt::Debug for SymplecticData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymplecticData").field("chart", &self.chart).field("lower", &self.lower).finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kernel {
    /// Full Moyal product.
    Moyal,
    /// `2 ×` the odd-order part: the supercommutator.
    Commutator,
    /// Single contraction without ℏ: the fiberwise Poisson bracket.
    FiberBracket,
    /// No contraction: the commutative fiber product.
    Pointwise,
    /// Full contractions of 0-forms only: the `y`-free, form-free part.
    Scalar,
}

fn product_kernel(a: &WeylSection, b: &WeylSection, s: &SymplecticData, caps: Caps, kernel: Kernel) -> WeylSection {
    let chart = a.chart;
    let mut acc: BTreeMap<TermKey, CoeffFn> = BTreeMap::new();
    for (ka, ca) in &a.terms {
        for (kb, cb) in &b.terms {
            let l0 = ka.hbar + kb.hbar;
            if l0 > caps.order {
                continue;
            }
            let Some(sign) = wedge_sign(ka.forms, kb.forms) else { continue };
            let total_degree = ka.weyl_degree() + kb.weyl_degree();
            let forms = ka.forms | kb.forms;
            let mut prod: Option<CoeffFn> = None;
            match kernel {
                Kernel::Pointwise => {
                    if total_degree > caps.degree {
                        continue;
                    }
                    let p = (ca * cb).scale_int(sign);
                    push(&mut acc, TermKey::new(l0, ka.y.mul(&kb.y), forms), p);
                }
                Kernel::FiberBracket => {
                    if total_degree < 2 || total_degree - 2 > caps.degree {
                        continue;
                    }
                    for c in s.contractions(&ka.y, &kb.y).iter().filter(|c| c.order == 1) {
                        let p = prod.get_or_insert_with(|| ca * cb);
                        push(&mut acc, TermKey::new(l0, c.y.clone(), forms), (&*p * &c.coeff).scale_int(2 * sign));
                    }
                }
                Kernel::Scalar => {
                    if ka.forms != 0 || kb.forms != 0 || ka.y.degree() != kb.y.degree() {
                        continue;
                    }
                    let r = ka.y.degree();
                    if l0 + r > caps.order {
                        continue;
                    }
                    for c in s.contractions(&ka.y, &kb.y).iter().filter(|c| c.order == r) {
                        push(&mut acc, TermKey::new(l0 + r, c.y.clone(), 0), &(ca * cb) * &c.coeff);
                    }
                }
                Kernel::Moyal | Kernel::Commutator => {
                    if total_degree > caps.degree {
                        continue;
                    }
                    let factor = if kernel == Kernel::Commutator { 2 * sign } else { sign };
                    for c in s.contractions(&ka.y, &kb.y).iter() {
                        if l0 + c.order > caps.order {
                            break;
                        }
                        if kernel == Kernel::Commutator && c.order % 2 == 0 {
                            continue;
                        }
                        let p = prod.get_or_insert_with(|| ca * cb);
                        push(&mut acc, TermKey::new(l0 + c.order, c.y.clone(), forms), (&*p * &c.coeff).scale_int(factor));
                    }
                }
            }
        }
    }
    WeylSection::from_map(chart, caps, acc)
}

fn push(acc: &mut BTreeMap<TermKey, CoeffFn>, key: TermKey, c: CoeffFn) {
    match acc.entry(key) {
        std::collections::btree_map::Entry::Vacant(e) => {
            e.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut e) => e.get_mut().add_assign_ref(&c),
    }
}

fn check(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<(), WeylError> {
    a.check_compatible(b)?;
    if s.chart != a.chart {
        return Err(WeylError::ChartMismatch { left: a.chart, right: s.chart });
    }
    Ok(())
}

/// `a ∘ b = exp((ℏ/2) ω^{jl} ∂_{y^j} ∂_{z^l}) a(y) b(z)|_{z=y}` with the wedge of
/// form factors, truncated to the shared caps.
pub fn moyal(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<WeylSection, WeylError> {
    check(a, b, s)?;
    Ok(product_kernel(a, b, s, a.caps, Kernel::Moyal))
}

/// Moyal product evaluated under explicit caps (inputs are read as given).
pub fn moyal_capped(a: &WeylSection, b: &WeylSection, s: &SymplecticData, caps: Caps) -> WeylSection {
    product_kernel(a, b, s, caps, Kernel::Moyal)
}

/// The `y⁰`, form-degree-0 component of `a ∘ b` as an ℏ-series of length
/// `order + 1`, without forming the rest of the product.
pub fn moyal_scalar_part(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<Vec<CoeffFn>, WeylError> {
    check(a, b, s)?;
    Ok(product_kernel(a, b, s, a.caps, Kernel::Scalar).scalar_part())
}

/// `[a, b] = a∘b − (−1)^{|a||b|} b∘a`, graded by form degree.
pub fn supercommutator(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<WeylSection, WeylError> {
    check(a, b, s)?;
    Ok(product_kernel(a, b, s, a.caps, Kernel::Commutator))
}

pub fn supercommutator_capped(a: &WeylSection, b: &WeylSection, s: &SymplecticData, caps: Caps) -> WeylSection {
    product_kernel(a, b, s, caps, Kernel::Commutator)
}

/// Fiberwise Poisson bracket `ω^{jl} ∂a/∂y^j ∧ ∂b/∂y^l`.
pub fn fib_bracket(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<WeylSection, WeylError> {
    check(a, b, s)?;
    Ok(product_kernel(a, b, s, a.caps, Kernel::FiberBracket))
}

/// Commutative product of fiber polynomials (wedge on forms).
pub fn fiber_product(a: &WeylSection, b: &WeylSection) -> Result<WeylSection, WeylError> {
    a.check_compatible(b)?;
    let s = SymplecticData::from_matrices(a.chart, Vec::new(), Vec::new());
    Ok(product_kernel(a, b, &s, a.caps, Kernel::Pointwise))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ChartSpec, Caps, SymplecticData) {
        let chart = ChartSpec::new(1, 1).unwrap();
        (chart, Caps::new(3, 6), SymplecticData::standard(chart))
    }

    #[test]
    fn product_of_generators() {
        let (chart, caps, s) = setup();
        let y1 = WeylSection::y(chart, caps, 0);
        let y2 = WeylSection::y(chart, caps, 1);
        let prod = moyal(&y1, &y2, &s).unwrap();
        // y¹ ∘ y² = y¹y² + (ℏ/2) ω^{12}
        let y1y2 = WeylSection::monomial(chart, caps, 0, &YMono::from_exponents(&[1, 1]), &[], &CoeffFn::one(chart));
        let half_w = WeylSection::from_fn(&s.upper(0, 1).scale(&GaussRat::ratio(1, 2)), caps).mul_hbar(1);
        assert_eq!(prod, y1y2.add(&half_w));
        let comm = supercommutator(&y1, &y2, &s).unwrap();
        assert_eq!(comm, WeylSection::from_fn(s.upper(0, 1), caps).mul_hbar(1));
        let one = WeylSection::constant(chart, caps, 1);
        assert_eq!(moyal(&one, &y1y2, &s).unwrap(), y1y2);
    }

    #[test]
    fn commutator_basics() {
        let (chart, caps, s) = setup();
        let a = WeylSection::monomial(chart, caps, 0, &YMono::from_exponents(&[2, 1]), &[], &CoeffFn::angle(chart, 0));
        assert!(supercommutator(&a, &a, &s).unwrap().is_zero());
        let w = s.omega_form(caps);
        assert!(supercommutator(&w, &a, &s).unwrap().is_zero());
        let fib = fib_bracket(&WeylSection::y(chart, caps, 0), &WeylSection::y(chart, caps, 1), &s).unwrap();
        assert_eq!(fib, WeylSection::from_fn(s.upper(0, 1), caps));
    }

    #[test]
    fn scalar_part_matches_full_product() {
        let (chart, caps, s) = setup();
        let f = CoeffFn::angle(chart, 0) + CoeffFn::from_int(chart, 2);
        let mut a = WeylSection::monomial(chart, caps, 0, &YMono::from_exponents(&[2, 1]), &[], &f);
        a.add_assign(&WeylSection::monomial(chart, caps, 1, &YMono::from_exponents(&[0, 1]), &[], &CoeffFn::action(chart, 0)));
        let mut b = WeylSection::monomial(chart, caps, 0, &YMono::from_exponents(&[1, 2]), &[], &CoeffFn::one(chart));
        b.add_assign(&WeylSection::y(chart, caps, 0));
        assert_eq!(moyal_scalar_part(&a, &b, &s).unwrap(), moyal(&a, &b, &s).unwrap().scalar_part());
    }

    #[test]
    fn mismatched_caps_rejected() {
        let (chart, caps, s) = setup();
        let a = WeylSection::y(chart, caps, 0);
        let b = WeylSection::y(chart, Caps::new(2, 4), 0);
        assert!(matches!(moyal(&a, &b, &s), Err(WeylError::CapMismatch { .. })));
    }
}
