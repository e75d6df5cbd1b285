//! Star products on functions as ℏ-series `[Q_0, …, Q_N]`, and the axioms
//! every star product must satisfy.

use std::collections::BTreeMap;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use super::{FedosovError, FedosovState, StarTable};
use crate::chart_geometry::{multi_indices, poisson_bracket};
use crate::coeff_ring::{ChartSpec, CoeffFn, GaussRat};
use crate::weyl_algebra::SymplecticData;

pub trait StarProduct: Sync {
    fn chart(&self) -> ChartSpec;

    /// Highest power of ℏ computed.
    fn order(&self) -> u32;

    /// `f ∗ g` as `[Q_0(f,g), …, Q_N(f,g)]`.
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError>;
}

impl<P: StarProduct + ?Sized> StarProduct for &P {
    fn chart(&self) -> ChartSpec {
        (**self).chart()
    }
    fn order(&self) -> u32 {
        (**self).order()
    }
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        (**self).star(f, g)
    }
}

impl StarProduct for FedosovState {
    fn chart(&self) -> ChartSpec {
        FedosovState::chart(self)
    }
    fn order(&self) -> u32 {
        self.caps().order
    }
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        FedosovState::star(self, f, g)
    }
}

/// `f ∗ᵒᵖ g = g ∗ f`.
pub struct Opposite<P>(pub P);

impl<P: StarProduct> StarProduct for Opposite<P> {
    fn chart(&self) -> ChartSpec {
        self.0.chart()
    }
    fn order(&self) -> u32 {
        self.0.order()
    }
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        self.0.star(g, f)
    }
}

/// Bidifferential operator `Σ_{μ,ν} c_{μν} ∂^μ ⊗ ∂^ν` with constant coefficients.
type Bidiff = BTreeMap<(Vec<u32>, Vec<u32>), GaussRat>;

fn apply_bidiff(op: &Bidiff, f: &CoeffFn, g: &CoeffFn) -> CoeffFn {
    let mut out = CoeffFn::zero(f.chart());
    for ((mu, nu), c) in op {
        let df = f.diff_multi(mu);
        if df.is_zero() {
            continue;
        }
        let dg = g.diff_multi(nu);
        if !dg.is_zero() {
            out.add_scaled(&(&df * &dg), c);
        }
    }
    out
}

/// Moyal product of functions for a constant symplectic form:
/// `Σ_r (ℏ/2)^r / r! (ω^{jl} ∂_j ⊗ ∂_l)^r`.
#[derive(Clone, Debug)]
pub struct FunctionMoyal {
    chart: ChartSpec,
    order: u32,
    terms: Vec<Bidiff>,
}

impl FunctionMoyal {
    pub fn new(s: &SymplecticData, order: u32) -> Self {
        assert!(s.is_constant(), "function Moyal product needs constant ω");
        let chart = s.chart();
        let dim = chart.dim();
        let mut current: Bidiff = BTreeMap::from([((vec![0; dim], vec![0; dim]), GaussRat::from_int(1))]);
        let mut terms = vec![current.clone()];
        for r in 1..=order {
            let mut next = Bidiff::new();
            for ((mu, nu), c) in &current {
                for j in 0..dim {
                    for l in 0..dim {
                        let Some(w) = s.upper(j, l).as_constant() else { continue };
                        if w.is_zero() {
                            continue;
                        }
                        let (mut m2, mut n2) = (mu.clone(), nu.clone());
                        m2[j] += 1;
                        n2[l] += 1;
                        let slot = next.entry((m2, n2)).or_default();
                        *slot += &(c * &w).scale_ratio(1, 2 * r as i64);
                    }
                }
            }
            next.retain(|_, c| !c.is_zero());
            terms.push(next.clone());
            current = next;
        }
        FunctionMoyal { chart, order, terms }
    }
}

impl StarProduct for FunctionMoyal {
    fn chart(&self) -> ChartSpec {
        self.chart
    }
    fn order(&self) -> u32 {
        self.order
    }
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        Ok(self.terms.iter().map(|op| apply_bidiff(op, f, g)).collect())
    }
}

/// Standard-ordered product `Σ_μ ℏ^{|μ|}/μ! ∂_φ^μ f · ∂_I^μ g` for the
/// standard action–angle form.
#[derive(Clone, Debug)]
pub struct StandardOrdered {
    chart: ChartSpec,
    order: u32,
}

impl StandardOrdered {
    pub fn new(chart: ChartSpec, order: u32) -> Self {
        StandardOrdered { chart, order }
    }
}

impl StarProduct for StandardOrdered {
    fn chart(&self) -> ChartSpec {
        self.chart
    }
    fn order(&self) -> u32 {
        self.order
    }
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        let n = self.chart.n;
        let mut out = vec![CoeffFn::zero(self.chart); self.order as usize + 1];
        for mu in multi_indices(n, self.order) {
            let l: u32 = mu.iter().sum();
            let fact: i64 = mu.iter().map(|&m| (1..=m as i64).product::<i64>()).product();
            let mut on_f = vec![0; 2 * n];
            let mut on_g = vec![0; 2 * n];
            on_f[n..].copy_from_slice(&mu);
            on_g[..n].copy_from_slice(&mu);
            let term = &f.diff_multi(&on_f) * &g.diff_multi(&on_g);
            out[l as usize].add_scaled(&term, &GaussRat::ratio(1, fact));
        }
        Ok(out)
    }
}

/// Star product read off a [`StarTable`], extended bilinearly; inputs must be
/// constant-coefficient combinations of the tabulated monomials.
pub struct TableProduct<'a> {
    table: &'a StarTable,
}

impl<'a> TableProduct<'a> {
    pub fn new(table: &'a StarTable) -> Self {
        TableProduct { table }
    }

    fn expand(&self, f: &CoeffFn) -> Result<Vec<(usize, GaussRat)>, FedosovError> {
        f.terms()
            .map(|(mono, c)| {
                let unit = CoeffFn::from_term(f.chart(), mono, GaussRat::from_int(1));
                self.table.index_of(&unit).map(|i| (i, c.clone())).ok_or_else(|| FedosovError::NotInTableSpan(unit.to_string()))
            })
            .collect()
    }
}

impl StarProduct for TableProduct<'_> {
    fn chart(&self) -> ChartSpec {
        self.table.chart
    }
    fn order(&self) -> u32 {
        self.table.caps.order
    }
    fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        let mut out = vec![CoeffFn::zero(self.chart()); self.order() as usize + 1];
        for (i, a) in self.expand(f)? {
            for (j, b) in self.expand(g)? {
                let q = &self.table.entries[&(i, j)];
                let ab = &a * &b;
                for (slot, v) in out.iter_mut().zip(q) {
                    slot.add_scaled(v, &ab);
                }
            }
        }
        Ok(out)
    }
}

/// `a ∗ b` for ℏ-series `a, b`, truncated at the product's order.
pub fn star_series<P: StarProduct + ?Sized>(p: &P, a: &[CoeffFn], b: &[CoeffFn]) -> Result<Vec<CoeffFn>, FedosovError> {
    let order = p.order() as usize;
    let mut out = vec![CoeffFn::zero(p.chart()); order + 1];
    for (i, x) in a.iter().enumerate().take(order + 1) {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate().take(order + 1 - i) {
            if y.is_zero() {
                continue;
            }
            for (l, q) in p.star(x, y)?.into_iter().enumerate() {
                if i + j + l <= order {
                    out[i + j + l].add_assign_ref(&q);
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of [`verify_star_axioms`]; each list holds failure descriptions.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StarAxiomReport {
    pub order: u32,
    pub classical_limit: Vec<String>,
    pub unit: Vec<String>,
    pub associativity: Vec<String>,
    pub leading_commutator: Vec<String>,
    pub triples_checked: usize,
}

impl StarAxiomReport {
    pub fn passed(&self) -> bool {
        self.classical_limit.is_empty() && self.unit.is_empty() && self.associativity.is_empty() && self.leading_commutator.is_empty()
    }
}

fn series_display(v: &[CoeffFn]) -> String {
    v.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(|(l, c)| format!("ℏ^{l}: {c}")).collect::<Vec<_>>().join(", ")
}

/// Checks `Q_0(f,g) = fg`, `1 ∗ f = f ∗ 1 = f`, `(f∗g)∗h = f∗(g∗h)` mod
/// `ℏ^{N+1}` on all sample triples, and `f∗g − g∗f = ℏ{f,g} + O(ℏ²)`.
pub fn verify_star_axioms<P: StarProduct + ?Sized>(p: &P, s: &SymplecticData, samples: &[CoeffFn]) -> Result<StarAxiomReport, FedosovError> {
    let chart = p.chart();
    let order = p.order() as usize;
    let one = CoeffFn::one(chart);
    let mut report = StarAxiomReport { order: p.order(), ..Default::default() };
    let pair_results = samples
        .par_iter()
        .enumerate()
        .map(|(i, f)| {
            let mut msgs = (Vec::new(), Vec::new(), Vec::new());
            let mut unit_ok = p.star(&one, f)?;
            unit_ok[0] = &unit_ok[0] - f;
            let mut right = p.star(f, &one)?;
            right[0] = &right[0] - f;
            if unit_ok.iter().chain(&right).any(|c| !c.is_zero()) {
                msgs.1.push(format!("sample {i}: 1∗f − f = [{}], f∗1 − f = [{}]", series_display(&unit_ok), series_display(&right)));
            }
            for (j, g) in samples.iter().enumerate() {
                let fg = p.star(f, g)?;
                if fg[0] != f * g {
                    msgs.0.push(format!("samples ({i},{j}): Q_0 = {}", fg[0]));
                }
                if order >= 1 {
                    let gf = p.star(g, f)?;
                    let lead = &(&fg[1] - &gf[1]) - &poisson_bracket(f, g, s);
                    if !(&fg[0] - &gf[0]).is_zero() || !lead.is_zero() {
                        msgs.2.push(format!("samples ({i},{j}): commutator − ℏ{{f,g}} = {lead} at ℏ¹"));
                    }
                }
            }
            Ok(msgs)
        })
        .collect::<Result<Vec<_>, FedosovError>>()?;
    for (classical, unit, comm) in pair_results {
        report.classical_limit.extend(classical);
        report.unit.extend(unit);
        report.leading_commutator.extend(comm);
    }
    let triples: Vec<(usize, usize, usize)> = (0..samples.len())
        .flat_map(|i| (0..samples.len()).flat_map(move |j| (0..samples.len()).map(move |k| (i, j, k))))
        .collect();
    let assoc = triples
        .par_iter()
        .map(|&(i, j, k)| {
            let (f, g, h) = (&samples[i], &samples[j], &samples[k]);
            let left = star_series(p, &p.star(f, g)?, std::slice::from_ref(h))?;
            let right = star_series(p, std::slice::from_ref(f), &p.star(g, h)?)?;
            let diff: Vec<CoeffFn> = left.iter().zip(&right).map(|(a, b)| a - b).collect();
            Ok(diff.iter().any(|c| !c.is_zero()).then(|| format!("triple ({i},{j},{k}): [{}]", series_display(&diff))))
        })
        .collect::<Result<Vec<_>, FedosovError>>()?;
    report.associativity = assoc.into_iter().flatten().collect();
    report.triples_checked = triples.len();
    Ok(report)
}
