//! Formal series `P = id + Σ_l ℏ^l P_l` of differential operators, used to
//! compare star products and to compute quantum corrections `P⁻¹f`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::products::{star_series, StarProduct};
use super::FedosovError;
use crate::coeff_ring::{ChartSpec, CoeffFn, GaussRat, TermRecord};

/// `Σ_μ c_μ(x) ∂^μ` with multi-indices over all chart coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffOp {
    chart: ChartSpec,
    terms: BTreeMap<Vec<u32>, CoeffFn>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffOpTermRecord {
    pub mu: Vec<u32>,
    pub coeff: Vec<TermRecord>,
}

fn binomial(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

impl DiffOp {
    pub fn zero(chart: ChartSpec) -> Self {
        DiffOp { chart, terms: BTreeMap::new() }
    }

    pub fn identity(chart: ChartSpec) -> Self {
        DiffOp::derivative(chart, &vec![0; chart.dim()], CoeffFn::one(chart))
    }

    /// `c ∂^μ`.
    pub fn derivative(chart: ChartSpec, mu: &[u32], c: CoeffFn) -> Self {
        let mut op = DiffOp::zero(chart);
        op.add_term(mu.to_vec(), &c);
        op
    }

    pub fn from_terms(chart: ChartSpec, terms: &[(Vec<u32>, CoeffFn)]) -> Result<Self, FedosovError> {
        let mut op = DiffOp::zero(chart);
        for (mu, c) in terms {
            if mu.len() != chart.dim() {
                return Err(FedosovError::Coeff(crate::coeff_ring::CoeffError::Parse(format!(
                    "derivative multi-index must have length {}",
                    chart.dim()
                ))));
            }
            if c.chart() != chart {
                return Err(FedosovError::ChartMismatch { left: chart, right: c.chart() });
            }
            op.add_term(mu.clone(), c);
        }
        Ok(op)
    }

    fn add_term(&mut self, mu: Vec<u32>, c: &CoeffFn) {
        let slot = self.terms.entry(mu).or_insert_with(|| CoeffFn::zero(self.chart));
        slot.add_assign_ref(c);
        self.terms.retain(|_, c| !c.is_zero());
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &CoeffFn)> {
        self.terms.iter()
    }

    pub fn apply(&self, f: &CoeffFn) -> CoeffFn {
        let mut out = CoeffFn::zero(self.chart);
        for (mu, c) in &self.terms {
            let d = f.diff_multi(mu);
            if !d.is_zero() {
                out.add_assign_ref(&(c * &d));
            }
        }
        out
    }

    pub fn add(&self, other: &DiffOp) -> DiffOp {
        let mut out = self.clone();
        for (mu, c) in &other.terms {
            out.add_term(mu.clone(), c);
        }
        out
    }

    pub fn scale(&self, s: &GaussRat) -> DiffOp {
        let mut out = DiffOp::zero(self.chart);
        for (mu, c) in &self.terms {
            out.add_term(mu.clone(), &c.scale(s));
        }
        out
    }

    /// `self ∘ other`, expanding `∂^μ(d ∂^ν)` by the Leibniz rule.
    pub fn compose(&self, other: &DiffOp) -> DiffOp {
        let mut out = DiffOp::zero(self.chart);
        for (mu, c) in &self.terms {
            for (nu, d) in &other.terms {
                for kappa in sub_indices(mu) {
                    let dd = d.diff_multi(&kappa);
                    if dd.is_zero() {
                        continue;
                    }
                    let coeff: i64 = mu.iter().zip(&kappa).map(|(&m, &k)| binomial(m, k)).product();
                    let order: Vec<u32> = mu.iter().zip(&kappa).zip(nu).map(|((&m, &k), &n)| m - k + n).collect();
                    out.add_term(order, &(c * &dd).scale_int(coeff));
                }
            }
        }
        out
    }

    pub fn to_records(&self) -> Vec<DiffOpTermRecord> {
        self.terms.iter().map(|(mu, c)| DiffOpTermRecord { mu: mu.clone(), coeff: c.to_records() }).collect()
    }

    pub fn from_records(chart: ChartSpec, records: &[DiffOpTermRecord]) -> Result<Self, FedosovError> {
        let terms = records
            .iter()
            .map(|r| Ok((r.mu.clone(), CoeffFn::from_records(chart, &r.coeff)?)))
            .collect::<Result<Vec<_>, FedosovError>>()?;
        DiffOp::from_terms(chart, &terms)
    }
}

fn sub_indices(mu: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for &m in mu {
        out = out.into_iter().flat_map(|v| (0..=m).map(move |k| [v.clone(), vec![k]].concat())).collect();
    }
    out
}

/// `P = Σ_{l=0}^{N} ℏ^l P_l` with `P_0 = id`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiffOpSeries {
    chart: ChartSpec,
    ops: Vec<DiffOp>,
}

impl DiffOpSeries {
    pub fn identity(chart: ChartSpec, order: u32) -> Self {
        let mut ops = vec![DiffOp::zero(chart); order as usize + 1];
        ops[0] = DiffOp::identity(chart);
        DiffOpSeries { chart, ops }
    }

    /// `ops[l] = P_l`; the leading operator must be the identity.
    pub fn new(chart: ChartSpec, ops: Vec<DiffOp>) -> Result<Self, FedosovError> {
        if ops.first() != Some(&DiffOp::identity(chart)) {
            return Err(FedosovError::NotInvertibleSeries);
        }
        if let Some(op) = ops.iter().find(|op| op.chart != chart) {
            return Err(FedosovError::ChartMismatch { left: chart, right: op.chart });
        }
        Ok(DiffOpSeries { chart, ops })
    }

    /// `exp(ℏ X) = Σ_l ℏ^l X^l / l!` truncated at `order`.
    pub fn exponential(x: &DiffOp, order: u32) -> Self {
        let mut ops = vec![DiffOp::identity(x.chart)];
        for l in 1..=order as i64 {
            let next = ops.last().unwrap().compose(x).scale(&GaussRat::ratio(1, l));
            ops.push(next);
        }
        DiffOpSeries { chart: x.chart, ops }
    }

    pub fn chart(&self) -> ChartSpec {
        self.chart
    }

    pub fn order(&self) -> u32 {
        self.ops.len() as u32 - 1
    }

    pub fn ops(&self) -> &[DiffOp] {
        &self.ops
    }

    pub fn truncated(&self, order: u32) -> Self {
        let mut ops = self.ops.clone();
        ops.resize(order as usize + 1, DiffOp::zero(self.chart));
        DiffOpSeries { chart: self.chart, ops }
    }

    pub fn apply(&self, f: &CoeffFn) -> Vec<CoeffFn> {
        self.ops.iter().map(|op| op.apply(f)).collect()
    }

    /// `P a` for an ℏ-series `a`, truncated at the order of `P`.
    pub fn apply_series(&self, a: &[CoeffFn]) -> Vec<CoeffFn> {
        let order = self.ops.len();
        let mut out = vec![CoeffFn::zero(self.chart); order];
        for (l, op) in self.ops.iter().enumerate() {
            for (m, x) in a.iter().enumerate().take(order - l) {
                out[l + m].add_assign_ref(&op.apply(x));
            }
        }
        out
    }

    pub fn compose(&self, other: &DiffOpSeries) -> DiffOpSeries {
        let order = self.ops.len().min(other.ops.len());
        let mut ops = vec![DiffOp::zero(self.chart); order];
        for (l, p) in self.ops.iter().enumerate().take(order) {
            for (m, q) in other.ops.iter().enumerate().take(order - l) {
                ops[l + m] = ops[l + m].add(&p.compose(q));
            }
        }
        DiffOpSeries { chart: self.chart, ops }
    }

    /// Order-by-order inverse: `Q_0 = id`, `Q_m = −Σ_{l=1}^{m} P_l Q_{m−l}`.
    pub fn inverse(&self) -> DiffOpSeries {
        let mut q: Vec<DiffOp> = vec![DiffOp::identity(self.chart)];
        for m in 1..self.ops.len() {
            let mut acc = DiffOp::zero(self.chart);
            for l in 1..=m {
                acc = acc.add(&self.ops[l].compose(&q[m - l]));
            }
            q.push(acc.scale(&GaussRat::from_int(-1)));
        }
        DiffOpSeries { chart: self.chart, ops: q }
    }

    pub fn to_records(&self) -> Vec<Vec<DiffOpTermRecord>> {
        self.ops.iter().map(DiffOp::to_records).collect()
    }

    pub fn from_records(chart: ChartSpec, records: &[Vec<DiffOpTermRecord>]) -> Result<Self, FedosovError> {
        let ops = records.iter().map(|r| DiffOp::from_records(chart, r)).collect::<Result<Vec<_>, _>>()?;
        DiffOpSeries::new(chart, ops)
    }
}

/// Outcome of [`verify_equivalence`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub order: u32,
    pub pairs_checked: usize,
    pub residuals: Vec<String>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.residuals.is_empty()
    }
}

/// Checks `P(f ∗_A g) = Pf ∗_B Pg` modulo `ℏ^{N+1}` on all sample pairs, with
/// `N` the smallest order among `P`, `A` and `B`.
pub fn verify_equivalence<A: StarProduct + ?Sized, B: StarProduct + ?Sized>(
    p: &DiffOpSeries,
    a: &A,
    b: &B,
    samples: &[CoeffFn],
) -> Result<EquivalenceReport, FedosovError> {
    let order = p.order().min(a.order()).min(b.order());
    let p = p.truncated(order);
    let pairs: Vec<(usize, usize)> = (0..samples.len()).flat_map(|i| (0..samples.len()).map(move |j| (i, j))).collect();
    let residuals = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (f, g) = (&samples[i], &samples[j]);
            let mut prod_a = a.star(f, g)?;
            prod_a.truncate(order as usize + 1);
            let lhs = p.apply_series(&prod_a);
            let mut rhs = star_series(b, &p.apply(f), &p.apply(g))?;
            rhs.truncate(order as usize + 1);
            let diff: Vec<String> = lhs
                .iter()
                .zip(&rhs)
                .enumerate()
                .filter_map(|(l, (x, y))| {
                    let d = x - y;
                    (!d.is_zero()).then(|| format!("ℏ^{l}: {d}"))
                })
                .collect();
            Ok((!diff.is_empty()).then(|| format!("pair ({i},{j}): {}", diff.join(", "))))
        })
        .collect::<Result<Vec<_>, FedosovError>>()?;
    Ok(EquivalenceReport { order, pairs_checked: pairs.len(), residuals: residuals.into_iter().flatten().collect() })
}

/// `P⁻¹ f` as an ℏ-series; the quantum correction is this minus `f`.
pub fn apply_quantum_corrections(p: &DiffOpSeries, f: &CoeffFn) -> Vec<CoeffFn> {
    p.inverse().apply(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedosov_engine::{FunctionMoyal, Opposite, StandardOrdered};
    use crate::weyl_algebra::SymplecticData;

    fn samples(chart: ChartSpec) -> Vec<CoeffFn> {
        let i = CoeffFn::action(chart, 0);
        let p = CoeffFn::angle(chart, 0);
        vec![i.clone(), p.clone(), &i * &p, &(&i * &i) * &p, &(&p * &p) * &i]
    }

    #[test]
    fn gauge_between_standard_and_moyal() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let s = SymplecticData::standard(chart);
        let x = DiffOp::derivative(chart, &[1, 1], CoeffFn::constant(chart, GaussRat::ratio(-1, 2)));
        let p = DiffOpSeries::exponential(&x, 3);
        let moyal = FunctionMoyal::new(&s, 3);
        let standard = StandardOrdered::new(chart, 3);
        assert!(verify_equivalence(&p, &standard, &moyal, &samples(chart)).unwrap().passed());
        let id = DiffOpSeries::identity(chart, 3);
        assert!(verify_equivalence(&id, &moyal, &moyal, &samples(chart)).unwrap().passed());
        assert!(!verify_equivalence(&id, &moyal, &Opposite(&moyal), &samples(chart)).unwrap().passed());
    }

    #[test]
    fn series_inverse() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let p1 = DiffOp::derivative(chart, &[1, 0], CoeffFn::angle(chart, 0));
        let p = DiffOpSeries::new(chart, vec![DiffOp::identity(chart), p1.clone(), DiffOp::zero(chart), DiffOp::zero(chart)]).unwrap();
        let inv = p.inverse();
        assert_eq!(p.compose(&inv), DiffOpSeries::identity(chart, 3));
        let f = &CoeffFn::action(chart, 0) * &CoeffFn::action(chart, 0);
        let corrected = apply_quantum_corrections(&p, &f);
        assert_eq!(corrected[0], f);
        assert_eq!(corrected[1], p1.apply(&f).scale_int(-1));
        assert_eq!(corrected[2], p1.apply(&p1.apply(&f)));
        assert_eq!(p.apply_series(&corrected), vec![f, CoeffFn::zero(chart), CoeffFn::zero(chart), CoeffFn::zero(chart)]);
        assert_eq!(apply_quantum_corrections(&DiffOpSeries::identity(chart, 2), &CoeffFn::angle(chart, 0))[1], CoeffFn::zero(chart));
    }

    #[test]
    fn leading_term_must_be_identity() {
        let chart = ChartSpec::new(1, 1).unwrap();
        assert_eq!(DiffOpSeries::new(chart, vec![DiffOp::zero(chart)]), Err(FedosovError::NotInvertibleSeries));
    }
}
