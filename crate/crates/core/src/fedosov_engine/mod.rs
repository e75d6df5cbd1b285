//! Fedosov connections `D = ∂ − δ + (1/ℏ)ad(γ)` with prescribed central
//! curvature, flat lifts of functions and the resulting star products.

mod equivalence;
mod products;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chart_geometry::{covariant_derivative, curvature, multi_indices, validate_connection, ConnectionData, GeometryError};
use crate::coeff_ring::{ChartSpec, CoeffError, CoeffFn, FnMono, GaussRat};
use crate::weyl_algebra::{
    ad_over_hbar, delta, delta_inv, filtration_degree, hdiv, moyal_capped, moyal_scalar_part, Caps, SymplecticData, WeylError,
    WeylSection,
};

pub use equivalence::{apply_quantum_corrections, verify_equivalence, DiffOp, DiffOpSeries, DiffOpTermRecord, EquivalenceReport};
pub use products::{star_series, verify_star_axioms, FunctionMoyal, Opposite, StandardOrdered, StarAxiomReport, StarProduct, TableProduct};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FedosovError {
    #[error("Weyl curvature is not closed: dΩ = {0}")]
    NotClosed(String),
    #[error("Weyl curvature is not a deformation of ω: {0}")]
    NotDeformationOfOmega(String),
    #[error("operator series must start with the identity")]
    NotInvertibleSeries,
    #[error("{0} is not in the span of the tabulated basis")]
    NotInTableSpan(String),
    #[error("chart mismatch: {left} vs {right}")]
    ChartMismatch { left: ChartSpec, right: ChartSpec },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

type LiftCache = RwLock<HashMap<FnMono, Arc<WeylSection>>>;

/// A solved Fedosov connection. Immutable once built; lifts are memoized per
/// function monomial in an insert-only cache shared between clones.
#[derive(Clone)]
pub struct FedosovState {
    symplectic: SymplecticData,
    connection: ConnectionData,
    omega: WeylSection,
    gamma: WeylSection,
    caps: Caps,
    cache: Arc<LiftCache>,
}

impl fmt::Debug for FedosovState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FedosovState")
            .field("caps", &self.caps)
            .field("omega", &self.omega)
            .field("gamma", &self.gamma)
            .finish()
    }
}

fn check_weyl_curvature(s: &SymplecticData, omega: &WeylSection) -> Result<(), FedosovError> {
    if omega.chart() != s.chart() {
        return Err(FedosovError::ChartMismatch { left: s.chart(), right: omega.chart() });
    }
    if let Some((k, _)) = omega.terms().find(|(k, _)| k.y.degree() != 0 || k.form_degree() != 2) {
        return Err(FedosovError::NotDeformationOfOmega(format!(
            "expected a two-form without fiber variables, found a term of fiber degree {} and form degree {}",
            k.y.degree(),
            k.form_degree()
        )));
    }
    let classical = omega.filter(|k| k.hbar == 0);
    if classical != s.omega_form(omega.caps()) {
        return Err(FedosovError::NotDeformationOfOmega(format!("ℏ⁰ part is {classical}, expected ω")));
    }
    let d = omega.d();
    if !d.is_zero() {
        return Err(FedosovError::NotClosed(d.to_string()));
    }
    Ok(())
}

/// `(1/ℏ) a∘a`, exact for one-forms (the `ℏ⁰` part `a∧a` vanishes).
fn square_over_hbar(a: &WeylSection, s: &SymplecticData) -> Result<WeylSection, WeylError> {
    let raised = a.caps().raised();
    let ar = a.with_caps(raised);
    Ok(hdiv(&moyal_capped(&ar, &ar, s, raised))?.with_caps(a.caps()))
}

/// Splits `a` into homogeneous Weyl-degree components `0..=D`.
fn components(a: &WeylSection) -> Vec<WeylSection> {
    (0..=a.caps().degree).map(|p| a.weyl_component(p)).collect()
}

/// Solves `γ = δ⁻¹(−Ω + ω + R + ∂γ + (1/ℏ)γ²)` degree by degree: the
/// component `γ_{p+1}` is `δ⁻¹` of the degree-`p` part of the right side,
/// which only involves `γ_3, …, γ_p`.
pub fn build_gamma(s: &SymplecticData, c: &ConnectionData, omega: &WeylSection, caps: Caps) -> Result<FedosovState, FedosovError> {
    if c.chart() != s.chart() {
        return Err(FedosovError::ChartMismatch { left: s.chart(), right: c.chart() });
    }
    validate_connection(c, s)?;
    let omega = omega.with_caps(caps);
    check_weyl_curvature(s, &omega)?;
    let r = curvature(c, s).form(caps);
    let source = components(&s.omega_form(caps).sub(&omega).add(&r));
    let raised = caps.raised();
    let zero = WeylSection::zero(s.chart(), caps);
    let mut gamma = vec![zero.clone(); caps.degree as usize + 1];
    for p in 2..caps.degree as usize {
        let mut rhs = source[p].add(&covariant_derivative(&gamma[p], c, s)?);
        let mut square = WeylSection::zero(s.chart(), raised);
        for q in 3..p {
            let (a, b) = (&gamma[q], &gamma[p + 2 - q]);
            if !a.is_zero() && !b.is_zero() {
                square.add_assign(&moyal_capped(&a.with_caps(raised), &b.with_caps(raised), s, raised));
            }
        }
        rhs.add_assign(&hdiv(&square)?.with_caps(caps));
        gamma[p + 1] = delta_inv(&rhs);
    }
    let gamma = gamma.iter().fold(zero, |acc, g| acc.add(g));
    Ok(FedosovState::from_parts(s.clone(), c.clone(), omega, gamma, caps))
}

impl FedosovState {
    /// Assembles a state from already solved data (used by persistence and
    /// negative controls). No verification is performed.
    pub fn from_parts(symplectic: SymplecticData, connection: ConnectionData, omega: WeylSection, gamma: WeylSection, caps: Caps) -> Self {
        FedosovState {
            symplectic,
            connection,
            omega: omega.with_caps(caps),
            gamma: gamma.with_caps(caps),
            caps,
            cache: Arc::new(RwLock::new(HashMap::new())),
        }
    }

    /// Same geometry with `γ` replaced, and a fresh lift cache.
    pub fn with_gamma(&self, gamma: WeylSection) -> Self {
        FedosovState::from_parts(self.symplectic.clone(), self.connection.clone(), self.omega.clone(), gamma, self.caps)
    }

    pub fn chart(&self) -> ChartSpec {
        self.symplectic.chart()
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn symplectic(&self) -> &SymplecticData {
        &self.symplectic
    }

    pub fn connection(&self) -> &ConnectionData {
        &self.connection
    }

    /// The requested central curvature `Ω`.
    pub fn omega(&self) -> &WeylSection {
        &self.omega
    }

    pub fn gamma(&self) -> &WeylSection {
        &self.gamma
    }

    pub fn geometry_hash(&self) -> String {
        geometry_hash(&self.symplectic, &self.connection, &self.omega, self.caps)
    }

    /// `Da = ∂a − δa + (1/ℏ)[γ, a]`.
    pub fn connection_d(&self, a: &WeylSection) -> Result<WeylSection, FedosovError> {
        self.gamma.check_compatible(a)?;
        let da = covariant_derivative(a, &self.connection, &self.symplectic)?;
        Ok(da.sub(&delta(a)).add(&ad_over_hbar(&self.gamma, a, &self.symplectic)?))
    }

    /// `R + ∂γ − δγ + (1/ℏ)γ² + ω` for the stored `γ`.
    pub fn weyl_curvature(&self) -> Result<WeylSection, FedosovError> {
        let s = &self.symplectic;
        let r = curvature(&self.connection, s).form(self.caps);
        Ok(r
            .add(&covariant_derivative(&self.gamma, &self.connection, s)?)
            .sub(&delta(&self.gamma))
            .add(&square_over_hbar(&self.gamma, s)?)
            .add(&s.omega_form(self.caps)))
    }

    /// Flat lift `σ(f)`, the fixed point of `σ = f + δ⁻¹(∂σ + (1/ℏ)[γ, σ])`.
    pub fn lift(&self, f: &CoeffFn) -> Result<WeylSection, FedosovError> {
        if f.chart() != self.chart() {
            return Err(FedosovError::ChartMismatch { left: self.chart(), right: f.chart() });
        }
        let mut out = WeylSection::zero(self.chart(), self.caps);
        for (mono, c) in f.terms() {
            let unit = self.lift_monomial(mono)?;
            out.add_scaled(&unit, c);
        }
        Ok(out)
    }

    fn lift_monomial(&self, mono: &FnMono) -> Result<Arc<WeylSection>, FedosovError> {
        if let Some(hit) = self.cache.read().unwrap().get(mono) {
            return Ok(hit.clone());
        }
        let f = CoeffFn::from_term(self.chart(), mono, GaussRat::from_int(1));
        let computed = Arc::new(self.lift_uncached(&f)?);
        Ok(self.cache.write().unwrap().entry(mono.clone()).or_insert(computed).clone())
    }

    /// Degree-by-degree solution of the lift recursion: `σ_{p+1}` is `δ⁻¹` of
    /// the degree-`p` part of `∂σ + (1/ℏ)[γ, σ]`.
    fn lift_uncached(&self, f: &CoeffFn) -> Result<WeylSection, FedosovError> {
        let caps = self.caps;
        let s = &self.symplectic;
        let gamma = components(&self.gamma);
        let mut sigma = vec![WeylSection::zero(self.chart(), caps); caps.degree as usize + 1];
        sigma[0] = WeylSection::from_fn(f, caps);
        for p in 0..caps.degree as usize {
            let mut rhs = covariant_derivative(&sigma[p], &self.connection, s)?;
            for q in 3..=(p + 2).min(caps.degree as usize) {
                let (g, a) = (&gamma[q], &sigma[p + 2 - q]);
                if !g.is_zero() && !a.is_zero() {
                    rhs.add_assign(&ad_over_hbar(g, a, s)?);
                }
            }
            sigma[p + 1] = delta_inv(&rhs);
        }
        Ok(sigma.iter().skip(1).fold(sigma[0].clone(), |acc, x| acc.add(x)))
    }

    /// `f ∗ g = (σ(f) ∘ σ(g))₀` as the ℏ-series `[fg, Q₁, …, Q_N]`.
    pub fn star(&self, f: &CoeffFn, g: &CoeffFn) -> Result<Vec<CoeffFn>, FedosovError> {
        Ok(moyal_scalar_part(&self.lift(f)?, &self.lift(g)?, &self.symplectic)?)
    }
}

/// sha256 over the canonical JSON of the geometric inputs.
pub fn geometry_hash(s: &SymplecticData, c: &ConnectionData, omega: &WeylSection, caps: Caps) -> String {
    #[derive(Serialize)]
    struct Canon<'a> {
        chart: ChartSpec,
        caps: Caps,
        symplectic: Vec<Vec<Vec<crate::coeff_ring::TermRecord>>>,
        connection: Vec<crate::chart_geometry::ConnectionEntry>,
        weyl_curvature: &'a [crate::weyl_algebra::SectionTermRecord],
    }
    let chart = s.chart();
    let dim = chart.dim();
    let symplectic = (0..dim).map(|i| (0..dim).map(|j| s.lower(i, j).to_records()).collect()).collect();
    let omega_records = omega.to_records();
    let canon = Canon { chart, caps, symplectic, connection: c.to_entries(), weyl_curvature: &omega_records };
    let bytes = serde_json::to_vec(&canon).expect("geometry serializes");
    format!("{:x}", Sha256::digest(&bytes))
}

/// Outcome of [`verify_fedosov_flatness`]. Residuals are rendered sections.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlatnessReport {
    /// `δ⁻¹γ = 0`.
    pub normalized: bool,
    pub gamma_min_degree: Option<u32>,
    /// The recomputed Weyl curvature has no fiber variables.
    pub central: bool,
    /// Recomputed minus requested Weyl curvature, below the truncation edge.
    pub curvature_residual: Option<String>,
    /// `D²a − (1/ℏ)[Ω, a]` for each sample with a nonzero residual.
    pub sample_residuals: Vec<(usize, String)>,
    pub samples_checked: usize,
}

impl FlatnessReport {
    pub fn passed(&self) -> bool {
        self.normalized
            && self.gamma_min_degree.is_none_or(|d| d >= 3)
            && self.central
            && self.curvature_residual.is_none()
            && self.sample_residuals.is_empty()
    }
}

/// The fiber generators `y^v` and the coordinate functions `x^v`.
pub fn generator_samples(chart: ChartSpec, caps: Caps) -> Vec<WeylSection> {
    let dim = chart.dim();
    (0..dim)
        .map(|v| WeylSection::y(chart, caps, v))
        .chain((0..dim).map(|v| WeylSection::from_fn(&CoeffFn::coordinate(chart, v), caps)))
        .collect()
}

/// Checks normalization and degree of `γ`, that the recomputed Weyl
/// curvature is central and equals the requested `Ω` (Weyl degree `≤ D−1`),
/// and `D²a = (1/ℏ)[Ω, a]` on the samples (Weyl degree `≤ D−2`).
pub fn verify_fedosov_flatness(state: &FedosovState, samples: &[WeylSection]) -> Result<FlatnessReport, FedosovError> {
    let caps = state.caps;
    let edge = caps.degree.saturating_sub(1);
    let computed = state.weyl_curvature()?.truncated(edge);
    let residual = computed.sub(&state.omega.truncated(edge));
    let residuals = samples
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let a = a.with_caps(caps);
            let dda = state.connection_d(&state.connection_d(&a)?)?;
            let r = dda.sub(&ad_over_hbar(&state.omega, &a, &state.symplectic)?).truncated(caps.degree.saturating_sub(2));
            Ok((i, r))
        })
        .collect::<Result<Vec<_>, FedosovError>>()?;
    Ok(FlatnessReport {
        normalized: delta_inv(&state.gamma).is_zero(),
        gamma_min_degree: state.gamma.min_weyl_degree(),
        central: !computed.has_fiber_variables(),
        curvature_residual: (!residual.is_zero()).then(|| residual.to_string()),
        sample_residuals: residuals.into_iter().filter(|(_, r)| !r.is_zero()).map(|(i, r)| (i, r.to_string())).collect(),
        samples_checked: samples.len(),
    })
}

/// Outcome of [`verify_lift`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LiftReport {
    /// The `y⁰` part of `σ(f)` equals `f` with no ℏ-corrections.
    pub constant_term: bool,
    /// `Dσ(f)` vanishes at Weyl degree `≤ D−1`.
    pub flat: bool,
    pub residual: Option<String>,
}

impl LiftReport {
    pub fn passed(&self) -> bool {
        self.constant_term && self.flat
    }
}

pub fn verify_lift(state: &FedosovState, f: &CoeffFn, sigma: &WeylSection) -> Result<LiftReport, FedosovError> {
    let scalar = sigma.scalar_part();
    let constant_term = scalar[0] == *f && scalar[1..].iter().all(CoeffFn::is_zero);
    let r = state.connection_d(sigma)?.truncated(state.caps.degree.saturating_sub(1));
    Ok(LiftReport { constant_term, flat: r.is_zero(), residual: (!r.is_zero()).then(|| r.to_string()) })
}

/// Filtration degree 0: coefficients in the actions only, fiber variables `J`
/// only, forms `dI` only.
pub fn is_base_sector(a: &WeylSection) -> Result<bool, FedosovError> {
    Ok(filtration_degree(a)?.is_none_or(|d| d == 0))
}

/// Tabulated `Q_l(f, g)` over the polynomial monomials of bounded degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarTable {
    pub chart: ChartSpec,
    pub caps: Caps,
    pub geometry_hash: String,
    pub basis: Vec<CoeffFn>,
    /// `(i, j) ↦ [Q_0, …, Q_N](basis[i], basis[j])`.
    pub entries: BTreeMap<(usize, usize), Vec<CoeffFn>>,
}

impl StarTable {
    pub fn q(&self, i: usize, j: usize, l: usize) -> Option<&CoeffFn> {
        self.entries.get(&(i, j)).and_then(|v| v.get(l))
    }

    pub fn index_of(&self, f: &CoeffFn) -> Option<usize> {
        self.basis.iter().position(|b| b == f)
    }
}

/// All monomials `x^μ` with `|μ| ≤ max_degree`, by degree and then lexicographically.
pub fn monomial_basis(chart: ChartSpec, max_degree: u32) -> Vec<CoeffFn> {
    let mut mus = multi_indices(chart.dim(), max_degree);
    mus.sort_by(|a, b| a.iter().sum::<u32>().cmp(&b.iter().sum::<u32>()).then_with(|| b.cmp(a)));
    mus.iter()
        .map(|mu| CoeffFn::monomial(chart, &mu[..chart.n], &mu[chart.n..], &vec![0; chart.k], GaussRat::from_int(1)))
        .collect()
}

/// Tabulates the star product over [`monomial_basis`]; the result is
/// independent of scheduling.
pub fn star_table(state: &FedosovState, max_degree: u32) -> Result<StarTable, FedosovError> {
    let basis = monomial_basis(state.chart(), max_degree);
    let lifts = basis.par_iter().map(|f| state.lift(f)).collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<(usize, usize)> = (0..basis.len()).flat_map(|i| (0..basis.len()).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| moyal_scalar_part(&lifts[i], &lifts[j], &state.symplectic))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StarTable {
        chart: state.chart(),
        caps: state.caps,
        geometry_hash: state.geometry_hash(),
        basis,
        entries: pairs.into_iter().zip(values).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weyl_algebra::YMono;

    fn flat(chart: ChartSpec, caps: Caps) -> FedosovState {
        let s = SymplecticData::standard(chart);
        build_gamma(&s, &ConnectionData::zero(chart), &s.omega_form(caps), caps).unwrap()
    }

    #[test]
    fn flat_gamma_vanishes() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let state = flat(chart, Caps::new(2, 4));
        assert!(state.gamma().is_zero());
        let report = verify_fedosov_flatness(&state, &generator_samples(chart, state.caps())).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn lowest_gamma_component_for_shifted_curvature() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let caps = Caps::new(2, 4);
        let s = SymplecticData::standard(chart);
        let shift = WeylSection::monomial(chart, caps, 1, &YMono::one(2), &[0, 1], &CoeffFn::one(chart));
        let state = build_gamma(&s, &ConnectionData::zero(chart), &s.omega_form(caps).add(&shift), caps).unwrap();
        // −(ℏ/2)(J dφ − ψ dI)
        let j_dphi = WeylSection::monomial(chart, caps, 1, &YMono::var(2, 0), &[1], &CoeffFn::one(chart));
        let psi_di = WeylSection::monomial(chart, caps, 1, &YMono::var(2, 1), &[0], &CoeffFn::one(chart));
        let expected = j_dphi.sub(&psi_di).scale(&GaussRat::ratio(-1, 2));
        assert_eq!(state.gamma().weyl_component(3), expected);
        assert!(verify_fedosov_flatness(&state, &generator_samples(chart, caps)).unwrap().passed());
    }

    #[test]
    fn rejects_bad_curvature() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let caps = Caps::new(2, 4);
        let s = SymplecticData::standard(chart);
        let c = ConnectionData::zero(chart);
        let doubled = s.omega_form(caps).scale(&GaussRat::from_int(2));
        assert!(matches!(build_gamma(&s, &c, &doubled, caps), Err(FedosovError::NotDeformationOfOmega(_))));
        let chart2 = ChartSpec::new(2, 0).unwrap();
        let s2 = SymplecticData::standard(chart2);
        let open = WeylSection::monomial(chart2, caps, 1, &YMono::one(4), &[0, 1], &CoeffFn::angle(chart2, 0));
        let res = build_gamma(&s2, &ConnectionData::zero(chart2), &s2.omega_form(caps).add(&open), caps);
        assert!(matches!(res, Err(FedosovError::NotClosed(_))));
    }

    #[test]
    fn flat_lift_is_taylor_series() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let caps = Caps::new(2, 4);
        let state = flat(chart, caps);
        let i = CoeffFn::action(chart, 0);
        let sigma = state.lift(&(&i * &i)).unwrap();
        let mut expected = WeylSection::from_fn(&(&i * &i), caps);
        expected.add_assign(&WeylSection::monomial(chart, caps, 0, &YMono::var(2, 0), &[], &i.scale_int(2)));
        expected.add_assign(&WeylSection::monomial(chart, caps, 0, &YMono::from_exponents(&[2, 0]), &[], &CoeffFn::one(chart)));
        assert_eq!(sigma, expected);
        assert_eq!(state.lift(&CoeffFn::one(chart)).unwrap(), WeylSection::constant(chart, caps, 1));
    }

    #[test]
    fn flat_commutator_is_poisson() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let state = flat(chart, Caps::new(2, 4));
        let i = CoeffFn::action(chart, 0);
        let p = CoeffFn::angle(chart, 0);
        let ip = state.star(&i, &p).unwrap();
        let pi = state.star(&p, &i).unwrap();
        assert_eq!(&ip[1] - &pi[1], CoeffFn::from_int(chart, -1));
        assert_eq!(ip[0], &i * &p);
    }

    #[test]
    fn star_table_is_unital() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let state = flat(chart, Caps::new(2, 4));
        let table = star_table(&state, 2).unwrap();
        assert_eq!(table.basis[0], CoeffFn::one(chart));
        for j in 0..table.basis.len() {
            for l in 1..=2 {
                assert!(table.q(0, j, l).unwrap().is_zero());
                assert!(table.q(j, 0, l).unwrap().is_zero());
            }
        }
    }
}
