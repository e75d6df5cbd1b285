//! The ℏ-free analog of the Fedosov construction: the fiberwise Poisson
//! bracket, the flat Poisson connection `D⁰ = ∂ − δ + {γ, ·}_fib` and the
//! exponential lift of functions to jets.

use rayon::prelude::*;
use serde::Serialize;

use crate::chart_geometry::{covariant_derivative, curvature, poisson_bracket, validate_connection, ConnectionData};
use crate::coeff_ring::{ChartSpec, CoeffFn, GaussRat};
use crate::fedosov_engine::FedosovError;
use crate::weyl_algebra::{delta, delta_inv, fib_bracket, fiber_product, Caps, SymplecticData, WeylSection};

/// `{a, b}_fib = ω^{jl} ∂a/∂y^j ∂b/∂y^l`.
pub fn fib_poisson(a: &WeylSection, b: &WeylSection, s: &SymplecticData) -> Result<WeylSection, FedosovError> {
    Ok(fib_bracket(a, b, s)?)
}

#[derive(Clone, Debug)]
pub struct SemiclassicalState {
    symplectic: SymplecticData,
    connection: ConnectionData,
    gamma: WeylSection,
    caps: Caps,
}

fn components(a: &WeylSection) -> Vec<WeylSection> {
    (0..=a.caps().degree).map(|p| a.weyl_component(p)).collect()
}

/// Solves `γ = δ⁻¹(R + ∂γ + ½{γ, γ}_fib)` degree by degree up to jet degree `cap`.
pub fn build_gamma0(s: &SymplecticData, c: &ConnectionData, cap: u32) -> Result<SemiclassicalState, FedosovError> {
    if c.chart() != s.chart() {
        return Err(FedosovError::ChartMismatch { left: s.chart(), right: c.chart() });
    }
    validate_connection(c, s)?;
    let caps = Caps::new(0, cap);
    let chart = s.chart();
    let r = components(&curvature(c, s).form(caps));
    let zero = WeylSection::zero(chart, caps);
    let mut gamma = vec![zero.clone(); cap as usize + 1];
    let half = GaussRat::ratio(1, 2);
    for p in 2..cap as usize {
        let mut rhs = r[p].add(&covariant_derivative(&gamma[p], c, s)?);
        for q in 3..p {
            let (a, b) = (&gamma[q], &gamma[p + 2 - q]);
            if !a.is_zero() && !b.is_zero() {
                rhs.add_scaled(&fib_bracket(a, b, s)?, &half);
            }
        }
        gamma[p + 1] = delta_inv(&rhs);
    }
    let gamma = gamma.iter().fold(zero, |acc, g| acc.add(g));
    Ok(SemiclassicalState { symplectic: s.clone(), connection: c.clone(), gamma, caps })
}

impl SemiclassicalState {
    pub fn chart(&self) -> ChartSpec {
        self.symplectic.chart()
    }

    pub fn caps(&self) -> Caps {
        self.caps
    }

    pub fn gamma(&self) -> &WeylSection {
        &self.gamma
    }

    pub fn symplectic(&self) -> &SymplecticData {
        &self.symplectic
    }

    /// Same geometry with `γ` replaced.
    pub fn with_gamma(&self, gamma: WeylSection) -> Self {
        SemiclassicalState { gamma: gamma.with_caps(self.caps), ..self.clone() }
    }

    /// `D⁰a = ∂a − δa + {γ, a}_fib`.
    pub fn connection_d(&self, a: &WeylSection) -> Result<WeylSection, FedosovError> {
        let a = a.with_caps(self.caps);
        let da = covariant_derivative(&a, &self.connection, &self.symplectic)?;
        Ok(da.sub(&delta(&a)).add(&fib_bracket(&self.gamma, &a, &self.symplectic)?))
    }

    /// `f̄ = f + δ⁻¹(∂f̄ + {γ, f̄}_fib)`, the jet of `f` in normal coordinates.
    pub fn exp_lift(&self, f: &CoeffFn) -> Result<WeylSection, FedosovError> {
        let s = &self.symplectic;
        let cap = self.caps.degree as usize;
        let gamma = components(&self.gamma);
        let mut jet = vec![WeylSection::zero(self.chart(), self.caps); cap + 1];
        jet[0] = WeylSection::from_fn(f, self.caps);
        for p in 0..cap {
            let mut rhs = covariant_derivative(&jet[p], &self.connection, s)?;
            for q in 3..=(p + 2).min(cap) {
                let (g, a) = (&gamma[q], &jet[p + 2 - q]);
                if !g.is_zero() && !a.is_zero() {
                    rhs.add_assign(&fib_bracket(g, a, s)?);
                }
            }
            jet[p + 1] = delta_inv(&rhs);
        }
        Ok(jet.iter().skip(1).fold(jet[0].clone(), |acc, x| acc.add(x)))
    }
}

/// Outcome of [`verify_semiclassical_flatness`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SemiclassicalFlatnessReport {
    pub gamma_min_degree: Option<u32>,
    /// `R + ∂γ − δγ + ½{γ, γ}_fib` below the truncation edge.
    pub curvature_residual: Option<String>,
    /// `(D⁰)²a` for each sample with a nonzero residual.
    pub sample_residuals: Vec<(usize, String)>,
}

impl SemiclassicalFlatnessReport {
    pub fn passed(&self) -> bool {
        self.gamma_min_degree.is_none_or(|d| d >= 3) && self.curvature_residual.is_none() && self.sample_residuals.is_empty()
    }
}

/// Checks that `D⁰` is flat: its curvature vanishes at Weyl degree `≤ D−1`
/// and `(D⁰)²a = 0` at Weyl degree `≤ D−2` on the samples.
pub fn verify_semiclassical_flatness(state: &SemiclassicalState, samples: &[WeylSection]) -> Result<SemiclassicalFlatnessReport, FedosovError> {
    let s = &state.symplectic;
    let cap = state.caps.degree;
    let g = &state.gamma;
    let curv = curvature(&state.connection, s)
        .form(state.caps)
        .add(&covariant_derivative(g, &state.connection, s)?)
        .sub(&delta(g))
        .add(&fib_bracket(g, g, s)?.scale(&GaussRat::ratio(1, 2)))
        .truncated(cap.saturating_sub(1));
    let residuals = samples
        .par_iter()
        .enumerate()
        .map(|(i, a)| Ok((i, state.connection_d(&state.connection_d(a)?)?.truncated(cap.saturating_sub(2)))))
        .collect::<Result<Vec<_>, FedosovError>>()?;
    Ok(SemiclassicalFlatnessReport {
        gamma_min_degree: g.min_weyl_degree(),
        curvature_residual: (!curv.is_zero()).then(|| curv.to_string()),
        sample_residuals: residuals.into_iter().filter(|(_, r)| !r.is_zero()).map(|(i, r)| (i, r.to_string())).collect(),
    })
}

/// Outcome of [`verify_poisson_morphism`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PoissonMorphismReport {
    /// `{exp f, exp g}_fib − exp({f, g})` at Weyl degree `≤ D−1`.
    pub bracket_residual: Option<String>,
    /// `exp(fg) − exp(f)·exp(g)` at Weyl degree `≤ D`.
    pub product_residual: Option<String>,
    /// The linear jet term equals `Σ ∂_j f y^j`.
    pub linear_term: bool,
}

impl PoissonMorphismReport {
    pub fn passed(&self) -> bool {
        self.bracket_residual.is_none() && self.product_residual.is_none() && self.linear_term
    }
}

fn linear_jet(f: &CoeffFn, caps: Caps) -> WeylSection {
    let chart = f.chart();
    let mut out = WeylSection::zero(chart, caps);
    for v in 0..chart.dim() {
        out.add_assign(&WeylSection::y(chart, caps, v).mul_fn(&f.diff(v)));
    }
    out
}

/// Checks that `exp` intertwines the Poisson bracket with the fiberwise one
/// and the pointwise product with the fiber product, up to the jet cap.
pub fn verify_poisson_morphism(state: &SemiclassicalState, f: &CoeffFn, g: &CoeffFn) -> Result<PoissonMorphismReport, FedosovError> {
    let s = &state.symplectic;
    let cap = state.caps.degree;
    let ef = state.exp_lift(f)?;
    let eg = state.exp_lift(g)?;
    let bracket = fib_bracket(&ef, &eg, s)?.sub(&state.exp_lift(&poisson_bracket(f, g, s))?).truncated(cap.saturating_sub(1));
    let product = fiber_product(&ef, &eg)?.sub(&state.exp_lift(&(f * g))?);
    Ok(PoissonMorphismReport {
        bracket_residual: (!bracket.is_zero()).then(|| bracket.to_string()),
        product_residual: (!product.is_zero()).then(|| product.to_string()),
        linear_term: ef.weyl_component(1) == linear_jet(f, state.caps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedosov_engine::generator_samples;
    use crate::weyl_algebra::YMono;

    #[test]
    fn fiber_bracket_of_generators() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let caps = Caps::new(0, 4);
        let s = SymplecticData::standard(chart);
        let b = fib_poisson(&WeylSection::y(chart, caps, 0), &WeylSection::y(chart, caps, 1), &s).unwrap();
        assert_eq!(b, WeylSection::from_fn(s.upper(0, 1), caps));
        let f = WeylSection::from_fn(&CoeffFn::angle(chart, 0), caps);
        assert!(fib_poisson(&f, &WeylSection::y(chart, caps, 0), &s).unwrap().is_zero());
    }

    #[test]
    fn flat_and_curved_gamma() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let s = SymplecticData::standard(chart);
        let flat = build_gamma0(&s, &ConnectionData::zero(chart), 5).unwrap();
        assert!(flat.gamma().is_zero());
        let i = CoeffFn::action(chart, 0);
        let jet = flat.exp_lift(&(&i * &i)).unwrap();
        let mut expected = WeylSection::from_fn(&(&i * &i), flat.caps());
        expected.add_assign(&WeylSection::y(chart, flat.caps(), 0).mul_fn(&i.scale_int(2)));
        expected.add_assign(&WeylSection::monomial(chart, flat.caps(), 0, &YMono::from_exponents(&[2, 0]), &[], &CoeffFn::one(chart)));
        assert_eq!(jet, expected);

        let c = ConnectionData::symmetric(&s, &[([0, 0, 0], CoeffFn::angle(chart, 0).scale_int(3))]).unwrap();
        let curved = build_gamma0(&s, &c, 5).unwrap();
        let r = curvature(&c, &s).form(curved.caps());
        assert_eq!(curved.gamma().weyl_component(3), delta_inv(&r));
        assert!(!curved.gamma().is_zero());
        let report = verify_semiclassical_flatness(&curved, &generator_samples(chart, curved.caps())).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn flat_poisson_morphism() {
        let chart = ChartSpec::new(1, 1).unwrap();
        let s = SymplecticData::standard(chart);
        let state = build_gamma0(&s, &ConnectionData::zero(chart), 4).unwrap();
        let i = CoeffFn::action(chart, 0);
        let p = CoeffFn::angle(chart, 0);
        let ei = state.exp_lift(&i).unwrap();
        let ep = state.exp_lift(&p).unwrap();
        assert_eq!(fib_poisson(&ei, &ep, &s).unwrap(), WeylSection::constant(chart, state.caps(), -1));
        assert!(verify_poisson_morphism(&state, &i, &p).unwrap().passed());
        assert!(verify_poisson_morphism(&state, &(&i * &p), &(&i * &p)).unwrap().passed());
    }
}
