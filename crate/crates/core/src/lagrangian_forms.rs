//! Closed differential forms on an action–angle chart: primitives of forms
//! vanishing on the fibers, and normalization of closed two-forms to
//! filtration degree at most one.
//!
//! Forms are [`WeylSection`]s without fiber variables; each power of `ℏ` is
//! treated as a separate form.

use serde::Serialize;
use thiserror::Error;

use crate::coeff_ring::{ChartSpec, CoeffError, CoeffFn, GaussRat};
use crate::weyl_algebra::{bits, filtration_degree, wedge_sign, Caps, TermKey, WeylError, WeylSection, YMono};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LagrangianError {
    #[error("form is not closed: d = {0}")]
    NotClosed(String),
    #[error("form does not vanish on the fibers: {0}")]
    NotFiberVanishing(String),
    #[error("coefficients depend polynomially on a periodic angle: {0}")]
    NonPeriodicInput(String),
    #[error("expected a differential form without fiber variables")]
    HasFiberVariables,
    #[error("expected a {expected}-form, found form degree {found}")]
    WrongDegree { expected: u32, found: u32 },
    #[error("expected a form in the actions only: {0}")]
    NotBaseForm(String),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
}

fn check_form(a: &WeylSection) -> Result<(), LagrangianError> {
    if a.has_fiber_variables() {
        return Err(LagrangianError::HasFiberVariables);
    }
    Ok(())
}

fn check_degree(a: &WeylSection, q: u32) -> Result<(), LagrangianError> {
    if let Some((k, _)) = a.terms().find(|(k, _)| k.form_degree() != q) {
        return Err(LagrangianError::WrongDegree { expected: q, found: k.form_degree() });
    }
    Ok(())
}

fn check_closed(a: &WeylSection) -> Result<(), LagrangianError> {
    let d = a.d();
    if !d.is_zero() {
        return Err(LagrangianError::NotClosed(d.to_string()));
    }
    Ok(())
}

fn angle_mask(chart: ChartSpec) -> u64 {
    ((1u64 << chart.n) - 1) << chart.n
}

fn action_mask(chart: ChartSpec) -> u64 {
    (1u64 << chart.n) - 1
}

pub fn exterior_derivative(a: &WeylSection) -> Result<WeylSection, LagrangianError> {
    check_form(a)?;
    Ok(a.d())
}

/// True iff no term is built from `dφ` factors alone, i.e. the pullback to
/// every fiber `I = const` vanishes. Function (0-form) terms count as
/// non-vanishing.
pub fn check_fiber_vanishing(a: &WeylSection) -> bool {
    let actions = action_mask(a.chart());
    a.terms().all(|(k, _)| k.forms & actions != 0)
}

fn fiber_violation(a: &WeylSection) -> Option<String> {
    let actions = action_mask(a.chart());
    let bad = a.filter(|k| k.forms & actions == 0);
    (!bad.is_zero()).then(|| bad.to_string())
}

/// Radial homotopy primitive `β` with `dβ = α` for a closed form `α` in the
/// actions only: `I^μ dI^J ↦ (1/(|μ|+p)) Σ_s (−1)^s I^μ I^{j_s} dI^{J∖j_s}`.
pub fn base_primitive(a0: &WeylSection) -> Result<WeylSection, LagrangianError> {
    check_form(a0)?;
    let chart = a0.chart();
    let angles = angle_mask(chart);
    if let Some((_, c)) = a0.terms().find(|(k, c)| k.forms & angles != 0 || !c.is_fourier_free() || c.angle_degree() > 0) {
        return Err(LagrangianError::NotBaseForm(c.to_string()));
    }
    check_closed(a0)?;
    let mut out = WeylSection::zero(chart, a0.caps());
    for (k, c) in a0.terms() {
        let p = k.form_degree();
        if p == 0 {
            continue;
        }
        for (mono, coeff) in c.terms() {
            let deg: i64 = mono.alpha(&chart).iter().map(|&e| e as i64).sum();
            let unit = CoeffFn::from_term(chart, mono, coeff.clone());
            for (s, j) in bits(k.forms).enumerate() {
                let sign = if s % 2 == 0 { 1 } else { -1 };
                let f = &unit * &CoeffFn::action(chart, j);
                let key = TermKey::new(k.hbar, YMono::one(chart.dim()), k.forms & !(1 << j));
                out.add_term(key, &f.scale(&GaussRat::ratio(sign, deg + p as i64)));
            }
        }
    }
    Ok(out)
}

/// `g_{jl}` in `Σ g_{jl} dφ^j ∧ dI^l` for one ℏ-power of a two-form; the
/// stored order is `dI^l ∧ dφ^j`, hence the sign.
fn mixed_coefficients(a: &WeylSection, hbar: u32) -> Vec<Vec<CoeffFn>> {
    let chart = a.chart();
    let n = chart.n;
    let mut g = vec![vec![CoeffFn::zero(chart); n]; n];
    for (k, c) in a.terms().filter(|(k, _)| k.hbar == hbar) {
        let idx: Vec<usize> = bits(k.forms).collect();
        if let [l, v] = idx[..] {
            if l < n && v >= n {
                g[v - n][l].add_assign_ref(&-c);
            }
        }
    }
    g
}

/// `Σ_l F_l dI^l` with `F_l = Σ_j ∫_0^{φ^j} g_{jl}(I, φ^1, …, φ^{j−1}, t, 0, …, 0) dt`,
/// the fiber path integral of the mixed part.
fn fiber_integral(g: &[Vec<CoeffFn>], chart: ChartSpec, caps: Caps, hbar: u32) -> WeylSection {
    let n = chart.n;
    let mut out = WeylSection::zero(chart, caps);
    for l in 0..n {
        let mut f = CoeffFn::zero(chart);
        for (j, row) in g.iter().enumerate() {
            let restricted = ((j + 1)..n).fold(row[l].clone(), |acc, i| acc.at_angle_zero(i));
            f.add_assign_ref(&restricted.angle_integral(j));
        }
        out.add_term(TermKey::new(hbar, YMono::one(chart.dim()), 1 << l), &f);
    }
    out
}

fn hbar_powers(a: &WeylSection) -> Vec<u32> {
    let mut v: Vec<u32> = a.terms().map(|(k, _)| k.hbar).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// A one-form `β` without `dφ` components and with `dβ = α`, for a closed
/// two-form `α` vanishing on the fibers (on the covering chart where the
/// angles are unwrapped).
pub fn fiber_primitive(a: &WeylSection) -> Result<WeylSection, LagrangianError> {
    check_form(a)?;
    check_degree(a, 2)?;
    check_closed(a)?;
    if let Some(bad) = fiber_violation(a) {
        return Err(LagrangianError::NotFiberVanishing(bad));
    }
    let chart = a.chart();
    let mut beta = WeylSection::zero(chart, a.caps());
    for hbar in hbar_powers(a) {
        beta.add_assign(&fiber_integral(&mixed_coefficients(a, hbar), chart, a.caps(), hbar));
    }
    let remainder = a.sub(&beta.d());
    beta.add_assign(&base_primitive(&remainder)?);
    Ok(beta)
}

/// Checks that a closed one-form vanishing on the fibers has coefficients
/// depending on the actions only.
pub fn is_base_oneform(b: &WeylSection) -> Result<bool, LagrangianError> {
    check_form(b)?;
    check_degree(b, 1)?;
    check_closed(b)?;
    if let Some(bad) = fiber_violation(b) {
        return Err(LagrangianError::NotFiberVanishing(bad));
    }
    Ok(b.terms().all(|(_, c)| c.is_angle_free()))
}

/// `Ω' = Ω − dγ` and `γ` from [`normalize_closed_form`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Normalized {
    pub omega_prime: WeylSection,
    pub gamma: WeylSection,
}

/// Normalizes a closed two-form vanishing on the fibers: returns
/// `Ω' = α⁰ + d(Σ_{j≤k} a'_{jl}(I) φ^j dI^l)` and `γ` with `Ω − Ω' = dγ`,
/// where `a'_{jl}` is the average of `g_{jl}` over the periodic angle `φ^j`
/// and `α⁰` is the action-only part left after removing the fiber integral.
/// `γ` has no polynomial dependence on periodic angles.
pub fn normalize_closed_form(omega: &WeylSection) -> Result<Normalized, LagrangianError> {
    check_form(omega)?;
    check_degree(omega, 2)?;
    check_closed(omega)?;
    if let Some(bad) = fiber_violation(omega) {
        return Err(LagrangianError::NotFiberVanishing(bad));
    }
    if let Some((_, c)) = omega.terms().find(|(_, c)| !c.descends_to_torus()) {
        return Err(LagrangianError::NonPeriodicInput(c.to_string()));
    }
    let chart = omega.chart();
    let caps = omega.caps();
    let mut gamma = WeylSection::zero(chart, caps);
    for hbar in hbar_powers(omega) {
        let g = mixed_coefficients(omega, hbar);
        gamma.add_assign(&fiber_integral(&g, chart, caps, hbar));
        for (j, row) in g.iter().enumerate().take(chart.k) {
            for (l, gjl) in row.iter().enumerate() {
                let avg = gjl.torus_average(j)?;
                if avg.is_zero() {
                    continue;
                }
                let shift = &avg * &CoeffFn::angle(chart, j);
                gamma.add_term(TermKey::new(hbar, YMono::one(chart.dim()), 1 << l), &-shift);
            }
        }
    }
    let omega_prime = omega.sub(&gamma.d());
    Ok(Normalized { omega_prime, gamma })
}

/// Outcome of [`check_normalization`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NormalizationReport {
    pub exact_difference: bool,
    pub filtration_degree: Option<u32>,
    pub fiber_vanishing: bool,
    pub gamma_descends: bool,
}

impl NormalizationReport {
    pub fn passed(&self) -> bool {
        self.exact_difference && self.filtration_degree.is_none_or(|d| d <= 1) && self.fiber_vanishing && self.gamma_descends
    }
}

/// Re-checks every property promised by [`normalize_closed_form`].
pub fn check_normalization(omega: &WeylSection, out: &Normalized) -> Result<NormalizationReport, LagrangianError> {
    Ok(NormalizationReport {
        exact_difference: omega.sub(&out.omega_prime) == out.gamma.d(),
        filtration_degree: filtration_degree(&out.omega_prime)?,
        fiber_vanishing: check_fiber_vanishing(&out.omega_prime),
        gamma_descends: out.gamma.terms().all(|(_, c)| c.descends_to_torus()),
    })
}

/// `dx^{v_0} ∧ dx^{v_1} ∧ … · c` as a form (convenience for building inputs).
pub fn form(chart: ChartSpec, caps: Caps, hbar: u32, indices: &[usize], c: &CoeffFn) -> WeylSection {
    let mut mask = 0u64;
    let mut sign = 1;
    for &v in indices {
        match wedge_sign(mask, 1 << v) {
            Some(s) => sign *= s,
            None => return WeylSection::zero(chart, caps),
        }
        mask |= 1 << v;
    }
    let mut out = WeylSection::zero(chart, caps);
    out.add_term(TermKey::new(hbar, YMono::one(chart.dim()), mask), &c.scale_int(sign));
    out
}
