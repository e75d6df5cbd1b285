//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weylforge::coeff_ring::{ChartSpec, CoeffFn, GaussRat};
use weylforge::weyl_algebra::{Caps, WeylSection, YMono};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ratio(rng: &mut ChaCha8Rng) -> GaussRat {
    let mut num = 0;
    while num == 0 {
        num = rng.gen_range(-4..=4);
    }
    GaussRat::ratio(num, rng.gen_range(1..=3))
}

/// A few random terms `I^α φ^β e^{i m·φ}`; Fourier modes only on periodic angles.
pub fn coeff(rng: &mut ChaCha8Rng, chart: ChartSpec, max_deg: u32, fourier: bool) -> CoeffFn {
    let mut f = CoeffFn::zero(chart);
    for _ in 0..rng.gen_range(1..=3) {
        let alpha: Vec<u32> = (0..chart.n).map(|_| rng.gen_range(0..=max_deg)).collect();
        let beta: Vec<u32> = (0..chart.n).map(|_| rng.gen_range(0..=max_deg.min(1))).collect();
        let m: Vec<i64> = (0..chart.k).map(|_| if fourier { rng.gen_range(-1..=1) } else { 0 }).collect();
        f = &f + &CoeffFn::monomial(chart, &alpha, &beta, &m, ratio(rng));
    }
    f
}

/// Polynomial in the actions only.
pub fn action_poly(rng: &mut ChaCha8Rng, chart: ChartSpec, max_deg: u32) -> CoeffFn {
    let mut f = CoeffFn::zero(chart);
    for _ in 0..rng.gen_range(1..=3) {
        let alpha: Vec<u32> = (0..chart.n).map(|_| rng.gen_range(0..=max_deg)).collect();
        f = &f + &CoeffFn::monomial(chart, &alpha, &vec![0; chart.n], &vec![0; chart.k], ratio(rng));
    }
    f
}

pub fn y_mono(rng: &mut ChaCha8Rng, dim: usize, max_deg: u32) -> YMono {
    let total = rng.gen_range(0..=max_deg);
    let mut exps = vec![0u16; dim];
    for _ in 0..total {
        exps[rng.gen_range(0..dim)] += 1;
    }
    YMono::from_exponents(&exps)
}

fn forms(rng: &mut ChaCha8Rng, dim: usize, max_forms: usize) -> Vec<usize> {
    let count = rng.gen_range(0..=max_forms.min(dim));
    let mut out: Vec<usize> = Vec::new();
    while out.len() < count {
        let v = rng.gen_range(0..dim);
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

/// Random section with up to `terms` terms inside the caps.
pub fn section(rng: &mut ChaCha8Rng, chart: ChartSpec, caps: Caps, terms: usize, fourier: bool) -> WeylSection {
    let dim = chart.dim();
    let mut a = WeylSection::zero(chart, caps);
    for _ in 0..terms {
        let hbar = rng.gen_range(0..=caps.order.min(caps.degree / 2));
        let y = y_mono(rng, dim, caps.degree - 2 * hbar);
        let f = forms(rng, dim, 2);
        a.add_assign(&WeylSection::monomial(chart, caps, hbar, &y, &f, &coeff(rng, chart, 2, fourier)));
    }
    a
}

/// Random section of fixed form degree.
pub fn section_of_form_degree(rng: &mut ChaCha8Rng, chart: ChartSpec, caps: Caps, terms: usize, p: usize) -> WeylSection {
    let dim = chart.dim();
    let mut a = WeylSection::zero(chart, caps);
    for _ in 0..terms {
        let hbar = rng.gen_range(0..=caps.order.min(caps.degree / 2));
        let y = y_mono(rng, dim, caps.degree - 2 * hbar);
        let mut f = forms(rng, dim, p);
        while f.len() < p {
            let v = rng.gen_range(0..dim);
            if !f.contains(&v) {
                f.push(v);
            }
        }
        a.add_assign(&WeylSection::monomial(chart, caps, hbar, &y, &f, &coeff(rng, chart, 2, false)));
    }
    a
}

/// A pure differential form `c dx^{forms}`.
pub fn form(chart: ChartSpec, caps: Caps, hbar: u32, forms: &[usize], c: &CoeffFn) -> WeylSection {
    WeylSection::monomial(chart, caps, hbar, &YMono::one(chart.dim()), forms, c)
}

/// A closed two-form vanishing on the fibers and descending to the torus:
/// `d(Σ b_l dI^l)` plus constant `dφ^j ∧ dI^l` terms plus an action-only
/// closed part.
pub fn closed_fiber_vanishing_form(rng: &mut ChaCha8Rng, chart: ChartSpec, caps: Caps) -> WeylSection {
    let n = chart.n;
    let mut out = WeylSection::zero(chart, caps);
    for hbar in 0..=caps.order.min(1) {
        let mut beta = WeylSection::zero(chart, caps);
        for l in 0..n {
            let mut b = CoeffFn::zero(chart);
            for _ in 0..rng.gen_range(1..=2) {
                let alpha: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
                let m: Vec<i64> = (0..chart.k).map(|_| rng.gen_range(-2..=2)).collect();
                let poly: Vec<u32> = (0..n).map(|j| if j >= chart.k { rng.gen_range(0..=1) } else { 0 }).collect();
                b = &b + &CoeffFn::monomial(chart, &alpha, &poly, &m, ratio(rng));
            }
            beta.add_assign(&form(chart, caps, hbar, &[l], &b));
        }
        out.add_assign(&beta.d());
        for j in 0..n {
            for l in 0..n {
                if rng.gen_bool(0.5) {
                    out.add_assign(&form(chart, caps, hbar, &[n + j, l], &CoeffFn::constant(chart, ratio(rng))));
                }
            }
        }
        if n == 1 {
            out.add_assign(&form(chart, caps, hbar, &[1, 0], &action_poly(rng, chart, 2)));
        } else {
            out.add_assign(&form(chart, caps, hbar, &[0, 1], &action_poly(rng, chart, 2)));
        }
    }
    out
}
