//! Exact coefficient functions on an action–angle chart `U × ℝ^{n−k} × T^k`.
//!
//! A [`CoeffFn`] is a finite sum of terms
//! `c · I^α · φ^β · exp(i m·φ_periodic)` with `c` a Gaussian rational. The
//! periodic angles `φ^1..φ^k` have period `2π`, so derivatives and angle
//! integrals never leave the ring.
//!
//! Coordinates are indexed `0..2n`: index `v < n` is the action `I^{v+1}`,
//! index `n + j` is the angle `φ^{j+1}`.

mod scalar;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

pub use scalar::{parse_rational, rational_to_string, GaussRat};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoeffError {
    #[error("chart mismatch: {left} vs {right}")]
    ChartMismatch { left: ChartSpec, right: ChartSpec },
    #[error("invalid chart: n = {n}, k = {k}")]
    InvalidChart { n: usize, k: usize },
    #[error("coordinate index {index} out of range for {chart}")]
    InvalidCoordinate { index: usize, chart: ChartSpec },
    #[error("angle φ^{angle} is not periodic in {chart}")]
    NotPeriodic { angle: usize, chart: ChartSpec },
    #[error("polynomial dependence on periodic angle φ^{angle}")]
    NonPeriodicDependence { angle: usize },
    #[error("parse error: {0}")]
    Parse(String),
}

/// Shape of an action–angle chart: `n` action/angle pairs, the first `k`
/// angles periodic.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub n: usize,
    pub k: usize,
}

impl ChartSpec {
    pub fn new(n: usize, k: usize) -> Result<Self, CoeffError> {
        if n == 0 || k > n || n > 16 {
            return Err(CoeffError::InvalidChart { n, k });
        }
        Ok(ChartSpec { n, k })
    }

    pub fn dim(&self) -> usize {
        2 * self.n
    }

    pub fn is_action(&self, v: usize) -> bool {
        v < self.n
    }

    /// Coordinate index of `I^{alpha+1}`.
    pub fn action(&self, alpha: usize) -> usize {
        alpha
    }

    /// Coordinate index of `φ^{j+1}`.
    pub fn angle(&self, j: usize) -> usize {
        self.n + j
    }

    /// Zero-based angle number for an angle coordinate index.
    pub fn angle_of(&self, v: usize) -> Option<usize> {
        (v >= self.n && v < 2 * self.n).then(|| v - self.n)
    }

    pub fn is_periodic_angle(&self, j: usize) -> bool {
        j < self.k
    }

    /// Human name of coordinate `v` (`I1`, `phi2`, ...).
    pub fn coord_name(&self, v: usize) -> String {
        if v < self.n {
            format!("I{}", v + 1)
        } else {
            format!("phi{}", v - self.n + 1)
        }
    }

    /// Human name of the fiber variable paired with coordinate `v`.
    pub fn fiber_name(&self, v: usize) -> String {
        if v < self.n {
            format!("J{}", v + 1)
        } else {
            format!("psi{}", v - self.n + 1)
        }
    }

    fn check_coord(&self, v: usize) -> Result<(), CoeffError> {
        if v >= self.dim() {
            return Err(CoeffError::InvalidCoordinate { index: v, chart: *self });
        }
        Ok(())
    }

    fn key_len(&self) -> usize {
        2 * self.n + self.k
    }
}

impl fmt::Display for ChartSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chart(n={}, k={})", self.n, self.k)
    }
}

impl fmt::Debug for ChartSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Exponent key of a single term, laid out as `α (n) | β (n) | m (k)`.
/// Lexicographic order on this vector is the canonical term order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct FnMono(SmallVec<[i32; 8]>);

impl FnMono {
    fn unit(chart: &ChartSpec) -> Self {
        FnMono(SmallVec::from_elem(0, chart.key_len()))
    }

    pub fn alpha<'a>(&'a self, chart: &ChartSpec) -> &'a [i32] {
        &self.0[..chart.n]
    }

    pub fn beta<'a>(&'a self, chart: &ChartSpec) -> &'a [i32] {
        &self.0[chart.n..2 * chart.n]
    }

    pub fn fourier<'a>(&'a self, chart: &ChartSpec) -> &'a [i32] {
        &self.0[2 * chart.n..]
    }

    /// Total polynomial degree in the angles.
    pub fn angle_degree(&self, chart: &ChartSpec) -> u32 {
        self.beta(chart).iter().map(|&b| b as u32).sum()
    }

    pub fn action_degree(&self, chart: &ChartSpec) -> u32 {
        self.alpha(chart).iter().map(|&a| a as u32).sum()
    }

    pub fn is_fourier_free(&self, chart: &ChartSpec) -> bool {
        self.fourier(chart).iter().all(|&m| m == 0)
    }

    fn mul(&self, other: &FnMono) -> FnMono {
        FnMono(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }
}

/// One serialized term of a [`CoeffFn`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermRecord {
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
    #[serde(default)]
    pub m: Vec<i64>,
    pub re: String,
    #[serde(default = "zero_string")]
    pub im: String,
}

fn zero_string() -> String {
    "0".to_string()
}

/// Polynomial-times-Fourier function on a chart with exact Gaussian rational
/// coefficients. Immutable value type; no zero coefficients are stored.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoeffFn {
    chart: ChartSpec,
    terms: BTreeMap<FnMono, GaussRat>,
}

impl CoeffFn {
    pub fn zero(chart: ChartSpec) -> Self {
        CoeffFn { chart, terms: BTreeMap::new() }
    }

    pub fn one(chart: ChartSpec) -> Self {
        CoeffFn::constant(chart, GaussRat::one())
    }

    pub fn constant(chart: ChartSpec, c: GaussRat) -> Self {
        let mut f = CoeffFn::zero(chart);
        f.insert(FnMono::unit(&chart), c);
        f
    }

    pub fn from_int(chart: ChartSpec, c: i64) -> Self {
        CoeffFn::constant(chart, GaussRat::from_int(c))
    }

    /// `c · I^α φ^β e^{i m·φ}`; panics on wrong lengths or negative powers.
    pub fn monomial(chart: ChartSpec, alpha: &[u32], beta: &[u32], m: &[i64], c: GaussRat) -> Self {
        assert_eq!(alpha.len(), chart.n, "alpha length");
        assert_eq!(beta.len(), chart.n, "beta length");
        assert_eq!(m.len(), chart.k, "fourier length");
        let key = alpha
            .iter()
            .map(|&a| a as i32)
            .chain(beta.iter().map(|&b| b as i32))
            .chain(m.iter().map(|&x| x as i32))
            .collect();
        let mut f = CoeffFn::zero(chart);
        f.insert(FnMono(key), c);
        f
    }

    /// The single term `c · mono`.
    pub fn from_term(chart: ChartSpec, mono: &FnMono, c: GaussRat) -> Self {
        let mut out = CoeffFn::zero(chart);
        out.insert(mono.clone(), c);
        out
    }

    /// Action coordinate `I^{alpha+1}`.
    pub fn action(chart: ChartSpec, alpha: usize) -> Self {
        CoeffFn::coordinate(chart, chart.action(alpha))
    }

    /// Angle coordinate `φ^{j+1}` (as a polynomial variable).
    pub fn angle(chart: ChartSpec, j: usize) -> Self {
        CoeffFn::coordinate(chart, chart.angle(j))
    }

    pub fn coordinate(chart: ChartSpec, v: usize) -> Self {
        let mut key = FnMono::unit(&chart);
        key.0[v] = 1;
        let mut f = CoeffFn::zero(chart);
        f.insert(key, GaussRat::one());
        f
    }

    /// `e^{i m φ^{j+1}}` for a periodic angle.
    pub fn fourier(chart: ChartSpec, j: usize, m: i64) -> Self {
        assert!(chart.is_periodic_angle(j), "fourier mode on non-periodic angle");
        let mut key = FnMono::unit(&chart);
        key.0[2 * chart.n + j] = m as i32;
        let mut f = CoeffFn::zero(chart);
        f.insert(key, GaussRat::one());
        f
    }

    /// `cos(m φ^{j+1}) = (e^{imφ} + e^{−imφ}) / 2`.
    pub fn cos(chart: ChartSpec, j: usize, m: i64) -> Self {
        let half = GaussRat::ratio(1, 2);
        CoeffFn::fourier(chart, j, m).scale(&half) + CoeffFn::fourier(chart, j, -m).scale(&half)
    }

    /// `sin(m φ^{j+1}) = (e^{imφ} − e^{−imφ}) / 2i`.
    pub fn sin(chart: ChartSpec, j: usize, m: i64) -> Self {
        let c = GaussRat::new(num_rational::BigRational::zero(), num_rational::BigRational::new((-1).into(), 2.into()));
        CoeffFn::fourier(chart, j, m).scale(&c) + CoeffFn::fourier(chart, j, -m).scale(&c.conj())
    }

    pub fn chart(&self) -> ChartSpec {
        self.chart
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

    pub fn terms(&self) -> impl Iterator<Item = (&FnMono, &GaussRat)> {
        self.terms.iter()
    }

    /// The value if this function is a constant.
    pub fn as_constant(&self) -> Option<GaussRat> {
        match self.terms.len() {
            0 => Some(GaussRat::zero()),
            1 => {
                let (k, c) = self.terms.iter().next().unwrap();
                k.0.iter().all(|&e| e == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.as_constant().is_some()
    }

    fn insert(&mut self, key: FnMono, c: GaussRat) {
        if !c.is_zero() {
            self.terms.insert(key, c);
        }
    }

    fn accumulate(&mut self, key: FnMono, c: &GaussRat) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    fn assert_same_chart(&self, other: &CoeffFn) {
        assert!(
            self.chart == other.chart,
            "chart mismatch: {} vs {}",
            self.chart,
            other.chart
        );
    }

    pub fn add_assign_ref(&mut self, other: &CoeffFn) {
        self.assert_same_chart(other);
        for (k, c) in &other.terms {
            self.accumulate(k.clone(), c);
        }
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, other: &CoeffFn, c: &GaussRat) {
        self.assert_same_chart(other);
        if c.is_zero() {
            return;
        }
        let unit = c.is_one();
        for (k, v) in &other.terms {
            if unit {
                self.accumulate(k.clone(), v);
            } else {
                self.accumulate(k.clone(), &(v * c));
            }
        }
    }

    pub fn scale(&self, c: &GaussRat) -> CoeffFn {
        if c.is_zero() {
            return CoeffFn::zero(self.chart);
        }
        let terms = self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect();
        CoeffFn { chart: self.chart, terms }
    }

    pub fn scale_int(&self, k: i64) -> CoeffFn {
        if k == 0 {
            return CoeffFn::zero(self.chart);
        }
        let terms = self.terms.iter().map(|(m, v)| (m.clone(), v.scale_int(k))).collect();
        CoeffFn { chart: self.chart, terms }
    }

    pub fn conj(&self) -> CoeffFn {
        let mut out = CoeffFn::zero(self.chart);
        let k0 = 2 * self.chart.n;
        for (k, c) in &self.terms {
            let mut key = k.clone();
            for m in &mut key.0[k0..] {
                *m = -*m;
            }
            out.insert(key, c.conj());
        }
        out
    }

    /// Whether `coeff(α, β, m) = conj(coeff(α, β, −m))` for every term.
    pub fn is_real(&self) -> bool {
        self.conj() == *self
    }

    /// No polynomial dependence on any periodic angle.
    pub fn descends_to_torus(&self) -> bool {
        let (n, k) = (self.chart.n, self.chart.k);
        self.terms.keys().all(|key| key.0[n..n + k].iter().all(|&b| b == 0))
    }

    pub fn is_fourier_free(&self) -> bool {
        self.terms.keys().all(|key| key.is_fourier_free(&self.chart))
    }

    /// Depends on no angle at all (neither polynomially nor through Fourier modes).
    pub fn is_angle_free(&self) -> bool {
        let n = self.chart.n;
        self.terms.keys().all(|key| key.0[n..].iter().all(|&e| e == 0))
    }

    /// Maximum total angle-polynomial degree over all terms (0 for zero).
    pub fn angle_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.angle_degree(&self.chart)).max().unwrap_or(0)
    }

    /// Maximum total action degree over all terms (0 for zero).
    pub fn action_degree(&self) -> u32 {
        self.terms.keys().map(|k| k.action_degree(&self.chart)).max().unwrap_or(0)
    }

    pub fn try_add(&self, other: &CoeffFn) -> Result<CoeffFn, CoeffError> {
        self.check_chart(other)?;
        Ok(self + other)
    }

    pub fn try_mul(&self, other: &CoeffFn) -> Result<CoeffFn, CoeffError> {
        self.check_chart(other)?;
        Ok(self * other)
    }

    fn check_chart(&self, other: &CoeffFn) -> Result<(), CoeffError> {
        if self.chart != other.chart {
            return Err(CoeffError::ChartMismatch { left: self.chart, right: other.chart });
        }
        Ok(())
    }

    /// Partial derivative in coordinate `v`. For a periodic angle the Fourier
    /// factor contributes `i m`.
    pub fn diff(&self, v: usize) -> CoeffFn {
        let chart = self.chart;
        assert!(v < chart.dim(), "coordinate {v} out of range");
        let mut out = CoeffFn::zero(chart);
        let fourier_slot = chart.angle_of(v).filter(|&j| chart.is_periodic_angle(j)).map(|j| 2 * chart.n + j);
        for (key, c) in &self.terms {
            let e = key.0[v];
            if e > 0 {
                let mut k2 = key.clone();
                k2.0[v] -= 1;
                out.accumulate(k2, &c.scale_int(e as i64));
            }
            if let Some(slot) = fourier_slot {
                let m = key.0[slot];
                if m != 0 {
                    out.accumulate(key.clone(), &c.mul_i().scale_int(m as i64));
                }
            }
        }
        out
    }

    /// Mixed partial derivative `∂^μ` for a multi-index over coordinates.
    pub fn diff_multi(&self, mu: &[u32]) -> CoeffFn {
        let mut out = self.clone();
        for (v, &times) in mu.iter().enumerate() {
            for _ in 0..times {
                if out.is_zero() {
                    return out;
                }
                out = out.diff(v);
            }
        }
        out
    }

    /// `F` with `∂F/∂φ^{j+1} = self` and `F|_{φ^{j+1}=0} = 0`.
    ///
    /// Zero Fourier modes integrate to polynomials in the angle, so the
    /// result may stop descending to the torus.
    pub fn angle_integral(&self, j: usize) -> CoeffFn {
        let chart = self.chart;
        assert!(j < chart.n, "angle {j} out of range");
        let v = chart.angle(j);
        let slot = chart.is_periodic_angle(j).then(|| 2 * chart.n + j);
        let mut out = CoeffFn::zero(chart);
        for (key, c) in &self.terms {
            let b = key.0[v];
            let m = slot.map(|s| key.0[s]).unwrap_or(0);
            if m == 0 {
                let mut k2 = key.clone();
                k2.0[v] += 1;
                out.accumulate(k2, &c.scale_ratio(1, b as i64 + 1));
                continue;
            }
            // ∫ φ^b e^{imφ} = e^{imφ} Σ_s c_s φ^s,  c_b = 1/(im),  c_s = −(s+1) c_{s+1}/(im)
            let inv_im = GaussRat::imag_unit().scale_ratio(-1, m as i64);
            let mut cs = vec![GaussRat::zero(); b as usize + 1];
            cs[b as usize] = inv_im.clone();
            for s in (0..b as usize).rev() {
                cs[s] = (&cs[s + 1] * &inv_im).scale_int(-(s as i64 + 1));
            }
            for (s, cs_s) in cs.iter().enumerate() {
                let mut k2 = key.clone();
                k2.0[v] = s as i32;
                out.accumulate(k2, &(c * cs_s));
            }
            // subtract the value at φ = 0
            let mut k0 = key.clone();
            k0.0[v] = 0;
            k0.0[slot.unwrap()] = 0;
            out.accumulate(k0, &-(c * &cs[0]));
        }
        out
    }

    /// Average over the periodic angle `φ^{j+1}`: keeps the zero Fourier mode.
    pub fn torus_average(&self, j: usize) -> Result<CoeffFn, CoeffError> {
        let chart = self.chart;
        if !chart.is_periodic_angle(j) {
            return Err(CoeffError::NotPeriodic { angle: j + 1, chart });
        }
        let v = chart.angle(j);
        let slot = 2 * chart.n + j;
        if self.terms.keys().any(|k| k.0[v] != 0) {
            return Err(CoeffError::NonPeriodicDependence { angle: j + 1 });
        }
        let terms = self.terms.iter().filter(|(k, _)| k.0[slot] == 0).map(|(k, c)| (k.clone(), c.clone())).collect();
        Ok(CoeffFn { chart, terms })
    }

    /// Restriction to `φ^{j+1} = 0`.
    pub fn at_angle_zero(&self, j: usize) -> CoeffFn {
        let chart = self.chart;
        let v = chart.angle(j);
        let slot = chart.is_periodic_angle(j).then(|| 2 * chart.n + j);
        let mut out = CoeffFn::zero(chart);
        for (key, c) in &self.terms {
            if key.0[v] != 0 {
                continue;
            }
            let mut k2 = key.clone();
            if let Some(s) = slot {
                k2.0[s] = 0;
            }
            out.accumulate(k2, c);
        }
        out
    }

    /// Restriction to `φ = 0` in every angle.
    pub fn at_angles_zero(&self) -> CoeffFn {
        (0..self.chart.n).fold(self.clone(), |f, j| f.at_angle_zero(j))
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        let chart = self.chart;
        self.terms
            .iter()
            .map(|(k, c)| TermRecord {
                alpha: k.alpha(&chart).iter().map(|&a| a as u32).collect(),
                beta: k.beta(&chart).iter().map(|&b| b as u32).collect(),
                m: k.fourier(&chart).iter().map(|&m| m as i64).collect(),
                re: c.re_string(),
                im: c.im_string(),
            })
            .collect()
    }

    /// An omitted `m` means no Fourier mode.
    pub fn from_records(chart: ChartSpec, records: &[TermRecord]) -> Result<CoeffFn, CoeffError> {
        let mut out = CoeffFn::zero(chart);
        let no_mode = vec![0; chart.k];
        for (idx, r) in records.iter().enumerate() {
            let m = if r.m.is_empty() { &no_mode } else { &r.m };
            if r.alpha.len() != chart.n || r.beta.len() != chart.n || m.len() != chart.k {
                return Err(CoeffError::Parse(format!(
                    "term {idx}: expected alpha/beta of length {} and m of length {}",
                    chart.n, chart.k
                )));
            }
            let c = GaussRat::parse_parts(&r.re, &r.im).map_err(|e| CoeffError::Parse(format!("term {idx}: {e}")))?;
            let f = CoeffFn::monomial(chart, &r.alpha, &r.beta, m, c);
            out.add_assign_ref(&f);
        }
        Ok(out)
    }
}

impl Add for &CoeffFn {
    type Output = CoeffFn;
    fn add(self, rhs: &CoeffFn) -> CoeffFn {
        let mut out = self.clone();
        out.add_assign_ref(rhs);
        out
    }
}

impl Add for CoeffFn {
    type Output = CoeffFn;
    fn add(mut self, rhs: CoeffFn) -> CoeffFn {
        self.add_assign_ref(&rhs);
        self
    }
}

impl Sub for &CoeffFn {
    type Output = CoeffFn;
    fn sub(self, rhs: &CoeffFn) -> CoeffFn {
        let mut out = self.clone();
        out.add_scaled(rhs, &GaussRat::from_int(-1));
        out
    }
}

impl Sub for CoeffFn {
    type Output = CoeffFn;
    fn sub(self, rhs: CoeffFn) -> CoeffFn {
        &self - &rhs
    }
}

impl Neg for &CoeffFn {
    type Output = CoeffFn;
    fn neg(self) -> CoeffFn {
        self.scale_int(-1)
    }
}

impl Neg for CoeffFn {
    type Output = CoeffFn;
    fn neg(self) -> CoeffFn {
        self.scale_int(-1)
    }
}

impl Mul for &CoeffFn {
    type Output = CoeffFn;
    fn mul(self, rhs: &CoeffFn) -> CoeffFn {
        self.assert_same_chart(rhs);
        if self.is_zero() || rhs.is_zero() {
            return CoeffFn::zero(self.chart);
        }
        if let Some(c) = self.as_constant() {
            return rhs.scale(&c);
        }
        if let Some(c) = rhs.as_constant() {
            return self.scale(&c);
        }
        let mut out = CoeffFn::zero(self.chart);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &rhs.terms {
                out.accumulate(ka.mul(kb), &(ca * cb));
            }
        }
        out
    }
}

impl Mul for CoeffFn {
    type Output = CoeffFn;
    fn mul(self, rhs: CoeffFn) -> CoeffFn {
        &self * &rhs
    }
}

impl fmt::Display for CoeffFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let chart = self.chart;
        let mut first = true;
        for (key, c) in &self.terms {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "{c}")?;
            for (v, &e) in key.0[..2 * chart.n].iter().enumerate() {
                if e == 1 {
                    write!(f, "*{}", chart.coord_name(v))?;
                } else if e > 1 {
                    write!(f, "*{}^{}", chart.coord_name(v), e)?;
                }
            }
            for (j, &m) in key.fourier(&chart).iter().enumerate() {
                if m != 0 {
                    write!(f, "*exp({}i*phi{})", m, j + 1)?;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Debug for CoeffFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoeffFn[{}]", self)
    }
}

pub fn cf_add(a: &CoeffFn, b: &CoeffFn) -> Result<CoeffFn, CoeffError> {
    a.try_add(b)
}

pub fn cf_mul(a: &CoeffFn, b: &CoeffFn) -> Result<CoeffFn, CoeffError> {
    a.try_mul(b)
}

pub fn cf_diff(a: &CoeffFn, v: usize) -> Result<CoeffFn, CoeffError> {
    a.chart.check_coord(v)?;
    Ok(a.diff(v))
}

/// `∫_0^{φ^{j+1}} a dφ^{j+1}`; `j` is the zero-based angle number.
pub fn cf_angle_integral(a: &CoeffFn, j: usize) -> Result<CoeffFn, CoeffError> {
    if j >= a.chart.n {
        return Err(CoeffError::InvalidCoordinate { index: a.chart.angle(j), chart: a.chart });
    }
    Ok(a.angle_integral(j))
}

pub fn cf_torus_average(a: &CoeffFn, j: usize) -> Result<CoeffFn, CoeffError> {
    a.torus_average(j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c11() -> ChartSpec {
        ChartSpec::new(1, 1).unwrap()
    }

    #[test]
    fn products_of_coordinates_and_modes() {
        let ch = c11();
        let i1 = CoeffFn::action(ch, 0);
        let p1 = CoeffFn::angle(ch, 0);
        let prod = &i1 * &p1;
        assert_eq!(prod, CoeffFn::monomial(ch, &[1], &[1], &[0], GaussRat::one()));
        let e = &CoeffFn::fourier(ch, 0, 1) * &CoeffFn::fourier(ch, 0, -1);
        assert_eq!(e, CoeffFn::one(ch));
    }

    #[test]
    fn square_of_one_plus_cos() {
        // (1 + cos φ)² = 3/2 + 2 cos φ + ½ cos 2φ
        let ch = c11();
        let a = CoeffFn::one(ch) + CoeffFn::cos(ch, 0, 1);
        let lhs = &a * &a;
        let rhs = CoeffFn::constant(ch, GaussRat::ratio(3, 2))
            + CoeffFn::cos(ch, 0, 1).scale_int(2)
            + CoeffFn::cos(ch, 0, 2).scale(&GaussRat::ratio(1, 2));
        assert_eq!(lhs, rhs);
        assert!(lhs.is_real());
    }

    #[test]
    fn derivatives() {
        let ch = ChartSpec::new(2, 1).unwrap();
        let e = CoeffFn::fourier(ch, 0, 3);
        assert_eq!(e.diff(ch.angle(0)), e.scale(&GaussRat::imag_unit().scale_int(3)));
        // ∂/∂I¹ (I¹)² φ² = 2 I¹ φ²
        let f = CoeffFn::monomial(ch, &[2, 0], &[0, 1], &[0], GaussRat::one());
        let g = CoeffFn::monomial(ch, &[1, 0], &[0, 1], &[0], GaussRat::from_int(2));
        assert_eq!(f.diff(0), g);
        let ch1 = c11();
        let h = CoeffFn::angle(ch1, 0) + CoeffFn::sin(ch1, 0, 1);
        assert_eq!(h.diff(1), CoeffFn::one(ch1) + CoeffFn::cos(ch1, 0, 1));
    }

    #[test]
    fn angle_integrals() {
        let ch = c11();
        let phi = CoeffFn::angle(ch, 0);
        assert_eq!(CoeffFn::one(ch).angle_integral(0), phi);
        assert_eq!(CoeffFn::cos(ch, 0, 1).angle_integral(0), CoeffFn::sin(ch, 0, 1));
        let a = CoeffFn::one(ch) + CoeffFn::cos(ch, 0, 1);
        assert_eq!(a.angle_integral(0), &phi + &CoeffFn::sin(ch, 0, 1));
        // ∫ sin = 1 − cos
        assert_eq!(CoeffFn::sin(ch, 0, 1).angle_integral(0), CoeffFn::one(ch) - CoeffFn::cos(ch, 0, 1));
    }

    #[test]
    fn torus_averages() {
        let ch = c11();
        let a = CoeffFn::one(ch) + CoeffFn::cos(ch, 0, 1);
        assert_eq!(a.torus_average(0).unwrap(), CoeffFn::one(ch));
        assert!(CoeffFn::sin(ch, 0, 1).torus_average(0).unwrap().is_zero());
        let b = CoeffFn::monomial(ch, &[2], &[0], &[2], GaussRat::one());
        assert!(b.torus_average(0).unwrap().is_zero());
        assert_eq!(
            CoeffFn::angle(ch, 0).torus_average(0),
            Err(CoeffError::NonPeriodicDependence { angle: 1 })
        );
    }

    #[test]
    fn chart_mismatch_is_an_error() {
        let a = CoeffFn::one(c11());
        let b = CoeffFn::one(ChartSpec::new(2, 0).unwrap());
        assert!(matches!(cf_add(&a, &b), Err(CoeffError::ChartMismatch { .. })));
        assert!(matches!(cf_mul(&a, &b), Err(CoeffError::ChartMismatch { .. })));
    }

    #[test]
    fn records_round_trip() {
        let ch = ChartSpec::new(2, 1).unwrap();
        let f = CoeffFn::monomial(ch, &[1, 2], &[0, 3], &[-2], GaussRat::parse_parts("3/7", "-1/2").unwrap())
            + CoeffFn::from_int(ch, 5);
        let back = CoeffFn::from_records(ch, &f.to_records()).unwrap();
        assert_eq!(back, f);
        let bad = TermRecord { alpha: vec![0], beta: vec![0, 0], m: vec![0], re: "1".into(), im: "0".into() };
        assert!(CoeffFn::from_records(ch, &[bad]).is_err());
    }
}
