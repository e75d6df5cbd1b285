//! Symplectic data, symplectic torsion-free connections and their curvature
//! on a Darboux action–angle chart.
//!
//! Connections are given by their lowered Christoffel symbols `Γ_{xyz}`; in a
//! chart with constant `ω` a connection is symplectic and torsion free exactly
//! when `Γ_{xyz}` is fully symmetric.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coeff_ring::{ChartSpec, CoeffFn, GaussRat, TermRecord};
use crate::weyl_algebra::{fib_bracket, hdiv, moyal_capped, Caps, SymplecticData, TermKey, WeylError, WeylSection, YMono};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("expected a {expected}×{expected} matrix")]
    Dimension { expected: usize },
    #[error("ω is not antisymmetric at ({0}, {1})")]
    NotAntisymmetric(usize, usize),
    #[error("ω has no inverse over the coefficient ring (determinant {det})")]
    NotInvertible { det: String },
    #[error("form is not closed")]
    NotClosed,
    #[error("Christoffel symbols are not fully symmetric at {indices:?}")]
    NotSymmetric { indices: [usize; 3] },
    #[error("ω must have constant coefficients in the chart")]
    NonConstantSymplectic,
    #[error("connection index out of range: {indices:?}")]
    BadIndex { indices: [usize; 3] },
    #[error(transparent)]
    Weyl(#[from] WeylError),
}

/// Checks antisymmetry, closedness and exact invertibility of `ω_{jl}` and
/// caches its inverse. The determinant must be a unit of the coefficient
/// ring (a constant times a Fourier mode).
pub fn validate_symplectic(chart: ChartSpec, w: &[Vec<CoeffFn>]) -> Result<SymplecticData, GeometryError> {
    let dim = chart.dim();
    if w.len() != dim || w.iter().any(|row| row.len() != dim) {
        return Err(GeometryError::Dimension { expected: dim });
    }
    for i in 0..dim {
        for j in i..dim {
            if w[i][j] != -&w[j][i] {
                return Err(GeometryError::NotAntisymmetric(i, j));
            }
        }
    }
    // dω = 0  ⟺  ∂_k ω_ij + ∂_i ω_jk + ∂_j ω_ki = 0
    for i in 0..dim {
        for j in i + 1..dim {
            for k in j + 1..dim {
                let cyc = w[i][j].diff(k) + w[j][k].diff(i) + w[k][i].diff(j);
                if !cyc.is_zero() {
                    return Err(GeometryError::NotClosed);
                }
            }
        }
    }
    let det = determinant(w, chart);
    let det_inv = unit_inverse(&det).ok_or_else(|| GeometryError::NotInvertible { det: det.to_string() })?;
    let mut upper = vec![vec![CoeffFn::zero(chart); dim]; dim];
    for (i, row) in upper.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            // inverse[i][j] = cofactor(j, i) / det
            let minor: Vec<Vec<CoeffFn>> = (0..dim)
                .filter(|&r| r != j)
                .map(|r| (0..dim).filter(|&c| c != i).map(|c| w[r][c].clone()).collect())
                .collect();
            let cof = determinant(&minor, chart);
            let cof = if (i + j) % 2 == 0 { cof } else { -cof };
            *slot = &cof * &det_inv;
        }
    }
    Ok(SymplecticData::from_matrices(chart, w.to_vec(), upper))
}

/// Determinant by expansion over column subsets (`O(2^d d)` products).
fn determinant(m: &[Vec<CoeffFn>], chart: ChartSpec) -> CoeffFn {
    let d = m.len();
    if d == 0 {
        return CoeffFn::one(chart);
    }
    // minors[mask] = determinant of the rows 0..popcount(mask) against columns in mask
    let mut minors: BTreeMap<u32, CoeffFn> = BTreeMap::new();
    minors.insert(0, CoeffFn::one(chart));
    for row in 0..d {
        let mut next = BTreeMap::new();
        for (mask, val) in &minors {
            if val.is_zero() {
                continue;
            }
            for col in 0..d {
                if mask >> col & 1 == 1 || m[row][col].is_zero() {
                    continue;
                }
                // sign from the number of used columns above `col`
                let above = (mask >> (col + 1)).count_ones();
                let term = val * &m[row][col];
                let term = if above % 2 == 0 { term } else { -term };
                next.entry(mask | 1 << col).or_insert_with(|| CoeffFn::zero(chart)).add_assign_ref(&term);
            }
        }
        minors = next;
    }
    minors.remove(&((1u32 << d) - 1)).unwrap_or_else(|| CoeffFn::zero(chart))
}

fn unit_inverse(f: &CoeffFn) -> Option<CoeffFn> {
    let chart = f.chart();
    if f.len() != 1 {
        return None;
    }
    let (mono, c) = f.terms().next().unwrap();
    if mono.alpha(&chart).iter().chain(mono.beta(&chart)).any(|&e| e != 0) {
        return None;
    }
    let m: Vec<i64> = mono.fourier(&chart).iter().map(|&x| -(x as i64)).collect();
    Some(CoeffFn::monomial(chart, &vec![0; chart.n], &vec![0; chart.n], &m, c.inv()?))
}

/// `{f, g} = ω^{jl} ∂_j f ∂_l g`.
pub fn poisson_bracket(f: &CoeffFn, g: &CoeffFn, s: &SymplecticData) -> CoeffFn {
    let chart = s.chart();
    let dim = chart.dim();
    let df: Vec<CoeffFn> = (0..dim).map(|v| f.diff(v)).collect();
    let dg: Vec<CoeffFn> = (0..dim).map(|v| g.diff(v)).collect();
    let mut out = CoeffFn::zero(chart);
    for j in 0..dim {
        if df[j].is_zero() {
            continue;
        }
        for l in 0..dim {
            let w = s.upper(j, l);
            if w.is_zero() || dg[l].is_zero() {
                continue;
            }
            out.add_assign_ref(&(&(w * &df[j]) * &dg[l]));
        }
    }
    out
}

/// Serialized entry of the lowered Christoffel tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionEntry {
    pub indices: [usize; 3],
    pub coeff: Vec<TermRecord>,
}

/// Lowered Christoffel symbols `Γ_{xyz}` with cached raised symbols
/// `Γ^z_{xy} = ω^{zw} Γ_{wxy}`.
#[derive(Clone, PartialEq)]
pub struct ConnectionData {
    chart: ChartSpec,
    lowered: Vec<CoeffFn>,
    raised: Vec<CoeffFn>,
}

impl ConnectionData {
    pub fn zero(chart: ChartSpec) -> Self {
        let len = chart.dim().pow(3);
        ConnectionData { chart, lowered: vec![CoeffFn::zero(chart); len], raised: vec![CoeffFn::zero(chart); len] }
    }

    /// Builds the tensor from the given entries without symmetrizing.
    pub fn from_tensor(s: &SymplecticData, entries: &[([usize; 3], CoeffFn)]) -> Result<Self, GeometryError> {
        let chart = s.chart();
        let dim = chart.dim();
        let mut c = ConnectionData::zero(chart);
        for (idx, f) in entries {
            if idx.iter().any(|&i| i >= dim) {
                return Err(GeometryError::BadIndex { indices: *idx });
            }
            let p = c.pos(idx[0], idx[1], idx[2]);
            c.lowered[p] = f.clone();
        }
        c.raise(s);
        Ok(c)
    }

    /// Builds a fully symmetric tensor: each entry fills all permutations of its
    /// index triple; conflicting values for the same triple are rejected.
    pub fn symmetric(s: &SymplecticData, entries: &[([usize; 3], CoeffFn)]) -> Result<Self, GeometryError> {
        let chart = s.chart();
        let dim = chart.dim();
        let mut by_triple: BTreeMap<[usize; 3], CoeffFn> = BTreeMap::new();
        for (idx, f) in entries {
            if idx.iter().any(|&i| i >= dim) {
                return Err(GeometryError::BadIndex { indices: *idx });
            }
            let mut key = *idx;
            key.sort_unstable();
            match by_triple.get(&key) {
                Some(prev) if prev != f => return Err(GeometryError::NotSymmetric { indices: *idx }),
                _ => {
                    by_triple.insert(key, f.clone());
                }
            }
        }
        let mut c = ConnectionData::zero(chart);
        for (key, f) in &by_triple {
            for [a, b, d] in permutations(*key) {
                let p = c.pos(a, b, d);
                c.lowered[p] = f.clone();
            }
        }
        c.raise(s);
        Ok(c)
    }

    pub fn from_entries(s: &SymplecticData, entries: &[ConnectionEntry]) -> Result<Self, GeometryError> {
        let parsed = entries
            .iter()
            .map(|e| Ok((e.indices, CoeffFn::from_records(s.chart(), &e.coeff).map_err(WeylError::from)?)))
            .collect::<Result<Vec<_>, GeometryError>>()?;
        ConnectionData::symmetric(s, &parsed)
    }

    /// Entries for index triples `x ≤ y ≤ z` with nonzero symbols.
    pub fn to_entries(&self) -> Vec<ConnectionEntry> {
        let dim = self.chart.dim();
        let mut out = Vec::new();
        for x in 0..dim {
            for y in x..dim {
                for z in y..dim {
                    let f = self.get(x, y, z);
                    if !f.is_zero() {
                        out.push(ConnectionEntry { indices: [x, y, z], coeff: f.to_records() });
                    }
                }
            }
        }
        out
    }

    fn raise(&mut self, s: &SymplecticData) {
        let dim = self.chart.dim();
        for z in 0..dim {
            for x in 0..dim {
                for y in 0..dim {
                    let mut acc = CoeffFn::zero(self.chart);
                    for w in 0..dim {
                        let om = s.upper(z, w);
                        let g = self.get(w, x, y);
                        if !om.is_zero() && !g.is_zero() {
                            acc.add_assign_ref(&(om * g));
                        }
                    }
                    let p = self.pos(z, x, y);
                    self.raised[p] = acc;
                }
            }
        }
    }

    fn pos(&self, x: usize, y: usize, z: usize) -> usize {
        let d = self.chart.dim();
        (x * d + y) * d + z
    }

    pub fn chart(&self) -> ChartSpec {
        self.chart
    }

    /// `Γ_{xyz}`.
    pub fn get(&self, x: usize, y: usize, z: usize) -> &CoeffFn {
        &self.lowered[self.pos(x, y, z)]
    }

    /// `Γ^z_{xy}`.
    pub fn raised(&self, z: usize, x: usize, y: usize) -> &CoeffFn {
        &self.raised[self.pos(z, x, y)]
    }

    pub fn is_zero(&self) -> bool {
        self.lowered.iter().all(CoeffFn::is_zero)
    }

    /// Connection form `Γ = ½ Γ_{jkl} y^j y^k dx^l`.
    pub fn form(&self, caps: Caps) -> WeylSection {
        let dim = self.chart.dim();
        let mut out = WeylSection::zero(self.chart, caps);
        let half = GaussRat::ratio(1, 2);
        for j in 0..dim {
            for k in j..dim {
                let mut y = YMono::one(dim);
                y = y.mul(&YMono::var(dim, j)).mul(&YMono::var(dim, k));
                for l in 0..dim {
                    let g = self.get(j, k, l);
                    if g.is_zero() {
                        continue;
                    }
                    let key = TermKey::new(0, y.clone(), 1 << l);
                    if j == k {
                        out.add_term(key, &g.scale(&half));
                    } else {
                        out.add_term(key, g);
                    }
                }
            }
        }
        out
    }
}

impl fmt::Debug for ConnectionData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        let dim = self.chart.dim();
        for x in 0..dim {
            for y in x..dim {
                for z in y..dim {
                    let g = self.get(x, y, z);
                    if !g.is_zero() {
                        m.entry(&[x, y, z], g);
                    }
                }
            }
        }
        m.finish()
    }
}

fn permutations([a, b, c]: [usize; 3]) -> [[usize; 3]; 6] {
    [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
}

/// Result of [`validate_connection`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConnectionReport {
    pub symmetric: bool,
    pub constant_omega: bool,
}

/// Full symmetry of `Γ_{xyz}` (torsion free and `∇ω = 0` for constant `ω`).
pub fn validate_connection(c: &ConnectionData, s: &SymplecticData) -> Result<ConnectionReport, GeometryError> {
    if !s.is_constant() {
        return Err(GeometryError::NonConstantSymplectic);
    }
    let dim = c.chart.dim();
    for x in 0..dim {
        for y in 0..dim {
            for z in 0..dim {
                let g = c.get(x, y, z);
                if permutations([x, y, z]).iter().any(|&[a, b, d]| c.get(a, b, d) != g) {
                    return Err(GeometryError::NotSymmetric { indices: [x, y, z] });
                }
            }
        }
    }
    Ok(ConnectionReport { symmetric: true, constant_omega: true })
}

/// The structural conditions a connection adapted to the Lagrangian fibration
/// must satisfy in an action–angle chart, stated on lowered symbols.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum FiberConstraint {
    /// `Γ_{φφφ} = 0`.
    AngleAngleAngleVanishes,
    /// `Γ_{Iφφ} = 0`.
    ActionAngleAngleVanishes,
    /// `Γ_{IIφ}` independent of every angle.
    ActionActionAngleAngleFree,
    /// `Γ_{III}` at most linear in the angles.
    ActionActionActionAngleLinear,
}

impl FiberConstraint {
    pub fn describe(&self) -> &'static str {
        match self {
            FiberConstraint::AngleAngleAngleVanishes => "Γ_{φφφ} must vanish (fibers are flat)",
            FiberConstraint::ActionAngleAngleVanishes => "Γ_{Iφφ} must vanish (no action component of the fiber-fiber transport)",
            FiberConstraint::ActionActionAngleAngleFree => "Γ_{IIφ} must not depend on the angles",
            FiberConstraint::ActionActionActionAngleLinear => "Γ_{III} must be at most linear in the angles",
        }
    }
}

impl fmt::Display for FiberConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConstraintViolation {
    pub constraint: FiberConstraint,
    pub indices: [usize; 3],
    pub value: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FiberAdaptedReport {
    pub violations: Vec<ConstraintViolation>,
}

impl FiberAdaptedReport {
    pub fn is_compliant(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violated(&self, c: FiberConstraint) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }
}

/// Checks the fiber-adapted constraints on every sorted index triple.
pub fn check_fiber_adapted(c: &ConnectionData) -> FiberAdaptedReport {
    let chart = c.chart;
    let dim = chart.dim();
    let mut report = FiberAdaptedReport::default();
    for x in 0..dim {
        for y in x..dim {
            for z in y..dim {
                let g = c.get(x, y, z);
                if g.is_zero() {
                    continue;
                }
                let angles = [x, y, z].iter().filter(|&&v| !chart.is_action(v)).count();
                let failed = match angles {
                    3 => Some(FiberConstraint::AngleAngleAngleVanishes),
                    2 => Some(FiberConstraint::ActionAngleAngleVanishes),
                    1 => (!g.is_angle_free()).then_some(FiberConstraint::ActionActionAngleAngleFree),
                    _ => (!g.is_fourier_free() || g.angle_degree() > 1)
                        .then_some(FiberConstraint::ActionActionActionAngleLinear),
                };
                if let Some(constraint) = failed {
                    report.violations.push(ConstraintViolation { constraint, indices: [x, y, z], value: g.to_string() });
                }
            }
        }
    }
    report
}

/// Size limits for random connections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBounds {
    /// Maximal total degree in the actions.
    pub action_degree: u32,
    /// Integer coefficients are drawn from `[-magnitude, magnitude]`; 0 gives the zero connection.
    pub magnitude: i64,
}

impl Default for SampleBounds {
    fn default() -> Self {
        SampleBounds { action_degree: 1, magnitude: 2 }
    }
}

fn random_action_poly(rng: &mut ChaCha8Rng, chart: ChartSpec, bounds: SampleBounds, beta: &[u32]) -> CoeffFn {
    let mut out = CoeffFn::zero(chart);
    if bounds.magnitude == 0 {
        return out;
    }
    for alpha in multi_indices(chart.n, bounds.action_degree) {
        if rng.gen_bool(0.5) {
            continue;
        }
        let c = rng.gen_range(-bounds.magnitude..=bounds.magnitude);
        let m = vec![0i64; chart.k];
        out.add_assign_ref(&CoeffFn::monomial(chart, &alpha, beta, &m, GaussRat::from_int(c)));
    }
    out
}

/// All exponent vectors of length `len` with total degree `≤ max`.
pub(crate) fn multi_indices(len: usize, max: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        let mut next = Vec::new();
        for v in &out {
            let used: u32 = v.iter().sum();
            for e in 0..=(max - used) {
                let mut w = v.clone();
                w.push(e);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

/// Random fully symmetric connection satisfying the fiber-adapted constraints:
/// `Γ_{φφφ} = Γ_{Iφφ} = 0`, `Γ_{IIφ} = Γ_{IIφ}(I)` and
/// `Γ_{III} = A(I) + Σ_j B_j(I) φ^j`. Deterministic per seed.
pub fn sample_fiber_adapted_connection(s: &SymplecticData, seed: u64, bounds: SampleBounds) -> ConnectionData {
    let chart = s.chart();
    let n = chart.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let zero_beta = vec![0u32; n];
    for x in 0..n {
        for y in x..n {
            for z in y..n {
                let mut f = random_action_poly(&mut rng, chart, bounds, &zero_beta);
                for j in 0..n {
                    let mut beta = zero_beta.clone();
                    beta[j] = 1;
                    f.add_assign_ref(&random_action_poly(&mut rng, chart, bounds, &beta));
                }
                entries.push(([x, y, z], f));
            }
            for j in 0..n {
                let f = random_action_poly(&mut rng, chart, bounds, &zero_beta);
                entries.push(([x, y, chart.angle(j)], f));
            }
        }
    }
    ConnectionData::symmetric(s, &entries).expect("sorted triples cannot conflict")
}

/// Random fully symmetric connection with polynomial dependence on every
/// coordinate (no fiber-adapted structure). Deterministic per seed.
pub fn sample_symmetric_connection(s: &SymplecticData, seed: u64, bounds: SampleBounds) -> ConnectionData {
    let chart = s.chart();
    let dim = chart.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for x in 0..dim {
        for y in x..dim {
            for z in y..dim {
                let mut f = CoeffFn::zero(chart);
                if bounds.magnitude > 0 {
                    for mu in multi_indices(dim, bounds.action_degree) {
                        if rng.gen_bool(0.6) {
                            continue;
                        }
                        let c = rng.gen_range(-bounds.magnitude..=bounds.magnitude);
                        f.add_assign_ref(&CoeffFn::monomial(chart, &mu[..chart.n], &mu[chart.n..], &vec![0; chart.k], GaussRat::from_int(c)));
                    }
                }
                entries.push(([x, y, z], f));
            }
        }
    }
    ConnectionData::symmetric(s, &entries).expect("sorted triples cannot conflict")
}

/// `∂a = da + (1/ℏ)[Γ, a]`. For the quadratic connection form the bracket
/// divided by `ℏ` is exactly the single-contraction fiber bracket.
pub fn covariant_derivative(a: &WeylSection, c: &ConnectionData, s: &SymplecticData) -> Result<WeylSection, GeometryError> {
    let gamma = c.form(a.caps());
    Ok(a.d().add(&fib_bracket(&gamma, a, s)?))
}

/// Curvature tensor `R_{ijkl} = ω_{im} R^m_{jkl}` of a connection.
#[derive(Clone, PartialEq)]
pub struct CurvatureData {
    chart: ChartSpec,
    tensor: Vec<CoeffFn>,
}

impl CurvatureData {
    fn pos(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let d = self.chart.dim();
        ((i * d + j) * d + k) * d + l
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> &CoeffFn {
        &self.tensor[self.pos(i, j, k, l)]
    }

    pub fn is_zero(&self) -> bool {
        self.tensor.iter().all(CoeffFn::is_zero)
    }

    /// `R = ¼ R_{ijkl} y^i y^j dx^k ∧ dx^l`.
    pub fn form(&self, caps: Caps) -> WeylSection {
        let dim = self.chart.dim();
        let quarter = GaussRat::ratio(1, 4);
        let mut out = WeylSection::zero(self.chart, caps);
        for i in 0..dim {
            for j in 0..dim {
                let y = YMono::var(dim, i).mul(&YMono::var(dim, j));
                for k in 0..dim {
                    for l in 0..dim {
                        let r = self.get(i, j, k, l);
                        if r.is_zero() || k == l {
                            continue;
                        }
                        let (lo, hi, sign) = if k < l { (k, l, 1) } else { (l, k, -1) };
                        out.add_term_scaled(TermKey::new(0, y.clone(), 1 << lo | 1 << hi), r, &quarter.scale_int(sign));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Debug for CurvatureData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dim = self.chart.dim();
        let mut m = f.debug_map();
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        let r = self.get(i, j, k, l);
                        if !r.is_zero() {
                            m.entry(&[i, j, k, l], r);
                        }
                    }
                }
            }
        }
        m.finish()
    }
}

/// `R^m_{jkl} = ∂_k Γ^m_{jl} − ∂_l Γ^m_{jk} + Γ^m_{ks} Γ^s_{jl} − Γ^m_{ls} Γ^s_{jk}`,
/// lowered with `ω_{im}`.
pub fn curvature(c: &ConnectionData, s: &SymplecticData) -> CurvatureData {
    let chart = c.chart;
    let dim = chart.dim();
    let zero = CoeffFn::zero(chart);
    let mut upper = vec![zero.clone(); dim.pow(4)];
    let idx = |a: usize, b: usize, k: usize, l: usize| ((a * dim + b) * dim + k) * dim + l;
    for m in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    if k == l {
                        continue;
                    }
                    let mut acc = c.raised(m, j, l).diff(k) - c.raised(m, j, k).diff(l);
                    for sidx in 0..dim {
                        let a = c.raised(m, k, sidx);
                        let b = c.raised(sidx, j, l);
                        if !a.is_zero() && !b.is_zero() {
                            acc.add_assign_ref(&(a * b));
                        }
                        let a = c.raised(m, l, sidx);
                        let b = c.raised(sidx, j, k);
                        if !a.is_zero() && !b.is_zero() {
                            acc.add_assign_ref(&-(a * b));
                        }
                    }
                    upper[idx(m, j, k, l)] = acc;
                }
            }
        }
    }
    let mut tensor = vec![zero; dim.pow(4)];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let mut acc = CoeffFn::zero(chart);
                    for m in 0..dim {
                        let w = s.lower(i, m);
                        let r = &upper[idx(m, j, k, l)];
                        if !w.is_zero() && !r.is_zero() {
                            acc.add_assign_ref(&(w * r));
                        }
                    }
                    tensor[idx(i, j, k, l)] = acc;
                }
            }
        }
    }
    CurvatureData { chart, tensor }
}

/// `dΓ + (1/ℏ) Γ∘Γ` evaluated in the Weyl algebra.
pub fn curvature_form_from_connection_form(c: &ConnectionData, s: &SymplecticData, caps: Caps) -> Result<WeylSection, GeometryError> {
    let gamma = c.form(caps.raised());
    let square = hdiv(&moyal_capped(&gamma, &gamma, s, caps.raised()))?;
    Ok(c.form(caps).d().add(&square.with_caps(caps)))
}
